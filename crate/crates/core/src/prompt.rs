//! Deterministic prompt assembly.
//!
//! Every builder is a pure function of its arguments and returns a
//! [`PromptEnvelope`] with a system and a user message rendered from the
//! embedded templates. Placeholders map one-to-one onto the prompt inputs:
//!
//! | input                      | placeholder        |
//! |----------------------------|--------------------|
//! | user background            | `background`       |
//! | cultural norm              | `norm`             |
//! | preset question            | (the preset file)  |
//! | free question              | `question`         |
//! | image task                 | `task`             |
//! | facet definitions          | `definitions`      |
//! | conditions                 | `conditions`       |
//! | questions                  | `questions`        |
//! | output format              | `output_format`    |

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::FieldHasher;
use crate::norm::{CulturalNorm, Element, EmotionPolarity, RhetoricType, UnknownToken};
use crate::response::TargetNorm;
use crate::template::{TemplateError, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown preset question {0}, expected 1 to 3")]
    UnknownPreset(u8),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("image task is empty")]
    EmptyTask,
    #[error("no conditions selected")]
    EmptyConditions,
    #[error("no questions selected")]
    EmptyQuestions,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct BackgroundError {
    pub field: &'static str,
    pub message: String,
}

/// Who the user is: target culture and familiarity with the source culture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBackground {
    pub country: String,
    pub age: u32,
    pub education: String,
    /// Familiarity with Chinese culture, 1 to 5.
    pub fwc: u8,
    /// Familiarity with traditional Chinese painting, 1 to 5.
    pub fwtcp: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl UserBackground {
    pub fn validate(&self) -> Result<(), BackgroundError> {
        if self.country.trim().is_empty() {
            return Err(BackgroundError { field: "country", message: "country is required".into() });
        }
        for (field, value) in [("fwc", self.fwc), ("fwtcp", self.fwtcp)] {
            if !(1..=5).contains(&value) {
                return Err(BackgroundError { field, message: format!("must be between 1 and 5, got {value}") });
            }
        }
        Ok(())
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Country: {}", self.country);
        let _ = writeln!(s, "Age: {}", self.age);
        let _ = writeln!(s, "Education: {}", self.education);
        let _ = writeln!(s, "Familiarity with Chinese culture (1-5): {}", self.fwc);
        let _ = write!(s, "Familiarity with traditional Chinese painting (1-5): {}", self.fwtcp);
        if let Some(note) = self.note.as_deref().filter(|n| !n.trim().is_empty()) {
            let _ = write!(s, "\nNote: {note}");
        }
        s
    }
}

/// One of the five parts of a cultural norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Element,
    Rhetoric,
    Symbol,
    Custom,
    Emotion,
}

impl Facet {
    pub const ALL: [Facet; 5] = [Facet::Element, Facet::Rhetoric, Facet::Symbol, Facet::Custom, Facet::Emotion];

    pub fn key(self) -> &'static str {
        match self {
            Facet::Element => "element",
            Facet::Rhetoric => "rhetoric",
            Facet::Symbol => "symbol",
            Facet::Custom => "custom",
            Facet::Emotion => "emotion",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Facet::Element => "Element",
            Facet::Rhetoric => "Rhetoric",
            Facet::Symbol => "Symbol",
            Facet::Custom => "Custom",
            Facet::Emotion => "Emotion",
        }
    }

    fn definition(self) -> &'static str {
        match self {
            Facet::Element => "a visual entity depicted in a painting, either atomic or an AND-combination of atomic elements.",
            Facet::Rhetoric => "the technique that links an element to its symbol. The techniques are:",
            Facet::Symbol => "the abstract meaning an element stands for.",
            Facet::Custom => "the practice or belief that explains why the element carries the symbol.",
            Facet::Emotion => "the sentiment the norm evokes in its culture: positive, negative, or neutral.",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Facet {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Facet::ALL
            .into_iter()
            .find(|f| f.key().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownToken(s.to_string()))
    }
}

/// Set of facets, iterated in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FacetSet(u8);

impl FacetSet {
    pub const EMPTY: FacetSet = FacetSet(0);
    pub const FULL: FacetSet = FacetSet(0b1_1111);

    /// All 31 non-empty subsets.
    pub fn non_empty_subsets() -> impl Iterator<Item = FacetSet> {
        (1u8..32).map(FacetSet)
    }

    pub fn from_bits(bits: u8) -> FacetSet {
        FacetSet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, f: Facet) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn insert(&mut self, f: Facet) {
        self.0 |= f.bit();
    }

    pub fn union(self, other: FacetSet) -> FacetSet {
        FacetSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Facet> {
        Facet::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    fn join(self) -> String {
        self.iter().map(Facet::key).collect::<Vec<_>>().join(", ")
    }
}

impl FromIterator<Facet> for FacetSet {
    fn from_iter<I: IntoIterator<Item = Facet>>(iter: I) -> Self {
        let mut set = FacetSet::EMPTY;
        for f in iter {
            set.insert(f);
        }
        set
    }
}

impl Serialize for FacetSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for FacetSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let facets = Vec::<Facet>::deserialize(deserializer)?;
        Ok(facets.into_iter().collect())
    }
}

/// A cultural norm together with the element it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceNorm {
    pub norm: CulturalNorm,
    pub element: Element,
}

impl SourceNorm {
    /// Source-culture value of one facet, as embedded in prompts.
    pub fn facet_value(&self, facet: Facet) -> String {
        fn bilingual(en: &str, zh: &str) -> String {
            if zh.is_empty() {
                en.to_owned()
            } else {
                format!("{en} ({zh})")
            }
        }
        match facet {
            Facet::Element => {
                let e = &self.element;
                match (e.name_zh.is_empty(), e.romanization.is_empty()) {
                    (true, _) => e.name_en.clone(),
                    (false, true) => format!("{} ({})", e.name_en, e.name_zh),
                    (false, false) => format!("{} ({}, {})", e.name_en, e.name_zh, e.romanization),
                }
            }
            Facet::Rhetoric => self.norm.rhetoric.label().to_owned(),
            Facet::Symbol => bilingual(&self.norm.symbol_en, &self.norm.symbol_zh),
            Facet::Custom => bilingual(&self.norm.custom_en, &self.norm.custom_zh),
            Facet::Emotion => self.norm.emotion.token().to_owned(),
        }
    }

    fn render(&self, facets: FacetSet) -> String {
        facets
            .iter()
            .map(|f| format!("{}: {}", f.label(), self.facet_value(f)))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub background: UserBackground,
    pub source: SourceNorm,
    pub conditions: FacetSet,
    pub questions: FacetSet,
}

impl TranslationRequest {
    pub fn new(
        background: UserBackground,
        source: SourceNorm,
        conditions: FacetSet,
        questions: FacetSet,
    ) -> Result<Self, PromptError> {
        let req = TranslationRequest { background, source, conditions, questions };
        req.check()?;
        Ok(req)
    }

    fn check(&self) -> Result<(), PromptError> {
        if self.conditions.is_empty() {
            return Err(PromptError::EmptyConditions);
        }
        if self.questions.is_empty() {
            return Err(PromptError::EmptyQuestions);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn token(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub template_id: String,
    pub messages: Vec<Message>,
    /// SHA-256 over the template id and every rendered message.
    pub content_hash: String,
}

impl PromptEnvelope {
    pub fn new(template_id: &str, messages: Vec<Message>) -> Self {
        let mut h = FieldHasher::new().field(template_id);
        for m in &messages {
            h = h.field(m.role.token()).field(&m.text);
        }
        PromptEnvelope { template_id: template_id.to_owned(), messages, content_hash: h.finish_hex() }
    }

    pub fn system_text(&self) -> Option<&str> {
        self.messages.iter().find(|m| m.role == Role::System).map(|m| m.text.as_str())
    }

    pub fn user_text(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.text.as_str())
    }

    /// All messages joined, for single-prompt endpoints such as image generation.
    pub fn flattened(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

/// A recommended preset (1 to 3) or a free question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaQuestion {
    Preset(u8),
    Free(String),
}

pub const PRESET_COUNT: u8 = 3;

pub fn preset_text(preset: u8) -> Result<&'static str, PromptError> {
    let id = match preset {
        1 => TemplateId::QaPreset1,
        2 => TemplateId::QaPreset2,
        3 => TemplateId::QaPreset3,
        other => return Err(PromptError::UnknownPreset(other)),
    };
    Ok(id.text())
}

fn exploration_system(bg: &UserBackground, source: &SourceNorm) -> Result<String, PromptError> {
    let background = bg.render();
    let norm = source.render(FacetSet::FULL);
    Ok(TemplateId::ExplorationSystem.render(&[("background", &background), ("norm", &norm)])?)
}

fn envelope(template_id: &str, system: String, user: String) -> PromptEnvelope {
    PromptEnvelope::new(
        template_id,
        alloc::vec![Message { role: Role::System, text: system }, Message { role: Role::User, text: user }],
    )
}

/// Question answering about a source norm.
pub fn build_qa_prompt(
    bg: &UserBackground,
    source: &SourceNorm,
    question: &QaQuestion,
) -> Result<PromptEnvelope, PromptError> {
    let (template_id, user) = match question {
        QaQuestion::Preset(n) => {
            let text = preset_text(*n)?;
            (format!("qa_preset_{n}"), text.to_owned())
        }
        QaQuestion::Free(q) => {
            if q.trim().is_empty() {
                return Err(PromptError::EmptyQuestion);
            }
            ("qa_free".to_owned(), TemplateId::QaFree.render(&[("question", q)])?)
        }
    };
    Ok(envelope(&template_id, exploration_system(bg, source)?, user))
}

/// Request for an image illustrating the norm for the user's culture.
pub fn build_image_prompt(bg: &UserBackground, source: &SourceNorm, task: &str) -> Result<PromptEnvelope, PromptError> {
    if task.trim().is_empty() {
        return Err(PromptError::EmptyTask);
    }
    let user = TemplateId::Image.render(&[("target_culture", &bg.country), ("task", task)])?;
    Ok(envelope(TemplateId::Image.name(), exploration_system(bg, source)?, user))
}

fn definitions(facets: FacetSet) -> String {
    let mut s = String::new();
    for f in facets.iter() {
        if !s.is_empty() {
            s.push('\n');
        }
        let _ = write!(s, "{}: {}", f.label(), f.definition());
        if f == Facet::Rhetoric {
            for r in RhetoricType::ALL {
                let _ = write!(s, "\n  - {}: {}", r.label(), r.definition());
            }
        }
    }
    s
}

fn token_list<T: Copy>(items: &[T], token: fn(T) -> &'static str) -> String {
    items.iter().map(|t| token(*t)).chain(["unknown"]).collect::<Vec<_>>().join(", ")
}

/// Output-format instructions for a translation asking for `questions`.
pub fn translation_output_format(questions: FacetSet) -> Result<String, PromptError> {
    Ok(TemplateId::FormatTranslation.render(&[
        ("facet_keys", &questions.join()),
        ("rhetoric_tokens", &token_list(&RhetoricType::ALL, RhetoricType::token)),
        ("emotion_tokens", &token_list(&EmotionPolarity::ALL, EmotionPolarity::token)),
    ])?)
}

/// Culture translation of a source norm, conditioned on the facets in
/// `req.conditions` and asking for the facets in `req.questions`.
pub fn build_translation_prompt(req: &TranslationRequest) -> Result<PromptEnvelope, PromptError> {
    req.check()?;
    let background = req.background.render();
    let system = TemplateId::TranslationSystem.render(&[("background", &background)])?;
    let norm = req.source.render(req.conditions);
    let defs = definitions(req.conditions.union(req.questions));
    let format = translation_output_format(req.questions)?;
    let user = TemplateId::Translation.render(&[
        ("norm", &norm),
        ("definitions", &defs),
        ("conditions", &req.conditions.join()),
        ("questions", &req.questions.join()),
        ("target_culture", &req.background.country),
        ("output_format", &format),
    ])?;
    Ok(envelope(TemplateId::Translation.name(), system, user))
}

fn render_target(result: &TargetNorm) -> String {
    let mut s = String::new();
    if result.facet_values.is_empty() {
        s.push_str("(the translation returned no facet values)");
    }
    for (facet, v) in &result.facet_values {
        if !s.is_empty() {
            s.push('\n');
        }
        let _ = write!(s, "{}: {} ({})", facet.label(), v.native, v.gloss_en);
    }
    let _ = write!(s, "\nExplanation: {}", result.explanation);
    let _ = write!(s, "\nRhetoric: {}", result.rhetoric);
    let _ = write!(s, "\nEmotion: {}", result.emotion);
    s
}

/// Asks the model to judge whether a translated norm is culturally appropriate.
pub fn build_verification_prompt(
    bg: &UserBackground,
    source: &SourceNorm,
    request: &TranslationRequest,
    result: &TargetNorm,
) -> Result<PromptEnvelope, PromptError> {
    let background = bg.render();
    let system = TemplateId::TranslationSystem.render(&[("background", &background)])?;
    let user = TemplateId::Verification.render(&[
        ("target_culture", &bg.country),
        ("norm", &source.render(FacetSet::FULL)),
        ("conditions", &request.conditions.join()),
        ("questions", &request.questions.join()),
        ("result", &render_target(result)),
        ("verdict_format", TemplateId::FormatVerdict.text()),
    ])?;
    Ok(envelope(TemplateId::Verification.name(), system, user))
}

/// Asks for analogues of one facet of the norm in further cultures.
pub fn build_inference_prompt(
    bg: &UserBackground,
    source: &SourceNorm,
    anchor: Facet,
) -> Result<PromptEnvelope, PromptError> {
    let background = bg.render();
    let system = TemplateId::TranslationSystem.render(&[("background", &background)])?;
    let user = TemplateId::Inference.render(&[
        ("anchor", anchor.key()),
        ("target_culture", &bg.country),
        ("norm", &source.render(FacetSet::FULL)),
        ("anchor_value", &source.facet_value(anchor)),
        ("inference_format", TemplateId::FormatInference.text()),
    ])?;
    Ok(envelope(TemplateId::Inference.name(), system, user))
}
