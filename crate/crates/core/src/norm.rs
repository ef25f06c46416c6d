//! Cultural-norm data model.
//!
//! A cultural norm links a painted [`Element`] to a symbol through one of six
//! rhetorical techniques, explains it with a custom and tags it with an
//! emotion polarity. Raw records read from files are checked by
//! [`validate_norm`] / [`NormValidator`] and [`ElementIndex::from_records`],
//! which collect every violation instead of stopping at the first.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::FieldHasher;
use crate::ids::{AnnotationId, ElementId, NormId, PaintingId};

/// Technique that turns an element into a symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhetoricType {
    Iconic,
    Homophony,
    HomophonicPun,
    Synonym,
    Homograph,
    Satire,
}

impl RhetoricType {
    pub const ALL: [RhetoricType; 6] = [
        RhetoricType::Iconic,
        RhetoricType::Homophony,
        RhetoricType::HomophonicPun,
        RhetoricType::Synonym,
        RhetoricType::Homograph,
        RhetoricType::Satire,
    ];

    /// Lowercase wire token.
    pub fn token(self) -> &'static str {
        match self {
            RhetoricType::Iconic => "iconic",
            RhetoricType::Homophony => "homophony",
            RhetoricType::HomophonicPun => "homophonic_pun",
            RhetoricType::Synonym => "synonym",
            RhetoricType::Homograph => "homograph",
            RhetoricType::Satire => "satire",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RhetoricType::Iconic => "Iconic",
            RhetoricType::Homophony => "Homophony",
            RhetoricType::HomophonicPun => "Homophonic pun",
            RhetoricType::Synonym => "Synonym",
            RhetoricType::Homograph => "Homograph",
            RhetoricType::Satire => "Satire",
        }
    }

    /// One-line English definition used in prompts.
    pub fn definition(self) -> &'static str {
        match self {
            RhetoricType::Iconic => "the visible form of the element is tied directly to its meaning.",
            RhetoricType::Homophony => {
                "two words are pronounced the same but differ in meaning, origin, or spelling."
            }
            RhetoricType::HomophonicPun => {
                "a pun that plays on words which sound alike but mean different things."
            }
            RhetoricType::Synonym => "the element's name means the same, or nearly the same, as another word.",
            RhetoricType::Homograph => "a word written the same way as another word but with a different meaning.",
            RhetoricType::Satire => "a word carrying a mocking sense, usually pointing at social ills.",
        }
    }
}

impl fmt::Display for RhetoricType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Case, space, hyphen and underscore insensitive key used for lenient parsing.
fn fold_token(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for RhetoricType {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = fold_token(s);
        RhetoricType::ALL
            .into_iter()
            .find(|r| fold_token(r.token()) == key)
            .ok_or_else(|| UnknownToken(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionPolarity {
    Positive,
    Negative,
    Neutral,
}

impl EmotionPolarity {
    pub const ALL: [EmotionPolarity; 3] =
        [EmotionPolarity::Positive, EmotionPolarity::Negative, EmotionPolarity::Neutral];

    pub fn token(self) -> &'static str {
        match self {
            EmotionPolarity::Positive => "positive",
            EmotionPolarity::Negative => "negative",
            EmotionPolarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionPolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for EmotionPolarity {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = fold_token(s);
        EmotionPolarity::ALL
            .into_iter()
            .find(|e| e.token() == key)
            .ok_or_else(|| UnknownToken(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown token {0:?}")]
pub struct UnknownToken(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementCategory {
    Animal,
    Plant,
    Fruit,
    Other,
    Composite,
}

impl ElementCategory {
    pub const ALL: [ElementCategory; 5] = [
        ElementCategory::Animal,
        ElementCategory::Plant,
        ElementCategory::Fruit,
        ElementCategory::Other,
        ElementCategory::Composite,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ElementCategory::Animal => "animal",
            ElementCategory::Plant => "plant",
            ElementCategory::Fruit => "fruit",
            ElementCategory::Other => "other",
            ElementCategory::Composite => "composite",
        }
    }

    pub fn is_composite(self) -> bool {
        self == ElementCategory::Composite
    }
}

impl fmt::Display for ElementCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ElementCategory {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = fold_token(s);
        ElementCategory::ALL
            .into_iter()
            .find(|c| c.token() == key)
            .ok_or_else(|| UnknownToken(s.to_string()))
    }
}

/// Element counts per category of the full reference corpus the fixture
/// mirrors. Kept as metadata; the shipped fixture is much smaller.
pub const REFERENCE_CORPUS_CENSUS: [(ElementCategory, usize); 5] = [
    (ElementCategory::Plant, 94),
    (ElementCategory::Animal, 86),
    (ElementCategory::Fruit, 16),
    (ElementCategory::Other, 13),
    (ElementCategory::Composite, 17),
];

/// Total element count of the reference corpus.
pub const REFERENCE_CORPUS_ELEMENTS: usize = 226;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub name_zh: String,
    pub name_en: String,
    /// Tone-marked pinyin, display only.
    pub romanization: String,
    pub category: ElementCategory,
    /// Atomic constituents, in declaration order. Empty for atomic elements.
    #[serde(default)]
    pub constituents: Vec<ElementId>,
}

impl Element {
    pub fn is_composite(&self) -> bool {
        self.category.is_composite()
    }
}

/// Unvalidated element row as read from the elements file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementRecord {
    pub id: String,
    pub name_zh: String,
    pub name_en: String,
    pub romanization: String,
    pub category: String,
    pub constituents: Vec<String>,
}

impl From<&Element> for ElementRecord {
    fn from(e: &Element) -> Self {
        ElementRecord {
            id: e.id.as_str().into(),
            name_zh: e.name_zh.clone(),
            name_en: e.name_en.clone(),
            romanization: e.romanization.clone(),
            category: e.category.token().into(),
            constituents: e.constituents.iter().map(|c| c.as_str().into()).collect(),
        }
    }
}

/// Kind of rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DuplicateId,
    InvalidCategory,
    CompositeArity,
    DanglingConstituent,
    UnknownElement,
    InvalidRhetoric,
    InvalidEmotion,
    EmptySymbol,
    EmptyCustom,
    DuplicateTriple,
    UnknownPainting,
    PaintingMismatch,
    OutOfBounds,
    InvalidImageSize,
    DuplicateAnnotation,
    ManifestMismatch,
    /// Warning only: a detected annotation has fewer than two verifiers.
    LowVerifierCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Id of the offending record.
    pub entity: String,
    pub rule: Rule,
    /// Field the rule applies to.
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(entity: impl Into<String>, rule: Rule, field: &str, message: impl Into<String>) -> Self {
        Violation { entity: entity.into(), rule, field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{:?}] {}: {}", self.entity, self.rule, self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NormError {
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("composite {composite} has dangling constituent {constituent}")]
    DanglingConstituent { composite: ElementId, constituent: ElementId },
}

/// Validated element taxonomy keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElementIndex {
    elements: BTreeMap<ElementId, Element>,
}

impl ElementIndex {
    /// Validates raw rows and returns the index of every row that passed,
    /// together with all violations found.
    pub fn from_records(records: &[ElementRecord]) -> (ElementIndex, Vec<Violation>) {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        let mut parsed: Vec<Element> = Vec::new();

        for rec in records {
            if !seen.insert(rec.id.as_str()) {
                violations.push(Violation::new(&rec.id, Rule::DuplicateId, "id", "element id repeated"));
                continue;
            }
            let category = match rec.category.parse::<ElementCategory>() {
                Ok(c) => c,
                Err(_) => {
                    violations.push(Violation::new(
                        &rec.id,
                        Rule::InvalidCategory,
                        "category",
                        format!("{:?} is not one of animal, plant, fruit, other, composite", rec.category),
                    ));
                    continue;
                }
            };
            parsed.push(Element {
                id: ElementId::new(rec.id.as_str()),
                name_zh: rec.name_zh.clone(),
                name_en: rec.name_en.clone(),
                romanization: rec.romanization.clone(),
                category,
                constituents: rec.constituents.iter().map(|c| ElementId::new(c.as_str())).collect(),
            });
        }

        let categories: BTreeMap<ElementId, ElementCategory> =
            parsed.iter().map(|e| (e.id.clone(), e.category)).collect();
        let mut elements = BTreeMap::new();
        for element in parsed {
            let found = Self::check_element(&element, |id| categories.get(id).copied());
            if found.is_empty() {
                elements.insert(element.id.clone(), element);
            } else {
                violations.extend(found);
            }
        }
        (ElementIndex { elements }, violations)
    }

    /// Builds an index from already-typed elements, failing with every violation.
    pub fn from_elements(items: impl IntoIterator<Item = Element>) -> Result<ElementIndex, Vec<Violation>> {
        let records: Vec<ElementRecord> = items.into_iter().map(|e| ElementRecord::from(&e)).collect();
        let (index, violations) = Self::from_records(&records);
        if violations.is_empty() {
            Ok(index)
        } else {
            Err(violations)
        }
    }

    fn check_element(
        element: &Element,
        lookup: impl Fn(&ElementId) -> Option<ElementCategory>,
    ) -> Vec<Violation> {
        let mut out = Vec::new();
        let id = element.id.as_str();
        let n = element.constituents.len();
        if element.is_composite() && n < 2 {
            out.push(Violation::new(
                id,
                Rule::CompositeArity,
                "constituents",
                format!("composite element needs at least 2 constituents, found {n}"),
            ));
        }
        if !element.is_composite() && n > 0 {
            out.push(Violation::new(
                id,
                Rule::CompositeArity,
                "constituents",
                "atomic element must not list constituents",
            ));
        }
        let distinct: BTreeSet<&ElementId> = element.constituents.iter().collect();
        if distinct.len() != n {
            out.push(Violation::new(id, Rule::CompositeArity, "constituents", "constituent listed twice"));
        }
        if element.is_composite() {
            for c in &element.constituents {
                match lookup(c) {
                    None => out.push(Violation::new(
                        id,
                        Rule::DanglingConstituent,
                        "constituents",
                        format!("constituent {c} does not exist"),
                    )),
                    Some(ElementCategory::Composite) => out.push(Violation::new(
                        id,
                        Rule::DanglingConstituent,
                        "constituents",
                        format!("constituent {c} is itself composite"),
                    )),
                    Some(_) => {}
                }
            }
        }
        out
    }

    pub fn get(&self, id: &ElementId) -> Option<&Element> {
        self.elements.get(id)
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.elements.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Elements in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    /// Composite elements that list `id` as a constituent, in id order.
    pub fn composites_containing<'a>(&'a self, id: &'a ElementId) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements.values().filter(move |e| e.constituents.contains(id))
    }
}

/// Atomic constituents of a composite, in declaration order; empty for atomics.
pub fn resolve_constituents<'a>(element: &Element, index: &'a ElementIndex) -> Result<Vec<&'a Element>, NormError> {
    if !element.is_composite() {
        return Ok(Vec::new());
    }
    element
        .constituents
        .iter()
        .map(|c| match index.get(c) {
            Some(e) if !e.is_composite() => Ok(e),
            _ => Err(NormError::DanglingConstituent { composite: element.id.clone(), constituent: c.clone() }),
        })
        .collect()
}

/// Number of elements per category. Every category is present, zeros included.
pub fn category_census(index: &ElementIndex) -> BTreeMap<ElementCategory, usize> {
    let mut census: BTreeMap<ElementCategory, usize> = ElementCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for e in index.iter() {
        *census.entry(e.category).or_default() += 1;
    }
    census
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CulturalNorm {
    pub id: NormId,
    pub element: ElementId,
    pub rhetoric: RhetoricType,
    pub symbol_zh: String,
    pub symbol_en: String,
    pub custom_zh: String,
    pub custom_en: String,
    pub emotion: EmotionPolarity,
}

impl CulturalNorm {
    /// Uniqueness key within a dataset.
    pub fn key(&self) -> (ElementId, RhetoricType, String) {
        (self.element.clone(), self.rhetoric, self.symbol_en.clone())
    }
}

/// Unvalidated norm row with rhetoric and emotion still as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormRecord {
    pub id: String,
    pub element_id: String,
    pub rhetoric: String,
    pub symbol_zh: String,
    pub symbol_en: String,
    pub custom_zh: String,
    pub custom_en: String,
    pub emotion: String,
}

impl From<&CulturalNorm> for NormRecord {
    fn from(n: &CulturalNorm) -> Self {
        NormRecord {
            id: n.id.as_str().into(),
            element_id: n.element.as_str().into(),
            rhetoric: n.rhetoric.token().into(),
            symbol_zh: n.symbol_zh.clone(),
            symbol_en: n.symbol_en.clone(),
            custom_zh: n.custom_zh.clone(),
            custom_en: n.custom_en.clone(),
            emotion: n.emotion.token().into(),
        }
    }
}

/// Checks one norm record against the element index. Duplicate detection
/// needs the other norms of the dataset, see [`NormValidator`].
pub fn validate_norm(record: &NormRecord, elements: &ElementIndex) -> Result<CulturalNorm, Vec<Violation>> {
    let mut violations = Vec::new();
    let id = record.id.as_str();
    let element = ElementId::new(record.element_id.as_str());
    if !elements.contains(&element) {
        violations.push(Violation::new(
            id,
            Rule::UnknownElement,
            "element_id",
            format!("element {element} is not in the taxonomy"),
        ));
    }
    let rhetoric = record.rhetoric.parse::<RhetoricType>().map_err(|_| {
        violations.push(Violation::new(
            id,
            Rule::InvalidRhetoric,
            "rhetoric",
            format!("{:?} is not one of the six rhetorical techniques", record.rhetoric),
        ))
    });
    let emotion = record.emotion.parse::<EmotionPolarity>().map_err(|_| {
        violations.push(Violation::new(
            id,
            Rule::InvalidEmotion,
            "emotion",
            format!("{:?} is not positive, negative or neutral", record.emotion),
        ))
    });
    if record.symbol_en.trim().is_empty() {
        violations.push(Violation::new(id, Rule::EmptySymbol, "symbol_en", "English symbol is empty"));
    }
    if record.custom_en.trim().is_empty() {
        violations.push(Violation::new(id, Rule::EmptyCustom, "custom_en", "English custom is empty"));
    }
    match (rhetoric, emotion) {
        (Ok(rhetoric), Ok(emotion)) if violations.is_empty() => Ok(CulturalNorm {
            id: NormId::new(id),
            element,
            rhetoric,
            symbol_zh: record.symbol_zh.clone(),
            symbol_en: record.symbol_en.clone(),
            custom_zh: record.custom_zh.clone(),
            custom_en: record.custom_en.clone(),
            emotion,
        }),
        _ => Err(violations),
    }
}

/// Validates a stream of norms, additionally rejecting repeated ids and
/// repeated (element, rhetoric, symbol_en) triples.
pub struct NormValidator<'a> {
    elements: &'a ElementIndex,
    ids: BTreeSet<String>,
    keys: BTreeMap<(ElementId, RhetoricType, String), NormId>,
}

impl<'a> NormValidator<'a> {
    pub fn new(elements: &'a ElementIndex) -> Self {
        NormValidator { elements, ids: BTreeSet::new(), keys: BTreeMap::new() }
    }

    pub fn check(&mut self, record: &NormRecord) -> Result<CulturalNorm, Vec<Violation>> {
        if !self.ids.insert(record.id.clone()) {
            return Err(alloc::vec![Violation::new(&record.id, Rule::DuplicateId, "id", "norm id repeated")]);
        }
        let norm = validate_norm(record, self.elements)?;
        if let Some(first) = self.keys.get(&norm.key()) {
            return Err(alloc::vec![Violation::new(
                &record.id,
                Rule::DuplicateTriple,
                "symbol_en",
                format!("same element, rhetoric and symbol as norm {first}"),
            )]);
        }
        self.keys.insert(norm.key(), norm.id.clone());
        Ok(norm)
    }
}

/// Pixel rectangle, origin at the image's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// True when the box has positive extent and lies inside `size`.
    pub fn fits_within(&self, size: ImageSize) -> bool {
        self.w > 0
            && self.h > 0
            && self.x >= 0
            && self.y >= 0
            && self.x.checked_add(self.w).is_some_and(|r| r <= i64::from(size.width))
            && self.y.checked_add(self.h).is_some_and(|b| b <= i64::from(size.height))
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Detected,
    Manual,
}

impl Provenance {
    pub fn token(self) -> &'static str {
        match self {
            Provenance::Detected => "detected",
            Provenance::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: AnnotationId,
    pub painting_id: PaintingId,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub element: ElementId,
    pub provenance: Provenance,
    #[serde(default)]
    pub verifier_count: u32,
}

impl Annotation {
    /// Builds an annotation whose id is derived from its content.
    pub fn new(painting_id: PaintingId, bbox: BoundingBox, element: ElementId, provenance: Provenance) -> Self {
        let id = Self::derive_id(&painting_id, &bbox, &element, provenance);
        Annotation { id, painting_id, bbox, element, provenance, verifier_count: 0 }
    }

    pub fn derive_id(
        painting_id: &PaintingId,
        bbox: &BoundingBox,
        element: &ElementId,
        provenance: Provenance,
    ) -> AnnotationId {
        let hex = FieldHasher::new()
            .field(painting_id.as_str())
            .field(bbox.x.to_le_bytes())
            .field(bbox.y.to_le_bytes())
            .field(bbox.w.to_le_bytes())
            .field(bbox.h.to_le_bytes())
            .field(element.as_str())
            .field(provenance.token())
            .finish_hex();
        AnnotationId::new(format!("ann-{}", &hex[..16]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub width_cm: f64,
    pub height_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Painting {
    pub id: PaintingId,
    pub title_zh: String,
    pub title_en: String,
    pub artist: String,
    pub dynasty: String,
    pub medium: String,
    pub dimensions: Dimensions,
    pub location: String,
    /// Image path relative to the dataset root.
    pub image_ref: String,
    pub image_size: ImageSize,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl Painting {
    /// Distinct elements annotated on this painting, in id order.
    pub fn element_set(&self) -> BTreeSet<&ElementId> {
        self.annotations.iter().map(|a| &a.element).collect()
    }
}
