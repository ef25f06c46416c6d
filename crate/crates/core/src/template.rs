//! Embedded prompt templates with `{{placeholder}}` substitution.
//!
//! Templates are plain text files under `templates/`, compiled into the
//! crate. Rendering is single pass: substituted values are never scanned
//! for placeholders. A placeholder without a value, a value without a
//! placeholder, or an unterminated `{{` are all errors.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("template {template}: value {name} has no placeholder")]
    UnusedValue { template: &'static str, name: String },
    #[error("template {template}: unterminated placeholder at byte {offset}")]
    Unterminated { template: &'static str, offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    ExplorationSystem,
    QaPreset1,
    QaPreset2,
    QaPreset3,
    QaFree,
    Image,
    TranslationSystem,
    Translation,
    Verification,
    Inference,
    FormatTranslation,
    FormatVerdict,
    FormatInference,
}

impl TemplateId {
    pub const ALL: [TemplateId; 13] = [
        TemplateId::ExplorationSystem,
        TemplateId::QaPreset1,
        TemplateId::QaPreset2,
        TemplateId::QaPreset3,
        TemplateId::QaFree,
        TemplateId::Image,
        TemplateId::TranslationSystem,
        TemplateId::Translation,
        TemplateId::Verification,
        TemplateId::Inference,
        TemplateId::FormatTranslation,
        TemplateId::FormatVerdict,
        TemplateId::FormatInference,
    ];

    /// File stem under `templates/`.
    pub fn name(self) -> &'static str {
        match self {
            TemplateId::ExplorationSystem => "exploration_system",
            TemplateId::QaPreset1 => "qa_preset_1",
            TemplateId::QaPreset2 => "qa_preset_2",
            TemplateId::QaPreset3 => "qa_preset_3",
            TemplateId::QaFree => "qa_free",
            TemplateId::Image => "image",
            TemplateId::TranslationSystem => "translation_system",
            TemplateId::Translation => "translation",
            TemplateId::Verification => "verification",
            TemplateId::Inference => "inference",
            TemplateId::FormatTranslation => "format_translation",
            TemplateId::FormatVerdict => "format_verdict",
            TemplateId::FormatInference => "format_inference",
        }
    }

    /// Raw template text, without the file's trailing newline.
    pub fn text(self) -> &'static str {
        let raw = match self {
            TemplateId::ExplorationSystem => include_str!("../templates/exploration_system.txt"),
            TemplateId::QaPreset1 => include_str!("../templates/qa_preset_1.txt"),
            TemplateId::QaPreset2 => include_str!("../templates/qa_preset_2.txt"),
            TemplateId::QaPreset3 => include_str!("../templates/qa_preset_3.txt"),
            TemplateId::QaFree => include_str!("../templates/qa_free.txt"),
            TemplateId::Image => include_str!("../templates/image.txt"),
            TemplateId::TranslationSystem => include_str!("../templates/translation_system.txt"),
            TemplateId::Translation => include_str!("../templates/translation.txt"),
            TemplateId::Verification => include_str!("../templates/verification.txt"),
            TemplateId::Inference => include_str!("../templates/inference.txt"),
            TemplateId::FormatTranslation => include_str!("../templates/format_translation.txt"),
            TemplateId::FormatVerdict => include_str!("../templates/format_verdict.txt"),
            TemplateId::FormatInference => include_str!("../templates/format_inference.txt"),
        };
        raw.strip_suffix('\n').unwrap_or(raw)
    }

    pub fn placeholders(self) -> Result<BTreeSet<&'static str>, TemplateError> {
        let mut out = BTreeSet::new();
        for piece in scan(self.name(), self.text()) {
            if let Piece::Placeholder(name) = piece? {
                out.insert(name);
            }
        }
        Ok(out)
    }

    pub fn render(self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        render(self.name(), self.text(), values)
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn scan<'a>(template: &'static str, text: &'a str) -> impl Iterator<Item = Result<Piece<'a>, TemplateError>> + 'a {
    let mut rest = text;
    let mut offset = 0;
    core::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        match rest.find("{{") {
            Some(0) => {
                let Some(end) = rest.find("}}") else {
                    rest = "";
                    return Some(Err(TemplateError::Unterminated { template, offset }));
                };
                let name = &rest[2..end];
                if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
                    rest = "";
                    return Some(Err(TemplateError::Unterminated { template, offset }));
                }
                rest = &rest[end + 2..];
                offset += end + 2;
                Some(Ok(Piece::Placeholder(name)))
            }
            Some(i) => {
                let lit = &rest[..i];
                rest = &rest[i..];
                offset += i;
                Some(Ok(Piece::Literal(lit)))
            }
            None => {
                let lit = rest;
                rest = "";
                Some(Ok(Piece::Literal(lit)))
            }
        }
    })
}

/// Substitutes `values` into `text`.
pub fn render(template: &'static str, text: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut used: Vec<bool> = alloc::vec![false; values.len()];
    for piece in scan(template, text) {
        match piece? {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => {
                let Some(i) = values.iter().position(|(k, _)| *k == name) else {
                    return Err(TemplateError::UnknownPlaceholder { template, name: name.into() });
                };
                used[i] = true;
                out.push_str(values[i].1);
            }
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(TemplateError::UnusedValue { template, name: values[i].0.into() });
    }
    Ok(out)
}
