//! Structured model replies: types, serialization and tolerant parsing.
//!
//! Models tend to wrap the requested JSON in prose or code fences. The
//! parsers scan for the first well-formed JSON object carrying the
//! expected top-level key and validate it field by field. Errors carry the
//! byte offset of the block they refer to.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::marker::PhantomData;
use core::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value, json};

use crate::norm::{EmotionPolarity, RhetoricType};
use crate::prompt::{Facet, FacetSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    /// No parseable JSON block in the reply.
    #[error("no well-formed JSON block found (at byte {offset}): {message}")]
    MalformedResponse { offset: usize, message: String },
    /// A block was found but does not match the expected shape.
    #[error("schema violation at {path} (block at byte {offset}): {message}")]
    SchemaViolation { offset: usize, path: String, message: String },
}

/// Closed token set that may also receive values outside the set.
pub trait WireToken: Copy + FromStr {
    fn wire(self) -> &'static str;
}

impl WireToken for RhetoricType {
    fn wire(self) -> &'static str {
        self.token()
    }
}

impl WireToken for EmotionPolarity {
    fn wire(self) -> &'static str {
        self.token()
    }
}

/// A known token or `Unknown` for anything outside the closed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrUnknown<T> {
    Known(T),
    #[default]
    Unknown,
}

impl<T: WireToken> OrUnknown<T> {
    pub fn parse_lenient(s: &str) -> Self {
        s.parse().map_or(OrUnknown::Unknown, OrUnknown::Known)
    }

    pub fn wire(self) -> &'static str {
        match self {
            OrUnknown::Known(t) => t.wire(),
            OrUnknown::Unknown => "unknown",
        }
    }
}

impl<T: WireToken> fmt::Display for OrUnknown<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire())
    }
}

impl<T: WireToken> Serialize for OrUnknown<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.wire())
    }
}

impl<'de, T: WireToken> Deserialize<'de> for OrUnknown<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct TokenVisitor<T>(PhantomData<T>);
        impl<T: WireToken> Visitor<'_> for TokenVisitor<T> {
            type Value = OrUnknown<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a token string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Ok(OrUnknown::parse_lenient(v))
            }
        }
        d.deserialize_str(TokenVisitor(PhantomData))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetValue {
    /// Value in the target culture's language.
    pub native: String,
    pub gloss_en: String,
}

/// A cultural norm of the target culture, as returned by a translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetNorm {
    pub facet_values: BTreeMap<Facet, FacetValue>,
    pub explanation: String,
    pub rhetoric: OrUnknown<RhetoricType>,
    pub emotion: OrUnknown<EmotionPolarity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    Appropriate,
    Inappropriate,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub judgment: Judgment,
    pub reasons: Vec<String>,
    pub recommendations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceItem {
    pub culture: String,
    pub value: String,
    pub explanation: String,
}

/// Renders norms in the translation output format.
pub fn serialize_translation(target_culture: &str, norms: &[TargetNorm]) -> String {
    let norms: Vec<Value> = norms
        .iter()
        .map(|n| {
            let facets: Map<String, Value> = n
                .facet_values
                .iter()
                .map(|(f, v)| (f.key().to_string(), json!({"native": v.native, "gloss_en": v.gloss_en})))
                .collect();
            json!({
                "facet_values": facets,
                "explanation": n.explanation,
                "rhetoric": n.rhetoric.wire(),
                "emotion": n.emotion.wire(),
            })
        })
        .collect();
    json!({"target_culture": target_culture, "norms": norms}).to_string()
}

pub fn serialize_verdict(v: &Verdict) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

pub fn serialize_inference(items: &[InferenceItem]) -> String {
    json!({"items": items}).to_string()
}

/// Finds the first well-formed JSON object that has `key` at top level.
///
/// Returns the block's byte offset and value. If well-formed objects exist
/// but none has `key`, the first one is reported as a schema violation.
pub fn extract_block(text: &str, key: &str) -> Result<(usize, Map<String, Value>), ParseError> {
    let mut first_object: Option<usize> = None;
    let mut first_error: Option<(usize, String)> = None;
    let mut resume = 0;
    for (i, _) in text.char_indices().filter(|(_, c)| *c == '{') {
        if i < resume {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                if map.contains_key(key) {
                    return Ok((i, map));
                }
                first_object.get_or_insert(i);
                resume = i + stream.byte_offset();
            }
            Some(Err(e)) => {
                first_error.get_or_insert((i, e.to_string()));
            }
            _ => {}
        }
    }
    if let Some(offset) = first_object {
        return Err(ParseError::SchemaViolation {
            offset,
            path: "$".into(),
            message: format!("missing top-level key {key:?}"),
        });
    }
    Err(match first_error {
        Some((offset, message)) => ParseError::MalformedResponse { offset, message },
        None => ParseError::MalformedResponse { offset: text.len(), message: "no JSON object in reply".into() },
    })
}

fn decode_utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    core::str::from_utf8(bytes).map_err(|e| ParseError::MalformedResponse {
        offset: e.valid_up_to(),
        message: "reply is not valid UTF-8".into(),
    })
}

/// Field accessor that produces schema violations with JSON paths.
struct Schema {
    offset: usize,
}

impl Schema {
    fn violation(&self, path: &str, message: impl Into<String>) -> ParseError {
        ParseError::SchemaViolation { offset: self.offset, path: path.into(), message: message.into() }
    }

    fn field<'v>(&self, obj: &'v Map<String, Value>, path: &str, key: &str) -> Result<&'v Value, ParseError> {
        obj.get(key).ok_or_else(|| self.violation(&format!("{path}.{key}"), "missing field"))
    }

    fn string(&self, obj: &Map<String, Value>, path: &str, key: &str) -> Result<String, ParseError> {
        match self.field(obj, path, key)? {
            Value::String(s) => Ok(s.clone()),
            other => Err(self.violation(&format!("{path}.{key}"), format!("expected string, found {}", kind(other)))),
        }
    }

    fn object<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Map<String, Value>, ParseError> {
        v.as_object().ok_or_else(|| self.violation(path, format!("expected object, found {}", kind(v))))
    }

    fn array<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Vec<Value>, ParseError> {
        v.as_array().ok_or_else(|| self.violation(path, format!("expected array, found {}", kind(v))))
    }

    fn strings(&self, obj: &Map<String, Value>, path: &str, key: &str) -> Result<Vec<String>, ParseError> {
        let p = format!("{path}.{key}");
        self.array(self.field(obj, path, key)?, &p)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(ToString::to_string)
                    .ok_or_else(|| self.violation(&format!("{p}[{i}]"), format!("expected string, found {}", kind(v))))
            })
            .collect()
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Parsed translation reply, including the culture name the model echoed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationReply {
    pub target_culture: String,
    pub norms: Vec<TargetNorm>,
}

/// Parses a translation reply. Facet values outside `questions` are dropped;
/// unknown rhetoric or emotion tokens become [`OrUnknown::Unknown`].
pub fn parse_translation_reply(text: &str, questions: FacetSet) -> Result<TranslationReply, ParseError> {
    let (offset, root) = extract_block(text, "norms")?;
    let s = Schema { offset };
    let target_culture = s.string(&root, "$", "target_culture")?;
    let norms = s.array(s.field(&root, "$", "norms")?, "$.norms")?;
    let mut out = Vec::with_capacity(norms.len());
    for (i, item) in norms.iter().enumerate() {
        let path = format!("$.norms[{i}]");
        let obj = s.object(item, &path)?;
        let fv_path = format!("{path}.facet_values");
        let fv = s.object(s.field(obj, &path, "facet_values")?, &fv_path)?;
        let mut facet_values = BTreeMap::new();
        for (key, value) in fv {
            let p = format!("{fv_path}.{key}");
            let facet: Facet = key.parse().map_err(|_| s.violation(&p, "not a facet name"))?;
            let v = s.object(value, &p)?;
            let fv = FacetValue { native: s.string(v, &p, "native")?, gloss_en: s.string(v, &p, "gloss_en")? };
            if questions.contains(facet) {
                facet_values.insert(facet, fv);
            }
        }
        out.push(TargetNorm {
            facet_values,
            explanation: s.string(obj, &path, "explanation")?,
            rhetoric: OrUnknown::parse_lenient(&s.string(obj, &path, "rhetoric")?),
            emotion: OrUnknown::parse_lenient(&s.string(obj, &path, "emotion")?),
        });
    }
    Ok(TranslationReply { target_culture, norms: out })
}

pub fn parse_translation_response(text: &str, questions: FacetSet) -> Result<Vec<TargetNorm>, ParseError> {
    parse_translation_reply(text, questions).map(|r| r.norms)
}

pub fn parse_translation_bytes(bytes: &[u8], questions: FacetSet) -> Result<Vec<TargetNorm>, ParseError> {
    parse_translation_response(decode_utf8(bytes)?, questions)
}

pub fn parse_verdict_response(text: &str) -> Result<Verdict, ParseError> {
    let (offset, root) = extract_block(text, "judgment")?;
    let s = Schema { offset };
    let token = s.string(&root, "$", "judgment")?;
    let judgment = match token.trim().to_ascii_lowercase().as_str() {
        "appropriate" => Judgment::Appropriate,
        "inappropriate" => Judgment::Inappropriate,
        "uncertain" => Judgment::Uncertain,
        _ => return Err(s.violation("$.judgment", format!("{token:?} is not appropriate, inappropriate or uncertain"))),
    };
    let reasons = s.strings(&root, "$", "reasons")?;
    let recommendations = match root.get("recommendations") {
        None | Some(Value::Null) => Vec::new(),
        Some(_) => s.strings(&root, "$", "recommendations")?,
    };
    if judgment != Judgment::Uncertain && reasons.is_empty() {
        return Err(s.violation("$.reasons", "a definite judgment needs at least one reason"));
    }
    Ok(Verdict { judgment, reasons, recommendations })
}

pub fn parse_verdict_bytes(bytes: &[u8]) -> Result<Verdict, ParseError> {
    parse_verdict_response(decode_utf8(bytes)?)
}

pub fn parse_inference_response(text: &str) -> Result<Vec<InferenceItem>, ParseError> {
    let (offset, root) = extract_block(text, "items")?;
    let s = Schema { offset };
    let items = s.array(s.field(&root, "$", "items")?, "$.items")?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let path = format!("$.items[{i}]");
            let obj = s.object(item, &path)?;
            let culture = s.string(obj, &path, "culture")?;
            if culture.trim().is_empty() {
                return Err(s.violation(&format!("{path}.culture"), "culture is empty"));
            }
            Ok(InferenceItem {
                culture,
                value: s.string(obj, &path, "value")?,
                explanation: s.string(obj, &path, "explanation")?,
            })
        })
        .collect()
}

pub fn parse_inference_bytes(bytes: &[u8]) -> Result<Vec<InferenceItem>, ParseError> {
    parse_inference_response(decode_utf8(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn q(facets: &[Facet]) -> FacetSet {
        facets.iter().copied().collect()
    }

    const JAPAN: &str = r#"Here are two Japanese elements that evoke nobility:
```json
{"target_culture": "Japan", "norms": [
 {"facet_values": {"element": {"native": "菊", "gloss_en": "chrysanthemum"}}, "explanation": "The imperial seal.", "rhetoric": "iconic", "emotion": "positive"},
 {"facet_values": {"element": {"native": "家紋", "gloss_en": "family crest"}}, "explanation": "Marks noble lineage.", "rhetoric": "Iconic", "emotion": "positive"}
]}
```
Let me know if you want more."#;

    #[test]
    fn chatty_reply_yields_two_norms() {
        let norms = parse_translation_response(JAPAN, q(&[Facet::Element])).unwrap();
        let glosses: Vec<&str> = norms.iter().map(|n| n.facet_values[&Facet::Element].gloss_en.as_str()).collect();
        assert_eq!(glosses, vec!["chrysanthemum", "family crest"]);
        assert_eq!(norms[1].rhetoric, OrUnknown::Known(RhetoricType::Iconic));
    }

    #[test]
    fn two_requested_facets() {
        let reply = r#"{"target_culture": "Indonesia", "norms": [{"facet_values": {
            "element": {"native": "bunga kembang sepatu", "gloss_en": "hibiscus"},
            "symbol": {"native": "kecantikan", "gloss_en": "beauty"}},
            "explanation": "x", "rhetoric": "metaphor", "emotion": "positive"}]}"#;
        let norms = parse_translation_response(reply, q(&[Facet::Element, Facet::Symbol])).unwrap();
        assert_eq!(norms[0].facet_values[&Facet::Symbol].native, "kecantikan");
        assert_eq!(norms[0].rhetoric, OrUnknown::Unknown);
        let only_symbol = parse_translation_response(reply, q(&[Facet::Symbol])).unwrap();
        assert_eq!(only_symbol[0].facet_values.keys().copied().collect::<Vec<_>>(), vec![Facet::Symbol]);
    }

    #[test]
    fn truncated_block_is_malformed() {
        let reply = r#"Sure: {"target_culture": "Japan", "norms": [{"facet_values": "#;
        assert!(matches!(
            parse_translation_response(reply, FacetSet::FULL),
            Err(ParseError::MalformedResponse { offset: 6, .. })
        ));
    }

    #[test]
    fn wrong_field_type_is_schema_violation() {
        let reply = r#"{"target_culture": "Japan", "norms": [{"facet_values": {}, "explanation": 3, "rhetoric": "", "emotion": ""}]}"#;
        match parse_translation_response(reply, FacetSet::FULL) {
            Err(ParseError::SchemaViolation { path, .. }) => assert_eq!(path, "$.norms[0].explanation"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn skips_unrelated_objects() {
        let reply = r#"{"note": 1} then {"items": [{"culture": "British", "value": "coronet", "explanation": "e"}]}"#;
        assert_eq!(parse_inference_response(reply).unwrap()[0].culture, "British");
        assert!(matches!(
            parse_inference_response(r#"{"note": 1}"#),
            Err(ParseError::SchemaViolation { offset: 0, .. })
        ));
    }

    #[test]
    fn verdict_tokens() {
        let ok = r#"{"judgment": "appropriate", "reasons": ["fits"], "recommendations": []}"#;
        assert_eq!(parse_verdict_response(ok).unwrap().judgment, Judgment::Appropriate);
        let maybe = r#"{"judgment": "maybe", "reasons": ["?"], "recommendations": []}"#;
        assert!(matches!(parse_verdict_response(maybe), Err(ParseError::SchemaViolation { .. })));
        let bare = r#"{"judgment": "inappropriate", "reasons": []}"#;
        assert!(matches!(parse_verdict_response(bare), Err(ParseError::SchemaViolation { .. })));
        let unsure = r#"{"judgment": "uncertain", "reasons": []}"#;
        assert_eq!(parse_verdict_response(unsure).unwrap().judgment, Judgment::Uncertain);
    }

    #[test]
    fn inference_culture_required() {
        let r = r#"{"items": [{"culture": "", "value": "v", "explanation": "e"}]}"#;
        assert!(matches!(parse_inference_response(r), Err(ParseError::SchemaViolation { .. })));
    }

    #[test]
    fn invalid_utf8_is_malformed() {
        assert_eq!(
            parse_verdict_bytes(b"ok \xff"),
            Err(ParseError::MalformedResponse { offset: 3, message: "reply is not valid UTF-8".into() })
        );
    }

    #[test]
    fn no_json_at_all() {
        assert!(matches!(
            parse_inference_response("I cannot help with that."),
            Err(ParseError::MalformedResponse { offset: 24, .. })
        ));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,.'\"{}\\[\\]\\\\\u{4e00}-\u{4e10}]{0,24}"
    }

    fn arb_target(questions: FacetSet) -> impl Strategy<Value = TargetNorm> {
        let facets: Vec<Facet> = questions.iter().collect();
        (
            proptest::collection::vec(proptest::option::of((arb_text(), arb_text())), facets.len()),
            arb_text(),
            proptest::option::of(proptest::sample::select(RhetoricType::ALL.to_vec())),
            proptest::option::of(proptest::sample::select(EmotionPolarity::ALL.to_vec())),
        )
            .prop_map(move |(values, explanation, rhetoric, emotion)| TargetNorm {
                facet_values: facets
                    .iter()
                    .zip(values)
                    .filter_map(|(f, v)| v.map(|(native, gloss_en)| (*f, FacetValue { native, gloss_en })))
                    .collect(),
                explanation,
                rhetoric: rhetoric.map_or(OrUnknown::Unknown, OrUnknown::Known),
                emotion: emotion.map_or(OrUnknown::Unknown, OrUnknown::Known),
            })
    }

    proptest! {
        #[test]
        fn translation_round_trip(
            (questions, norms) in (1u8..32).prop_flat_map(|bits| {
                let q = FacetSet::from_bits(bits);
                (Just(q), proptest::collection::vec(arb_target(q), 0..4))
            }),
            culture in arb_text(),
            prose in "[a-z .]{0,20}",
        ) {
            let text = alloc::format!("{prose}\n{}\n{prose}", serialize_translation(&culture, &norms));
            let reply = parse_translation_reply(&text, questions).unwrap();
            prop_assert_eq!(reply.norms, norms);
            prop_assert_eq!(reply.target_culture, culture);
        }

        #[test]
        fn parsers_are_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_translation_bytes(&bytes, FacetSet::FULL);
            let _ = parse_verdict_bytes(&bytes);
            let _ = parse_inference_bytes(&bytes);
        }
    }
}
