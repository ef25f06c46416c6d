//! On-disk dataset layout.
//!
//! A dataset root holds four files:
//!
//! ```text
//! elements.tsv    id, name_zh, name_en, romanization, category, constituents (';'-separated)
//! norms.tsv       id, element_id, rhetoric, symbol_zh, symbol_en, custom_zh, custom_en, emotion
//! paintings.json  array of paintings with image_size and annotations
//! manifest.json   expected counts
//! ```
//!
//! Both TSV files start with a header row. Blank lines and lines starting
//! with `#` are skipped. Fields may not contain tabs or newlines.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cultiverse_core::{Dataset, DetectionRecord, ElementRecord, LabelMap, Manifest, NormRecord, Painting, ValidationReport};

pub const ELEMENTS_FILE: &str = "elements.tsv";
pub const NORMS_FILE: &str = "norms.tsv";
pub const PAINTINGS_FILE: &str = "paintings.json";
pub const MANIFEST_FILE: &str = "manifest.json";

const ELEMENT_COLUMNS: [&str; 6] = ["id", "name_zh", "name_en", "romanization", "category", "constituents"];
const NORM_COLUMNS: [&str; 8] =
    ["id", "element_id", "rhetoric", "symbol_zh", "symbol_en", "custom_zh", "custom_en", "emotion"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("FileMissing({kind}): {}", path.display())]
    FileMissing { kind: &'static str, path: PathBuf },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("dataset rejected with {} violation(s)", .0.violations.len())]
    ValidationFailed(ValidationReport),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}: field {field} of record {record} contains a tab or newline")]
    Unencodable { file: &'static str, record: String, field: &'static str },
}

impl IngestError {
    /// Short machine name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::FileMissing { .. } => "file_missing",
            IngestError::Parse { .. } => "parse_error",
            IngestError::ValidationFailed(_) => "validation_failed",
            IngestError::Io { .. } => "io_error",
            IngestError::Unencodable { .. } => "unencodable",
        }
    }
}

/// Raw file contents before cross-validation.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub elements: Vec<ElementRecord>,
    pub norms: Vec<NormRecord>,
    pub paintings: Vec<Painting>,
    pub manifest: Manifest,
}

impl RawDataset {
    pub fn read(root: &Path) -> Result<RawDataset, IngestError> {
        // Check presence up front so a missing file is reported by kind
        // before any parse error elsewhere.
        for (kind, name) in [
            ("elements", ELEMENTS_FILE),
            ("norms", NORMS_FILE),
            ("paintings", PAINTINGS_FILE),
            ("manifest", MANIFEST_FILE),
        ] {
            let path = root.join(name);
            if !path.is_file() {
                return Err(IngestError::FileMissing { kind, path });
            }
        }
        let elements = parse_tsv(ELEMENTS_FILE, &read_text(&root.join(ELEMENTS_FILE))?, &ELEMENT_COLUMNS, |f| {
            ElementRecord {
                id: f[0].to_string(),
                name_zh: f[1].to_string(),
                name_en: f[2].to_string(),
                romanization: f[3].to_string(),
                category: f[4].to_string(),
                constituents: f[5].split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            }
        })?;
        let norms = parse_tsv(NORMS_FILE, &read_text(&root.join(NORMS_FILE))?, &NORM_COLUMNS, |f| NormRecord {
            id: f[0].to_string(),
            element_id: f[1].to_string(),
            rhetoric: f[2].to_string(),
            symbol_zh: f[3].to_string(),
            symbol_en: f[4].to_string(),
            custom_zh: f[5].to_string(),
            custom_en: f[6].to_string(),
            emotion: f[7].to_string(),
        })?;
        let paintings = parse_json(PAINTINGS_FILE, &read_text(&root.join(PAINTINGS_FILE))?)?;
        let manifest = parse_json(MANIFEST_FILE, &read_text(&root.join(MANIFEST_FILE))?)?;
        Ok(RawDataset { elements, norms, paintings, manifest })
    }

    pub fn assemble(self) -> Result<Dataset, ValidationReport> {
        Dataset::assemble(&self.elements, &self.norms, self.paintings, self.manifest)
    }
}

/// Loads and cross-validates the dataset under `root`.
pub fn load_dataset(root: &Path) -> Result<Dataset, IngestError> {
    RawDataset::read(root)?.assemble().map_err(IngestError::ValidationFailed)
}

/// Writes `ds` under `root` in the canonical layout. Loading the result
/// yields an equal dataset.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<(), IngestError> {
    let (elements, norms, paintings) = ds.to_records();
    let elements_tsv = render_tsv(ELEMENTS_FILE, &ELEMENT_COLUMNS, elements.iter().map(|e| {
        (e.id.clone(), vec![
            e.id.clone(),
            e.name_zh.clone(),
            e.name_en.clone(),
            e.romanization.clone(),
            e.category.clone(),
            e.constituents.join(";"),
        ])
    }))?;
    let norms_tsv = render_tsv(NORMS_FILE, &NORM_COLUMNS, norms.iter().map(|n| {
        (n.id.clone(), vec![
            n.id.clone(),
            n.element_id.clone(),
            n.rhetoric.clone(),
            n.symbol_zh.clone(),
            n.symbol_en.clone(),
            n.custom_zh.clone(),
            n.custom_en.clone(),
            n.emotion.clone(),
        ])
    }))?;
    fs::create_dir_all(root).map_err(|source| IngestError::Io { path: root.to_path_buf(), source })?;
    write_text(&root.join(ELEMENTS_FILE), &elements_tsv)?;
    write_text(&root.join(NORMS_FILE), &norms_tsv)?;
    write_text(&root.join(PAINTINGS_FILE), &to_json_text(&paintings))?;
    write_text(&root.join(MANIFEST_FILE), &to_json_text(&ds.manifest))?;
    Ok(())
}

/// Rewrites only the paintings file, e.g. after an import.
pub fn save_paintings(ds: &Dataset, root: &Path) -> Result<(), IngestError> {
    let paintings: Vec<&Painting> = ds.paintings.values().collect();
    write_text(&root.join(PAINTINGS_FILE), &to_json_text(&paintings))
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>, IngestError> {
    parse_json(&display_name(path), &read_existing(path, "detections")?)
}

pub fn load_label_map(path: &Path) -> Result<LabelMap, IngestError> {
    parse_json(&display_name(path), &read_existing(path, "label_map")?)
}

fn display_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn read_existing(path: &Path, kind: &'static str) -> Result<String, IngestError> {
    if !path.is_file() {
        return Err(IngestError::FileMissing { kind, path: path.to_path_buf() });
    }
    read_text(path)
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), IngestError> {
    fs::write(path, text).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn to_json_text<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("dataset types serialize");
    text.push('\n');
    text
}

fn parse_json<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Parse {
        file: file.to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Splits `text` into records of `columns.len()` fields. Line numbers in
/// errors are 1-based and count every physical line.
fn parse_tsv<T>(
    file: &str,
    text: &str,
    columns: &[&str],
    build: impl Fn(&[&str]) -> T,
) -> Result<Vec<T>, IngestError> {
    let err = |line: usize, message: String| IngestError::Parse { file: file.to_string(), line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let header = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .ok_or_else(|| err(1, "missing header row".into()))?;
    let names: Vec<&str> = header.1.split('\t').map(str::trim).collect();
    if names != columns {
        return Err(err(header.0, format!("expected header {:?}, found {:?}", columns.join("\t"), header.1)));
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(err(n, format!("expected {} fields, found {}", columns.len(), fields.len())));
        }
        out.push(build(&fields));
    }
    Ok(out)
}

fn render_tsv(
    file: &'static str,
    columns: &[&'static str],
    rows: impl Iterator<Item = (String, Vec<String>)>,
) -> Result<String, IngestError> {
    let mut out = columns.join("\t");
    out.push('\n');
    for (record, fields) in rows {
        for (field, value) in columns.iter().zip(&fields) {
            if value.contains(['\t', '\n', '\r']) {
                return Err(IngestError::Unencodable { file, record, field });
            }
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_reports_line_of_short_record() {
        let text = "a\tb\n# comment\n\n1\t2\n3\n";
        let err = parse_tsv("x.tsv", text, &["a", "b"], |f| f.len()).unwrap_err();
        match err {
            IngestError::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tsv_header_must_match() {
        let err = parse_tsv("x.tsv", "a\tc\n", &["a", "b"], |f| f.len()).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 1, .. }));
    }

    #[test]
    fn tsv_keeps_empty_trailing_field() {
        let rows = parse_tsv("x.tsv", "a\tb\nx\t\n", &["a", "b"], |f| f[1].to_string()).unwrap();
        assert_eq!(rows, vec![String::new()]);
    }

    #[test]
    fn tabs_cannot_be_written() {
        let err = render_tsv("x.tsv", &["a"], std::iter::once(("r".to_string(), vec!["x\ty".to_string()])));
        assert!(matches!(err, Err(IngestError::Unencodable { field: "a", .. })));
    }
}
