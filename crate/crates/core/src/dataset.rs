//! In-memory cultural-norm dataset: cross-validated assembly from raw
//! records, machine-detection import and manual annotation editing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analytics::Occurrence;
use crate::ids::{AnnotationId, ElementId, NormId, PaintingId};
use crate::norm::{
    Annotation, BoundingBox, CulturalNorm, ElementCategory, ElementIndex, ElementRecord, ImageSize, NormRecord,
    NormValidator, Painting, Provenance, Rule, Violation,
};

/// Default detector confidence threshold for [`Dataset::import_detections`].
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.35;

/// Number of expert verifications a detected annotation needs.
pub const REQUIRED_VERIFIERS: u32 = 2;

/// Declared expected counts, stored next to the data files.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub elements: usize,
    pub norms: usize,
    pub paintings: usize,
    #[serde(default)]
    pub categories: BTreeMap<ElementCategory, usize>,
    /// Scale of the full corpus this dataset samples from. Metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_corpus: Option<ReferenceCorpus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCorpus {
    pub paintings: usize,
    pub elements: usize,
    pub norms: usize,
    pub dictionary_elements: usize,
    pub categories: BTreeMap<ElementCategory, usize>,
}

impl ReferenceCorpus {
    /// True when the category table adds up to the declared element total.
    pub fn is_consistent(&self) -> bool {
        self.categories.values().sum::<usize>() == self.elements
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Record counts per entity kind (`elements`, `norms`, `paintings`, `annotations`).
    pub counts: BTreeMap<String, usize>,
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub painting_id: PaintingId,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Prompt label the detector was queried with.
    pub label: String,
    pub confidence: f64,
}

/// Detector label to taxonomy element. Lookup ignores case and surrounding
/// whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, ElementId>", into = "BTreeMap<String, ElementId>")]
pub struct LabelMap(BTreeMap<String, ElementId>);

impl From<BTreeMap<String, ElementId>> for LabelMap {
    fn from(map: BTreeMap<String, ElementId>) -> Self {
        LabelMap::new(map)
    }
}

impl From<LabelMap> for BTreeMap<String, ElementId> {
    fn from(map: LabelMap) -> Self {
        map.0
    }
}

impl LabelMap {
    pub fn new(entries: impl IntoIterator<Item = (String, ElementId)>) -> Self {
        LabelMap(entries.into_iter().map(|(k, v)| (normalize_label(&k), v)).collect())
    }

    pub fn get(&self, label: &str) -> Option<&ElementId> {
        self.0.get(&normalize_label(label))
    }
}

fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub total: usize,
    pub added: usize,
    /// Qualifying records whose annotation already existed.
    pub duplicates: usize,
    pub below_threshold: usize,
    pub unmapped: usize,
    pub out_of_bounds: usize,
    pub invalid_confidence: usize,
    pub unknown_painting: usize,
    pub unknown_paintings: BTreeSet<PaintingId>,
    pub added_ids: BTreeSet<AnnotationId>,
}

impl ImportSummary {
    pub fn skipped(&self) -> usize {
        self.total - self.added - self.duplicates
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown painting {0}")]
    UnknownPainting(PaintingId),
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("box {bbox} is empty or outside the {}x{} image", size.width, size.height)]
    OutOfBounds { bbox: BoundingBox, size: ImageSize },
    #[error("annotation {0} already exists")]
    DuplicateAnnotation(AnnotationId),
    #[error("unknown annotation {0}")]
    UnknownAnnotation(AnnotationId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub action: AuditAction,
    pub annotation: Annotation,
    /// Set when the edit discards expert-verified work.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub elements: ElementIndex,
    /// Ordered by norm id.
    pub norms: Vec<CulturalNorm>,
    pub paintings: BTreeMap<PaintingId, Painting>,
    pub manifest: Manifest,
    audit: Vec<AuditEntry>,
    occurrence: Occurrence,
}

impl Dataset {
    /// Cross-validates raw records in dependency order (elements, then
    /// norms, then paintings) and either returns the dataset or a report
    /// listing every violation.
    pub fn assemble(
        element_records: &[ElementRecord],
        norm_records: &[NormRecord],
        paintings: Vec<Painting>,
        manifest: Manifest,
    ) -> Result<Dataset, ValidationReport> {
        let mut report = ValidationReport::default();
        let (elements, violations) = ElementIndex::from_records(element_records);
        report.violations.extend(violations);

        let mut validator = NormValidator::new(&elements);
        let mut norms = Vec::new();
        for rec in norm_records {
            match validator.check(rec) {
                Ok(n) => norms.push(n),
                Err(v) => report.violations.extend(v),
            }
        }
        norms.sort_by(|a, b| a.id.cmp(&b.id));

        let painting_records = paintings.len();
        let mut catalog = BTreeMap::new();
        let mut annotation_ids = BTreeSet::new();
        let mut annotation_count = 0;
        for mut painting in paintings {
            let pid = painting.id.as_str().to_string();
            if catalog.contains_key(&painting.id) {
                report.violations.push(Violation::new(&pid, Rule::DuplicateId, "id", "painting id repeated"));
                continue;
            }
            if painting.image_size.width == 0 || painting.image_size.height == 0 {
                report.violations.push(Violation::new(
                    &pid,
                    Rule::InvalidImageSize,
                    "image_size",
                    "image dimensions must be positive",
                ));
            }
            annotation_count += painting.annotations.len();
            for a in &painting.annotations {
                check_annotation(a, &painting, &elements, &mut annotation_ids, &mut report);
            }
            painting.annotations.sort_by(|a, b| a.id.cmp(&b.id));
            catalog.insert(painting.id.clone(), painting);
        }

        check_manifest(&manifest, element_records, norm_records.len(), painting_records, &mut report);

        report.counts.insert("elements".into(), elements.len());
        report.counts.insert("norms".into(), norms.len());
        report.counts.insert("paintings".into(), catalog.len());
        report.counts.insert("annotations".into(), annotation_count);

        if !report.accepted() {
            return Err(report);
        }
        let occurrence = Occurrence::from_paintings(catalog.values());
        Ok(Dataset { elements, norms, paintings: catalog, manifest, audit: Vec::new(), occurrence })
    }

    /// Re-runs full validation over the current contents.
    pub fn validate(&self) -> ValidationReport {
        let (elements, norms, paintings) = self.to_records();
        match Dataset::assemble(&elements, &norms, paintings, self.manifest.clone()) {
            Ok(ds) => ds.acceptance_report(),
            Err(report) => report,
        }
    }

    /// Report for an accepted dataset: counts plus warnings.
    pub fn acceptance_report(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        report.counts.insert("elements".into(), self.elements.len());
        report.counts.insert("norms".into(), self.norms.len());
        report.counts.insert("paintings".into(), self.paintings.len());
        report.counts.insert("annotations".into(), self.annotations().count());
        for a in self.annotations() {
            if a.provenance == Provenance::Detected && a.verifier_count < REQUIRED_VERIFIERS {
                report.warnings.push(Violation::new(
                    a.id.as_str(),
                    Rule::LowVerifierCount,
                    "verifier_count",
                    format!("detected annotation verified by {} of {REQUIRED_VERIFIERS} experts", a.verifier_count),
                ));
            }
        }
        report
    }

    pub fn to_records(&self) -> (Vec<ElementRecord>, Vec<NormRecord>, Vec<Painting>) {
        (
            self.elements.iter().map(ElementRecord::from).collect(),
            self.norms.iter().map(NormRecord::from).collect(),
            self.paintings.values().cloned().collect(),
        )
    }

    pub fn painting(&self, id: &PaintingId) -> Option<&Painting> {
        self.paintings.get(id)
    }

    pub fn norm(&self, id: &NormId) -> Option<&CulturalNorm> {
        self.norms.binary_search_by(|n| n.id.cmp(id)).ok().map(|i| &self.norms[i])
    }

    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.paintings.values().flat_map(|p| p.annotations.iter())
    }

    pub fn annotation(&self, id: &AnnotationId) -> Option<&Annotation> {
        self.annotations().find(|a| &a.id == id)
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Incrementally maintained presence statistics.
    pub fn occurrence(&self) -> &Occurrence {
        &self.occurrence
    }

    /// Turns detector output into `Detected` annotations.
    ///
    /// A record becomes an annotation when its painting exists, its
    /// confidence is in `[0, 1]` and at least `min_confidence`, its label maps
    /// to a known element and its box fits the image. Everything else is
    /// counted, never fatal. Annotation ids are content hashes, so the result
    /// does not depend on record order and re-imports add nothing. Manual
    /// annotations are never touched.
    pub fn import_detections(
        &mut self,
        records: &[DetectionRecord],
        labels: &LabelMap,
        min_confidence: f64,
    ) -> ImportSummary {
        let mut summary = ImportSummary { total: records.len(), ..Default::default() };
        for rec in records {
            let Some(painting) = self.paintings.get(&rec.painting_id) else {
                summary.unknown_painting += 1;
                summary.unknown_paintings.insert(rec.painting_id.clone());
                continue;
            };
            if !(0.0..=1.0).contains(&rec.confidence) {
                summary.invalid_confidence += 1;
                continue;
            }
            if rec.confidence < min_confidence {
                summary.below_threshold += 1;
                continue;
            }
            let Some(element) = labels.get(&rec.label).filter(|e| self.elements.contains(e)) else {
                summary.unmapped += 1;
                continue;
            };
            if !rec.bbox.fits_within(painting.image_size) {
                summary.out_of_bounds += 1;
                continue;
            }
            let annotation = Annotation::new(rec.painting_id.clone(), rec.bbox, element.clone(), Provenance::Detected);
            if painting.annotations.iter().any(|a| a.id == annotation.id) {
                summary.duplicates += 1;
                continue;
            }
            summary.added += 1;
            summary.added_ids.insert(annotation.id.clone());
            self.insert_annotation(annotation);
        }
        summary
    }

    pub fn add_manual_annotation(
        &mut self,
        painting_id: &PaintingId,
        bbox: BoundingBox,
        element: &ElementId,
    ) -> Result<Annotation, AnnotationError> {
        let painting = self
            .paintings
            .get(painting_id)
            .ok_or_else(|| AnnotationError::UnknownPainting(painting_id.clone()))?;
        if !self.elements.contains(element) {
            return Err(AnnotationError::UnknownElement(element.clone()));
        }
        if !bbox.fits_within(painting.image_size) {
            return Err(AnnotationError::OutOfBounds { bbox, size: painting.image_size });
        }
        let annotation = Annotation::new(painting_id.clone(), bbox, element.clone(), Provenance::Manual);
        if painting.annotations.iter().any(|a| a.id == annotation.id) {
            return Err(AnnotationError::DuplicateAnnotation(annotation.id));
        }
        self.insert_annotation(annotation.clone());
        Ok(annotation)
    }

    /// Re-inserts a previously validated annotation, e.g. when replaying a
    /// persisted edit log. The annotation is checked like a manual one.
    pub fn restore_annotation(&mut self, annotation: Annotation) -> Result<(), AnnotationError> {
        let painting = self
            .paintings
            .get(&annotation.painting_id)
            .ok_or_else(|| AnnotationError::UnknownPainting(annotation.painting_id.clone()))?;
        if !self.elements.contains(&annotation.element) {
            return Err(AnnotationError::UnknownElement(annotation.element));
        }
        if !annotation.bbox.fits_within(painting.image_size) {
            return Err(AnnotationError::OutOfBounds { bbox: annotation.bbox, size: painting.image_size });
        }
        if painting.annotations.iter().any(|a| a.id == annotation.id) {
            return Err(AnnotationError::DuplicateAnnotation(annotation.id));
        }
        self.insert_annotation(annotation);
        Ok(())
    }

    pub fn remove_annotation(&mut self, id: &AnnotationId) -> Result<Annotation, AnnotationError> {
        let (painting, pos) = self
            .paintings
            .values_mut()
            .find_map(|p| p.annotations.iter().position(|a| &a.id == id).map(|i| (p, i)))
            .ok_or_else(|| AnnotationError::UnknownAnnotation(id.clone()))?;
        let removed = painting.annotations.remove(pos);
        self.occurrence.remove(&removed.painting_id, &removed.element);
        let flagged = removed.provenance == Provenance::Detected && removed.verifier_count >= REQUIRED_VERIFIERS;
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64,
            action: AuditAction::Removed,
            annotation: removed.clone(),
            flagged,
        });
        Ok(removed)
    }

    fn insert_annotation(&mut self, annotation: Annotation) {
        let Some(painting) = self.paintings.get_mut(&annotation.painting_id) else {
            return;
        };
        self.occurrence.add(&annotation.painting_id, &annotation.element);
        let pos = painting.annotations.partition_point(|a| a.id < annotation.id);
        painting.annotations.insert(pos, annotation);
    }
}

fn check_annotation(
    a: &Annotation,
    painting: &Painting,
    elements: &ElementIndex,
    seen: &mut BTreeSet<AnnotationId>,
    report: &mut ValidationReport,
) {
    let aid = a.id.as_str();
    if !seen.insert(a.id.clone()) {
        report.violations.push(Violation::new(aid, Rule::DuplicateAnnotation, "id", "annotation id repeated"));
    }
    if a.painting_id != painting.id {
        report.violations.push(Violation::new(
            aid,
            Rule::PaintingMismatch,
            "painting_id",
            format!("annotation stored under painting {} names {}", painting.id, a.painting_id),
        ));
    }
    if !elements.contains(&a.element) {
        report.violations.push(Violation::new(
            aid,
            Rule::UnknownElement,
            "element",
            format!("element {} is not in the taxonomy", a.element),
        ));
    }
    if !a.bbox.fits_within(painting.image_size) {
        report.violations.push(Violation::new(
            aid,
            Rule::OutOfBounds,
            "box",
            format!(
                "box {} not inside {}x{} image",
                a.bbox, painting.image_size.width, painting.image_size.height
            ),
        ));
    }
}

/// Compares declared counts with the number of records read, so a record
/// rejected for its own reason is not reported a second time here.
fn check_manifest(
    manifest: &Manifest,
    elements: &[ElementRecord],
    norms: usize,
    paintings: usize,
    report: &mut ValidationReport,
) {
    let mut mismatch = |field: &str, declared: usize, actual: usize| {
        if declared != actual {
            report.violations.push(Violation::new(
                "manifest",
                Rule::ManifestMismatch,
                field,
                format!("manifest declares {declared}, found {actual}"),
            ));
        }
    };
    mismatch("elements", manifest.elements, elements.len());
    mismatch("norms", manifest.norms, norms);
    mismatch("paintings", manifest.paintings, paintings);
    if !manifest.categories.is_empty() {
        let mut census: BTreeMap<ElementCategory, usize> =
            ElementCategory::ALL.iter().map(|c| (*c, 0)).collect();
        for category in elements.iter().filter_map(|e| e.category.parse::<ElementCategory>().ok()) {
            *census.entry(category).or_default() += 1;
        }
        for (category, actual) in census {
            let declared = manifest.categories.get(&category).copied().unwrap_or(0);
            mismatch(&format!("categories.{category}"), declared, actual);
        }
    }
    if let Some(reference) = &manifest.reference_corpus {
        if !reference.is_consistent() {
            report.violations.push(Violation::new(
                "manifest",
                Rule::ManifestMismatch,
                "reference_corpus",
                "reference category counts do not sum to the element total",
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Dimensions;
    use alloc::vec;
    use proptest::prelude::*;

    fn element_rec(id: &str, cat: &str, parts: &[&str]) -> ElementRecord {
        ElementRecord {
            id: id.into(),
            name_zh: String::new(),
            name_en: id.into(),
            romanization: String::new(),
            category: cat.into(),
            constituents: parts.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn painting(id: &str) -> Painting {
        Painting {
            id: id.into(),
            title_zh: String::new(),
            title_en: id.into(),
            artist: "Anonymous".into(),
            dynasty: "Song".into(),
            medium: "ink on silk".into(),
            dimensions: Dimensions { width_cm: 30.0, height_cm: 40.0 },
            location: "somewhere".into(),
            image_ref: "images/x.jpg".into(),
            image_size: ImageSize { width: 200, height: 100 },
            annotations: vec![],
        }
    }

    fn dataset() -> Dataset {
        let elements = vec![
            element_rec("bee", "animal", &[]),
            element_rec("monkey", "animal", &[]),
            element_rec("leaf", "plant", &[]),
            element_rec("bee&monkey", "composite", &["bee", "monkey"]),
        ];
        let manifest = Manifest { elements: 4, norms: 0, paintings: 2, ..Default::default() };
        Dataset::assemble(&elements, &[], vec![painting("p1"), painting("p2")], manifest).unwrap()
    }

    fn labels() -> LabelMap {
        LabelMap::new([("monkey".to_string(), ElementId::from("monkey")), ("bee".into(), "bee".into())])
    }

    fn det(pid: &str, x: i64, label: &str, confidence: f64) -> DetectionRecord {
        DetectionRecord { painting_id: pid.into(), bbox: BoundingBox::new(x, 10, 20, 20), label: label.into(), confidence }
    }

    #[test]
    fn mapped_record_above_threshold_is_added() {
        let mut ds = dataset();
        let s = ds.import_detections(&[det("p1", 0, "monkey", 0.9)], &labels(), 0.5);
        assert_eq!(s.added, 1);
        let a = &ds.painting(&"p1".into()).unwrap().annotations[0];
        assert_eq!(a.provenance, Provenance::Detected);
        assert_eq!(a.verifier_count, 0);
    }

    #[test]
    fn import_counts_every_skip_reason() {
        let mut ds = dataset();
        let records = vec![
            det("p1", 0, "monkey", 0.2),
            det("p1", 0, "tiger", 0.9),
            det("p1", 190, "monkey", 0.9),
            det("p9", 0, "monkey", 0.9),
            det("p1", 0, "bee", 1.5),
            det("p1", 0, " Bee ", 0.5),
            det("p1", 0, "bee", 0.6),
        ];
        let s = ds.import_detections(&records, &labels(), 0.35);
        assert_eq!(
            (s.below_threshold, s.unmapped, s.out_of_bounds, s.unknown_painting, s.invalid_confidence),
            (1, 1, 1, 1, 1)
        );
        assert_eq!((s.added, s.duplicates, s.skipped()), (1, 1, 5));
        assert!(s.unknown_paintings.contains(&PaintingId::from("p9")));
    }

    #[test]
    fn reimport_is_idempotent() {
        let mut ds = dataset();
        let records = [det("p1", 0, "monkey", 0.9), det("p2", 5, "bee", 0.9)];
        ds.import_detections(&records, &labels(), 0.35);
        let before = ds.clone();
        let s = ds.import_detections(&records, &labels(), 0.35);
        assert_eq!((s.added, s.duplicates), (0, 2));
        assert_eq!(ds, before);
    }

    #[test]
    fn manual_annotation_round_trip() {
        let mut ds = dataset();
        let original = ds.clone();
        let a = ds.add_manual_annotation(&"p1".into(), BoundingBox::new(1, 1, 5, 5), &"leaf".into()).unwrap();
        assert_eq!(a.provenance, Provenance::Manual);
        assert_eq!(ds.occurrence().frequency(&"leaf".into()), 1);
        ds.remove_annotation(&a.id).unwrap();
        assert_eq!(ds.paintings, original.paintings);
        assert_eq!(ds.occurrence(), original.occurrence());
        assert_eq!(ds.remove_annotation(&a.id), Err(AnnotationError::UnknownAnnotation(a.id)));
    }

    #[test]
    fn manual_annotation_errors() {
        let mut ds = dataset();
        let zero = BoundingBox::new(1, 1, 0, 5);
        assert!(matches!(
            ds.add_manual_annotation(&"p1".into(), zero, &"leaf".into()),
            Err(AnnotationError::OutOfBounds { .. })
        ));
        assert_eq!(
            ds.add_manual_annotation(&"p0".into(), BoundingBox::new(1, 1, 5, 5), &"leaf".into()),
            Err(AnnotationError::UnknownPainting("p0".into()))
        );
        assert_eq!(
            ds.add_manual_annotation(&"p1".into(), BoundingBox::new(1, 1, 5, 5), &"fern".into()),
            Err(AnnotationError::UnknownElement("fern".into()))
        );
    }

    #[test]
    fn removing_verified_detection_is_flagged() {
        let mut ds = dataset();
        let s = ds.import_detections(&[det("p1", 0, "monkey", 0.9)], &labels(), 0.35);
        let id = s.added_ids.iter().next().unwrap().clone();
        ds.paintings.get_mut(&PaintingId::from("p1")).unwrap().annotations[0].verifier_count = 2;
        ds.remove_annotation(&id).unwrap();
        let entry = &ds.audit_log()[0];
        assert!(entry.flagged);
        assert_eq!(entry.annotation.id, id);
    }

    #[test]
    fn unverified_detections_warn() {
        let mut ds = dataset();
        ds.import_detections(&[det("p1", 0, "monkey", 0.9)], &labels(), 0.35);
        let report = ds.validate();
        assert!(report.accepted());
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].rule, Rule::LowVerifierCount);
    }

    #[test]
    fn manifest_mismatch_is_a_violation() {
        let elements = vec![element_rec("bee", "animal", &[])];
        let manifest = Manifest { elements: 2, ..Default::default() };
        let report = Dataset::assemble(&elements, &[], vec![], manifest).unwrap_err();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::ManifestMismatch);
    }

    #[test]
    fn bad_norm_rhetoric_reported_once() {
        let elements = vec![element_rec("bee", "animal", &[])];
        let norm = NormRecord {
            id: "n1".into(),
            element_id: "bee".into(),
            rhetoric: "Allegory".into(),
            symbol_zh: "封".into(),
            symbol_en: "to confer a title".into(),
            custom_zh: String::new(),
            custom_en: "x".into(),
            emotion: "positive".into(),
        };
        let manifest = Manifest { elements: 1, norms: 1, ..Default::default() };
        let report = Dataset::assemble(&elements, &[norm], vec![], manifest).unwrap_err();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::InvalidRhetoric);
    }

    fn arb_records() -> impl Strategy<Value = Vec<DetectionRecord>> {
        proptest::collection::vec(
            (0usize..3, 0i64..220, 0usize..3, 0.0f64..1.0),
            0..24,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(p, x, l, c)| det(["p1", "p2", "p3"][p], x, ["monkey", "bee", "cloud"][l], c))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn import_is_order_independent(records in arb_records(), seed in any::<u64>()) {
            let mut shuffled = records.clone();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let mut a = dataset();
            let mut b = dataset();
            let sa = a.import_detections(&records, &labels(), 0.35);
            let sb = b.import_detections(&shuffled, &labels(), 0.35);
            prop_assert_eq!(sa, sb);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn manual_annotations_survive_imports(records in arb_records(), x in 0i64..150) {
            let mut ds = dataset();
            let manual = ds.add_manual_annotation(&"p2".into(), BoundingBox::new(x, 0, 30, 30), &"monkey".into()).unwrap();
            ds.import_detections(&records, &labels(), 0.0);
            prop_assert_eq!(ds.annotation(&manual.id), Some(&manual));
        }

        #[test]
        fn accepted_dataset_revalidates_clean(records in arb_records()) {
            let mut ds = dataset();
            ds.import_detections(&records, &labels(), 0.35);
            prop_assert!(ds.validate().accepted());
        }
    }
}
