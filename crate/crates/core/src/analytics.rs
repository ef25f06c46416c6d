//! Statistics behind the element, painting and element-selection views.
//!
//! Presence collapses multiplicity: two monkeys in one painting count once.
//! Composite elements count only where they are annotated as such.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ids::{ElementId, PaintingId};
use crate::norm::{CulturalNorm, EmotionPolarity, Painting, RhetoricType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("unknown painting {0}")]
    UnknownPainting(PaintingId),
}

/// Unordered pair of elements annotated together; `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoOccurrenceEdge {
    pub a: ElementId,
    pub b: ElementId,
    /// Paintings in which both are annotated.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementStats {
    pub element: ElementId,
    /// Paintings containing the element, across the whole catalog.
    pub frequency: usize,
    pub norm_count: usize,
    /// All six techniques, zeros included.
    pub rhetoric_histogram: BTreeMap<RhetoricType, usize>,
    pub emotion_histogram: BTreeMap<EmotionPolarity, usize>,
    /// Elements this one forms composites with (for a composite: its constituents).
    pub composite_partners: Vec<ElementId>,
    /// Composites this atomic element belongs to.
    pub composites: Vec<ElementId>,
}

/// Element presence per painting, maintained incrementally as annotations
/// change. Always equal to [`Occurrence::from_paintings`] over the current
/// catalog.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Occurrence {
    /// Annotation multiplicity per painting and element.
    presence: BTreeMap<PaintingId, BTreeMap<ElementId, usize>>,
    paintings_by_element: BTreeMap<ElementId, BTreeSet<PaintingId>>,
    pairs: BTreeMap<(ElementId, ElementId), usize>,
}

impl Occurrence {
    pub fn from_paintings<'a>(paintings: impl IntoIterator<Item = &'a Painting>) -> Self {
        let mut occ = Occurrence::default();
        for p in paintings {
            for a in &p.annotations {
                occ.add(&p.id, &a.element);
            }
        }
        occ
    }

    pub fn add(&mut self, painting: &PaintingId, element: &ElementId) {
        let present = self.presence.entry(painting.clone()).or_default();
        let n = present.entry(element.clone()).or_default();
        *n += 1;
        if *n > 1 {
            return;
        }
        for other in present.keys().filter(|o| *o != element) {
            *self.pairs.entry(ordered(element, other)).or_default() += 1;
        }
        self.paintings_by_element.entry(element.clone()).or_default().insert(painting.clone());
    }

    pub fn remove(&mut self, painting: &PaintingId, element: &ElementId) {
        let Some(present) = self.presence.get_mut(painting) else {
            return;
        };
        let Some(n) = present.get_mut(element) else {
            return;
        };
        *n -= 1;
        if *n > 0 {
            return;
        }
        present.remove(element);
        for other in present.keys() {
            let key = ordered(element, other);
            if let Some(c) = self.pairs.get_mut(&key) {
                *c -= 1;
                if *c == 0 {
                    self.pairs.remove(&key);
                }
            }
        }
        if present.is_empty() {
            self.presence.remove(painting);
        }
        if let Some(set) = self.paintings_by_element.get_mut(element) {
            set.remove(painting);
            if set.is_empty() {
                self.paintings_by_element.remove(element);
            }
        }
    }

    pub fn frequency(&self, element: &ElementId) -> usize {
        self.paintings_by_element.get(element).map_or(0, BTreeSet::len)
    }

    pub fn frequencies(&self) -> BTreeMap<ElementId, usize> {
        self.paintings_by_element.iter().map(|(e, ps)| (e.clone(), ps.len())).collect()
    }

    pub fn paintings_with(&self, element: &ElementId) -> impl Iterator<Item = &PaintingId> {
        self.paintings_by_element.get(element).into_iter().flatten()
    }

    pub fn edges(&self) -> Vec<CoOccurrenceEdge> {
        self.pairs
            .iter()
            .map(|((a, b), c)| CoOccurrenceEdge { a: a.clone(), b: b.clone(), count: *c })
            .collect()
    }
}

fn ordered(x: &ElementId, y: &ElementId) -> (ElementId, ElementId) {
    if x < y {
        (x.clone(), y.clone())
    } else {
        (y.clone(), x.clone())
    }
}

/// Number of distinct paintings per annotated element.
pub fn element_frequency(ds: &Dataset) -> BTreeMap<ElementId, usize> {
    ds.occurrence().frequencies()
}

/// One edge per co-annotated pair, sorted by `(a, b)`.
pub fn co_occurrence(ds: &Dataset) -> Vec<CoOccurrenceEdge> {
    ds.occurrence().edges()
}

pub fn paintings_for_element(ds: &Dataset, element: &ElementId) -> Result<Vec<PaintingId>, AnalyticsError> {
    if !ds.elements.contains(element) {
        return Err(AnalyticsError::UnknownElement(element.clone()));
    }
    Ok(ds.occurrence().paintings_with(element).cloned().collect())
}

pub fn norms_for_element(ds: &Dataset, element: &ElementId) -> Result<Vec<CulturalNorm>, AnalyticsError> {
    if !ds.elements.contains(element) {
        return Err(AnalyticsError::UnknownElement(element.clone()));
    }
    Ok(ds.norms.iter().filter(|n| &n.element == element).cloned().collect())
}

/// Stats for each distinct element annotated on a painting, in id order.
pub fn element_stats(ds: &Dataset, painting: &PaintingId) -> Result<Vec<ElementStats>, AnalyticsError> {
    let p = ds.painting(painting).ok_or_else(|| AnalyticsError::UnknownPainting(painting.clone()))?;
    let stats = p
        .element_set()
        .into_iter()
        .map(|id| {
            let mut rhetoric_histogram: BTreeMap<RhetoricType, usize> =
                RhetoricType::ALL.iter().map(|r| (*r, 0)).collect();
            let mut emotion_histogram: BTreeMap<EmotionPolarity, usize> =
                EmotionPolarity::ALL.iter().map(|e| (*e, 0)).collect();
            let mut norm_count = 0;
            for n in ds.norms.iter().filter(|n| &n.element == id) {
                norm_count += 1;
                *rhetoric_histogram.entry(n.rhetoric).or_default() += 1;
                *emotion_histogram.entry(n.emotion).or_default() += 1;
            }
            let (composite_partners, composites) = match ds.elements.get(id) {
                Some(e) if e.is_composite() => (e.constituents.clone(), Vec::new()),
                Some(_) => {
                    let containing: Vec<_> = ds.elements.composites_containing(id).collect();
                    let partners: BTreeSet<ElementId> = containing
                        .iter()
                        .flat_map(|c| c.constituents.iter())
                        .filter(|c| *c != id)
                        .cloned()
                        .collect();
                    (partners.into_iter().collect(), containing.iter().map(|c| c.id.clone()).collect())
                }
                None => (Vec::new(), Vec::new()),
            };
            ElementStats {
                element: id.clone(),
                frequency: ds.occurrence().frequency(id),
                norm_count,
                rhetoric_histogram,
                emotion_histogram,
                composite_partners,
                composites,
            }
        })
        .collect();
    Ok(stats)
}
