use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::{Error, Result, N_CLASSES};

/// Regulatory risk class I, II or III.
///
/// Models work with zero-based class indices; [`RiskClass::index`] maps
/// class 1 to index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RiskClass(u8);

impl RiskClass {
    pub const ALL: [RiskClass; N_CLASSES] = [RiskClass(1), RiskClass(2), RiskClass(3)];

    pub fn new(class: u8) -> Result<Self> {
        if (1..=N_CLASSES as u8).contains(&class) {
            Ok(Self(class))
        } else {
            Err(Error::Param(format!("risk class {class} outside 1..=3")))
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index < N_CLASSES {
            Ok(Self(index as u8 + 1))
        } else {
            Err(Error::Param(format!("class index {index} outside 0..3")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl TryFrom<u8> for RiskClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        RiskClass::new(v)
    }
}

impl From<RiskClass> for u8 {
    fn from(c: RiskClass) -> u8 {
        c.0
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where a record's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Original,
    /// Label assigned by self-training in the given round (1-based).
    Pseudo { round: usize },
}

/// One device sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Option<RiskClass>,
    pub text: Vec<f64>,
    pub image: Option<Vec<f64>>,
    pub origin: Origin,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, label: Option<RiskClass>, text: Vec<f64>, image: Option<Vec<f64>>) -> Self {
        Self { id: id.into(), label, text, image, origin: Origin::Original }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self.origin, Origin::Pseudo { .. })
    }
}

/// Which embedding block an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    Both,
}

/// A validated set of records with uniform vector lengths and unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<EmbeddingRecord>,
    d_text: usize,
    d_image: usize,
    class_counts: [usize; N_CLASSES],
}

impl Corpus {
    /// Validates and wraps `records`. `d_image` is 0 for text-only corpora.
    pub fn new(records: Vec<EmbeddingRecord>, d_text: usize, d_image: usize) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        let mut class_counts = [0; N_CLASSES];
        for (i, r) in records.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Param(format!("duplicate id {:?}", r.id)));
            }
            if r.text.len() != d_text {
                return Err(Error::Shape(format!(
                    "record {i} ({}) has text length {} but corpus d_T is {d_text}",
                    r.id,
                    r.text.len()
                )));
            }
            if let Some(img) = &r.image {
                if img.len() != d_image {
                    return Err(Error::Shape(format!(
                        "record {i} ({}) has image length {} but corpus d_I is {d_image}",
                        r.id,
                        img.len()
                    )));
                }
            }
            if let Some(c) = r.label {
                class_counts[c.index()] += 1;
            }
        }
        Ok(Self { records, d_text, d_image, class_counts })
    }

    pub fn empty(d_text: usize, d_image: usize) -> Self {
        Self { records: Vec::new(), d_text, d_image, class_counts: [0; N_CLASSES] }
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d_text(&self) -> usize {
        self.d_text
    }

    pub fn d_image(&self) -> usize {
        self.d_image
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        self.class_counts
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// True when every record carries an image vector (and there is at least one).
    pub fn has_images(&self) -> bool {
        self.d_image > 0 && self.records.iter().all(|r| r.image.is_some())
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// Rebuilds a corpus from a subset of indices, keeping order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Corpus::new(records, self.d_text, self.d_image).expect("subset of a valid corpus")
    }

    /// Records appended to this corpus, checked for dims and id clashes.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        if other.d_text != self.d_text || (other.d_image != self.d_image && !other.is_empty()) {
            return Err(Error::Shape(format!(
                "cannot join corpora with dims ({}, {}) and ({}, {})",
                self.d_text, self.d_image, other.d_text, other.d_image
            )));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Corpus::new(records, self.d_text, self.d_image)
    }

    /// Drops records without an image vector (multimodal training filter).
    pub fn require_images(&self) -> Corpus {
        let records = self.records.iter().filter(|r| r.image.is_some()).cloned().collect();
        Corpus::new(records, self.d_text, self.d_image).expect("filter of a valid corpus")
    }

    /// Zero-based class indices; errors on any unlabeled record.
    pub fn class_indices(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| {
                r.label.map(RiskClass::index).ok_or_else(|| Error::Contract(format!("record {} has no label", r.id)))
            })
            .collect()
    }

    pub fn text_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.d_text);
        for r in &self.records {
            data.extend_from_slice(&r.text);
        }
        Matrix::new(self.len(), self.d_text, data).expect("uniform text length")
    }

    pub fn image_matrix(&self) -> Result<Matrix> {
        if self.d_image == 0 {
            return Err(Error::Modality("corpus has no image columns".into()));
        }
        let mut data = Vec::with_capacity(self.len() * self.d_image);
        for r in &self.records {
            let img =
                r.image.as_ref().ok_or_else(|| Error::Modality(format!("record {} has no image vector", r.id)))?;
            data.extend_from_slice(img);
        }
        Ok(Matrix::new(self.len(), self.d_image, data).expect("uniform image length"))
    }

    /// Replaces the vectors of one modality with rows of `m`.
    pub(crate) fn with_modality(&self, which: Modality, m: &Matrix) -> Result<Corpus> {
        if m.rows() != self.len() {
            return Err(Error::Shape(format!("replacement has {} rows for {} records", m.rows(), self.len())));
        }
        let mut records = self.records.clone();
        let (mut d_text, mut d_image) = (self.d_text, self.d_image);
        match which {
            Modality::Text => {
                d_text = m.cols();
                for (r, row) in records.iter_mut().zip(m.row_iter()) {
                    r.text = row.to_vec();
                }
            }
            Modality::Image => {
                d_image = m.cols();
                for (r, row) in records.iter_mut().zip(m.row_iter()) {
                    if r.image.is_some() {
                        r.image = Some(row.to_vec());
                    }
                }
            }
            Modality::Both => {
                return Err(Error::Param("replace one modality at a time".into()));
            }
        }
        Corpus::new(records, d_text, d_image)
    }

    /// Copy with `f` applied to every record; ids and dims must stay valid.
    pub(crate) fn map_records(&self, f: impl FnMut(&mut EmbeddingRecord)) -> Corpus {
        let mut records = self.records.clone();
        records.iter_mut().for_each(f);
        Corpus::new(records, self.d_text, self.d_image).expect("label edits keep validity")
    }
}

/// Partitions a corpus by label presence.
pub fn split_labeled(c: &Corpus) -> (Corpus, Corpus) {
    let (lab, unl): (Vec<_>, Vec<_>) = c.records().iter().cloned().partition(|r| r.label.is_some());
    (
        Corpus::new(lab, c.d_text(), c.d_image()).expect("partition of a valid corpus"),
        Corpus::new(unl, c.d_text(), c.d_image()).expect("partition of a valid corpus"),
    )
}
