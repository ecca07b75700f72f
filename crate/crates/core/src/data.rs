//! Dataset and feature containers plus the `OODF1` single-file interchange
//! format.
//!
//! Layout of an interchange file:
//!
//! ```text
//! b"OODF1" | header_len: u32 LE | header: UTF-8 JSON | payload
//! ```
//!
//! The payload is `rows * cols` row-major little-endian floats (`f32` or
//! `f64`, per the header's `dtype`), followed by `rows` little-endian `i32`
//! labels when `labels_present` is true. A `head` file stores the final
//! linear layer as a `classes x (features + 1)` matrix whose last column is
//! the bias.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 5] = b"OODF1";
pub const MAX_HEADER_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    inputs: Matrix,
    labels: Vec<i32>,
    class_ids: Vec<i32>,
    #[serde(default)]
    source_tag: String,
}

impl LabeledDataset {
    /// Builds a dataset whose class list is exactly the distinct labels.
    pub fn new(inputs: Matrix, labels: Vec<i32>) -> Result<Self> {
        let mut class_ids = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        Self::with_classes(inputs, labels, class_ids)
    }

    /// Builds a dataset with an explicit class list, which may name classes
    /// that have no rows.
    pub fn with_classes(inputs: Matrix, labels: Vec<i32>, class_ids: Vec<i32>) -> Result<Self> {
        if inputs.cols() == 0 {
            return Err(Error::Shape("dataset rows must have dimension >= 1".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if class_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "class ids must be unique and sorted ascending".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|l| class_ids.binary_search(l).is_err()) {
            return Err(Error::UnknownClass(bad));
        }
        check_finite(&inputs)?;
        Ok(LabeledDataset {
            inputs,
            labels,
            class_ids,
            source_tag: String::new(),
        })
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Row indices grouped by class, in `class_ids` order.
    pub fn indices_by_class(&self) -> Vec<(i32, Vec<usize>)> {
        let mut groups: Vec<(i32, Vec<usize>)> =
            self.class_ids.iter().map(|&c| (c, Vec::new())).collect();
        for (i, l) in self.labels.iter().enumerate() {
            let pos = self.class_ids.binary_search(l).expect("label invariant");
            groups[pos].1.push(i);
        }
        groups
    }

    /// Subset with the given rows. The class list shrinks to the labels present.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let labels: Vec<i32> = indices.iter().map(|&i| self.labels[i]).collect();
        let mut class_ids = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        LabeledDataset {
            inputs: self.inputs.select_rows(indices),
            labels,
            class_ids,
            source_tag: self.source_tag.clone(),
        }
    }

    /// Same rows with labels replaced by `label` (e.g. a sentinel OOD class).
    pub fn relabeled(&self, label: i32) -> LabeledDataset {
        LabeledDataset {
            inputs: self.inputs.clone(),
            labels: vec![label; self.len()],
            class_ids: if self.is_empty() { vec![] } else { vec![label] },
            source_tag: self.source_tag.clone(),
        }
    }

    /// Concatenates datasets of equal dimensionality.
    pub fn concat(parts: &[&LabeledDataset]) -> Result<LabeledDataset> {
        let dim = parts
            .first()
            .map(|d| d.dim())
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim() != dim {
                return Err(Error::Shape(format!(
                    "cannot concatenate dimension {} onto {dim}",
                    p.dim()
                )));
            }
            data.extend_from_slice(p.inputs.as_slice());
            labels.extend_from_slice(&p.labels);
        }
        let rows = labels.len();
        LabeledDataset::new(Matrix::from_vec(rows, dim, data)?, labels)
    }
}

/// Penultimate-layer activations for a batch of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    features: Matrix,
    #[serde(default)]
    labels: Option<Vec<i32>>,
    #[serde(default)]
    source_tag: String,
}

impl FeatureSet {
    pub fn new(features: Matrix) -> Result<Self> {
        check_finite(&features)?;
        Ok(FeatureSet {
            features,
            labels: None,
            source_tag: String::new(),
        })
    }

    /// Builds a feature set without the finiteness scan. Callers guarantee
    /// the values derive from finite inputs through finite maps.
    pub(crate) fn from_trusted(features: Matrix) -> Self {
        FeatureSet {
            features,
            labels: None,
            source_tag: String::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                self.features.rows()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn matrix(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            source_tag: self.source_tag.clone(),
        }
    }

    /// Smallest and largest activation over all entries, or `None` when empty.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let s = self.features.as_slice();
        if s.is_empty() {
            return None;
        }
        Some(
            s.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        )
    }
}

/// Final linear layer: `logits = features · weightᵀ + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    weight: Matrix,
    bias: Vec<f64>,
    class_ids: Vec<i32>,
}

impl HeadWeights {
    pub fn new(weight: Matrix, bias: Vec<f64>, class_ids: Vec<i32>) -> Result<Self> {
        if weight.rows() != bias.len() || class_ids.len() != bias.len() {
            return Err(Error::Shape(format!(
                "head weight has {} rows, bias {} entries, {} class ids",
                weight.rows(),
                bias.len(),
                class_ids.len()
            )));
        }
        check_finite(&weight)?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("non-finite head bias".into()));
        }
        Ok(HeadWeights {
            weight,
            bias,
            class_ids,
        })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, features: &FeatureSet) -> Result<Matrix> {
        features
            .matrix()
            .affine_transposed(&self.weight, &self.bias)
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
        let cols = m.cols().max(1);
        return Err(Error::NonFinite {
            row: pos / cols,
            col: pos % cols,
        });
    }
    Ok(())
}

/// Splits `d` into the rows whose label is in `classes` and the rest. Both
/// parts keep the original row order and labels.
pub fn partition_by_class(
    d: &LabeledDataset,
    classes: &[i32],
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut wanted = classes.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if let Some(&bad) = wanted
        .iter()
        .find(|c| d.class_ids.binary_search(c).is_err())
    {
        return Err(Error::UnknownClass(bad));
    }
    let (sel, rest): (Vec<usize>, Vec<usize>) =
        (0..d.len()).partition(|&i| wanted.binary_search(&d.labels[i]).is_ok());
    let remaining: Vec<i32> = d
        .class_ids
        .iter()
        .copied()
        .filter(|c| wanted.binary_search(c).is_err())
        .collect();
    let build = |idx: &[usize], classes: Vec<i32>| LabeledDataset {
        inputs: d.inputs.select_rows(idx),
        labels: idx.iter().map(|&i| d.labels[i]).collect(),
        class_ids: classes,
        source_tag: d.source_tag.clone(),
    };
    Ok((build(&sel, wanted), build(&rest, remaining)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Dataset,
    Features,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: Kind,
    pub rows: u32,
    pub cols: u32,
    pub dtype: Dtype,
    pub labels_present: bool,
    pub class_ids: Vec<i32>,
    pub source_tag: String,
}

/// Anything that can be stored in an interchange file.
#[derive(Debug, Clone, PartialEq)]
pub enum Interchange {
    Dataset(LabeledDataset),
    Features(FeatureSet),
    Head(HeadWeights),
}

impl From<LabeledDataset> for Interchange {
    fn from(d: LabeledDataset) -> Self {
        Interchange::Dataset(d)
    }
}

impl From<FeatureSet> for Interchange {
    fn from(f: FeatureSet) -> Self {
        Interchange::Features(f)
    }
}

impl From<HeadWeights> for Interchange {
    fn from(h: HeadWeights) -> Self {
        Interchange::Head(h)
    }
}

impl Interchange {
    pub fn into_dataset(self) -> Result<LabeledDataset> {
        match self {
            Interchange::Dataset(d) => Ok(d),
            other => Err(Error::Invalid(format!(
                "expected a dataset file, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn into_features(self) -> Result<FeatureSet> {
        match self {
            Interchange::Features(f) => Ok(f),
            other => Err(Error::Invalid(format!(
                "expected a features file, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn into_head(self) -> Result<HeadWeights> {
        match self {
            Interchange::Head(h) => Ok(h),
            other => Err(Error::Invalid(format!(
                "expected a head file, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Interchange::Dataset(_) => Kind::Dataset,
            Interchange::Features(_) => Kind::Features,
            Interchange::Head(_) => Kind::Head,
        }
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Invalid(format!("{what} = {v} overflows a 32-bit field")))
}

/// Serializes `content` to interchange bytes.
pub fn encode(content: &Interchange, dtype: Dtype) -> Result<Vec<u8>> {
    let (kind, values, cols, labels, class_ids, tag): (_, Vec<f64>, _, _, _, _) = match content {
        Interchange::Dataset(d) => (
            Kind::Dataset,
            d.inputs.as_slice().to_vec(),
            d.dim(),
            Some(d.labels.as_slice()),
            d.class_ids.clone(),
            d.source_tag.clone(),
        ),
        Interchange::Features(f) => {
            let class_ids = f
                .labels
                .as_ref()
                .map(|l| {
                    let mut c = l.clone();
                    c.sort_unstable();
                    c.dedup();
                    c
                })
                .unwrap_or_default();
            (
                Kind::Features,
                f.features.as_slice().to_vec(),
                f.dim(),
                f.labels.as_deref(),
                class_ids,
                f.source_tag.clone(),
            )
        }
        Interchange::Head(h) => {
            let mut v = Vec::with_capacity(h.bias.len() * (h.feature_dim() + 1));
            for (r, b) in h.weight.row_iter().zip(&h.bias) {
                v.extend_from_slice(r);
                v.push(*b);
            }
            (
                Kind::Head,
                v,
                h.feature_dim() + 1,
                None,
                h.class_ids.clone(),
                String::new(),
            )
        }
    };
    let rows = values.len().checked_div(cols).unwrap_or(0);
    let header = Header {
        kind,
        rows: to_u32(rows, "rows")?,
        cols: to_u32(cols, "cols")?,
        dtype,
        labels_present: labels.is_some(),
        class_ids,
        source_tag: tag,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    if header_bytes.len() > MAX_HEADER_BYTES {
        return Err(Error::Header(format!(
            "header is {} bytes, limit {MAX_HEADER_BYTES}",
            header_bytes.len()
        )));
    }
    let payload_len = values.len() * dtype.width() + labels.map_or(0, |l| 4 * l.len());
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header_bytes.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(header_bytes.len(), "header_len")?.to_le_bytes());
    out.extend_from_slice(&header_bytes);
    match dtype {
        Dtype::F64 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    if let Some(l) = labels {
        l.iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    Ok(out)
}

/// Parses interchange bytes. `f32` payloads are promoted to `f64`.
pub fn decode(bytes: &[u8]) -> std::result::Result<Interchange, DecodeError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(DecodeError::Other(Error::Header(
            "missing header length".into(),
        )));
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    if header_len > MAX_HEADER_BYTES {
        return Err(DecodeError::Other(Error::Header(format!(
            "header length {header_len} exceeds {MAX_HEADER_BYTES}"
        ))));
    }
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(DecodeError::Other(Error::Header("truncated header".into())));
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])
        .map_err(|e| DecodeError::Other(Error::Header(e.to_string())))?;
    let payload = &rest[header_len..];
    let (rows, cols) = (header.rows as usize, header.cols as usize);
    let n = rows * cols;
    let expected = n * header.dtype.width() + if header.labels_present { 4 * rows } else { 0 };
    if payload.len() != expected {
        return Err(DecodeError::Other(Error::LengthMismatch {
            expected,
            found: payload.len(),
        }));
    }
    let w = header.dtype.width();
    let values: Vec<f64> = match header.dtype {
        Dtype::F64 => payload[..n * w]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload[..n * w]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(DecodeError::Other(Error::NonFinite {
            row: pos / cols.max(1),
            col: pos % cols.max(1),
        }));
    }
    let labels: Option<Vec<i32>> = header.labels_present.then(|| {
        payload[n * w..]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    });
    let matrix = Matrix::from_vec(rows, cols, values).map_err(DecodeError::Other)?;
    let content = match header.kind {
        Kind::Dataset => {
            let labels = labels.ok_or_else(|| {
                DecodeError::Other(Error::Header("dataset file without labels".into()))
            })?;
            Interchange::Dataset(
                LabeledDataset::with_classes(matrix, labels, header.class_ids)
                    .map_err(DecodeError::Other)?
                    .tagged(header.source_tag),
            )
        }
        Kind::Features => {
            let mut f = FeatureSet::new(matrix)
                .map_err(DecodeError::Other)?
                .tagged(header.source_tag);
            if let Some(l) = labels {
                f = f.with_labels(l).map_err(DecodeError::Other)?;
            }
            Interchange::Features(f)
        }
        Kind::Head => {
            if cols < 2 {
                return Err(DecodeError::Other(Error::Header(
                    "head files need at least one weight column plus bias".into(),
                )));
            }
            let mut weight = Matrix::zeros(rows, cols - 1);
            let mut bias = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = matrix.row(r);
                weight.row_mut(r).copy_from_slice(&row[..cols - 1]);
                bias.push(row[cols - 1]);
            }
            Interchange::Head(
                HeadWeights::new(weight, bias, header.class_ids).map_err(DecodeError::Other)?,
            )
        }
    };
    Ok(content)
}

/// Decoding failure before a path is attached.
#[derive(Debug)]
pub enum DecodeError {
    BadMagic,
    Other(Error),
}

impl DecodeError {
    fn at(self, path: &Path) -> Error {
        match self {
            DecodeError::BadMagic => Error::BadMagic(path.to_path_buf()),
            DecodeError::Other(e) => e,
        }
    }
}

pub fn write_interchange(path: &Path, content: &Interchange) -> Result<()> {
    write_interchange_as(path, content, Dtype::F64)
}

/// Writes with an explicit payload precision. `F32` rounds values.
pub fn write_interchange_as(path: &Path, content: &Interchange, dtype: Dtype) -> Result<()> {
    let bytes = encode(content, dtype)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_interchange(path: &Path) -> Result<Interchange> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_class() -> LabeledDataset {
        let labels: Vec<i32> = (0..50).map(|i| i * 7 % 10).collect();
        let inputs = Matrix::from_vec(50, 2, (0..100).map(|v| v as f64).collect()).unwrap();
        LabeledDataset::new(inputs, labels).unwrap()
    }

    #[test]
    fn two_by_two_feature_file_layout() {
        let f =
            FeatureSet::new(Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap()).unwrap();
        let bytes = encode(&f.clone().into(), Dtype::F64).unwrap();
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        assert_eq!(&bytes[..5], b"OODF1");
        assert_eq!(bytes.len(), 5 + 4 + header_len + 32);
        let back = decode(&bytes).unwrap().into_features().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let d = LabeledDataset::with_classes(Matrix::zeros(0, 3), vec![], vec![]).unwrap();
        let back = decode(&encode(&d.clone().into(), Dtype::F64).unwrap())
            .unwrap()
            .into_dataset()
            .unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back, d);
    }

    #[test]
    fn truncated_payload_is_length_mismatch() {
        let bytes = encode(&ten_class().into(), Dtype::F64).unwrap();
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(
            err,
            DecodeError::Other(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn nan_entry_rejected_with_position() {
        let f = FeatureSet::new(Matrix::zeros(3, 4)).unwrap();
        let mut bytes = encode(&f.into(), Dtype::F64).unwrap();
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        // row 2, col 1
        let off = 9 + header_len + (2 * 4 + 1) * 8;
        bytes[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        match decode(&bytes).unwrap_err() {
            DecodeError::Other(Error::NonFinite { row, col }) => assert_eq!((row, col), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode(&ten_class().into(), Dtype::F64).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(DecodeError::BadMagic)));
    }

    #[test]
    fn unknown_kind_rejected() {
        let header = br#"{"kind":"tensor","rows":0,"cols":1,"dtype":"f64","labels_present":false,"class_ids":[],"source_tag":""}"#;
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        assert!(matches!(
            decode(&bytes),
            Err(DecodeError::Other(Error::Header(_)))
        ));
    }

    #[test]
    fn f32_payload_promotes_exactly() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11);
        let raw: Vec<f32> = (0..100)
            .map(|_| rng.random::<f32>() * 200.0 - 100.0)
            .collect();
        let f = FeatureSet::new(
            Matrix::from_vec(10, 10, raw.iter().map(|&v| v as f64).collect()).unwrap(),
        )
        .unwrap();
        let bytes = encode(&f.into(), Dtype::F32).unwrap();
        let back = decode(&bytes).unwrap().into_features().unwrap();
        for (a, b) in raw.iter().zip(back.matrix().as_slice()) {
            assert_eq!((*a as f64).to_bits(), b.to_bits());
            assert_eq!(*b as f32, *a);
        }
    }

    #[test]
    fn head_round_trip_keeps_bias_column() {
        let h = HeadWeights::new(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(),
            vec![0.5, -0.5, 1.5],
            vec![2, 4, 9],
        )
        .unwrap();
        let back = decode(&encode(&h.clone().into(), Dtype::F64).unwrap())
            .unwrap()
            .into_head()
            .unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn oversized_header_rejected() {
        let d = ten_class().tagged("x".repeat(MAX_HEADER_BYTES));
        assert!(matches!(
            encode(&d.into(), Dtype::F64),
            Err(Error::Header(_))
        ));
    }

    #[test]
    fn partition_edges() {
        let d = ten_class();
        let (sel, rest) = partition_by_class(&d, &[]).unwrap();
        assert!(sel.is_empty());
        assert_eq!(rest, d);
        let (sel, rest) = partition_by_class(&d, d.class_ids()).unwrap();
        assert_eq!(sel, d);
        assert!(rest.is_empty());
    }

    #[test]
    fn partition_counts_selected_labels() {
        let d = ten_class();
        let expected = d.labels().iter().filter(|&&l| l == 3 || l == 7).count();
        let (sel, rest) = partition_by_class(&d, &[3, 7]).unwrap();
        assert_eq!(sel.len(), expected);
        assert_eq!(rest.len(), d.len() - expected);
        assert_eq!(sel.class_ids(), &[3, 7]);
        assert!(rest.labels().iter().all(|&l| l != 3 && l != 7));
    }

    #[test]
    fn partition_rejects_unknown_class() {
        assert!(matches!(
            partition_by_class(&ten_class(), &[42]),
            Err(Error::UnknownClass(42))
        ));
    }

    #[test]
    fn dataset_invariants_enforced() {
        let m = Matrix::zeros(2, 2);
        assert!(LabeledDataset::with_classes(m.clone(), vec![0, 5], vec![0, 1]).is_err());
        assert!(LabeledDataset::with_classes(m.clone(), vec![0, 1], vec![1, 0]).is_err());
        assert!(LabeledDataset::new(Matrix::zeros(2, 0), vec![0, 1]).is_err());
        assert!(LabeledDataset::new(m, vec![0]).is_err());
    }
}
