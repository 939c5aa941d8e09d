//! Embedding matrices: file ingestion, serialization and synthetic blob generation.
//!
//! Two on-disk formats are supported.
//!
//! * CSV: one sample per line, `d` comma-separated decimal coordinates and an
//!   optional trailing integer label. No header line.
//! * raw_f32: magic `SUPC`, `u32` version (1), `u64` n, `u64` d, `u8` has_labels,
//!   then `n*d` little-endian `f32` values row-major, then `n` little-endian `u32`
//!   labels when `has_labels == 1`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const RAW_MAGIC: &[u8; 4] = b"SUPC";
pub const RAW_VERSION: u32 = 1;
const RAW_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    RawF32,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "raw_f32" | "raw-f32" | "raw" | "supc" => Ok(Format::RawF32),
            other => Err(Error::Argument(format!("unknown dataset format '{other}'"))),
        }
    }
}

impl Format {
    /// Guess from the file extension: `.csv` is CSV, anything else raw_f32.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::RawF32,
        }
    }
}

/// Whether a CSV file carries a trailing label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvLabels {
    /// Labels are present iff every row ends in a plain non-negative integer
    /// and rows have at least two fields.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    L2,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "l2" => Ok(Normalization::L2),
            other => Err(Error::Argument(format!("unknown normalization '{other}'"))),
        }
    }
}

/// An `n x d` matrix of finite embedding coordinates with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    embeddings: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

impl EmbeddingSet {
    /// Validates finiteness, shape and label range. When `labels` is given and
    /// `num_classes` is not, the class count is `max(label) + 1`.
    pub fn new(
        embeddings: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if embeddings.rows() == 0 {
            return Err(Error::Argument("embedding set must contain at least one sample".into()));
        }
        if embeddings.cols() == 0 {
            return Err(Error::Argument("embedding dimensionality must be at least 1".into()));
        }
        for (row, values) in embeddings.iter_rows().enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    row,
                    message: format!("non-finite coordinate {} in column {col}", values[col]),
                });
            }
        }
        let num_classes = match (&labels, num_classes) {
            (None, k) => k,
            (Some(labels), k) => {
                if labels.len() != embeddings.rows() {
                    return Err(Error::Argument(format!(
                        "{} labels for {} samples",
                        labels.len(),
                        embeddings.rows()
                    )));
                }
                let max = labels.iter().copied().max().unwrap_or(0);
                let k = k.unwrap_or(max + 1);
                if let Some(row) = labels.iter().position(|&l| l >= k) {
                    return Err(Error::Validation {
                        row,
                        message: format!("label {} outside [0, {k})", labels[row]),
                    });
                }
                Some(k)
            }
        };
        if num_classes == Some(0) {
            return Err(Error::Argument("num_classes must be positive".into()));
        }
        Ok(Self {
            embeddings,
            labels,
            num_classes,
        })
    }

    pub fn unlabeled(embeddings: Matrix) -> Result<Self> {
        Self::new(embeddings, None, None)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// The same embeddings with labels dropped.
    pub fn without_labels(&self) -> EmbeddingSet {
        EmbeddingSet {
            embeddings: self.embeddings.clone(),
            labels: None,
            num_classes: None,
        }
    }

    /// Rows `indices` in the given order; labels and class count are carried over.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            embeddings: self.embeddings.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    pub fn normalized(&self, mode: Normalization) -> EmbeddingSet {
        match mode {
            Normalization::None => self.clone(),
            Normalization::L2 => {
                let mut m = self.embeddings.clone();
                for i in 0..m.rows() {
                    let row = m.row_mut(i);
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|v| *v /= norm);
                    }
                }
                EmbeddingSet {
                    embeddings: m,
                    labels: self.labels.clone(),
                    num_classes: self.num_classes,
                }
            }
        }
    }

    /// Per-class sample counts, if labeled.
    pub fn class_counts(&self) -> Option<Vec<usize>> {
        let labels = self.labels.as_ref()?;
        let mut counts = vec![0; self.num_classes.unwrap_or(0)];
        for &l in labels {
            counts[l] += 1;
        }
        Some(counts)
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let d = self.dim();
        let label_bytes = if self.labels.is_some() { 4 * n } else { 0 };
        let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * n * d + label_bytes);
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&RAW_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.push(u8::from(self.labels.is_some()));
        for &v in self.embeddings.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for &l in labels {
                out.extend_from_slice(&(l as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self> {
        let parse_err = |offset: usize, message: String| Error::Parse {
            location: format!("byte offset {offset}"),
            message,
        };
        if bytes.len() < RAW_HEADER_LEN {
            return Err(parse_err(
                bytes.len(),
                format!("truncated header ({} of {RAW_HEADER_LEN} bytes)", bytes.len()),
            ));
        }
        if &bytes[0..4] != RAW_MAGIC {
            return Err(parse_err(0, "bad magic, expected \"SUPC\"".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != RAW_VERSION {
            return Err(parse_err(4, format!("unsupported format version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let has_labels = match bytes[24] {
            0 => false,
            1 => true,
            other => return Err(parse_err(24, format!("has_labels flag must be 0 or 1, got {other}"))),
        };
        if n == 0 {
            return Err(parse_err(8, "header declares zero samples".into()));
        }
        if d == 0 {
            return Err(parse_err(16, "header declares zero dimensions".into()));
        }
        let values = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| parse_err(8, "header shape overflows".into()))?;
        let labels_len = if has_labels { n * 4 } else { 0 };
        let expected = (RAW_HEADER_LEN as u64)
            .checked_add(values)
            .and_then(|v| v.checked_add(labels_len))
            .ok_or_else(|| parse_err(8, "header shape overflows".into()))?;
        if bytes.len() as u64 != expected {
            return Err(parse_err(
                bytes.len().min(expected as usize),
                format!("expected {expected} bytes for n={n}, d={d}, found {}", bytes.len()),
            ));
        }
        let (n, d) = (n as usize, d as usize);
        let body = &bytes[RAW_HEADER_LEN..RAW_HEADER_LEN + n * d * 4];
        let data: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let labels = has_labels.then(|| {
            bytes[RAW_HEADER_LEN + n * d * 4..]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
                .collect::<Vec<_>>()
        });
        EmbeddingSet::new(Matrix::from_vec(n, d, data), labels, None)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let row = self.point(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // Debug formatting always keeps a decimal point and round-trips exactly.
                out.push_str(&format!("{v:?}"));
            }
            if let Some(labels) = &self.labels {
                out.push_str(&format!(",{}", labels[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str, labels_mode: CsvLabels) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            rows.push((lineno + 1, line.split(',').map(str::trim).collect()));
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                location: "line 1".into(),
                message: "no samples in CSV input".into(),
            });
        }
        let is_label = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        let has_labels = match labels_mode {
            CsvLabels::Present => true,
            CsvLabels::Absent => false,
            CsvLabels::Auto => rows
                .iter()
                .all(|(_, f)| f.len() >= 2 && is_label(f[f.len() - 1])),
        };
        let width = rows[0].1.len();
        let d = if has_labels { width - 1 } else { width };
        if d == 0 {
            return Err(Error::Parse {
                location: format!("line {}", rows[0].0),
                message: "row has no coordinate columns".into(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(if has_labels { rows.len() } else { 0 });
        for (row, (lineno, fields)) in rows.iter().enumerate() {
            if fields.len() != width {
                return Err(Error::DimensionMismatch {
                    row,
                    expected: width,
                    found: fields.len(),
                });
            }
            for (col, field) in fields[..d].iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    location: format!("line {lineno}, column {}", col + 1),
                    message: format!("'{field}' is not a number"),
                })?;
                data.push(v);
            }
            if has_labels {
                let field = fields[d];
                let l: usize = field.parse().map_err(|_| Error::Parse {
                    location: format!("line {lineno}, column {}", d + 1),
                    message: format!("'{field}' is not a class label"),
                })?;
                labels.push(l);
            }
        }
        EmbeddingSet::new(
            Matrix::from_vec(rows.len(), d, data),
            has_labels.then_some(labels),
            None,
        )
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let bytes = match format {
            Format::Csv => self.to_csv_string().into_bytes(),
            Format::RawF32 => self.to_raw_bytes(),
        };
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn load_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            EmbeddingSet::from_csv_str(&text, CsvLabels::Auto)
        }
        Format::RawF32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            EmbeddingSet::from_raw_bytes(&bytes)
        }
    }
}

/// Long-tail class-size profile with exponential decay over class index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub num_classes: usize,
    pub max_per_class: usize,
    pub imbalance_factor: f64,
}

impl ImbalanceProfile {
    pub fn new(num_classes: usize, max_per_class: usize, imbalance_factor: f64) -> Self {
        Self {
            num_classes,
            max_per_class,
            imbalance_factor,
        }
    }

    /// `round(max_per_class * factor^(-c / (num_classes - 1)))` for each class `c`.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.max_per_class == 0 {
            return Err(Error::Config("max_per_class must be positive".into()));
        }
        if !(self.imbalance_factor.is_finite() && self.imbalance_factor >= 1.0) {
            return Err(Error::Config(format!(
                "imbalance factor must be finite and >= 1, got {}",
                self.imbalance_factor
            )));
        }
        if self.num_classes == 1 {
            return Ok(vec![self.max_per_class]);
        }
        let last = (self.num_classes - 1) as f64;
        let counts: Vec<usize> = (0..self.num_classes)
            .map(|c| {
                let scale = self.imbalance_factor.powf(-(c as f64) / last);
                (self.max_per_class as f64 * scale).round() as usize
            })
            .collect();
        if let Some(c) = counts.iter().position(|&k| k == 0) {
            return Err(Error::Config(format!(
                "imbalance profile leaves class {c} with no samples"
            )));
        }
        Ok(counts)
    }
}

/// Parameters of [`make_blobs`] besides the class profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    pub dim: usize,
    pub center_spread: f64,
    pub cluster_std: f64,
    pub seed: u64,
}

/// Isotropic Gaussian blobs, one per class, sized by `profile`.
///
/// Class centers are drawn uniformly from `[-center_spread, center_spread]^dim`
/// (all centers first, in class order), then samples are emitted class by class.
pub fn make_blobs(profile: &ImbalanceProfile, params: &BlobParams) -> Result<EmbeddingSet> {
    let BlobParams {
        dim,
        center_spread,
        cluster_std,
        seed,
    } = *params;
    if dim == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if !(center_spread.is_finite() && center_spread > 0.0) {
        return Err(Error::Config("center_spread must be positive".into()));
    }
    if !(cluster_std.is_finite() && cluster_std > 0.0) {
        return Err(Error::Config("cluster_std must be positive".into()));
    }
    let counts = profile.class_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..profile.num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| rng.gen_range(-center_spread..=center_spread))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, cluster_std).expect("positive std");
    let total: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (class, (&count, center)) in counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            data.extend(center.iter().map(|&c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    EmbeddingSet::new(
        Matrix::from_vec(total, dim, data),
        Some(labels),
        Some(profile.num_classes),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_label_column() {
        let set = EmbeddingSet::from_csv_str("0.0,0.0,0\n1.0,1.0,1\n", CsvLabels::Auto).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), 2);
        assert_eq!(set.labels(), Some(&[0, 1][..]));
        assert_eq!(set.point(1), &[1.0, 1.0]);
    }

    #[test]
    fn csv_without_labels() {
        let set = EmbeddingSet::from_csv_str("0.5,0.25\n1.5,1.0\n", CsvLabels::Auto).unwrap();
        assert_eq!(set.dim(), 2);
        assert!(set.labels().is_none());
    }

    #[test]
    fn csv_nan_is_validation_error() {
        let err = EmbeddingSet::from_csv_str("0.0,0.0\nnan,1.0\n", CsvLabels::Auto).unwrap_err();
        assert!(matches!(err, Error::Validation { row: 1, .. }), "{err}");
    }

    #[test]
    fn csv_ragged_rows() {
        let err = EmbeddingSet::from_csv_str("0.0,0.0\n1.0,1.0,2.0\n", CsvLabels::Absent).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                row: 1,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn csv_garbage_names_line() {
        let err = EmbeddingSet::from_csv_str("0.0,0.0\n1.0,abc\n", CsvLabels::Absent).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.contains("line 2"), "{location}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn raw_header_driven_shape() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SUPC");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&4u64.to_le_bytes());
        bytes.push(0);
        for i in 0..12 {
            bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        let set = EmbeddingSet::from_raw_bytes(&bytes).unwrap();
        assert_eq!((set.len(), set.dim()), (3, 4));
        assert!(set.labels().is_none());
        assert_eq!(set.point(2)[3], 5.5);
    }

    #[test]
    fn raw_rejects_bad_magic_and_truncation() {
        let set = EmbeddingSet::new(Matrix::from_rows(&[[1.0, 2.0]]), Some(vec![0]), None).unwrap();
        let mut bytes = set.to_raw_bytes();
        bytes.pop();
        assert!(matches!(
            EmbeddingSet::from_raw_bytes(&bytes),
            Err(Error::Parse { .. })
        ));
        let mut bad = set.to_raw_bytes();
        bad[0] = b'X';
        assert!(matches!(EmbeddingSet::from_raw_bytes(&bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn raw_rejects_non_finite() {
        let mut bytes = EmbeddingSet::new(Matrix::from_rows(&[[1.0], [2.0]]), None, None)
            .unwrap()
            .to_raw_bytes();
        let off = RAW_HEADER_LEN + 4;
        bytes[off..off + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            EmbeddingSet::from_raw_bytes(&bytes),
            Err(Error::Validation { row: 1, .. })
        ));
    }

    #[test]
    fn label_out_of_range() {
        let err = EmbeddingSet::new(Matrix::from_rows(&[[1.0], [2.0]]), Some(vec![0, 3]), Some(2))
            .unwrap_err();
        assert!(matches!(err, Error::Validation { row: 1, .. }));
    }

    #[test]
    fn balanced_profile() {
        let set = make_blobs(
            &ImbalanceProfile::new(2, 10, 1.0),
            &BlobParams {
                dim: 2,
                center_spread: 5.0,
                cluster_std: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(set.len(), 20);
        assert_eq!(set.class_counts().unwrap(), vec![10, 10]);
    }

    #[test]
    fn long_tail_profile_endpoints() {
        let counts = ImbalanceProfile::new(10, 500, 50.0).class_counts().unwrap();
        assert_eq!(counts[0], 500);
        assert_eq!(counts[9], 10);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn empty_class_is_config_error() {
        let err = ImbalanceProfile::new(3, 10, 100.0).class_counts().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn blobs_are_deterministic() {
        let params = BlobParams {
            dim: 3,
            center_spread: 2.0,
            cluster_std: 0.3,
            seed: 99,
        };
        let profile = ImbalanceProfile::new(4, 30, 5.0);
        let a = make_blobs(&profile, &params).unwrap();
        let b = make_blobs(&profile, &params).unwrap();
        assert_eq!(a.to_raw_bytes(), b.to_raw_bytes());
        assert_eq!(a, b);
    }

    #[test]
    fn l2_normalization_gives_unit_rows() {
        let set = EmbeddingSet::unlabeled(Matrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]])).unwrap();
        let n = set.normalized(Normalization::L2);
        assert_eq!(n.point(0), &[0.6, 0.8]);
        assert_eq!(n.point(1), &[0.0, 0.0]);
    }
}
