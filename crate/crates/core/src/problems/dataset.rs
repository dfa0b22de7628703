//! Labeled datasets and the LibSVM text format.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::gaussian_vec;
use crate::rng::{Purpose, SeedStream};
use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Row-major `rows × cols`.
    Dense { rows: usize, cols: usize, data: Vec<f64> },
    Sparse(CsrMatrix),
}

/// Borrowed view of one feature row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse { indices: &'a [usize], values: &'a [f64] },
}

impl Row<'_> {
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            Row::Dense(r) => r.iter().zip(w).map(|(a, b)| a * b).sum(),
            Row::Sparse { indices, values } => indices.iter().zip(values).map(|(&k, v)| v * w[k]).sum(),
        }
    }

    /// `out += alpha * row`
    #[inline]
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        match *self {
            Row::Dense(r) => {
                for (o, v) in out.iter_mut().zip(r) {
                    *o += alpha * v;
                }
            }
            Row::Sparse { indices, values } => {
                for (&k, v) in indices.iter().zip(values) {
                    out[k] += alpha * v;
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match *self {
            Row::Dense(r) => r.iter().map(|v| v * v).sum(),
            Row::Sparse { values, .. } => values.iter().map(|v| v * v).sum(),
        }
    }

    pub fn to_dense(&self, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; cols];
        self.axpy_into(1.0, &mut out);
        out
    }
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Dense { rows, .. } => *rows,
            Features::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Features::Dense { cols, .. } => *cols,
            Features::Sparse(m) => m.cols,
        }
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match self {
            Features::Dense { cols, data, .. } => Row::Dense(&data[i * cols..(i + 1) * cols]),
            Features::Sparse(m) => {
                let (a, b) = (m.indptr[i], m.indptr[i + 1]);
                Row::Sparse { indices: &m.indices[a..b], values: &m.values[a..b] }
            }
        }
    }
}

/// Features plus dense class labels in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Features,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Original label value of each class id (sorted ascending).
    pub label_values: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(features: Features, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid("feature rows and labels disagree in length"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!("label {bad} outside [0, {class_count})")));
        }
        let label_values = (0..class_count as i64).collect();
        Ok(Self { features, labels, class_count, label_values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Sample indices of each class, in ascending order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn parse_label(tok: &str, line: usize) -> Result<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
        _ => Err(Error::Parse { line, message: format!("bad label {tok:?}") }),
    }
}

/// Parses LibSVM text: `label idx:value idx:value ...` with 1-based indices.
/// Blank lines and `#` comments are skipped; `qid:` tokens are ignored.
pub fn read_libsvm<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    let mut raw_labels = Vec::new();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label = parse_label(toks.next().unwrap(), lineno)?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            if tok.starts_with("qid:") {
                continue;
            }
            let (k, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: lineno, message: format!("expected index:value, got {tok:?}") })?;
            let k: usize = k
                .parse()
                .map_err(|_| Error::Parse { line: lineno, message: format!("bad index {k:?}") })?;
            if k == 0 {
                return Err(Error::Parse { line: lineno, message: "indices are 1-based".into() });
            }
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Parse { line: lineno, message: format!("bad value {v:?}") })?;
            entries.push((k - 1, v));
        }
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse { line: lineno, message: "duplicate feature index".into() });
        }
        for (k, v) in entries {
            max_index = max_index.max(k + 1);
            indices.push(k);
            values.push(v);
        }
        indptr.push(indices.len());
        raw_labels.push(label);
    }
    if raw_labels.is_empty() {
        return Err(Error::invalid("LibSVM input contains no samples"));
    }
    let distinct: BTreeSet<i64> = raw_labels.iter().copied().collect();
    let label_values: Vec<i64> = distinct.into_iter().collect();
    let labels = raw_labels
        .iter()
        .map(|l| label_values.binary_search(l).unwrap())
        .collect();
    Ok(LabeledDataset {
        features: Features::Sparse(CsrMatrix { cols: max_index, indptr, indices, values }),
        labels,
        class_count: label_values.len(),
        label_values,
    })
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    read_libsvm(BufReader::new(file))
}

/// Writes LibSVM text using the original label values. Sparse rows write
/// their stored entries; dense rows write non-zeros. Floats use the shortest
/// round-tripping representation.
pub fn write_libsvm<W: Write>(dataset: &LabeledDataset, mut w: W) -> Result<()> {
    for i in 0..dataset.len() {
        write!(w, "{}", dataset.label_values[dataset.labels[i]])?;
        match dataset.features.row(i) {
            Row::Dense(r) => {
                for (k, v) in r.iter().enumerate() {
                    if *v != 0.0 {
                        write!(w, " {}:{}", k + 1, v)?;
                    }
                }
            }
            Row::Sparse { indices, values } => {
                for (k, v) in indices.iter().zip(values) {
                    write!(w, " {}:{}", k + 1, v)?;
                }
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Gaussian-blob classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClassSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    /// Feature count, including the bias column when `bias` is set.
    pub features: usize,
    /// Standard deviation of the class centers.
    pub separation: f64,
    /// Standard deviation of within-class noise.
    pub noise: f64,
    pub bias: bool,
    pub seed: u64,
}

/// Dense dataset with samples ordered class by class.
pub fn synthetic_classification(spec: &SyntheticClassSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 || spec.samples_per_class == 0 || spec.features == 0 {
        return Err(Error::invalid("need at least 2 classes, 1 sample per class and 1 feature"));
    }
    let raw = if spec.bias { spec.features - 1 } else { spec.features };
    if raw == 0 {
        return Err(Error::invalid("bias column leaves no informative features"));
    }
    let mut rng = SeedStream::new(spec.seed).rng(Purpose::Generator, 2);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| gaussian_vec(&mut rng, raw).into_iter().map(|v| v * spec.separation).collect())
        .collect();
    let rows = spec.classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(rows * spec.features);
    let mut labels = Vec::with_capacity(rows);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let noise = gaussian_vec(&mut rng, raw);
            data.extend(center.iter().zip(&noise).map(|(m, e)| m + spec.noise * e));
            if spec.bias {
                data.push(1.0);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(Features::Dense { rows, cols: spec.features, data }, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let ds = read_libsvm("+1 1:0.5 3:2.0\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.feature_dim(), 3);
        assert_eq!(ds.features.row(0).to_dense(3), vec![0.5, 0.0, 2.0]);
        assert_eq!(ds.label_values, vec![1]);
    }

    #[test]
    fn labels_reindexed_in_sorted_order() {
        let ds = read_libsvm("3 1:1\n1 2:1\n2 1:1\n3 1:2\n".as_bytes()).unwrap();
        assert_eq!(ds.class_count, 3);
        assert_eq!(ds.labels, vec![2, 0, 1, 2]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_libsvm("1 1:0.5\n\n1 2=3\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_libsvm("1 0:1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_libsvm("x 1:1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_input_is_invalid() {
        assert!(matches!(read_libsvm("".as_bytes()), Err(Error::InvalidArgument(_))));
        assert!(matches!(read_libsvm("# only a comment\n\n".as_bytes()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn comments_and_qid_are_skipped() {
        let ds = read_libsvm("-1 qid:3 2:1.5 # trailing\n".as_bytes()).unwrap();
        assert_eq!(ds.features.row(0).to_dense(2), vec![0.0, 1.5]);
        assert_eq!(ds.label_values, vec![-1]);
    }

    #[test]
    fn dataset_rejects_out_of_range_label() {
        let f = Features::Dense { rows: 1, cols: 1, data: vec![1.0] };
        assert!(LabeledDataset::new(f, vec![2], 2).is_err());
    }

    #[test]
    fn synthetic_has_bias_and_labels() {
        let spec = SyntheticClassSpec {
            classes: 3,
            samples_per_class: 4,
            features: 3,
            separation: 1.0,
            noise: 0.5,
            bias: true,
            seed: 1,
        };
        let ds = synthetic_classification(&spec).unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.labels[4], 1);
        assert_eq!(ds.features.row(5).to_dense(3)[2], 1.0);
        assert_eq!(ds, synthetic_classification(&spec).unwrap());
    }
}
