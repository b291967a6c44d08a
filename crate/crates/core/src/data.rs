//! Tabular datasets, CSV ingestion, seeded splitting and the Gaussian-mixture benchmark.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Name of the optional identifier column recognised by [`load_csv`].
pub const ID_COLUMN: &str = "id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
}

impl Instance {
    pub fn new(id: impl Into<String>, features: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            features,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Ordered, duplicate-free class names. Position defines the class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::TooFewLabels(labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label '{l}'")));
            }
        }
        Ok(Self(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.0[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    /// Appends a label unless already present and returns its index.
    pub fn extend_with(&mut self, label: &str) -> usize {
        match self.index_of(label) {
            Some(i) => i,
            None => {
                self.0.push(label.to_string());
                self.0.len() - 1
            }
        }
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.0
    }
}

/// Labeled feature matrix. Immutable once built; share by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    label_set: LabelSet,
    feature_names: Vec<String>,
    instances: Vec<Instance>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        label_set: LabelSet,
        feature_names: Vec<String>,
        instances: Vec<Instance>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: instances.len(),
                right: labels.len(),
            });
        }
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        for (inst, &y) in instances.iter().zip(&labels) {
            if inst.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: inst.dim(),
                });
            }
            if y >= label_set.len() {
                return Err(Error::LabelOutOfRange {
                    index: y,
                    count: label_set.len(),
                });
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "instance '{}' has non-finite features",
                    inst.id
                )));
            }
        }
        Ok(Self {
            label_set,
            feature_names,
            instances,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Instance, usize)> + '_ {
        self.instances.iter().zip(self.labels.iter().copied())
    }

    pub fn find(&self, id: &str) -> Option<(&Instance, usize)> {
        self.iter().find(|(inst, _)| inst.id == id)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order, with the same schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            label_set: self.label_set.clone(),
            feature_names: self.feature_names.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows of one class, keeping the full label set.
    pub fn filter_class(&self, class: usize) -> Dataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == class)
            .collect();
        self.subset(&idx)
    }

    /// Same rows under a relabelled schema (used when extending the label set).
    /// Re-indexes labels by name into `label_set`, which must contain every
    /// label of this dataset.
    pub fn align_to(&self, label_set: &LabelSet) -> Result<Dataset> {
        let map = self
            .label_set
            .names()
            .iter()
            .map(|n| {
                label_set
                    .index_of(n)
                    .ok_or_else(|| Error::UnknownLabel(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            label_set.clone(),
            self.feature_names.clone(),
            self.instances.clone(),
            self.labels.iter().map(|&y| map[y]).collect(),
        )
    }

    /// Per-feature mean and population standard deviation.
    pub fn feature_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for inst in &self.instances {
            for (m, v) in mean.iter_mut().zip(&inst.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for inst in &self.instances {
            for j in 0..d {
                let c = inst.features[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        (mean, std)
    }
}

/// Rows of a labelled CSV before label indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRows {
    pub feature_names: Vec<String>,
    pub instances: Vec<Instance>,
    pub labels: Vec<String>,
}

/// Reads `id`, feature and label columns without building a label set, so a
/// single-class file is accepted. With `require_label == false` a missing
/// label column yields empty labels.
pub fn read_rows<R: Read>(reader: R, label_column: &str, require_label: bool) -> Result<RawRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_pos = header.iter().position(|h| h == label_column);
    if label_pos.is_none() && require_label {
        return Err(Error::MissingLabelColumn(label_column.to_string()));
    }
    let id_pos = header
        .iter()
        .position(|h| h == ID_COLUMN)
        .filter(|&p| Some(p) != label_pos);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != label_pos && Some(c) != id_pos)
        .collect();

    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row,
                    column: header[c].clone(),
                    value: cell.to_string(),
                })?;
            features.push(v);
        }
        let id = match id_pos {
            Some(p) => rec.get(p).unwrap_or("").to_string(),
            None => row.to_string(),
        };
        instances.push(Instance { id, features });
        labels.push(label_pos.and_then(|p| rec.get(p)).unwrap_or("").to_string());
    }
    Ok(RawRows {
        feature_names: feature_cols.iter().map(|&c| header[c].clone()).collect(),
        instances,
        labels,
    })
}

/// Parses a dataset from CSV text.
///
/// The header names every column. `label_column` holds class names; a column
/// named `id` (if present) supplies instance ids, otherwise ids are the 1-based
/// data row numbers. All other columns are features and must be finite reals.
pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let raw = read_rows(reader, label_column, true)?;
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let labels: Vec<usize> = raw
        .labels
        .into_iter()
        .map(|label| {
            *index.entry(label.clone()).or_insert_with(|| {
                names.push(label);
                names.len() - 1
            })
        })
        .collect();
    if names.len() < 2 {
        return Err(Error::TooFewLabels(names.len()));
    }
    Dataset::new(
        LabelSet::new(names)?,
        raw.feature_names,
        raw.instances,
        labels,
    )
}

/// Writes rows that all carry the same label, in the [`write_csv`] layout.
pub fn write_rows<W: Write>(
    feature_names: &[String],
    instances: &[Instance],
    label: &str,
    label_column: &str,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(feature_names.iter().cloned());
    header.push(label_column.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for inst in instances {
        if inst.dim() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                found: inst.dim(),
            });
        }
        let mut rec = Vec::with_capacity(inst.dim() + 2);
        rec.push(inst.id.clone());
        rec.extend(inst.features.iter().map(|v| v.to_string()));
        rec.push(label.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

/// Writes `id, <features...>, <label_column>`; floats use shortest round-trip form.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(ds.feature_names.iter().cloned());
    header.push(label_column.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (inst, y) in ds.iter() {
        let mut rec = Vec::with_capacity(ds.dim() + 2);
        rec.push(inst.id.clone());
        rec.extend(inst.features.iter().map(|v| v.to_string()));
        rec.push(ds.label_set.name(y).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file), label_column)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Relative sizes of (train, calibration, test).
    pub ratios: [f64; 3],
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    /// The 2:1:1 train/calibration/test split.
    pub fn standard(seed: u64) -> Self {
        Self {
            ratios: [2.0, 1.0, 1.0],
            seed,
            stratified: true,
        }
    }
}

/// Splits `n` items into three parts proportional to `ratios`.
///
/// Floors first; leftovers go to train, then calibration, then test. When
/// `cover_nonempty` is set, every split with a positive ratio receives at least
/// one item, borrowed from the currently largest part.
fn quotas(n: usize, ratios: &[f64; 3], cover_nonempty: bool) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let mut q = [0usize; 3];
    for i in 0..3 {
        q[i] = ((n as f64) * ratios[i] / total).floor() as usize;
    }
    let mut left = n - q.iter().sum::<usize>();
    let nonempty: Vec<usize> = (0..3).filter(|&i| ratios[i] > 0.0).collect();
    let mut k = 0;
    while left > 0 {
        q[nonempty[k % nonempty.len()]] += 1;
        left -= 1;
        k += 1;
    }
    if cover_nonempty {
        for &i in &nonempty {
            if q[i] == 0 {
                let donor = (0..3)
                    .max_by_key(|&j| (q[j], std::cmp::Reverse(j)))
                    .unwrap();
                if q[donor] > 1 {
                    q[donor] -= 1;
                    q[i] += 1;
                }
            }
        }
    }
    q
}

/// Seeded three-way split into (train, calibration, test).
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if spec.ratios.iter().any(|r| !r.is_finite() || *r < 0.0)
        || spec.ratios.iter().sum::<f64>() <= 0.0
    {
        return Err(Error::invalid(
            "split ratios must be nonnegative with a positive sum",
        ));
    }
    let mut rng = RngStream::new(spec.seed, 0);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let n_nonempty = spec.ratios.iter().filter(|r| **r > 0.0).count();
        let counts = ds.class_counts();
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 && c < n_nonempty {
                return Err(Error::ClassTooSmall {
                    label: ds.label_set.name(k).to_string(),
                    count: c,
                    needed: n_nonempty,
                });
            }
        }
        (0..ds.n_classes())
            .map(|k| (0..ds.len()).filter(|&i| ds.labels[i] == k).collect())
            .collect()
    } else {
        vec![(0..ds.len()).collect()]
    };
    for mut group in groups {
        if group.is_empty() {
            continue;
        }
        group.shuffle(&mut rng);
        let q = quotas(group.len(), &spec.ratios, spec.stratified);
        let mut start = 0;
        for (part, &size) in parts.iter_mut().zip(q.iter()) {
            part.extend_from_slice(&group[start..start + size]);
            start += size;
        }
    }
    let [mut a, mut b, mut c] = parts;
    a.sort_unstable();
    b.sort_unstable();
    c.sort_unstable();
    Ok((ds.subset(&a), ds.subset(&b), ds.subset(&c)))
}

/// Center of class `k` in the benchmark mixture.
///
/// Class `k` sits on axis `k mod d`; passes over the axes alternate sign and
/// the magnitude grows every two passes, so no two classes share a center when
/// `separation > 0`.
pub fn benchmark_center(k: usize, d: usize, separation: f64) -> Vec<f64> {
    let pass = k / d;
    let sign = if pass.is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = (1 + pass / 2) as f64;
    let mut c = vec![0.0; d];
    c[k % d] = sign * scale * separation;
    c
}

/// Isotropic unit-variance Gaussian mixture, one component per class, with
/// classes named `c0, c1, ...`.
pub fn synth_benchmark(
    n_per_class: &[usize],
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    let labels: Vec<String> = (0..n_per_class.len()).map(|k| format!("c{k}")).collect();
    synth_benchmark_labeled(&labels, n_per_class, d, separation, seed)
}

pub fn synth_benchmark_labeled<S: AsRef<str>>(
    labels: &[S],
    n_per_class: &[usize],
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if labels.len() != n_per_class.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n_per_class.len(),
        });
    }
    if n_per_class.contains(&0) {
        return Err(Error::invalid("class counts must be positive"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid(
            "separation must be a finite nonnegative number",
        ));
    }
    let label_set = LabelSet::new(labels.iter().map(|s| s.as_ref().to_string()))?;
    let mut rng = RngStream::new(seed, 0);
    let mut instances = Vec::new();
    let mut ys = Vec::new();
    for (k, &n) in n_per_class.iter().enumerate() {
        let center = benchmark_center(k, d, separation);
        for _ in 0..n {
            let features = center
                .iter()
                .map(|c| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    c + e
                })
                .collect::<Vec<f64>>();
            instances.push(Instance::new(format!("x{}", instances.len()), features));
            ys.push(k);
        }
    }
    Dataset::new(
        label_set,
        (0..d).map(|j| format!("f{j}")).collect(),
        instances,
        ys,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, k: usize) -> Dataset {
        let labels: Vec<String> = (0..k).map(|i| format!("L{i}")).collect();
        let inst = (0..n)
            .map(|i| Instance::new(i.to_string(), vec![i as f64]))
            .collect();
        Dataset::new(
            LabelSet::new(labels).unwrap(),
            vec!["f".into()],
            inst,
            (0..n).map(|i| i % k).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let text = "a,b,label\n1,2,TF\n3,4,TI\n5,6.5,TF\n";
        let ds = read_csv(text.as_bytes(), "label").unwrap();
        assert_eq!(
            ds.label_set().names(),
            &["TF".to_string(), "TI".to_string()]
        );
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.instances()[2].features, vec![5.0, 6.5]);
        assert_eq!(ds.instances()[0].id, "1");
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let text = "a,b,label\n1,2,TF\n3,abc,TI\n";
        let err = read_csv(text.as_bytes(), "label").unwrap_err();
        match err {
            Error::BadCell { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let nan = "a,label\nNaN,TF\n1,TI\n";
        assert!(matches!(
            read_csv(nan.as_bytes(), "label"),
            Err(Error::BadCell { .. })
        ));
    }

    #[test]
    fn label_errors() {
        let text = "a,label\n1,TF\n2,TF\n";
        assert!(matches!(
            read_csv(text.as_bytes(), "label"),
            Err(Error::TooFewLabels(1))
        ));
        assert!(matches!(
            read_csv(text.as_bytes(), "class"),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(
            load_csv("/nonexistent/x.csv", "label"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn id_column_is_not_a_feature() {
        let text = "id,a,label\nq1,1,TF\nq2,2,TI\n";
        let ds = read_csv(text.as_bytes(), "label").unwrap();
        assert_eq!(ds.dim(), 1);
        assert_eq!(ds.instances()[1].id, "q2");
    }

    #[test]
    fn unstratified_exact_rounding() {
        let ds = toy(8, 2);
        let spec = SplitSpec {
            ratios: [2.0, 1.0, 1.0],
            seed: 1,
            stratified: false,
        };
        let (a, b, c) = split(&ds, &spec).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (4, 2, 2));
    }

    #[test]
    fn remainders_go_to_train_first() {
        assert_eq!(quotas(7, &[2.0, 1.0, 1.0], false), [4, 2, 1]);
        assert_eq!(quotas(5, &[1.0, 1.0, 1.0], false), [2, 2, 1]);
        assert_eq!(quotas(3, &[2.0, 1.0, 1.0], true), [1, 1, 1]);
    }

    #[test]
    fn stratified_small_class_error() {
        let labels = LabelSet::new(["a", "b"]).unwrap();
        let inst = (0..6)
            .map(|i| Instance::new(i.to_string(), vec![0.0]))
            .collect();
        let ds = Dataset::new(labels, vec!["f".into()], inst, vec![0, 0, 0, 0, 1, 1]).unwrap();
        let err = split(&ds, &SplitSpec::standard(0)).unwrap_err();
        assert!(matches!(
            err,
            Error::ClassTooSmall {
                count: 2,
                needed: 3,
                ..
            }
        ));
        assert!(matches!(
            split(&ds.subset(&[]), &SplitSpec::standard(0)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_separation_centers_coincide() {
        for k in 0..5 {
            assert!(benchmark_center(k, 2, 0.0).iter().all(|&c| c == 0.0));
        }
        let centers: Vec<_> = (0..6).map(|k| benchmark_center(k, 2, 1.0)).collect();
        for i in 0..6 {
            for j in 0..i {
                assert_ne!(centers[i], centers[j]);
            }
        }
    }

    #[test]
    fn synth_rejects_bad_arguments() {
        assert!(synth_benchmark(&[10, 0], 2, 1.0, 0).is_err());
        assert!(synth_benchmark(&[10, 10], 0, 1.0, 0).is_err());
        assert!(synth_benchmark(&[10, 10], 2, -1.0, 0).is_err());
    }
}
