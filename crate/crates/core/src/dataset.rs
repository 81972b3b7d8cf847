//! Embedding datasets: loading, synthetic generation, subsetting and
//! class-imbalance statistics.
//!
//! A [`Dataset`] is a dense feature matrix (one row per sample) with an
//! integer label and a stable sample id per row. Ids are strictly ascending
//! in row order, so every subsetting operation keeps rows in id order and
//! lookups by id are a binary search.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bisection steps used when solving the imbalance profile slope.
const SLOPE_BISECTION_STEPS: usize = 50;

/// Largest accepted gap between the requested and achieved imbalance ratio.
pub const IMBALANCE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    sample_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking every invariant.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        sample_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::NoSamples);
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "feature dimension must be >= 1".into(),
            ));
        }
        if n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_classes must be >= 2, got {n_classes}"
            )));
        }
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if labels.len() != n {
                    labels.len()
                } else {
                    sample_ids.len()
                },
            });
        }
        if n < n_classes {
            return Err(Error::InvalidParameter(format!(
                "{n} samples cannot cover {n_classes} classes"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if sample_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "sample ids must be unique and ascending".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            sample_ids,
        })
    }

    /// Builds a dataset with ids `0..n`.
    pub fn from_parts(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let ids = (0..features.nrows()).collect();
        Self::new(features, labels, n_classes, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    /// Row index holding `id`.
    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.sample_ids.binary_search(&id).ok()
    }

    pub fn label_of(&self, id: usize) -> Result<usize> {
        self.row_of(id)
            .map(|r| self.labels[r])
            .ok_or(Error::UnknownSample(id))
    }

    pub fn row(&self, id: usize) -> Result<ArrayView1<'_, f64>> {
        self.row_of(id)
            .map(|r| self.features.row(r))
            .ok_or(Error::UnknownSample(id))
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.labels.iter().copied(), self.n_classes)
    }

    /// Keeps the given rows, in ascending row order, preserving sample ids.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::UnknownSample(bad));
        }
        Self::new(
            self.features.select(Axis(0), &rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
            self.n_classes,
            rows.iter().map(|&r| self.sample_ids[r]).collect(),
        )
    }

    /// Keeps the samples with the given ids.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let rows = ids
            .iter()
            .map(|&id| self.row_of(id).ok_or(Error::UnknownSample(id)))
            .collect::<Result<Vec<_>>>()?;
        self.select_rows(&rows)
    }

    /// Stratified train/test split. Each class contributes
    /// `round(test_fraction * count)` samples to the test part.
    pub fn split_stratified(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_rows = Vec::new();
        let mut test_rows = Vec::new();
        for mut rows in self.rows_by_class() {
            rows.shuffle(&mut rng);
            let n_test = (test_fraction * rows.len() as f64).round() as usize;
            test_rows.extend_from_slice(&rows[..n_test]);
            train_rows.extend_from_slice(&rows[n_test..]);
        }
        Ok((
            self.select_rows(&train_rows)?,
            self.select_rows(&test_rows)?,
        ))
    }

    fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (row, &label) in self.labels.iter().enumerate() {
            by_class[label].push(row);
        }
        by_class
    }
}

/// Number of samples per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassCounts(pub Vec<usize>);

impl ClassCounts {
    pub fn from_labels(labels: impl IntoIterator<Item = usize>, n_classes: usize) -> Self {
        let mut counts = vec![0; n_classes];
        for label in labels {
            counts[label] += 1;
        }
        Self(counts)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.0.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var = self
            .0
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / self.0.len() as f64;
        var.sqrt()
    }
}

/// `sigma / mu` of the per-class counts, with population sigma.
pub fn imbalance_ratio(counts: &ClassCounts) -> Result<f64> {
    if counts.n_classes() == 0 || counts.total() == 0 {
        return Err(Error::NoSamples);
    }
    imbalance_ratio_from_moments(counts.mean(), counts.std())
}

/// Same ratio from already aggregated per-class mean and standard deviation.
pub fn imbalance_ratio_from_moments(mean: f64, std: f64) -> Result<f64> {
    if !(mean > 0.0 && std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mean must be positive and std non-negative (mean={mean}, std={std})"
        )));
    }
    Ok(std / mean)
}

/// Isotropic Gaussian blobs with class centers drawn from `[-1, 1]^dim`.
/// Rows are grouped by class.
pub fn make_synthetic(
    n_classes: usize,
    per_class: usize,
    dim: usize,
    cluster_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::InvalidParameter("n_classes must be >= 2".into()));
    }
    if per_class < 1 || dim < 1 {
        return Err(Error::InvalidParameter(
            "per_class and dim must be >= 1".into(),
        ));
    }
    if !(cluster_std > 0.0 && cluster_std.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cluster_std must be positive, got {cluster_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let normal = Normal::new(0.0, cluster_std).expect("positive std");

    let centers = Array2::from_shape_simple_fn((n_classes, dim), || uniform.sample(&mut rng));
    let n = n_classes * per_class;
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        for i in 0..per_class {
            let mut row = features.row_mut(class * per_class + i);
            for (x, &c) in row.iter_mut().zip(centers.row(class)) {
                *x = c + normal.sample(&mut rng);
            }
            labels.push(class);
        }
    }
    Dataset::from_parts(features, labels, n_classes)
}

/// Per-rank counts of the linear imbalance profile with slope `slope`:
/// rank `r` keeps `round(cap - slope * r)` samples, clamped to `[floor, cap]`.
fn profile_counts(n_classes: usize, cap: usize, floor: usize, slope: f64) -> Vec<usize> {
    (0..n_classes)
        .map(|rank| {
            let raw = (cap as f64 - slope * rank as f64).round();
            raw.clamp(floor as f64, cap as f64) as usize
        })
        .collect()
}

fn profile_ratio(counts: &[usize]) -> f64 {
    imbalance_ratio(&ClassCounts(counts.to_vec())).unwrap_or(0.0)
}

/// Subsamples a (near) balanced dataset so that its per-class counts follow a
/// linear profile over a random class order, reaching `target_ir` within
/// [`IMBALANCE_TOLERANCE`].
///
/// The most populated rank keeps every sample of the smallest class; the
/// slope is found by bisection and counts never drop below `min_per_class`.
pub fn induce_imbalance(
    dataset: &Dataset,
    target_ir: f64,
    min_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if !(target_ir >= 0.0 && target_ir.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target imbalance ratio must be a non-negative number, got {target_ir}"
        )));
    }
    if min_per_class < 1 {
        return Err(Error::InvalidParameter("min_per_class must be >= 1".into()));
    }
    let by_class = dataset.rows_by_class();
    let n_classes = by_class.len();
    let cap = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if cap < min_per_class {
        return Err(Error::UnattainableImbalance {
            target: target_ir,
            reason: format!(
                "smallest class has {cap} samples, below min_per_class {min_per_class}"
            ),
        });
    }

    let max_slope = (cap - min_per_class) as f64;
    let max_ir = profile_ratio(&profile_counts(n_classes, cap, min_per_class, max_slope));
    if target_ir > max_ir + IMBALANCE_TOLERANCE {
        return Err(Error::UnattainableImbalance {
            target: target_ir,
            reason: format!("largest reachable ratio is {max_ir:.4}"),
        });
    }

    let (mut lo, mut hi) = (0.0, max_slope);
    for _ in 0..SLOPE_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if profile_ratio(&profile_counts(n_classes, cap, min_per_class, mid)) < target_ir {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let counts = [lo, hi]
        .into_iter()
        .map(|s| profile_counts(n_classes, cap, min_per_class, s))
        .min_by(|a, b| {
            let da = (profile_ratio(a) - target_ir).abs();
            let db = (profile_ratio(b) - target_ir).abs();
            da.total_cmp(&db)
        })
        .expect("two candidates");
    let achieved = profile_ratio(&counts);
    if (achieved - target_ir).abs() > IMBALANCE_TOLERANCE {
        return Err(Error::UnattainableImbalance {
            target: target_ir,
            reason: format!("closest reachable ratio is {achieved:.4}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    class_order.shuffle(&mut rng);
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for (rank, &class) in class_order.iter().enumerate() {
        let rows = &by_class[class];
        let picked = index::sample(&mut rng, rows.len(), counts[rank]);
        keep.extend(picked.iter().map(|i| rows[i]));
    }
    dataset.select_rows(&keep)
}

/// Parses the `label,f1,...,fd` text format. `origin` is only used in error
/// messages.
pub fn parse_dataset(text: &str, origin: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("").trim();
        let label: usize = label_field
            .parse()
            .map_err(|_| err(line_no, format!("malformed label `{label_field}`")))?;
        let start = values.len();
        for field in fields {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| err(line_no, format!("malformed feature `{field}`")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite feature `{field}`")));
            }
            values.push(v);
        }
        let width = values.len() - start;
        if width == 0 {
            return Err(err(line_no, "row has no features".into()));
        }
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(err(
                    line_no,
                    format!("inconsistent dimensionality: expected {d} features, found {width}"),
                ))
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let dim = dim.ok_or(Error::NoSamples)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(err(
            labels.len(),
            "at least two classes are required".into(),
        ));
    }
    let features =
        Array2::from_shape_vec((labels.len(), dim), values).expect("row widths were checked");
    Dataset::from_parts(features, labels, n_classes)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, path)
}

/// Serializes to the text format. Floats use the shortest representation
/// that parses back to the same bits.
pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (row, &label) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        write!(out, "{label}").unwrap();
        for v in row {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_dataset(dataset))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text, Path::new("test.csv"))
    }

    #[test]
    fn parses_three_rows() {
        let d = parse("0,1.0,2.0\n1,0.5,-1\n2,3e-2,4\n").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.sample_ids(), &[0, 1, 2]);
        assert_eq!(d.features()[[2, 0]], 0.03);
    }

    #[test]
    fn ragged_row_names_line() {
        let e = parse("0,1.0,2.0\n1,0.5\n").unwrap_err();
        match e {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("dimensionality"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_has_no_samples() {
        assert_eq!(parse("").unwrap_err().to_string(), "no samples");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            parse("0,1\n1,NaN\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("0,1\n-1,2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("0,1\nx,2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("0,1\n1,\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let a = make_synthetic(2, 5, 3, 0.1, 7).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.class_counts().0, vec![5, 5]);
        let b = make_synthetic(2, 5, 3, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert!(make_synthetic(2, 5, 3, 0.0, 7).is_err());
        assert!(make_synthetic(1, 5, 3, 0.1, 7).is_err());
    }

    #[test]
    fn imbalance_ratio_values() {
        assert_eq!(imbalance_ratio(&ClassCounts(vec![500; 100])).unwrap(), 0.0);
        let ir = imbalance_ratio(&ClassCounts(vec![100, 200])).unwrap();
        assert!((ir - 50.0 / 150.0).abs() < 1e-12);
        let food = imbalance_ratio_from_moments(227.28, 180.31).unwrap();
        assert!((food - 0.793).abs() < 1e-3);
        assert!(imbalance_ratio(&ClassCounts(vec![0, 0])).is_err());
    }

    #[test]
    fn zero_target_keeps_balance() {
        let d = make_synthetic(5, 20, 2, 0.5, 1).unwrap();
        let out = induce_imbalance(&d, 0.0, 1, 3).unwrap();
        assert_eq!(imbalance_ratio(&out.class_counts()).unwrap(), 0.0);
    }

    #[test]
    fn unattainable_targets() {
        let d = make_synthetic(3, 10, 2, 0.5, 1).unwrap();
        assert!(matches!(
            induce_imbalance(&d, 5.0, 1, 0),
            Err(Error::UnattainableImbalance { .. })
        ));
        assert!(matches!(
            induce_imbalance(&d, 0.2, 11, 0),
            Err(Error::UnattainableImbalance { .. })
        ));
        assert!(induce_imbalance(&d, -0.1, 1, 0).is_err());
    }

    #[test]
    fn induced_subset_is_deterministic() {
        let d = make_synthetic(10, 40, 2, 0.5, 1).unwrap();
        let a = induce_imbalance(&d, 0.5, 2, 9).unwrap();
        let b = induce_imbalance(&d, 0.5, 2, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.class_counts().0.iter().all(|&c| c >= 2));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let d = make_synthetic(3, 10, 2, 0.5, 1).unwrap();
        let (train, test) = d.split_stratified(0.2, 4).unwrap();
        assert_eq!(train.class_counts().0, vec![8, 8, 8]);
        assert_eq!(test.class_counts().0, vec![2, 2, 2]);
        assert!(test
            .sample_ids()
            .iter()
            .all(|id| train.row_of(*id).is_none()));
    }

    proptest! {
        #[test]
        fn constant_counts_have_zero_ratio(c in 1usize..10_000, n in 1usize..200) {
            prop_assert_eq!(imbalance_ratio(&ClassCounts(vec![c; n])).unwrap(), 0.0);
        }

        #[test]
        fn ratio_is_scale_invariant(counts in prop::collection::vec(0usize..1000, 2..50), k in 1usize..50) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let base = imbalance_ratio(&ClassCounts(counts.clone())).unwrap();
            let scaled = imbalance_ratio(&ClassCounts(counts.iter().map(|c| c * k).collect())).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12);
        }

        #[test]
        fn text_format_round_trips(
            rows in prop::collection::vec((0usize..4, prop::collection::vec(-1e6f64..1e6, 3)), 4..20),
        ) {
            let mut labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
            labels[0] = 0;
            labels[1] = 3;
            let flat: Vec<f64> = rows.iter().flat_map(|r| r.1.clone()).collect();
            let d = Dataset::from_parts(Array2::from_shape_vec((rows.len(), 3), flat).unwrap(), labels, 4).unwrap();
            let back = parse(&format_dataset(&d)).unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn induced_subset_hits_target(target in 0.0f64..0.9, seed in 0u64..1000) {
            let d = make_synthetic(30, 60, 1, 1.0, seed).unwrap();
            let out = induce_imbalance(&d, target, 1, seed).unwrap();
            let ir = imbalance_ratio(&out.class_counts()).unwrap();
            prop_assert!((ir - target).abs() <= IMBALANCE_TOLERANCE);
            prop_assert!(out.sample_ids().iter().all(|id| d.row_of(*id).is_some()));
        }
    }

    #[test]
    fn dataset_rejects_broken_invariants() {
        let f = array![[0.0], [1.0]];
        assert!(Dataset::new(f.clone(), vec![0, 2], 2, vec![0, 1]).is_err());
        assert!(Dataset::new(f.clone(), vec![0, 1], 2, vec![1, 1]).is_err());
        assert!(Dataset::new(array![[f64::NAN], [1.0]], vec![0, 1], 2, vec![0, 1]).is_err());
        assert!(Dataset::new(f, vec![0, 1], 2, vec![3, 8]).is_ok());
    }
}
