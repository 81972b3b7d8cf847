//! One-vs-rest linear classifier over fixed embeddings.
//!
//! Each class gets a linear decision function `d_c(x) = w_c . x + b_c`
//! fitted by full-batch gradient descent on a class-weighted squared hinge
//! loss with an L2 penalty on `w_c`. Features are standardized with the
//! statistics of the training rows. Probabilities are the softmax of the
//! decision values, so they rank classes exactly like the decision values.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{ClassCounts, Dataset};
use crate::error::{Error, Result};

/// Gradient descent iterations per fit.
pub const ITERATIONS: usize = 500;

/// Learning rate numerator: the step is `BASE_LEARNING_RATE / (1 + reg_param)`,
/// capped by the inverse curvature of the loss.
pub const BASE_LEARNING_RATE: f64 = 0.1;

pub const DEFAULT_REG_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

pub const DEFAULT_FOLDS: usize = 3;

const POWER_ITERATIONS: usize = 100;

/// `w_c = n / (n_classes * count_c)`; classes with no samples are treated as
/// having one.
pub fn class_weights(counts: &ClassCounts) -> Vec<f64> {
    let n = counts.total() as f64;
    let k = counts.n_classes() as f64;
    counts
        .as_slice()
        .iter()
        .map(|&c| n / (k * c.max(1) as f64))
        .collect()
}

/// Per-dimension centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    /// Constant dimensions keep a scale of 1.
    pub fn fit(features: ArrayView2<'_, f64>) -> Self {
        let n = features.nrows() as f64;
        let mean = features.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(features.ncols());
        for row in features.rows() {
            Zip::from(&mut var)
                .and(&row)
                .and(&mean)
                .for_each(|v, &x, &m| {
                    *v += (x - m) * (x - m);
                });
        }
        let scale = var.mapv(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        });
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            Zip::from(&mut row)
                .and(&self.mean)
                .and(&self.scale)
                .for_each(|x, &m, &s| *x = (*x - m) / s);
        }
        out
    }
}

/// Class-probability rows for a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    sample_ids: Vec<usize>,
    probs: Array2<f64>,
}

impl ProbMatrix {
    /// Rows must be valid distributions: entries in `[0, 1]` summing to 1
    /// within `1e-6`.
    pub fn new(sample_ids: Vec<usize>, probs: Array2<f64>) -> Result<Self> {
        if sample_ids.len() != probs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: probs.nrows(),
                found: sample_ids.len(),
            });
        }
        for row in probs.rows() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "probability row {row} is not a distribution"
                )));
            }
        }
        Ok(Self { sample_ids, probs })
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, ArrayView1<'_, f64>)> {
        self.sample_ids.iter().copied().zip(self.probs.rows())
    }
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(values: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = values.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    scaler: Standardizer,
    weights: Array2<f64>,
    biases: Array1<f64>,
    reg_param: f64,
    class_weights: Vec<f64>,
}

impl Model {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Weights in standardized feature space, one row per class.
    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn biases(&self) -> ArrayView1<'_, f64> {
        self.biases.view()
    }

    pub fn reg_param(&self) -> f64 {
        self.reg_param
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    fn check_dim(&self, features: ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        Ok(())
    }

    /// Decision values for raw (unstandardized) features, one column per class.
    pub fn decision_function(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(features)?;
        let x = self.scaler.transform(features);
        Ok(x.dot(&self.weights.t()) + &self.biases)
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let d = self.decision_function(features)?;
        Ok(d.rows().into_iter().map(argmax).collect())
    }

    /// Probabilities for the given rows, tagged with `sample_ids`.
    pub fn predict_proba(
        &self,
        features: ArrayView2<'_, f64>,
        sample_ids: Vec<usize>,
    ) -> Result<ProbMatrix> {
        let d = self.decision_function(features)?;
        ProbMatrix::new(sample_ids, softmax_rows(d.view()))
    }

    /// Probabilities for every sample of `data`.
    pub fn predict_proba_dataset(&self, data: &Dataset) -> Result<ProbMatrix> {
        self.predict_proba(data.features(), data.sample_ids().to_vec())
    }

    /// Fraction of samples whose prediction equals the label.
    pub fn accuracy(&self, test: &Dataset) -> Result<f64> {
        accuracy_of(self, test.features(), test.labels())
    }
}

fn accuracy_of(model: &Model, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::NoSamples);
    }
    let predicted = model.predict(features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Loss and gradient of a single binary problem in standardized space,
/// exposed for gradient checks.
///
/// `J(w, b) = (1/n) sum_i omega_i max(0, 1 - s_i (w . x_i + b))^2 + (lambda/2) |w|^2`
pub mod loss {
    use ndarray::{Array1, ArrayView1, ArrayView2};

    pub fn objective(
        x: ArrayView2<'_, f64>,
        signs: &[f64],
        sample_weights: &[f64],
        w: ArrayView1<'_, f64>,
        b: f64,
        reg_param: f64,
    ) -> f64 {
        let n = x.nrows() as f64;
        let data: f64 = x
            .rows()
            .into_iter()
            .zip(signs.iter().zip(sample_weights))
            .map(|(row, (&s, &omega))| {
                let m = (1.0 - s * (row.dot(&w) + b)).max(0.0);
                omega * m * m
            })
            .sum();
        data / n + 0.5 * reg_param * w.dot(&w)
    }

    /// Returns `(dJ/dw, dJ/db)`.
    pub fn gradient(
        x: ArrayView2<'_, f64>,
        signs: &[f64],
        sample_weights: &[f64],
        w: ArrayView1<'_, f64>,
        b: f64,
        reg_param: f64,
    ) -> (Array1<f64>, f64) {
        let n = x.nrows() as f64;
        let mut gw = w.mapv(|v| reg_param * v);
        let mut gb = 0.0;
        for (row, (&s, &omega)) in x.rows().into_iter().zip(signs.iter().zip(sample_weights)) {
            let m = 1.0 - s * (row.dot(&w) + b);
            if m > 0.0 {
                let coef = -2.0 * omega * s * m / n;
                gw.scaled_add(coef, &row);
                gb += coef;
            }
        }
        (gw, gb)
    }
}

/// Largest eigenvalue of the weighted second moment of `[x, 1]`, by power
/// iteration from a fixed start vector.
fn curvature_bound(xa: ArrayView2<'_, f64>, sample_weights: &[f64]) -> f64 {
    let n = xa.nrows() as f64;
    let omega = Array1::from(sample_weights.to_vec());
    let weighted = &xa * &omega.insert_axis(Axis(1));
    let moment = weighted.t().dot(&xa) / n;
    let mut v = Array1::from_shape_fn(moment.nrows(), |j| 1.0 + 0.5 * ((j + 1) as f64).sin());
    let mut eig = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let mv = moment.dot(&v);
        let norm = mv.dot(&mv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        eig = v.dot(&mv) / v.dot(&v);
        v = mv / norm;
    }
    eig
}

/// Fits one-vs-rest models on raw features. Deterministic: parameters start
/// at zero and every update is a fixed full-batch step.
pub fn train(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    class_weights: &[f64],
    reg_param: f64,
) -> Result<Model> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if class_weights.len() != n_classes {
        return Err(Error::DimensionMismatch {
            expected: n_classes,
            found: class_weights.len(),
        });
    }
    if !(reg_param > 0.0 && reg_param.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "reg_param must be positive, got {reg_param}"
        )));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range")));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass);
    }

    let dim = features.ncols();
    let scaler = Standardizer::fit(features);
    let mut xa = Array2::<f64>::ones((n, dim + 1));
    xa.slice_mut(s![.., ..dim])
        .assign(&scaler.transform(features));

    let sample_weights: Vec<f64> = labels.iter().map(|&l| class_weights[l]).collect();
    let coef: Vec<f64> = sample_weights.iter().map(|&w| 2.0 * w / n as f64).collect();
    let signs = Array2::from_shape_fn(
        (n, n_classes),
        |(i, c)| {
            if labels[i] == c {
                1.0
            } else {
                -1.0
            }
        },
    );

    let lipschitz = 2.0 * curvature_bound(xa.view(), &sample_weights) + reg_param;
    let step = (BASE_LEARNING_RATE / (1.0 + reg_param)).min(1.0 / lipschitz);

    // Row c holds [w_c, b_c].
    let mut params = Array2::<f64>::zeros((n_classes, dim + 1));
    let mut residual = Array2::<f64>::zeros((n, n_classes));
    for _ in 0..ITERATIONS {
        let decision = xa.dot(&params.t());
        Zip::indexed(&mut residual)
            .and(&decision)
            .and(&signs)
            .for_each(|(i, _), r, &d, &s| {
                let m = 1.0 - s * d;
                *r = if m > 0.0 { -coef[i] * s * m } else { 0.0 };
            });
        let mut grad = residual.t().dot(&xa);
        grad.slice_mut(s![.., ..dim])
            .scaled_add(reg_param, &params.slice(s![.., ..dim]));
        params.scaled_add(-step, &grad);
    }

    Ok(Model {
        scaler,
        weights: params.slice(s![.., ..dim]).to_owned(),
        biases: params.column(dim).to_owned(),
        reg_param,
        class_weights: class_weights.to_vec(),
    })
}

/// Stratified k-fold grid search. Returns the candidate with the best mean
/// validation accuracy; ties go to the smallest candidate.
///
/// The fold count is lowered to the smallest class count (never below 2).
/// Classes absent from `labels` are ignored.
pub fn select_reg_param(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    class_weights: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "folds must be >= 2, got {folds}"
        )));
    }
    let mut grid = grid.to_vec();
    if grid.is_empty() || grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidParameter(
            "candidate grid must be non-empty and positive".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let counts = ClassCounts::from_labels(labels.iter().copied(), n_classes);
    let present: Vec<(usize, usize)> = counts
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(&(class, count)) = present.iter().find(|&&(_, c)| c < 2) {
        return Err(Error::InsufficientClassSamples { class, count });
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let k = present.iter().map(|&(_, c)| c).min().unwrap().min(folds);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for &(class, _) in &present {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (pos, row) in rows.into_iter().enumerate() {
            fold_of[row] = pos % k;
        }
    }

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k).map(move |f| (g, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(g, fold)| {
            let train_rows: Vec<usize> =
                (0..labels.len()).filter(|&i| fold_of[i] != fold).collect();
            let valid_rows: Vec<usize> =
                (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
            let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
            let valid_labels: Vec<usize> = valid_rows.iter().map(|&i| labels[i]).collect();
            let model = train(
                features.select(Axis(0), &train_rows).view(),
                &train_labels,
                n_classes,
                class_weights,
                grid[g],
            )?;
            accuracy_of(
                &model,
                features.select(Axis(0), &valid_rows).view(),
                &valid_labels,
            )
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (g, chunk) in scores.chunks(k).enumerate() {
        let mean = chunk.iter().sum::<f64>() / k as f64;
        if mean > best_score {
            best_score = mean;
            best = g;
        }
    }
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_synthetic;
    use ndarray::array;

    fn model_with(weights: Array2<f64>, biases: Array1<f64>) -> Model {
        let dim = weights.ncols();
        Model {
            scaler: Standardizer {
                mean: Array1::zeros(dim),
                scale: Array1::ones(dim),
            },
            class_weights: vec![1.0; weights.nrows()],
            weights,
            biases,
            reg_param: 1.0,
        }
    }

    #[test]
    fn class_weight_formula() {
        assert_eq!(class_weights(&ClassCounts(vec![10, 10])), vec![1.0, 1.0]);
        let w = class_weights(&ClassCounts(vec![30, 10]));
        assert!((w[0] - 40.0 / 60.0).abs() < 1e-12);
        assert!((w[1] - 2.0).abs() < 1e-12);
        assert_eq!(class_weights(&ClassCounts(vec![5])), vec![1.0]);
        // absent class weighted as if it had one sample
        assert_eq!(class_weights(&ClassCounts(vec![4, 0])), vec![0.5, 2.0]);
    }

    #[test]
    fn separable_one_dimensional() {
        let x = array![[-1.0], [-1.1], [-0.9], [1.0], [1.2], [0.8]];
        let y = [0, 0, 0, 1, 1, 1];
        let model = train(x.view(), &y, 2, &[1.0, 1.0], 0.01).unwrap();
        let d = model.decision_function(x.view()).unwrap();
        for (row, &label) in d.rows().into_iter().zip(&y) {
            let class1_score = row[1] - row[0];
            assert_eq!(class1_score > 0.0, label == 1);
        }
    }

    #[test]
    fn training_is_bit_stable() {
        let d = make_synthetic(3, 15, 4, 0.5, 2).unwrap();
        let a = train(d.features(), d.labels(), 3, &[1.0; 3], 0.1).unwrap();
        let b = train(d.features(), d.labels(), 3, &[1.0; 3], 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn well_separated_blobs_fit_perfectly() {
        let d = make_synthetic(4, 20, 2, 0.05, 11).unwrap();
        let model = train(d.features(), d.labels(), 4, &[1.0; 4], 1e-3).unwrap();
        assert_eq!(model.accuracy(&d).unwrap(), 1.0);
    }

    #[test]
    fn train_rejects_bad_input() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            train(x.view(), &[1, 1], 2, &[1.0, 1.0], 1.0),
            Err(Error::SingleClass)
        ));
        assert!(train(x.view(), &[0, 1], 2, &[1.0, 1.0], 0.0).is_err());
        let bad = array![[f64::INFINITY], [1.0]];
        assert!(matches!(
            train(bad.view(), &[0, 1], 2, &[1.0, 1.0], 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn softmax_cases() {
        let m = model_with(Array2::zeros((3, 2)), Array1::zeros(3));
        let p = m
            .predict_proba(array![[0.3, -2.0]].view(), vec![0])
            .unwrap();
        for &v in p.probs().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let m = model_with(Array2::zeros((2, 1)), array![2f64.ln(), 0.0]);
        let p = m.predict_proba(array![[5.0]].view(), vec![0]).unwrap();
        assert!((p.probs()[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.probs()[[0, 1]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn predict_argmax_and_ties() {
        let m = model_with(Array2::zeros((2, 1)), array![0.9, 0.1]);
        assert_eq!(m.predict(array![[1.0]].view()).unwrap(), vec![0]);
        let m = model_with(Array2::zeros((2, 1)), array![0.5, 0.5]);
        assert_eq!(m.predict(array![[1.0]].view()).unwrap(), vec![0]);
        assert!(matches!(
            m.predict(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn accuracy_counts() {
        let m = model_with(array![[1.0], [-1.0]], array![0.0, 0.0]);
        let d =
            Dataset::from_parts(array![[1.0], [2.0], [-1.0], [-2.0]], vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy(&d).unwrap(), 1.0);
        let d =
            Dataset::from_parts(array![[1.0], [2.0], [-1.0], [-2.0]], vec![1, 1, 0, 0], 2).unwrap();
        assert_eq!(m.accuracy(&d).unwrap(), 0.0);
        let d =
            Dataset::from_parts(array![[1.0], [2.0], [-1.0], [-2.0]], vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.accuracy(&d).unwrap(), 0.5);
    }

    #[test]
    fn reg_param_grid_rules() {
        let d = make_synthetic(2, 10, 2, 0.05, 3).unwrap();
        let w = [1.0, 1.0];
        let pick = |grid: &[f64]| select_reg_param(d.features(), d.labels(), 2, &w, grid, 3, 0);
        assert_eq!(pick(&[0.5]).unwrap(), 0.5);
        // trivially separable: every candidate scores 1.0
        assert_eq!(pick(&[1.0, 0.01, 0.1]).unwrap(), 0.01);
        assert!(pick(&[]).is_err());
        assert!(select_reg_param(d.features(), d.labels(), 2, &w, &[1.0], 1, 0).is_err());
    }

    #[test]
    fn reg_param_needs_two_per_class() {
        let x = array![[0.0], [0.1], [1.0]];
        assert!(matches!(
            select_reg_param(x.view(), &[0, 0, 1], 2, &[1.0, 1.0], &[0.1, 1.0], 3, 0),
            Err(Error::InsufficientClassSamples { class: 1, count: 1 })
        ));
    }

    #[test]
    fn standardizer_passes_constant_dimensions() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view());
        let t = s.transform(x.view());
        assert_eq!(t, array![[-1.0, 0.0], [1.0, 0.0]]);
    }
}
