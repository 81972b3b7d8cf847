//! The iterative pool-based protocol.
//!
//! A run starts from a random labeled batch, trains the first model, then
//! for every further iteration scores the unlabeled pool, moves one batch to
//! the labeled side (labels come from the training set itself) and retrains
//! from scratch. The probabilities computed for the pool at each iteration are
//! kept for the next one, which is what the margin-shift strategies consume.

use std::collections::{BTreeSet, HashSet};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    alamp_scores, coreset_select, diversify, margin_scores, pseudo_classes, random_select,
    PseudoClassMap, Strategy,
};
use crate::classifier::{self, class_weights, Model, ProbMatrix};
use crate::dataset::{imbalance_ratio, ClassCounts, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{IterationRecord, Report, RunMeta};

/// Initial draws tried before giving up on a batch that covers 2+ classes.
pub const INIT_ATTEMPTS: usize = 10;

const CV_STREAM: u64 = 0x00c0_ffee;

/// Total budget `b` spent over `t` iterations of `b / t` samples each,
/// the first iteration being the random seed batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct BudgetPlan {
    total_budget: usize,
    iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    b: usize,
    t: usize,
}

impl TryFrom<RawPlan> for BudgetPlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        BudgetPlan::new(raw.b, raw.t)
    }
}

impl From<BudgetPlan> for RawPlan {
    fn from(plan: BudgetPlan) -> Self {
        RawPlan {
            b: plan.total_budget,
            t: plan.iterations,
        }
    }
}

impl BudgetPlan {
    pub fn new(total_budget: usize, iterations: usize) -> Result<Self> {
        if iterations == 0 || total_budget == 0 {
            return Err(Error::InvalidPlan(
                "budget and iterations must be positive".into(),
            ));
        }
        if !total_budget.is_multiple_of(iterations) {
            return Err(Error::InvalidPlan(format!(
                "budget {total_budget} is not divisible by {iterations} iterations"
            )));
        }
        Ok(Self {
            total_budget,
            iterations,
        })
    }

    pub fn total_budget(&self) -> usize {
        self.total_budget
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn batch(&self) -> usize {
        self.total_budget / self.iterations
    }

    /// The budget must stay below the pool size.
    pub fn check_pool(&self, pool_size: usize) -> Result<()> {
        if self.total_budget >= pool_size {
            return Err(Error::InvalidPlan(format!(
                "budget {} must be smaller than the pool of {pool_size} samples",
                self.total_budget
            )));
        }
        Ok(())
    }
}

/// Knobs shared by every iteration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub cost_sensitive: bool,
    pub reg_grid: Vec<f64>,
    pub folds: usize,
    pub dataset_name: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cost_sensitive: true,
            reg_grid: classifier::DEFAULT_REG_GRID.to_vec(),
            folds: classifier::DEFAULT_FOLDS,
            dataset_name: String::from("unnamed"),
        }
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    iteration: usize,
    batch: usize,
    prev_probs: Option<ProbMatrix>,
    prev_pseudo: Option<PseudoClassMap>,
}

impl PoolState {
    pub fn labeled(&self) -> &BTreeSet<usize> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn prev_probs(&self) -> Option<&ProbMatrix> {
        self.prev_probs.as_ref()
    }

    pub fn prev_pseudo(&self) -> Option<&PseudoClassMap> {
        self.prev_pseudo.as_ref()
    }

    pub fn labeled_ids(&self) -> Vec<usize> {
        self.labeled.iter().copied().collect()
    }

    pub fn unlabeled_ids(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    /// Per-class counts of the labeled pool.
    pub fn labeled_counts(&self, train: &Dataset) -> Result<ClassCounts> {
        let labels = self
            .labeled
            .iter()
            .map(|&id| train.label_of(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassCounts::from_labels(labels, train.n_classes()))
    }

    /// Overrides the stored previous-iteration probabilities.
    pub fn with_previous(mut self, probs: ProbMatrix) -> Self {
        self.prev_pseudo = Some(pseudo_classes(&probs));
        self.prev_probs = Some(probs);
        self
    }
}

/// Everything a strategy may look at when picking one batch.
pub struct SelectionContext<'a> {
    pub current: &'a ProbMatrix,
    pub previous: Option<&'a ProbMatrix>,
    pub previous_pseudo: Option<&'a PseudoClassMap>,
    pub labeled: &'a [usize],
    /// Ascending.
    pub unlabeled: &'a [usize],
    /// Standardized embeddings of every training sample and their ids;
    /// only read by coreset.
    pub embeddings: Option<(ArrayView2<'a, f64>, &'a [usize])>,
    pub batch: usize,
    pub seed: u64,
}

/// Picks one batch from the unlabeled pool.
///
/// The margin-shift strategies fall back to plain margins (and to current
/// pseudo classes) while no previous probabilities exist.
pub fn select_batch(strategy: Strategy, ctx: &SelectionContext<'_>) -> Result<Vec<usize>> {
    let batch = ctx.batch;
    match strategy {
        Strategy::Random => random_select(ctx.unlabeled, batch, ctx.seed),
        Strategy::Margin => margin_scores(ctx.current)?.top(batch),
        Strategy::Coreset => {
            let (features, ids) = ctx.embeddings.ok_or_else(|| {
                Error::InvalidParameter("coreset selection needs embeddings".into())
            })?;
            coreset_select(features, ids, ctx.labeled, ctx.unlabeled, batch)
        }
        Strategy::Alamp => match ctx.previous {
            None => margin_scores(ctx.current)?.top(batch),
            Some(prev) => {
                alamp_scores(&margin_scores(prev)?, &margin_scores(ctx.current)?)?.top(batch)
            }
        },
        Strategy::AlampDiv => match (ctx.previous, ctx.previous_pseudo) {
            (Some(prev), Some(pseudo)) => {
                let scored = alamp_scores(&margin_scores(prev)?, &margin_scores(ctx.current)?)?;
                diversify(scored.order(), pseudo, batch)
            }
            _ => {
                let scored = margin_scores(ctx.current)?;
                diversify(scored.order(), &pseudo_classes(ctx.current), batch)
            }
        },
        Strategy::RandDiv => {
            let order = random_select(ctx.unlabeled, ctx.unlabeled.len(), ctx.seed)?;
            diversify(&order, &pseudo_classes(ctx.current), batch)
        }
        Strategy::MargDiv => {
            let scored = margin_scores(ctx.current)?;
            diversify(scored.order(), &pseudo_classes(ctx.current), batch)
        }
    }
}

fn gather(train: &Dataset, ids: &[usize]) -> Result<(Array2<f64>, Vec<usize>)> {
    let rows = ids
        .iter()
        .map(|&id| train.row_of(id).ok_or(Error::UnknownSample(id)))
        .collect::<Result<Vec<_>>>()?;
    let labels = rows.iter().map(|&r| train.labels()[r]).collect();
    Ok((train.features().select(Axis(0), &rows), labels))
}

/// Cross-validates the regularization strength over the classes that have at
/// least two labeled samples; singletons cannot be held out. Falls back to
/// the middle of the grid when fewer than two classes qualify.
pub fn tune_reg_param(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    weights: &[f64],
    opts: &RunOptions,
    seed: u64,
) -> Result<f64> {
    let counts = ClassCounts::from_labels(labels.iter().copied(), n_classes);
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| counts.as_slice()[labels[i]] >= 2)
        .collect();
    let usable = counts.as_slice().iter().filter(|&&c| c >= 2).count();
    if usable < 2 {
        let mut grid = opts.reg_grid.clone();
        grid.sort_by(f64::total_cmp);
        return grid
            .get(grid.len() / 2)
            .copied()
            .ok_or_else(|| Error::InvalidParameter("empty regularization grid".into()));
    }
    let sub_labels: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
    classifier::select_reg_param(
        features.select(Axis(0), &keep).view(),
        &sub_labels,
        n_classes,
        weights,
        &opts.reg_grid,
        opts.folds,
        seed,
    )
}

/// Trains a fresh model on the labeled ids: class weights, cross-validated
/// regularization, then a full fit.
pub fn fit_labeled(
    train: &Dataset,
    labeled: &[usize],
    opts: &RunOptions,
    seed: u64,
) -> Result<Model> {
    let (features, labels) = gather(train, labeled)?;
    let n_classes = train.n_classes();
    let weights = if opts.cost_sensitive {
        class_weights(&ClassCounts::from_labels(labels.iter().copied(), n_classes))
    } else {
        vec![1.0; n_classes]
    };
    let reg = tune_reg_param(
        features.view(),
        &labels,
        n_classes,
        &weights,
        opts,
        derive_seed(seed, CV_STREAM),
    )?;
    classifier::train(features.view(), &labels, n_classes, &weights, reg)
}

/// Draws the random seed batch and trains the first model. A draw covering a
/// single class is redrawn with the next seed.
pub fn init_pool(
    train: &Dataset,
    plan: BudgetPlan,
    seed: u64,
    opts: &RunOptions,
) -> Result<(PoolState, Model)> {
    plan.check_pool(train.len())?;
    let all = train.sample_ids();
    for attempt in 0..INIT_ATTEMPTS as u64 {
        let picked = random_select(all, plan.batch(), seed.wrapping_add(attempt))?;
        let classes: HashSet<usize> = picked
            .iter()
            .map(|&id| train.label_of(id))
            .collect::<Result<_>>()?;
        if classes.len() < 2 {
            continue;
        }
        let labeled: BTreeSet<usize> = picked.into_iter().collect();
        let unlabeled = all
            .iter()
            .copied()
            .filter(|id| !labeled.contains(id))
            .collect();
        let state = PoolState {
            labeled,
            unlabeled,
            iteration: 0,
            batch: plan.batch(),
            prev_probs: None,
            prev_pseudo: None,
        };
        let model = fit_labeled(train, &state.labeled_ids(), opts, seed)?;
        return Ok((state, model));
    }
    Err(Error::DegenerateInitialBatch(INIT_ATTEMPTS))
}

/// Result of one iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: PoolState,
    pub model: Model,
    pub selected: Vec<usize>,
}

/// Selects one batch with `model`, labels it and retrains.
pub fn step(
    state: PoolState,
    model: &Model,
    strategy: Strategy,
    train: &Dataset,
    seed: u64,
    opts: &RunOptions,
) -> Result<StepOutcome> {
    let batch = state.batch;
    if state.unlabeled.len() < batch {
        return Err(Error::BatchTooLarge {
            batch,
            pool: state.unlabeled.len(),
        });
    }
    let unlabeled = state.unlabeled_ids();
    let labeled = state.labeled_ids();
    let (pool_features, _) = gather(train, &unlabeled)?;
    let current = model.predict_proba(pool_features.view(), unlabeled.clone())?;

    let embeddings = match strategy {
        Strategy::Coreset => Some(model.scaler().transform(train.features())),
        _ => None,
    };
    let ctx = SelectionContext {
        current: &current,
        previous: state.prev_probs.as_ref(),
        previous_pseudo: state.prev_pseudo.as_ref(),
        labeled: &labeled,
        unlabeled: &unlabeled,
        embeddings: embeddings.as_ref().map(|e| (e.view(), train.sample_ids())),
        batch,
        seed,
    };
    let selected = select_batch(strategy, &ctx)?;

    let mut next = state;
    for &id in &selected {
        if !next.unlabeled.remove(&id) {
            return Err(Error::UnknownSample(id));
        }
        next.labeled.insert(id);
    }
    next.iteration += 1;
    next.prev_pseudo = Some(pseudo_classes(&current));
    next.prev_probs = Some(current);

    let model = fit_labeled(train, &next.labeled_ids(), opts, seed)?;
    Ok(StepOutcome {
        state: next,
        model,
        selected,
    })
}

fn record(
    state: &PoolState,
    model: &Model,
    train: &Dataset,
    test: &Dataset,
    selected: Vec<usize>,
) -> Result<IterationRecord> {
    let class_counts = state.labeled_counts(train)?;
    Ok(IterationRecord {
        k: state.iteration,
        labeled: state.labeled.len(),
        acc: model.accuracy(test)?,
        ir: imbalance_ratio(&class_counts)?,
        class_counts,
        selected,
    })
}

/// Runs the whole protocol and evaluates on `test` after every training.
pub fn run_experiment(
    train: &Dataset,
    test: &Dataset,
    strategy: Strategy,
    plan: BudgetPlan,
    seed: u64,
    opts: &RunOptions,
) -> Result<Report> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    if train.n_classes() != test.n_classes() {
        return Err(Error::InvalidParameter(format!(
            "train has {} classes but test has {}",
            train.n_classes(),
            test.n_classes()
        )));
    }
    let (mut state, mut model) = init_pool(train, plan, seed, opts)?;
    let mut records = vec![record(&state, &model, train, test, state.labeled_ids())?];
    for k in 1..plan.iterations() {
        let out = step(
            state,
            &model,
            strategy,
            train,
            derive_seed(seed, k as u64),
            opts,
        )?;
        records.push(record(&out.state, &out.model, train, test, out.selected)?);
        state = out.state;
        model = out.model;
    }
    Ok(Report {
        meta: RunMeta {
            af: strategy,
            seed,
            plan,
            dataset: opts.dataset_name.clone(),
            cost_sensitive: opts.cost_sensitive,
        },
        records,
    })
}
