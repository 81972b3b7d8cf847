//! Pool-based active learning over fixed embeddings.
//!
//! The crate simulates the iterative labeling loop: a shallow one-vs-rest
//! classifier is retrained on the growing labeled pool and an acquisition
//! function picks the next batch. Besides the random, margin and coreset
//! baselines it provides `alamp`, which ranks samples by how far their
//! margin moved from certain (previous model) to uncertain (current model),
//! and a diversification pass that spreads a batch across predicted classes.
//!
//! ```no_run
//! use alamp::{make_synthetic, run_experiment, BudgetPlan, RunOptions, Strategy};
//!
//! let data = make_synthetic(10, 120, 16, 0.8, 0).unwrap();
//! let (train, test) = data.split_stratified(0.2, 0).unwrap();
//! let plan = BudgetPlan::new(200, 5).unwrap();
//! let report = run_experiment(&train, &test, Strategy::AlampDiv, plan, 0, &RunOptions::default()).unwrap();
//! println!("{:?}", report.accuracy_curve());
//! ```
//!
//! Runnable walkthroughs live in `examples/`.

pub mod acquisition;
pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod metrics;

pub use acquisition::{
    alamp_score, alamp_scores, coreset_select, diversify, margin_scores, pseudo_classes,
    random_select, Direction, PseudoClassMap, ScoredPool, Strategy,
};
pub use classifier::{class_weights, select_reg_param, train, Model, ProbMatrix};
pub use dataset::{
    imbalance_ratio, induce_imbalance, load_dataset, make_synthetic, write_dataset, ClassCounts,
    Dataset,
};
pub use engine::{init_pool, run_experiment, step, BudgetPlan, PoolState, RunOptions};
pub use error::{Error, Result};
pub use metrics::{
    aggregate, average_accuracy, imbalance_profile, samples_to_accuracy, write_report, Format,
    IterationRecord, Report,
};
