//! Run every acquisition function over several seeds, aggregate, and print
//! the comparison table relative to random.
//!
//!     cargo run --release --example compare_strategies

use alamp::metrics::{aggregate, gain_table, gain_table_to_csv};
use alamp::{make_synthetic, run_experiment, BudgetPlan, RunOptions, Strategy};
use rayon::prelude::*;

fn main() -> alamp::Result<()> {
    let data = make_synthetic(10, 200, 32, 1.4, 11)?;
    let (train, test) = data.split_stratified(0.2, 11)?;
    let plan = BudgetPlan::new(300, 5)?;
    let seeds = [0, 1, 2];
    let opts = RunOptions {
        dataset_name: "synthetic".into(),
        ..RunOptions::default()
    };

    let aggregates = Strategy::ALL
        .par_iter()
        .map(|&af| {
            let reports = seeds
                .iter()
                .map(|&s| run_experiment(&train, &test, af, plan, s, &opts))
                .collect::<alamp::Result<Vec<_>>>()?;
            aggregate(&reports)
        })
        .collect::<alamp::Result<Vec<_>>>()?;
    print!("{}", gain_table_to_csv(&gain_table(&aggregates)));
    Ok(())
}
