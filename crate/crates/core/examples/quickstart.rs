//! Run one active-learning simulation on a generated dataset and print the
//! learning curve.
//!
//!     cargo run --release --example quickstart

use alamp::{make_synthetic, run_experiment, BudgetPlan, RunOptions, Strategy};

fn main() -> alamp::Result<()> {
    let data = make_synthetic(10, 150, 16, 1.2, 7)?;
    let (train, test) = data.split_stratified(0.2, 7)?;

    // 8 rounds of 40 labels each; round 0 is a random seed batch.
    let plan = BudgetPlan::new(320, 8)?;
    let report = run_experiment(
        &train,
        &test,
        Strategy::AlampDiv,
        plan,
        0,
        &RunOptions::default(),
    )?;

    println!("k  labeled  accuracy  ir");
    for r in &report.records {
        println!("{:<2} {:>7}  {:.4}    {:.3}", r.k, r.labeled, r.acc, r.ir);
    }
    println!("average accuracy {:.4}", alamp::average_accuracy(&report));
    Ok(())
}
