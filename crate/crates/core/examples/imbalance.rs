//! Induce a target imbalance ratio on a balanced dataset and compare how
//! random and alamp-div fill the labeled pool.
//!
//!     cargo run --release --example imbalance

use alamp::{
    imbalance_ratio, induce_imbalance, make_synthetic, run_experiment, BudgetPlan, RunOptions,
    Strategy,
};

fn main() -> alamp::Result<()> {
    let data = make_synthetic(12, 200, 16, 1.3, 5)?;
    let (train, test) = data.split_stratified(0.2, 5)?;
    let skewed = induce_imbalance(&train, 0.74, 5, 5)?;
    println!(
        "train pool: {} -> {} samples, ir {:.3} -> {:.3}",
        train.len(),
        skewed.len(),
        imbalance_ratio(&train.class_counts())?,
        imbalance_ratio(&skewed.class_counts())?
    );
    println!("class counts {:?}", skewed.class_counts().as_slice());

    let plan = BudgetPlan::new(240, 4)?;
    for af in [Strategy::Random, Strategy::AlampDiv] {
        let r = run_experiment(&skewed, &test, af, plan, 0, &RunOptions::default())?;
        let ir: Vec<String> = r.records.iter().map(|x| format!("{:.3}", x.ir)).collect();
        println!("{af:<10} labeled-pool ir per round: {}", ir.join(" "));
    }
    Ok(())
}
