//! Score a toy pool with margin and alamp by hand, then run one selection
//! step for every acquisition function from the same initial model.
//!
//!     cargo run --release --example acquisition_functions

use alamp::engine::derive_seed;
use alamp::{
    alamp_score, alamp_scores, init_pool, make_synthetic, margin_scores, step, BudgetPlan,
    ProbMatrix, RunOptions, Strategy,
};
use ndarray::array;

fn main() -> alamp::Result<()> {
    // Sample 11 was confident before and is ambiguous now; sample 12 was and
    // stays ambiguous; sample 10 became more confident.
    let ids = vec![10, 11, 12];
    let previous = ProbMatrix::new(ids.clone(), array![[0.5, 0.5], [0.9, 0.1], [0.52, 0.48]])?;
    let current = ProbMatrix::new(ids, array![[0.8, 0.2], [0.55, 0.45], [0.51, 0.49]])?;
    let prev = margin_scores(&previous)?;
    let curr = margin_scores(&current)?;
    println!("margin order (smallest first): {:?}", curr.order());
    println!(
        "alamp order (largest first):   {:?}",
        alamp_scores(&prev, &curr)?.order()
    );
    println!("alamp(0.8 -> 0.1) = {:.3}", alamp_score(0.8, 0.1));

    let data = make_synthetic(6, 80, 8, 1.2, 1)?;
    let plan = BudgetPlan::new(60, 3)?;
    let opts = RunOptions::default();
    let (state, model) = init_pool(&data, plan, 3, &opts)?;
    for af in Strategy::ALL {
        let out = step(state.clone(), &model, af, &data, derive_seed(3, 1), &opts)?;
        let counts = out.state.labeled_counts(&data)?;
        println!(
            "{af:<10} picked {:?}... class counts {:?}",
            &out.selected[..5],
            counts.as_slice()
        );
    }
    Ok(())
}
