//! Train the one-vs-rest classifier directly: pick the regularization
//! strength by cross-validation and compare plain and cost-sensitive fits on
//! a skewed training set.
//!
//!     cargo run --release --example classifier

use alamp::classifier::DEFAULT_REG_GRID;
use alamp::{class_weights, make_synthetic, select_reg_param, train};

fn main() -> alamp::Result<()> {
    let data = make_synthetic(4, 300, 6, 1.5, 2)?;
    let (pool, test) = data.split_stratified(0.25, 2)?;
    // Keep every fifth sample of class 3.
    let keep: Vec<usize> = pool
        .sample_ids()
        .iter()
        .copied()
        .filter(|&id| {
            pool.label_of(id)
                .map(|l| l != 3 || id % 5 == 0)
                .unwrap_or(false)
        })
        .collect();
    let skewed = pool.subset(&keep)?;
    let counts = skewed.class_counts();
    let weights = class_weights(&counts);
    println!(
        "class counts {:?}, weights {:.2?}",
        counts.as_slice(),
        weights
    );

    let n = skewed.n_classes();
    let reg = select_reg_param(
        skewed.features(),
        skewed.labels(),
        n,
        &weights,
        &DEFAULT_REG_GRID,
        3,
        0,
    )?;
    println!("selected regularization {reg}");

    let plain = train(skewed.features(), skewed.labels(), n, &vec![1.0; n], reg)?;
    let weighted = train(skewed.features(), skewed.labels(), n, &weights, reg)?;
    let recall = |m: &alamp::Model| -> alamp::Result<f64> {
        let pred = m.predict(test.features())?;
        let (hit, total) = pred
            .iter()
            .zip(test.labels())
            .filter(|(_, &l)| l == 3)
            .fold((0, 0), |(h, t), (&p, _)| (h + usize::from(p == 3), t + 1));
        Ok(hit as f64 / total as f64)
    };
    println!(
        "plain:          accuracy {:.3}, minority recall {:.3}",
        plain.accuracy(&test)?,
        recall(&plain)?
    );
    println!(
        "cost-sensitive: accuracy {:.3}, minority recall {:.3}",
        weighted.accuracy(&test)?,
        recall(&weighted)?
    );
    Ok(())
}
