//! Spread a ranked batch across pseudo classes.
//!
//!     cargo run --release --example diversification

use alamp::{diversify, PseudoClassMap};

fn main() -> alamp::Result<()> {
    // A ranking dominated by pseudo class 0.
    let ranked = [4, 9, 2, 7, 1, 5, 3, 8];
    let pseudo: PseudoClassMap = [
        (4, 0),
        (9, 0),
        (2, 0),
        (7, 1),
        (1, 0),
        (5, 2),
        (3, 1),
        (8, 0),
    ]
    .into_iter()
    .collect();

    println!("top-4 by rank:     {:?}", &ranked[..4]);
    let picked = diversify(&ranked, &pseudo, 4)?;
    let classes: Vec<usize> = picked.iter().map(|&id| pseudo.get(id).unwrap()).collect();
    println!("diversified batch: {picked:?} (classes {classes:?})");
    Ok(())
}
