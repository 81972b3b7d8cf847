//! Greedy k-center selection on a 2-D point cloud.
//!
//!     cargo run --release --example coreset

use alamp::coreset_select;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> alamp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points = Array2::from_shape_simple_fn((200, 2), || rng.random_range(0.0..10.0));
    let ids: Vec<usize> = (0..200).collect();
    let labeled = [0, 1];
    let unlabeled: Vec<usize> = (2..200).collect();

    let picks = coreset_select(points.view(), &ids, &labeled, &unlabeled, 8)?;
    for id in picks {
        println!(
            "picked {id:>3} at ({:.2}, {:.2})",
            points[[id, 0]],
            points[[id, 1]]
        );
    }
    Ok(())
}
