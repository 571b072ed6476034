//! How tight the Kantorovich bound on E(1/X) E(X) is for Xavier matrices.
//!
//!     cargo run --release --example bound_constant

use ndarray::Array2;
use resgrad::analysis::{estimate_k, kantorovich_bound};
use resgrad::numerics::SeededRng;

fn main() -> resgrad::Result<()> {
    println!("bound(1, 4) = {}", kantorovich_bound(1.0, 4.0)?);
    let mut rng = SeededRng::new(0);
    for (rows, cols) in [(16, 16), (32, 16), (64, 64), (256, 256)] {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(-limit, limit));
        let k = estimate_k(&w)?;
        println!(
            "{rows:>3}x{cols:<3} empirical K {:.4}  bound {:.4}  (row sums in [{:.3}, {:.3}])",
            k.empirical, k.analytic, k.c, k.d
        );
    }
    Ok(())
}
