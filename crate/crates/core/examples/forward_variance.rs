//! Predicted versus measured forward variance of every block at initialization.
//!
//!     cargo run --release --example forward_variance [base_width]

use resgrad::analysis::{resnet_forward_variance, BlockWeights, MomentMode};
use resgrad::numerics::{batch_var, Batch, SeededRng};
use resgrad::resnet::{build_network, NetSpec};

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn main() -> resgrad::Result<()> {
    let width = std::env::args().nth(1).map_or(64, |w| w.parse().expect("width"));
    let spec = NetSpec::uniform(2, 3, width, 2);
    let mut rng = SeededRng::new(1);
    let model = build_network(&spec, &mut rng)?;
    let x = Batch::gaussian(10_000, spec.input_dim, &mut rng);
    let tape = model.forward(&x)?;
    let weights = BlockWeights::from_model(&model);
    let oracle = resnet_forward_variance(&spec, &weights, 0.0, MomentMode::Oracle)?;
    let paper = resnet_forward_variance(&spec, &weights, 0.0, MomentMode::PaperFormula)?;

    println!("block  measured  predicted  published-constants");
    for (i, out) in tape.block_outputs.iter().enumerate() {
        println!(
            "{:>5}  {:>8.4}  {:>9.4}  {:>9.4}",
            i + 1,
            mean(batch_var(out)?.iter().copied()),
            mean(oracle.recursion[i].iter().copied()),
            mean(paper.recursion[i].iter().copied())
        );
    }
    Ok(())
}
