//! BN + residual, BN only and residual only, trained from the same seed.
//!
//!     cargo run --release --example ablation [steps]

use resgrad::cli::{run_variant, RunConfig};
use resgrad::resnet::Variant;

fn main() -> resgrad::Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(steps) = std::env::args().nth(1) {
        cfg.sgd.steps = steps.parse().expect("steps");
    }
    let data = cfg.load_dataset()?;
    for variant in Variant::ALL {
        let r = run_variant(&cfg, &data, variant)?;
        match r.outcome.exploded_at {
            Some(step) => println!("{variant} ({variant:?}): exploded at step {step}"),
            None => println!("{variant} ({variant:?}): train accuracy {:.4}", r.final_accuracy),
        }
    }
    Ok(())
}
