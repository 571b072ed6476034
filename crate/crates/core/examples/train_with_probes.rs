//! Trains the default BN residual network on the synthetic task and prints
//! the per-block gradient variance at a few probe steps.
//!
//!     cargo run --release --example train_with_probes [steps]

use resgrad::cli::RunConfig;
use resgrad::numerics::SeededRng;
use resgrad::resnet::{build_network, Variant};
use resgrad::training::{evaluate_accuracy, train};

fn main() -> resgrad::Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(steps) = std::env::args().nth(1) {
        cfg.sgd.steps = steps.parse().expect("steps");
    }
    let data = cfg.load_dataset()?;
    let mut model = build_network(&cfg.net_spec(Variant::BnResidual), &mut SeededRng::new(cfg.run.seed))?;
    let outcome = train(&mut model, &data, &cfg.sgd_config())?;

    for step in outcome.trace.steps() {
        let rows = outcome.trace.at_step(step);
        let profile: Vec<String> = rows.iter().map(|r| format!("{:.1e}", r.mean_grad_variance)).collect();
        println!("step {step:>5}: {}", profile.join(" "));
    }
    let last = outcome.records.last().expect("at least one step");
    println!("final loss {:.4}, train accuracy {:.4}", last.loss, evaluate_accuracy(&model, &data, 128)?);
    Ok(())
}
