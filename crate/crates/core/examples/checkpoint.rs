//! Saves a partly trained model and restores it bit for bit.
//!
//!     cargo run --release --example checkpoint

use resgrad::cli::RunConfig;
use resgrad::numerics::SeededRng;
use resgrad::resnet::{build_network, Variant};
use resgrad::training::{evaluate_accuracy, train};

fn main() -> resgrad::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.sgd.steps = 100;
    let data = cfg.load_dataset()?;
    let spec = cfg.net_spec(Variant::BnResidual);
    let mut model = build_network(&spec, &mut SeededRng::new(0))?;
    train(&mut model, &data, &cfg.sgd_config())?;

    let path = std::env::temp_dir().join("resgrad-example.ckpt");
    model.save_checkpoint(&path)?;
    let mut restored = build_network(&spec, &mut SeededRng::new(99))?;
    restored.load_checkpoint(&path)?;
    println!(
        "saved {} bytes; accuracy before {:.4}, after reload {:.4}; identical: {}",
        std::fs::metadata(&path)?.len(),
        evaluate_accuracy(&model, &data, 128)?,
        evaluate_accuracy(&restored, &data, 128)?,
        restored == model
    );
    Ok(())
}
