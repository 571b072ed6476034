//! Shape of the initial gradient-variance profile across batch sizes and
//! init scales, and for a deeper network.
//!
//!     cargo run --release --example variance_sweep

use resgrad::cli::{run_sweep, RunConfig};

fn main() -> resgrad::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.sgd.steps = 0;
    let data = cfg.load_dataset()?;
    for blocks in [5, 8] {
        cfg.net.blocks_per_scale = blocks;
        println!("{blocks} blocks per scale");
        for r in run_sweep(&cfg, &data, false)? {
            println!(
                "  batch {:>3} init x{:<3} growth {:<5} dip {:<5} boundary ratios {:?}",
                r.batch_size,
                r.init_scale,
                r.shape.growth_ok,
                r.shape.dip_ok,
                r.shape.boundary_ratios.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}
