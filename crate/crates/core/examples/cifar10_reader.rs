//! Reads CIFAR-10 binary batches. Without an argument a small fake batch is
//! written to a temporary directory first.
//!
//!     cargo run --release --example cifar10_reader [path/to/cifar-10-batches-bin]

use std::path::PathBuf;

use resgrad::data::{cifar10_train_files, load_cifar10_binary, write_cifar10_records, CIFAR_PIXELS};
use resgrad::numerics::SeededRng;

fn main() -> resgrad::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = std::env::temp_dir().join("resgrad-fake-cifar");
            std::fs::create_dir_all(&dir)?;
            let mut rng = SeededRng::new(0);
            for path in cifar10_train_files(&dir) {
                let labels: Vec<u8> = (0..10).collect();
                let pixels: Vec<u8> = (0..10 * CIFAR_PIXELS).map(|_| rng.index(256) as u8).collect();
                write_cifar10_records(&path, &labels, &pixels)?;
            }
            dir
        }
    };
    let ds = load_cifar10_binary(&cifar10_train_files(&dir))?;
    let mut counts = [0usize; 10];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    println!("{} images of {} features from {}", ds.len(), ds.input_dim(), dir.display());
    println!("per-class counts {counts:?}");
    Ok(())
}
