//! Finite-difference check of the full residual network's backward pass.
//!
//!     cargo run --release --example gradient_check

use resgrad::gradcheck::{relative_error, FD_STEP};
use resgrad::numerics::{Batch, SeededRng};
use resgrad::resnet::{build_network, NetSpec};
use resgrad::training::softmax_xent;

fn main() -> resgrad::Result<()> {
    let spec = NetSpec::uniform(2, 2, 8, 2);
    let mut rng = SeededRng::new(0);
    let model = build_network(&spec, &mut rng)?;
    let x = Batch::gaussian(6, spec.input_dim, &mut rng);
    let labels: Vec<usize> = (0..6).map(|i| i % spec.num_classes).collect();

    let loss = |m: &resgrad::resnet::Model| -> f64 {
        let tape = m.forward(&x).unwrap();
        softmax_xent(&tape.logits, &labels).unwrap().unwrap().0
    };
    let tape = model.forward(&x)?;
    let (_, dlogits) = softmax_xent(&tape.logits, &labels)?.expect("finite loss");
    let grads = model.backward(&tape, &dlogits)?.grads;

    for (ti, (name, analytic)) in grads.tensors().into_iter().enumerate() {
        let numeric: Vec<f64> = (0..analytic.len().min(5))
            .map(|i| {
                let mut plus = model.clone();
                plus.tensors_mut()[ti].1[i] += FD_STEP;
                let mut minus = model.clone();
                minus.tensors_mut()[ti].1[i] -= FD_STEP;
                (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
            })
            .collect();
        let err = relative_error(&analytic[..numeric.len()], &numeric);
        println!("{name:<22} relative error {err:.2e}");
    }
    Ok(())
}
