//! Plain SGD on softmax cross-entropy with per-block variance probes.

use crate::data::{argmax, BatchIter, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{Batch, SeededRng};
use crate::probes::{probe_backward, record_a_stats, AStat, VarTrace};
use crate::resnet::{Model, ModelGrads};

/// Mean cross-entropy and its gradient `(softmax - onehot) / batch_size`.
///
/// Returns `None` when the logits or the loss are not finite.
pub fn softmax_xent(logits: &Batch, labels: &[usize]) -> Result<Option<(f64, Batch)>> {
    let [m, c] = logits.shape();
    if labels.len() != m {
        return Err(crate::error::shape_mismatch("softmax_xent", &[m], &[labels.len()]));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {l} out of range for {c} classes"
        )));
    }
    if !logits.is_finite() {
        return Ok(None);
    }
    let mut grad = logits.data().clone();
    let mut loss = 0.0;
    for (mut row, &label) in grad.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let z_label = row[label];
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss += max + sum.ln() - z_label;
        row /= sum;
        row[label] -= 1.0;
    }
    grad /= m as f64;
    let loss = loss / m as f64;
    if !loss.is_finite() {
        return Ok(None);
    }
    Ok(Some((loss, Batch::new(grad)?)))
}

/// Fraction of rows whose largest logit is the label.
pub fn batch_accuracy(logits: &Batch, labels: &[usize]) -> f64 {
    let correct = logits
        .data()
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous")) == l)
        .count();
    correct as f64 / labels.len() as f64
}

/// theta <- theta - lr * grad for every parameter, gamma and beta included.
pub fn sgd_step(model: &mut Model, grads: &ModelGrads, lr: f64) -> Result<()> {
    let g = grads.tensors();
    let mut p = model.tensors_mut();
    if g.len() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gradient tensors for {} parameters",
            g.len(),
            p.len()
        )));
    }
    for ((pn, pt), (gn, gt)) in p.iter_mut().zip(&g) {
        if pn != gn || pt.len() != gt.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient {gn} does not match parameter {pn}"
            )));
        }
        for (w, d) in pt.iter_mut().zip(gt.iter()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    /// Probes run at step 1 and at every multiple of this.
    pub probe_every: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: DEFAULT_LR,
            batch_size: 128,
            total_steps: 2000,
            probe_every: 100,
            seed: 0,
        }
    }
}

/// Learning rate of the desk-scale runs.
pub const DEFAULT_LR: f64 = 0.3;

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.probe_every == 0 || (self.total_steps > 0 && self.probe_every > self.total_steps) {
            return Err(Error::Config(format!(
                "probe_every must be in [1, total_steps], got {}",
                self.probe_every
            )));
        }
        Ok(())
    }

    pub fn is_probe_step(&self, step: usize) -> bool {
        step == 1 || step.is_multiple_of(self.probe_every)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    /// Accuracy on the step's mini-batch, before the update.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub trace: VarTrace,
    pub a_stats: Vec<AStat>,
    /// Step at which the loss or a gradient became non-finite.
    pub exploded_at: Option<usize>,
}

impl TrainOutcome {
    pub fn exploded(&self) -> bool {
        self.exploded_at.is_some()
    }
}

/// Runs `cfg.total_steps` SGD steps (numbered from 1).
///
/// A non-finite loss or gradient ends the run early; the failing step gets a
/// record with the non-finite loss and, when it is a probe step or the
/// gradient itself blew up, trace rows carrying the markers.
pub fn train(model: &mut Model, data: &Dataset, cfg: &SgdConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.input_dim() != model.spec.input_dim {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} features, model expects {}",
            data.input_dim(),
            model.spec.input_dim
        )));
    }
    let mut out = TrainOutcome {
        records: Vec::new(),
        trace: VarTrace::new(),
        a_stats: Vec::new(),
        exploded_at: None,
    };
    if cfg.total_steps == 0 {
        return Ok(out);
    }
    let mut batches = BatchIter::new(data.len(), cfg.batch_size, SeededRng::new(cfg.seed).derive(1))?;
    for step in 1..=cfg.total_steps {
        let (x, y) = data.select(&batches.next_indices());
        let tape = model.forward(&x)?;
        let accuracy = batch_accuracy(&tape.logits, &y);
        let Some((loss, dlogits)) = softmax_xent(&tape.logits, &y)? else {
            out.records.push(TrainRecord {
                step,
                loss: f64::NAN,
                train_accuracy: accuracy,
            });
            out.exploded_at = Some(step);
            break;
        };
        out.records.push(TrainRecord {
            step,
            loss,
            train_accuracy: accuracy,
        });
        let back = model.backward(&tape, &dlogits)?;
        let finite = back.grads.is_finite();
        if cfg.is_probe_step(step) || !finite {
            out.trace.extend(probe_backward(step, model, &back)?);
            out.a_stats.extend(record_a_stats(step, model));
        }
        if !finite {
            out.exploded_at = Some(step);
            break;
        }
        sgd_step(model, &back.grads, cfg.learning_rate)?;
    }
    Ok(out)
}

/// Accuracy over the whole dataset in training-mode BN, using consecutive
/// chunks of `batch_size` rows (a trailing chunk of one row is skipped).
pub fn evaluate_accuracy(model: &Model, data: &Dataset, batch_size: usize) -> Result<f64> {
    let n = data.len();
    let mut correct = 0.0;
    let mut seen = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        if end - start < 2 {
            break;
        }
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = data.select(&idx);
        let tape = model.forward(&x)?;
        correct += batch_accuracy(&tape.logits, &y) * y.len() as f64;
        seen += y.len();
        start = end;
    }
    if seen == 0 {
        return Err(Error::InvalidArgument("dataset too small to evaluate".into()));
    }
    Ok(correct / seen as f64)
}

/// Boundary-gradient probe of a model on one batch, without an update.
pub fn probe_at(model: &Model, x: &Batch, labels: &[usize], step: usize) -> Result<Option<Vec<crate::probes::VarRow>>> {
    let tape = model.forward(x)?;
    let Some((_, dlogits)) = softmax_xent(&tape.logits, labels)? else {
        return Ok(None);
    };
    let back = model.backward(&tape, &dlogits)?;
    Ok(Some(probe_backward(step, model, &back)?))
}
