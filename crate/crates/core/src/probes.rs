//! Per-block gradient statistics recorded during backpropagation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{batch_var, Batch};
use crate::resnet::{BackwardTape, Model};

/// Cross-block spread of mean gradient variance that counts as an explosion.
pub const EXPLOSION_RATIO: f64 = 1e3;

/// One row of the variance trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarRow {
    pub step: usize,
    pub block_index: usize,
    pub scale_index: usize,
    pub mean_grad_variance: f64,
    pub grad_l2: f64,
    /// Mean |beta/gamma| over the block's BN layers; NaN without BN.
    pub mean_abs_a: f64,
}

impl VarRow {
    pub fn is_finite(&self) -> bool {
        self.mean_grad_variance.is_finite() && self.grad_l2.is_finite()
    }
}

/// Statistics of one boundary gradient.
///
/// A gradient with any non-finite entry yields a row whose statistics are
/// non-finite; the row is kept as the explosion marker.
pub fn record_grad_stats(
    step: usize,
    block_index: usize,
    scale_index: usize,
    grad: &Batch,
) -> Result<VarRow> {
    let (mean_grad_variance, grad_l2) = if grad.is_finite() {
        let v = batch_var(grad)?;
        (v.mean().unwrap_or(f64::NAN), grad.l2_norm())
    } else {
        let any_nan = grad.as_slice().iter().any(|v| v.is_nan());
        let marker = if any_nan { f64::NAN } else { f64::INFINITY };
        (marker, marker)
    };
    Ok(VarRow {
        step,
        block_index,
        scale_index,
        mean_grad_variance,
        grad_l2,
        mean_abs_a: f64::NAN,
    })
}

/// Mean |beta/gamma| of one BN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AStat {
    pub step: usize,
    /// 1-based block index; 0 for the head.
    pub block_index: usize,
    pub layer: String,
    pub mean_abs_a: f64,
    /// Features skipped because gamma was exactly zero.
    pub excluded: usize,
}

/// mean |beta_i / gamma_i| for every BN layer; empty for models without BN.
pub fn record_a_stats(step: usize, model: &Model) -> Vec<AStat> {
    model
        .bn_layers()
        .into_iter()
        .map(|(block_index, layer, bn)| {
            let mut sum = 0.0;
            let mut used = 0usize;
            let mut excluded = 0usize;
            for (b, g) in bn.beta.iter().zip(bn.gamma.iter()) {
                if *g == 0.0 {
                    excluded += 1;
                } else {
                    sum += (b / g).abs();
                    used += 1;
                }
            }
            AStat {
                step,
                block_index,
                layer,
                mean_abs_a: if used == 0 { f64::NAN } else { sum / used as f64 },
                excluded,
            }
        })
        .collect()
}

/// One row per block for the boundary gradients of a backward pass.
pub fn probe_backward(step: usize, model: &Model, back: &BackwardTape) -> Result<Vec<VarRow>> {
    if back.boundary.len() != model.blocks.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} boundary gradients, got {}",
            model.blocks.len(),
            back.boundary.len()
        )));
    }
    let a_stats = record_a_stats(step, model);
    model
        .blocks
        .iter()
        .zip(&back.boundary)
        .map(|(block, grad)| {
            let mut row = record_grad_stats(step, block.info.index, block.info.scale, grad)?;
            let vals: Vec<f64> = a_stats
                .iter()
                .filter(|s| s.block_index == block.info.index)
                .map(|s| s.mean_abs_a)
                .collect();
            if !vals.is_empty() {
                row.mean_abs_a = vals.iter().sum::<f64>() / vals.len() as f64;
            }
            Ok(row)
        })
        .collect()
}

/// Ordered collection of variance rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarTrace {
    pub rows: Vec<VarRow>,
}

impl VarTrace {
    pub fn new() -> Self {
        VarTrace::default()
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = VarRow>) {
        self.rows.extend(rows);
    }

    pub fn steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.rows.iter().map(|r| r.step).collect();
        s.dedup();
        s
    }

    /// Rows of one step, in block order.
    pub fn at_step(&self, step: usize) -> Vec<VarRow> {
        self.rows.iter().filter(|r| r.step == step).copied().collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.step.to_string(),
                r.block_index.to_string(),
                r.scale_index.to_string(),
                fmt_f64(r.mean_grad_variance),
                fmt_f64(r.grad_l2),
                fmt_f64(r.mean_abs_a),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(Error::Format {
                path: "<variance trace>".into(),
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        Ok(VarTrace { rows })
    }
}

pub const TRACE_HEADER: [&str; 6] = [
    "step",
    "block_index",
    "scale_index",
    "mean_grad_variance",
    "grad_l2",
    "mean_abs_a",
];

/// Shortest decimal that round-trips, with `inf`/`-inf`/`nan` literals.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplosionCause {
    NonFinite,
    /// max/min mean gradient variance across blocks at one step.
    Spread(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Explosion {
    pub step: usize,
    pub block_index: usize,
    pub cause: ExplosionCause,
}

/// First row that is non-finite, or first step whose cross-block spread of
/// mean gradient variance reaches [`EXPLOSION_RATIO`].
///
/// For a spread the reported block is the one with the largest variance.
pub fn detect_explosion(trace: &VarTrace) -> Option<Explosion> {
    for step in trace.steps() {
        let rows = trace.at_step(step);
        if let Some(r) = rows.iter().find(|r| !r.is_finite()) {
            return Some(Explosion {
                step,
                block_index: r.block_index,
                cause: ExplosionCause::NonFinite,
            });
        }
        let max = rows
            .iter()
            .max_by(|a, b| a.mean_grad_variance.total_cmp(&b.mean_grad_variance));
        let min = rows
            .iter()
            .map(|r| r.mean_grad_variance)
            .fold(f64::INFINITY, f64::min);
        if let Some(max) = max {
            let ratio = max.mean_grad_variance / min;
            if ratio >= EXPLOSION_RATIO || (min == 0.0 && max.mean_grad_variance > 0.0) {
                return Some(Explosion {
                    step,
                    block_index: max.block_index,
                    cause: ExplosionCause::Spread(ratio),
                });
            }
        }
    }
    None
}

/// Outcome of checking a per-block variance profile against the expected shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileShape {
    /// Backward-direction ratios Var(L-1)/Var(L) inside each scale, per scale.
    pub within_ratios: Vec<Vec<f64>>,
    /// Var(last block of scale s-1) / Var(first block of scale s), per boundary.
    pub boundary_ratios: Vec<f64>,
    pub growth_ok: bool,
    pub dip_ok: bool,
}

impl ProfileShape {
    pub fn ok(&self) -> bool {
        self.growth_ok && self.dip_ok
    }
}

/// Checks the within-scale growth and scale-boundary dip of one step's rows.
///
/// Growth: reading backward, consecutive ratios inside a scale are >= 1 and
/// non-increasing. Dip: the last block of every earlier scale has lower
/// variance than the first block of the next scale.
pub fn check_profile_shape(rows: &[VarRow]) -> ProfileShape {
    let mut scales: Vec<Vec<f64>> = Vec::new();
    let mut current = 0;
    for r in rows {
        if r.scale_index != current {
            scales.push(Vec::new());
            current = r.scale_index;
        }
        scales.last_mut().expect("pushed").push(r.mean_grad_variance);
    }
    let within_ratios: Vec<Vec<f64>> = scales
        .iter()
        .map(|s| s.windows(2).map(|w| w[0] / w[1]).collect())
        .collect();
    let growth_ok = within_ratios.iter().all(|rs| {
        rs.iter().all(|&r| r >= 1.0) && rs.windows(2).all(|w| w[1] <= w[0])
    });
    let boundary_ratios: Vec<f64> = scales
        .windows(2)
        .map(|w| w[0].last().expect("non-empty") / w[1].first().expect("non-empty"))
        .collect();
    let dip_ok = boundary_ratios.iter().all(|&r| r < 1.0);
    ProfileShape {
        within_ratios,
        boundary_ratios,
        growth_ok,
        dip_ok,
    }
}
