//! Closed-form variance propagation through BN, ReLU and dense layers.
//!
//! Every quantity that depends on the shifted-Gaussian ReLU moments comes in
//! two modes. [`MomentMode::PaperFormula`] evaluates the published closed
//! forms literally; [`MomentMode::Oracle`] integrates the same moments
//! numerically. The two disagree for the second moment (1.5 vs 0.5 at a = 0),
//! and both are kept so the difference stays visible.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, normal_pdf, p_of_a, SeededRng, INV_SQRT_2PI};
use crate::probes::fmt_f64;
use crate::resnet::{Model, NetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MomentMode {
    PaperFormula,
    Oracle,
}

impl MomentMode {
    pub const ALL: [MomentMode; 2] = [MomentMode::PaperFormula, MomentMode::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            MomentMode::PaperFormula => "paper",
            MomentMode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for MomentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(MomentMode::PaperFormula),
            "oracle" => Ok(MomentMode::Oracle),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?} (expected paper or oracle)"
            ))),
        }
    }
}

/// E(y) and E(y^2) for y = ReLU(z + a), z ~ N(0, 1), as published.
pub fn relu_moments_paper(a: f64) -> (f64, f64) {
    let g = (-a * a / 2.0).exp();
    let e_y = INV_SQRT_2PI + a / 2.0 + INV_SQRT_2PI * (1.0 - g);
    let e_y2 = 0.5 + (2.0 / PI).sqrt() * a + 0.5 * a * a + g + p_of_a(a);
    (e_y, e_y2)
}

/// Absolute tolerance of the quadrature oracle.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// E(y) and E(y^2) for y = ReLU(z + a) by adaptive quadrature over z > -a.
pub fn relu_moments_oracle(a: f64) -> (f64, f64) {
    let lo = -a;
    // The density is below 1e-31 past 12 standard deviations.
    let hi = lo.max(0.0) + 12.0;
    let e_y = adaptive_simpson(&|z: f64| (z + a) * normal_pdf(z), lo, hi, QUADRATURE_TOL);
    let e_y2 = adaptive_simpson(
        &|z: f64| (z + a) * (z + a) * normal_pdf(z),
        lo,
        hi,
        QUADRATURE_TOL,
    );
    (e_y, e_y2)
}

pub fn relu_moments(a: f64, mode: MomentMode) -> (f64, f64) {
    match mode {
        MomentMode::PaperFormula => relu_moments_paper(a),
        MomentMode::Oracle => relu_moments_oracle(a),
    }
}

/// Monte Carlo estimate of the ReLU moments with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMoments {
    pub e_y: f64,
    pub se_y: f64,
    pub e_y2: f64,
    pub se_y2: f64,
}

pub fn relu_moments_mc(a: f64, samples: usize, rng: &mut SeededRng) -> McMoments {
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let y = (rng.gaussian() + a).max(0.0);
        let y2 = y * y;
        s1 += y;
        s2 += y2;
        s3 += y2;
        s4 += y2 * y2;
    }
    let n = samples as f64;
    let e_y = s1 / n;
    let e_y2 = s2 / n;
    let var_y = (s3 / n - e_y * e_y).max(0.0);
    let var_y2 = (s4 / n - e_y2 * e_y2).max(0.0);
    McMoments {
        e_y,
        se_y: (var_y / n).sqrt(),
        e_y2,
        se_y2: (var_y2 / n).sqrt(),
    }
}

/// (c1, c2) = (0.5 + p(a), E(y^2)).
pub fn c_constants(a: f64, mode: MomentMode) -> (f64, f64) {
    (0.5 + p_of_a(a), relu_moments(a, mode).1)
}

/// Variance of the ReLU output in the given mode, E(y^2) - E(y)^2.
pub fn relu_output_variance(a: f64, mode: MomentMode) -> f64 {
    let (e_y, e_y2) = relu_moments(a, mode);
    e_y2 - e_y * e_y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub a: f64,
    pub mode: MomentMode,
    pub e_y: f64,
    pub e_y2: f64,
    pub p_a: f64,
    pub c1: f64,
    pub c2: f64,
    /// c1 / c2, the per-layer gradient-variance constant.
    pub eq14_constant: f64,
}

impl MomentReport {
    pub fn new(a: f64, mode: MomentMode) -> Self {
        let (e_y, e_y2) = relu_moments(a, mode);
        let p_a = p_of_a(a);
        let c1 = 0.5 + p_a;
        MomentReport {
            a,
            mode,
            e_y,
            e_y2,
            p_a,
            c1,
            c2: e_y2,
            eq14_constant: c1 / e_y2,
        }
    }
}

pub const MOMENTS_HEADER: [&str; 8] = ["a", "mode", "e_y", "e_y2", "p_a", "c1", "c2", "eq14_constant"];

/// a = 0, 0.25, ..., 2.
pub fn default_a_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.25).collect()
}

pub fn write_moments_csv<W: Write>(reports: &[MomentReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(MOMENTS_HEADER)?;
    for r in reports {
        out.write_record([
            fmt_f64(r.a),
            r.mode.name().to_string(),
            fmt_f64(r.e_y),
            fmt_f64(r.e_y2),
            fmt_f64(r.p_a),
            fmt_f64(r.c1),
            fmt_f64(r.c2),
            fmt_f64(r.eq14_constant),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads rows written by [`write_moments_csv`].
pub fn read_moments_csv<R: std::io::Read>(r: R) -> Result<Vec<MomentReport>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MOMENTS_HEADER {
        return Err(Error::Format {
            path: "<moments>".into(),
            msg: format!("unexpected header {header:?}"),
        });
    }
    let parse = |s: &str| {
        s.parse::<f64>().map_err(|e| Error::Format {
            path: "<moments>".into(),
            msg: format!("bad number {s:?}: {e}"),
        })
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(MomentReport {
            a: parse(&rec[0])?,
            mode: rec[1].parse()?,
            e_y: parse(&rec[2])?,
            e_y2: parse(&rec[3])?,
            p_a: parse(&rec[4])?,
            c1: parse(&rec[5])?,
            c2: parse(&rec[6])?,
            eq14_constant: parse(&rec[7])?,
        });
    }
    Ok(out)
}

/// One a-value of the quadrature versus Monte Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheck {
    pub a: f64,
    pub paper: (f64, f64),
    pub quadrature: (f64, f64),
    pub mc: McMoments,
    /// Largest |quadrature - MC| in units of the MC standard error.
    pub max_z: f64,
}

impl MomentCheck {
    pub fn agrees(&self, z_limit: f64) -> bool {
        self.max_z <= z_limit
    }
}

/// Compares both oracles at every `a`, each with its own derived seed.
pub fn check_moment_oracles(grid: &[f64], samples: usize, seed: u64) -> Vec<MomentCheck> {
    let base = SeededRng::new(seed);
    grid.iter()
        .enumerate()
        .map(|(i, &a)| {
            let quadrature = relu_moments_oracle(a);
            let mc = relu_moments_mc(a, samples, &mut base.derive(i as u64));
            let z1 = (quadrature.0 - mc.e_y).abs() / mc.se_y;
            let z2 = (quadrature.1 - mc.e_y2).abs() / mc.se_y2;
            MomentCheck {
                a,
                paper: relu_moments_paper(a),
                quadrature,
                mc,
                max_z: z1.max(z2),
            }
        })
        .collect()
}

/// Variance of the gradient at a BN input from the statistics of the
/// gradient at its output.
pub fn bn_grad_variance(var_dz: f64, e_dz_zhat: f64, gamma: f64, var_x: f64) -> Result<f64> {
    if !(var_x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "input variance must be positive, got {var_x}"
        )));
    }
    Ok(gamma * gamma / var_x * (var_dz - e_dz_zhat * e_dz_zhat))
}

fn check_len(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(crate::error::shape_mismatch(op, &[expected], &[got]));
    }
    Ok(())
}

/// out_i = sum_j w_ij^2 var_in_j.
pub fn forward_variance_conv(w: &Array2<f64>, var_in: &[f64]) -> Result<Vec<f64>> {
    check_len("forward_variance_conv", w.ncols(), var_in.len())?;
    Ok(w.rows()
        .into_iter()
        .map(|row| row.iter().zip(var_in).map(|(x, v)| x * x * v).sum())
        .collect())
}

/// out_i = sum_j w_ji^2 var_dout_j.
pub fn backward_variance_conv(w: &Array2<f64>, var_dout: &[f64]) -> Result<Vec<f64>> {
    check_len("backward_variance_conv", w.nrows(), var_dout.len())?;
    Ok(w.columns()
        .into_iter()
        .map(|col| col.iter().zip(var_dout).map(|(x, v)| x * x * v).sum())
        .collect())
}

/// Gradient variance after the ReLU mask: (0.5 + p(a)) var_din.
pub fn relu_grad_variance(a: f64, var_din: f64) -> f64 {
    (0.5 + p_of_a(a)) * var_din
}

/// Row sums of the elementwise-squared matrix.
pub fn squared_row_sums(w: &Array2<f64>) -> Vec<f64> {
    w.rows().into_iter().map(|r| r.iter().map(|x| x * x).sum()).collect()
}

/// Per-feature gradient variance at the output of layer L-1 predicted from
/// the variance at the output of layer L.
///
/// `w_l` maps n_L to n_L' features, `w_lm1` maps n_{L-1} to n_L.
pub fn layer_grad_variance_ratio(
    w_l: &Array2<f64>,
    w_lm1: &Array2<f64>,
    var_dy_l: &[f64],
    a: f64,
    mode: MomentMode,
) -> Result<Vec<f64>> {
    if w_lm1.nrows() != w_l.ncols() {
        return Err(crate::error::shape_mismatch(
            "layer_grad_variance_ratio",
            &[w_l.ncols(), w_lm1.ncols()],
            w_lm1.shape(),
        ));
    }
    let num = backward_variance_conv(w_l, var_dy_l)?;
    let den = squared_row_sums(w_lm1);
    let (c1, c2) = c_constants(a, mode);
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(i, (n, d))| {
            if *d > 0.0 {
                Ok(n / d * c1 / c2)
            } else {
                Err(Error::InvalidArgument(format!("row {i} of w_lm1 is zero")))
            }
        })
        .collect()
}

/// (lower, upper) bounds on E(Var(dy_{L-1})) from weight statistics.
#[allow(clippy::too_many_arguments)]
pub fn layer_grad_variance_bounds(
    n_l_out: usize,
    n_lm1_in: usize,
    var_w_l: f64,
    var_w_lm1: f64,
    e_var_dy_l: f64,
    a: f64,
    mode: MomentMode,
    k: f64,
) -> Result<(f64, f64)> {
    if n_l_out == 0 || n_lm1_in == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(var_w_l > 0.0 && var_w_lm1 > 0.0) || e_var_dy_l < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "variances must be positive (got {var_w_l}, {var_w_lm1}, {e_var_dy_l})"
        )));
    }
    if !(k >= 1.0) {
        return Err(Error::InvalidArgument(format!("K must be >= 1, got {k}")));
    }
    let (c1, c2) = c_constants(a, mode);
    let lower =
        n_l_out as f64 / n_lm1_in as f64 * (var_w_l / var_w_lm1) * (c1 / c2) * e_var_dy_l;
    Ok((lower, k * lower))
}

/// (c + d)^2 / (4 c d), the bound on E(1/X) E(X) for X in [c, d].
pub fn kantorovich_bound(c: f64, d: f64) -> Result<f64> {
    if !(c > 0.0) || d < c {
        return Err(Error::InvalidArgument(format!(
            "need 0 < c <= d, got c = {c}, d = {d}"
        )));
    }
    Ok((c + d) * (c + d) / (4.0 * c * d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KEstimate {
    /// mean(1/X) mean(X) over the squared row sums X.
    pub empirical: f64,
    /// Kantorovich bound with c = min X, d = max X.
    pub analytic: f64,
    pub c: f64,
    pub d: f64,
}

pub fn estimate_k(w: &Array2<f64>) -> Result<KEstimate> {
    let x = squared_row_sums(w);
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let c = x.iter().copied().fold(f64::INFINITY, f64::min);
    let d = x.iter().copied().fold(0.0, f64::max);
    let analytic = kantorovich_bound(c, d)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_inv = x.iter().map(|v| 1.0 / v).sum::<f64>() / n;
    Ok(KEstimate {
        empirical: mean_x * mean_inv,
        analytic,
        c,
        d,
    })
}

/// Weight matrices of one residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub shortcut: Option<Array2<f64>>,
    pub conv1: Array2<f64>,
    pub conv2: Array2<f64>,
}

impl BlockWeights {
    pub fn from_model(model: &Model) -> Vec<BlockWeights> {
        model
            .blocks
            .iter()
            .map(|b| BlockWeights {
                shortcut: b.shortcut.as_ref().map(|l| l.dense.weights.clone()),
                conv1: b.conv1.dense.weights.clone(),
                conv2: b.conv2.dense.weights.clone(),
            })
            .collect()
    }
}

/// Per-block forward variance predicted block by block and in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPrediction {
    pub recursion: Vec<Vec<f64>>,
    pub closed_form: Vec<Vec<f64>>,
}

/// Output widths must follow the layout; the input width of a scale's first
/// block is taken from its matrices.
fn check_block_weights(spec: &NetSpec, weights: &[BlockWeights]) -> Result<()> {
    let layout = spec.block_layout();
    check_len("block weights", layout.len(), weights.len())?;
    for (info, w) in layout.iter().zip(weights) {
        let in_width = if info.is_first_of_scale() { w.conv1.ncols() } else { info.width };
        let mut expect = vec![
            ("conv1", w.conv1.shape(), [info.width, in_width]),
            ("conv2", w.conv2.shape(), [info.width, info.width]),
        ];
        match (&w.shortcut, info.is_first_of_scale()) {
            (Some(s), true) => expect.push(("shortcut", s.shape(), [info.width, in_width])),
            (None, false) => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "block {}: shortcut weights must be present exactly for the first block of a scale",
                    info.index
                )))
            }
        }
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::InvalidArgument(format!(
                    "block {} {name}: expected {want:?}, got {got:?}",
                    info.index
                )));
            }
        }
    }
    Ok(())
}

/// Gain of a BN -> ReLU -> dense path and the explicit factor applied to the
/// first block of a scale.
///
/// The published form uses c2 and an explicit 1/k. The oracle uses the exact
/// variance of the ReLU output and no explicit factor, since squared row
/// sums already scale with the fan-in.
pub fn forward_gain(a: f64, mode: MomentMode, growth: usize) -> (f64, f64) {
    match mode {
        MomentMode::PaperFormula => (c_constants(a, mode).1, 1.0 / growth as f64),
        MomentMode::Oracle => (relu_output_variance(a, mode), 1.0),
    }
}

/// Forward variance of every block output at initialization.
///
/// A scale's first block starts afresh, `g f (Wbar^2 1 + What^2 1)`; later
/// blocks add `g What^2 1` to their input variance.
pub fn resnet_forward_variance(
    spec: &NetSpec,
    weights: &[BlockWeights],
    a: f64,
    mode: MomentMode,
) -> Result<ForwardPrediction> {
    spec.validate()?;
    check_block_weights(spec, weights)?;
    let (g, first) = forward_gain(a, mode, spec.growth);
    let layout = spec.block_layout();

    let mut recursion: Vec<Vec<f64>> = Vec::with_capacity(weights.len());
    for (info, w) in layout.iter().zip(weights) {
        let conv = squared_row_sums(&w.conv2);
        let v: Vec<f64> = if info.is_first_of_scale() {
            let sc = squared_row_sums(w.shortcut.as_ref().expect("checked"));
            sc.iter().zip(&conv).map(|(s, c)| g * (first * (s + c))).collect()
        } else {
            let prev = recursion.last().expect("first block opens a scale");
            prev.iter().zip(&conv).map(|(p, c)| p + g * c).collect()
        };
        recursion.push(v);
    }

    // Closed form: g (sum_{J=2}^{N} What_J^2 1 + f (Wbar_1^2 1 + What_1^2 1)).
    let mut closed_form = Vec::with_capacity(weights.len());
    for (n, info) in layout.iter().enumerate() {
        let start = n + 1 - info.position;
        let open = &weights[start];
        let sc = squared_row_sums(open.shortcut.as_ref().expect("checked"));
        let c1 = squared_row_sums(&open.conv2);
        let mut inner: Vec<f64> = vec![0.0; info.width];
        for w in &weights[start + 1..=n] {
            for (acc, c) in inner.iter_mut().zip(squared_row_sums(&w.conv2)) {
                *acc += c;
            }
        }
        closed_form.push(
            inner
                .iter()
                .zip(sc.iter().zip(&c1))
                .map(|(s, (b, c))| g * (s + first * (b + c)))
                .collect(),
        );
    }
    Ok(ForwardPrediction {
        recursion,
        closed_form,
    })
}

/// Entry variances of one block's weight matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeightVars {
    pub shortcut: Option<f64>,
    pub conv1: f64,
    pub conv2: f64,
}

impl BlockWeightVars {
    pub fn from_weights(w: &BlockWeights) -> Self {
        BlockWeightVars {
            shortcut: w.shortcut.as_ref().map(entry_variance),
            conv1: entry_variance(&w.conv1),
            conv2: entry_variance(&w.conv2),
        }
    }
}

/// Population variance of all matrix entries.
pub fn entry_variance(w: &Array2<f64>) -> f64 {
    let n = w.len() as f64;
    let mean = w.sum() / n;
    w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// L / (L - 1) for the L-th block of a scale; undefined for L = 1.
pub fn simplified_ratio(position: usize) -> Option<f64> {
    (position >= 2).then(|| position as f64 / (position - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardBound {
    pub block_index: usize,
    pub position: usize,
    /// Upper bound on E(Var(dy_{L-1})); `None` for the first block of a scale.
    pub bound: Option<f64>,
    pub simplified_ratio: Option<f64>,
}

/// Upper bound on the gradient variance at the input of every block that is
/// not the first of its scale:
/// K_L (1 + (c1/c2)^2 Var(Wtilde_L) / [sum_{J=2}^{L-1} Var(What_J) + (Var(Wbar_1) + Var(What_1)) / k]) e.
pub fn resnet_backward_variance_bound(
    spec: &NetSpec,
    weight_vars: &[BlockWeightVars],
    e_var_dy: f64,
    a: f64,
    mode: MomentMode,
    k_per_block: &[f64],
) -> Result<Vec<BackwardBound>> {
    spec.validate()?;
    let layout = spec.block_layout();
    check_len("weight variances", layout.len(), weight_vars.len())?;
    check_len("K per block", layout.len(), k_per_block.len())?;
    if e_var_dy < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gradient variance must be non-negative, got {e_var_dy}"
        )));
    }
    let (c1, c2) = c_constants(a, mode);
    let ratio2 = (c1 / c2) * (c1 / c2);
    let kf = spec.growth as f64;
    let mut out = Vec::with_capacity(layout.len());
    for (n, info) in layout.iter().enumerate() {
        if info.is_first_of_scale() {
            out.push(BackwardBound {
                block_index: info.index,
                position: 1,
                bound: None,
                simplified_ratio: None,
            });
            continue;
        }
        let start = n + 1 - info.position;
        let open = &weight_vars[start];
        let shortcut = open.shortcut.ok_or_else(|| {
            Error::InvalidArgument(format!("block {} lacks a shortcut variance", start + 1))
        })?;
        let mut den = (shortcut + open.conv2) / kf;
        for wv in &weight_vars[start + 1..n] {
            den += wv.conv2;
        }
        let vars_ok = den > 0.0 && weight_vars[n].conv1 >= 0.0;
        if !vars_ok {
            return Err(Error::InvalidArgument(format!(
                "non-positive weight variance before block {}",
                info.index
            )));
        }
        let k = k_per_block[n];
        if !(k >= 1.0) {
            return Err(Error::InvalidArgument(format!("K must be >= 1, got {k}")));
        }
        out.push(BackwardBound {
            block_index: info.index,
            position: info.position,
            bound: Some(k * (1.0 + ratio2 * weight_vars[n].conv1 / den) * e_var_dy),
            simplified_ratio: simplified_ratio(info.position),
        });
    }
    Ok(out)
}

/// Per-block forward and backward predictions for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub mode: MomentMode,
    pub a: f64,
    pub forward: Vec<Vec<f64>>,
    /// (lower, upper) bound on the backward ratio Var(dy_{L-1}) / Var(dy_L);
    /// lower uses K = 1, upper the empirical K of the block's first layer.
    pub backward: Vec<Option<(f64, f64)>>,
    pub simplified_ratio: Vec<Option<f64>>,
    pub k: Vec<KEstimate>,
}

pub const PREDICTION_HEADER: [&str; 11] = [
    "block_index",
    "scale_index",
    "position",
    "mode",
    "forward_variance_mean",
    "backward_lower",
    "backward_upper",
    "simplified_ratio",
    "k_empirical",
    "k_analytic",
    "a",
];

impl PropagationReport {
    pub fn for_model(model: &Model, a: f64, mode: MomentMode) -> Result<Self> {
        let weights = BlockWeights::from_model(model);
        let forward = resnet_forward_variance(&model.spec, &weights, a, mode)?.recursion;
        let vars: Vec<BlockWeightVars> = weights.iter().map(BlockWeightVars::from_weights).collect();
        let k: Vec<KEstimate> = weights
            .iter()
            .map(|w| estimate_k(&w.conv1))
            .collect::<Result<_>>()?;
        let ones = vec![1.0; weights.len()];
        let k_emp: Vec<f64> = k.iter().map(|e| e.empirical.max(1.0)).collect();
        let lower = resnet_backward_variance_bound(&model.spec, &vars, 1.0, a, mode, &ones)?;
        let upper = resnet_backward_variance_bound(&model.spec, &vars, 1.0, a, mode, &k_emp)?;
        let backward = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| l.bound.zip(u.bound))
            .collect();
        Ok(PropagationReport {
            mode,
            a,
            forward,
            backward,
            simplified_ratio: lower.iter().map(|b| b.simplified_ratio).collect(),
            k,
        })
    }

    pub fn write_csv<W: Write>(&self, spec: &NetSpec, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(PREDICTION_HEADER)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for (n, info) in spec.block_layout().iter().enumerate() {
            let fwd = &self.forward[n];
            out.write_record([
                info.index.to_string(),
                info.scale.to_string(),
                info.position.to_string(),
                self.mode.name().to_string(),
                fmt_f64(fwd.iter().sum::<f64>() / fwd.len() as f64),
                opt(self.backward[n].map(|b| b.0)),
                opt(self.backward[n].map(|b| b.1)),
                opt(self.simplified_ratio[n]),
                fmt_f64(self.k[n].empirical),
                fmt_f64(self.k[n].analytic),
                fmt_f64(self.a),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
