//! Batch-major arithmetic, seeded sampling and Gaussian special functions.
//!
//! Reductions walk the batch rows in a fixed order so that results are
//! bit-identical from run to run.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A batch-major grid: rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch(Array2<f64>);

impl Batch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "batch must be non-empty, got {:?}",
                data.shape()
            )));
        }
        Ok(Batch(data.as_standard_layout().into_owned()))
    }

    pub fn from_vec(batch_size: usize, n_features: usize, data: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((batch_size, n_features), data)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Batch::new(arr)
    }

    pub fn zeros(batch_size: usize, n_features: usize) -> Self {
        Batch(Array2::zeros((batch_size, n_features)))
    }

    /// Single-feature batch from a column of values.
    pub fn column(values: &[f64]) -> Result<Self> {
        Batch::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn gaussian(batch_size: usize, n_features: usize, rng: &mut SeededRng) -> Self {
        let data = (0..batch_size * n_features).map(|_| rng.gaussian()).collect();
        Batch(Array2::from_shape_vec((batch_size, n_features), data).expect("shape"))
    }

    pub fn batch_size(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.0.nrows(), self.0.ncols()]
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.0.as_slice_mut().expect("standard layout")
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the whole grid.
    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn check_shape(&self, op: &'static str, expected: [usize; 2]) -> Result<()> {
        if self.shape() != expected {
            return Err(crate::error::shape_mismatch(op, &expected, &self.shape()));
        }
        Ok(())
    }
}

/// Per-feature arithmetic mean over the batch.
pub fn batch_mean(b: &Batch) -> Array1<f64> {
    let m = b.batch_size() as f64;
    let mut acc = Array1::<f64>::zeros(b.n_features());
    for row in b.data().axis_iter(Axis(0)) {
        acc += &row;
    }
    acc / m
}

/// Per-feature biased (divide-by-m) batch variance.
pub fn batch_var(b: &Batch) -> Result<Array1<f64>> {
    if b.batch_size() < 2 {
        return Err(Error::UndefinedVariance(b.batch_size()));
    }
    let mean = batch_mean(b);
    let m = b.batch_size() as f64;
    let mut acc = Array1::<f64>::zeros(b.n_features());
    for row in b.data().axis_iter(Axis(0)) {
        for ((a, &x), &mu) in acc.iter_mut().zip(row.iter()).zip(mean.iter()) {
            let d = x - mu;
            *a += d * d;
        }
    }
    Ok(acc / m)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

// Below this, Phi(x) - 1/2 comes from the Taylor series; above it the upper
// tail comes from Laplace's continued fraction.
const SERIES_CUTOFF: f64 = 3.0;

/// phi(x) * (x + x^3/3 + x^5/(3*5) + ...) = Phi(x) - 1/2, all terms share the sign of x.
fn half_centered_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    normal_pdf(x) * sum
}

/// Q(x) = 1 - Phi(x) for x >= SERIES_CUTOFF, via modified Lentz on
/// phi(x) / (x + 1/(x + 2/(x + 3/(x + ...)))).
fn upper_tail_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    normal_pdf(x) / f
}

/// Upper tail Q(z) = 1 - Phi(z), accurate in relative terms for large z.
pub fn normal_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 0.0 {
        return 1.0 - normal_sf(-z);
    }
    if z < SERIES_CUTOFF {
        0.5 - half_centered_series(z)
    } else if z > 40.0 {
        0.0
    } else {
        upper_tail_cf(z)
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z <= 0.0 {
        normal_sf(-z)
    } else {
        1.0 - normal_sf(z)
    }
}

/// p(a) = integral of the standard normal density from 0 to a (signed).
///
/// Computed from |a| and re-signed so that p(-a) = -p(a) holds bit-for-bit.
pub fn p_of_a(a: f64) -> f64 {
    if a.is_nan() {
        return f64::NAN;
    }
    let x = a.abs();
    let p = if x < SERIES_CUTOFF {
        half_centered_series(x)
    } else {
        0.5 - normal_sf(x)
    };
    if a < 0.0 {
        -p
    } else {
        p
    }
}

/// Adaptive Simpson quadrature of `f` over `[lo, hi]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let fa = f(lo);
    let fb = f(hi);
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, lo, hi, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Seeded stream of uniform and Gaussian samples (ChaCha8 keystream).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal sample via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Derives an independent stream for a named purpose.
    pub fn derive(&self, tag: u64) -> SeededRng {
        SeededRng::new(
            self.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
                ^ 0x5851_F42D_4C95_7F2D,
        )
    }

    pub fn shuffle(&mut self, v: &mut [usize]) {
        for i in (1..v.len()).rev() {
            let j = self.index(i + 1);
            v.swap(i, j);
        }
    }
}
