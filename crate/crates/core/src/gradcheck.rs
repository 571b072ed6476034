//! Central finite-difference oracle for checking analytic gradients.
//!
//! The oracle only ever calls forward functions; it never touches a backward
//! path, so agreement is an independent confirmation.

/// Step used throughout the gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` at `point`, one coordinate at a time.
pub fn central_difference<F>(point: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let plus = f(&work);
            work[i] = orig - h;
            let minus = f(&work);
            work[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vectors are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
