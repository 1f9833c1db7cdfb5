//! Small numerical kernels shared across modules.

/// `log(sum(exp(values)))` with the usual max shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-sum-exp of an affine combination `a * x[i] + b * y[i]`, plus the
/// weighted mean of `x` under the induced Gibbs weights.
pub(crate) fn log_sum_exp_combo(a: f64, x: &[f64], b: f64, y: &[f64]) -> (f64, f64) {
    debug_assert_eq!(x.len(), y.len());
    let max = x
        .iter()
        .zip(y)
        .map(|(u, v)| a * u + b * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut moment = 0.0;
    for (u, v) in x.iter().zip(y) {
        let w = (a * u + b * v - max).exp();
        total += w;
        moment += w * u;
    }
    (max + total.ln(), moment / total)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = x
        .iter()
        .zip(y)
        .map(|(u, v)| (v - intercept - slope * u).abs())
        .fold(0.0, f64::max);
    Some(LinearFit {
        slope,
        intercept,
        max_residual,
    })
}

/// Bisection on a decreasing function until the bracket is narrower than
/// `width`. The caller guarantees `f(lo) >= 0 >= f(hi)`.
pub(crate) fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, width: f64) -> (f64, f64) {
    for _ in 0..400 {
        if hi - lo <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Parses `"p/q"` or a decimal literal into binary64.
pub fn parse_rational(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((p, q)) = text.split_once('/') {
        let p: f64 = p.trim().parse().ok()?;
        let q: f64 = q.trim().parse().ok()?;
        if q == 0.0 {
            return None;
        }
        Some(p / q)
    } else {
        text.parse().ok()
    }
}
