//! Numerical versions of the constructions behind the non-differentiability
//! and Hölder-exponent results: secant decompositions, τ-blocks, perturbed
//! and separating cylinders, scaling laws, the derivative-limit probe and
//! the polynomial detrend test.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::DistributionFunction;
use crate::ifs_geometry::{IfsSystem, Interval, MIN_WIDTH};
use crate::numerics::linear_fit;
use crate::symbolic::{enumerate_words, Sequence, Word};
use crate::thermodynamics::{cohomology_diagnostic, Potential};

/// Threshold on `|S_ℓ(ψ − kφ)(τ̄)|` for a usable τ-block.
pub const TAU_THRESHOLD: f64 = 1e-6;
/// Probe thresholds: oscillation ratio and divergence level.
pub const OSCILLATION_RATIO: f64 = 10.0;
pub const DIVERGENCE_LEVEL: f64 = 1e6;
const FINITE_LIMIT_RATIO: f64 = 1.0 + 1e-6;

fn check_odd(k: u32) -> Result<()> {
    if k.is_multiple_of(2) {
        return Err(Error::Precondition {
            module: "holder_lab",
            message: format!("k must be odd, got {k}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecantSlope {
    pub total: f64,
    /// Relative mismatch between `total` and its two-sided decomposition.
    pub decomposition_check: f64,
}

/// `(F(t) − F(s)) / (t − s)^k` and its split around `x`:
/// `r^k (F(t)−F(x))/(t−x)^k + (1−r)^k (F(s)−F(x))/(s−x)^k`, `r = (t−x)/(t−s)`.
pub fn secant_slope(f: &DistributionFunction, s: f64, x: f64, t: f64, k: u32) -> Result<SecantSlope> {
    check_odd(k)?;
    if !(s < x && x < t) {
        return Err(Error::Precondition {
            module: "holder_lab",
            message: format!("need s < x < t, got {s}, {x}, {t}"),
        });
    }
    if t - s < MIN_WIDTH {
        return Err(Error::Precision {
            module: "holder_lab",
            width: t - s,
        });
    }
    let (fs, fx, ft) = (f.eval(s)?.value, f.eval(x)?.value, f.eval(t)?.value);
    let ki = k as i32;
    let total = (ft - fs) / (t - s).powi(ki);
    let r = (t - x) / (t - s);
    let right = (ft - fx) / (t - x).powi(ki);
    let left = (fs - fx) / (s - x).powi(ki);
    let split = r.powi(ki) * right + (1.0 - r).powi(ki) * left;
    let scale = total.abs().max(split.abs()).max(f64::MIN_POSITIVE);
    Ok(SecantSlope {
        total,
        decomposition_check: (total - split).abs() / scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRecord {
    pub n: usize,
    pub s_n: f64,
    pub t_n: f64,
    pub slope_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeProbe {
    pub x: f64,
    pub omega_prefix: Word,
    pub k: u32,
    pub records: Vec<SlopeRecord>,
}

/// Cylinder slopes `μ[ω|ₙ] / diam(π[ω|ₙ])^k` around `x = π(ω)`.
pub fn slope_probe(
    f: &DistributionFunction,
    omega: &Sequence,
    k: u32,
    depths: RangeInclusive<usize>,
) -> Result<SlopeProbe> {
    check_odd(k)?;
    let ifs = f.ifs();
    let x = ifs.point(omega)?;
    let records = depths
        .clone()
        .map(|n| {
            let w = omega.head(n);
            let iv = ifs.cylinder_interval(&w)?;
            Ok(SlopeRecord {
                n,
                s_n: iv.lo,
                t_n: iv.hi,
                slope_k: f.cylinder_mass(&w) / iv.width().powi(k as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SlopeProbe {
        x,
        omega_prefix: omega.head(*depths.end()),
        k,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauBlock {
    pub tau: Word,
    /// `S_ℓ(ψ − kφ)(τ̄)`.
    pub value: f64,
}

/// Shortest (then lexicographically first) word with two distinct letters and
/// `|S_ℓ(ψ − kφ)(τ̄)| > TAU_THRESHOLD`.
pub fn find_tau_block(ifs: &IfsSystem, psi: &Potential, k: u32, ell_max: usize) -> Result<TauBlock> {
    check_odd(k)?;
    psi.check_against(ifs)?;
    for ell in 2..=ell_max {
        for w in enumerate_words(ifs.alphabet(), ell)? {
            if w.distinct_symbols() < 2 {
                continue;
            }
            let value = psi.periodic_sum(w.symbols())? - k as f64 * ifs.periodic_geometric_sum(w.symbols())?;
            if value.abs() > TAU_THRESHOLD {
                return Ok(TauBlock { tau: w, value });
            }
        }
    }
    Err(Error::TauNotFound { ell_max })
}

/// Cylinder interval of `ω|ₙ · τᴺ`.
pub fn perturbed_cylinder(ifs: &IfsSystem, omega_prefix: &Word, tau: &Word, big_n: usize) -> Result<Interval> {
    ifs.cylinder_interval(&omega_prefix.concat(&tau.repeat(big_n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparatorCase {
    /// ω ends in `τ₁^∞`: separator `ω|ₙ τ₁^{j+1} τ_{j+1}`.
    TailConstant,
    /// `ω_{n+1} < τ₁`: separator `ω|ₙ τ₁ a^ℓ` with `a` the smallest symbol.
    BelowTau,
    /// `ω_{n+1} > τ₁`: separator `ω|ₙ τ₁ b^ℓ` with `b` the largest symbol.
    AboveTau,
}

impl SeparatorCase {
    /// 1 for the tail-constant case, 2 otherwise.
    pub fn number(self) -> u8 {
        match self {
            SeparatorCase::TailConstant => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separator {
    pub word: Word,
    pub case: SeparatorCase,
    pub interval: Interval,
    /// The perturbed interval lies to the right of `x`.
    pub perturbed_right: bool,
}

/// Separating cylinder between `x = π(ω)` and the perturbed interval
/// `π[ω|ₙ τᴺ]`, built from the two-case construction and checked
/// geometrically: the separator must sit between the two (touching allowed)
/// and be at least `diam π[ω|ₙ] · r_min^{ℓ+1}` wide.
pub fn find_separator(ifs: &IfsSystem, omega: &Sequence, n: usize, tau: &Word, big_n: usize) -> Result<Separator> {
    if tau.distinct_symbols() < 2 {
        return Err(Error::InvalidWord(format!("τ = {tau} needs two distinct letters")));
    }
    let no_sep = Err(Error::NoSeparator { depth: n });
    let t = tau.symbols();
    let ell = t.len();
    let tau1 = t[0];
    let j = t.iter().position(|&s| s != tau1).expect("two distinct letters");
    let prefix = omega.head(n);
    let m = ifs.alphabet();
    let (case, tail): (SeparatorCase, Vec<u8>) = match omega.eventually_constant() {
        Some((sym, start)) if sym == tau1 && n >= start => {
            let mut tail = vec![tau1; j + 1];
            tail.push(t[j]);
            (SeparatorCase::TailConstant, tail)
        }
        _ => {
            let next = omega.symbol(n);
            if next == tau1 {
                return no_sep;
            }
            let fill = if next < tau1 { 0 } else { (m - 1) as u8 };
            let case = if next < tau1 {
                SeparatorCase::BelowTau
            } else {
                SeparatorCase::AboveTau
            };
            let mut tail = vec![tau1];
            tail.extend(std::iter::repeat_n(fill, ell));
            (case, tail)
        }
    };
    let word = prefix.concat(&Word::new(tail, m)?);
    let interval = ifs.cylinder_interval(&word)?;
    let x = ifs.point(omega)?;
    let perturbed = perturbed_cylinder(ifs, &prefix, tau, big_n)?;
    let perturbed_right = perturbed.lo >= x;
    let between = if perturbed_right {
        interval.lo >= x && interval.hi <= perturbed.lo && x < interval.hi
    } else {
        interval.hi <= x && interval.lo >= perturbed.hi && interval.lo < x
    };
    let base = ifs.cylinder_interval(&prefix)?.width();
    let wide_enough = interval.width() >= base * ifs.r_min().powi(ell as i32 + 1) * (1.0 - 1e-9);
    if !between || !wide_enough || (!perturbed_right && perturbed.hi > x) {
        return no_sep;
    }
    Ok(Separator {
        word,
        case,
        interval,
        perturbed_right,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRecord {
    pub n: usize,
    pub big_n: usize,
    pub s_n_big: f64,
    pub t_n_big: f64,
    pub r_n_big: f64,
    pub slope_k: f64,
    pub separator: Word,
    pub case: SeparatorCase,
    /// `log slope_k − log(μ[ω|ₙ]/diam^k) − N·S_ℓ(ψ−kφ)(τ̄)`.
    pub slope_residual: f64,
    /// `log r + N·S_ℓφ(τ̄)`.
    pub r_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationExperiment {
    pub tau: Word,
    pub ell: usize,
    pub big_n_range: RangeInclusive<usize>,
    /// Depths kept: those admitting a separator for every `N` in range.
    pub n_set: Vec<usize>,
    pub records: Vec<PerturbationRecord>,
    /// Slope of `log slope_k` against `N` (within-`n` demeaned pooled fit).
    pub slope_fit: f64,
    /// Slope of `log r` against `N`.
    pub r_fit: f64,
    /// `S_ℓ(ψ − kφ)(τ̄)`.
    pub expected_slope: f64,
    /// `−S_ℓφ(τ̄)`.
    pub expected_r: f64,
    /// Per `N`: spread over `n` of the slope and ratio residuals.
    pub residual_spread: Vec<(usize, f64, f64)>,
}

/// Pooled slope with a separate intercept per group.
fn within_slope(groups: &[Vec<(f64, f64)>]) -> Option<f64> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for g in groups {
        if g.len() < 2 {
            continue;
        }
        let len = g.len() as f64;
        let mx = g.iter().map(|p| p.0).sum::<f64>() / len;
        let my = g.iter().map(|p| p.1).sum::<f64>() / len;
        for &(x, y) in g {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Records `r_nᴺ` and `slope_k` over `[s_nᴺ, t_nᴺ]` on an `(n, N)` grid and
/// fits their growth in `N`. The slope numerator `F(t_nᴺ) − F(s_nᴺ)` is
/// taken as the cylinder mass, to which it is equal.
pub fn ratio_scaling_experiment(
    f: &DistributionFunction,
    omega: &Sequence,
    tau: &Word,
    k: u32,
    n_set: &[usize],
    big_n_range: RangeInclusive<usize>,
) -> Result<PerturbationExperiment> {
    check_odd(k)?;
    let ifs = f.ifs();
    let psi = f.potential();
    let x = ifs.point(omega)?;
    let block = tau.symbols();
    let phi_tau = ifs.periodic_geometric_sum(block)?;
    let expected_slope = psi.periodic_sum(block)? - k as f64 * phi_tau;
    let ki = k as i32;
    let grid: Vec<(usize, usize)> = n_set
        .iter()
        .flat_map(|&n| big_n_range.clone().map(move |nn| (n, nn)))
        .collect();
    let rows: Vec<Result<PerturbationRecord>> = grid
        .par_iter()
        .map(|&(n, big_n)| {
            let prefix = omega.head(n);
            let sep = find_separator(ifs, omega, n, tau, big_n)?;
            let word = prefix.concat(&tau.repeat(big_n));
            let iv = ifs.cylinder_interval(&word)?;
            let base = ifs.cylinder_interval(&prefix)?;
            let width = iv.width();
            let r = (iv.hi - x) / width;
            let slope_k = f.cylinder_mass(&word) / width.powi(ki);
            let base_slope = f.cylinder_mass(&prefix) / base.width().powi(ki);
            Ok(PerturbationRecord {
                n,
                big_n,
                s_n_big: iv.lo,
                t_n_big: iv.hi,
                r_n_big: r,
                slope_k,
                separator: sep.word,
                case: sep.case,
                slope_residual: slope_k.ln() - base_slope.ln() - big_n as f64 * expected_slope,
                r_residual: r.abs().ln() + big_n as f64 * phi_tau,
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut kept = Vec::new();
    for (chunk_n, chunk) in n_set.iter().zip(rows.chunks(big_n_range.clone().count().max(1))) {
        if chunk.iter().any(|r| matches!(r, Err(Error::NoSeparator { .. }))) {
            continue;
        }
        for r in chunk {
            records.push(r.clone()?);
        }
        kept.push(*chunk_n);
    }
    if kept.is_empty() || (kept.len() < 2 && kept.len() < n_set.len()) {
        return Err(Error::InsufficientScales {
            module: "holder_lab",
            usable: kept.len(),
            needed: 2.min(n_set.len()).max(1),
        });
    }
    let group = |value: fn(&PerturbationRecord) -> f64| -> Vec<Vec<(f64, f64)>> {
        kept.iter()
            .map(|&n| {
                records
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| (r.big_n as f64, value(r)))
                    .collect()
            })
            .collect()
    };
    let slope_fit = within_slope(&group(|r| r.slope_k.ln())).unwrap_or(f64::NAN);
    let r_fit = within_slope(&group(|r| r.r_n_big.abs().ln())).unwrap_or(f64::NAN);
    let residual_spread = big_n_range
        .clone()
        .map(|nn| {
            let at: Vec<&PerturbationRecord> = records.iter().filter(|r| r.big_n == nn).collect();
            let spread = |v: fn(&PerturbationRecord) -> f64| {
                let lo = at.iter().map(|r| v(r)).fold(f64::INFINITY, f64::min);
                let hi = at.iter().map(|r| v(r)).fold(f64::NEG_INFINITY, f64::max);
                if at.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            };
            (nn, spread(|r| r.slope_residual), spread(|r| r.r_residual))
        })
        .collect();
    Ok(PerturbationExperiment {
        tau: tau.clone(),
        ell: tau.len(),
        big_n_range,
        n_set: kept,
        records,
        slope_fit,
        r_fit,
        expected_slope,
        expected_r: -phi_tau,
        residual_spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeClass {
    TendsToZero,
    TendsToInfinity,
    /// Observed only when the hypotheses fail (ψ cohomologous to φ).
    FiniteLimit(f64),
    Oscillates {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub x: f64,
    pub k: u32,
    /// `(n, (F(y) − F(x)) / (y − x)^k)` for `y = tₙ` then `y = sₙ`, when distinct from `x`.
    pub values: Vec<(usize, f64)>,
    pub class: ProbeClass,
    /// ψ is cohomologous to φ, so the non-differentiability hypothesis fails.
    pub degenerate: bool,
}

/// Difference quotients of `F` at `x = π(ω)` along cylinder endpoints.
///
/// Mass differences are tail sums over sibling cylinders along `ω` and point
/// differences come from the composed map, so nothing cancels.
pub fn derivative_limit_probe(
    f: &DistributionFunction,
    omega: &Sequence,
    k: u32,
    depths: RangeInclusive<usize>,
) -> Result<ProbeResult> {
    check_odd(k)?;
    let ifs = f.ifs();
    let mu = f.measure();
    let x = ifs.point(omega)?;
    let n_max = *depths.end();
    let m = ifs.alphabet() as u8;
    // left[i], right[i]: masses of siblings of ω|ᵢ₊₁ inside [ω|ᵢ], left and right of it.
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut state = mu.root();
    let mut mass_at_max = 0.0;
    let mut i = 0;
    loop {
        if i == n_max {
            mass_at_max = state.mass;
        }
        if i > n_max && (state.mass < 1e-20 * mass_at_max || i > n_max + 4000) {
            break;
        }
        let w = omega.symbol(i);
        left.push((0..w).map(|j| mu.child(&state, j).mass).sum::<f64>());
        right.push((w + 1..m).map(|j| mu.child(&state, j).mass).sum::<f64>());
        state = mu.child(&state, w);
        i += 1;
    }
    let mut left_tail = vec![0.0; left.len() + 1];
    let mut right_tail = vec![0.0; right.len() + 1];
    for i in (0..left.len()).rev() {
        left_tail[i] = left_tail[i + 1] + left[i];
        right_tail[i] = right_tail[i + 1] + right[i];
    }
    let domain = ifs.domain();
    let ki = k as i32;
    let mut values = Vec::new();
    for n in depths.clone() {
        let mat = ifs.composition(&omega.head(n))?;
        let y = ifs.point(&omega.shift(n))?;
        let dt = mat.diff(domain.hi, y);
        if dt > 0.0 && right_tail[n] > 0.0 {
            values.push((n, right_tail[n] / dt.powi(ki)));
        }
        let ds = mat.diff(domain.lo, y);
        if ds < 0.0 && left_tail[n] > 0.0 {
            values.push((n, -left_tail[n] / ds.powi(ki)));
        }
    }
    let diag = cohomology_diagnostic(ifs, f.potential(), 6)?;
    Ok(ProbeResult {
        x,
        k,
        class: classify(&values),
        values,
        degenerate: diag.cohomologous_to_geometric,
    })
}

fn classify(values: &[(usize, f64)]) -> ProbeClass {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .filter(|v| v.1 > 0.0 && v.1.is_finite())
        .map(|&(n, v)| (n as f64, v.ln()))
        .collect();
    if pts.is_empty() {
        return ProbeClass::Oscillates {
            min: f64::NAN,
            max: f64::NAN,
        };
    }
    let raw: Vec<f64> = pts.iter().map(|p| p.1.exp()).collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    if let Some(fit) = linear_fit(&xs, &ys) {
        let span = xs[xs.len() - 1] - xs[0];
        let drift = fit.slope * span;
        if drift.abs() > OSCILLATION_RATIO.ln() && drift.abs() > 2.0 * fit.max_residual {
            if drift < 0.0 {
                return ProbeClass::TendsToZero;
            }
            if max >= DIVERGENCE_LEVEL {
                return ProbeClass::TendsToInfinity;
            }
        }
    }
    let tail = &raw[raw.len() / 2..];
    let tmax = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tmin = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if tmax / tmin <= FINITE_LIMIT_RATIO {
        return ProbeClass::FiniteLimit(raw[raw.len() - 1]);
    }
    ProbeClass::Oscillates { min, max }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeFit {
    pub degree: usize,
    /// Window half-widths, shrinking.
    pub radii: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// `|a_j|` strictly decreasing with last/first below one half.
    pub decays: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetrendResult {
    pub degree_max: usize,
    pub fits: Vec<DegreeFit>,
    pub residual_exponent: f64,
    pub skipped: bool,
    pub pass: bool,
    /// ψ is cohomologous to a multiple of φ, where polynomial detrending cannot succeed.
    pub hypothesis_violated: bool,
}

const DETREND_SAMPLES: usize = 32;

/// Fits `F(t) − F(t0) ≈ a_j (t − t0)^j` on windows `[t0 − b^{−i}, t0 + b^{−i}]`
/// for `j = 1..=⌊α̂ + 0.05⌋`, and the liminf exponent of `F(t) − F(t0)`.
/// Passes when every `a_j` decays and the residual exponent is within 0.05
/// of `α̂`.
pub fn detrend_exponent_test(
    f: &DistributionFunction,
    t0: f64,
    alpha_hat: f64,
    base: f64,
    windows: RangeInclusive<i32>,
) -> Result<DetrendResult> {
    if !(base > 1.0) || windows.clone().count() < 3 {
        return Err(Error::Precondition {
            module: "holder_lab",
            message: "need base > 1 and at least 3 windows".into(),
        });
    }
    let diag = cohomology_diagnostic(f.ifs(), f.potential(), 6)?;
    let degree_max = (alpha_hat + 0.05).floor().max(0.0) as usize;
    if degree_max == 0 {
        return Ok(DetrendResult {
            degree_max,
            fits: Vec::new(),
            residual_exponent: alpha_hat,
            skipped: true,
            pass: true,
            hypothesis_violated: diag.degenerate,
        });
    }
    let f0 = f.eval(t0)?.value;
    let radii: Vec<f64> = windows.clone().map(|i| base.powi(-i)).collect();
    // Samples t0 ± ρ·u with u on a uniform grid in (0, 1].
    let per_window: Vec<Result<Vec<(f64, f64)>>> = radii
        .par_iter()
        .map(|&rho| {
            let mut pts = Vec::with_capacity(2 * DETREND_SAMPLES);
            for s in 1..=DETREND_SAMPLES {
                let h = rho * s as f64 / DETREND_SAMPLES as f64;
                pts.push((h, f.eval(t0 + h)?.value - f0));
                pts.push((-h, f.eval(t0 - h)?.value - f0));
            }
            Ok(pts)
        })
        .collect();
    let per_window = per_window.into_iter().collect::<Result<Vec<_>>>()?;
    let fits: Vec<DegreeFit> = (1..=degree_max)
        .map(|j| {
            let coefficients: Vec<f64> = per_window
                .iter()
                .map(|pts| {
                    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), &(h, y)| {
                        let p = h.powi(j as i32);
                        (a + p * y, b + p * p)
                    });
                    num / den
                })
                .collect();
            let mags: Vec<f64> = coefficients.iter().map(|c| c.abs()).collect();
            let decays = mags.windows(2).all(|w| w[1] < w[0]) && mags[mags.len() - 1] < 0.5 * mags[0];
            DegreeFit {
                degree: j,
                radii: radii.clone(),
                coefficients,
                decays,
            }
        })
        .collect();
    let sup: Vec<(f64, f64)> = radii
        .iter()
        .zip(&per_window)
        .filter_map(|(&rho, pts)| {
            let m = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
            (m > 0.0).then(|| (rho.ln(), m.ln()))
        })
        .collect();
    let window = sup.len().min(crate::estimators::DEFAULT_WINDOW);
    if window < 2 {
        return Err(Error::InsufficientScales {
            module: "holder_lab",
            usable: sup.len(),
            needed: 2,
        });
    }
    let residual_exponent = sup
        .windows(window)
        .filter_map(|w| {
            let (x, y): (Vec<f64>, Vec<f64>) = w.iter().copied().unzip();
            linear_fit(&x, &y).map(|l| l.slope)
        })
        .fold(f64::INFINITY, f64::min);
    let pass = fits.iter().all(|d| d.decays) && (residual_exponent - alpha_hat).abs() <= 0.05;
    Ok(DetrendResult {
        degree_max,
        fits,
        residual_exponent,
        skipped: false,
        pass,
        hypothesis_violated: diag.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::DepthPolicy;
    use crate::symbolic::PeriodicWord;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn seq(prefix: &str, tail: &str) -> Sequence {
        Sequence::new(
            Word::parse(prefix, 2).unwrap(),
            PeriodicWord::new(Word::parse(tail, 2).unwrap()).unwrap(),
        )
    }

    fn cantor_f(p: f64) -> DistributionFunction {
        let psi = Potential::bernoulli_probs(&[p, 1.0 - p]).unwrap();
        DistributionFunction::with_defaults(Arc::new(IfsSystem::middle_thirds()), psi).unwrap()
    }

    fn lebesgue() -> DistributionFunction {
        let psi = Potential::bernoulli(vec![-(2f64.ln()); 2]).unwrap();
        let ifs = Arc::new(IfsSystem::halves());
        let policy = DepthPolicy {
            max_depth: ifs.safe_depth(),
            mass_tol: 1e-8,
        };
        DistributionFunction::new(ifs, psi, policy).unwrap()
    }

    fn tau01() -> Word {
        Word::parse("01", 2).unwrap()
    }

    #[test]
    fn secant_examples() {
        let f = cantor_f(0.25);
        assert!(secant_slope(&f, 0.0, 0.5, 1.0, 1).unwrap().decomposition_check < 1e-12);
        let leb = lebesgue();
        let s = secant_slope(&leb, 0.2, 0.3, 0.7, 1).unwrap();
        assert!((s.total - 1.0).abs() < 1e-7);
        let s = secant_slope(&f, 0.0, 0.25, 1.0 / 3.0, 1).unwrap();
        assert!((s.total - 0.75).abs() < 1e-14);
        assert!(secant_slope(&f, 0.0, 0.5, 1.0, 2).is_err());
        assert!(secant_slope(&f, 0.5, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn slope_probe_tracks_cylinders() {
        let f = cantor_f(0.25);
        let p = slope_probe(&f, &seq("", "0"), 1, 1..=10).unwrap();
        for r in &p.records {
            assert!(r.s_n <= p.x && p.x <= r.t_n);
            assert!((r.slope_k - 0.75f64.powi(r.n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_examples() {
        let ifs = IfsSystem::middle_thirds();
        let psi = Potential::bernoulli_probs(&[0.25, 0.75]).unwrap();
        let t = find_tau_block(&ifs, &psi, 1, 4).unwrap();
        assert_eq!(t.tau, tau01());
        assert!((t.value - (27.0f64 / 16.0).ln()).abs() < 1e-12);
        assert!((t.value - 0.523248).abs() < 1e-6);
        let t = find_tau_block(&ifs, &psi, 3, 4).unwrap();
        assert_eq!(t.tau, tau01());
        assert!((t.value - ((3.0f64 / 16.0).ln() - 6.0 * (1.0f64 / 3.0).ln())).abs() < 1e-12);
        assert!((t.value - 4.917697).abs() < 1e-6);
        let uniform = Potential::bernoulli_probs(&[0.5, 0.5]).unwrap();
        let t = find_tau_block(&ifs, &uniform, 1, 4).unwrap();
        assert!((t.value - 0.810930).abs() < 1e-6);
        let leb = Potential::bernoulli(vec![-(2f64.ln()); 2]).unwrap();
        assert!(matches!(
            find_tau_block(&IfsSystem::halves(), &leb, 1, 6),
            Err(Error::TauNotFound { ell_max: 6 })
        ));
    }

    #[test]
    fn perturbed_examples() {
        let ifs = IfsSystem::middle_thirds();
        let w = Word::parse("00", 2).unwrap();
        let iv = perturbed_cylinder(&ifs, &w, &tau01(), 1).unwrap();
        let direct = ifs.cylinder_interval(&Word::parse("0001", 2).unwrap()).unwrap();
        assert_eq!(iv, direct);
        assert!((iv.width() - 3f64.powi(-4)).abs() < 1e-16);
        assert_eq!(
            perturbed_cylinder(&ifs, &w, &tau01(), 0).unwrap(),
            ifs.cylinder_interval(&w).unwrap()
        );
        for big_n in 0..5 {
            let a = perturbed_cylinder(&ifs, &w, &tau01(), big_n).unwrap().width();
            let b = perturbed_cylinder(&ifs, &w, &tau01(), big_n + 1).unwrap().width();
            assert!((b / a - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separator_examples() {
        let ifs = IfsSystem::middle_thirds();
        let zero = seq("", "0");
        for n in 1..8 {
            let s = find_separator(&ifs, &zero, n, &tau01(), 2).unwrap();
            assert_eq!(s.case, SeparatorCase::TailConstant);
            let mut expected = vec![0u8; n + 2];
            expected.push(1);
            assert_eq!(s.word.symbols(), &expected[..]);
            assert!(s.perturbed_right);
        }
        let one = seq("", "1");
        let s = find_separator(&ifs, &one, 3, &tau01(), 2).unwrap();
        assert_eq!(s.case, SeparatorCase::AboveTau);
        assert_eq!(s.word.symbols(), &[1, 1, 1, 0, 1, 1][..]);
        assert!(!s.perturbed_right);
        assert!(matches!(
            find_separator(&ifs, &seq("", "01"), 2, &tau01(), 2),
            Err(Error::NoSeparator { depth: 2 })
        ));
        assert!(find_separator(&ifs, &seq("", "01"), 1, &tau01(), 2).is_ok());
    }

    #[test]
    fn scaling_law_on_cantor() {
        let f = cantor_f(0.25);
        let exp = ratio_scaling_experiment(&f, &seq("", "0"), &tau01(), 1, &[3, 4, 5, 6, 7, 8], 1..=6).unwrap();
        assert_eq!(exp.n_set.len(), 6);
        assert!((exp.slope_fit - (27.0f64 / 16.0).ln()).abs() < 1e-9);
        assert!((exp.r_fit - 2.0 * 3f64.ln()).abs() < 0.1 * 2.0 * 3f64.ln());
        for &(_, a, b) in &exp.residual_spread {
            assert!(a < 1e-9 && b < 1e-9);
        }
        assert!(exp.records.iter().all(|r| r.r_n_big > 1.0));
    }

    #[test]
    fn cylinder_ratio_sum_bounds() {
        let f = cantor_f(0.25);
        for omega in [seq("", "01"), seq("1", "001"), seq("", "0111")] {
            let p = slope_probe(&f, &omega, 1, 1..=12).unwrap();
            for rec in &p.records {
                let r = (rec.t_n - p.x) / (rec.t_n - rec.s_n);
                assert!((0.0..=1.0).contains(&r));
                for k in [1i32, 3, 5, 7] {
                    let v = r.powi(k) + (1.0 - r).powi(k);
                    assert!(v >= 2f64.powi(1 - k) - 1e-12 && v <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn probe_examples() {
        let f = cantor_f(0.25);
        let p = derivative_limit_probe(&f, &seq("", "0"), 1, 1..=25).unwrap();
        assert_eq!(p.class, ProbeClass::TendsToZero);
        assert!(!p.degenerate);
        let p = derivative_limit_probe(&f, &seq("", "1"), 1, 1..=25).unwrap();
        assert_eq!(p.class, ProbeClass::TendsToInfinity);
        let leb = lebesgue();
        let p = derivative_limit_probe(&leb, &seq("1", "0"), 1, 1..=40).unwrap();
        assert!(p.degenerate);
        match p.class {
            ProbeClass::FiniteLimit(v) => assert!((v - 1.0).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn probe_matches_direct_quotients() {
        let f = cantor_f(0.25);
        let omega = seq("1", "01");
        let p = derivative_limit_probe(&f, &omega, 1, 2..=8).unwrap();
        let x = f.ifs().point(&omega).unwrap();
        let fx = f.eval(x).unwrap().value;
        for &(n, v) in &p.values {
            let iv = f.ifs().cylinder_interval(&omega.head(n)).unwrap();
            let direct_t = (f.eval(iv.hi).unwrap().value - fx) / (iv.hi - x);
            let direct_s = (f.eval(iv.lo).unwrap().value - fx) / (iv.lo - x);
            assert!((v - direct_t).abs() < 1e-6 * v || (v - direct_s).abs() < 1e-6 * v);
        }
    }

    #[test]
    fn detrend_examples() {
        let f = cantor_f(0.25);
        let a = 4f64.ln() / 3f64.ln();
        let d = detrend_exponent_test(&f, 0.0, a, 3.0, 2..=9).unwrap();
        assert_eq!(d.degree_max, 1);
        assert!(d.pass && !d.hypothesis_violated, "{d:?}");
        let leb = lebesgue();
        let d = detrend_exponent_test(&leb, 0.5, 1.0, 2.0, 2..=9).unwrap();
        assert!(!d.pass && d.hypothesis_violated);
        assert!(d.fits[0].coefficients.iter().all(|c| (c - 1.0).abs() < 1e-6));
        let d = detrend_exponent_test(&f, 1.0, 0.26, 3.0, 2..=9).unwrap();
        assert!(d.skipped && d.pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn secant_identity(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, kk in 0u32..4) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            prop_assume!(v[1] - v[0] > 1e-6 && v[2] - v[1] > 1e-6);
            let k = 2 * kk + 1;
            let s = secant_slope(&cantor_f(0.25), v[0], v[1], v[2], k).unwrap();
            prop_assert!(s.decomposition_check < 1e-12);
        }

        #[test]
        fn separators_are_between_and_wide(prefix in proptest::collection::vec(0u8..2, 0..6), tail in proptest::collection::vec(0u8..2, 1..4), n in 1usize..8) {
            let ifs = IfsSystem::middle_thirds();
            let omega = Sequence::new(Word::new(prefix, 2).unwrap(), PeriodicWord::new(Word::new(tail, 2).unwrap()).unwrap());
            if let Ok(s) = find_separator(&ifs, &omega, n, &tau01(), 2) {
                let x = ifs.point(&omega).unwrap();
                let base = ifs.cylinder_interval(&omega.head(n)).unwrap().width();
                prop_assert!(s.interval.width() >= base * ifs.r_min().powi(3) * (1.0 - 1e-9));
                prop_assert!(s.word.len() <= n + 3);
                let pert = perturbed_cylinder(&ifs, &omega.head(n), &tau01(), 2).unwrap();
                if s.perturbed_right {
                    prop_assert!(x <= s.interval.lo && s.interval.hi <= pert.lo);
                } else {
                    prop_assert!(pert.hi <= s.interval.lo && s.interval.hi <= x);
                }
            }
        }
    }
}
