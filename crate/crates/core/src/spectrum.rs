//! The scaling function β(q), its Legendre transform β*, the spectrum
//! endpoints α±, and the predicted Hausdorff and packing spectra.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs_geometry::IfsSystem;
use crate::numerics::{bisect_decreasing, log_sum_exp_combo};
use crate::thermodynamics::{cohomology_diagnostic, periodic_ratio_range, periodic_sums, Potential};

const INITIAL_BRACKET: f64 = 10.0;
const MAX_DOUBLINGS: usize = 60;
const BISECTION_WIDTH: f64 = 1e-12;
const NEWTON_STEPS: usize = 3;

/// Level-`k` sums `S_kφ(w̄)` and `S_kψ(w̄)` for every word, so that
/// `P_k(βφ + qψ)` costs one pass over two vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSolver {
    level: usize,
    phi_sums: Vec<f64>,
    psi_sums: Vec<f64>,
}

impl BetaSolver {
    pub fn new(ifs: &IfsSystem, psi: &Potential, k: usize) -> Result<Self> {
        psi.check_against(ifs)?;
        let phi = Potential::geometric(Arc::new(ifs.clone()));
        Ok(BetaSolver {
            level: k,
            phi_sums: periodic_sums(&phi, k)?,
            psi_sums: periodic_sums(psi, k)?,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `(P_k(βφ + qψ), ∂/∂β P_k(βφ + qψ))`.
    pub fn pressure(&self, beta: f64, q: f64) -> (f64, f64) {
        let k = self.level as f64;
        let (lse, mean_phi) = log_sum_exp_combo(beta, &self.phi_sums, q, &self.psi_sums);
        (lse / k, mean_phi / k)
    }

    /// The root β of `P_k(βφ + qψ) = 0`.
    pub fn solve(&self, q: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) || !q.is_finite() {
            return Err(Error::Precondition {
                module: "spectrum",
                message: "tol must be positive and q finite".into(),
            });
        }
        let f = |b: f64| self.pressure(b, q).0;
        let (mut lo, mut hi) = (-INITIAL_BRACKET, INITIAL_BRACKET);
        let mut doublings = 0;
        while !(f(lo) >= 0.0 && f(hi) <= 0.0) {
            if doublings == MAX_DOUBLINGS {
                return Err(Error::BracketFailure { q });
            }
            if f(lo) < 0.0 {
                lo *= 2.0;
            }
            if f(hi) > 0.0 {
                hi *= 2.0;
            }
            doublings += 1;
        }
        let (lo, hi) = bisect_decreasing(f, lo, hi, BISECTION_WIDTH);
        let mut beta = 0.5 * (lo + hi);
        let mut value = f(beta);
        for _ in 0..NEWTON_STEPS {
            let (p, dp) = self.pressure(beta, q);
            if dp >= 0.0 {
                break;
            }
            let next = beta - p / dp;
            let next_value = f(next);
            if next_value.abs() >= value.abs() {
                break;
            }
            beta = next;
            value = next_value;
        }
        if value.abs() >= tol {
            return Err(Error::NonConvergence { budget: NEWTON_STEPS });
        }
        Ok(beta)
    }
}

/// The root of `P_k(βφ + qψ) = 0`.
pub fn beta_of_q(ifs: &IfsSystem, psi: &Potential, q: f64, k: usize, tol: f64) -> Result<f64> {
    BetaSolver::new(ifs, psi, k)?.solve(q, tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
}

/// α± as the extreme periodic ratios `S_ℓψ(w̄)/S_ℓφ(w̄)`, `ℓ ≤ ell_max`.
pub fn endpoints(ifs: &IfsSystem, psi: &Potential, ell_max: usize) -> Result<Endpoints> {
    let r = periodic_ratio_range(ifs, psi, ell_max)?;
    Ok(Endpoints {
        alpha_minus: r.min,
        alpha_plus: r.max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSample {
    pub q: f64,
    pub beta: f64,
    pub alpha: f64,
    pub beta_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    pub q_min: f64,
    pub q_max: f64,
    pub q_steps: usize,
    /// Pressure level used for β(q).
    pub level: usize,
    /// Word length bound for endpoints and the degeneracy check.
    pub ell_max: usize,
    pub tol: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            q_min: -10.0,
            q_max: 10.0,
            q_steps: 201,
            level: 10,
            ell_max: 6,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub samples: Vec<SpectrumSample>,
    pub endpoints: Endpoints,
    pub degenerate: bool,
    /// α at the maximum of β*, where β*(α₀) = β(0).
    pub alpha_zero: f64,
    pub beta_star_zero: f64,
    /// `|α₀ − α(0)|` when `0` lies inside the grid.
    pub alpha_zero_check: Option<f64>,
    solver: Option<Arc<BetaSolver>>,
    tol: f64,
}

/// Value of the Legendre infimum and whether it was attained inside the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreValue {
    pub value: f64,
    pub q_star: f64,
    pub interior: bool,
}

impl SpectrumCurve {
    pub fn q_spacing(&self) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        self.samples[1].q - self.samples[0].q
    }

    pub fn q_range(&self) -> (f64, f64) {
        (self.samples[0].q, self.samples[self.samples.len() - 1].q)
    }

    /// `β(q)` evaluated by the solver (exact affine form when degenerate).
    pub fn beta_at(&self, q: f64) -> Result<f64> {
        match &self.solver {
            Some(s) => s.solve(q, self.tol),
            None => Ok(self.endpoints.alpha_minus * (1.0 - q)),
        }
    }
}

fn q_grid(cfg: &SpectrumConfig) -> Result<Vec<f64>> {
    if cfg.q_steps < 3 || !(cfg.q_max > cfg.q_min) {
        return Err(Error::Precondition {
            module: "spectrum",
            message: format!(
                "q-grid needs q_min < q_max and at least 3 points, got [{}, {}] x {}",
                cfg.q_min, cfg.q_max, cfg.q_steps
            ),
        });
    }
    let spacing = (cfg.q_max - cfg.q_min) / (cfg.q_steps - 1) as f64;
    Ok((0..cfg.q_steps)
        .map(|i| {
            if i + 1 == cfg.q_steps {
                cfg.q_max
            } else {
                cfg.q_min + i as f64 * spacing
            }
        })
        .collect())
}

/// Central difference of −β with Richardson extrapolation.
fn alpha_from_solver(solver: &BetaSolver, q: f64, h: f64, tol: f64) -> Result<f64> {
    let d = |step: f64| -> Result<f64> {
        Ok(-(solver.solve(q + step, tol)? - solver.solve(q - step, tol)?) / (2.0 * step))
    };
    let coarse = d(h)?;
    let fine = d(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `−β′(q)`, by central differences with step a quarter of the grid spacing.
pub fn alpha_of_q(curve: &SpectrumCurve, q: f64) -> Result<f64> {
    let (lo, hi) = curve.q_range();
    let h = curve.q_spacing() / 4.0;
    if !(q - h >= lo && q + h <= hi) {
        return Err(Error::EdgeOfGrid { q, lo, hi });
    }
    match &curve.solver {
        Some(s) => alpha_from_solver(s, q, h, curve.tol),
        None => Ok(curve.endpoints.alpha_minus),
    }
}

/// `β*(α) = inf_q {β(q) + αq}` over the sampled grid, refined by a parabola
/// through the minimum and its neighbours.
pub fn legendre(curve: &SpectrumCurve, alpha: f64) -> LegendreValue {
    let g: Vec<f64> = curve.samples.iter().map(|s| s.beta + alpha * s.q).collect();
    let (i, _) = g.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
    );
    if i == 0 || i + 1 == g.len() {
        return LegendreValue {
            value: g[i],
            q_star: curve.samples[i].q,
            interior: false,
        };
    }
    let h = curve.samples[i + 1].q - curve.samples[i].q;
    let curvature = g[i + 1] - 2.0 * g[i] + g[i - 1];
    if curvature <= 0.0 {
        return LegendreValue {
            value: g[i],
            q_star: curve.samples[i].q,
            interior: true,
        };
    }
    let slope = g[i + 1] - g[i - 1];
    LegendreValue {
        value: g[i] - slope * slope / (8.0 * curvature),
        q_star: curve.samples[i].q - h * slope / (2.0 * curvature),
        interior: true,
    }
}

/// Samples β, α and β* on the configured q-grid.
///
/// Degenerate potentials (ψ cohomologous to sφ) give the affine curve
/// `β(q) = s(1 − q)` and a spectrum concentrated at `α = s`.
pub fn compute_spectrum(ifs: &IfsSystem, psi: &Potential, cfg: &SpectrumConfig) -> Result<SpectrumCurve> {
    let grid = q_grid(cfg)?;
    let diag = cohomology_diagnostic(ifs, psi, cfg.ell_max)?;
    if diag.degenerate {
        let s = 0.5 * (diag.ratio_min + diag.ratio_max);
        let samples = grid
            .iter()
            .map(|&q| SpectrumSample {
                q,
                beta: s * (1.0 - q),
                alpha: s,
                beta_star: s,
            })
            .collect();
        return Ok(SpectrumCurve {
            samples,
            endpoints: Endpoints {
                alpha_minus: s,
                alpha_plus: s,
            },
            degenerate: true,
            alpha_zero: s,
            beta_star_zero: s,
            alpha_zero_check: Some(0.0),
            solver: None,
            tol: cfg.tol,
        });
    }
    let endpoints = Endpoints {
        alpha_minus: diag.ratio_min,
        alpha_plus: diag.ratio_max,
    };
    let solver = Arc::new(BetaSolver::new(ifs, psi, cfg.level)?);
    let h = (grid[1] - grid[0]) / 4.0;
    let rows: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|&q| Ok((solver.solve(q, cfg.tol)?, alpha_from_solver(&solver, q, h, cfg.tol)?)))
        .collect();
    let mut samples = Vec::with_capacity(grid.len());
    for (&q, row) in grid.iter().zip(rows) {
        let (beta, alpha) = row?;
        samples.push(SpectrumSample {
            q,
            beta,
            alpha,
            beta_star: f64::NAN,
        });
    }
    let mut curve = SpectrumCurve {
        samples,
        endpoints,
        degenerate: false,
        alpha_zero: f64::NAN,
        beta_star_zero: f64::NAN,
        alpha_zero_check: None,
        solver: Some(solver.clone()),
        tol: cfg.tol,
    };
    let stars: Vec<f64> = curve.samples.iter().map(|s| legendre(&curve, s.alpha).value).collect();
    for (s, b) in curve.samples.iter_mut().zip(stars) {
        s.beta_star = b;
    }
    let (i, _) = curve
        .samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, s)| {
            if s.beta_star > bv {
                (i, s.beta_star)
            } else {
                (bi, bv)
            }
        });
    let q_peak = if i == 0 || i + 1 == curve.samples.len() {
        curve.samples[i].q
    } else {
        let b = |j: usize| curve.samples[j].beta_star;
        let curvature = b(i + 1) - 2.0 * b(i) + b(i - 1);
        if curvature < 0.0 {
            curve.samples[i].q - (grid[1] - grid[0]) * (b(i + 1) - b(i - 1)) / (2.0 * curvature)
        } else {
            curve.samples[i].q
        }
    };
    curve.alpha_zero = alpha_of_q(&curve, q_peak).unwrap_or(curve.samples[i].alpha);
    curve.beta_star_zero = legendre(&curve, curve.alpha_zero).value;
    curve.alpha_zero_check = alpha_of_q(&curve, 0.0).ok().map(|a0| (a0 - curve.alpha_zero).abs());
    Ok(curve)
}

/// A point of a predicted spectrum; `dim` is `None` where the level set is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub dim: Option<f64>,
}

const RANGE_TOL: f64 = 1e-9;

fn in_range(curve: &SpectrumCurve, alpha: f64) -> bool {
    alpha >= curve.endpoints.alpha_minus - RANGE_TOL && alpha <= curve.endpoints.alpha_plus + RANGE_TOL
}

/// `dim_H E(α) = β*(α)` on `[α₋, α₊]`, empty outside.
pub fn hausdorff_spectrum_prediction(curve: &SpectrumCurve, alpha_grid: &[f64]) -> Vec<SpectrumPoint> {
    alpha_grid
        .iter()
        .map(|&alpha| SpectrumPoint {
            alpha,
            dim: in_range(curve, alpha).then(|| {
                if curve.degenerate {
                    curve.beta_star_zero
                } else {
                    legendre(curve, alpha).value
                }
            }),
        })
        .collect()
}

/// Packing spectrum: constant `β*(α₀)` on `[α₋, α₀]`, `β*(α)` on `[α₀, α₊]`.
pub fn packing_spectrum_prediction(curve: &SpectrumCurve, alpha_grid: &[f64]) -> Vec<SpectrumPoint> {
    alpha_grid
        .iter()
        .map(|&alpha| SpectrumPoint {
            alpha,
            dim: in_range(curve, alpha).then(|| {
                if curve.degenerate || alpha <= curve.alpha_zero {
                    curve.beta_star_zero
                } else {
                    legendre(curve, alpha).value
                }
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cantor() -> IfsSystem {
        IfsSystem::middle_thirds()
    }

    fn quarter() -> Potential {
        Potential::bernoulli_probs(&[0.25, 0.75]).unwrap()
    }

    fn closed_form(q: f64) -> f64 {
        (0.25f64.powf(q) + 0.75f64.powf(q)).ln() / 3f64.ln()
    }

    fn cantor_curve() -> SpectrumCurve {
        let cfg = SpectrumConfig {
            level: 1,
            ..SpectrumConfig::default()
        };
        compute_spectrum(&cantor(), &quarter(), &cfg).unwrap()
    }

    #[test]
    fn beta_examples() {
        let ifs = cantor();
        let b0 = beta_of_q(&ifs, &quarter(), 0.0, 1, 1e-12).unwrap();
        assert!((b0 - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!((b0 - 0.630930).abs() < 1e-6);
        assert!(beta_of_q(&ifs, &quarter(), 1.0, 3, 1e-12).unwrap().abs() < 1e-13);
        let b2 = beta_of_q(&ifs, &quarter(), 2.0, 2, 1e-12).unwrap();
        assert!((b2 - (10.0f64 / 16.0).ln() / 3f64.ln()).abs() < 1e-12);
        assert!((b2 - (-0.427816)).abs() < 1e-6);
        let halves = IfsSystem::halves();
        let leb = Potential::bernoulli(vec![-(2f64.ln()); 2]).unwrap();
        for q in [-7.0, -1.0, 0.0, 0.5, 3.0, 9.0] {
            assert!((beta_of_q(&halves, &leb, q, 2, 1e-12).unwrap() - (1.0 - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn bracket_expands_for_large_q() {
        let ifs = cantor();
        for q in [-60.0, 60.0] {
            let b = beta_of_q(&ifs, &quarter(), q, 1, 1e-10).unwrap();
            assert!((b - closed_form(q)).abs() < 1e-9);
        }
        assert!(matches!(
            beta_of_q(&ifs, &quarter(), 0.0, 1, 0.0),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn endpoint_examples() {
        let e = endpoints(&cantor(), &quarter(), 6).unwrap();
        assert!((e.alpha_minus - (4.0f64 / 3.0).ln() / 3f64.ln()).abs() < 1e-12);
        assert!((e.alpha_plus - 4f64.ln() / 3f64.ln()).abs() < 1e-12);
        let uniform = Potential::bernoulli_probs(&[0.5, 0.5]).unwrap();
        let e = endpoints(&cantor(), &uniform, 4).unwrap();
        assert!((e.alpha_minus - 0.630930).abs() < 1e-6 && (e.alpha_plus - 0.630930).abs() < 1e-6);
        let leb = Potential::bernoulli(vec![-(2f64.ln()); 2]).unwrap();
        let e = endpoints(&IfsSystem::halves(), &leb, 4).unwrap();
        assert!((e.alpha_minus - 1.0).abs() < 1e-14 && (e.alpha_plus - 1.0).abs() < 1e-14);
    }

    #[test]
    fn alpha_examples() {
        let curve = cantor_curve();
        let a0 = alpha_of_q(&curve, 0.0).unwrap();
        assert!((a0 - (16.0f64 / 3.0).ln() / (2.0 * 3f64.ln())).abs() < 1e-7);
        assert!((a0 - 0.761860).abs() < 1e-6);
        let a1 = alpha_of_q(&curve, 1.0).unwrap();
        let entropy = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((a1 - entropy / 3f64.ln()).abs() < 1e-7);
        assert!((a1 - 0.511860).abs() < 1e-6);
        assert!(matches!(alpha_of_q(&curve, 10.0), Err(Error::EdgeOfGrid { .. })));
        assert!(matches!(alpha_of_q(&curve, -11.0), Err(Error::EdgeOfGrid { .. })));
    }

    #[test]
    fn legendre_examples() {
        let curve = cantor_curve();
        let a0 = (16.0f64 / 3.0).ln() / (2.0 * 3f64.ln());
        let v = legendre(&curve, a0);
        assert!(v.interior);
        assert!((v.value - 2f64.ln() / 3f64.ln()).abs() < 1e-6);
        let top = legendre(&curve, 4f64.ln() / 3f64.ln());
        assert!(!top.interior);
        assert!(top.value.abs() < 1e-4);

        let uniform = Potential::bernoulli_probs(&[0.5, 0.5]).unwrap();
        let flat = compute_spectrum(&cantor(), &uniform, &SpectrumConfig::default()).unwrap();
        assert!(flat.degenerate);
        let s = 2f64.ln() / 3f64.ln();
        assert!((legendre(&flat, s).value - s).abs() < 1e-12);
        assert!((alpha_of_q(&flat, 3.0).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn curve_properties() {
        let curve = cantor_curve();
        assert_eq!(curve.samples.len(), 201);
        assert!(!curve.degenerate);
        for s in &curve.samples {
            assert!((s.beta - closed_form(s.q)).abs() < 1e-10);
            assert!(s.alpha >= curve.endpoints.alpha_minus - 1e-9 && s.alpha <= curve.endpoints.alpha_plus + 1e-9);
            assert!(s.beta_star <= curve.beta_star_zero + 1e-9);
        }
        for w in curve.samples.windows(2) {
            assert!(w[1].beta < w[0].beta);
        }
        for w in curve.samples.windows(3) {
            assert!(w[0].beta - 2.0 * w[1].beta + w[2].beta >= -1e-10);
        }
        let one = curve.samples.iter().find(|s| s.q == 1.0).unwrap();
        assert!(one.beta.abs() < 1e-12);
        assert!((curve.alpha_zero - 0.761860).abs() < 1e-5);
        assert!((curve.beta_star_zero - 0.630930).abs() < 1e-6);
        assert!(curve.alpha_zero_check.unwrap() < 1e-5);
        for s in &curve.samples[1..200] {
            assert!((s.beta_star - (s.beta + s.q * s.alpha)).abs() < 1e-3, "{s:?}");
        }
    }

    #[test]
    fn prediction_examples() {
        let curve = cantor_curve();
        let a1 = alpha_of_q(&curve, 1.0).unwrap();
        let h = hausdorff_spectrum_prediction(&curve, &[curve.alpha_zero, a1, 0.1, 1.5]);
        assert!((h[0].dim.unwrap() - 0.630930).abs() < 1e-6);
        assert!((h[1].dim.unwrap() - a1).abs() < 1e-5);
        assert_eq!(h[2].dim, None);
        assert_eq!(h[3].dim, None);

        let grid = [0.3, 0.4, curve.alpha_zero, 0.9, 1.0, 1.2];
        let p = packing_spectrum_prediction(&curve, &grid);
        let h = hausdorff_spectrum_prediction(&curve, &grid);
        assert!((p[1].dim.unwrap() - 0.630930).abs() < 1e-6);
        assert!((p[2].dim.unwrap() - 0.630930).abs() < 1e-6);
        let right = p[4].dim.unwrap();
        assert!(right > 0.0 && right < 0.6309);
        for (pp, hh) in p.iter().zip(&h) {
            let (pd, hd) = (pp.dim.unwrap(), hh.dim.unwrap());
            if pp.alpha >= curve.alpha_zero {
                assert!((pd - hd).abs() < 1e-12);
            } else {
                assert!(pd >= hd - 1e-12);
            }
        }
    }

    #[test]
    fn moebius_curve_is_normalized_and_convex() {
        let ifs = IfsSystem::moebius_pair();
        let psi = crate::thermodynamics::normalize(&quarter(), &ifs, 8).unwrap();
        let cfg = SpectrumConfig {
            q_min: -4.0,
            q_max: 4.0,
            q_steps: 41,
            level: 8,
            ell_max: 6,
            tol: 1e-10,
        };
        let curve = compute_spectrum(&ifs, &psi, &cfg).unwrap();
        let one = curve.samples.iter().find(|s| (s.q - 1.0).abs() < 1e-12).unwrap();
        assert!(one.beta.abs() < 1e-10);
        for w in curve.samples.windows(3) {
            assert!(w[0].beta - 2.0 * w[1].beta + w[2].beta >= -1e-10);
        }
    }

    proptest! {
        #[test]
        fn beta_matches_closed_form(p in 0.05f64..0.95, q in -8.0f64..8.0) {
            let psi = Potential::bernoulli_probs(&[p, 1.0 - p]).unwrap();
            let b = beta_of_q(&cantor(), &psi, q, 1, 1e-12).unwrap();
            let want = (p.powf(q) + (1.0 - p).powf(q)).ln() / 3f64.ln();
            prop_assert!((b - want).abs() < 1e-10);
        }

        #[test]
        fn endpoints_nest(ell in 1usize..6) {
            let ifs = IfsSystem::moebius_pair();
            let psi = quarter();
            let a = endpoints(&ifs, &psi, ell).unwrap();
            let b = endpoints(&ifs, &psi, ell + 1).unwrap();
            prop_assert!(b.alpha_minus <= a.alpha_minus && b.alpha_plus >= a.alpha_plus);
        }
    }
}
