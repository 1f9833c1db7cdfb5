//! Potentials on the full shift, topological pressure, Gibbs cylinder
//! weights and the cohomology (degeneracy) diagnostic.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs_geometry::IfsSystem;
use crate::numerics::log_sum_exp;
use crate::symbolic::{check_alphabet, distortion_bound, word_count, Sequence, Word, DEFAULT_ENUMERATION_CAP};

/// Spread of periodic ratios below which a potential is declared degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Largest transfer matrix (in states) used for exact finite-range pressure.
const MAX_TRANSFER_STATES: usize = 4096;

/// A real-valued potential on `I^ℕ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `ψ(ω) = log_weights[ω₁]`.
    Bernoulli { log_weights: Vec<f64> },
    /// `ψ(ω) = table[ω₁…ω_depth]`, indexed by the base-`alphabet` value of the word.
    FiniteRange {
        alphabet: usize,
        depth: usize,
        table: Vec<f64>,
    },
    /// `φ(ω) = log φ'_{ω₁}(π(σω))`.
    Geometric(Arc<IfsSystem>),
    /// `Σ cᵢ ψᵢ + shift`.
    Combo { terms: Vec<(f64, Potential)>, shift: f64 },
}

impl Potential {
    pub fn bernoulli(log_weights: Vec<f64>) -> Result<Self> {
        check_alphabet(log_weights.len()).map_err(|e| Error::InvalidPotential(e.to_string()))?;
        if log_weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("bernoulli log-weights must be finite".into()));
        }
        Ok(Potential::Bernoulli { log_weights })
    }

    /// Bernoulli potential `log p_{ω₁}` of a positive weight vector.
    pub fn bernoulli_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidPotential("bernoulli weights must be positive".into()));
        }
        Potential::bernoulli(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn finite_range(alphabet: usize, depth: usize, table: Vec<f64>) -> Result<Self> {
        check_alphabet(alphabet).map_err(|e| Error::InvalidPotential(e.to_string()))?;
        if depth == 0 {
            return Err(Error::InvalidPotential("finite-range depth must be at least 1".into()));
        }
        let expected = word_count(alphabet, depth, 1 << 24).map_err(|e| Error::InvalidPotential(e.to_string()))?;
        if table.len() != expected {
            return Err(Error::InvalidPotential(format!(
                "finite-range table has {} entries, expected {alphabet}^{depth} = {expected}",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("finite-range table must be finite".into()));
        }
        Ok(Potential::FiniteRange { alphabet, depth, table })
    }

    pub fn geometric(ifs: Arc<IfsSystem>) -> Self {
        Potential::Geometric(ifs)
    }

    pub fn combo(terms: Vec<(f64, Potential)>, shift: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidPotential("combination needs at least one term".into()));
        }
        if !shift.is_finite() || terms.iter().any(|(c, _)| !c.is_finite()) {
            return Err(Error::InvalidPotential(
                "combination coefficients must be finite".into(),
            ));
        }
        let alphabets: Vec<usize> = terms.iter().map(|(_, p)| p.alphabet()).collect();
        if alphabets.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidPotential(
                "combined potentials use different alphabets".into(),
            ));
        }
        Ok(Potential::Combo { terms, shift })
    }

    /// `a·φ + q·ψ` for the geometric potential `φ` of `ifs`.
    pub fn geometric_combo(ifs: Arc<IfsSystem>, a: f64, q: f64, psi: &Potential) -> Result<Self> {
        Potential::combo(vec![(a, Potential::geometric(ifs)), (q, psi.clone())], 0.0)
    }

    /// `self + c`.
    pub fn shifted(&self, c: f64) -> Potential {
        match self {
            Potential::Combo { terms, shift } => Potential::Combo {
                terms: terms.clone(),
                shift: shift + c,
            },
            other => Potential::Combo {
                terms: vec![(1.0, other.clone())],
                shift: c,
            },
        }
    }

    pub fn alphabet(&self) -> usize {
        match self {
            Potential::Bernoulli { log_weights } => log_weights.len(),
            Potential::FiniteRange { alphabet, .. } => *alphabet,
            Potential::Geometric(ifs) => ifs.alphabet(),
            Potential::Combo { terms, .. } => terms[0].1.alphabet(),
        }
    }

    /// Checks that the potential lives on the same alphabet (and, for
    /// geometric parts, the same system) as `ifs`.
    pub fn check_against(&self, ifs: &IfsSystem) -> Result<()> {
        if self.alphabet() != ifs.alphabet() {
            return Err(Error::InvalidPotential(format!(
                "potential alphabet {} does not match the {}-map system",
                self.alphabet(),
                ifs.alphabet()
            )));
        }
        match self {
            Potential::Geometric(own) if **own != *ifs => Err(Error::InvalidPotential(
                "geometric potential belongs to a different system".into(),
            )),
            Potential::Combo { terms, .. } => terms.iter().try_for_each(|(_, p)| p.check_against(ifs)),
            _ => Ok(()),
        }
    }

    /// `Sₙψ(seq)`.
    pub fn ergodic_sum_at(&self, seq: &Sequence, n: usize) -> Result<f64> {
        match self {
            Potential::Bernoulli { log_weights } => Ok((0..n).map(|i| log_weights[seq.symbol(i) as usize]).sum()),
            Potential::FiniteRange { alphabet, depth, table } => Ok((0..n)
                .map(|i| {
                    let idx = (i..i + depth).fold(0, |acc, j| acc * alphabet + seq.symbol(j) as usize);
                    table[idx]
                })
                .sum()),
            Potential::Geometric(ifs) => ifs.geometric_sum_at(seq, n),
            Potential::Combo { terms, shift } => {
                let mut total = shift * n as f64;
                for (c, p) in terms {
                    total += c * p.ergodic_sum_at(seq, n)?;
                }
                Ok(total)
            }
        }
    }

    /// `S_ℓψ(w̄)` with `ℓ = |block|`.
    pub fn periodic_sum(&self, block: &[u8]) -> Result<f64> {
        let len = block.len();
        match self {
            Potential::Bernoulli { log_weights } => Ok(block.iter().map(|&s| log_weights[s as usize]).sum()),
            Potential::FiniteRange { alphabet, depth, table } => Ok((0..len)
                .map(|i| {
                    let idx = (i..i + depth).fold(0, |acc, j| acc * alphabet + block[j % len] as usize);
                    table[idx]
                })
                .sum()),
            Potential::Geometric(ifs) => ifs.periodic_geometric_sum(block),
            Potential::Combo { terms, shift } => {
                let mut total = shift * len as f64;
                for (c, p) in terms {
                    total += c * p.periodic_sum(block)?;
                }
                Ok(total)
            }
        }
    }

    /// The potential as a finite-range table, when it is locally constant
    /// (bernoulli, finite-range, geometric of an affine system, and
    /// combinations of these).
    pub fn as_locally_constant(&self) -> Option<(usize, Vec<f64>)> {
        match self {
            Potential::Bernoulli { log_weights } => Some((1, log_weights.clone())),
            Potential::FiniteRange { depth, table, .. } => Some((*depth, table.clone())),
            Potential::Geometric(ifs) if ifs.is_affine() => {
                Some((1, ifs.maps().iter().map(|m| m.r_max().ln()).collect()))
            }
            Potential::Geometric(_) => None,
            Potential::Combo { terms, shift } => {
                let m = self.alphabet();
                let parts: Vec<(f64, usize, Vec<f64>)> = terms
                    .iter()
                    .map(|(c, p)| p.as_locally_constant().map(|(d, t)| (*c, d, t)))
                    .collect::<Option<_>>()?;
                let depth = parts.iter().map(|p| p.1).max()?;
                let size = m.checked_pow(depth as u32)?;
                if size > 1 << 24 {
                    return None;
                }
                let mut table = vec![*shift; size];
                for (c, d, t) in parts {
                    let drop = m.pow((depth - d) as u32);
                    for (idx, slot) in table.iter_mut().enumerate() {
                        *slot += c * t[idx / drop];
                    }
                }
                Some((depth, table))
            }
        }
    }
}

/// `S_kψ(w̄)` for every word of length `k`, in lexicographic order.
/// Partitioned by first symbol; each partition is filled sequentially so the
/// output does not depend on the thread count.
pub fn periodic_sums(psi: &Potential, k: usize) -> Result<Vec<f64>> {
    let m = psi.alphabet();
    let total = word_count(m, k, DEFAULT_ENUMERATION_CAP)?;
    if k == 0 {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: "level must be at least 1".into(),
        });
    }
    let per = total / m;
    let parts: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|first| {
            (0..per)
                .map(|j| {
                    let w = Word::from_index(first * per + j, k, m);
                    psi.periodic_sum(w.symbols())
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// `P_k(ψ) = (1/k) log Σ_{|w|=k} exp S_kψ(w̄)`.
pub fn pressure_at_level(ifs: &IfsSystem, psi: &Potential, k: usize) -> Result<f64> {
    psi.check_against(ifs)?;
    let sums = periodic_sums(psi, k)?;
    Ok(log_sum_exp(&sums) / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureEstimate {
    pub value: f64,
    pub error_bound: f64,
    /// Level at which the estimate was taken.
    pub level: usize,
    /// `P_1, …, P_level` when the periodic-sum route was used; empty for
    /// locally constant potentials, whose pressure is computed exactly.
    pub levels: Vec<f64>,
}

/// Topological pressure.
///
/// Locally constant potentials are handled exactly through the leading
/// eigenvalue of their transfer matrix. Everything else uses the level-`k`
/// approximants, stopping at `k_max` or as soon as two consecutive levels
/// agree within `tol`. The reported value is the last approximant; the error
/// bound is the last successive difference plus a distortion slack `D/k`.
pub fn pressure(ifs: &IfsSystem, psi: &Potential, k_max: usize, tol: f64) -> Result<PressureEstimate> {
    psi.check_against(ifs)?;
    if k_max < 2 {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: "k_max must be at least 2".into(),
        });
    }
    if let Some((depth, table)) = psi.as_locally_constant() {
        let m = psi.alphabet();
        if m.checked_pow(depth as u32 - 1)
            .is_some_and(|s| s <= MAX_TRANSFER_STATES)
        {
            let (value, error_bound) = finite_range_pressure(m, depth, &table);
            return Ok(PressureEstimate {
                value,
                error_bound,
                level: k_max,
                levels: Vec::new(),
            });
        }
    }
    let mut levels = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        levels.push(pressure_at_level(ifs, psi, k)?);
        if k >= 2 && (levels[k - 1] - levels[k - 2]).abs() < tol {
            break;
        }
    }
    let level = levels.len();
    let diff = (levels[level - 1] - levels[level - 2]).abs();
    let m = psi.alphabet();
    let mut depth = level.min(8);
    while depth > 1 && word_count(m, depth, 4096).is_err() {
        depth -= 1;
    }
    let slack = distortion_bound(psi, ifs, depth, 2)? / level as f64;
    Ok(PressureEstimate {
        value: levels[level - 1],
        error_bound: diff + slack,
        level,
        levels,
    })
}

/// Log spectral radius of the transfer matrix on `(depth−1)`-blocks, with
/// the Collatz–Wielandt gap as error bound.
fn finite_range_pressure(m: usize, depth: usize, table: &[f64]) -> (f64, f64) {
    let shift = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if depth == 1 {
        return (log_sum_exp(table), 0.0);
    }
    let states = m.pow(depth as u32 - 1);
    let weights: Vec<f64> = table.iter().map(|t| (t - shift).exp()).collect();
    // (A x)[u] = Σ_a exp(ψ(u a)) x[u₂…u_{d−1} a]
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..states)
            .map(|u| {
                let next = (u * m) % states;
                (0..m).map(|a| weights[u * m + a] * x[next + a]).sum()
            })
            .collect()
    };
    let (rho, _, gap) = perron(&apply, states);
    (shift + rho.ln(), gap)
}

/// `ψ − P(ψ)`.
pub fn normalize(psi: &Potential, ifs: &IfsSystem, k_max: usize) -> Result<Potential> {
    let p = pressure(ifs, psi, k_max, 0.0)?;
    Ok(psi.shifted(-p.value))
}

/// Depth-`n` cylinder weights `exp(Sₙψ(w̄)) / Σ_v exp(Sₙψ(v̄))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsWeights {
    pub depth: usize,
    pub alphabet: usize,
    pub weights: Vec<f64>,
    pub gibbs_constant_estimate: f64,
}

impl GibbsWeights {
    pub fn weight(&self, w: &Word) -> f64 {
        self.weights[w.index(self.alphabet)]
    }
}

fn normalized_weights(psi: &Potential, n: usize) -> Result<Vec<f64>> {
    let sums = periodic_sums(psi, n)?;
    let z = log_sum_exp(&sums);
    Ok(sums.into_iter().map(|s| (s - z).exp()).collect())
}

/// Gibbs cylinder weights at depth `n`. The Gibbs constant estimate is the
/// marginalization check against depth `n + 1`.
pub fn gibbs_cylinder_weights(ifs: &IfsSystem, psi: &Potential, n: usize) -> Result<GibbsWeights> {
    psi.check_against(ifs)?;
    if n == 0 {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: "depth must be at least 1".into(),
        });
    }
    let p = pressure(ifs, psi, n.max(2), 0.0)?;
    if p.value.abs() >= 1e-8 + p.error_bound {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: format!("potential is not normalized (pressure {:.3e})", p.value),
        });
    }
    let alphabet = psi.alphabet();
    let mut here = GibbsWeights {
        depth: n,
        alphabet,
        weights: normalized_weights(psi, n)?,
        gibbs_constant_estimate: 1.0,
    };
    let next = GibbsWeights {
        depth: n + 1,
        alphabet,
        weights: normalized_weights(psi, n + 1)?,
        gibbs_constant_estimate: 1.0,
    };
    here.gibbs_constant_estimate = gibbs_consistency_check(&here, &next)?;
    Ok(here)
}

/// Largest `max(ratio, 1/ratio)` with `ratio = μₙ[w] / Σ_j μₙ₊₁[wj]`.
pub fn gibbs_consistency_check(coarse: &GibbsWeights, fine: &GibbsWeights) -> Result<f64> {
    if fine.depth != coarse.depth + 1 || fine.alphabet != coarse.alphabet {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: format!("depths {} and {} do not differ by one", coarse.depth, fine.depth),
        });
    }
    let m = coarse.alphabet;
    Ok(coarse
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let children: f64 = fine.weights[i * m..(i + 1) * m].iter().sum();
            let ratio = w / children;
            ratio.max(1.0 / ratio)
        })
        .fold(1.0, f64::max))
}

/// Range of the periodic ratios `S_ℓψ(w̄) / S_ℓφ(w̄)` over `1 ≤ ℓ ≤ ell_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
    pub argmin: Word,
    pub argmax: Word,
}

pub fn periodic_ratio_range(ifs: &IfsSystem, psi: &Potential, ell_max: usize) -> Result<RatioRange> {
    psi.check_against(ifs)?;
    if ell_max == 0 {
        return Err(Error::Precondition {
            module: "thermodynamics",
            message: "ell_max must be at least 1".into(),
        });
    }
    let phi = Potential::geometric(Arc::new(ifs.clone()));
    let m = ifs.alphabet();
    let mut range = RatioRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        argmin: Word::empty(),
        argmax: Word::empty(),
    };
    for ell in 1..=ell_max {
        let num = periodic_sums(psi, ell)?;
        let den = periodic_sums(&phi, ell)?;
        for (i, (a, b)) in num.iter().zip(&den).enumerate() {
            let r = a / b;
            if r < range.min {
                range.min = r;
                range.argmin = Word::from_index(i, ell, m);
            }
            if r > range.max {
                range.max = r;
                range.argmax = Word::from_index(i, ell, m);
            }
        }
    }
    Ok(range)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohomologyDiagnostic {
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// ψ is cohomologous to a constant multiple of φ (monofractal case).
    pub degenerate: bool,
    /// The constant ratio equals one: ψ is cohomologous to φ itself.
    pub cohomologous_to_geometric: bool,
}

pub fn cohomology_diagnostic(ifs: &IfsSystem, psi: &Potential, ell_max: usize) -> Result<CohomologyDiagnostic> {
    let r = periodic_ratio_range(ifs, psi, ell_max)?;
    let degenerate = r.max - r.min < DEGENERACY_TOL;
    Ok(CohomologyDiagnostic {
        ratio_min: r.min,
        ratio_max: r.max,
        degenerate,
        cohomologous_to_geometric: degenerate
            && (r.min - 1.0).abs() < DEGENERACY_TOL
            && (r.max - 1.0).abs() < DEGENERACY_TOL,
    })
}

/// A consistent probability measure on cylinders used to evaluate the
/// distribution function at arbitrary depth.
///
/// Depth-one locally constant potentials give an exact product measure.
/// Otherwise `ψ` is replaced by the depth-`D` locally constant potential
/// `ψ_D(ω) = ψ(ω₁…ω_D x_w)` (exact when `ψ` is already locally constant) and
/// the measure is the equilibrium state of `ψ_D`: the stationary Markov chain
/// on `(D−1)`-blocks built from the Perron vectors of its transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum CylinderMeasure {
    Product {
        probs: Vec<f64>,
    },
    Markov {
        alphabet: usize,
        /// Block length `D − 1` of the chain.
        order: usize,
        /// `marginals[n][w]` for `|w| = n ≤ order`.
        marginals: Vec<Vec<f64>>,
        /// `transitions[u·m + a] = μ[u a] / μ[u]` for `|u| = order`.
        transitions: Vec<f64>,
    },
}

/// Position of a cylinder during a descent: its depth, mass, and the
/// base-`m` index of its last `min(depth, D−1)` symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderState {
    pub depth: usize,
    pub mass: f64,
    context: usize,
}

impl Potential {
    /// `ψ` at a representative point of the cylinder `[block]`. The block must
    /// be at least as long as the range of every finite-range part.
    fn block_value(&self, block: &[u8]) -> f64 {
        match self {
            Potential::Bernoulli { log_weights } => log_weights[block[0] as usize],
            Potential::FiniteRange { alphabet, depth, table } => {
                table[block[..*depth].iter().fold(0, |acc, &s| acc * alphabet + s as usize)]
            }
            Potential::Geometric(ifs) => {
                let x = ifs.composition_unchecked(&block[1..]).apply(ifs.domain().midpoint());
                ifs.map_matrix(block[0]).log_derivative(x)
            }
            Potential::Combo { terms, shift } => {
                shift + terms.iter().map(|(c, p)| c * p.block_value(block)).sum::<f64>()
            }
        }
    }

    fn range(&self) -> Option<usize> {
        match self {
            Potential::Bernoulli { .. } => Some(1),
            Potential::FiniteRange { depth, .. } => Some(*depth),
            Potential::Geometric(ifs) if ifs.is_affine() => Some(1),
            Potential::Geometric(_) => None,
            Potential::Combo { terms, .. } => terms
                .iter()
                .map(|(_, p)| p.range())
                .try_fold(1, |acc, r| r.map(|r| acc.max(r))),
        }
    }
}

impl CylinderMeasure {
    /// `depth` is the length `D` of the blocks on which `ψ` is sampled. It is
    /// raised to the range of a locally constant potential and lowered until
    /// the chain has at most 4096 states.
    pub fn from_potential(ifs: &IfsSystem, psi: &Potential, depth: usize) -> Result<Self> {
        psi.check_against(ifs)?;
        if let Some((1, table)) = psi.as_locally_constant() {
            let z = log_sum_exp(&table);
            return Ok(CylinderMeasure::Product {
                probs: table.iter().map(|t| (t - z).exp()).collect(),
            });
        }
        let m = psi.alphabet();
        let depth = match psi.range() {
            Some(r) => r.max(depth).max(2),
            None => {
                let mut d = depth.max(2);
                while d > 2 && m.checked_pow(d as u32 - 1).is_none_or(|s| s > MAX_TRANSFER_STATES) {
                    d -= 1;
                }
                d
            }
        };
        let order = depth - 1;
        let states = m
            .checked_pow(order as u32)
            .filter(|&s| s <= 1 << 24)
            .ok_or(Error::Capacity {
                alphabet: m,
                depth,
                cap: 1 << 24,
            })?;
        let blocks = states * m;
        let table: Vec<f64> = (0..blocks)
            .into_par_iter()
            .map(|idx| psi.block_value(Word::from_index(idx, depth, m).symbols()))
            .collect();
        let top = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = table.iter().map(|t| (t - top).exp()).collect();

        // (A x)[u] = Σ_a A(u a) x[u₂…u_{D−1} a]
        let right_step = |x: &[f64]| -> Vec<f64> {
            (0..states)
                .map(|u| {
                    let next = (u * m) % states;
                    (0..m).map(|a| weights[u * m + a] * x[next + a]).sum()
                })
                .collect()
        };
        // (y A)[v] = Σ_b y[b v₁…v_{D−2}] A(b v)
        let left_step = |y: &[f64]| -> Vec<f64> {
            (0..states)
                .map(|v| {
                    let stem = v / m;
                    (0..m)
                        .map(|b| {
                            let u = b * (states / m) + stem;
                            y[u] * weights[u * m + v % m]
                        })
                        .sum()
                })
                .collect()
        };
        let (rho, right, _) = perron(&right_step, states);
        let (_, left, _) = perron(&left_step, states);
        let stationary: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l * r).collect();
        let z: f64 = stationary.iter().sum();
        let top_marginal: Vec<f64> = stationary.iter().map(|p| p / z).collect();
        let mut marginals = vec![top_marginal];
        for _ in 0..order {
            let finer = marginals.last().expect("nonempty");
            marginals.push(finer.chunks(m).map(|c| c.iter().sum()).collect());
        }
        marginals.reverse();
        let transitions = (0..blocks)
            .map(|idx| {
                let (u, a) = (idx / m, idx % m);
                weights[idx] * right[(u * m) % states + a] / (rho * right[u])
            })
            .collect();
        Ok(CylinderMeasure::Markov {
            alphabet: m,
            order,
            marginals,
            transitions,
        })
    }

    pub fn root(&self) -> CylinderState {
        CylinderState {
            depth: 0,
            mass: 1.0,
            context: 0,
        }
    }

    pub fn child(&self, parent: &CylinderState, symbol: u8) -> CylinderState {
        let a = symbol as usize;
        match self {
            CylinderMeasure::Product { probs } => CylinderState {
                depth: parent.depth + 1,
                mass: parent.mass * probs[a],
                context: 0,
            },
            CylinderMeasure::Markov {
                alphabet,
                order,
                marginals,
                transitions,
            } => {
                if parent.depth < *order {
                    let context = parent.context * alphabet + a;
                    CylinderState {
                        depth: parent.depth + 1,
                        mass: marginals[parent.depth + 1][context],
                        context,
                    }
                } else {
                    let states = alphabet.pow(*order as u32);
                    let idx = parent.context * alphabet + a;
                    CylinderState {
                        depth: parent.depth + 1,
                        mass: parent.mass * transitions[idx],
                        context: idx % states,
                    }
                }
            }
        }
    }

    pub fn mass(&self, w: &Word) -> f64 {
        w.symbols().iter().fold(self.root(), |s, &a| self.child(&s, a)).mass
    }
}

/// Leading eigenvalue, max-normalized positive eigenvector and log
/// Collatz–Wielandt gap of a positive operator, by power iteration.
fn perron(step: &dyn Fn(&[f64]) -> Vec<f64>, n: usize) -> (f64, Vec<f64>, f64) {
    let mut x = vec![1.0; n];
    let (mut lower, mut upper) = (0.0, f64::INFINITY);
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    for _ in 0..100_000 {
        let y = step(&x);
        lower = y.iter().zip(&x).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
        upper = y.iter().zip(&x).map(|(a, b)| a / b).fold(0.0, f64::max);
        let norm = y.iter().copied().fold(0.0, f64::max);
        x = y.into_iter().map(|v| v / norm).collect();
        let gap = upper / lower - 1.0;
        if gap < 4.0 * f64::EPSILON {
            break;
        }
        // rounding floor reached
        if gap < best {
            (best, stalled) = (gap, 0);
        } else {
            stalled += 1;
            if stalled > 50 {
                break;
            }
        }
    }
    (0.5 * (lower + upper), x, (upper / lower).ln())
}
