//! Increasing conformal contractions of a compact interval, the coding map,
//! cylinder intervals and the geometric potential.
//!
//! Both supported map families are linear fractional, so every finite
//! composition `φ_{w₁} ∘ … ∘ φ_{wₙ}` is carried as a single normalized
//! 2×2 matrix. Cylinder intervals, coded points and composed derivatives are
//! all read off that matrix.

use crate::error::{Error, Result};
use crate::symbolic::{check_alphabet, PeriodicWord, Sequence, Word};

/// Points further than this outside `X` are rejected.
pub const DOMAIN_TOL: f64 = 1e-12;
/// Cylinder intervals narrower than this are refused.
pub const MIN_WIDTH: f64 = 1e-13;
/// Overlaps of first-level cylinders up to this width count as touching.
pub const OSC_TOL: f64 = 1e-12;
pub const CODING_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Linear fractional map `x ↦ (ax + b) / (cx + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn apply(&self, x: f64) -> f64 {
        (self.a * x + self.b) / (self.c * x + self.d)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let den = self.c * x + self.d;
        self.det() / (den * den)
    }

    pub fn log_derivative(&self, x: f64) -> f64 {
        self.det().ln() - 2.0 * (self.c * x + self.d).abs().ln()
    }

    /// `self(u) − self(v)` without cancellation.
    pub fn diff(&self, u: f64, v: f64) -> f64 {
        self.det() * (u - v) / ((self.c * u + self.d) * (self.c * v + self.d))
    }

    /// `self ∘ inner`, rescaled so the largest entry has magnitude one.
    pub fn compose(&self, inner: &Mobius) -> Mobius {
        Mobius {
            a: self.a * inner.a + self.b * inner.c,
            b: self.a * inner.b + self.b * inner.d,
            c: self.c * inner.a + self.d * inner.c,
            d: self.c * inner.b + self.d * inner.d,
        }
        .normalized()
    }

    fn normalized(self) -> Mobius {
        let s = self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs());
        if s == 0.0 || !s.is_finite() {
            return self;
        }
        Mobius {
            a: self.a / s,
            b: self.b / s,
            c: self.c / s,
            d: self.d / s,
        }
    }

    /// Image of an interval under an increasing map.
    pub fn image(&self, x: Interval) -> Interval {
        Interval::new(self.apply(x.lo), self.apply(x.hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind {
    Affine { ratio: f64, offset: f64 },
    Moebius { a: f64, b: f64, c: f64, d: f64 },
}

impl MapKind {
    pub fn matrix(&self) -> Mobius {
        match *self {
            MapKind::Affine { ratio, offset } => Mobius {
                a: ratio,
                b: offset,
                c: 0.0,
                d: 1.0,
            },
            MapKind::Moebius { a, b, c, d } => Mobius { a, b, c, d },
        }
    }
}

/// One contraction together with certified derivative bounds on its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionMap {
    kind: MapKind,
    domain: Interval,
    matrix: Mobius,
    r_min: f64,
    r_max: f64,
}

impl ContractionMap {
    pub fn new(kind: MapKind, domain: Interval) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidSystem(m));
        if !(domain.lo < domain.hi) || !domain.lo.is_finite() || !domain.hi.is_finite() {
            return invalid(format!(
                "domain [{}, {}] is not a proper interval",
                domain.lo, domain.hi
            ));
        }
        let matrix = kind.matrix();
        if [matrix.a, matrix.b, matrix.c, matrix.d].iter().any(|v| !v.is_finite()) {
            return invalid("map coefficients must be finite".into());
        }
        let (r_min, r_max) = match kind {
            MapKind::Affine { ratio, .. } => {
                if !(ratio > 0.0) {
                    return invalid(format!("affine ratio {ratio} must be positive (increasing maps only)"));
                }
                (ratio, ratio)
            }
            MapKind::Moebius { c, d, .. } => {
                let den_lo = c * domain.lo + d;
                let den_hi = c * domain.hi + d;
                if den_lo == 0.0 || den_hi == 0.0 || den_lo.signum() != den_hi.signum() {
                    return invalid("Möbius pole lies in the domain".into());
                }
                if !(matrix.det() > 0.0) {
                    return invalid("Möbius map must be increasing (ad − bc > 0)".into());
                }
                // cx + d keeps its sign on X, so |φ'| = det/(cx+d)² is monotone
                let d_lo = matrix.derivative(domain.lo);
                let d_hi = matrix.derivative(domain.hi);
                (d_lo.min(d_hi), d_lo.max(d_hi))
            }
        };
        if !(r_max < 1.0) || !(r_min > 0.0) {
            return invalid(format!("derivative bounds [{r_min}, {r_max}] not inside (0, 1)"));
        }
        let image = matrix.image(domain);
        if image.lo < domain.lo - DOMAIN_TOL || image.hi > domain.hi + DOMAIN_TOL {
            return invalid(format!(
                "map sends X onto [{}, {}], not into [{}, {}]",
                image.lo, image.hi, domain.lo, domain.hi
            ));
        }
        Ok(ContractionMap {
            kind,
            domain,
            matrix,
            r_min,
            r_max,
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn matrix(&self) -> &Mobius {
        &self.matrix
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    fn check(&self, x: f64) -> Result<()> {
        if x < self.domain.lo - DOMAIN_TOL || x > self.domain.hi + DOMAIN_TOL || x.is_nan() {
            return Err(Error::Domain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.matrix.apply(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.matrix.derivative(x))
    }
}

/// Outcome of the open set condition check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OscDiagnostic {
    Satisfied,
    Violated { i: usize, j: usize, overlap_width: f64 },
}

/// An ordered family of increasing contractions of `X`, indexed so that
/// the first-level cylinders appear left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsSystem {
    domain: Interval,
    maps: Vec<ContractionMap>,
    osc_verified: bool,
}

impl IfsSystem {
    pub fn new(domain: Interval, kinds: &[MapKind]) -> Result<Self> {
        check_alphabet(kinds.len())
            .map_err(|_| Error::InvalidSystem(format!("need between 2 and 64 maps, got {}", kinds.len())))?;
        let maps = kinds
            .iter()
            .map(|&k| ContractionMap::new(k, domain))
            .collect::<Result<Vec<_>>>()?;
        for (i, pair) in maps.windows(2).enumerate() {
            let left = pair[0].matrix.image(domain);
            let right = pair[1].matrix.image(domain);
            if !(left.lo < right.lo && left.hi < right.hi) {
                return Err(Error::InvalidSystem(format!(
                    "maps {i} and {} are not ordered left to right",
                    i + 1
                )));
            }
        }
        let mut system = IfsSystem {
            domain,
            maps,
            osc_verified: false,
        };
        system.osc_verified = system.check_osc() == OscDiagnostic::Satisfied;
        Ok(system)
    }

    /// `{x/3, (x+2)/3}` on `[0, 1]`.
    pub fn middle_thirds() -> Self {
        Self::affine(&[(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)])
    }

    /// `{x/2, (x+1)/2}` on `[0, 1]`; its attractor is the whole interval.
    pub fn halves() -> Self {
        Self::affine(&[(0.5, 0.0), (0.5, 0.5)])
    }

    /// `{x/(x+2), (x+1)/(x+2)}` on `[0, 1]`: a two-map system with
    /// genuinely nonconstant derivatives.
    pub fn moebius_pair() -> Self {
        IfsSystem::new(
            Interval::new(0.0, 1.0),
            &[
                MapKind::Moebius {
                    a: 1.0,
                    b: 0.0,
                    c: 1.0,
                    d: 2.0,
                },
                MapKind::Moebius {
                    a: 1.0,
                    b: 1.0,
                    c: 1.0,
                    d: 2.0,
                },
            ],
        )
        .expect("built-in system is valid")
    }

    fn affine(pairs: &[(f64, f64)]) -> Self {
        let kinds: Vec<MapKind> = pairs
            .iter()
            .map(|&(ratio, offset)| MapKind::Affine { ratio, offset })
            .collect();
        IfsSystem::new(Interval::new(0.0, 1.0), &kinds).expect("built-in system is valid")
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn maps(&self) -> &[ContractionMap] {
        &self.maps
    }

    pub fn alphabet(&self) -> usize {
        self.maps.len()
    }

    pub fn osc_verified(&self) -> bool {
        self.osc_verified
    }

    pub fn is_affine(&self) -> bool {
        self.maps.iter().all(|m| matches!(m.kind, MapKind::Affine { .. }))
    }

    pub fn r_min(&self) -> f64 {
        self.maps.iter().map(|m| m.r_min).fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.maps.iter().map(|m| m.r_max).fold(0.0, f64::max)
    }

    /// Scale base aligned with cylinder sizes: `1/r_max` rounded for affine
    /// systems, 2 otherwise.
    pub fn natural_scale_base(&self) -> f64 {
        if self.is_affine() {
            (1.0 / self.r_max()).round().max(2.0)
        } else {
            2.0
        }
    }

    /// Largest depth whose cylinders are guaranteed wider than `MIN_WIDTH`.
    pub fn safe_depth(&self) -> usize {
        let ratio = (MIN_WIDTH / self.domain.width()).ln() / self.r_min().ln();
        ratio.floor().max(1.0) as usize
    }

    pub(crate) fn map_matrix(&self, symbol: u8) -> &Mobius {
        &self.maps[symbol as usize].matrix
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if let Some(&s) = w.symbols().iter().find(|&&s| s as usize >= self.alphabet()) {
            return Err(Error::InvalidWord(format!(
                "symbol {s} out of range for a {}-map system",
                self.alphabet()
            )));
        }
        Ok(())
    }

    /// Matrix of `φ_{w₁} ∘ … ∘ φ_{wₙ}`.
    pub fn composition(&self, w: &Word) -> Result<Mobius> {
        self.check_word(w)?;
        Ok(self.composition_unchecked(w.symbols()))
    }

    pub(crate) fn composition_unchecked(&self, symbols: &[u8]) -> Mobius {
        symbols
            .iter()
            .fold(Mobius::IDENTITY, |acc, &s| acc.compose(self.map_matrix(s)))
    }

    pub fn cylinder_interval(&self, w: &Word) -> Result<Interval> {
        let m = self.composition(w)?;
        self.cylinder_of(&m)
    }

    pub(crate) fn cylinder_of(&self, m: &Mobius) -> Result<Interval> {
        let iv = m.image(self.domain);
        if iv.width() < MIN_WIDTH && *m != Mobius::IDENTITY {
            return Err(Error::Precision {
                module: "ifs_geometry",
                width: iv.width(),
            });
        }
        Ok(iv)
    }

    /// `π(w̄)`: iterate the period-block composition on `X` until the image
    /// is narrower than `tol`.
    pub fn coding_point(&self, w: &PeriodicWord, tol: f64) -> Result<f64> {
        self.check_word(w.period())?;
        self.fixed_point(&self.composition_unchecked(w.period().symbols()), tol)
    }

    fn fixed_point(&self, block: &Mobius, tol: f64) -> Result<f64> {
        let mut iv = self.domain;
        for _ in 0..CODING_BUDGET {
            let next = block.image(iv);
            if next.width() < tol {
                return Ok(next.midpoint());
            }
            if next.width() >= iv.width() {
                // stalled at rounding level
                if next.width() <= 1e-12 * self.domain.width() {
                    return Ok(next.midpoint());
                }
                break;
            }
            iv = next;
        }
        Err(Error::NonConvergence { budget: CODING_BUDGET })
    }

    /// `π(prefix · tail̄)`.
    pub fn point(&self, seq: &Sequence) -> Result<f64> {
        let tail = self.coding_point(seq.tail(), 1e-15)?;
        self.check_word(seq.prefix())?;
        Ok(self.composition_unchecked(seq.prefix().symbols()).apply(tail))
    }

    /// `Sₙφ(seq)` summed term by term from the definition
    /// `φ(ω) = log φ'_{ω₁}(π(σω))`.
    pub fn geometric_sum_at(&self, seq: &Sequence, n: usize) -> Result<f64> {
        let mut x = self.point(&seq.shift(n))?;
        let mut total = 0.0;
        for i in (0..n).rev() {
            let m = self.map_matrix(seq.symbol(i));
            total += m.log_derivative(x);
            x = m.apply(x);
        }
        Ok(total)
    }

    /// `Sₙφ(w̄)` by the chain rule along the orbit.
    pub fn geometric_sum(&self, w: &PeriodicWord, n: usize) -> Result<f64> {
        self.check_word(w.period())?;
        self.geometric_sum_at(&Sequence::periodic(w.clone()), n)
    }

    /// `Sₙφ(seq)` as the log-derivative of the composed map at `π(σⁿ seq)`.
    pub fn geometric_sum_composed(&self, seq: &Sequence, n: usize) -> Result<f64> {
        let x = self.point(&seq.shift(n))?;
        let m = self.composition_unchecked(seq.head(n).symbols());
        Ok(m.log_derivative(x))
    }

    /// `S_ℓφ(w̄)` for `ℓ = |w|`: log-derivative of the block composition at its fixed point.
    pub(crate) fn periodic_geometric_sum(&self, block: &[u8]) -> Result<f64> {
        let m = self.composition_unchecked(block);
        let x = self.fixed_point(&m, 1e-15)?;
        Ok(m.log_derivative(x))
    }

    pub fn check_osc(&self) -> OscDiagnostic {
        let first: Vec<Interval> = self.maps.iter().map(|m| m.matrix.image(self.domain)).collect();
        for i in 0..first.len() {
            for j in i + 1..first.len() {
                let overlap = first[i].hi.min(first[j].hi) - first[i].lo.max(first[j].lo);
                if overlap > OSC_TOL {
                    return OscDiagnostic::Violated {
                        i,
                        j,
                        overlap_width: overlap,
                    };
                }
            }
        }
        OscDiagnostic::Satisfied
    }
}
