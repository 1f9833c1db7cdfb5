//! Command-line front end: JSON configuration, subcommand dispatch and CSV
//! output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};
use crate::estimators::{
    coarse_spectrum, exact_exponent_at_coded_point, holder_exponent_estimate, DepthPolicy, DistributionFunction,
    HolderMethod, HolderScales, DEFAULT_MASS_TOL, DEFAULT_MEASURE_DEPTH,
};
use crate::holder_lab::{
    derivative_limit_probe, detrend_exponent_test, find_tau_block, ratio_scaling_experiment, ProbeClass,
};
use crate::ifs_geometry::{IfsSystem, Interval, MapKind, OscDiagnostic};
use crate::numerics::parse_rational;
use crate::spectrum::{
    beta_of_q, compute_spectrum, endpoints, hausdorff_spectrum_prediction, legendre, packing_spectrum_prediction,
    SpectrumConfig,
};
use crate::symbolic::{PeriodicWord, Sequence, Word};
use crate::thermodynamics::{cohomology_diagnostic, normalize, pressure, Potential};

pub const SCHEMA_VERSION: u32 = 1;

/// A real number given either as a JSON number or as a `"p/q"` string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(Num(v)),
            Repr::Text(s) => parse_rational(&s)
                .map(Num)
                .ok_or_else(|| D::Error::custom(format!("cannot parse {s:?} as a number"))),
        }
    }
}

fn nums(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Level used to normalize the potential; defaults to 10 (capped by alphabet size).
    #[serde(default)]
    pub normalize_level: Option<usize>,
    #[serde(default)]
    pub pressure: PressureBlock,
    #[serde(default)]
    pub beta: BetaBlock,
    #[serde(default)]
    pub spectrum: SpectrumBlock,
    #[serde(default)]
    pub endpoints: EndpointsBlock,
    #[serde(default)]
    pub cdf: CdfBlock,
    #[serde(default)]
    pub holder: HolderBlock,
    #[serde(default)]
    pub coarse: CoarseBlock,
    #[serde(default)]
    pub verify_prop: VerifyBlock,
    #[serde(default)]
    pub detrend: DetrendBlock,
    #[serde(default)]
    pub predict_packing: PackingBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SystemConfig {
    Affine {
        domain: [Num; 2],
        maps: Vec<AffineMapConfig>,
    },
    Moebius {
        domain: [Num; 2],
        maps: Vec<MoebiusMapConfig>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMapConfig {
    pub ratio: Num,
    pub offset: Num,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoebiusMapConfig {
    pub a: Num,
    pub b: Num,
    pub c: Num,
    pub d: Num,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
    Bernoulli {
        #[serde(default)]
        probs: Option<Vec<Num>>,
        #[serde(default)]
        log_weights: Option<Vec<Num>>,
    },
    FiniteRange {
        depth: usize,
        table: Vec<Num>,
    },
    /// `coefficient · φ + plus_coefficient · plus + shift`.
    GeometricMultiple {
        coefficient: Num,
        #[serde(default)]
        plus: Option<Box<PotentialConfig>>,
        #[serde(default)]
        plus_coefficient: Option<Num>,
        #[serde(default)]
        shift: Option<Num>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureBlock {
    pub k_max: Option<usize>,
    pub tol: Option<Num>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaBlock {
    pub q: Option<Vec<Num>>,
    pub level: Option<usize>,
    pub tol: Option<Num>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumBlock {
    pub q_min: Option<Num>,
    pub q_max: Option<Num>,
    pub q_steps: Option<usize>,
    pub level: Option<usize>,
    pub ell_max: Option<usize>,
    pub tol: Option<Num>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointsBlock {
    pub ell_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfBlock {
    pub points: Option<Vec<Num>>,
    pub max_depth: Option<usize>,
    pub mass_tol: Option<Num>,
    pub measure_depth: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderBlock {
    pub points: Option<Vec<Num>>,
    /// Coded points `prefix(tail)`, or a bare word for a purely periodic point.
    pub coded: Option<Vec<String>>,
    pub base: Option<Num>,
    pub j_min: Option<i32>,
    pub j_max: Option<i32>,
    pub window: Option<usize>,
    pub method: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseBlock {
    pub deltas: Option<Vec<Num>>,
    pub bin_width: Option<Num>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub omega: Option<String>,
    pub tau: Option<String>,
    pub k: Option<u32>,
    pub ell_max: Option<usize>,
    pub n_set: Option<Vec<usize>>,
    pub big_n_min: Option<usize>,
    pub big_n_max: Option<usize>,
    pub probe_depths: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetrendBlock {
    pub t0: Option<Num>,
    pub alpha_hat: Option<Num>,
    pub base: Option<Num>,
    pub windows: Option<[i32; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingBlock {
    pub alpha_min: Option<Num>,
    pub alpha_max: Option<Num>,
    pub alpha_steps: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn build_system(&self) -> Result<IfsSystem> {
        let (domain, kinds) = match &self.system {
            SystemConfig::Affine { domain, maps } => (
                domain,
                maps.iter()
                    .map(|m| MapKind::Affine {
                        ratio: m.ratio.0,
                        offset: m.offset.0,
                    })
                    .collect::<Vec<_>>(),
            ),
            SystemConfig::Moebius { domain, maps } => (
                domain,
                maps.iter()
                    .map(|m| MapKind::Moebius {
                        a: m.a.0,
                        b: m.b.0,
                        c: m.c.0,
                        d: m.d.0,
                    })
                    .collect(),
            ),
        };
        IfsSystem::new(Interval::new(domain[0].0, domain[1].0), &kinds)
            .map_err(|e| Error::Config(format!("system: {e}")))
    }

    /// The configured potential, normalized to zero pressure.
    pub fn build_potential(&self, ifs: &Arc<IfsSystem>) -> Result<Potential> {
        let raw = build_potential(&self.potential, ifs).map_err(|e| Error::Config(format!("potential: {e}")))?;
        raw.check_against(ifs)
            .map_err(|e| Error::Config(format!("potential: {e}")))?;
        let level = self
            .normalize_level
            .unwrap_or_else(|| default_level(ifs.alphabet(), 10));
        normalize(&raw, ifs, level.max(2))
    }
}

fn build_potential(cfg: &PotentialConfig, ifs: &Arc<IfsSystem>) -> Result<Potential> {
    match cfg {
        PotentialConfig::Bernoulli {
            probs: Some(p),
            log_weights: None,
        } => Potential::bernoulli_probs(&nums(p)),
        PotentialConfig::Bernoulli {
            probs: None,
            log_weights: Some(w),
        } => Potential::bernoulli(nums(w)),
        PotentialConfig::Bernoulli { .. } => Err(Error::InvalidPotential(
            "bernoulli needs exactly one of `probs` or `log_weights`".into(),
        )),
        PotentialConfig::FiniteRange { depth, table } => Potential::finite_range(ifs.alphabet(), *depth, nums(table)),
        PotentialConfig::GeometricMultiple {
            coefficient,
            plus,
            plus_coefficient,
            shift,
        } => {
            let mut terms = vec![(coefficient.0, Potential::geometric(ifs.clone()))];
            if let Some(p) = plus {
                terms.push((plus_coefficient.map_or(1.0, |c| c.0), build_potential(p, ifs)?));
            }
            Potential::combo(terms, shift.map_or(0.0, |s| s.0))
        }
    }
}

/// Largest level `≤ cap` whose word count stays below 2^16.
fn default_level(alphabet: usize, cap: usize) -> usize {
    let mut k = 1;
    while k < cap && (alphabet as f64).powi(k as i32 + 1) <= 65536.0 {
        k += 1;
    }
    k
}

/// Parses `prefix(tail)` or a bare periodic block.
pub fn parse_sequence(text: &str, alphabet: usize) -> Result<Sequence> {
    let text = text.trim();
    let (prefix, tail) = match text.split_once('(') {
        Some((p, rest)) => {
            let tail = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("sequence {text:?}: missing closing parenthesis")))?;
            (p, tail)
        }
        None => ("", text),
    };
    let prefix = if prefix.is_empty() {
        Word::empty()
    } else {
        Word::parse(prefix, alphabet)?
    };
    let tail = PeriodicWord::new(Word::parse(tail, alphabet)?)?;
    Ok(Sequence::new(prefix, tail))
}

#[derive(Debug, Parser)]
#[command(
    name = "gibbs-holder",
    version,
    about = "Multifractal analysis of Gibbs measures on self-conformal sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path (default: stdout, or `output` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    q_min: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    q_max: Option<String>,
    #[arg(long, global = true)]
    q_steps: Option<usize>,
    /// Depth override: pressure level, k_max, ell_max or max_depth depending on the command.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Tolerance override: root tolerance or mass tolerance depending on the command.
    #[arg(long, global = true)]
    tol: Option<String>,
    /// Comma-separated evaluation points.
    #[arg(long, global = true, allow_hyphen_values = true)]
    points: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// System and potential diagnostics.
    Check,
    /// Level-k pressure approximants.
    Pressure,
    /// β(q) at configured q values.
    Beta,
    /// β, α and β* on a q-grid.
    Spectrum,
    /// Endpoint estimates α± by word length.
    Endpoints,
    /// Distribution function values.
    Cdf,
    /// Pointwise Hölder exponent estimates.
    Holder,
    /// Coarse box-counting spectrum.
    Coarse,
    /// Perturbation scaling experiment and derivative-limit probe.
    VerifyProp,
    /// Polynomial detrend test.
    Detrend,
    /// Predicted Hausdorff and packing spectra.
    PredictPacking,
}

enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::F(v) => fmt_f(*v),
                    Cell::I(v) => v.to_string(),
                    Cell::S(s) => s.clone(),
                    Cell::Empty => String::new(),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

struct Outcome {
    table: Table,
    summary: String,
}

fn parse_override(flag: &str, v: &Option<String>) -> Result<Option<f64>> {
    v.as_deref()
        .map(|s| parse_rational(s).ok_or_else(|| Error::Config(format!("--{flag}: cannot parse {s:?}"))))
        .transpose()
}

fn parse_points(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_rational(p).ok_or_else(|| Error::Config(format!("--points: cannot parse {p:?}"))))
        .collect()
}

/// Runs the tool on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Io(e.to_string()))?;
    let outcome = pool.install(|| dispatch(cli, &cfg))?;
    let csv = outcome.table.render();
    match cli.out.as_ref().or(cfg.output.as_ref()) {
        Some(p) => {
            std::fs::write(p, csv)?;
            println!("{}", outcome.summary);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
            eprintln!("{}", outcome.summary);
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    let ifs = Arc::new(cfg.build_system()?);
    let psi = cfg.build_potential(&ifs)?;
    match cli.command {
        Command::Check => cmd_check(&ifs, &psi),
        Command::Pressure => cmd_pressure(cli, cfg, &ifs, &psi),
        Command::Beta => cmd_beta(cli, cfg, &ifs, &psi),
        Command::Spectrum => cmd_spectrum(cli, cfg, &ifs, &psi),
        Command::Endpoints => cmd_endpoints(cli, cfg, &ifs, &psi),
        Command::Cdf => cmd_cdf(cli, cfg, &ifs, &psi),
        Command::Holder => cmd_holder(cli, cfg, &ifs, &psi),
        Command::Coarse => cmd_coarse(cli, cfg, &ifs, &psi),
        Command::VerifyProp => cmd_verify(cli, cfg, &ifs, &psi),
        Command::Detrend => cmd_detrend(cli, cfg, &ifs, &psi),
        Command::PredictPacking => cmd_packing(cli, cfg, &ifs, &psi),
    }
}

fn spectrum_config(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem) -> Result<SpectrumConfig> {
    let b = &cfg.spectrum;
    let d = SpectrumConfig::default();
    Ok(SpectrumConfig {
        q_min: parse_override("q-min", &cli.q_min)?
            .or(b.q_min.map(|n| n.0))
            .unwrap_or(d.q_min),
        q_max: parse_override("q-max", &cli.q_max)?
            .or(b.q_max.map(|n| n.0))
            .unwrap_or(d.q_max),
        q_steps: cli.q_steps.or(b.q_steps).unwrap_or(d.q_steps),
        level: cli
            .depth
            .or(b.level)
            .unwrap_or_else(|| default_level(ifs.alphabet(), d.level)),
        ell_max: b.ell_max.unwrap_or_else(|| default_level(ifs.alphabet(), d.ell_max)),
        tol: parse_override("tol", &cli.tol)?.or(b.tol.map(|n| n.0)).unwrap_or(d.tol),
    })
}

fn distribution(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<DistributionFunction> {
    let b = &cfg.cdf;
    let policy = DepthPolicy {
        max_depth: b.max_depth.unwrap_or_else(|| ifs.safe_depth()),
        mass_tol: b.mass_tol.map_or(DEFAULT_MASS_TOL, |n| n.0),
    };
    let _ = cli;
    let depth = b
        .measure_depth
        .unwrap_or_else(|| default_level(ifs.alphabet(), DEFAULT_MEASURE_DEPTH));
    DistributionFunction::with_measure_depth(ifs.clone(), psi.clone(), policy, depth)
}

fn cmd_check(ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let osc = ifs.check_osc();
    let diag = cohomology_diagnostic(ifs, psi, default_level(ifs.alphabet(), 6))?;
    let p = pressure(ifs, psi, default_level(ifs.alphabet(), 10).max(2), 0.0)?;
    let mut t = Table::new(vec!["item", "value"]);
    let osc_text = match osc {
        OscDiagnostic::Satisfied => "satisfied".to_string(),
        OscDiagnostic::Violated { i, j, overlap_width } => format!("violated({i};{j};{})", fmt_f(overlap_width)),
    };
    t.rows
        .push(vec![Cell::S("alphabet".into()), Cell::I(ifs.alphabet() as i64)]);
    t.rows.push(vec![Cell::S("osc".into()), Cell::S(osc_text.clone())]);
    t.rows.push(vec![Cell::S("r_min".into()), Cell::F(ifs.r_min())]);
    t.rows.push(vec![Cell::S("r_max".into()), Cell::F(ifs.r_max())]);
    t.rows
        .push(vec![Cell::S("safe_depth".into()), Cell::I(ifs.safe_depth() as i64)]);
    t.rows.push(vec![Cell::S("pressure".into()), Cell::F(p.value)]);
    t.rows
        .push(vec![Cell::S("pressure_error".into()), Cell::F(p.error_bound)]);
    t.rows.push(vec![Cell::S("ratio_min".into()), Cell::F(diag.ratio_min)]);
    t.rows.push(vec![Cell::S("ratio_max".into()), Cell::F(diag.ratio_max)]);
    t.rows
        .push(vec![Cell::S("degenerate".into()), Cell::S(diag.degenerate.to_string())]);
    t.rows.push(vec![
        Cell::S("cohomologous_to_geometric".into()),
        Cell::S(diag.cohomologous_to_geometric.to_string()),
    ]);
    Ok(Outcome {
        table: t,
        summary: format!(
            "check: OSC {osc_text}, degenerate = {}, ratio range [{:.6}, {:.6}]",
            diag.degenerate, diag.ratio_min, diag.ratio_max
        ),
    })
}

fn cmd_pressure(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let k_max = cli
        .depth
        .or(cfg.pressure.k_max)
        .unwrap_or_else(|| default_level(ifs.alphabet(), 10))
        .max(2);
    let tol = parse_override("tol", &cli.tol)?
        .or(cfg.pressure.tol.map(|n| n.0))
        .unwrap_or(0.0);
    let est = pressure(ifs, psi, k_max, tol)?;
    let mut t = Table::new(vec!["k", "pressure_k", "difference"]);
    let mut prev = None;
    for k in 1..=k_max {
        let p = crate::thermodynamics::pressure_at_level(ifs, psi, k)?;
        t.rows.push(vec![
            Cell::I(k as i64),
            Cell::F(p),
            prev.map_or(Cell::Empty, |q: f64| Cell::F(p - q)),
        ]);
        prev = Some(p);
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "pressure: {:.12e} ± {:.3e} (level {})",
            est.value, est.error_bound, est.level
        ),
    })
}

fn cmd_beta(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let level = cli
        .depth
        .or(cfg.beta.level)
        .unwrap_or_else(|| default_level(ifs.alphabet(), 10));
    let tol = parse_override("tol", &cli.tol)?
        .or(cfg.beta.tol.map(|n| n.0))
        .unwrap_or(1e-10);
    let qs = match (&cli.points, &cfg.beta.q) {
        (Some(p), _) => parse_points(p)?,
        (None, Some(q)) => nums(q),
        (None, None) => (-5..=5).map(f64::from).collect(),
    };
    let solver = crate::spectrum::BetaSolver::new(ifs, psi, level)?;
    let mut t = Table::new(vec!["q", "beta"]);
    for &q in &qs {
        t.rows.push(vec![Cell::F(q), Cell::F(solver.solve(q, tol)?)]);
    }
    let b1 = beta_of_q(ifs, psi, 1.0, level, tol)?;
    Ok(Outcome {
        table: t,
        summary: format!("beta: {} values at level {level}; beta(1) = {b1:.3e}", qs.len()),
    })
}

fn cmd_spectrum(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let sc = spectrum_config(cli, cfg, ifs)?;
    let curve = compute_spectrum(ifs, psi, &sc)?;
    let mut t = Table::new(vec!["q", "beta", "alpha", "beta_star"]);
    for s in &curve.samples {
        t.rows.push(vec![
            Cell::F(s.q),
            Cell::F(s.beta),
            Cell::F(s.alpha),
            Cell::F(s.beta_star),
        ]);
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "spectrum: alpha_minus = {:.6}, alpha_plus = {:.6}, alpha_0 = {:.6}, beta_star(alpha_0) = {:.6}{}",
            curve.endpoints.alpha_minus,
            curve.endpoints.alpha_plus,
            curve.alpha_zero,
            curve.beta_star_zero,
            if curve.degenerate { " (degenerate)" } else { "" }
        ),
    })
}

fn cmd_endpoints(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let ell_max = cli
        .depth
        .or(cfg.endpoints.ell_max)
        .unwrap_or_else(|| default_level(ifs.alphabet(), 6));
    let mut t = Table::new(vec!["ell_max", "alpha_minus", "alpha_plus"]);
    let mut last = None;
    for ell in 1..=ell_max {
        let e = endpoints(ifs, psi, ell)?;
        t.rows
            .push(vec![Cell::I(ell as i64), Cell::F(e.alpha_minus), Cell::F(e.alpha_plus)]);
        last = Some(e);
    }
    let e = last.ok_or_else(|| Error::Config("endpoints.ell_max must be at least 1".into()))?;
    Ok(Outcome {
        table: t,
        summary: format!(
            "endpoints: [{:.12}, {:.12}] at ell_max = {ell_max}",
            e.alpha_minus, e.alpha_plus
        ),
    })
}

fn cmd_cdf(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    if let Some(d) = cli.depth {
        cfg.cdf.max_depth = Some(d);
    }
    if let Some(tol) = parse_override("tol", &cli.tol)? {
        cfg.cdf.mass_tol = Some(Num(tol));
    }
    let f = distribution(cli, &cfg, ifs, psi)?;
    let xs = match (&cli.points, &cfg.cdf.points) {
        (Some(p), _) => parse_points(p)?,
        (None, Some(p)) => nums(p),
        (None, None) => {
            let d = ifs.domain();
            (0..=100).map(|i| d.lo + d.width() * i as f64 / 100.0).collect()
        }
    };
    let vals = f.eval_many(&xs)?;
    let mut t = Table::new(vec!["x", "value", "error_bound"]);
    for (x, v) in xs.iter().zip(&vals) {
        t.rows.push(vec![Cell::F(*x), Cell::F(v.value), Cell::F(v.error_bound)]);
    }
    let worst = vals.iter().map(|v| v.error_bound).fold(0.0, f64::max);
    Ok(Outcome {
        table: t,
        summary: format!("cdf: {} points, max error bound {worst:.3e}", xs.len()),
    })
}

fn cmd_holder(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<Outcome> {
    let f = distribution(cli, cfg, ifs, psi)?;
    let b = &cfg.holder;
    let base = b.base.map_or_else(|| ifs.natural_scale_base(), |n| n.0);
    let j_min = b.j_min.unwrap_or(1);
    let j_max = cli.depth.map(|d| d as i32).or(b.j_max).unwrap_or(20);
    let mut scales = HolderScales::new(base, j_min, j_max);
    if let Some(w) = b.window {
        scales.window = w;
    }
    let method = match b.method.as_deref() {
        None | Some("regression_min") => HolderMethod::RegressionMin,
        Some("running_min") => HolderMethod::RunningMin,
        Some(other) => return Err(Error::Config(format!("holder.method: unknown method {other:?}"))),
    };
    let mut targets: Vec<(String, f64, Option<f64>)> = Vec::new();
    if let Some(p) = &cli.points {
        for x in parse_points(p)? {
            targets.push((String::new(), x, None));
        }
    } else {
        for x in b.points.as_deref().map(nums).unwrap_or_default() {
            targets.push((String::new(), x, None));
        }
        let default_coded = || vec!["0".to_string(), (ifs.alphabet() - 1).to_string()];
        let coded = match (&b.coded, &b.points) {
            (Some(c), _) => c.clone(),
            (None, Some(_)) => Vec::new(),
            (None, None) => default_coded(),
        };
        for c in coded {
            let seq = parse_sequence(&c, ifs.alphabet()).map_err(|e| Error::Config(format!("holder.coded: {e}")))?;
            let x = ifs.point(&seq)?;
            let exact = exact_exponent_at_coded_point(ifs, psi, seq.tail())?;
            targets.push((seq.to_string(), x, Some(exact)));
        }
    }
    let mut t = Table::new(vec![
        "label",
        "t0",
        "exponent",
        "exact",
        "scales_used",
        "outside_support",
    ]);
    let mut worst: f64 = 0.0;
    for (label, x, exact) in &targets {
        let e = holder_exponent_estimate(&f, *x, scales, method)?;
        if let Some(ex) = exact {
            worst = worst.max((e.exponent - ex).abs());
        }
        t.rows.push(vec![
            Cell::S(label.clone()),
            Cell::F(*x),
            Cell::F(e.exponent),
            exact.map_or(Cell::Empty, Cell::F),
            Cell::I(e.scale_pairs.len() as i64),
            Cell::S(e.outside_support.to_string()),
        ]);
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "holder: {} points, base {base}, j = {j_min}..{j_max}; max deviation from exact {worst:.4}",
            targets.len()
        ),
    })
}

fn cmd_coarse(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<Outcome> {
    let f = distribution(cli, cfg, ifs, psi)?;
    let base = ifs.natural_scale_base();
    let deltas = cfg
        .coarse
        .deltas
        .as_deref()
        .map(nums)
        .unwrap_or_else(|| vec![ifs.domain().width() * base.powi(-(cli.depth.unwrap_or(10) as i32))]);
    let width = cfg.coarse.bin_width.map_or(1.0 / 6.0, |n| n.0);
    let spectra = coarse_spectrum(&f, &deltas, width)?;
    let curve = compute_spectrum(ifs, psi, &spectrum_config(cli, cfg, ifs)?)?;
    let mut t = Table::new(vec![
        "delta",
        "alpha_lo",
        "alpha_hi",
        "count",
        "mean_alpha",
        "f_alpha",
        "predicted",
    ]);
    let mut worst: f64 = 0.0;
    for s in &spectra {
        for b in &s.bins {
            let pred = hausdorff_spectrum_prediction(&curve, &[b.mean_alpha])[0].dim;
            if let Some(p) = pred {
                worst = worst.max((p - b.f_alpha).abs());
            }
            t.rows.push(vec![
                Cell::F(s.delta),
                Cell::F(b.alpha_lo),
                Cell::F(b.alpha_hi),
                Cell::I(b.count as i64),
                Cell::F(b.mean_alpha),
                Cell::F(b.f_alpha),
                pred.map_or(Cell::Empty, Cell::F),
            ]);
        }
    }
    Ok(Outcome {
        table: t,
        summary: format!("coarse: {} box sizes, max |f - beta*| {worst:.4}", spectra.len()),
    })
}

fn cmd_verify(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<Outcome> {
    let f = distribution(cli, cfg, ifs, psi)?;
    let b = &cfg.verify_prop;
    let m = ifs.alphabet();
    let omega = parse_sequence(b.omega.as_deref().unwrap_or("0"), m)
        .map_err(|e| Error::Config(format!("verify_prop.omega: {e}")))?;
    let k = b.k.unwrap_or(1);
    let tau = match &b.tau {
        Some(t) => Word::parse(t, m).map_err(|e| Error::Config(format!("verify_prop.tau: {e}")))?,
        None => find_tau_block(ifs, psi, k, b.ell_max.unwrap_or(6))?.tau,
    };
    let (n_lo, n_hi) = (b.big_n_min.unwrap_or(1), b.big_n_max.unwrap_or(6));
    let safe = ifs.safe_depth();
    let n_set: Vec<usize> = b
        .n_set
        .clone()
        .unwrap_or_else(|| (3..=10).collect())
        .into_iter()
        .filter(|&n| {
            ifs.cylinder_interval(&omega.head(n).concat(&tau.repeat(n_hi + 1)))
                .is_ok()
        })
        .collect();
    let exp = ratio_scaling_experiment(&f, &omega, &tau, k, &n_set, n_lo..=n_hi)?;
    let [d_lo, d_hi] = b.probe_depths.unwrap_or([1, 25.min(safe.saturating_sub(1))]);
    let probe = derivative_limit_probe(&f, &omega, k, d_lo..=d_hi)?;
    let mut t = Table::new(vec![
        "n",
        "big_n",
        "s",
        "t",
        "r",
        "slope_k",
        "separator",
        "case",
        "slope_residual",
        "r_residual",
    ]);
    for r in &exp.records {
        t.rows.push(vec![
            Cell::I(r.n as i64),
            Cell::I(r.big_n as i64),
            Cell::F(r.s_n_big),
            Cell::F(r.t_n_big),
            Cell::F(r.r_n_big),
            Cell::F(r.slope_k),
            Cell::S(r.separator.to_string()),
            Cell::I(r.case.number() as i64),
            Cell::F(r.slope_residual),
            Cell::F(r.r_residual),
        ]);
    }
    let class = match probe.class {
        ProbeClass::TendsToZero => "tends_to_zero".to_string(),
        ProbeClass::TendsToInfinity => "tends_to_infinity".to_string(),
        ProbeClass::FiniteLimit(v) => format!("finite_limit({v:.9})"),
        ProbeClass::Oscillates { min, max } => format!("oscillates({min:.3e}..{max:.3e})"),
    };
    Ok(Outcome {
        table: t,
        summary: format!(
            "verify-prop: tau = {tau}, slope fit {:.6} (expected {:.6}), r fit {:.6} (expected {:.6}); probe at x = {:.12}: {class}{}",
            exp.slope_fit,
            exp.expected_slope,
            exp.r_fit,
            exp.expected_r,
            probe.x,
            if probe.degenerate { " [hypothesis violated: psi cohomologous to phi]" } else { "" }
        ),
    })
}

fn cmd_detrend(cli: &Cli, cfg: &RunConfig, ifs: &Arc<IfsSystem>, psi: &Potential) -> Result<Outcome> {
    let f = distribution(cli, cfg, ifs, psi)?;
    let b = &cfg.detrend;
    let t0 = match (&cli.points, b.t0) {
        (Some(p), _) => *parse_points(p)?
            .first()
            .ok_or_else(|| Error::Config("--points: empty".into()))?,
        (None, Some(t)) => t.0,
        (None, None) => ifs.domain().lo,
    };
    let base = b.base.map_or_else(|| ifs.natural_scale_base(), |n| n.0);
    let alpha_hat = match b.alpha_hat {
        Some(a) => a.0,
        None => {
            let scales = HolderScales::new(base, cfg.holder.j_min.unwrap_or(1), cfg.holder.j_max.unwrap_or(20));
            holder_exponent_estimate(&f, t0, scales, HolderMethod::RegressionMin)?.exponent
        }
    };
    let [w_lo, w_hi] = b.windows.unwrap_or([2, 9]);
    let d = detrend_exponent_test(&f, t0, alpha_hat, base, w_lo..=w_hi)?;
    let mut t = Table::new(vec!["degree", "window", "radius", "coefficient"]);
    for fit in &d.fits {
        for (i, (r, c)) in fit.radii.iter().zip(&fit.coefficients).enumerate() {
            t.rows.push(vec![
                Cell::I(fit.degree as i64),
                Cell::I(w_lo as i64 + i as i64),
                Cell::F(*r),
                Cell::F(*c),
            ]);
        }
    }
    Ok(Outcome {
        table: t,
        summary: format!(
            "detrend: t0 = {t0}, alpha_hat = {alpha_hat:.4}, residual exponent = {:.4}, {}{}",
            d.residual_exponent,
            if d.skipped {
                "skipped"
            } else if d.pass {
                "pass"
            } else {
                "fail"
            },
            if d.hypothesis_violated {
                " [hypothesis violated: degenerate potential]"
            } else {
                ""
            }
        ),
    })
}

fn cmd_packing(cli: &Cli, cfg: &RunConfig, ifs: &IfsSystem, psi: &Potential) -> Result<Outcome> {
    let curve = compute_spectrum(ifs, psi, &spectrum_config(cli, cfg, ifs)?)?;
    let b = &cfg.predict_packing;
    let lo = b.alpha_min.map_or(curve.endpoints.alpha_minus, |n| n.0);
    let hi = b.alpha_max.map_or(curve.endpoints.alpha_plus, |n| n.0);
    let steps = b.alpha_steps.unwrap_or(101).max(2);
    let grid: Vec<f64> = (0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let h = hausdorff_spectrum_prediction(&curve, &grid);
    let p = packing_spectrum_prediction(&curve, &grid);
    let mut t = Table::new(vec!["alpha", "hausdorff", "packing"]);
    for (a, b) in h.iter().zip(&p) {
        t.rows.push(vec![
            Cell::F(a.alpha),
            a.dim.map_or(Cell::Empty, Cell::F),
            b.dim.map_or(Cell::Empty, Cell::F),
        ]);
    }
    let at_zero = legendre(&curve, curve.alpha_zero).value;
    Ok(Outcome {
        table: t,
        summary: format!(
            "predict-packing: alpha_0 = {:.6}, packing plateau {:.6} on [{:.6}, {:.6}]",
            curve.alpha_zero, at_zero, curve.endpoints.alpha_minus, curve.alpha_zero
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANTOR: &str = r#"{
        "schema_version": 1,
        "system": {"family": "affine", "domain": [0, 1], "maps": [
            {"ratio": "1/3", "offset": 0}, {"ratio": "1/3", "offset": "2/3"}]},
        "potential": {"kind": "bernoulli", "probs": ["1/4", "3/4"]}
    }"#;

    #[test]
    fn parses_rational_strings() {
        let cfg = RunConfig::from_json(CANTOR).unwrap();
        let ifs = cfg.build_system().unwrap();
        assert_eq!(ifs, IfsSystem::middle_thirds());
    }

    #[test]
    fn config_errors_are_addressed() {
        let bad = CANTOR.replace("\"1/4\"", "\"1/0\"");
        let err = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let bad = CANTOR.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(RunConfig::from_json(&bad)
            .unwrap_err()
            .to_string()
            .contains("schema_version"));
        let bad = CANTOR.replace("\"potential\"", "\"potentail\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn sequences_parse() {
        let s = parse_sequence("1(0)", 2).unwrap();
        assert_eq!(s.prefix().symbols(), &[1]);
        assert_eq!(s.tail().period().symbols(), &[0]);
        let s = parse_sequence("01", 2).unwrap();
        assert!(s.prefix().is_empty());
        assert!(parse_sequence("1(0", 2).is_err());
    }

    #[test]
    fn csv_formatting() {
        assert_eq!(fmt_f(0.25), "2.5000000000000000e-1");
        assert_eq!(fmt_f(f64::NAN), "nan");
        let mut t = Table::new(vec!["a", "b"]);
        t.rows.push(vec![Cell::I(3), Cell::Empty]);
        assert_eq!(t.render(), "a,b\n3,\n");
    }

    #[test]
    fn default_levels_respect_word_budget() {
        assert_eq!(default_level(2, 10), 10);
        assert_eq!(default_level(64, 10), 2);
        assert_eq!(default_level(16, 6), 4);
    }
}
