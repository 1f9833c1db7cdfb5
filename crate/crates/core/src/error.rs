use thiserror::Error;

/// Errors raised by the library. Each variant names the module that produced it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symbolic: enumeration of {alphabet}^{depth} words exceeds the cap of {cap}")]
    Capacity { alphabet: usize, depth: usize, cap: u64 },

    #[error("symbolic: word lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("symbolic: invalid word: {0}")]
    InvalidWord(String),

    #[error("ifs_geometry: point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("ifs_geometry: invalid system: {0}")]
    InvalidSystem(String),

    #[error("{module}: precision floor reached (interval width {width:e})")]
    Precision { module: &'static str, width: f64 },

    #[error("ifs_geometry: coding point did not converge within {budget} iterations")]
    NonConvergence { budget: usize },

    #[error("thermodynamics: invalid potential: {0}")]
    InvalidPotential(String),

    #[error("{module}: precondition violated: {message}")]
    Precondition { module: &'static str, message: String },

    #[error("spectrum: could not bracket the root of the pressure equation at q = {q}")]
    BracketFailure { q: f64 },

    #[error("spectrum: q = {q} is not interior to the grid [{lo}, {hi}]")]
    EdgeOfGrid { q: f64, lo: f64, hi: f64 },

    #[error("holder_lab: no block with two distinct letters and nonzero sum up to length {ell_max}")]
    TauNotFound { ell_max: usize },

    #[error("holder_lab: no separating cylinder at depth {depth}")]
    NoSeparator { depth: usize },

    #[error("{module}: insufficient usable scales ({usable} < {needed})")]
    InsufficientScales {
        module: &'static str,
        usable: usize,
        needed: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
