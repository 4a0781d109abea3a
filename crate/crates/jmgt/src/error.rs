use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("eigenvalue root scan found {found} of {wanted} roots; refine the scan")]
    Bracket { found: usize, wanted: usize },
    #[error("degenerate spectrum: eigenvalues {i} and {j} differ by {gap:e}")]
    Degenerate { i: usize, j: usize, gap: f64 },
    #[error("trace on eigenspace {mode} is rank deficient (norm {norm:e})")]
    TraceRank { mode: usize, norm: f64 },
    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("resonance at harmonic {m}, mode {j} (|symbol| = {magnitude:e})")]
    Resonance { m: usize, j: usize, magnitude: f64 },
    #[error("fixed point iteration stalled after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("no root with positive imaginary part for lambda = {lambda}")]
    NoOscillatoryRoot { lambda: f64 },
    #[error("asymptotic pole undefined: lambda = {lambda} is not in the oscillatory regime")]
    NonOscillatory { lambda: f64 },
    #[error("pole of mode {mode} has positive real part {re:e}")]
    PositiveRealPart { mode: usize, re: f64 },
    #[error("modulation amplitude A = {0} makes the source matrices singular (det carries A(A-1))")]
    SingularModulation(f64),
    #[error("source matrix near singular at o = {re} + {im}i (|det| = {det:e})")]
    SingularSource { re: f64, im: f64, det: f64 },
    #[error("pulse of width {width} centred at {center} does not fit inside (0, {period})")]
    PulseWidth { width: f64, center: f64, period: f64 },
    #[error("vanishing recursion denominator at harmonic {0}")]
    RecursionDenominator(usize),
    #[error("reference profile too close to zero on the grid (min |phi| = {0:e})")]
    PhiGuard(f64),
    #[error("ill-conditioned residue fit at sample {sample} (condition number {cond:e})")]
    IllConditioned { sample: usize, cond: f64 },
    #[error("denominator vanishes at harmonic {m}, mode {j}")]
    Denominator { m: usize, j: usize },
    #[error("recovery overflowed at mode {mode} (pole {re} + {im}i); e^(-pT) exceeds floating range")]
    Overflow { mode: usize, re: f64, im: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("every smoothing level was rejected (kappa * delta exceeds the data norm)")]
    SmoothingRejected,
}

pub type Result<T> = std::result::Result<T, Error>;
