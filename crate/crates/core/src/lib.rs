//! Analysis and simulation toolkit for event-triggered distributed control of
//! interconnected systems.
//!
//! The crate is organized around the pipeline that takes an interconnection
//! model to a certified event-triggered closed loop:
//!
//! 1. [`gainalg`] — an exact algebra of scaled-power comparison gains, the
//!    gain matrix `Γ` with its row aggregation functions, and small-gain
//!    condition checks (spectral-radius and two-subsystem cycle routes).
//! 2. [`omega`] — construction and grid verification of Ω-paths `σ` and
//!    error-gain maps `φ` certifying the coupled small-gain inequality.
//! 3. [`plant`] — linear interconnections with derived Lyapunov/gain data,
//!    a random certified-instance generator, and the built-in two-subsystem
//!    nonlinear benchmark.
//! 4. [`trigger`] — threshold synthesis (`χ`, `η̂`, `ψ`) and the three
//!    triggering schemes: basic, practical (dead-band), and parsimonious
//!    (derivative-quotient suppression).
//! 5. [`sim`] — deterministic fixed-step closed-loop simulation with
//!    zero-order hold, broadcast scheduling baselines, Zeno monitoring, and
//!    communication/stability metrics.
//! 6. [`pipeline`] — glue bundling the above for the CLI and test suites.

pub mod gainalg;
pub mod grid;
pub mod omega;
pub mod pipeline;
pub mod plant;
pub mod sim;
pub mod trigger;

use thiserror::Error;

/// Errors surfaced by analysis and simulation operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-square input: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("non-invertible gain")]
    NonInvertibleGain,
    #[error("invalid gain: {0}")]
    InvalidGain(String),
    #[error("no closed-form check; use verify_omega_condition with a user-supplied path")]
    NoClosedFormCheck,
    #[error("small-gain condition fails (rho = {rho})")]
    SmallGainFails { rho: f64 },
    #[error("path construction failed; decrease epsilon")]
    PathConstructionFailed,
    #[error("path budget exhausted; rebuild path with smaller epsilon (rho_{i} = {value})")]
    PathBudgetExhausted { i: usize, value: f64 },
    #[error("no sigma_2 found in the admissible box; small-gain margin too tight")]
    SigmaSearchFailed,
    #[error("stabilize first: Abar_ii must be Hurwitz (max eigenvalue real part {max_re})")]
    NotHurwitz { max_re: f64 },
    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("lyapunov solve did not converge (residual {residual})")]
    LyapunovNoConvergence { residual: f64 },
    #[error("stabilizing gain synthesis failed: {0}")]
    StabilizationFailed(String),
    #[error("no small-gain instance found; loosen bound or dims (tried {attempts} draws)")]
    GenerationCapExceeded { attempts: u64 },
    #[error("small-gain condition requires k>32 (got k = {k})")]
    NonlinearKTooSmall { k: f64 },
    #[error("sigma_bar_sq = {value} outside the admissible interval ({lo}, {hi})")]
    SigmaBarOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("practical scheme requires positive constants (c_{i} = {value})")]
    NonPositivePracticalConstant { i: usize, value: f64 },
    #[error("threshold construction failed: {0}")]
    ThresholdConstruction(String),
    #[error("quotient update needs t > {stored}, got {got}")]
    NonAdvancingTime { stored: f64, got: f64 },
    #[error("divergence detected at t = {t} (|x| = {norm})")]
    Divergence { t: f64, norm: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
