use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("tilt function undefined at x = {value}: requires x > 0")]
    TiltDomain { value: f64 },

    #[error("invalid fused sample: {0}")]
    InvalidSample(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "solver did not converge within {iterations} iterations (gradient norm {grad_norm:.3e})"
    )]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("singular Hessian: the fused data do not identify the tilt parameters")]
    SingularHessian,

    #[error("singular information matrix S (condition estimate {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error(
        "{failed} of {attempted} fusion replicates failed to converge \
         (budget {budget}); first failures at indices {first_failures:?}"
    )]
    TooManyFailures {
        failed: usize,
        attempted: usize,
        budget: usize,
        first_failures: Vec<usize>,
    },

    #[error("order-statistic index {j} out of range 1..={n}")]
    IndexOutOfRange { j: usize, n: usize },

    #[error("no grid point satisfies the exceedance inequality for j = {j}: j too large for this collection")]
    GridExhausted { j: usize },

    #[error(
        "no Up sequence found: max of the reference sample is too large relative to the \
         threshold; remove the largest observations (trim_reference) and rerun"
    )]
    NoUpSequence,

    #[error(
        "no Down sequence found: max of the reference sample is too small relative to the \
         threshold; a larger reference sample is needed"
    )]
    NoDownSequence,

    #[error("subsample size {k} exceeds collection size {n}")]
    SubsampleTooLarge { k: usize, n: usize },

    #[error("generalized Pareto fit requires at least {min} exceedances, got {got}")]
    TooFewExceedances { min: usize, got: usize },

    #[error("threshold {threshold} is not above the fitting threshold u = {u}")]
    ThresholdBelowU { threshold: f64, u: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("quantile unsupported for empirical distributions")]
    EmpiricalQuantile,

    #[error(
        "rejection sampling exceeded {attempts} attempts; constraint max < {threshold} implausible"
    )]
    RejectionBudget { attempts: usize, threshold: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
