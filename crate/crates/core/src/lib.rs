//! Estimation of small tail probabilities by repeated out-of-sample fusion.
//!
//! A moderately sized reference sample with no exceedances of a high
//! threshold T is fused repeatedly with computer-generated uniform samples.
//! Each fusion is scored under a semiparametric density ratio model fitted by
//! empirical likelihood, producing an upper confidence bound for
//! p = P(X > T); the sorted bounds form the B-curve, and a Down-Up iteration
//! between the curve and an order-statistic inequality captures the point
//! whose ordinate is near p. A peaks-over-threshold baseline and a
//! simulation harness reproduce the comparison protocol.

pub mod dist;
pub mod drm;
pub mod error;
pub mod fusion;
pub mod io;
pub mod iterative;
pub mod pot;
pub mod sample;
pub mod scenario;
pub mod stats;
pub mod streams;
pub mod tilt;

pub use dist::{quantile_threshold, sample_reference, DistSpec};
pub use drm::{
    covariance_components, covariance_ghat, estimate_cdf, fit_drm, tail_ci, tilt_eval,
    CovarianceComponents, DrmFit, SolverOptions, TailInterval,
};
pub use error::{Error, Result};
pub use fusion::{
    bcurve, bcurve_csv, empirical_fb, generate_fusion_sample, run_rosf, sample_fingerprint,
    subsample_bounds, BoundCollection, CollectionMeta, FusionConfig,
};
pub use io::{load_reference_csv, ColumnSel};
pub use iterative::{
    down_up_estimate, iterate, nearest_bound_index, orderstat_exceed_prob, single_start_estimate,
    smallest_p, trace_csv, trim_reference, Direction, DownUpConfig, DownUpEstimate, EstimateRule,
    IterationTrace, PGrid,
};
pub use pot::{fit_gpd, mean_excess_curve, mrl_csv, pot_tail, GpdFit, MrlPoint};
pub use sample::FusedSample;
pub use scenario::{
    report_csv, run_comparison, variance_study, ComparisonReport, MethodSummary, Preset, RunDetail,
    Scenario, VarianceStudy,
};
pub use tilt::TiltSpec;
