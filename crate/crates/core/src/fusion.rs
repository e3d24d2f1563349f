//! Repeated out-of-sample fusion: fuse a fixed reference sample with many
//! independently generated uniform samples and collect the tail-interval
//! upper bounds B_i.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drm::{fit_drm, tail_ci, SolverOptions};
use crate::error::{Error, Result};
use crate::sample::FusedSample;
use crate::stats::fmt_full;
use crate::streams::{purpose, stream_rng};
use crate::tilt::TiltSpec;

/// Configuration of one repeated-fusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Number of fusions N.
    pub n_fusions: usize,
    /// Size of each generated fusion sample.
    pub n1: usize,
    /// Uniform support (low, high) in data units; high must exceed the
    /// threshold under study.
    pub support: (f64, f64),
    /// Confidence level behind each upper bound.
    pub ci_level: f64,
    /// Master seed; every replicate stream derives from it.
    pub seed: u64,
    pub tilt: TiltSpec,
}

impl FusionConfig {
    /// Default support used when none is given: (0, 1.35 T).
    pub fn default_support(threshold: f64) -> (f64, f64) {
        (0.0, 1.35 * threshold)
    }

    fn validate(&self, threshold: f64, tilt_positive: bool) -> Result<()> {
        if self.n_fusions == 0 {
            return Err(Error::InvalidConfig("n_fusions must be >= 1".into()));
        }
        if self.n1 == 0 {
            return Err(Error::InvalidConfig(
                "empty fusion sample: n1 must be >= 1".into(),
            ));
        }
        let (lo, hi) = self.support;
        if lo >= hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "support low {lo} must be below high {hi}"
            )));
        }
        if tilt_positive && lo < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "support low {lo} must be >= 0 under the gamma tilt"
            )));
        }
        if hi <= threshold {
            return Err(Error::InvalidConfig(format!(
                "support high {hi} must exceed the threshold {threshold}"
            )));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level {} not in (0,1)",
                self.ci_level
            )));
        }
        Ok(())
    }
}

/// Metadata carried by a bound collection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionMeta {
    pub config: FusionConfig,
    /// SHA-256 over the reference sample's f64 little-endian bytes.
    pub reference_fingerprint: String,
    pub threshold: f64,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed_indices: Vec<usize>,
}

/// The B_1..B_N upper bounds from repeated fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCollection {
    /// Bounds in generation (replicate) order, failures excluded.
    pub bounds: Vec<f64>,
    /// Cached nondecreasing copy.
    sorted: Vec<f64>,
    pub meta: CollectionMeta,
}

impl BoundCollection {
    pub fn new(bounds: Vec<f64>, meta: CollectionMeta) -> Result<Self> {
        crate::stats::all_probabilities(&bounds)?;
        let mut sorted = bounds.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            bounds,
            sorted,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    /// Nondecreasing view B_(1) <= ... <= B_(N).
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    /// Serialize to JSON (schema_version 1).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "meta": self.meta,
            "bounds": self.bounds,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let meta: CollectionMeta = serde_json::from_value(v["meta"].clone())
            .map_err(|e| Error::InvalidConfig(format!("bad bounds file: {e}")))?;
        let bounds: Vec<f64> = serde_json::from_value(v["bounds"].clone())
            .map_err(|e| Error::InvalidConfig(format!("bad bounds file: {e}")))?;
        Self::new(bounds, meta)
    }
}

/// SHA-256 fingerprint of a sample (f64 little-endian bytes, in order).
pub fn sample_fingerprint(sample: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for x in sample {
        hasher.update(x.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Draw one fusion sample of n1 independent Uniform(low, high) values from a
/// replicate stream. Exact zeros are redrawn so the gamma tilt stays defined.
pub fn generate_fusion_sample(
    rng: &mut ChaCha8Rng,
    n1: usize,
    support: (f64, f64),
) -> Result<Vec<f64>> {
    if n1 == 0 {
        return Err(Error::InvalidConfig(
            "empty fusion sample: n1 must be >= 1".into(),
        ));
    }
    let (lo, hi) = support;
    if lo >= hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "support low {lo} must be below high {hi}"
        )));
    }
    Ok((0..n1)
        .map(|_| loop {
            let v: f64 = rng.gen_range(lo..hi);
            if v > 0.0 || lo > 0.0 {
                break v;
            }
        })
        .collect())
}

/// Fraction of replicates allowed to fail before the whole run errors.
const FAILURE_BUDGET: f64 = 0.01;

/// Repeated out-of-sample fusion: N times, fuse the reference with a fresh
/// uniform sample, fit the density ratio model and record the tail-interval
/// upper bound at `threshold`.
///
/// Deterministic in (reference, threshold, cfg) at any worker count:
/// replicate i draws from a stream keyed by (cfg.seed, FUSION, i).
pub fn run_rosf(reference: &[f64], threshold: f64, cfg: &FusionConfig) -> Result<BoundCollection> {
    if reference.is_empty() {
        return Err(Error::InvalidSample("reference sample is empty".into()));
    }
    cfg.validate(threshold, cfg.tilt.requires_positive())?;
    if cfg.tilt.requires_positive() {
        if let Some(&x) = reference.iter().find(|&&x| x <= 0.0) {
            return Err(Error::TiltDomain { value: x });
        }
    }
    let opts = SolverOptions::default();
    let results: Vec<Option<f64>> = (0..cfg.n_fusions)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, purpose::FUSION, &[i as u64]);
            let fusion = generate_fusion_sample(&mut rng, cfg.n1, cfg.support).ok()?;
            let sample = FusedSample::two_sample(reference.to_vec(), fusion).ok()?;
            let fit = fit_drm(&sample, &cfg.tilt, &opts).ok()?;
            if !fit.converged {
                return None;
            }
            let ti = tail_ci(&fit, &sample, &cfg.tilt, threshold, cfg.ci_level).ok()?;
            Some(ti.upper.clamp(0.0, 1.0))
        })
        .collect();

    let failed_indices: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_none().then_some(i))
        .collect();
    let attempted = cfg.n_fusions;
    let budget = ((attempted as f64) * FAILURE_BUDGET).floor() as usize;
    if failed_indices.len() > budget {
        return Err(Error::TooManyFailures {
            failed: failed_indices.len(),
            attempted,
            budget,
            first_failures: failed_indices.iter().take(8).copied().collect(),
        });
    }
    let bounds: Vec<f64> = results.into_iter().flatten().collect();
    let meta = CollectionMeta {
        config: cfg.clone(),
        reference_fingerprint: sample_fingerprint(reference),
        threshold,
        attempted,
        succeeded: bounds.len(),
        failed_indices,
    };
    BoundCollection::new(bounds, meta)
}

/// The B-curve: pairs (j, B_(j)) with nondecreasing ordinates, j = 1..N.
pub fn bcurve(coll: &BoundCollection) -> impl Iterator<Item = (usize, f64)> + '_ {
    coll.sorted().iter().enumerate().map(|(i, &b)| (i + 1, b))
}

/// Empirical distribution of the bounds at p (right-continuous).
pub fn empirical_fb(coll: &BoundCollection, p: f64) -> f64 {
    let k = coll.sorted().partition_point(|&b| b <= p);
    k as f64 / coll.len() as f64
}

/// Draw k bounds uniformly without replacement.
pub fn subsample_bounds(coll: &BoundCollection, k: usize, seed: u64) -> Result<BoundCollection> {
    let n = coll.len();
    if k > n {
        return Err(Error::SubsampleTooLarge { k, n });
    }
    let mut rng = stream_rng(seed, purpose::SUBSAMPLE, &[]);
    // partial Fisher-Yates over indices
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let bounds: Vec<f64> = idx[..k].iter().map(|&i| coll.bounds[i]).collect();
    let mut meta = coll.meta.clone();
    meta.attempted = k;
    meta.succeeded = k;
    meta.failed_indices.clear();
    BoundCollection::new(bounds, meta)
}

/// Plot-ready CSV of the B-curve: header `j,B_j`, full float precision.
pub fn bcurve_csv(coll: &BoundCollection) -> String {
    let mut out = String::from("j,B_j\n");
    for (j, b) in bcurve(coll) {
        out.push_str(&format!("{j},{}\n", fmt_full(b)));
    }
    out
}
