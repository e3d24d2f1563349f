//! Scenario definitions and the ROSF-vs-POT comparison protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{quantile_threshold, sample_reference, DistSpec};
use crate::drm::TailInterval;
use crate::error::{Error, Result};
use crate::fusion::{run_rosf, FusionConfig};
use crate::iterative::{single_start_estimate, PGrid};
use crate::pot::pot_tail;
use crate::stats::{fmt_full, mean_sd};
use crate::streams::{derive_subseed, purpose, stream_rng};
use crate::tilt::TiltSpec;

fn default_ci_level() -> f64 {
    0.95
}
fn default_u_quantile() -> f64 {
    0.8
}
fn default_cap() -> f64 {
    0.95
}

/// One simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub dist: DistSpec,
    pub p_true: f64,
    /// Threshold with survivor mass p_true; computed from the distribution
    /// when omitted.
    #[serde(default)]
    pub threshold: Option<f64>,
    pub n0: usize,
    pub n1: usize,
    /// Uniform fusion support; (0, 1.35 T) when omitted.
    #[serde(default)]
    pub support: Option<(f64, f64)>,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// p-grid increment; defaulted from p_true when omitted.
    #[serde(default)]
    pub increment: Option<f64>,
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Number of simulation runs (fresh reference each).
    pub runs: usize,
    /// IM repetitions per run (fresh fusion batch each).
    pub im_reps: usize,
    /// Fusions per batch.
    pub fusions: usize,
    /// Number of estimates sampled for the (min, max) interval.
    pub n_estimates: usize,
    pub seed: u64,
    /// Condition reference samples on max < T (off by default, as in the
    /// comparison protocol).
    #[serde(default)]
    pub constrain_reference: bool,
    #[serde(default = "default_u_quantile")]
    pub u_quantile: f64,
}

/// Protocol scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// runs=50, im_reps=100, fusions=500, n_estimates=50.
    Desk,
    /// runs=500, im_reps=500, fusions=1000, n_estimates=50.
    Paper,
}

impl Preset {
    pub fn apply(&self, scn: &mut Scenario) {
        match self {
            Preset::Desk => {
                scn.runs = 50;
                scn.im_reps = 100;
                scn.fusions = 500;
                scn.n_estimates = 50;
            }
            Preset::Paper => {
                scn.runs = 500;
                scn.im_reps = 500;
                scn.fusions = 1000;
                scn.n_estimates = 50;
            }
        }
    }

    /// Rough wall-clock warning for manifests.
    pub fn runtime_note(&self) -> &'static str {
        match self {
            Preset::Desk => "desk scale: minutes to tens of minutes",
            Preset::Paper => "paper scale: expect multi-hour runtime",
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p_true && self.p_true < 1.0) {
            return Err(Error::Scenario(format!(
                "p_true {} not in (0,1)",
                self.p_true
            )));
        }
        for (name, v) in [
            ("runs", self.runs),
            ("im_reps", self.im_reps),
            ("fusions", self.fusions),
            ("n_estimates", self.n_estimates),
            ("n0", self.n0),
            ("n1", self.n1),
        ] {
            if v == 0 {
                return Err(Error::Scenario(format!("{name} must be >= 1")));
            }
        }
        if self.n_estimates > self.im_reps {
            return Err(Error::Scenario(format!(
                "n_estimates {} exceeds im_reps {}",
                self.n_estimates, self.im_reps
            )));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::Scenario(format!(
                "ci_level {} not in (0,1)",
                self.ci_level
            )));
        }
        Ok(())
    }

    /// The threshold, computed or verified against the distribution.
    pub fn resolve_threshold(&self) -> Result<f64> {
        match (self.threshold, self.dist.is_empirical()) {
            (Some(t), true) => Ok(t),
            (None, true) => Err(Error::Scenario(
                "empirical scenarios must state the threshold explicitly".into(),
            )),
            (Some(t), false) => {
                let s = self.dist.survivor(t)?;
                if (s - self.p_true).abs() > 1e-6 {
                    return Err(Error::Scenario(format!(
                        "threshold {t} has survivor mass {s:.9}, stated p_true {}",
                        self.p_true
                    )));
                }
                Ok(t)
            }
            (None, false) => quantile_threshold(&self.dist, self.p_true),
        }
    }

    pub fn resolved_support(&self, threshold: f64) -> (f64, f64) {
        self.support
            .unwrap_or_else(|| FusionConfig::default_support(threshold))
    }

    pub fn resolved_increment(&self) -> f64 {
        self.increment
            .unwrap_or_else(|| PGrid::default_increment(self.p_true))
    }
}

/// Per-method aggregate over the runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodSummary {
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub mae: f64,
}

/// Per-run record kept for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDetail {
    pub run: usize,
    pub max_x0: f64,
    pub pot: TailInterval,
    pub pot_covered: bool,
    pub rosf_lower: f64,
    pub rosf_upper: f64,
    pub rosf_covered: bool,
    pub rosf_mae_pick: f64,
    pub skipped_reps: usize,
}

/// The comparison report for one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario_name: String,
    pub p_true: f64,
    pub threshold: f64,
    pub n0: usize,
    pub n1: usize,
    pub runs: usize,
    pub im_reps: usize,
    pub fusions: usize,
    pub n_estimates: usize,
    pub seed: u64,
    /// For empirical populations the target is the population proportion, not
    /// a parametric tail mass; flagged for report readers.
    pub p_true_is_population_proportion: bool,
    pub rosf: MethodSummary,
    pub pot: MethodSummary,
    pub per_run: Vec<RunDetail>,
}

struct RunOutcome {
    detail: RunDetail,
    pot_length: f64,
    pot_abs_err: f64,
    rosf_length: f64,
}

fn comparison_run(scn: &Scenario, threshold: f64, run: usize) -> Result<RunOutcome> {
    let support = scn.resolved_support(threshold);
    let increment = scn.resolved_increment();
    let constraint = scn.constrain_reference.then_some(threshold);
    let mut ref_rng = stream_rng(scn.seed, purpose::REFERENCE, &[run as u64]);
    let x0 = sample_reference(&scn.dist, scn.n0, &mut ref_rng, constraint).map_err(|e| {
        Error::RunFailed {
            run,
            source: Box::new(e),
        }
    })?;
    let max_x0 = x0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let pot =
        pot_tail(&x0, threshold, scn.u_quantile, scn.ci_level).map_err(|e| Error::RunFailed {
            run,
            source: Box::new(e),
        })?;
    let pot_covered = pot.lower <= scn.p_true && scn.p_true <= pot.upper;

    let mut estimates = Vec::with_capacity(scn.im_reps);
    let mut skipped = 0usize;
    for rep in 0..scn.im_reps {
        let cfg = FusionConfig {
            n_fusions: scn.fusions,
            n1: scn.n1,
            support,
            ci_level: scn.ci_level,
            seed: derive_subseed(scn.seed, purpose::BATCH, &[run as u64, rep as u64]),
            tilt: TiltSpec::Gamma,
        };
        match run_rosf(&x0, threshold, &cfg)
            .and_then(|coll| single_start_estimate(&coll, increment, scn.cap))
        {
            Ok((p_hat, _)) => estimates.push(p_hat),
            Err(_) => skipped += 1,
        }
    }
    if estimates.len() < scn.n_estimates {
        return Err(Error::RunFailed {
            run,
            source: Box::new(Error::Scenario(format!(
                "only {} of {} IM repetitions produced estimates",
                estimates.len(),
                scn.im_reps
            ))),
        });
    }

    // choose n_estimates without replacement
    let mut pick_rng = stream_rng(scn.seed, purpose::ESTIMATE_PICK, &[run as u64]);
    let mut idx: Vec<usize> = (0..estimates.len()).collect();
    for i in 0..scn.n_estimates {
        let j = rand::Rng::gen_range(&mut pick_rng, i..idx.len());
        idx.swap(i, j);
    }
    let picked: Vec<f64> = idx[..scn.n_estimates]
        .iter()
        .map(|&i| estimates[i])
        .collect();
    let lower = picked.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper = picked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rosf_covered = lower <= scn.p_true && scn.p_true <= upper;

    let mut mae_rng = stream_rng(scn.seed, purpose::MAE_PICK, &[run as u64]);
    let pick = estimates[rand::Rng::gen_range(&mut mae_rng, 0..estimates.len())];
    let rosf_mae_pick = (pick - scn.p_true).abs();

    Ok(RunOutcome {
        detail: RunDetail {
            run,
            max_x0,
            pot,
            pot_covered,
            rosf_lower: lower,
            rosf_upper: upper,
            rosf_covered,
            rosf_mae_pick,
            skipped_reps: skipped,
        },
        pot_length: pot.upper - pot.lower,
        pot_abs_err: (pot.point - scn.p_true).abs(),
        rosf_length: upper - lower,
    })
}

/// The full comparison protocol: per run, a fresh reference sample is scored
/// by POT once and by the iterative method over `im_reps` fresh fusion
/// batches; the IM interval is (min, max) of `n_estimates` sampled estimates.
///
/// MAE uses all POT point estimates, and one randomly chosen IM estimate per
/// run. Deterministic in the scenario seed at any worker count.
pub fn run_comparison(scn: &Scenario) -> Result<ComparisonReport> {
    scn.validate()?;
    let dist = scn.dist.resolve()?;
    let scn = Scenario {
        dist,
        ..scn.clone()
    };
    let threshold = scn.resolve_threshold()?;
    let outcomes: Vec<Result<RunOutcome>> = (0..scn.runs)
        .into_par_iter()
        .map(|run| comparison_run(&scn, threshold, run))
        .collect();
    let mut per_run = Vec::with_capacity(scn.runs);
    let (mut pot_cov, mut pot_len, mut pot_mae) = (0usize, 0.0, 0.0);
    let (mut rosf_cov, mut rosf_len, mut rosf_mae) = (0usize, 0.0, 0.0);
    for outcome in outcomes {
        let o = outcome?;
        pot_cov += o.detail.pot_covered as usize;
        pot_len += o.pot_length;
        pot_mae += o.pot_abs_err;
        rosf_cov += o.detail.rosf_covered as usize;
        rosf_len += o.rosf_length;
        rosf_mae += o.detail.rosf_mae_pick;
        per_run.push(o.detail);
    }
    let n = scn.runs as f64;
    Ok(ComparisonReport {
        scenario_name: scn.name.clone(),
        p_true: scn.p_true,
        threshold,
        n0: scn.n0,
        n1: scn.n1,
        runs: scn.runs,
        im_reps: scn.im_reps,
        fusions: scn.fusions,
        n_estimates: scn.n_estimates,
        seed: scn.seed,
        p_true_is_population_proportion: scn.dist.is_empirical(),
        rosf: MethodSummary {
            coverage: rosf_cov as f64 / n,
            mean_ci_length: rosf_len / n,
            mae: rosf_mae / n,
        },
        pot: MethodSummary {
            coverage: pot_cov as f64 / n,
            mean_ci_length: pot_len / n,
            mae: pot_mae / n,
        },
        per_run,
    })
}

/// Table CSV matching the paper's column names.
pub fn report_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("Method,N,Coverage,CI Length,MAE\n");
    out.push_str(&format!(
        "POT,-,{},{},{}\n",
        fmt_full(report.pot.coverage),
        fmt_full(report.pot.mean_ci_length),
        fmt_full(report.pot.mae)
    ));
    out.push_str(&format!(
        "ROSF & IM,{},{},{},{}\n",
        report.n_estimates,
        fmt_full(report.rosf.coverage),
        fmt_full(report.rosf.mean_ci_length),
        fmt_full(report.rosf.mae)
    ));
    out
}

/// Mean and spread of single-start IM estimates over repeated fusion batches
/// for one fixed reference sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceStudy {
    pub mean_p_hat: f64,
    /// None when fewer than two repetitions produced an estimate.
    pub sd_p_hat: Option<f64>,
    pub reps_used: usize,
    pub skipped: usize,
    pub max_x0: f64,
}

/// The single-start variance study: one reference sample, `im_reps` fresh
/// fusion batches, third-quartile starts.
pub fn variance_study(scn: &Scenario) -> Result<VarianceStudy> {
    scn.validate()?;
    let dist = scn.dist.resolve()?;
    let scn = Scenario {
        dist,
        ..scn.clone()
    };
    let threshold = scn.resolve_threshold()?;
    let support = scn.resolved_support(threshold);
    let increment = scn.resolved_increment();
    let constraint = scn.constrain_reference.then_some(threshold);
    let mut ref_rng = stream_rng(scn.seed, purpose::REFERENCE, &[0]);
    let x0 = sample_reference(&scn.dist, scn.n0, &mut ref_rng, constraint)?;
    let max_x0 = x0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let estimates: Vec<Option<f64>> = (0..scn.im_reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = FusionConfig {
                n_fusions: scn.fusions,
                n1: scn.n1,
                support,
                ci_level: scn.ci_level,
                seed: derive_subseed(scn.seed, purpose::BATCH, &[0, rep as u64]),
                tilt: TiltSpec::Gamma,
            };
            run_rosf(&x0, threshold, &cfg)
                .and_then(|coll| single_start_estimate(&coll, increment, scn.cap))
                .ok()
                .map(|(p, _)| p)
        })
        .collect();
    let values: Vec<f64> = estimates.iter().copied().flatten().collect();
    let skipped = scn.im_reps - values.len();
    if values.is_empty() {
        return Err(Error::Scenario(
            "no IM repetition produced an estimate".into(),
        ));
    }
    let (mean, sd) = mean_sd(&values);
    Ok(VarianceStudy {
        mean_p_hat: mean,
        sd_p_hat: sd,
        reps_used: values.len(),
        skipped,
        max_x0,
    })
}
