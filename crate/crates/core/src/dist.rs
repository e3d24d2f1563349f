//! Reference distribution families: thresholds, survivor functions, sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::stats::normal_cdf;

/// A reference distribution.
///
/// Parameterizations: Gamma by shape and rate (Gamma(1, 0.05) has mean 20);
/// Weibull by shape and scale; Pareto by scale (minimum) and shape;
/// PositiveT is |t_df|; EmpiricalCsv treats a numeric file column as a
/// population sampled with replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistSpec {
    Gamma {
        shape: f64,
        rate: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Pareto {
        scale: f64,
        shape: f64,
    },
    FisherF {
        d1: f64,
        d2: f64,
    },
    PositiveT {
        df: f64,
    },
    InverseGaussian {
        mean: f64,
        shape: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    EmpiricalCsv {
        path: String,
        #[serde(default)]
        column: crate::io::ColumnSel,
    },
    /// In-memory empirical population (what EmpiricalCsv resolves to).
    Empirical {
        values: Vec<f64>,
    },
}

impl DistSpec {
    /// Load any file-backed variant into memory.
    pub fn resolve(&self) -> Result<DistSpec> {
        match self {
            DistSpec::EmpiricalCsv { path, column } => {
                let values = crate::io::load_reference_csv(std::path::Path::new(path), column)?;
                Ok(DistSpec::Empirical { values })
            }
            other => Ok(other.clone()),
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(
            self,
            DistSpec::EmpiricalCsv { .. } | DistSpec::Empirical { .. }
        )
    }

    /// Lower end of the support (used to bracket quantile searches).
    fn support_low(&self) -> f64 {
        match self {
            DistSpec::Pareto { scale, .. } => *scale,
            DistSpec::Uniform { low, .. } => *low,
            _ => 0.0,
        }
    }

    /// Survival function P(X > x).
    pub fn survivor(&self, x: f64) -> Result<f64> {
        Ok(match self {
            DistSpec::Gamma { shape, rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, rate * x)
                }
            }
            DistSpec::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.5 * statrs::function::erf::erfc(
                        (x.ln() - mu) / (sigma * std::f64::consts::SQRT_2),
                    )
                }
            }
            DistSpec::Weibull { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(*shape)).exp()
                }
            }
            DistSpec::Pareto { scale, shape } => {
                if x <= *scale {
                    1.0
                } else {
                    (scale / x).powf(*shape)
                }
            }
            DistSpec::FisherF { d1, d2 } => {
                if x <= 0.0 {
                    1.0
                } else {
                    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
                }
            }
            DistSpec::PositiveT { df } => {
                if x <= 0.0 {
                    1.0
                } else {
                    beta_reg(df / 2.0, 0.5, df / (df + x * x))
                }
            }
            DistSpec::InverseGaussian { mean, shape } => {
                if x <= 0.0 {
                    1.0
                } else {
                    let s = (shape / x).sqrt();
                    let a1 = s * (x / mean - 1.0);
                    let a2 = s * (x / mean + 1.0);
                    // S = Phi(-a1) - exp(2 lambda / mu) Phi(-a2), in log space
                    let phi_neg_a2 = normal_cdf(-a2);
                    let term2 = if phi_neg_a2 > 0.0 {
                        (2.0 * shape / mean + phi_neg_a2.ln()).exp()
                    } else {
                        0.0
                    };
                    (normal_cdf(-a1) - term2).clamp(0.0, 1.0)
                }
            }
            DistSpec::Uniform { low, high } => ((high - x) / (high - low)).clamp(0.0, 1.0),
            DistSpec::Empirical { values } => {
                values.iter().filter(|&&v| v > x).count() as f64 / values.len() as f64
            }
            DistSpec::EmpiricalCsv { .. } => {
                return Err(Error::InvalidConfig(
                    "resolve() EmpiricalCsv before evaluating it".into(),
                ))
            }
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.survivor(x)?)
    }
}

/// Threshold T with upper-tail mass p: closed form where available, else a
/// bracketed bisection on the survival function to 1e-10.
pub fn quantile_threshold(dist: &DistSpec, p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::InvalidConfig(format!("tail mass {p} not in (0,1)")));
    }
    match dist {
        DistSpec::Empirical { .. } | DistSpec::EmpiricalCsv { .. } => Err(Error::EmpiricalQuantile),
        DistSpec::Lognormal { mu, sigma } => {
            Ok((mu + sigma * crate::stats::inverse_normal_cdf(1.0 - p)).exp())
        }
        DistSpec::Weibull { shape, scale } => Ok(scale * (-(p.ln())).powf(1.0 / shape)),
        DistSpec::Pareto { scale, shape } => Ok(scale * p.powf(-1.0 / shape)),
        DistSpec::Uniform { low, high } => Ok(high - p * (high - low)),
        DistSpec::Gamma { shape, rate } if *shape == 1.0 => Ok(-p.ln() / rate),
        DistSpec::PositiveT { df } if *df == 1.0 => {
            // folded Cauchy: S(x) = 1 - (2/pi) atan(x)
            Ok((std::f64::consts::FRAC_PI_2 * (1.0 - p)).tan())
        }
        other => bisect_survivor(other, p),
    }
}

fn bisect_survivor(dist: &DistSpec, p: f64) -> Result<f64> {
    let mut lo = dist.support_low();
    let mut hi = lo.max(1.0);
    let mut expansions = 0;
    while dist.survivor(hi)? > p {
        hi = hi * 2.0 + 1.0;
        expansions += 1;
        if expansions > 400 {
            return Err(Error::InvalidConfig(format!(
                "survivor never drops below {p}; distribution misconfigured"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist.survivor(mid)? > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

const REJECTION_BUDGET: usize = 10_000;

/// Draw n_0 i.i.d. observations; with `max_below` set, whole samples are
/// redrawn until max < threshold (attempts capped).
pub fn sample_reference(
    dist: &DistSpec,
    n0: usize,
    rng: &mut ChaCha8Rng,
    max_below: Option<f64>,
) -> Result<Vec<f64>> {
    if n0 == 0 {
        return Err(Error::InvalidSample("n_0 must be >= 1".into()));
    }
    let mut attempts = 0;
    loop {
        let sample = draw_once(dist, n0, rng)?;
        match max_below {
            None => return Ok(sample),
            Some(t) => {
                if sample.iter().all(|&x| x < t) {
                    return Ok(sample);
                }
                attempts += 1;
                if attempts >= REJECTION_BUDGET {
                    return Err(Error::RejectionBudget {
                        attempts,
                        threshold: t,
                    });
                }
            }
        }
    }
}

fn draw_once(dist: &DistSpec, n0: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let bad = |e: String| Error::InvalidConfig(e);
    Ok(match dist {
        DistSpec::Gamma { shape, rate } => {
            let d = rand_distr::Gamma::new(*shape, 1.0 / rate).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::Lognormal { mu, sigma } => {
            let d = rand_distr::LogNormal::new(*mu, *sigma).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::Weibull { shape, scale } => {
            let d = rand_distr::Weibull::new(*scale, *shape).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::Pareto { scale, shape } => {
            let d = rand_distr::Pareto::new(*scale, *shape).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::FisherF { d1, d2 } => {
            let d = rand_distr::FisherF::new(*d1, *d2).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::PositiveT { df } => {
            let d = rand_distr::StudentT::new(*df).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng).abs()).collect()
        }
        DistSpec::InverseGaussian { mean, shape } => {
            let d =
                rand_distr::InverseGaussian::new(*mean, *shape).map_err(|e| bad(e.to_string()))?;
            (0..n0).map(|_| d.sample(rng)).collect()
        }
        DistSpec::Uniform { low, high } => {
            if low >= high || low.is_nan() || high.is_nan() {
                return Err(bad(format!("uniform low {low} must be below high {high}")));
            }
            (0..n0).map(|_| rng.gen_range(*low..*high)).collect()
        }
        DistSpec::Empirical { values } => {
            if values.is_empty() {
                return Err(Error::InvalidSample("empirical population is empty".into()));
            }
            (0..n0)
                .map(|_| values[rng.gen_range(0..values.len())])
                .collect()
        }
        DistSpec::EmpiricalCsv { .. } => {
            return Err(Error::InvalidConfig(
                "resolve() EmpiricalCsv before sampling".into(),
            ))
        }
    })
}
