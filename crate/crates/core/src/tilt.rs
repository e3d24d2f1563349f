//! Tilt (distortion) functions of the density ratio model.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The known tilt function h connecting the sample densities.
///
/// Currently only the gamma tilt h(x) = (x, log x); the enum is the extension
/// point for other tilts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiltSpec {
    #[default]
    Gamma,
}

impl TiltSpec {
    /// Dimension r of h(x).
    pub fn dim(&self) -> usize {
        match self {
            TiltSpec::Gamma => 2,
        }
    }

    /// Whether this tilt requires strictly positive observations.
    pub fn requires_positive(&self) -> bool {
        match self {
            TiltSpec::Gamma => true,
        }
    }

    /// Evaluate h(x) into `out` (length r).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        match self {
            TiltSpec::Gamma => {
                if x <= 0.0 || !x.is_finite() {
                    return Err(Error::TiltDomain { value: x });
                }
                out[0] = x;
                out[1] = x.ln();
                Ok(())
            }
        }
    }

    /// Evaluate h(x) as a fresh vector.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_tilt_values() {
        let h = TiltSpec::Gamma;
        let v = h.eval(1.0).unwrap();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], 0.0);
        let v = h.eval(std::f64::consts::E).unwrap();
        assert_abs_diff_eq!(v[0], std::f64::consts::E);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gamma_tilt_rejects_nonpositive() {
        let h = TiltSpec::Gamma;
        assert!(matches!(h.eval(0.0), Err(Error::TiltDomain { .. })));
        assert!(matches!(h.eval(-3.5), Err(Error::TiltDomain { value }) if value == -3.5));
    }
}
