//! Fused samples: the reference sample augmented with computer-generated
//! fusion samples.

use crate::error::{Error, Result};
use crate::tilt::TiltSpec;

/// A reference sample together with m fusion samples.
///
/// The augmented vector keeps sample-of-origin order: reference first, then
/// each fusion sample in turn.
#[derive(Debug, Clone)]
pub struct FusedSample {
    reference: Vec<f64>,
    fusion: Vec<Vec<f64>>,
}

impl FusedSample {
    pub fn new(reference: Vec<f64>, fusion: Vec<Vec<f64>>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::InvalidSample("reference sample is empty".into()));
        }
        if fusion.is_empty() {
            return Err(Error::InvalidSample("no fusion samples".into()));
        }
        for (j, s) in fusion.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidSample(format!(
                    "fusion sample {} is empty",
                    j + 1
                )));
            }
        }
        let s = Self { reference, fusion };
        for x in s.augmented() {
            if !x.is_finite() {
                return Err(Error::InvalidSample(format!("non-finite observation {x}")));
            }
        }
        Ok(s)
    }

    /// Convenience constructor for the m = 1 case.
    pub fn two_sample(reference: Vec<f64>, fusion: Vec<f64>) -> Result<Self> {
        Self::new(reference, vec![fusion])
    }

    /// Check positivity when required by the tilt.
    pub fn validate_for(&self, tilt: &TiltSpec) -> Result<()> {
        if tilt.requires_positive() {
            if let Some(x) = self.augmented().find(|&x| x <= 0.0) {
                return Err(Error::TiltDomain { value: x });
            }
        }
        Ok(())
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn fusion_samples(&self) -> &[Vec<f64>] {
        &self.fusion
    }

    pub fn m(&self) -> usize {
        self.fusion.len()
    }

    pub fn n0(&self) -> usize {
        self.reference.len()
    }

    /// Sizes n_1..n_m of the fusion samples.
    pub fn fusion_sizes(&self) -> Vec<usize> {
        self.fusion.iter().map(Vec::len).collect()
    }

    /// Total augmented size n = n_0 + n_1 + ... + n_m.
    pub fn n(&self) -> usize {
        self.n0() + self.fusion.iter().map(Vec::len).sum::<usize>()
    }

    /// Sample size ratios rho_j = n_j / n_0.
    pub fn rho(&self) -> Vec<f64> {
        let n0 = self.n0() as f64;
        self.fusion.iter().map(|s| s.len() as f64 / n0).collect()
    }

    /// The augmented vector t in sample-of-origin order.
    pub fn augmented(&self) -> impl Iterator<Item = f64> + '_ {
        self.reference
            .iter()
            .copied()
            .chain(self.fusion.iter().flat_map(|s| s.iter().copied()))
    }
}
