use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_MIN: f64 = 0.02;
pub const DEFAULT_SIGMA_MAX: f64 = 5.0;

/// Per-sample weight on the score difference in the generator gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// The plain expectation.
    #[default]
    Uniform,
    /// `σ(t)²`, the difference of the two denoised estimates.
    NoiseVariance,
}

impl Weighting {
    pub fn weight(self, sigma: f64) -> f64 {
        match self {
            Weighting::Uniform => 1.0,
            Weighting::NoiseVariance => sigma * sigma,
        }
    }
}

/// Variance-exploding forward kernel `x_t = x + σ(t)·ε` with a geometric
/// noise level `σ(t) = σ_min·(σ_max/σ_min)^t` and `t ~ U(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub weighting: Weighting,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        DiffusionSchedule {
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
            weighting: Weighting::Uniform,
        }
    }
}

impl DiffusionSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        let s = DiffusionSchedule {
            sigma_min,
            sigma_max,
            weighting: Weighting::Uniform,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite())
        {
            return Err(Error::invalid(format!(
                "noise levels must satisfy 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(())
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.gen::<f64>()
    }

    /// `E_t[1 / (v + σ(t)²)]` in closed form.
    pub fn mean_inverse_variance(&self, v: f64) -> f64 {
        // ∫₀¹ dt / (v + c·e^{kt}) = (1 − ln((v + c·e^k)/(v + c)) / k) / v
        let c = self.sigma_min * self.sigma_min;
        let k = 2.0 * (self.sigma_max / self.sigma_min).ln();
        (1.0 - ((v + c * k.exp()) / (v + c)).ln() / k) / v
    }
}
