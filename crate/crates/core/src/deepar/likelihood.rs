#[allow(unused_imports)] // unused whenever std is in the build graph
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::stats::{digamma, ln_gamma, sigmoid, softplus};

/// Lower bound added to every scale the head produces.
pub const SIGMA_FLOOR: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    #[default]
    Gaussian,
    StudentT,
}

impl Likelihood {
    /// Number of raw head outputs.
    pub fn arity(self) -> usize {
        match self {
            Likelihood::Gaussian => 2,
            Likelihood::StudentT => 3,
        }
    }
}

/// Parameters of a one-step predictive distribution. `nu` is set for the
/// Student-t head only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl DistParams {
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma, nu: None }
    }

    pub fn student_t(mu: f64, sigma: f64, nu: f64) -> Self {
        Self {
            mu,
            sigma,
            nu: Some(nu),
        }
    }

    /// Map raw head outputs to parameters: `sigma = softplus(a) + floor`,
    /// `nu = 2 + softplus(b) + floor`.
    pub fn from_raw(likelihood: Likelihood, raw: &[f64]) -> Self {
        let sigma = softplus(raw[1]) + SIGMA_FLOOR;
        match likelihood {
            Likelihood::Gaussian => Self::gaussian(raw[0], sigma),
            Likelihood::StudentT => Self::student_t(raw[0], sigma, 2.0 + softplus(raw[2]) + SIGMA_FLOOR),
        }
    }

    /// Undo a standardisation `y' = (y - shift) / scale`.
    pub fn rescale(self, shift: f64, scale: f64) -> Self {
        Self {
            mu: self.mu * scale + shift,
            sigma: self.sigma * scale,
            nu: self.nu,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = match self.nu {
            None => StandardNormal.sample(rng),
            Some(nu) => StudentT::new(nu).expect("nu > 2").sample(rng),
        };
        self.mu + self.sigma * z
    }
}

/// Negative log-likelihood of `y`. Gaussian:
/// `0.5 ln(2 pi sigma^2) + (y - mu)^2 / (2 sigma^2)`; Student-t with location
/// `mu`, scale `sigma` and `nu` degrees of freedom otherwise.
pub fn nll_loss(y: f64, d: &DistParams) -> f64 {
    debug_assert!(d.sigma > 0.0, "scale must be positive");
    let r = y - d.mu;
    match d.nu {
        None => HALF_LN_2PI + d.sigma.ln() + r * r / (2.0 * d.sigma * d.sigma),
        Some(nu) => {
            let z2 = r * r / (d.sigma * d.sigma);
            -ln_gamma(0.5 * (nu + 1.0)) + ln_gamma(0.5 * nu)
                + 0.5 * (nu * core::f64::consts::PI).ln()
                + d.sigma.ln()
                + 0.5 * (nu + 1.0) * (z2 / nu).ln_1p()
        }
    }
}

/// Loss and its gradient with respect to the raw head outputs.
pub(crate) fn nll_with_raw_grad(likelihood: Likelihood, y: f64, raw: &[f64], grad: &mut [f64]) -> f64 {
    let d = DistParams::from_raw(likelihood, raw);
    let r = y - d.mu;
    let s = d.sigma;
    // d sigma / d raw = sigmoid(raw)
    let ds_draw = sigmoid(raw[1]);
    match d.nu {
        None => {
            grad[0] = -r / (s * s);
            grad[1] = (1.0 / s - r * r / (s * s * s)) * ds_draw;
        }
        Some(nu) => {
            let denom = nu * s * s + r * r;
            grad[0] = -(nu + 1.0) * r / denom;
            grad[1] = (1.0 / s - (nu + 1.0) * r * r / (s * denom)) * ds_draw;
            let z2 = r * r / (s * s);
            let dnu = -0.5 * digamma(0.5 * (nu + 1.0)) + 0.5 * digamma(0.5 * nu) + 0.5 / nu
                + 0.5 * (z2 / nu).ln_1p()
                - (nu + 1.0) * z2 / (2.0 * nu * (nu + z2));
            grad[2] = dnu * sigmoid(raw[2]);
        }
    }
    nll_loss(y, &d)
}
