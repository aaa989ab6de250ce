//! Closed forms for the strictly stable-like exponent `ψ_{α,C±}` and its
//! translation to the usual `S_α(σ, β, μ)` parameterisation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_2, PI};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ψ_{α,C±}(λ)` in closed form. Used as an independent check of the
/// quadrature route.
pub fn psi_stable_closed_form(alpha: f64, c_plus: f64, c_minus: f64, lambda: f64) -> Complex64 {
    if lambda == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = lambda.abs();
    let sg = lambda.signum();
    if alpha == 1.0 {
        Complex64::new(
            -(c_plus + c_minus) * FRAC_PI_2 * a,
            (c_plus - c_minus) * lambda * (1.0 - EULER_GAMMA - a.ln()),
        )
    } else {
        let g = gamma(-alpha) * a.powf(alpha);
        let (sin, cos) = (PI * alpha / 2.0).sin_cos();
        Complex64::new(
            g * (c_plus + c_minus) * cos,
            -sg * g * (c_plus - c_minus) * sin + lambda * (c_plus - c_minus) / (alpha - 1.0),
        )
    }
}

/// Stable law `S_α(σ, β, μ)` in the Samorodnitsky–Taqqu parameterisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub mu: f64,
}

impl StableParams {
    /// The law whose exponent is `ψ_{α,C±}`.
    pub fn from_levy(alpha: f64, c_plus: f64, c_minus: f64) -> Self {
        let beta = (c_plus - c_minus) / (c_plus + c_minus);
        if alpha == 1.0 {
            StableParams {
                alpha,
                sigma: (c_plus + c_minus) * FRAC_PI_2,
                beta,
                mu: (c_plus - c_minus) * (1.0 - EULER_GAMMA),
            }
        } else {
            let sa = -(c_plus + c_minus) * gamma(-alpha) * (PI * alpha / 2.0).cos();
            StableParams {
                alpha,
                sigma: sa.powf(1.0 / alpha),
                beta,
                mu: (c_plus - c_minus) / (alpha - 1.0),
            }
        }
    }

    /// Law of the increment over a time step `h` of the Lévy process with
    /// one-step law `self`.
    pub fn over(&self, h: f64) -> Self {
        if self.alpha == 1.0 {
            StableParams {
                sigma: self.sigma * h,
                mu: h * self.mu,
                ..*self
            }
        } else {
            StableParams {
                sigma: self.sigma * h.powf(1.0 / self.alpha),
                mu: h * self.mu,
                ..*self
            }
        }
    }

    /// Exponent of `S_α(σ, β, μ)`.
    pub fn psi(&self, lambda: f64) -> Complex64 {
        let a = (self.sigma * lambda).abs();
        let sg = lambda.signum();
        let skew = if self.alpha == 1.0 {
            if a == 0.0 {
                0.0
            } else {
                -self.beta * 2.0 / PI * sg * lambda.abs().ln()
            }
        } else {
            self.beta * sg * (PI * self.alpha / 2.0).tan()
        };
        let ap = a.powf(self.alpha);
        Complex64::new(-ap, ap * skew + self.mu * lambda)
    }
}
