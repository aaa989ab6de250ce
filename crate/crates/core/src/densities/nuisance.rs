//! The nuisance process `U`, an independent Lévy process whose small-jump
//! activity is below that of `Z`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::error::{LevyError, Result};
use crate::levy_model::LevyMeasureSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpLaw {
    #[default]
    Normal,
    Laplace,
}

fn default_jump_std() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuisanceSpec {
    #[default]
    Zero,
    CompoundPoisson {
        rate: f64,
        #[serde(default = "default_jump_std")]
        jump_std: f64,
        #[serde(default)]
        jump_law: JumpLaw,
    },
    /// Symmetric stable with exponent `-(scale |λ|)^{α_U}`.
    Stable { alpha_u: f64, scale: f64 },
}

impl NuisanceSpec {
    pub fn compound_poisson(rate: f64) -> Self {
        NuisanceSpec::CompoundPoisson {
            rate,
            jump_std: default_jump_std(),
            jump_law: JumpLaw::Normal,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NuisanceSpec::Zero => "zero".into(),
            NuisanceSpec::CompoundPoisson { rate, jump_law, .. } => {
                format!("cp_{:?}_rate{}", jump_law, rate).to_lowercase()
            }
            NuisanceSpec::Stable { alpha_u, scale } => format!("stable_a{alpha_u}_s{scale}"),
        }
    }

    /// Blumenthal–Getoor index of `U`.
    pub fn bg_index(&self) -> f64 {
        match self {
            NuisanceSpec::Zero | NuisanceSpec::CompoundPoisson { .. } => 0.0,
            NuisanceSpec::Stable { alpha_u, .. } => *alpha_u,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NuisanceSpec::Zero => true,
            NuisanceSpec::CompoundPoisson { rate, .. } => *rate == 0.0,
            NuisanceSpec::Stable { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NuisanceSpec::Zero => Ok(()),
            NuisanceSpec::CompoundPoisson { rate, jump_std, .. } => {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(LevyError::param("nuisance.rate", "must be non-negative"));
                }
                if !(jump_std > 0.0 && jump_std.is_finite()) {
                    return Err(LevyError::param("nuisance.jump_std", "must be positive"));
                }
                Ok(())
            }
            NuisanceSpec::Stable { alpha_u, scale } => {
                if !(alpha_u > 0.0 && alpha_u < 2.0) {
                    return Err(LevyError::param("nuisance.alpha_u", "must lie in (0, 2)"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(LevyError::param("nuisance.scale", "must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Checks the activity condition `α_U < α` against the principal measure.
    pub fn check_compatible(&self, spec: &LevyMeasureSpec) -> Result<()> {
        self.validate()?;
        if self.bg_index() >= spec.alpha {
            return Err(LevyError::param(
                "nuisance",
                format!(
                    "Blumenthal-Getoor index {} must be below alpha = {}",
                    self.bg_index(),
                    spec.alpha
                ),
            ));
        }
        Ok(())
    }

    /// Exponent `ψ_U(λ)` of `U_1`.
    pub fn psi(&self, lambda: f64) -> Complex64 {
        let re = match *self {
            NuisanceSpec::Zero => 0.0,
            NuisanceSpec::CompoundPoisson {
                rate,
                jump_std,
                jump_law,
            } => match jump_law {
                JumpLaw::Normal => rate * (-(jump_std * lambda).powi(2) / 2.0).exp_m1(),
                JumpLaw::Laplace => {
                    let b = jump_std / std::f64::consts::SQRT_2;
                    let q = (b * lambda).powi(2);
                    -rate * q / (1.0 + q)
                }
            },
            NuisanceSpec::Stable { alpha_u, scale } => -(scale * lambda.abs()).powf(alpha_u),
        };
        Complex64::new(re, 0.0)
    }

    /// `ψ_U'(λ)`.
    pub fn dpsi(&self, lambda: f64) -> Complex64 {
        let re = match *self {
            NuisanceSpec::Zero => 0.0,
            NuisanceSpec::CompoundPoisson {
                rate,
                jump_std,
                jump_law,
            } => match jump_law {
                JumpLaw::Normal => {
                    let v = jump_std * jump_std;
                    -rate * v * lambda * (-v * lambda * lambda / 2.0).exp()
                }
                JumpLaw::Laplace => {
                    let b2 = jump_std * jump_std / 2.0;
                    let d = 1.0 + b2 * lambda * lambda;
                    -2.0 * rate * b2 * lambda / (d * d)
                }
            },
            NuisanceSpec::Stable { alpha_u, scale } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    -alpha_u * scale.powf(alpha_u) * lambda.abs().powf(alpha_u - 1.0) * lambda.signum()
                }
            }
        };
        Complex64::new(re, 0.0)
    }

    /// Lévy density of `U`.
    pub fn levy_density(&self, y: f64) -> f64 {
        match *self {
            NuisanceSpec::Zero => 0.0,
            NuisanceSpec::CompoundPoisson {
                rate,
                jump_std,
                jump_law,
            } => rate * jump_density(jump_law, jump_std, y),
            NuisanceSpec::Stable { alpha_u, scale } => {
                if y == 0.0 {
                    return f64::INFINITY;
                }
                // C |y|^{-α-1} with C chosen so that the exponent is -(s|λ|)^α.
                let c = if alpha_u == 1.0 {
                    scale / PI
                } else {
                    -scale.powf(alpha_u) / (2.0 * gamma(-alpha_u) * (PI * alpha_u / 2.0).cos())
                };
                c * y.abs().powf(-alpha_u - 1.0)
            }
        }
    }
}

/// Density of a single compound-Poisson jump with standard deviation `sd`.
pub fn jump_density(law: JumpLaw, sd: f64, y: f64) -> f64 {
    match law {
        JumpLaw::Normal => (-(y / sd).powi(2) / 2.0).exp() / (sd * (2.0 * PI).sqrt()),
        JumpLaw::Laplace => {
            let b = sd / std::f64::consts::SQRT_2;
            (-(y.abs()) / b).exp() / (2.0 * b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::Taper;
    use crate::quadrature::{integrate, QuadOptions};
    use approx::assert_relative_eq;

    #[test]
    fn bg_index_and_compatibility() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None).unwrap();
        assert_eq!(NuisanceSpec::compound_poisson(2.0).bg_index(), 0.0);
        assert!(NuisanceSpec::compound_poisson(2.0).check_compatible(&spec).is_ok());
        let st = NuisanceSpec::Stable { alpha_u: 1.6, scale: 0.1 };
        assert!(st.check_compatible(&spec).is_err());
        let st = NuisanceSpec::Stable { alpha_u: 0.9, scale: 0.1 };
        assert!(st.check_compatible(&spec).is_ok());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let cases = [
            NuisanceSpec::compound_poisson(3.0),
            NuisanceSpec::CompoundPoisson {
                rate: 2.0,
                jump_std: 0.7,
                jump_law: JumpLaw::Laplace,
            },
            NuisanceSpec::Stable { alpha_u: 0.7, scale: 0.4 },
        ];
        for n in cases {
            for &l in &[-2.0, 0.3, 1.7] {
                let h = 1e-6;
                let fd = (n.psi(l + h) - n.psi(l - h)) / (2.0 * h);
                assert!((fd - n.dpsi(l)).norm() < 1e-7, "{n:?} {l}");
            }
        }
    }

    #[test]
    fn levy_density_reproduces_exponent() {
        let opts = QuadOptions::with_tol(1e-13, 1e-11);
        let n = NuisanceSpec::CompoundPoisson {
            rate: 2.0,
            jump_std: 0.7,
            jump_law: JumpLaw::Laplace,
        };
        let l = 1.3;
        let v = integrate(|y: f64| ((l * y).cos() - 1.0) * n.levy_density(y), -30.0, 30.0, &opts).unwrap();
        assert_relative_eq!(v.value, n.psi(l).re, max_relative = 1e-9);

        // Stable: ∫ (cos λy - 1) C|y|^{-α-1} dy = -(s λ)^α.
        let n = NuisanceSpec::Stable { alpha_u: 0.6, scale: 0.5 };
        let top = 1e3;
        let pts = crate::quadrature::geometric_points(1e-12, top, 2.0, 1.0);
        let mut half = crate::quadrature::integrate_panels(
            |y: f64| ((l * y).cos() - 1.0) * n.levy_density(y),
            &pts,
            &QuadOptions::with_tol(1e-12, 1e-9),
        )
        .unwrap()
        .value;
        // the -1 part beyond `top`; the cosine part there is O(top^{-1.6})
        half -= n.levy_density(top) * top / 0.6;
        assert_relative_eq!(2.0 * half, n.psi(l).re, max_relative = 1e-4);
    }
}
