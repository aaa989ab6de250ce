//! The densities that enter the likelihood: `φ_{α,t}`, `φ_{α,C±}`, the
//! transition density `p_t(θ; x)` and the convolution kernels `f_t`,
//! `f_t^{(1)}`, `f_t^{(2)}` in the normalized coordinate
//! `z = γ^{-1} t^{-1/α} (x - βt + γc_t)`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exponent::{CharExponent, Exponent, KernelExponent, TransitionExponent};
use super::inversion::{invert_channels, FrequencyPlan, InversionOptions};
use super::nuisance::NuisanceSpec;
use super::table::{invert_points, invert_to_density, CurveTable, DensityTable, GridSpec};
use crate::error::Result;
use crate::levy_model::{LevyMeasureSpec, Taper, Theta};
use crate::rng::{stream, Purpose};

/// Default `z`-grid: step 0.01 on `[-20, 20]`, then 1% geometric steps out
/// to 2000 (5000 when `α < 1`, whose tails are heavier).
pub fn default_grid(alpha: f64) -> GridSpec {
    let z_max = if alpha < 1.0 { 5000.0 } else { 2000.0 };
    GridSpec {
        core: 20.0,
        step: 0.01,
        ratio: 1.01,
        z_max,
    }
}

/// [`default_grid`] widened for tapered measures so that the table
/// reaches past the scale `t^{-1/α}` where the taper takes hold (capped at
/// `10⁵`). The tail model extrapolates the Lévy density, which misses both
/// the bend of the taper and the multiple-jump mass beyond a compact
/// support.
pub fn grid_for(spec: &LevyMeasureSpec, t: f64) -> GridSpec {
    let mut g = default_grid(spec.alpha);
    if spec.taper != Taper::None {
        let reach = 5.0 * spec.taper.support().min(1.0) / t.powf(1.0 / spec.alpha);
        g.z_max = g.z_max.max(reach.min(1e5));
    }
    g
}

/// `φ_{α,t}`, the density of `t^{-1/α}(Z_t + c_t)`.
pub fn density_alpha_t(spec: &LevyMeasureSpec, t: f64, grid: &[f64], opts: &InversionOptions) -> Result<DensityTable> {
    invert_to_density(&CharExponent::at_time(spec, t)?, grid, opts)
}

/// `φ_{α,C±}`, the density of the stable limit.
pub fn density_limit(spec: &LevyMeasureSpec, grid: &[f64], opts: &InversionOptions) -> Result<DensityTable> {
    invert_to_density(&CharExponent::limit(spec)?, grid, opts)
}

/// Which exponent a table was inverted from; used to recheck interpolation.
pub fn interpolation_error<E: Exponent + ?Sized>(
    exp: &E,
    table: &DensityTable,
    points: usize,
    seed: u64,
    opts: &InversionOptions,
) -> Result<f64> {
    let mut rng = stream(seed, Purpose::Auxiliary, 0);
    let nodes = table.nodes();
    let xs: Vec<f64> = (0..points)
        .map(|_| {
            let i = rng.random_range(0..nodes.len() - 1);
            nodes[i] + rng.random::<f64>() * (nodes[i + 1] - nodes[i])
        })
        .collect();
    let (f, _, _) = invert_points(exp, &xs, opts)?;
    Ok(xs
        .iter()
        .zip(&f)
        .map(|(x, v)| (table.value(*x) - v).abs())
        .fold(0.0, f64::max))
}

/// `p_t(θ; ·)` inverted directly from the exponent of `X_t`.
pub fn transition_density(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    t: f64,
    x_grid: &[f64],
    opts: &InversionOptions,
) -> Result<DensityTable> {
    nuisance.check_compatible(spec)?;
    let base = CharExponent::at_time(spec, t)?;
    let exp = TransitionExponent {
        base: &base,
        theta: *theta,
        nuisance: *nuisance,
        t,
    };
    invert_to_density(&exp, x_grid, opts)
}

/// The map `z ↦ x = γ t^{1/α} z + βt - γc_t` between kernel and
/// observation coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub shift: f64,
}

impl Normalization {
    pub fn new(spec: &LevyMeasureSpec, theta: &Theta, t: f64) -> Result<Self> {
        let s = t.powf(1.0 / spec.alpha);
        let c_t = spec.c_t(t)?;
        Ok(Normalization {
            scale: theta.gamma * s,
            shift: theta.beta * t - theta.gamma * c_t,
        })
    }

    pub fn to_z(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn to_x(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }
}

/// `f_t`, `f_t^{(1)}` and `f_t^{(2)}` on a `z`-grid.
///
/// `f_t^{(1)} = f_t'` comes from the slope channel of the density table;
/// `f_t^{(2)}(z) = z f_t^{(1)}(z) - w(z)` where `w` is the `y`-weighted part
/// of the convolution, tabulated separately (and absent when `U = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTables {
    pub t: f64,
    pub theta: Theta,
    pub f: DensityTable,
    pub weighted: Option<CurveTable>,
}

impl KernelTables {
    /// Kernels for `U = 0`, where `f_t = φ_{α,t}`.
    pub fn without_nuisance(f: DensityTable, theta: Theta, t: f64) -> Self {
        KernelTables {
            t,
            theta,
            f,
            weighted: None,
        }
    }

    pub fn f(&self, z: f64) -> f64 {
        self.f.value(z)
    }

    pub fn f1(&self, z: f64) -> f64 {
        self.f.derivative(z)
    }

    pub fn f2(&self, z: f64) -> f64 {
        let w = self.weighted.as_ref().map_or(0.0, |c| c.value(z));
        z * self.f.derivative(z) - w
    }

    /// `(f, f1, f2)` in one lookup.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        let (f, f1) = self.f.eval(z);
        let w = self.weighted.as_ref().map_or(0.0, |c| c.value(z));
        (f, f1, z * f1 - w)
    }

    /// `G¹ = -f1/f` and `G² = -1 - f2/f`; `None` at the density floor.
    pub fn g(&self, z: f64) -> Option<[f64; 2]> {
        let (f, f1, f2) = self.eval(z);
        if f < super::table::LOG_FLOOR {
            return None;
        }
        Some([-f1 / f, -1.0 - f2 / f])
    }
}

/// Builds the kernel tables for `(θ, U, t)` on `z_grid`, reusing `base`
/// (which must be `ψ_{α,t}` of the same spec).
pub fn f_kernels_with(
    base: &CharExponent,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    t: f64,
    z_grid: &[f64],
    opts: &InversionOptions,
) -> Result<KernelTables> {
    nuisance.check_compatible(base.spec())?;
    let exp = KernelExponent {
        base,
        theta: *theta,
        nuisance: *nuisance,
        t,
    };
    let f = invert_to_density(&exp, z_grid, opts)?;
    if nuisance.is_zero() {
        return Ok(KernelTables::without_nuisance(f, *theta, t));
    }
    // w(z) has transform (-iλ) e^{ψ_K(λ)} m(λ); its slope adds another (-iλ).
    let plan = FrequencyPlan::for_exponent(&exp, opts)?;
    let xs = f.nodes();
    let (mut ch, _) = invert_channels(&xs, &plan, 2, |l, buf| {
        let e = exp.psi(l)?.exp() * exp.mean_weight(l);
        let d = Complex64::new(0.0, -l);
        buf[0] = d * e;
        buf[1] = d * d * e;
        Ok(())
    })?;
    let dw = ch.pop().unwrap_or_default();
    let w = ch.pop().unwrap_or_default();
    Ok(KernelTables {
        t,
        theta: *theta,
        f,
        weighted: Some(CurveTable::new(xs, w, dw)?),
    })
}

/// [`f_kernels_with`] for a spec.
pub fn f_kernels(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    t: f64,
    z_grid: &[f64],
    opts: &InversionOptions,
) -> Result<KernelTables> {
    let base = CharExponent::at_time(spec, t)?;
    f_kernels_with(&base, theta, nuisance, t, z_grid, opts)
}

/// True when `φ_{α,t} = φ_{α,C±}` for every `t` (untapered measure).
pub fn self_similar(spec: &LevyMeasureSpec) -> bool {
    spec.taper == Taper::None
}
