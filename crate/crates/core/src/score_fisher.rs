//! Scores of the increment law, the normalized score functions `G`, the
//! limiting Fisher matrix `Σ(θ)` and the rate matrices `r(n)`, `r̃(n)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::densities::{
    default_grid, density_limit, grid_for, f_kernels_with, CharExponent, DensityTable, GridSpec, InversionOptions, KernelTables,
    Normalization, NuisanceSpec, TailKind,
};
use crate::error::{LevyError, Result};
use crate::levy_model::{LevyMeasureSpec, Taper, Theta};
use crate::quadrature::{integrate_panels, QuadOptions};
use crate::simulator::SamplingScheme;

/// Density level below which a score is reported as undefined.
pub const SCORE_FLOOR: f64 = 1e-300;

/// The law of one increment `X_t` under `(θ, U)`, with cached kernels.
///
/// For `U = 0` the kernels do not depend on `θ`, so one model can be
/// re-targeted to another parameter with [`IncrementModel::at_theta`].
#[derive(Clone, Debug)]
pub struct IncrementModel {
    pub spec: LevyMeasureSpec,
    pub nuisance: NuisanceSpec,
    pub theta: Theta,
    pub t: f64,
    pub norm: Normalization,
    pub kernels: KernelTables,
}

impl IncrementModel {
    pub fn new(
        spec: &LevyMeasureSpec,
        theta: &Theta,
        nuisance: &NuisanceSpec,
        t: f64,
        opts: &InversionOptions,
    ) -> Result<Self> {
        let base = CharExponent::at_time(spec, t)?;
        Self::with_base(&base, theta, nuisance, t, &grid_for(spec, t).points(), opts)
    }

    /// Builds the kernels from an existing `ψ_{α,t}`.
    pub fn with_base(
        base: &CharExponent,
        theta: &Theta,
        nuisance: &NuisanceSpec,
        t: f64,
        z_grid: &[f64],
        opts: &InversionOptions,
    ) -> Result<Self> {
        let spec = base.spec().clone();
        let kernels = f_kernels_with(base, theta, nuisance, t, z_grid, opts)?;
        Ok(IncrementModel {
            norm: Normalization::new(&spec, theta, t)?,
            spec,
            nuisance: *nuisance,
            theta: *theta,
            t,
            kernels,
        })
    }

    /// Model for an untapered spec with `U = 0` built from the stable
    /// limit table, which is exact at every `t`.
    pub fn from_limit(spec: &LevyMeasureSpec, limit: &DensityTable, theta: &Theta, t: f64) -> Result<Self> {
        if spec.taper != Taper::None {
            return Err(LevyError::param("taper", "the limit table is exact only without a taper"));
        }
        Ok(IncrementModel {
            spec: spec.clone(),
            nuisance: NuisanceSpec::Zero,
            theta: *theta,
            t,
            norm: Normalization::new(spec, theta, t)?,
            kernels: KernelTables::without_nuisance(limit.clone(), *theta, t),
        })
    }

    /// Same kernels under another `θ`; only valid when `U = 0`.
    pub fn at_theta(&self, theta: &Theta) -> Result<Self> {
        if !self.nuisance.is_zero() {
            return Err(LevyError::Mismatch("kernels depend on theta when U is present".into()));
        }
        let mut out = self.clone();
        out.theta = *theta;
        out.kernels.theta = *theta;
        out.norm = Normalization::new(&self.spec, theta, self.t)?;
        Ok(out)
    }

    pub fn to_z(&self, x: f64) -> f64 {
        self.norm.to_z(x)
    }

    /// `p_t(θ; x)`.
    pub fn density(&self, x: f64) -> f64 {
        self.kernels.f(self.to_z(x)) / self.norm.scale
    }

    /// `ln p_t(θ; x)`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        let f = self.kernels.f(self.to_z(x));
        if f < SCORE_FLOOR {
            return Err(LevyError::NumericalZero { x });
        }
        Ok(f.ln() - self.norm.scale.ln())
    }

    /// `G(z)` at the normalized coordinate of `x`.
    pub fn g_normalized(&self, x: f64) -> Result<[f64; 2]> {
        self.kernels
            .g(self.to_z(x))
            .ok_or(LevyError::NumericalZero { x })
    }

    /// `g_t(θ; x) = ∇_θ ln p_t(θ; x)`.
    pub fn score(&self, x: f64) -> Result<[f64; 2]> {
        let [g1, g2] = self.g_normalized(x)?;
        let gamma = self.theta.gamma;
        let s = self.t.powf(1.0 / self.spec.alpha);
        let c = self.spec.c_t(self.t)?;
        // G¹ = -f1/f, G² = -1 - f2/f.
        let g_beta = self.t / (gamma * s) * g1;
        let g_gamma = (g2 - c / s * g1) / gamma;
        Ok([g_beta, g_gamma])
    }

    /// `r̃ᵀ g_t(θ; x) = γ^{-1} G(z)`, the score in the rate-matrix scale.
    pub fn scaled_score(&self, x: f64) -> Result<[f64; 2]> {
        let [g1, g2] = self.g_normalized(x)?;
        Ok([g1 / self.theta.gamma, g2 / self.theta.gamma])
    }
}

/// `g_t(θ; x)` for one point; builds the kernels on every call.
pub fn score(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    t: f64,
    x: f64,
    opts: &InversionOptions,
) -> Result<[f64; 2]> {
    IncrementModel::new(spec, theta, nuisance, t, opts)?.score(x)
}

/// Tabulated `G¹`, `G²` on a `z`-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GTable {
    pub z: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl GTable {
    fn from_fn<F: Fn(f64) -> Option<[f64; 2]>>(z_grid: &[f64], g: F) -> Result<Self> {
        let mut out = GTable {
            z: Vec::with_capacity(z_grid.len()),
            g1: Vec::with_capacity(z_grid.len()),
            g2: Vec::with_capacity(z_grid.len()),
        };
        for &z in z_grid {
            let [a, b] = g(z).ok_or(LevyError::NumericalZero { x: z })?;
            out.z.push(z);
            out.g1.push(a);
            out.g2.push(b);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "z,g1,g2")?;
        for i in 0..self.z.len() {
            writeln!(w, "{},{},{}", self.z[i], self.g1[i], self.g2[i])?;
        }
        Ok(())
    }
}

/// `G_{α,t}` on `z_grid`.
pub fn g_functions(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    t: f64,
    z_grid: &[f64],
    opts: &InversionOptions,
) -> Result<GTable> {
    let m = IncrementModel::new(spec, theta, nuisance, t, opts)?;
    GTable::from_fn(z_grid, |z| m.kernels.g(z))
}

/// `G_{α,C±}(z) = (-φ'/φ, -1 - zφ'/φ)` from the stable limit.
pub fn g_functions_limit(spec: &LevyMeasureSpec, z_grid: &[f64], opts: &InversionOptions) -> Result<GTable> {
    let phi = density_limit(spec, &default_grid(spec.alpha).points(), opts)?;
    GTable::from_fn(z_grid, |z| limit_g(&phi, z))
}

fn limit_g(phi: &DensityTable, z: f64) -> Option<[f64; 2]> {
    let (f, df) = phi.eval(z);
    (f >= SCORE_FLOOR).then(|| [-df / f, -1.0 - z * df / f])
}

/// The diagonal limiting Fisher matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub gamma: f64,
    pub sigma11: f64,
    pub sigma22: f64,
    /// `γ^{-2} ∫ (φ'/φ)(1 + zφ'/φ) φ = γ^{-2} ∫ zφ'²/φ`, the covariance of
    /// the two score components under the limit law. It vanishes for
    /// symmetric `φ` and is reported for diagnosis only: [`Self::matrix`]
    /// keeps the diagonal form.
    pub cross: f64,
    /// Quadrature error estimates.
    pub error11: f64,
    pub error22: f64,
    /// Analytic contributions of the power tails beyond the truncation.
    pub tail11: f64,
    pub tail22: f64,
    /// Worst tail-fit R² of the density table used.
    pub tail_r_squared: f64,
}

impl FisherMatrix {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.sigma11, 0.0], [0.0, self.sigma22]]
    }

    /// The same information at another `γ`.
    pub fn at_gamma(&self, gamma: f64) -> Self {
        let k = (self.gamma / gamma).powi(2);
        FisherMatrix {
            gamma,
            sigma11: self.sigma11 * k,
            sigma22: self.sigma22 * k,
            cross: self.cross * k,
            error11: self.error11 * k,
            error22: self.error22 * k,
            tail11: self.tail11 * k,
            tail22: self.tail22 * k,
            tail_r_squared: self.tail_r_squared,
        }
    }

    /// `vᵀ Σ v`.
    pub fn quadratic(&self, v: [f64; 2]) -> f64 {
        self.sigma11 * v[0] * v[0] + self.sigma22 * v[1] * v[1]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Relative truncation level of the Fisher integrals.
const FISHER_CUT: f64 = 1e-12;

/// `Σ(θ)` for `γ` from the stable limit `φ_{α,C±}`.
pub fn fisher_matrix(alpha: f64, c_plus: f64, c_minus: f64, gamma: f64) -> Result<FisherMatrix> {
    if !(gamma > 0.0) {
        return Err(LevyError::param("gamma", "must be positive"));
    }
    let spec = LevyMeasureSpec::new(alpha, c_plus, c_minus, Taper::None)?;
    let opts = InversionOptions::default();
    let mut grid = default_grid(alpha);
    let mut phi = density_limit(&spec, &grid.points(), &opts)?;
    if worst_r_squared(&phi) < 0.99 {
        log::warn!(
            "tail fit R² = {:.4} below 0.99; retrying on a wider grid",
            worst_r_squared(&phi)
        );
        grid = GridSpec { z_max: grid.z_max * 4.0, ..grid };
        phi = density_limit(&spec, &grid.points(), &opts)?;
    }
    Ok(fisher_from_table(&phi, alpha)?.at_gamma(gamma))
}

fn worst_r_squared(phi: &DensityTable) -> f64 {
    [&phi.left, &phi.right]
        .iter()
        .filter(|t| t.kind != TailKind::Zero)
        .map(|t| t.r_squared)
        .fold(1.0, f64::min)
}

/// `Σ` at `γ = 1` from a tabulated `φ_{α,C±}`.
pub fn fisher_from_table(phi: &DensityTable, alpha: f64) -> Result<FisherMatrix> {
    let peak = phi.meta.peak;
    let cut = FISHER_CUT * peak;
    let nodes = phi.nodes();
    // Extend geometrically beyond the table until the density drops below the cut.
    let extend = |start: f64, sign: f64| -> Vec<f64> {
        let mut pts = Vec::new();
        let mut r = start.abs();
        while phi.value(sign * r) >= cut && r < 1e15 {
            r *= 1.1;
            pts.push(sign * r);
        }
        pts
    };
    let mut pts: Vec<f64> = extend(nodes[0], -1.0).into_iter().rev().collect();
    pts.extend(nodes.iter().copied());
    pts.extend(extend(nodes[nodes.len() - 1], 1.0));
    // Trim to the region above the cut.
    let first = pts.iter().position(|&z| phi.value(z) >= cut).unwrap_or(0);
    let last = pts.iter().rposition(|&z| phi.value(z) >= cut).unwrap_or(pts.len() - 1);
    let lo = first.saturating_sub(1);
    let hi = (last + 1).min(pts.len() - 1);
    let pts = &pts[lo..=hi];

    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_evals: 50_000_000,
    };
    let i11 = integrate_panels(
        |z| {
            let (f, df) = phi.eval(z);
            if f > 0.0 {
                df * df / f
            } else {
                0.0
            }
        },
        pts,
        &opts,
    )?;
    let i22 = integrate_panels(
        |z| {
            let (f, df) = phi.eval(z);
            if f > 0.0 {
                let v = f + z * df;
                v * v / f
            } else {
                0.0
            }
        },
        pts,
        &opts,
    )?;
    let i12 = integrate_panels(
        |z| {
            let (f, df) = phi.eval(z);
            if f > 0.0 {
                df * (f + z * df) / f
            } else {
                0.0
            }
        },
        pts,
        &opts,
    )?;
    // Power tails: (φ'/φ)² ~ ((α+1)/z)², (1 + zφ'/φ)² ~ α² and the
    // product ~ ±α(α+1)/|z|.
    let (mut tail11, mut tail22, mut tail12) = (0.0, 0.0, 0.0);
    for (r, kind) in [(pts[0], phi.left.kind), (pts[pts.len() - 1], phi.right.kind)] {
        if kind == TailKind::Zero {
            continue;
        }
        let f = phi.value(r);
        tail12 += alpha * f * r.signum();
        let r = r.abs();
        tail11 += (alpha + 1.0).powi(2) * f / ((alpha + 2.0) * r);
        tail22 += alpha * f * r;
    }
    let mass = phi.total_mass();
    Ok(FisherMatrix {
        gamma: 1.0,
        sigma11: (i11.value + tail11) / mass,
        sigma22: (i22.value + tail22) / mass,
        cross: (i12.value + tail12) / mass,
        error11: i11.error + 0.1 * tail11 + (mass - 1.0).abs() * i11.value,
        error22: i22.error + 0.1 * tail22 + (mass - 1.0).abs() * i22.value,
        tail11,
        tail22,
        tail_r_squared: worst_r_squared(phi),
    })
}

/// `r(n)` and `r̃(n) = √n r(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateMatrices {
    pub n: usize,
    pub h: f64,
    pub c_h: f64,
    pub r: [[f64; 2]; 2],
    pub r_tilde: [[f64; 2]; 2],
}

impl RateMatrices {
    /// `r v`.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        mul(&self.r, v)
    }

    /// `r̃ᵀ g`.
    pub fn tilde_transpose(&self, g: [f64; 2]) -> [f64; 2] {
        mul_t(&self.r_tilde, g)
    }

    /// `rᵀ g`.
    pub fn transpose(&self, g: [f64; 2]) -> [f64; 2] {
        mul_t(&self.r, g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mul(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn mul_t(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[1][0] * v[1], m[0][1] * v[0] + m[1][1] * v[1]]
}

pub fn rate_matrices(spec: &LevyMeasureSpec, scheme: &SamplingScheme) -> Result<RateMatrices> {
    let h = scheme.h;
    let c_h = spec.c_t(h)?;
    let r_tilde = [[h.powf(1.0 / spec.alpha - 1.0), c_h / h], [0.0, 1.0]];
    let k = (scheme.n as f64).sqrt();
    let r = [
        [r_tilde[0][0] / k, r_tilde[0][1] / k],
        [r_tilde[1][0] / k, r_tilde[1][1] / k],
    ];
    Ok(RateMatrices {
        n: scheme.n,
        h,
        c_h,
        r,
        r_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{invert_points, GridSpec, TransitionExponent};
    use std::f64::consts::PI;

    #[test]
    fn cauchy_fisher_is_one_half() {
        let f = fisher_matrix(1.0, 1.0 / PI, 1.0 / PI, 1.0).unwrap();
        assert!((f.sigma11 - 0.5).abs() < 1e-4, "{f:?}");
        assert!((f.sigma22 - 0.5).abs() < 1e-4, "{f:?}");
        let g = fisher_matrix(1.0, 1.0 / PI, 1.0 / PI, 2.0).unwrap();
        assert!((g.sigma11 - f.sigma11 / 4.0).abs() <= 1e-15);
        assert!((g.sigma22 - f.sigma22 / 4.0).abs() <= 1e-15);
    }

    #[test]
    fn one_sided_half_stable_matches_levy_distribution() {
        // With C- = 0 and α = 1/2 the limit law is a Lévy distribution with
        // scale c = 2πC+², shifted by the compensator drift -2C+.
        let c = 2.0 * PI;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        let (a, b, n) = (-8.0_f64, 45.0_f64, 400_000);
        let h = (b - a) / n as f64;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let y = (a + h * i as f64).exp();
            let phi = (c / (2.0 * PI)).sqrt() * y.powf(-1.5) * (-c / (2.0 * y)).exp();
            let score = -1.5 / y + c / (2.0 * y * y);
            let z = y - 2.0;
            let g2 = 1.0 + z * score;
            s11 += w * score * score * phi * y;
            s22 += w * g2 * g2 * phi * y;
            s12 += w * score * g2 * phi * y;
        }
        let k = h / 3.0;
        let f = fisher_matrix(0.5, 1.0, 0.0, 1.0).unwrap();
        assert!((f.sigma11 - s11 * k).abs() < 1e-5 * s11 * k, "{f:?} {}", s11 * k);
        assert!((f.sigma22 - s22 * k).abs() < 1e-5 * s22 * k, "{f:?} {}", s22 * k);
        assert!((f.cross - s12 * k).abs() < 1e-5 * s12.abs() * k, "{f:?} {}", s12 * k);
        assert!(f.cross.abs() > 0.01);
    }

    #[test]
    fn cross_term_is_odd_under_reflection() {
        let f = fisher_matrix(1.5, 1.0, 0.3, 1.0).unwrap();
        let g = fisher_matrix(1.5, 0.3, 1.0, 1.0).unwrap();
        assert!((f.cross + g.cross).abs() < 1e-7, "{} {}", f.cross, g.cross);
        let sym = fisher_matrix(1.5, 1.0, 1.0, 1.0).unwrap();
        assert!(sym.cross.abs() < 1e-8);
    }

    #[test]
    fn fisher_matches_closed_form_cauchy_quadrature() {
        // Independent oracle: Simpson's rule on the closed-form density in
        // the variable z = tan(v).
        let n = 200_000;
        let (mut s11, mut s22) = (0.0, 0.0);
        for i in 0..=n {
            let v = -PI / 2.0 + PI * i as f64 / n as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let z = v.tan();
            let phi = 1.0 / (PI * (1.0 + z * z));
            let score = -2.0 * z / (1.0 + z * z);
            let jac = 1.0 + z * z;
            if z.is_finite() {
                s11 += w * score * score * phi * jac;
                s22 += w * (1.0 + z * score).powi(2) * phi * jac;
            }
        }
        let h = PI / n as f64 / 3.0;
        let f = fisher_matrix(1.0, 1.0 / PI, 1.0 / PI, 1.0).unwrap();
        assert!((f.sigma11 - s11 * h).abs() < 1e-4);
        assert!((f.sigma22 - s22 * h).abs() < 1e-4);
    }

    #[test]
    fn rate_matrices_shapes() {
        let sym = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::Gauss).unwrap();
        let sc = SamplingScheme::new(400, 0.01).unwrap();
        let r = rate_matrices(&sym, &sc).unwrap();
        assert_eq!(r.r[0][1], 0.0);
        assert!((r.r[0][0] - 0.05 * 0.01f64.powf(1.0 / 1.5 - 1.0)).abs() < 1e-15);
        assert_eq!(r.r[1][1], 0.05);
        let cauchy = rate_matrices(&LevyMeasureSpec::cauchy(), &sc).unwrap();
        assert_eq!(cauchy.r, [[0.05, 0.0], [0.0, 0.05]]);
        let skew = LevyMeasureSpec::new(0.5, 1.0, 0.0, Taper::None).unwrap();
        let r = rate_matrices(&skew, &SamplingScheme::new(100, 0.01).unwrap()).unwrap();
        let c_h = 0.01 * (1.0 - 0.01f64.powf(1.0)) / 0.5;
        assert!((r.c_h - c_h).abs() < 1e-12);
        assert!((r.r[0][1] - 0.1 * c_h / 0.01).abs() < 1e-12);
        let g = [0.3, -0.7];
        let a = r.tilde_transpose(g);
        let b = r.transpose(g);
        assert!((a[0] - 10.0 * b[0]).abs() < 1e-12 && (a[1] - 10.0 * b[1]).abs() < 1e-12);
    }

    #[test]
    fn symmetric_score_vanishes_at_the_centre() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::ExpAbs).unwrap();
        let theta = Theta::new(0.4, 1.3).unwrap();
        let m = IncrementModel::new(&spec, &theta, &NuisanceSpec::Zero, 0.01, &InversionOptions::default()).unwrap();
        let g = m.score(0.4 * 0.01).unwrap();
        assert!(g[0].abs() < 1e-8, "{g:?}");
        let [g1, g2] = m.g_normalized(0.004).unwrap();
        assert!(g1.abs() < 1e-9 && (g2 + 1.0).abs() < 1e-9);
    }

    fn fd_check(spec: LevyMeasureSpec, nuisance: NuisanceSpec, theta: Theta, t: f64) {
        let opts = InversionOptions::default();
        let m = IncrementModel::new(&spec, &theta, &nuisance, t, &opts).unwrap();
        let base = CharExponent::at_time(&spec, t).unwrap();
        let xs: Vec<f64> = (-60..=60).map(|i| m.norm.to_x(i as f64 * 0.1 + 0.013)).collect();
        let logp = |th: Theta| -> Vec<f64> {
            let e = TransitionExponent {
                base: &base,
                theta: th,
                nuisance,
                t,
            };
            invert_points(&e, &xs, &opts).unwrap().0.iter().map(|v| v.ln()).collect()
        };
        let hb = 1e-5 * m.norm.scale / t;
        let hg = 1e-5 * theta.gamma;
        let bp = logp(Theta::new(theta.beta + hb, theta.gamma).unwrap());
        let bm = logp(Theta::new(theta.beta - hb, theta.gamma).unwrap());
        let gp = logp(Theta::new(theta.beta, theta.gamma + hg).unwrap());
        let gm = logp(Theta::new(theta.beta, theta.gamma - hg).unwrap());
        let peak = xs.iter().map(|&x| m.density(x)).fold(0.0, f64::max);
        let sb = t / m.norm.scale;
        for (i, &x) in xs.iter().enumerate() {
            if m.density(x) < 1e-6 * peak {
                continue;
            }
            let g = m.score(x).unwrap();
            let fd = [(bp[i] - bm[i]) / (2.0 * hb), (gp[i] - gm[i]) / (2.0 * hg)];
            assert!((g[0] - fd[0]).abs() <= 1e-3 * (g[0].abs() + sb), "beta at {x}: {g:?} {fd:?}");
            assert!(
                (g[1] - fd[1]).abs() <= 1e-3 * (g[1].abs() + 1.0 / theta.gamma),
                "gamma at {x}: {g:?} {fd:?}"
            );
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        fd_check(
            LevyMeasureSpec::new(1.3, 1.0, 0.4, Taper::Gauss).unwrap(),
            NuisanceSpec::Zero,
            Theta::new(0.5, 1.5).unwrap(),
            0.05,
        );
        fd_check(
            LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None).unwrap(),
            NuisanceSpec::compound_poisson(5.0),
            Theta::new(0.0, 1.0).unwrap(),
            0.01,
        );
    }

    #[test]
    fn score_has_zero_mean() {
        let spec = LevyMeasureSpec::new(1.2, 1.0, 0.5, Taper::ExpAbs).unwrap();
        let theta = Theta::new(0.2, 0.8).unwrap();
        let m = IncrementModel::new(&spec, &theta, &NuisanceSpec::Zero, 0.1, &InversionOptions::default()).unwrap();
        let pts: Vec<f64> = GridSpec::new(20.0, 0.05, 1.05, 5e4)
            .unwrap()
            .points()
            .iter()
            .map(|&z| m.norm.to_x(z))
            .collect();
        for k in 0..2 {
            let v = integrate_panels(
                |x| m.score(x).map(|g| g[k] * m.density(x)).unwrap_or(0.0),
                &pts,
                &QuadOptions::default(),
            )
            .unwrap()
            .value;
            assert!(v.abs() < 1e-3, "{k}: {v}");
        }
    }

    #[test]
    fn untapered_g_equals_limit() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 0.3, Taper::None).unwrap();
        let z: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.2).collect();
        let opts = InversionOptions::default();
        let a = g_functions(&spec, &Theta::unit(), &NuisanceSpec::Zero, 0.01, &z, &opts).unwrap();
        let b = g_functions_limit(&spec, &z, &opts).unwrap();
        for i in 0..z.len() {
            assert!((a.g1[i] - b.g1[i]).abs() < 1e-6 * (1.0 + b.g1[i].abs()));
            assert!((a.g2[i] - b.g2[i]).abs() < 1e-6 * (1.0 + b.g2[i].abs()));
        }
    }

    #[test]
    fn g_approaches_limit_as_t_shrinks() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::Gauss).unwrap();
        let z: Vec<f64> = (-25..=25).map(|i| i as f64 * 0.2).collect();
        let opts = InversionOptions::default();
        let lim = g_functions_limit(&spec, &z, &opts).unwrap();
        let dist = |t: f64| {
            let g = g_functions(&spec, &Theta::unit(), &NuisanceSpec::Zero, t, &z, &opts).unwrap();
            (0..z.len())
                .map(|i| (g.g1[i] - lim.g1[i]).abs().max((g.g2[i] - lim.g2[i]).abs()))
                .fold(0.0, f64::max)
        };
        let (a, b, c) = (dist(0.1), dist(0.01), dist(0.001));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn scaled_score_is_rate_transform() {
        let spec = LevyMeasureSpec::new(0.8, 1.0, 0.2, Taper::SechLike).unwrap();
        let theta = Theta::new(-0.3, 1.7).unwrap();
        let sc = SamplingScheme::new(1000, 1e-3).unwrap();
        let m = IncrementModel::new(&spec, &theta, &NuisanceSpec::Zero, sc.h, &InversionOptions::default()).unwrap();
        let r = rate_matrices(&spec, &sc).unwrap();
        for z in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            let x = m.norm.to_x(z);
            let a = r.tilde_transpose(m.score(x).unwrap());
            let b = m.scaled_score(x).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-9 * (1.0 + b[0].abs()));
            assert!((a[1] - b[1]).abs() < 1e-9 * (1.0 + b[1].abs()));
        }
    }
}
