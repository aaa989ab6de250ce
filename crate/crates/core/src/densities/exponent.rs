//! Characteristic exponents of the stable-like measure, its time-scaled
//! versions and of the convolution kernels built on them.
//!
//! Every exponent reduces to the one-sided integral
//!
//! ```text
//! J(λ) = ∫_0^∞ (e^{iλv} - 1 - iλv 1_{v≤1}) v^{-α-1} f(s v) dv,   λ > 0,
//! ```
//!
//! through `ψ(λ) = C₊ J(λ) + C₋ conj J(λ)` and `ψ(-λ) = conj ψ(λ)`.
//! For large `λ` the oscillatory part is moved onto a ray in the upper
//! half-plane, where it decays exponentially, so the cost of one
//! evaluation hardly depends on `λ`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nuisance::NuisanceSpec;
use crate::error::Result;
use crate::levy_model::{LevyMeasureSpec, Taper, Theta};
use crate::quadrature::{geometric_points, integrate_panels, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Anything with a characteristic exponent that can be Fourier-inverted.
pub trait Exponent: Sync {
    fn psi(&self, lambda: f64) -> Result<Complex64>;

    /// Lévy density of the law, used as the leading tail of its density
    /// (alias correction and tail extrapolation). Zero when unknown.
    fn levy_density(&self, _x: f64) -> f64 {
        0.0
    }

    /// Power of the leading tail `|x|^{-α-1}`, when known.
    fn tail_index(&self) -> Option<f64> {
        None
    }

    /// Correction to [`Exponent::levy_density`] of order `|x|^{-2α-1}`.
    fn second_tail(&self, _x: f64) -> f64 {
        0.0
    }
}

/// A plain closure exponent, handy for exact test cases.
pub struct FnExponent<F, L> {
    pub psi: F,
    pub tail: L,
}

impl<F, L> Exponent for FnExponent<F, L>
where
    F: Fn(f64) -> Complex64 + Sync,
    L: Fn(f64) -> f64 + Sync,
{
    fn psi(&self, lambda: f64) -> Result<Complex64> {
        Ok((self.psi)(lambda))
    }
    fn levy_density(&self, x: f64) -> f64 {
        (self.tail)(x)
    }
}

/// How repeated evaluations are served.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Fresh quadrature for every `λ`.
    Direct,
    /// Exact self-similar scaling from `J(1)` for untapered measures and a
    /// log-spaced interpolation table for tapered ones.
    #[default]
    Cached,
}

/// Which exponent of the measure is represented.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `ψ` of `m` itself.
    Unit,
    /// `ψ_{α,t}`, the exponent of `t^{-1/α}(Z_t + c_t)`.
    Time(f64),
    /// The stable limit `ψ_{α,C±}`.
    Limit,
}

/// `e^{ix} - 1 - ix` without cancellation for small `x`.
#[inline]
fn osc_core(x: f64) -> Complex64 {
    if x.abs() < 0.5 {
        // cos x - 1 = Σ_{k≥1} (-1)^k x^{2k}/(2k)!, sin x - x likewise.
        let x2 = x * x;
        let (mut c, mut s) = (0.0, 0.0);
        for k in (1..=9).rev() {
            let n = 2.0 * k as f64;
            c = x2 / ((n - 1.0) * n) * (1.0 - c);
            s = x2 / (n * (n + 1.0)) * (1.0 - s);
        }
        Complex64::new(-c, -x * s)
    } else {
        let h = (x / 2.0).sin();
        Complex64::new(-2.0 * h * h, x.sin() - x)
    }
}

/// `e^{ix} - 1`.
#[inline]
fn osc_one(x: f64) -> Complex64 {
    let h = (x / 2.0).sin();
    Complex64::new(-2.0 * h * h, x.sin())
}

/// Analytic continuation of the taper from the positive half-line.
fn taper_complex(taper: Taper, z: Complex64) -> Complex64 {
    match taper {
        Taper::None => Complex64::new(1.0, 0.0),
        Taper::ExpAbs => (-z).exp(),
        Taper::Gauss => (-z * z).exp(),
        Taper::SechLike => (1.0 - (1.0 + z * z).sqrt()).exp(),
        Taper::SmoothDamp { u1 } => (2.0 / u1 - 2.0 * u1 / (u1 * u1 - z * z)).exp(),
    }
}

/// Evaluates `J(λ)` for one `(α, taper, s)`.
#[derive(Clone, Debug)]
pub(crate) struct JIntegrator {
    alpha: f64,
    taper: Taper,
    s: f64,
    /// Real-line extent beyond which `f(s v)` is negligible.
    reach: f64,
    /// `∫_1^∞ v^{-α-1} f(s v) dv`.
    m_tail: f64,
    opts: QuadOptions,
}

impl JIntegrator {
    pub(crate) fn new(alpha: f64, taper: Taper, s: f64) -> Result<Self> {
        let taper = if s == 0.0 { Taper::None } else { taper };
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-11,
            max_evals: 2_000_000,
        };
        let reach = if taper == Taper::None {
            f64::INFINITY
        } else {
            taper.cutoff() / s
        };
        let mut j = JIntegrator {
            alpha,
            taper,
            s,
            reach,
            m_tail: 0.0,
            opts,
        };
        j.m_tail = if taper == Taper::None {
            1.0 / alpha
        } else if reach > 1.0 {
            let pts = geometric_points(1.0, reach, 2.0, f64::INFINITY);
            integrate_panels(|v: f64| j.w(v), &pts, &opts)?.value
        } else {
            0.0
        };
        Ok(j)
    }

    pub(crate) fn untapered(&self) -> bool {
        self.taper == Taper::None
    }

    #[inline]
    fn w(&self, v: f64) -> f64 {
        let p = v.powf(-self.alpha - 1.0);
        match self.taper {
            Taper::None => p,
            t => p * t.value(self.s * v),
        }
    }

    #[inline]
    fn w_complex(&self, v: Complex64) -> Complex64 {
        v.powf(-self.alpha - 1.0) * taper_complex(self.taper, v * self.s)
    }

    /// `∫_0^b (e^{iλv} - 1 - iλv) w(v) dv`, non-oscillatory or mildly
    /// oscillatory; a Taylor piece covers `[0, δ0]`.
    fn core(&self, lambda: f64, b: f64) -> Result<Complex64> {
        let a = self.alpha;
        let d0 = (1e-8 / (1.0 + lambda)).min(b);
        let taylor = Complex64::new(
            -lambda * lambda / 2.0 * d0.powf(2.0 - a) / (2.0 - a),
            -lambda.powi(3) / 6.0 * d0.powf(3.0 - a) / (3.0 - a),
        );
        if b <= d0 {
            return Ok(taylor);
        }
        let pts = geometric_points(d0, b, 2.0, 2.0 * std::f64::consts::PI / lambda);
        let r = integrate_panels(|v: f64| osc_core(lambda * v) * self.w(v), &pts, &self.opts)?;
        Ok(taylor + r.value)
    }

    /// Real-line evaluation, used when `λ` times the taper reach is moderate.
    fn direct(&self, lambda: f64) -> Result<Complex64> {
        let top = self.reach.min(self.taper.support() / self.s);
        let c1 = top.min(1.0);
        let mut j = self.core(lambda, c1)?;
        if top > 1.0 {
            let pts = geometric_points(1.0, top, 2.0, 2.0 * std::f64::consts::PI / lambda);
            j += integrate_panels(|v: f64| osc_one(lambda * v) * self.w(v), &pts, &self.opts)?.value;
        }
        Ok(j)
    }

    /// `∫_{ray} e^{iλv} w(v) dv` along `v = a + r e^{iθ}`, `r ∈ [0, ∞)`.
    fn ray(&self, lambda: f64, a: f64, theta: f64) -> Result<Complex64> {
        let dir = Complex64::from_polar(1.0, theta);
        let big_r = 45.0 / (lambda * theta.sin());
        let r0 = (a.min(1.0 / lambda) / 8.0).min(big_r / 2.0);
        let mut pts = vec![0.0];
        pts.extend(geometric_points(r0, big_r, 2.0, 2.0 * std::f64::consts::PI / lambda));
        let phase = Complex64::from_polar(1.0, lambda * a);
        let r = integrate_panels(
            |r: f64| {
                let v = a + dir * r;
                let e = Complex64::from_polar((-lambda * r * theta.sin()).exp(), lambda * r * theta.cos());
                e * self.w_complex(v)
            },
            &pts,
            &self.opts,
        )?;
        Ok(r.value * phase * dir)
    }

    /// Contour evaluation for large `λ`.
    fn contour(&self, lambda: f64) -> Result<Complex64> {
        let theta = match self.taper {
            Taper::Gauss => FRAC_PI_6,
            _ => FRAC_PI_2,
        };
        let support = self.taper.support() / self.s;
        let a = (1.0 / lambda).min(1.0);
        let c1 = support.min(1.0);
        let mut j = self.core(lambda, a)?;
        j += self.ray(lambda, a, theta)?;
        if c1 > a {
            let pts = geometric_points(a, c1, 2.0, f64::INFINITY);
            let mid = integrate_panels(
                |v: f64| {
                    let w = self.w(v);
                    Complex64::new(w, lambda * v * w)
                },
                &pts,
                &self.opts,
            )?;
            j -= mid.value;
        }
        if let Taper::SmoothDamp { u1 } = self.taper {
            // Close the contour just short of the essential singularity at
            // the support edge; the real-line remainder is below e^{-50}.
            let eta = 1.0 / (50.0 * u1 + 2.0);
            let b = support * (1.0 - eta);
            j -= self.ray(lambda, b, FRAC_PI_2)?;
        }
        Ok(j - self.m_tail)
    }

    /// `J(λ)` for `λ > 0` by quadrature.
    pub(crate) fn j(&self, lambda: f64) -> Result<Complex64> {
        debug_assert!(lambda > 0.0);
        if self.reach.is_finite() && lambda * self.reach <= 400.0 {
            self.direct(lambda)
        } else {
            self.contour(lambda)
        }
    }
}

/// Uniform table in `ln λ` of `J(λ) λ^{-α}` with 6-point Lagrange
/// interpolation.
#[derive(Debug)]
struct LogTable {
    u0: f64,
    du: f64,
    vals: Vec<Complex64>,
}

const TABLE_LO: f64 = 1e-7;
const TABLE_HI: f64 = 1e4;
const TABLE_PER_DECADE: f64 = 100.0;

impl LogTable {
    fn build(j: &JIntegrator) -> Result<Self> {
        let u0 = TABLE_LO.ln();
        let du = std::f64::consts::LN_10 / TABLE_PER_DECADE;
        let n = ((TABLE_HI.ln() - u0) / du).ceil() as usize + 6;
        let start = u0 - 2.0 * du;
        let vals: Result<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let l = (start + k as f64 * du).exp();
                Ok(j.j(l)? * l.powf(-j.alpha))
            })
            .collect();
        Ok(LogTable {
            u0: start,
            du,
            vals: vals?,
        })
    }

    fn covers(&self, lambda: f64) -> bool {
        (TABLE_LO..=TABLE_HI).contains(&lambda)
    }

    fn eval(&self, lambda: f64, alpha: f64) -> Complex64 {
        let u = (lambda.ln() - self.u0) / self.du;
        let k = (u.floor() as isize).clamp(2, self.vals.len() as isize - 4) as usize;
        let x = u - k as f64;
        // nodes at k-2 .. k+3 with offsets -2..3
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..6 {
            let xi = i as f64 - 2.0;
            let mut w = 1.0;
            for j in 0..6 {
                if j != i {
                    let xj = j as f64 - 2.0;
                    w *= (x - xj) / (xi - xj);
                }
            }
            acc += self.vals[k - 2 + i] * w;
        }
        acc * lambda.powf(alpha)
    }
}

/// Characteristic exponent of the measure under a given scaling.
#[derive(Debug)]
pub struct CharExponent {
    spec: LevyMeasureSpec,
    scaling: Scaling,
    policy: CachePolicy,
    s: f64,
    c_t: f64,
    integ: JIntegrator,
    j_one: OnceLock<Result<Complex64>>,
    table: OnceLock<Result<LogTable>>,
    second: OnceLock<Option<SecondOrder>>,
}

/// Two-term tail of a strictly stable law written as
/// `ψ(λ) = -λ^α w + iμλ` for `λ > 0`.
#[derive(Clone, Copy, Debug)]
struct SecondOrder {
    mu: f64,
    /// `Re[w² Γ(2α+1) e^{∓iπ(2α+1)/2}] / 2π` for the right and left tails.
    right: f64,
    left: f64,
    /// `e^Λ - 1`, where `Λ = ∫ ℓ_stable (1 - f(s·))` is the Lévy mass the
    /// taper removes. Away from the origin the tapered law looks like the
    /// stable one with these jumps missing, which lifts its density by `e^Λ`.
    lift: f64,
}

/// `∫_0^∞ u^{-1-α} (1 - f(u)) du`, or `None` when it diverges at the
/// origin (a taper with `f'(0) ≠ 0` and `α ≥ 1`).
fn removed_mass(alpha: f64, taper: Taper) -> Option<f64> {
    if taper == Taper::None {
        return Some(0.0);
    }
    if matches!(taper, Taper::ExpAbs) && alpha >= 1.0 {
        return None;
    }
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-10,
        max_evals: 200_000,
    };
    let top = taper.cutoff();
    let pts = geometric_points(1e-12, top, 2.0, f64::INFINITY);
    let body = integrate_panels(|u: f64| -taper.ln_value(u).exp_m1() * u.powf(-1.0 - alpha), &pts, &opts).ok()?;
    Some(body.value + top.powf(-alpha) / alpha)
}

impl CharExponent {
    pub fn new(spec: &LevyMeasureSpec, scaling: Scaling, policy: CachePolicy) -> Result<Self> {
        spec.validate()?;
        let (s, c_t) = match scaling {
            Scaling::Unit => (1.0, 0.0),
            Scaling::Time(t) => {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(crate::error::LevyError::param("t", "must lie in (0, 1]"));
                }
                (t.powf(1.0 / spec.alpha), spec.c_t(t)?)
            }
            Scaling::Limit => (0.0, 0.0),
        };
        let integ = JIntegrator::new(spec.alpha, spec.taper, s)?;
        Ok(CharExponent {
            spec: spec.clone(),
            scaling,
            policy,
            s,
            c_t,
            integ,
            j_one: OnceLock::new(),
            table: OnceLock::new(),
            second: OnceLock::new(),
        })
    }

    /// `ψ` of the measure itself.
    pub fn unit(spec: &LevyMeasureSpec) -> Result<Self> {
        Self::new(spec, Scaling::Unit, CachePolicy::Cached)
    }

    /// `ψ_{α,t}`.
    pub fn at_time(spec: &LevyMeasureSpec, t: f64) -> Result<Self> {
        Self::new(spec, Scaling::Time(t), CachePolicy::Cached)
    }

    /// The stable limit `ψ_{α,C±}`.
    pub fn limit(spec: &LevyMeasureSpec) -> Result<Self> {
        Self::new(spec, Scaling::Limit, CachePolicy::Cached)
    }

    pub fn spec(&self) -> &LevyMeasureSpec {
        &self.spec
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    /// `t^{1/α}` (1 for the unit scaling, 0 for the limit).
    pub fn time_scale(&self) -> f64 {
        self.s
    }

    /// Drift correction `c_t` used by this scaling.
    pub fn drift_correction(&self) -> f64 {
        self.c_t
    }

    fn j_value(&self, lambda: f64) -> Result<Complex64> {
        let alpha = self.spec.alpha;
        match self.policy {
            CachePolicy::Direct => self.integ.j(lambda),
            CachePolicy::Cached if self.integ.untapered() => {
                let j1 = match self.j_one.get_or_init(|| self.integ.j(1.0)) {
                    Ok(v) => *v,
                    Err(e) => return Err(clone_err(e)),
                };
                let la = lambda.powf(alpha);
                let drift = if alpha == 1.0 {
                    lambda * lambda.ln()
                } else {
                    (lambda - la) / (1.0 - alpha)
                };
                Ok(j1 * la - I * drift)
            }
            CachePolicy::Cached => {
                let table = match self.table.get_or_init(|| LogTable::build(&self.integ)) {
                    Ok(t) => t,
                    Err(e) => return Err(clone_err(e)),
                };
                if table.covers(lambda) {
                    Ok(table.eval(lambda, alpha))
                } else {
                    self.integ.j(lambda)
                }
            }
        }
    }

    pub fn psi(&self, lambda: f64) -> Result<Complex64> {
        if lambda == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let j = self.j_value(lambda.abs())?;
        let v = j * self.spec.c_plus + j.conj() * self.spec.c_minus;
        Ok(if lambda < 0.0 { v.conj() } else { v })
    }

    /// Lévy density of this exponent: `C±|v|^{-α-1} f(s v)`.
    pub fn levy_density(&self, v: f64) -> f64 {
        if v == 0.0 {
            return f64::INFINITY;
        }
        let base = self.spec.stable_density(v);
        if self.s == 0.0 || self.spec.taper == Taper::None {
            base
        } else {
            base * self.spec.taper.value(self.s * v)
        }
    }
}

impl CharExponent {
    /// Difference between the two-term series of a stable density and
    /// [`CharExponent::levy_density`]: the drift shift of the leading term
    /// plus the `|x|^{-2α-1}` term. For tapered measures both use the
    /// stable coefficients, damped by the taper, and the whole tail is
    /// lifted by the removed jump mass. Zero for `α = 1`.
    pub fn second_tail(&self, x: f64) -> f64 {
        let spec = &self.spec;
        let c = self.second.get_or_init(|| {
            let alpha = spec.alpha;
            if alpha == 1.0 {
                return None;
            }
            let mu = (spec.c_plus - spec.c_minus) / (alpha - 1.0);
            let w = -(super::stable::psi_stable_closed_form(alpha, spec.c_plus, spec.c_minus, 1.0) - I * mu);
            let k = w * w * statrs::function::gamma::gamma(2.0 * alpha + 1.0) / (2.0 * std::f64::consts::PI);
            let phase = FRAC_PI_2 * (2.0 * alpha + 1.0);
            // The lift is a first-order statement in the removed mass.
            let lift = removed_mass(alpha, spec.taper)
                .map(|r| (spec.c_plus + spec.c_minus) * self.s.powf(alpha) * r)
                .filter(|l| *l <= 0.1)
                .map_or(0.0, f64::exp_m1);
            Some(SecondOrder {
                mu,
                right: (k * Complex64::from_polar(1.0, -phase)).re,
                left: (k * Complex64::from_polar(1.0, phase)).re,
                lift,
            })
        });
        let Some(c) = c else { return 0.0 };
        if x == 0.0 {
            return 0.0;
        }
        let y = x - c.mu;
        if y == 0.0 {
            return 0.0;
        }
        let coef = if y > 0.0 { c.right } else { c.left };
        let damp = if spec.taper == Taper::None { 1.0 } else { spec.taper.value(self.s * y) };
        let second = self.levy_density(y) - self.levy_density(x) + coef * y.abs().powf(-2.0 * spec.alpha - 1.0) * damp;
        second + c.lift * (self.levy_density(x) + second)
    }
}

impl Exponent for CharExponent {
    fn psi(&self, lambda: f64) -> Result<Complex64> {
        CharExponent::psi(self, lambda)
    }
    fn levy_density(&self, x: f64) -> f64 {
        CharExponent::levy_density(self, x)
    }
    fn tail_index(&self) -> Option<f64> {
        Some(self.spec.alpha)
    }
    fn second_tail(&self, x: f64) -> f64 {
        CharExponent::second_tail(self, x)
    }
}

fn clone_err(e: &crate::error::LevyError) -> crate::error::LevyError {
    use crate::error::LevyError as E;
    match e {
        E::Quadrature { evaluations, error } => E::Quadrature {
            evaluations: *evaluations,
            error: *error,
        },
        other => E::Domain(other.to_string()),
    }
}

/// `ψ(λ)` of the measure by direct quadrature.
pub fn psi(spec: &LevyMeasureSpec, lambda: f64) -> Result<Complex64> {
    CharExponent::new(spec, Scaling::Unit, CachePolicy::Direct)?.psi(lambda)
}

/// `ψ_{α,t}(λ)` from the scaled measure `m_t`.
pub fn psi_alpha_t(spec: &LevyMeasureSpec, t: f64, lambda: f64) -> Result<Complex64> {
    CharExponent::new(spec, Scaling::Time(t), CachePolicy::Direct)?.psi(lambda)
}

/// `ψ_{α,t}(λ)` through `t ψ(t^{-1/α} λ) + iλ c_t t^{-1/α}`.
pub fn psi_alpha_t_rescaled(spec: &LevyMeasureSpec, t: f64, lambda: f64) -> Result<Complex64> {
    let s = t.powf(1.0 / spec.alpha);
    let c_t = spec.c_t(t)?;
    Ok(psi(spec, lambda / s)? * t + I * (lambda * c_t / s))
}

/// `ψ_{α,C±}(λ)` by the same quadrature as [`psi`].
pub fn psi_stable(alpha: f64, c_plus: f64, c_minus: f64, lambda: f64) -> Result<Complex64> {
    let spec = LevyMeasureSpec::new(alpha, c_plus, c_minus, Taper::None)?;
    psi(&spec, lambda)
}

/// Exponent of `f_t(θ; ·)`: the law of `ζ_{α,t} + γ^{-1} t^{-1/α} U_t`.
pub struct KernelExponent<'a> {
    pub base: &'a CharExponent,
    pub theta: Theta,
    pub nuisance: NuisanceSpec,
    pub t: f64,
}

impl KernelExponent<'_> {
    fn nu_scale(&self) -> f64 {
        1.0 / (self.theta.gamma * self.base.time_scale())
    }

    /// `ψ` of `γ^{-1}t^{-1/α}U_t`.
    pub fn nuisance_psi(&self, lambda: f64) -> Complex64 {
        self.nuisance.psi(lambda * self.nu_scale()) * self.t
    }

    /// `m(λ) = -i t ψ_U'(λ/(γ s)) / (γ s)`, the multiplier that turns the
    /// kernel spectrum into the `y`-weighted convolution of `f^{(2)}`.
    pub fn mean_weight(&self, lambda: f64) -> Complex64 {
        let k = self.nu_scale();
        -I * self.nuisance.dpsi(lambda * k) * (self.t * k)
    }
}

impl Exponent for KernelExponent<'_> {
    fn psi(&self, lambda: f64) -> Result<Complex64> {
        Ok(self.base.psi(lambda)? + self.nuisance_psi(lambda))
    }
    fn levy_density(&self, z: f64) -> f64 {
        let k = 1.0 / self.nu_scale();
        let u = if self.nuisance.is_zero() {
            0.0
        } else {
            self.t * self.nuisance.levy_density(z * k) * k
        };
        self.base.levy_density(z) + u
    }
    fn tail_index(&self) -> Option<f64> {
        Some(self.base.spec.alpha)
    }
    fn second_tail(&self, z: f64) -> f64 {
        self.base.second_tail(z)
    }
}

/// Exponent of `X_t = βt + γZ_t + U_t` in the original coordinates.
pub struct TransitionExponent<'a> {
    pub base: &'a CharExponent,
    pub theta: Theta,
    pub nuisance: NuisanceSpec,
    pub t: f64,
}

impl Exponent for TransitionExponent<'_> {
    fn psi(&self, lambda: f64) -> Result<Complex64> {
        // t ψ(γλ) = ψ_{α,t}(γ s λ) - iγλ c_t
        let s = self.base.time_scale();
        let g = self.theta.gamma;
        let z = self.base.psi(g * s * lambda)? - I * (g * lambda * self.base.drift_correction());
        Ok(z + I * (lambda * self.theta.beta * self.t) + self.nuisance.psi(lambda) * self.t)
    }
    fn levy_density(&self, x: f64) -> f64 {
        let g = self.theta.gamma;
        let s = self.base.time_scale();
        // Lévy density of γ Z_t is t m(x/γ)/γ = m_t(x/(γ s))/(γ s).
        let z = self.base.levy_density(x / (g * s)) / (g * s);
        let u = if self.nuisance.is_zero() {
            0.0
        } else {
            self.t * self.nuisance.levy_density(x)
        };
        z + u
    }
    fn tail_index(&self) -> Option<f64> {
        Some(self.base.spec.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::stable::psi_stable_closed_form;
    use std::f64::consts::FRAC_1_PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn osc_helpers_are_accurate() {
        for &x in &[1e-9f64, 1e-4, -2e-3] {
            let (x2, x3) = (x * x, x * x * x);
            let exact = Complex64::new(-x2 / 2.0 + x2 * x2 / 24.0, -x3 / 6.0 + x3 * x2 / 120.0);
            assert!((osc_core(x) - exact).norm() <= 1e-13 * exact.norm(), "{x}");
        }
        for &x in &[0.3, 0.49, 0.51, 2.0, -0.2] {
            let exact = Complex64::new(0.0, x).exp() - 1.0 - Complex64::new(0.0, x);
            assert!((osc_core(x) - exact).norm() <= 1e-15, "{x}");
        }
    }

    #[test]
    fn psi_vanishes_at_zero() {
        let spec = LevyMeasureSpec::new(1.2, 1.0, 0.3, Taper::Gauss).unwrap();
        assert_eq!(psi(&spec, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(psi_stable(0.5, 1.0, 0.0, 0.0).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn cauchy_exponent_by_quadrature() {
        for &l in &[0.001, 0.5, 3.0, 250.0] {
            let p = psi_stable(1.0, FRAC_1_PI, FRAC_1_PI, l).unwrap();
            assert!((p.re + l).abs() < 1e-8 * (1.0 + l), "{l}: {p}");
            assert!(p.im.abs() < 1e-10 * p.norm());
        }
        let p = psi_stable(1.0, FRAC_1_PI, FRAC_1_PI, 3.0).unwrap();
        assert!((p.re + 3.0).abs() < 1e-8);
    }

    #[test]
    fn stable_quadrature_matches_closed_form() {
        for &(a, cp, cm) in &[(0.5, 1.0, 0.0), (0.8, 1.0, 0.4), (1.0, 0.7, 0.2), (1.5, 1.0, 0.5), (1.9, 0.2, 1.0)] {
            for &l in &[1e-5, 0.02, 1.0, 17.0, 900.0] {
                let q = psi_stable(a, cp, cm, l).unwrap();
                let c = psi_stable_closed_form(a, cp, cm, l);
                assert!(close(q, c, 1e-8), "alpha {a} lambda {l}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn reflection_symmetry() {
        // Swapping C+ and C- reflects the measure, which conjugates ψ, as
        // does λ -> -λ.
        let a = psi_stable(1.3, 1.0, 0.2, 2.0).unwrap();
        let b = psi_stable(1.3, 0.2, 1.0, 2.0).unwrap();
        let c = psi_stable(1.3, 1.0, 0.2, -2.0).unwrap();
        assert!(close(a, b.conj(), 1e-10));
        assert!(close(a, c.conj(), 1e-14));
        let spec = LevyMeasureSpec::new(0.9, 0.4, 1.1, Taper::SechLike).unwrap();
        let e = CharExponent::at_time(&spec, 0.05).unwrap();
        let p = e.psi(3.3).unwrap();
        let q = e.psi(-3.3).unwrap();
        assert!(close(p, q.conj(), 1e-14));
    }

    #[test]
    fn tapered_direct_and_contour_regimes_agree() {
        // Around λ·reach = 400 the two evaluation routes meet.
        for taper in [Taper::ExpAbs, Taper::Gauss, Taper::SechLike, Taper::SmoothDamp { u1: 1.0 }] {
            for &s in &[1.0, 0.05] {
                let j = JIntegrator::new(1.3, taper, s).unwrap();
                for &f in &[0.8, 1.25] {
                    let l = 400.0 / j.reach * f;
                    let d = j.direct(l).unwrap();
                    let c = j.contour(l).unwrap();
                    assert!(close(d, c, 1e-8), "{taper:?} s={s} λ={l}: {d} vs {c}");
                }
            }
        }
    }

    #[test]
    fn symmetric_specs_give_real_exponents() {
        for taper in [Taper::None, Taper::ExpAbs, Taper::Gauss, Taper::SmoothDamp { u1: 2.0 }] {
            let spec = LevyMeasureSpec::new(1.4, 0.6, 0.6, taper).unwrap();
            for &l in &[0.1, 2.0, 40.0] {
                let p = psi(&spec, l).unwrap();
                assert!(p.im.abs() <= 1e-10 * p.norm(), "{taper:?} {l}: {p}");
                assert!(p.re <= 0.0);
            }
        }
    }

    #[test]
    fn two_routes_for_scaled_exponent_agree() {
        for taper in [Taper::ExpAbs, Taper::Gauss, Taper::SechLike, Taper::SmoothDamp { u1: 1.0 }] {
            let spec = LevyMeasureSpec::new(1.3, 1.0, 0.4, taper).unwrap();
            for &t in &[0.5, 0.01] {
                for &l in &[0.05, 1.0, 9.0] {
                    let a = psi_alpha_t(&spec, t, l).unwrap();
                    let b = psi_alpha_t_rescaled(&spec, t, l).unwrap();
                    assert!(close(a, b, 1e-8), "{taper:?} t={t} λ={l}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn untapered_scaled_exponent_is_the_stable_one() {
        let spec = LevyMeasureSpec::new(0.8, 1.0, 0.3, Taper::None).unwrap();
        for &t in &[1.0, 0.01] {
            for &l in &[0.3, 5.0] {
                let a = psi_alpha_t(&spec, t, l).unwrap();
                let b = psi_stable_closed_form(0.8, 1.0, 0.3, l);
                assert!(close(a, b, 1e-8), "t={t} λ={l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gauss_scaled_exponent_approaches_limit() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::Gauss).unwrap();
        let lim = psi_stable_closed_form(1.5, 1.0, 1.0, 1.0);
        let mut prev = f64::INFINITY;
        for &t in &[1e-1, 1e-2, 1e-3, 1e-4] {
            let d = (psi_alpha_t(&spec, t, 1.0).unwrap() - lim).norm();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn cached_policies_match_direct() {
        for taper in [Taper::None, Taper::ExpAbs, Taper::Gauss, Taper::SmoothDamp { u1: 1.0 }] {
            let spec = LevyMeasureSpec::new(1.2, 1.0, 0.5, taper).unwrap();
            let direct = CharExponent::new(&spec, Scaling::Time(0.01), CachePolicy::Direct).unwrap();
            let cached = CharExponent::new(&spec, Scaling::Time(0.01), CachePolicy::Cached).unwrap();
            for &l in &[3.7e-4, 0.0123, 0.77, 13.1, 123.4] {
                let a = direct.psi(l).unwrap();
                let b = cached.psi(l).unwrap();
                assert!(close(b, a, 1e-9), "{taper:?} {l}: {a} vs {b}");
            }
        }
    }
}
