//! Lévy measures that behave like an α-stable measure near the origin.
//!
//! The density is `m(u) = f(u) · C± |u|^{-α-1}`, where the taper `f` equals
//! one at the origin and shapes the tails.

use serde::{Deserialize, Serialize};

use crate::error::{LevyError, Result};
use crate::quadrature::{geometric_points, integrate_panels, QuadOptions};

/// Tail modifier `f` applied to the stable-like density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Taper {
    /// Pure stable, `f ≡ 1`.
    None,
    /// `e^{-|u|}`.
    ExpAbs,
    /// `e^{-u²}`.
    Gauss,
    /// `e^{1-√(1+u²)}`.
    SechLike,
    /// Compactly supported on `(-u1, u1)`, rescaled so that `f(0) = 1`.
    SmoothDamp { u1: f64 },
}

impl Taper {
    pub fn name(&self) -> &'static str {
        match self {
            Taper::None => "none",
            Taper::ExpAbs => "exp_abs",
            Taper::Gauss => "gauss",
            Taper::SechLike => "sech_like",
            Taper::SmoothDamp { .. } => "smooth_damp",
        }
    }

    /// `ln f(u)`; `-∞` outside the support.
    pub fn ln_value(&self, u: f64) -> f64 {
        match *self {
            Taper::None => 0.0,
            Taper::ExpAbs => -u.abs(),
            Taper::Gauss => -u * u,
            Taper::SechLike => 1.0 - (1.0 + u * u).sqrt(),
            Taper::SmoothDamp { u1 } => {
                let d = u1 * u1 - u * u;
                if d <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    2.0 / u1 - 2.0 * u1 / d
                }
            }
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            Taper::None => 1.0,
            _ => self.ln_value(u).exp(),
        }
    }

    /// `f'(u) / f(u)`.
    pub fn log_deriv(&self, u: f64) -> f64 {
        match *self {
            Taper::None => 0.0,
            Taper::ExpAbs => {
                if u > 0.0 {
                    -1.0
                } else if u < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Taper::Gauss => -2.0 * u,
            Taper::SechLike => -u / (1.0 + u * u).sqrt(),
            Taper::SmoothDamp { u1 } => {
                let d = u1 * u1 - u * u;
                if d <= 0.0 {
                    f64::NEG_INFINITY * u.signum()
                } else {
                    -4.0 * u1 * u / (d * d)
                }
            }
        }
    }

    /// Upper end of the support of `|u|`.
    pub fn support(&self) -> f64 {
        match *self {
            Taper::SmoothDamp { u1 } => u1,
            _ => f64::INFINITY,
        }
    }

    /// Magnitude beyond which `f` is below roughly `1e-18` (infinite for
    /// the untapered case).
    pub fn cutoff(&self) -> f64 {
        match *self {
            Taper::None => f64::INFINITY,
            Taper::ExpAbs => 42.0,
            Taper::Gauss => 6.5,
            Taper::SechLike => 43.0,
            Taper::SmoothDamp { u1 } => u1,
        }
    }

    /// Default threshold `u0` for condition H2.
    pub fn default_u0(&self) -> f64 {
        match *self {
            Taper::SmoothDamp { u1 } => 0.5 * u1,
            _ => 1.0,
        }
    }
}

#[derive(Deserialize)]
struct RawSpec {
    alpha: f64,
    c_plus: f64,
    c_minus: f64,
    #[serde(default = "default_taper")]
    taper: Taper,
    u0: Option<f64>,
    delta: Option<f64>,
}

fn default_taper() -> Taper {
    Taper::None
}

pub const DEFAULT_DELTA: f64 = 0.5;

/// Parameters of the Lévy density `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct LevyMeasureSpec {
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub taper: Taper,
    pub u0: f64,
    pub delta: f64,
}

impl TryFrom<RawSpec> for LevyMeasureSpec {
    type Error = LevyError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let spec = LevyMeasureSpec {
            alpha: raw.alpha,
            c_plus: raw.c_plus,
            c_minus: raw.c_minus,
            taper: raw.taper,
            u0: raw.u0.unwrap_or_else(|| raw.taper.default_u0()),
            delta: raw.delta.unwrap_or(DEFAULT_DELTA),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A side of the real line for one-sided measure integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub reference_alpha: f64,
    pub max_deviation: f64,
    pub smallest_decade: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub sup_tau_inner: f64,
    pub tail_integral: f64,
    pub truncation_point: f64,
    pub evaluations: usize,
    pub passed: bool,
    pub diagnostic: Option<String>,
}

/// Drift correction together with the empty-region flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCorrection {
    pub value: f64,
    pub empty_region: bool,
}

impl LevyMeasureSpec {
    pub fn new(alpha: f64, c_plus: f64, c_minus: f64, taper: Taper) -> Result<Self> {
        let spec = LevyMeasureSpec {
            alpha,
            c_plus,
            c_minus,
            taper,
            u0: taper.default_u0(),
            delta: DEFAULT_DELTA,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Symmetric Cauchy measure, `α = 1`, `C± = 1/π`.
    pub fn cauchy() -> Self {
        let c = std::f64::consts::FRAC_1_PI;
        Self::new(1.0, c, c, Taper::None).expect("valid")
    }

    pub fn with_u0(mut self, u0: f64) -> Result<Self> {
        self.u0 = u0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(LevyError::param("alpha", format!("{} is not in (0, 2)", self.alpha)));
        }
        if !(self.c_plus >= 0.0 && self.c_plus.is_finite()) {
            return Err(LevyError::param("c_plus", "must be finite and non-negative"));
        }
        if !(self.c_minus >= 0.0 && self.c_minus.is_finite()) {
            return Err(LevyError::param("c_minus", "must be finite and non-negative"));
        }
        if self.c_plus + self.c_minus <= 0.0 {
            return Err(LevyError::param("c_plus", "c_plus + c_minus must be positive"));
        }
        if let Taper::SmoothDamp { u1 } = self.taper {
            if !(u1 > 0.0 && u1.is_finite()) {
                return Err(LevyError::param("taper.u1", "must be positive"));
            }
        }
        if !(self.u0 > 0.0 && self.u0.is_finite()) {
            return Err(LevyError::param("u0", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(LevyError::param("delta", "must be positive"));
        }
        Ok(())
    }

    /// Both constants equal and the taper even (all built-in tapers are).
    pub fn is_symmetric(&self) -> bool {
        self.c_plus == self.c_minus
    }

    pub fn c_side(&self, u: f64) -> f64 {
        if u > 0.0 {
            self.c_plus
        } else {
            self.c_minus
        }
    }

    /// The untapered stable density `C± |u|^{-α-1}`.
    pub fn stable_density(&self, u: f64) -> f64 {
        self.c_side(u) * u.abs().powf(-self.alpha - 1.0)
    }

    /// `m(u)` without argument checks; returns `+∞` at the origin.
    #[inline]
    pub fn m(&self, u: f64) -> f64 {
        let c = self.c_side(u);
        if c == 0.0 {
            return 0.0;
        }
        let base = c * u.abs().powf(-self.alpha - 1.0);
        match self.taper {
            Taper::None => base,
            t => base * t.value(u),
        }
    }

    /// `ln m(u)`, `-∞` where `m` vanishes.
    pub fn ln_m(&self, u: f64) -> f64 {
        let c = self.c_side(u);
        if c == 0.0 {
            return f64::NEG_INFINITY;
        }
        c.ln() - (self.alpha + 1.0) * u.abs().ln() + self.taper.ln_value(u)
    }

    pub fn m_density(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Err(LevyError::Domain(
                "the Lévy density is not defined at u = 0".into(),
            ));
        }
        if !u.is_finite() {
            return Err(LevyError::Domain(format!("u = {u} is not finite")));
        }
        Ok(self.m(u))
    }

    /// `m'(u) / m(u)`.
    pub fn log_deriv(&self, u: f64) -> f64 {
        -(self.alpha + 1.0) / u + self.taper.log_deriv(u)
    }

    fn check_interior(&self, u: f64) -> Result<()> {
        if u == 0.0 || !u.is_finite() {
            return Err(LevyError::Domain(format!("u = {u} must be finite and nonzero")));
        }
        if self.c_side(u) == 0.0 {
            return Err(LevyError::Unbounded {
                u,
                reason: "m vanishes identically on this side".into(),
            });
        }
        if u.abs() >= self.taper.support() {
            return Err(LevyError::Unbounded {
                u,
                reason: "outside the support of m".into(),
            });
        }
        Ok(())
    }

    fn finite_or_unbounded(&self, u: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LevyError::Unbounded {
                u,
                reason: "m vanishes at this point in floating point".into(),
            })
        }
    }

    /// `τ(u) = |u m'(u)| / m(u)`.
    pub fn tau(&self, u: f64) -> Result<f64> {
        self.check_interior(u)?;
        let v = (u * self.log_deriv(u)).abs();
        self.finite_or_unbounded(u, v)
    }

    /// `χ(u) = -u² m'(u)/m(u) - 2u`.
    pub fn chi(&self, u: f64) -> Result<f64> {
        self.check_interior(u)?;
        let v = self.chi_unchecked(u);
        self.finite_or_unbounded(u, v)
    }

    /// `χ` written as `(α-1)u - u² f'/f`; no support checks.
    #[inline]
    pub fn chi_unchecked(&self, u: f64) -> f64 {
        (self.alpha - 1.0) * u - u * u * self.taper.log_deriv(u)
    }

    /// `∫_{lo<|u|≤hi} w(u) m(u) du` for `0 ≤ lo < hi ≤ ∞`.
    ///
    /// Near the origin `w·m` is assumed to behave like a power of `|u|`
    /// (integrable); for the untapered measure the far tail is closed with
    /// the same power-law device.
    pub fn measure_integral<W: Fn(f64) -> f64>(&self, lo: f64, hi: f64, w: W) -> Result<f64> {
        let mut total = 0.0;
        for side in [Side::Positive, Side::Negative] {
            total += self.side_integral(side, lo, hi, &w)?;
        }
        Ok(total)
    }

    /// One-sided version of [`measure_integral`](Self::measure_integral):
    /// integrates over `side · (lo, hi]`.
    pub fn side_integral<W: Fn(f64) -> f64>(&self, side: Side, lo: f64, hi: f64, w: &W) -> Result<f64> {
        let s = side.sign();
        if self.c_side(s) == 0.0 {
            return Ok(0.0);
        }
        let hi = hi.min(self.taper.support());
        if !(hi > lo) {
            return Ok(0.0);
        }
        let g = |r: f64| {
            let u = s * r;
            let v = w(u) * self.m(u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let opts = QuadOptions::default();
        let mut total = 0.0;

        let mut a = lo;
        if lo == 0.0 {
            let top = if hi.is_finite() { hi } else { 1.0 };
            a = top * 1e-10;
            total += power_piece(&g, a, false);
        }
        let (b, open_tail) = if hi.is_finite() {
            (hi, false)
        } else {
            let cut = self.taper.cutoff();
            if cut.is_finite() {
                (cut.max(a * 2.0), false)
            } else {
                (a.max(1.0) * 1e4, true)
            }
        };
        if b > a {
            let pts = geometric_points(a, b, 2.0, f64::INFINITY);
            total += integrate_panels(g, &pts, &opts)?.value;
        }
        if open_tail {
            total += power_piece(&g, b, true);
        }
        Ok(total)
    }

    /// Jump intensity `μ(|u| > eps)` on one side.
    pub fn side_tail_mass(&self, side: Side, eps: f64) -> Result<f64> {
        self.side_integral(side, eps, f64::INFINITY, &|_| 1.0)
    }

    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        Ok(self.side_tail_mass(Side::Positive, eps)? + self.side_tail_mass(Side::Negative, eps)?)
    }

    /// Drift correction `c_t = t ∫_{t^{1/α}<|u|≤1} u m(u) du`.
    pub fn c_t(&self, t: f64) -> Result<f64> {
        Ok(self.drift_correction(t)?.value)
    }

    pub fn drift_correction(&self, t: f64) -> Result<DriftCorrection> {
        if !(t > 0.0) {
            return Err(LevyError::param("t", "must be positive"));
        }
        let s = t.powf(1.0 / self.alpha);
        if s > 1.0 {
            log::warn!("t^(1/alpha) = {s} exceeds 1; the drift correction region is empty");
            return Ok(DriftCorrection {
                value: 0.0,
                empty_region: true,
            });
        }
        if self.is_symmetric() {
            return Ok(DriftCorrection {
                value: 0.0,
                empty_region: false,
            });
        }
        let v = self.measure_integral(s, 1.0, |u| u)?;
        Ok(DriftCorrection {
            value: t * v,
            empty_region: false,
        })
    }

    /// Checks `m(u) / (C±|u|^{-α_ref-1}) → 1` on a shrinking grid of
    /// magnitudes, reporting the worst deviation within the smallest decade.
    pub fn verify_h1_against(&self, alpha_ref: f64, tol: f64, grid: &[f64]) -> H1Report {
        let umin = grid
            .iter()
            .copied()
            .filter(|u| *u > 0.0)
            .fold(f64::INFINITY, f64::min);
        let mut worst: f64 = 0.0;
        for &r in grid.iter().filter(|&&r| r > 0.0 && r <= 10.0 * umin) {
            for u in [r, -r] {
                let c = self.c_side(u);
                if c == 0.0 {
                    continue;
                }
                let reference = c * r.powf(-alpha_ref - 1.0);
                let dev = (self.m(u) / reference - 1.0).abs();
                worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
            }
        }
        H1Report {
            reference_alpha: alpha_ref,
            max_deviation: worst,
            smallest_decade: umin,
            tol,
            passed: worst <= tol,
        }
    }

    pub fn verify_h1(&self, tol: f64, grid: &[f64]) -> H1Report {
        self.verify_h1_against(self.alpha, tol, grid)
    }

    /// Default H1 grid: ten points per decade on `[1e-8, 1e-1]`.
    pub fn default_h1_grid() -> Vec<f64> {
        (0..=70).map(|k| 10f64.powf(-8.0 + k as f64 / 10.0)).collect()
    }

    /// Checks condition H2: `τ` bounded on `|u| ≤ u0` and
    /// `∫_{|u|>u0} τ^{2+δ} m < ∞`.
    pub fn verify_h2(&self) -> H2Report {
        let u0 = self.u0;
        let p = 2.0 + self.delta;
        let mut sup_tau: f64 = 0.0;
        let n = 2000;
        for k in 0..=n {
            // Log-spaced from 1e-8·u0 and linear up to u0.
            let r_log = u0 * 10f64.powf(-8.0 * (1.0 - k as f64 / n as f64));
            let r_lin = u0 * k.max(1) as f64 / n as f64;
            for r in [r_log, r_lin] {
                for u in [r, -r] {
                    if self.c_side(u) == 0.0 {
                        continue;
                    }
                    let v = if u.abs() >= self.taper.support() {
                        f64::INFINITY
                    } else {
                        (u * self.log_deriv(u)).abs()
                    };
                    sup_tau = sup_tau.max(if v.is_nan() { f64::INFINITY } else { v });
                }
            }
        }

        // log of the tail integrand τ^{2+δ} m
        let ln_g = |u: f64| -> f64 {
            if u.abs() >= self.taper.support() || self.c_side(u) == 0.0 {
                return f64::NEG_INFINITY;
            }
            p * (u * self.log_deriv(u)).abs().ln() + self.ln_m(u)
        };
        let mut tail = 0.0;
        let mut evals = 0;
        let mut trunc: f64 = u0;
        let mut diagnostic = None;
        let opts = QuadOptions {
            max_evals: 1_000_000,
            ..QuadOptions::default()
        };
        for side in [Side::Positive, Side::Negative] {
            let s = side.sign();
            if self.c_side(s) == 0.0 {
                continue;
            }
            let support = self.taper.support();
            if u0 >= support {
                continue;
            }
            // Peak on a coarse geometric scan, then the first point beyond
            // which the integrand stays below 1e-14 of it.
            let mut peak = f64::NEG_INFINITY;
            let mut r = u0;
            let mut scan = Vec::new();
            let scan_end = support.min(self.taper.cutoff() * 10.0).min(1e300);
            while r < scan_end {
                let v = ln_g(s * r);
                if v.is_finite() {
                    peak = peak.max(v);
                }
                scan.push((r, v));
                r *= 1.05;
            }
            let level = peak + (1e-14f64).ln();
            let mut end = None;
            for w in scan.windows(2) {
                if w[0].1 >= level && w[1].1 < level {
                    end = Some(w[1].0);
                }
            }
            let end = match end {
                Some(e) => e,
                None if support.is_finite() => support,
                None => {
                    diagnostic = Some(format!(
                        "integrand does not decay below 1e-14 of its peak on side {s:+}"
                    ));
                    continue;
                }
            };
            let end = end.min(support);
            trunc = trunc.max(end);
            let pts = geometric_points(u0, end, 2.0, f64::INFINITY);
            match integrate_panels(|r: f64| ln_g(s * r).exp(), &pts, &opts) {
                Ok(res) => {
                    tail += res.value;
                    evals += res.evaluations;
                }
                Err(e) => {
                    diagnostic = Some(format!("tail quadrature diverged: {e}"));
                    continue;
                }
            }
            // Power-law remainder beyond the truncation point.
            if end < support {
                let g = |r: f64| ln_g(s * r).exp();
                let slope = (g(end * 1.01) / g(end)).ln() / 1.01f64.ln();
                if slope < -1.0 {
                    tail += g(end) * end / (-slope - 1.0);
                } else if g(end) > 0.0 {
                    diagnostic = Some(format!(
                        "tail integrand decays like |u|^{slope:.3}, not integrable"
                    ));
                }
            }
        }
        let passed = diagnostic.is_none() && sup_tau.is_finite() && tail.is_finite();
        if !sup_tau.is_finite() && diagnostic.is_none() {
            diagnostic = Some("tau is unbounded on |u| <= u0".into());
        }
        H2Report {
            sup_tau_inner: sup_tau,
            tail_integral: tail,
            truncation_point: trunc,
            evaluations: evals,
            passed,
            diagnostic,
        }
    }
}

/// `∫_0^a g` (tail = false) or `∫_a^∞ g` (tail = true) for an integrand that
/// behaves like a power of `r` there; the exponent is read off numerically.
fn power_piece<G: Fn(f64) -> f64>(g: &G, a: f64, tail: bool) -> f64 {
    let ga = g(a);
    if ga == 0.0 {
        return 0.0;
    }
    let p = (g(a * 1.001) / ga).ln() / 1.001f64.ln();
    if tail {
        if p < -1.0 {
            ga * a / (-p - 1.0)
        } else {
            f64::INFINITY
        }
    } else if p > -1.0 {
        ga * a / (p + 1.0)
    } else {
        f64::INFINITY
    }
}

/// The estimated parameter `θ = (β, γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTheta")]
pub struct Theta {
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Deserialize)]
struct RawTheta {
    beta: f64,
    gamma: f64,
}

impl TryFrom<RawTheta> for Theta {
    type Error = LevyError;
    fn try_from(raw: RawTheta) -> Result<Self> {
        Theta::new(raw.beta, raw.gamma)
    }
}

impl Theta {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(LevyError::param("beta", "must be finite"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LevyError::param("gamma", "must be positive"));
        }
        Ok(Theta { beta, gamma })
    }

    pub fn unit() -> Self {
        Theta { beta: 0.0, gamma: 1.0 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.beta, self.gamma]
    }
}
