//! Path simulation: the jump ledger of `Z`, exact stable increments, the
//! nuisance process and the observed process `X = βt + γZ + U` on the
//! sampling grid `t_k = k h`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densities::nuisance::{JumpLaw, NuisanceSpec};
use crate::densities::stable::StableParams;
use crate::error::{LevyError, Result};
use crate::levy_model::{LevyMeasureSpec, Side, Taper, Theta};
use crate::quadrature::gauss_legendre10;
use crate::rng::{stream, Purpose};

/// Default cap on the expected number of ledger jumps.
pub const DEFAULT_JUMP_BUDGET: f64 = 1e7;

/// `n` observations at spacing `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub n: usize,
    pub h: f64,
}

impl SamplingScheme {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n == 0 {
            return Err(LevyError::param("scheme.n", "must be at least 1"));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(LevyError::param("scheme.h", "must lie in (0, 1]"));
        }
        Ok(SamplingScheme { n, h })
    }

    /// The scheme `h = 1/n`.
    pub fn unit_horizon(n: usize) -> Result<Self> {
        Self::new(n, 1.0 / n as f64)
    }

    /// `n^{-1/2} h^{1/α - 1}`, which must be small when `α > 1`.
    pub fn rate_check(&self, alpha: f64) -> f64 {
        (self.n as f64).powf(-0.5) * self.h.powf(1.0 / alpha - 1.0)
    }

    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// `t_k = k h`, `k = 0..=n`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| k as f64 * self.h).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// A realization of the Poisson measure of `Z` restricted to `|u| > eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpLedger {
    pub horizon: f64,
    pub eps: f64,
    /// Sorted by time.
    pub jumps: Vec<Jump>,
    /// `μ(|u| > eps)`.
    pub intensity: f64,
    /// `∫_{eps<|u|≤1} u μ(du)`.
    pub compensator_drift: f64,
    /// `∫_{|u|≤eps} u² μ(du)`.
    pub small_variance: f64,
    pub seed: u64,
    pub replication: u64,
}

impl JumpLedger {
    /// Jumps with `time ≤ t`.
    pub fn jumps_until(&self, t: f64) -> &[Jump] {
        let k = self.jumps.partition_point(|j| j.time <= t);
        &self.jumps[..k]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Treatment of the jumps below the ledger threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumps {
    /// Brownian surrogate with variance `t ∫_{|u|≤eps} u² dμ`.
    #[default]
    Gaussian,
    /// Dropped; the bias is bounded by the same variance.
    Omit,
}

enum SideLaw {
    Empty,
    /// `μ(side, |u| > r) = c r^{-α} / α`.
    Power { c: f64, alpha: f64 },
    /// Tabulated tail `T(r)` on a geometric grid, refined by Newton steps.
    Table { r: Vec<f64>, tail: Vec<f64> },
}

/// Draws ledgers for one `(spec, eps)` pair; the tail tables are built once.
pub struct JumpSampler {
    spec: LevyMeasureSpec,
    eps: f64,
    mass: [f64; 2],
    sides: [SideLaw; 2],
    compensator_drift: f64,
    small_variance: f64,
    budget: f64,
}

const TABLE_PER_DECADE: f64 = 100.0;

impl JumpSampler {
    pub fn new(spec: &LevyMeasureSpec, eps: f64) -> Result<Self> {
        Self::with_budget(spec, eps, DEFAULT_JUMP_BUDGET)
    }

    pub fn with_budget(spec: &LevyMeasureSpec, eps: f64, budget: f64) -> Result<Self> {
        spec.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(LevyError::param("eps", "must be positive"));
        }
        let mut mass = [0.0; 2];
        let mut sides = [SideLaw::Empty, SideLaw::Empty];
        for (k, side) in [Side::Positive, Side::Negative].into_iter().enumerate() {
            let c = spec.c_side(side.sign());
            if c == 0.0 || eps >= spec.taper.support() {
                continue;
            }
            if spec.taper == Taper::None {
                mass[k] = c * eps.powf(-spec.alpha) / spec.alpha;
                sides[k] = SideLaw::Power { c, alpha: spec.alpha };
            } else {
                let (r, tail) = side_table(spec, side, eps)?;
                mass[k] = tail[0];
                sides[k] = SideLaw::Table { r, tail };
            }
        }
        let compensator_drift = if eps < 1.0 { spec.measure_integral(eps, 1.0, |u| u)? } else { 0.0 };
        let small_variance = spec.measure_integral(0.0, eps, |u| u * u)?;
        Ok(JumpSampler {
            spec: spec.clone(),
            eps,
            mass,
            sides,
            compensator_drift,
            small_variance,
            budget,
        })
    }

    pub fn intensity(&self) -> f64 {
        self.mass[0] + self.mass[1]
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// One jump size from the normalized restricted measure.
    pub fn sample_size<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = self.intensity();
        let pick = rng.random::<f64>() * total;
        let (k, sign) = if pick < self.mass[0] { (0, 1.0) } else { (1, -1.0) };
        // Uniform on (0, T(eps)] for the chosen side.
        let v = (1.0 - rng.random::<f64>()) * self.mass[k];
        sign * self.invert_tail(k, v)
    }

    fn invert_tail(&self, k: usize, v: f64) -> f64 {
        match &self.sides[k] {
            SideLaw::Empty => self.eps,
            SideLaw::Power { c, alpha } => (alpha * v / c).powf(-1.0 / alpha),
            SideLaw::Table { r, tail } => {
                let sign = if k == 0 { 1.0 } else { -1.0 };
                // tail is decreasing; find the cell with tail[i] ≥ v > tail[i+1].
                let i = tail.partition_point(|&x| x >= v).saturating_sub(1).min(r.len() - 2);
                let (mut lo, mut hi) = (r[i], r[i + 1]);
                let m = |x: f64| self.spec.m(sign * x);
                let g = |x: f64| tail[i] - gauss_legendre10(m, r[i], x) - v;
                let (t0, t1) = (tail[i], tail[i + 1]);
                let mut x = if t1 > 0.0 && t0 > 0.0 {
                    let w = (t0 / v).ln() / (t0 / t1).ln();
                    (lo.ln() + w.clamp(0.0, 1.0) * (hi.ln() - lo.ln())).exp()
                } else {
                    0.5 * (lo + hi)
                };
                for _ in 0..60 {
                    let gx = g(x);
                    if gx > 0.0 {
                        lo = x;
                    } else {
                        hi = x;
                    }
                    let d = m(x);
                    let mut next = if d > 0.0 { x + gx / d } else { f64::NAN };
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - x).abs() <= 1e-12 * x || hi - lo <= 1e-13 * hi {
                        x = next;
                        break;
                    }
                    x = next;
                }
                x
            }
        }
    }

    /// A ledger on `[0, horizon]` from stream `(seed, Jumps, replication)`.
    pub fn sample(&self, horizon: f64, seed: u64, replication: u64) -> Result<JumpLedger> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(LevyError::param("horizon", "must be positive"));
        }
        let mean = horizon * self.intensity();
        if mean > self.budget {
            return Err(LevyError::Budget(format!(
                "expected {mean:.3e} jumps above eps = {} exceeds the budget {:.1e}",
                self.eps, self.budget
            )));
        }
        let mut rng = stream(seed, Purpose::Jumps, replication);
        let count = poisson(&mut rng, mean);
        let mut jumps: Vec<Jump> = (0..count)
            .map(|_| Jump {
                time: rng.random::<f64>() * horizon,
                size: self.sample_size(&mut rng),
            })
            .collect();
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(JumpLedger {
            horizon,
            eps: self.eps,
            jumps,
            intensity: self.intensity(),
            compensator_drift: self.compensator_drift,
            small_variance: self.small_variance,
            seed,
            replication,
        })
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// `T(r) = μ(side, |u| > r)` on a geometric grid from `eps` to the end of
/// the effective support.
fn side_table(spec: &LevyMeasureSpec, side: Side, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let sign = side.sign();
    let end = spec.taper.support().min(spec.taper.cutoff()).max(eps * 1.01);
    let n = (((end / eps).log10() * TABLE_PER_DECADE).ceil() as usize).max(2);
    let ratio = (end / eps).powf(1.0 / n as f64);
    let r: Vec<f64> = (0..=n).map(|i| if i == n { end } else { eps * ratio.powi(i as i32) }).collect();
    let mut tail = vec![0.0; n + 1];
    tail[n] = if end < spec.taper.support() {
        spec.side_integral(side, end, f64::INFINITY, &|_| 1.0)?
    } else {
        0.0
    };
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + gauss_legendre10(|x| spec.m(sign * x), r[i], r[i + 1]);
    }
    Ok((r, tail))
}

/// [`JumpSampler::sample`] with replication 0.
pub fn sample_ledger(spec: &LevyMeasureSpec, horizon: f64, eps: f64, seed: u64) -> Result<JumpLedger> {
    JumpSampler::new(spec, eps)?.sample(horizon, seed, 0)
}

/// `Z` at the sorted times `ts` from the ledger: large jumps, minus the
/// compensator, plus the small-jump surrogate.
pub fn z_path(ledger: &JumpLedger, ts: &[f64], small: SmallJumps) -> Result<Vec<f64>> {
    let mut rng = stream(ledger.seed, Purpose::SmallJumps, ledger.replication);
    let mut out = Vec::with_capacity(ts.len());
    let (mut k, mut sum, mut last_t, mut w) = (0usize, 0.0, 0.0, 0.0);
    for &t in ts {
        if t > ledger.horizon * (1.0 + 1e-12) || t < 0.0 {
            return Err(LevyError::Horizon {
                t,
                horizon: ledger.horizon,
            });
        }
        if t < last_t {
            return Err(LevyError::param("times", "must be sorted"));
        }
        while k < ledger.jumps.len() && ledger.jumps[k].time <= t {
            sum += ledger.jumps[k].size;
            k += 1;
        }
        if small == SmallJumps::Gaussian && t > last_t {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += z * ((t - last_t) * ledger.small_variance).sqrt();
        }
        last_t = t;
        out.push(sum - t * ledger.compensator_drift + w);
    }
    Ok(out)
}

/// `Z_t` from the ledger.
pub fn z_from_ledger(ledger: &JumpLedger, t: f64, small: SmallJumps) -> Result<f64> {
    Ok(z_path(ledger, &[t], small)?[0])
}

/// Chambers–Mallows–Stuck draw from `S_α(σ, β, μ)`.
pub fn sample_stable<R: Rng>(p: &StableParams, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let (a, b) = (p.alpha, p.beta);
    if a == 1.0 {
        let x = (2.0 / PI) * ((FRAC_PI_2 + b * v) * v.tan() - b * ((FRAC_PI_2 * w * v.cos()) / (FRAC_PI_2 + b * v)).ln());
        p.sigma * x + (2.0 / PI) * b * p.sigma * p.sigma.ln() + p.mu
    } else {
        let t = b * (PI * a / 2.0).tan();
        let shift = t.atan() / a;
        let scale = (1.0 + t * t).powf(1.0 / (2.0 * a));
        let x = scale * (a * (v + shift)).sin() / v.cos().powf(1.0 / a)
            * ((v - a * (v + shift)).cos() / w).powf((1.0 - a) / a);
        p.sigma * x + p.mu
    }
}

/// Exact increments of an untapered `Z` over steps of length `h`:
/// `Z_h = h^{1/α} ζ - c_h` with `ζ` distributed as the stable limit.
pub struct ExactIncrements {
    limit: StableParams,
    scale: f64,
    shift: f64,
}

impl ExactIncrements {
    pub fn new(spec: &LevyMeasureSpec, h: f64) -> Result<Self> {
        if spec.taper != Taper::None {
            return Err(LevyError::param("method", "exact increments need an untapered measure"));
        }
        Ok(ExactIncrements {
            limit: StableParams::from_levy(spec.alpha, spec.c_plus, spec.c_minus),
            scale: h.powf(1.0 / spec.alpha),
            shift: if h <= 1.0 { spec.c_t(h)? } else { 0.0 },
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.scale * sample_stable(&self.limit, rng) - self.shift
    }
}

/// Increments of the nuisance process over `n` steps of length `h`.
pub fn nuisance_increments(nuisance: &NuisanceSpec, n: usize, h: f64, seed: u64, replication: u64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut rng = stream(seed, Purpose::Nuisance, replication);
    match *nuisance {
        NuisanceSpec::Zero => {}
        NuisanceSpec::CompoundPoisson {
            rate,
            jump_std,
            jump_law,
        } => {
            let count = poisson(&mut rng, rate * h * n as f64);
            for _ in 0..count {
                let k = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
                out[k] += jump(&mut rng, jump_law, jump_std);
            }
        }
        NuisanceSpec::Stable { alpha_u, scale } => {
            let p = StableParams {
                alpha: alpha_u,
                sigma: scale * h.powf(1.0 / alpha_u),
                beta: 0.0,
                mu: 0.0,
            };
            for v in out.iter_mut() {
                *v = sample_stable(&p, &mut rng);
            }
        }
    }
    out
}

fn jump<R: Rng>(rng: &mut R, law: JumpLaw, sd: f64) -> f64 {
    match law {
        JumpLaw::Normal => {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        }
        JumpLaw::Laplace => {
            let b = sd / std::f64::consts::SQRT_2;
            let e: f64 = Exp1.sample(rng);
            if rng.random::<bool>() {
                b * e
            } else {
                -b * e
            }
        }
    }
}

/// How `Z` is generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZMethod {
    /// Ledger of jumps above `eps` plus the small-jump treatment.
    Ledger { eps: f64, small: SmallJumps },
    /// Exact stable increments (untapered measures only).
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub theta: Theta,
    pub scheme: SamplingScheme,
    pub method: ZMethod,
    pub seed: u64,
    pub replication: u64,
    pub ledger: Option<JumpLedger>,
    /// Variance bound of the small-jump approximation over the horizon.
    pub small_jump_bias: f64,
}

impl PathSample {
    pub fn increments(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,z,u,x")?;
        for k in 0..self.times.len() {
            writeln!(w, "{},{},{},{}", self.times[k], self.z[k], self.u[k], self.x[k])?;
        }
        Ok(())
    }
}

/// Values of `Z` on the grid of `scheme` (starting at 0).
pub fn sample_z(
    spec: &LevyMeasureSpec,
    scheme: &SamplingScheme,
    method: ZMethod,
    seed: u64,
    replication: u64,
) -> Result<(Vec<f64>, Option<JumpLedger>, f64)> {
    let times = scheme.times();
    match method {
        ZMethod::Exact => {
            let inc = ExactIncrements::new(spec, scheme.h)?;
            let mut rng = stream(seed, Purpose::Jumps, replication);
            let mut z = Vec::with_capacity(times.len());
            let mut acc = 0.0;
            z.push(0.0);
            for _ in 0..scheme.n {
                acc += inc.sample(&mut rng);
                z.push(acc);
            }
            Ok((z, None, 0.0))
        }
        ZMethod::Ledger { eps, small } => {
            let ledger = JumpSampler::new(spec, eps)?.sample(scheme.horizon(), seed, replication)?;
            let z = z_path(&ledger, &times, small)?;
            let bias = scheme.horizon() * ledger.small_variance;
            Ok((z, Some(ledger), bias))
        }
    }
}

/// A path of `X = βt + γZ + U` on the sampling grid.
pub fn sample_path(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisance: &NuisanceSpec,
    scheme: &SamplingScheme,
    method: ZMethod,
    seed: u64,
    replication: u64,
) -> Result<PathSample> {
    nuisance.check_compatible(spec)?;
    let times = scheme.times();
    let (z, ledger, small_jump_bias) = sample_z(spec, scheme, method, seed, replication)?;
    let du = nuisance_increments(nuisance, scheme.n, scheme.h, seed, replication);
    let mut u = Vec::with_capacity(times.len());
    u.push(0.0);
    let mut acc = 0.0;
    for d in du {
        acc += d;
        u.push(acc);
    }
    let x = (0..times.len())
        .map(|k| theta.beta * times[k] + theta.gamma * z[k] + u[k])
        .collect();
    Ok(PathSample {
        times,
        z,
        u,
        x,
        theta: *theta,
        scheme: *scheme,
        method,
        seed,
        replication,
        ledger,
        small_jump_bias,
    })
}

/// `ξ_k = γ^{-1} h^{-1/α} (ΔX_k - βh + γc_h)`.
pub fn normalized_increments(
    path: &PathSample,
    spec: &LevyMeasureSpec,
    theta: &Theta,
    scheme: &SamplingScheme,
) -> Result<Vec<f64>> {
    if path.theta != *theta {
        return Err(LevyError::Mismatch(format!(
            "path simulated under {:?}, increments requested under {:?}",
            path.theta, theta
        )));
    }
    if path.scheme != *scheme {
        return Err(LevyError::Mismatch("sampling scheme differs from the path's".into()));
    }
    Ok(normalize(&path.increments(), spec, theta, scheme.h)?)
}

/// The normalization of [`normalized_increments`] applied to raw increments.
pub fn normalize(increments: &[f64], spec: &LevyMeasureSpec, theta: &Theta, h: f64) -> Result<Vec<f64>> {
    let c_h = spec.c_t(h)?;
    let scale = theta.gamma * h.powf(1.0 / spec.alpha);
    Ok(increments
        .iter()
        .map(|d| (d - theta.beta * h + theta.gamma * c_h) / scale)
        .collect())
}

/// Convenience for tests and drivers that only need a generator.
pub fn auxiliary_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    stream(seed, Purpose::Auxiliary, replication)
}
