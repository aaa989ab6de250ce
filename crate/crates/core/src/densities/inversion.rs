//! Trapezoidal Fourier inversion on uniform frequency grids.
//!
//! For a real density with transform `F`, Poisson summation gives
//!
//! ```text
//! (Δλ/π) Σ_{j≥0}' Re(F(jΔλ) e^{-ijΔλx}) = Σ_k φ(x + kP),   P = 2π/Δλ,
//! ```
//!
//! so the only errors are the frequency truncation and the aliased images
//! `φ(x + kP)`, `k ≠ 0`. Each abscissa gets a period of at least four times
//! its own magnitude; abscissas are grouped into levels whose periods
//! double, so far-out points do not force a fine grid on the whole table.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exponent::Exponent;
use crate::error::{LevyError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Truncate where `|e^{ψ(λ)}|` falls below this level.
    pub decay_level: f64,
    /// Period of the coarsest grid in units of the law's scale `1/λ₁`,
    /// where `Re ψ(λ₁) = -1`.
    pub base_period_scales: f64,
    /// Aliased images `k = ±1..±K` removed with the leading tail.
    pub alias_images: usize,
    /// Give up when the truncation frequency exceeds this.
    pub max_lambda: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            decay_level: 1e-14,
            base_period_scales: 2000.0,
            alias_images: 200,
            max_lambda: 1e7,
        }
    }
}

/// Smallest `λ > 0` with `Re ψ(λ) = level` (assuming `Re ψ` eventually
/// decreases), found by doubling and bisection.
pub fn crossing_frequency<E: Exponent + ?Sized>(exp: &E, level: f64, max_lambda: f64) -> Result<f64> {
    let below = |l: f64| -> Result<bool> { Ok(exp.psi(l)?.re <= level) };
    let mut hi = 1.0;
    if below(hi)? {
        let mut lo = hi;
        while below(lo)? {
            lo /= 2.0;
            if lo < 1e-300 {
                return Err(LevyError::InsufficientDecay(
                    "exponent already below the threshold at the origin".into(),
                ));
            }
        }
        hi = 2.0 * lo;
        return bisect(&below, lo, hi);
    }
    loop {
        hi *= 2.0;
        if hi > max_lambda {
            return Err(LevyError::InsufficientDecay(format!(
                "Re psi has not reached {level} by lambda = {max_lambda:e}; a larger frequency budget is needed"
            )));
        }
        if below(hi)? && below(1.5 * hi)? && below(2.0 * hi)? {
            break;
        }
    }
    bisect(&below, hi / 2.0, hi)
}

fn bisect<B: Fn(f64) -> Result<bool>>(below: &B, mut lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Frequency truncation `Λ` and the coarse period used for an exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub lambda_max: f64,
    pub base_period: f64,
}

impl FrequencyPlan {
    pub fn for_exponent<E: Exponent + ?Sized>(exp: &E, opts: &InversionOptions) -> Result<Self> {
        let lambda_max = crossing_frequency(exp, opts.decay_level.ln(), opts.max_lambda)?;
        let lambda_one = crossing_frequency(exp, -1.0, opts.max_lambda)?;
        Ok(FrequencyPlan {
            lambda_max,
            base_period: opts.base_period_scales / lambda_one,
        })
    }

    /// Period used for abscissa `x`.
    pub fn period_for(&self, x: f64) -> f64 {
        let need = (4.0 * x.abs()).max(self.base_period);
        let level = (need / self.base_period).log2().ceil().max(0.0);
        self.base_period * 2f64.powi(level as i32)
    }
}

/// Inverts `k` spectra simultaneously. `spectrum(λ, out)` fills the `k`
/// transforms at `λ ≥ 0`; each must satisfy `F(-λ) = conj F(λ)`.
/// Returns the `k` inverted arrays and the period used per abscissa.
pub fn invert_channels<S>(
    xs: &[f64],
    plan: &FrequencyPlan,
    k: usize,
    spectrum: S,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)>
where
    S: Fn(f64, &mut [Complex64]) -> Result<()> + Sync,
{
    let periods: Vec<f64> = xs.iter().map(|&x| plan.period_for(x)).collect();
    let mut out = vec![vec![0.0; xs.len()]; k];
    let mut distinct: Vec<f64> = periods.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    for &p in &distinct {
        let idx: Vec<usize> = (0..xs.len()).filter(|&i| periods[i] == p).collect();
        let dl = 2.0 * std::f64::consts::PI / p;
        let n = (plan.lambda_max / dl).ceil() as usize + 1;
        let spec: Result<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map_init(
                || vec![Complex64::new(0.0, 0.0); k],
                |buf, j| -> Result<Vec<Complex64>> {
                    spectrum(j as f64 * dl, buf)?;
                    let mut v = buf.clone();
                    if j == 0 {
                        for c in v.iter_mut() {
                            *c *= 0.5;
                        }
                    }
                    Ok(v)
                },
            )
            .collect::<Result<Vec<Vec<Complex64>>>>()
            .map(|rows| rows.into_iter().flatten().collect());
        let spec = spec?;
        let (runs, rest) = uniform_runs(xs, &idx);
        for (start, len) in runs {
            let (x0, dx) = (xs[idx[start]], xs[idx[start + 1]] - xs[idx[start]]);
            for c in 0..k {
                let a: Vec<Complex64> = (0..n).map(|j| spec[j * k + c]).collect();
                let s = chirp_sum(&a, dl, x0, dx, len);
                for (m, v) in s.iter().enumerate() {
                    out[c][idx[start + m]] = v.re * dl / std::f64::consts::PI;
                }
            }
        }
        let sums: Vec<Vec<f64>> = rest
            .par_iter()
            .map(|&i| {
                let x = xs[i];
                let step = Complex64::from_polar(1.0, -dl * x);
                let mut z = Complex64::new(1.0, 0.0);
                let mut acc = vec![Complex64::new(0.0, 0.0); k];
                for j in 0..n {
                    if j % 128 == 0 {
                        z = Complex64::from_polar(1.0, -(j as f64) * dl * x);
                    }
                    let row = &spec[j * k..(j + 1) * k];
                    for c in 0..k {
                        acc[c] += row[c] * z;
                    }
                    z *= step;
                }
                acc.iter().map(|a| a.re * dl / std::f64::consts::PI).collect()
            })
            .collect();
        for (pos, &i) in rest.iter().enumerate() {
            for c in 0..k {
                out[c][i] = sums[pos][c];
            }
        }
    }
    Ok((out, periods))
}

/// Shortest stretch of equally spaced abscissas worth a chirp transform.
const MIN_RUN: usize = 256;

/// Splits `idx` into maximal runs of equally spaced abscissas (returned as
/// `(start, len)` into `idx`) and the remaining indices.
fn uniform_runs(xs: &[f64], idx: &[usize]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut runs = Vec::new();
    let mut rest = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        if end < idx.len() {
            let d = xs[idx[end]] - xs[idx[start]];
            while end + 1 < idx.len() {
                let e = xs[idx[end + 1]] - xs[idx[end]];
                if d > 0.0 && (e - d).abs() <= 1e-9 * d {
                    end += 1;
                } else {
                    break;
                }
            }
            end += 1;
        }
        if end - start >= MIN_RUN {
            runs.push((start, end - start));
        } else {
            rest.extend_from_slice(&idx[start..end]);
        }
        start = end;
    }
    (runs, rest)
}

/// `S_m = Σ_j a_j e^{-i j dλ (x0 + m dx)}` for `m < len` by Bluestein's
/// chirp transform: with `w = e^{-i dλ dx}`, `jm = (j² + m² - (m-j)²)/2`
/// turns the sum into a convolution.
fn chirp_sum(a: &[Complex64], dl: f64, x0: f64, dx: f64, len: usize) -> Vec<Complex64> {
    use rustfft::FftPlanner;
    let n = a.len();
    let theta = dl * dx;
    // w^{k²/2}; k² is exact in f64 for the sizes used here.
    let chirp = |k: usize| {
        let kk = (k as f64) * (k as f64);
        Complex64::from_polar(1.0, -0.5 * theta * kk)
    };
    let size = (n + len - 1).next_power_of_two();
    let mut u = vec![Complex64::new(0.0, 0.0); size];
    for (j, aj) in a.iter().enumerate() {
        u[j] = aj * Complex64::from_polar(1.0, -(j as f64) * dl * x0) * chirp(j);
    }
    let mut v = vec![Complex64::new(0.0, 0.0); size];
    for k in 0..len.max(n) {
        let c = chirp(k).conj();
        if k < len {
            v[k] = c;
        }
        if k > 0 && k < n {
            v[size - k] = c;
        }
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    fwd.process(&mut u);
    fwd.process(&mut v);
    for (x, y) in u.iter_mut().zip(&v) {
        *x *= y;
    }
    inv.process(&mut u);
    let norm = 1.0 / size as f64;
    (0..len).map(|m| u[m] * chirp(m) * norm).collect()
}

/// Sum of `g(x + kP)` over `k = ±1..±K` and its derivative in `x`. When
/// `g` has a power tail of index `alpha`, the images beyond `K` are added
/// through the integral of the power law.
pub fn image_sum<G: Fn(f64) -> f64>(g: &G, x: f64, period: f64, images: usize, alpha: Option<f64>) -> (f64, f64) {
    let (mut s, mut ds) = (0.0, 0.0);
    for k in 1..=images {
        let d = k as f64 * period;
        s += g(x + d) + g(x - d);
        ds += tail_derivative(g, x + d) + tail_derivative(g, x - d);
    }
    if let Some(alpha) = alpha {
        let far = (images as f64 + 0.5) * period;
        s += beyond(g, x, far, alpha) / period;
        ds += (g(x - far) - g(x + far)) / period;
    }
    (s, ds)
}

/// `∫_far^∞ [g(x + y) + g(x - y)] dy` by Simpson's rule in `ln y`, closed
/// with the power law of index `alpha` past `e^{V_MAX}·far`. Tapered tails
/// are followed exactly instead of being extrapolated as power laws.
fn beyond<G: Fn(f64) -> f64>(g: &G, x: f64, far: f64, alpha: f64) -> f64 {
    const STEPS: usize = 600;
    const V_MAX: f64 = 30.0;
    let dv = V_MAX / STEPS as f64;
    let f = |v: f64| {
        let y = far * v.exp();
        (g(x + y) + g(x - y)) * y
    };
    let mut acc = f(0.0) + f(V_MAX);
    for i in 1..STEPS {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * dv);
    }
    acc * dv / 3.0 + f(V_MAX) / alpha
}

/// Numerical derivative of a Lévy density away from the origin.
pub fn tail_derivative<G: Fn(f64) -> f64>(g: &G, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1e-3);
    (g(x + h) - g(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::exponent::FnExponent;
    use std::f64::consts::PI;

    #[test]
    fn chirp_sum_matches_direct_sum() {
        let a: Vec<Complex64> = (0..3000)
            .map(|j| Complex64::new((-(j as f64) * 0.004).exp(), 0.3 * (j as f64 * 0.01).sin()))
            .collect();
        let (dl, x0, dx, len) = (0.0123, -7.3, 0.01, 1500);
        let fast = chirp_sum(&a, dl, x0, dx, len);
        for m in [0, 1, 700, 1499] {
            let x = x0 + m as f64 * dx;
            let direct: Complex64 = a
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -(j as f64) * dl * x))
                .sum();
            assert!((fast[m] - direct).norm() < 1e-11 * (1.0 + direct.norm()), "{m}");
        }
    }

    #[test]
    fn uniform_runs_split_grids() {
        let mut xs: Vec<f64> = (0..300).map(|i| i as f64 * 0.5).collect();
        xs.extend([200.0, 260.0, 400.0]);
        let idx: Vec<usize> = (0..xs.len()).collect();
        let (runs, rest) = uniform_runs(&xs, &idx);
        assert_eq!(runs, vec![(0, 300)]);
        assert_eq!(rest, vec![300, 301, 302]);
    }

    #[test]
    fn crossing_frequency_for_cauchy() {
        let e = FnExponent {
            psi: |l: f64| Complex64::new(-l.abs(), 0.0),
            tail: |_x: f64| 0.0,
        };
        let l = crossing_frequency(&e, (1e-12f64).ln(), 1e7).unwrap();
        assert!((l - 12.0 * 10f64.ln()).abs() < 1e-8);
        let l1 = crossing_frequency(&e, -1.0, 1e7).unwrap();
        assert!((l1 - 1.0).abs() < 1e-9);
        let flat = FnExponent {
            psi: |l: f64| Complex64::new(-(1.0 - (-l * l).exp()), 0.0),
            tail: |_x: f64| 0.0,
        };
        assert!(matches!(
            crossing_frequency(&flat, -30.0, 1e4),
            Err(LevyError::InsufficientDecay(_))
        ));
    }

    #[test]
    fn gaussian_inversion_is_spectrally_accurate() {
        let e = FnExponent {
            psi: |l: f64| Complex64::new(-l * l / 2.0, 0.0),
            tail: |_x: f64| 0.0,
        };
        let plan = FrequencyPlan::for_exponent(&e, &InversionOptions::default()).unwrap();
        let xs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.2).collect();
        let (out, _) = invert_channels(&xs, &plan, 2, |l, buf| {
            let f = (-l * l / 2.0).exp();
            buf[0] = Complex64::new(f, 0.0);
            buf[1] = Complex64::new(0.0, -l) * f;
            Ok(())
        })
        .unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let phi = (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
            assert!((out[0][i] - phi).abs() < 1e-13, "{x}");
            assert!((out[1][i] + x * phi).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn levels_double_the_period() {
        let plan = FrequencyPlan {
            lambda_max: 10.0,
            base_period: 100.0,
        };
        assert_eq!(plan.period_for(3.0), 100.0);
        assert_eq!(plan.period_for(25.0), 100.0);
        assert_eq!(plan.period_for(26.0), 200.0);
        assert_eq!(plan.period_for(-1000.0), 6400.0);
    }
}
