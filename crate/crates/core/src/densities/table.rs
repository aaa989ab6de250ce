//! Tabulated densities: cubic Hermite interpolation on a grid plus a fitted
//! tail model beyond its ends.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::exponent::Exponent;
use super::inversion::{image_sum, invert_channels, FrequencyPlan, InversionOptions};
use crate::error::{LevyError, Result};

/// Values below this are reported as `ln(LOG_FLOOR)` and flagged.
pub const LOG_FLOOR: f64 = 1e-300;

/// A grid uniform on `[-core, core]` and geometric beyond it out to `±z_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub core: f64,
    pub step: f64,
    pub ratio: f64,
    pub z_max: f64,
}

impl GridSpec {
    pub fn new(core: f64, step: f64, ratio: f64, z_max: f64) -> Result<Self> {
        if !(core > 0.0 && step > 0.0 && step < core && ratio > 1.0 && z_max >= core) {
            return Err(LevyError::param("grid", "need 0 < step < core <= z_max and ratio > 1"));
        }
        Ok(GridSpec { core, step, ratio, z_max })
    }

    /// Same shape stretched by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        GridSpec {
            core: self.core * factor,
            step: self.step * factor,
            ratio: self.ratio,
            z_max: self.z_max * factor,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = (self.core / self.step).round() as i64;
        let h = self.core / n as f64;
        let mut outer = Vec::new();
        let mut z = self.core;
        while z < self.z_max {
            let step = (z * (self.ratio - 1.0)).max(h);
            z = (z + step).min(self.z_max);
            outer.push(z);
        }
        let mut xs: Vec<f64> = outer.iter().rev().map(|z| -z).collect();
        xs.extend((-n..=n).map(|i| i as f64 * h));
        xs.extend(outer);
        xs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// `ℓ(z) (a + b u + c u²)`, `u = (|z|/|z_e|)^{-α}`, built on the Lévy
    /// density `ℓ`.
    LevyRatio,
    /// Pure power law matched to the edge value and slope.
    PowerLaw,
    /// Edge value at noise level; the tail is dropped.
    Zero,
}

/// Tail beyond one end of the table, stored as a log-log curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub kind: TailKind,
    /// Signed edge abscissa.
    pub edge: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Mass beyond the edge.
    pub mass: f64,
    /// Coefficient of determination of the tail regression over the last
    /// decade of nodes inside the edge.
    pub r_squared: f64,
    ln_r0: f64,
    dln_r: f64,
    ln_g: Vec<f64>,
    /// Mass beyond each sample point.
    beyond: Vec<f64>,
    final_slope: f64,
}

const TAIL_PER_DECADE: usize = 50;
/// Stand-ins for `ln 0` and an infinitely steep slope that survive JSON.
const LN_ZERO: f64 = -800.0;
const STEEP: f64 = -1e6;
const TAIL_DECADES: usize = 8;

impl TailModel {
    fn zero(edge: f64) -> Self {
        TailModel {
            kind: TailKind::Zero,
            edge,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            mass: 0.0,
            r_squared: 1.0,
            ln_r0: edge.abs().max(f64::MIN_POSITIVE).ln(),
            dln_r: 1.0,
            ln_g: Vec::new(),
            beyond: Vec::new(),
            final_slope: 0.0,
        }
    }

    /// Fits the tail beyond the left or right end of the grid. With a Lévy
    /// density, `f/ℓ` is regressed on `(|z|/|z_e|)^{-α}` over the last
    /// decade of nodes; otherwise a power law is matched to the edge slope.
    fn fit<L: Fn(f64) -> f64>(x: &[f64], f: &[f64], df: &[f64], right: bool, noise: f64, alpha: Option<f64>, ell: &L) -> Self {
        let e = if right { x.len() - 1 } else { 0 };
        let (edge, f_e, d_e) = (x[e], f[e], df[e]);
        let sign = edge.signum();
        let r_e = edge.abs();
        if !(f_e > noise) || r_e == 0.0 || (edge > 0.0) != right {
            return Self::zero(edge);
        }
        let ell_e = ell(edge);
        let kind;
        let (a, b);
        let mut c = 0.0;
        let g: Box<dyn Fn(f64) -> f64> = match alpha {
            Some(alpha) if ell_e > 0.0 && ell_e.is_finite() => {
                kind = TailKind::LevyRatio;
                let mut pts = Vec::new();
                for i in 0..x.len() {
                    let r = x[i] * sign;
                    if r >= r_e / 10.0 && f[i] > noise {
                        let l = ell(x[i]);
                        if l > 0.0 && l.is_finite() {
                            pts.push(((r / r_e).powf(-alpha), f[i] / l));
                        }
                    }
                }
                let (fa, fb, fc) = fit_ratio(&pts).unwrap_or((f_e / ell_e, 0.0, 0.0));
                a = fa;
                b = fb;
                c = fc;
                Box::new(move |r: f64| {
                    let u = (r / r_e).powf(-alpha);
                    ell(sign * r) * (a + u * (b + u * c))
                })
            }
            _ => {
                let p = d_e * sign * r_e / f_e;
                if !(p < -1.0) {
                    log::warn!("tail at {edge}: slope {p} too shallow for a power law, dropping the tail");
                    return Self::zero(edge);
                }
                kind = TailKind::PowerLaw;
                a = f_e;
                b = p;
                Box::new(move |r: f64| f_e * (r / r_e).powf(p))
            }
        };
        // Share of the log-variance of f over the last decade explained by g.
        let logs: Vec<(f64, f64)> = (0..x.len())
            .filter(|&i| x[i] * sign >= r_e / 10.0 && f[i] > noise)
            .map(|i| (f[i].ln(), g(x[i].abs()).ln()))
            .collect();
        let r_squared = if logs.len() >= 3 {
            let m = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
            let tot: f64 = logs.iter().map(|p| (p.0 - m).powi(2)).sum();
            let res: f64 = logs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
            if tot > 0.0 { 1.0 - res / tot } else { 1.0 }
        } else {
            1.0
        };
        let dln_r = std::f64::consts::LN_10 / TAIL_PER_DECADE as f64;
        let n = TAIL_PER_DECADE * TAIL_DECADES + 1;
        let ln_r0 = r_e.ln();
        let vals: Vec<f64> = (0..n).map(|i| g((ln_r0 + i as f64 * dln_r).exp())).collect();
        let ln_g: Vec<f64> = vals.iter().map(|v| if *v > 0.0 { v.ln() } else { LN_ZERO }).collect();
        let final_slope = if ln_g[n - 1] > LN_ZERO && ln_g[n - 2] > LN_ZERO {
            (ln_g[n - 1] - ln_g[n - 2]) / dln_r
        } else {
            STEEP
        };
        // Mass beyond the last sample from the final power slope.
        let r_last = (ln_r0 + (n - 1) as f64 * dln_r).exp();
        let mut acc = if final_slope < -1.0 && vals[n - 1] > 0.0 {
            vals[n - 1] * r_last / (-final_slope - 1.0)
        } else {
            0.0
        };
        let mut beyond = vec![0.0; n];
        beyond[n - 1] = acc;
        for i in (0..n - 1).rev() {
            let r0 = (ln_r0 + i as f64 * dln_r).exp();
            acc += power_piece(vals[i], vals[i + 1], r0, dln_r, 0.0);
            beyond[i] = acc;
        }
        TailModel {
            kind,
            edge,
            a,
            b,
            c,
            mass: beyond[0],
            r_squared,
            ln_r0,
            dln_r,
            ln_g,
            beyond,
            final_slope,
        }
    }

    fn position(&self, r: f64) -> (usize, f64) {
        let u = (r.ln() - self.ln_r0) / self.dln_r;
        let i = (u.floor().max(0.0) as usize).min(self.ln_g.len() - 2);
        (i, u - i as f64)
    }

    /// Tail density at `x` (beyond the edge).
    pub fn value(&self, x: f64) -> f64 {
        if self.kind == TailKind::Zero || x * self.edge <= 0.0 {
            return 0.0;
        }
        let r = x.abs();
        let (i, w) = self.position(r);
        let n = self.ln_g.len();
        if w > 1.0 && i == n - 2 {
            if self.final_slope <= STEEP {
                return 0.0;
            }
            let r_last = (self.ln_r0 + (n - 1) as f64 * self.dln_r).exp();
            return self.ln_g[n - 1].exp() * (r / r_last).powf(self.final_slope);
        }
        let (g0, g1) = (self.ln_g[i], self.ln_g[i + 1]);
        if g0 <= LN_ZERO || g1 <= LN_ZERO {
            return if w < 0.5 { g0.exp() } else { g1.exp() };
        }
        (g0 + w * (g1 - g0)).exp()
    }

    /// Derivative of the tail density in `x`.
    pub fn derivative(&self, x: f64) -> f64 {
        let v = self.value(x);
        if v == 0.0 {
            return 0.0;
        }
        let r = x.abs();
        let (i, w) = self.position(r);
        let n = self.ln_g.len();
        let slope = if w > 1.0 && i == n - 2 {
            self.final_slope
        } else {
            (self.ln_g[i + 1] - self.ln_g[i]) / self.dln_r
        };
        v * slope / r * x.signum()
    }

    /// Mass of the tail beyond `x`.
    pub fn mass_beyond(&self, x: f64) -> f64 {
        if self.kind == TailKind::Zero {
            return 0.0;
        }
        let r = x.abs();
        let (i, w) = self.position(r);
        let n = self.ln_g.len();
        if w > 1.0 && i == n - 2 {
            return if self.final_slope < -1.0 {
                self.value(x) * r / (-self.final_slope - 1.0)
            } else {
                0.0
            };
        }
        let w = w.max(0.0);
        let r0 = (self.ln_r0 + i as f64 * self.dln_r).exp();
        let (g0, g1) = (self.ln_g[i].exp(), self.ln_g[i + 1].exp());
        self.beyond[i + 1] + power_piece(g0, g1, r0, self.dln_r, w)
    }
}

/// Least-squares fit of `v ≈ a + b u + c u²`, accepted when the fitted
/// ratio stays positive on `u ∈ [0, 1]` and `a ≥ 0`. Falls back to a
/// straight line when the quadratic is rejected.
fn fit_ratio(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let positive = |a: f64, b: f64, c: f64| {
        a >= 0.0 && (0..=20).all(|i| {
            let u = i as f64 / 20.0;
            a + u * (b + u * c) > 0.0
        })
    };
    if pts.len() >= 6 {
        let mut m = [[0.0; 3]; 3];
        let mut r = [0.0; 3];
        for &(u, v) in pts {
            let basis = [1.0, u, u * u];
            for i in 0..3 {
                r[i] += basis[i] * v;
                for j in 0..3 {
                    m[i][j] += basis[i] * basis[j];
                }
            }
        }
        if let Some([a, b, c]) = solve3(m, r) {
            if positive(a, b, c) {
                return Some((a, b, c));
            }
        }
    }
    if pts.len() >= 3 {
        let n = pts.len() as f64;
        let mu = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let suu: f64 = pts.iter().map(|p| (p.0 - mu).powi(2)).sum();
        let suv: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
        if suu > 0.0 {
            let b = suv / suu;
            let a = mv - b * mu;
            if positive(a, b, 0.0) {
                return Some((a, b, 0.0));
            }
        }
    }
    None
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let p = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[p][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, p);
        r.swap(col, p);
        for row in col + 1..3 {
            let k = m[row][col] / m[col][col];
            for j in col..3 {
                m[row][j] -= k * m[col][j];
            }
            r[row] -= k * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| m[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

/// `∫ g` over the part `[r0 e^{w h}, r0 e^{h}]` of a segment on which
/// `ln g` is linear in `ln r` with end values `g0`, `g1`.
fn power_piece(g0: f64, g1: f64, r0: f64, h: f64, w: f64) -> f64 {
    if !(g0 > 0.0 && g1 > 0.0) {
        return 0.0;
    }
    let q = (g1 / g0).ln() / h + 1.0;
    let lo = w * h;
    let x = q * (h - lo);
    let core = if x.abs() < 1e-8 { (h - lo) * (1.0 + x / 2.0) } else { x.exp_m1() / q };
    g0 * r0 * (q * lo).exp() * core
}

/// Diagnostics recorded while building a table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub lambda_max: f64,
    pub base_period: f64,
    pub clipped_nodes: usize,
    /// Approximate mass removed by clipping negative values.
    pub clipped_mass: f64,
    /// Most negative raw value relative to the peak.
    pub min_relative: f64,
    pub peak: f64,
    pub total_mass: f64,
    /// Largest deviation of the interpolant from direct inversion, when checked.
    pub interpolation_error: Option<f64>,
}

/// A density on a grid with Hermite interpolation and tails. The stored
/// nodes describe a base variable `X`; the table represents the law of
/// `scale·X + loc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    x: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
    pub left: TailModel,
    pub right: TailModel,
    pub meta: TableMeta,
    cum: Vec<f64>,
    loc: f64,
    scale: f64,
}

fn hermite(h: f64, t: f64, f0: f64, d0: f64, f1: f64, d1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * f0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * f1
        + (t3 - t2) * h * d1;
    let dv = (6.0 * t2 - 6.0 * t) * (f0 - f1) / h + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1;
    (v, dv)
}

fn hermite_integral(h: f64, tau: f64, f0: f64, d0: f64, f1: f64, d1: f64) -> f64 {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    h * ((t4 / 2.0 - t3 + tau) * f0
        + (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0) * h * d0
        + (-t4 / 2.0 + t3) * f1
        + (t4 / 4.0 - t3 / 3.0) * h * d1)
}

impl DensityTable {
    /// Builds a table from node values and slopes. `ell` is the leading tail
    /// (Lévy density) and `alpha` its index; either may be absent.
    pub fn from_nodes<L: Fn(f64) -> f64>(
        x: Vec<f64>,
        mut f: Vec<f64>,
        mut df: Vec<f64>,
        alpha: Option<f64>,
        ell: &L,
        mut meta: TableMeta,
    ) -> Result<Self> {
        let n = x.len();
        if n < 4 || f.len() != n || df.len() != n {
            return Err(LevyError::param("grid", "need at least 4 nodes with matching values"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LevyError::param("grid", "abscissas must be strictly increasing"));
        }
        let peak = f.iter().cloned().fold(0.0, f64::max);
        meta.peak = peak;
        meta.min_relative = f.iter().cloned().fold(0.0, f64::min) / peak;
        for i in 0..n {
            if f[i] < 0.0 {
                let w = 0.5 * (x[(i + 1).min(n - 1)] - x[i.saturating_sub(1)]);
                meta.clipped_mass += -f[i] * w;
                meta.clipped_nodes += 1;
                f[i] = 0.0;
                df[i] = 0.0;
            }
        }
        if meta.clipped_nodes > 0 && meta.min_relative < -1e-9 {
            log::warn!(
                "clipped {} negative nodes (worst {:.2e} of peak)",
                meta.clipped_nodes,
                meta.min_relative
            );
        }
        let noise = 1e-10 * peak;
        let left = TailModel::fit(&x, &f, &df, false, noise, alpha, ell);
        let right = TailModel::fit(&x, &f, &df, true, noise, alpha, ell);
        let mut cum = Vec::with_capacity(n);
        let mut acc = left.mass;
        cum.push(acc);
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            acc += hermite_integral(h, 1.0, f[i], df[i], f[i + 1], df[i + 1]);
            cum.push(acc);
        }
        meta.total_mass = acc + right.mass;
        Ok(DensityTable {
            x,
            f,
            df,
            left,
            right,
            meta,
            cum,
            loc: 0.0,
            scale: 1.0,
        })
    }

    fn to_base(&self, y: f64) -> f64 {
        (y - self.loc) / self.scale
    }

    fn cell(&self, x: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= x);
        i.saturating_sub(1).min(self.x.len() - 2)
    }

    pub fn lower(&self) -> f64 {
        self.x[0] * self.scale + self.loc
    }

    pub fn upper(&self) -> f64 {
        self.x[self.x.len() - 1] * self.scale + self.loc
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower() && y <= self.upper()
    }

    /// Grid abscissas in the table's coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        self.x.iter().map(|v| v * self.scale + self.loc).collect()
    }

    fn eval_base(&self, x: f64) -> (f64, f64) {
        if x < self.x[0] {
            return (self.left.value(x), self.left.derivative(x));
        }
        if x > self.x[self.x.len() - 1] {
            return (self.right.value(x), self.right.derivative(x));
        }
        let i = self.cell(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (v, dv) = hermite(h, t, self.f[i], self.df[i], self.f[i + 1], self.df[i + 1]);
        (v.max(0.0), dv)
    }

    /// Density and its derivative at `y`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let (v, dv) = self.eval_base(self.to_base(y));
        (v / self.scale, dv / (self.scale * self.scale))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    /// `ln φ(x)`, floored at `ln 1e-300`; the flag reports the floor.
    pub fn ln_value(&self, x: f64) -> (f64, bool) {
        let v = self.value(x);
        if v < LOG_FLOOR {
            (LOG_FLOOR.ln(), true)
        } else {
            (v.ln(), false)
        }
    }

    /// `φ'(x)/φ(x)`, or `None` where the density is at the floor.
    pub fn log_derivative(&self, x: f64) -> Option<f64> {
        let (v, dv) = self.eval(x);
        (v >= LOG_FLOOR).then(|| dv / v)
    }

    /// Unnormalized distribution function.
    pub fn cdf(&self, y: f64) -> f64 {
        let x = self.to_base(y);
        if x < self.x[0] {
            return self.left.mass_beyond(x);
        }
        if x > self.x[self.x.len() - 1] {
            return self.meta.total_mass - self.right.mass_beyond(x);
        }
        let i = self.cell(x);
        let h = self.x[i + 1] - self.x[i];
        let tau = (x - self.x[i]) / h;
        self.cum[i] + hermite_integral(h, tau, self.f[i], self.df[i], self.f[i + 1], self.df[i + 1])
    }

    pub fn total_mass(&self) -> f64 {
        self.meta.total_mass
    }

    /// Law of `scale·Y + shift` where `Y` follows this table.
    pub fn affine(&self, scale: f64, shift: f64) -> DensityTable {
        assert!(scale > 0.0);
        let mut out = self.clone();
        out.scale = self.scale * scale;
        out.loc = self.loc * scale + shift;
        out.meta.peak = self.meta.peak / scale;
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,density,derivative,cdf")?;
        let (a, b) = (self.scale, self.loc);
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{},{}", self.x[i] * a + b, self.f[i] / a, self.df[i] / (a * a), self.cum[i])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// A signed function on a grid with Hermite interpolation, zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    x: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl CurveTable {
    pub fn new(x: Vec<f64>, v: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || v.len() != x.len() || dv.len() != x.len() {
            return Err(LevyError::param("grid", "need at least 2 nodes with matching values"));
        }
        Ok(CurveTable { x, v, dv })
    }

    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return (0.0, 0.0);
        }
        let i = self.x.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let h = self.x[i + 1] - self.x[i];
        hermite(h, (x - self.x[i]) / h, self.v[i], self.dv[i], self.v[i + 1], self.dv[i + 1])
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }
}

/// Inverts `e^{ψ}` at the given points, returning the density, its
/// derivative and the frequency plan. Aliased images are removed with the
/// exponent's Lévy density.
pub fn invert_points<E: Exponent + ?Sized>(
    exp: &E,
    xs: &[f64],
    opts: &InversionOptions,
) -> Result<(Vec<f64>, Vec<f64>, FrequencyPlan)> {
    let plan = FrequencyPlan::for_exponent(exp, opts)?;
    let (mut ch, periods) = invert_channels(xs, &plan, 2, |l, buf| {
        let e = exp.psi(l)?.exp();
        buf[0] = e;
        buf[1] = Complex64::new(0.0, -l) * e;
        Ok(())
    })?;
    let ell = |y: f64| exp.levy_density(y);
    let ell2 = |y: f64| exp.second_tail(y);
    if opts.alias_images > 0 {
        let alpha = exp.tail_index();
        let second = alpha.is_some_and(|_| exp.second_tail(1.0) != 0.0);
        for (i, &x) in xs.iter().enumerate() {
            let (mut v, mut d) = image_sum(&ell, x, periods[i], opts.alias_images, alpha);
            if second {
                let (v2, d2) = image_sum(&ell2, x, periods[i], opts.alias_images, alpha.map(|a| 2.0 * a));
                v += v2;
                d += d2;
            }
            ch[0][i] -= v;
            ch[1][i] -= d;
        }
    }
    let df = ch.pop().unwrap_or_default();
    let f = ch.pop().unwrap_or_default();
    Ok((f, df, plan))
}

/// Density of the law with exponent `exp` tabulated on `xs`.
///
/// Where the inverted values sink to the inversion noise (below
/// [`NOISE_CUT`] of the peak) the grid is cut and the tail model takes over.
pub fn invert_to_density<E: Exponent + ?Sized>(exp: &E, xs: &[f64], opts: &InversionOptions) -> Result<DensityTable> {
    let (f, df, plan) = invert_points(exp, xs, opts)?;
    let meta = TableMeta {
        lambda_max: plan.lambda_max,
        base_period: plan.base_period,
        ..Default::default()
    };
    let (lo, hi) = significant_range(&f);
    DensityTable::from_nodes(
        xs[lo..hi].to_vec(),
        f[lo..hi].to_vec(),
        df[lo..hi].to_vec(),
        exp.tail_index(),
        &|y| exp.levy_density(y),
        meta,
    )
}

/// Relative level below which inverted values are treated as noise.
pub const NOISE_CUT: f64 = 1e-10;

/// Index range around the peak where `f` stays above `NOISE_CUT·peak`.
pub(crate) fn significant_range(f: &[f64]) -> (usize, usize) {
    let n = f.len();
    let ip = (0..n).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap_or(0);
    let cut = NOISE_CUT * f[ip];
    let mut hi = ip;
    while hi + 1 < n && f[hi + 1] >= cut {
        hi += 1;
    }
    let mut lo = ip;
    while lo > 0 && f[lo - 1] >= cut {
        lo -= 1;
    }
    // Keep a few nodes even for extremely narrow laws.
    let lo = lo.min(ip.saturating_sub(2));
    let hi = (hi + 1).max((ip + 3).min(n));
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::exponent::FnExponent;
    use std::f64::consts::PI;

    struct Cauchy;

    impl Exponent for Cauchy {
        fn psi(&self, l: f64) -> Result<Complex64> {
            Ok(Complex64::new(-l.abs(), 0.0))
        }
        fn levy_density(&self, x: f64) -> f64 {
            1.0 / (PI * x * x)
        }
        fn tail_index(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    fn cauchy() -> Cauchy {
        Cauchy
    }

    #[test]
    fn grid_shape() {
        let g = GridSpec::new(20.0, 0.01, 1.01, 2000.0).unwrap();
        let xs = g.points();
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(xs[0], -2000.0);
        assert_eq!(*xs.last().unwrap(), 2000.0);
        assert!(xs.iter().any(|&x| x == 0.0));
        assert!(xs.len() < 5000);
    }

    #[test]
    fn cauchy_table_matches_closed_form() {
        let xs = GridSpec::new(20.0, 0.01, 1.01, 2000.0).unwrap().points();
        let tab = invert_to_density(&cauchy(), &xs, &InversionOptions::default()).unwrap();
        for &x in &[-10.0, -3.3, 0.0, 0.005, 1.0, 7.77, 150.0, 1999.0] {
            let exact = 1.0 / (PI * (1.0 + x * x));
            assert!((tab.value(x) - exact).abs() < 1e-9, "{x}: {}", tab.value(x) - exact);
            let dexact = -2.0 * x / (PI * (1.0 + x * x).powi(2));
            assert!((tab.derivative(x) - dexact).abs() < 1e-8, "{x}");
        }
        // Tail: the Cauchy density is exactly ℓ(x)·(x²/(1+x²)).
        let x = 1e5;
        let exact = 1.0 / (PI * (1.0 + x * x));
        assert!((tab.value(x) / exact - 1.0).abs() < 1e-4, "{}", tab.value(x) / exact);
        assert!((tab.total_mass() - 1.0).abs() < 1e-7, "{}", tab.total_mass());
        assert!((tab.cdf(0.0) - 0.5).abs() < 1e-7);
        let c = tab.cdf(1.0);
        assert!((c - (0.5 + 1f64.atan() / PI)).abs() < 1e-7, "{c}");
        assert!((tab.cdf(-5000.0) - (0.5 + (-5000f64).atan() / PI)).abs() < 1e-8);
        assert_eq!(tab.left.kind, TailKind::LevyRatio);
        assert!(tab.right.r_squared > 0.999);
    }

    #[test]
    fn affine_map_rescales() {
        let xs = GridSpec::new(20.0, 0.01, 1.01, 200.0).unwrap().points();
        let tab = invert_to_density(&cauchy(), &xs, &InversionOptions::default()).unwrap();
        let t2 = tab.affine(2.0, 1.0);
        for &y in &[-7.0, 1.0, 3.0, 1000.0] {
            let x: f64 = (y - 1.0) / 2.0;
            assert!((t2.value(y) - tab.value(x) / 2.0).abs() < 1e-12);
        }
        assert!((t2.total_mass() - tab.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn log_floor_is_flagged() {
        let g = FnExponent {
            psi: |l: f64| Complex64::new(-l * l / 2.0, 0.0),
            tail: |_x: f64| 0.0,
        };
        let xs = GridSpec::new(20.0, 0.05, 1.05, 40.0).unwrap().points();
        let tab = invert_to_density(&g, &xs, &InversionOptions::default()).unwrap();
        // The grid is cut where the values reach noise level; the steep
        // power tail beyond carries no visible mass.
        assert!(tab.upper() < 8.0);
        assert!(tab.right.mass < 1e-11);
        assert!(tab.ln_value(1e9).1);
        let (lv, flag) = tab.ln_value(1.0);
        assert!(!flag);
        assert!((lv - (-0.5 - 0.5 * (2.0 * PI).ln())).abs() < 1e-9);
        assert!((tab.total_mass() - 1.0).abs() < 1e-10);
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,density"));
        let back: DensityTable = serde_json::from_str(&tab.to_json().unwrap()).unwrap();
        assert_eq!(back.value(0.3), tab.value(0.3));
    }
}
