//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature for real and
//! complex integrands, plus a few panel helpers for singular and
//! slowly decaying integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;

use crate::error::{LevyError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_361_870,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Values that can be integrated: real or complex.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_evals: 1_000_000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

/// One 21-point Kronrod rule on `[a, b]`; returns (kronrod, |kronrod - gauss|).
pub fn gk21<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[10];
    let mut gauss = T::zero();
    for j in 0..10 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let kron = kron * half;
    let gauss = gauss * half;
    let err = (kron - gauss).magnitude();
    (kron, err)
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over the panels delimited by `points`
/// (sorted, at least two entries).
pub fn integrate_panels<T, F>(mut f: F, points: &[f64], opts: &QuadOptions) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if points.len() < 2 {
        return Ok(QuadResult {
            value: T::zero(),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::with_capacity(points.len() * 4);
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut evals = 0usize;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk21(&mut f, w[0], w[1]);
        evals += 21;
        total += v;
        total_err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if total_err <= target {
            break;
        }
        if evals + 42 > opts.max_evals {
            return Err(LevyError::Quadrature {
                evaluations: evals,
                error: total_err,
            });
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval exhausted in floating point; accept it as is.
            heap.push(Segment { error: 0.0, ..seg });
            total_err -= seg.error;
            continue;
        }
        let (v1, e1) = gk21(&mut f, seg.a, mid);
        let (v2, e2) = gk21(&mut f, mid, seg.b);
        evals += 42;
        total = total - seg.value + v1 + v2;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the accumulated rounding of the running updates.
    let mut value = T::zero();
    let mut error = 0.0;
    for seg in heap.iter() {
        value += seg.value;
        error += seg.error;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations: evals,
    })
}

pub fn integrate<T, F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if b < a {
        let r = integrate_panels(f, &[b, a], opts)?;
        return Ok(QuadResult {
            value: r.value * -1.0,
            ..r
        });
    }
    integrate_panels(f, &[a, b], opts)
}

/// Breakpoints `a = p0 < p1 < ... = b` with geometric growth (ratio `ratio`)
/// for `0 < a < b`; each panel is further split so that it holds at most
/// `max_width` of length.
pub fn geometric_points(a: f64, b: f64, ratio: f64, max_width: f64) -> Vec<f64> {
    assert!(a > 0.0 && b > a && ratio > 1.0);
    let mut pts = vec![a];
    let mut x = a;
    while x < b {
        let next = (x * ratio).min(b);
        let width = next - x;
        if width > max_width {
            let k = (width / max_width).ceil() as usize;
            for i in 1..k {
                pts.push(x + width * i as f64 / k as f64);
            }
        }
        pts.push(next);
        x = next;
    }
    pts
}

/// Fixed 10-point Gauss–Legendre on `[a, b]` (used for short, smooth panels).
pub fn gauss_legendre10<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for j in 0..5 {
        let dx = half * XGK[2 * j + 1];
        s += WG[j] * (f(center - dx) + f(center + dx));
    }
    s * half
}
