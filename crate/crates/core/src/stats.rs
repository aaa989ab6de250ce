//! Small statistical toolkit used by the Monte-Carlo checks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Small-x form converges faster there.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut s = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            s += (y * j * j).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d.max(((i + 1) as f64 / nf - c).abs()).max((c - i as f64 / nf).abs());
    }
    let sn = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
        n,
    }
}

/// Two-sample Kolmogorov–Smirnov distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d),
        n: xa.len() + xb.len(),
    }
}

/// Pearson chi-square goodness of fit; returns (statistic, p-value).
pub fn chi_square(observed: &[f64], expected: &[f64], fitted_params: usize) -> (f64, f64) {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (observed.len() - 1 - fitted_params).max(1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe::default();
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    MeanSe {
        mean,
        se: (var / nf).sqrt(),
        sd: var.sqrt(),
        n,
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Sample covariance of 2-vectors.
pub fn covariance2(xs: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let n = xs.len() as f64;
    let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n;
    let mut c = [[0.0; 2]; 2];
    for x in xs {
        let d = [x[0] - m0, x[1] - m1];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    c
}

pub fn frobenius(m: &[[f64; 2]; 2]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||a - b||_F / ||b||_F`.
pub fn relative_frobenius(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let mut d = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            d[i][j] = a[i][j] - b[i][j];
        }
    }
    frobenius(&d) / frobenius(b)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Weighted least squares of `y` on `x` with known standard errors of `y`.
pub fn weighted_slope(x: &[f64], y: &[f64], y_se: &[f64]) -> SlopeFit {
    let w: Vec<f64> = y_se.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    SlopeFit {
        slope,
        slope_se: (sw / det).sqrt(),
        intercept,
    }
}

/// Two-sample energy statistic (Székely–Rizzo) for 2-D samples with a
/// permutation p-value.
pub fn energy_test<R: Rng>(a: &[[f64; 2]], b: &[[f64; 2]], permutations: usize, rng: &mut R) -> (f64, f64) {
    let pooled: Vec<[f64; 2]> = a.iter().chain(b.iter()).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let mut dist = vec![0.0f32; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ((pooled[i][0] - pooled[j][0]).powi(2) + (pooled[i][1] - pooled[j][1]).powi(2)).sqrt();
            dist[i * n + j] = d as f32;
            dist[j * n + i] = d as f32;
        }
    }
    let stat_for = |labels: &[bool]| -> f64 {
        let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            let row = &dist[i * n..(i + 1) * n];
            for j in (i + 1)..n {
                let d = row[j] as f64;
                match (labels[i], labels[j]) {
                    (true, true) => aa += d,
                    (false, false) => bb += d,
                    _ => ab += d,
                }
            }
        }
        let nb = (n - na) as f64;
        let naf = na as f64;
        let e = 2.0 * ab / (naf * nb) - 2.0 * aa / (naf * naf) - 2.0 * bb / (nb * nb);
        e * naf * nb / (naf + nb)
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let observed = stat_for(&labels);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if stat_for(&labels) >= observed {
            exceed += 1;
        }
    }
    (observed, (exceed + 1) as f64 / (permutations + 1) as f64)
}
