//! Monte-Carlo diagnostics of the LAN expansion
//! `log Z_n(θ0, θ0 + r(n)v) = vᵀΔ_n - ½vᵀΣv + Ψ_n`, the Lyapunov-type
//! statistic behind condition A3, and the sweep over a nuisance class.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{default_grid, density_limit, grid_for, CharExponent, DensityTable, InversionOptions, NuisanceSpec};
use crate::error::{LevyError, Result};
use crate::levy_model::{LevyMeasureSpec, Taper, Theta};
use crate::malliavin::{default_eps, functionals_with_z, modified_weight, Patch, SmallJumpMoments};
use crate::rng::{derive_seed, stream, Purpose};
use crate::score_fisher::{fisher_matrix, rate_matrices, FisherMatrix, IncrementModel, RateMatrices};
use crate::simulator::{sample_path, SamplingScheme, SmallJumps, ZMethod};
use crate::stats::{covariance2, energy_test, ks_one_sample, mean_se, median, normal_cdf, relative_frobenius};

/// Pass thresholds; the paper gives no rates, so these are engineering
/// choices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanThresholds {
    /// Relative Frobenius distance of `Cov Δ_n` from `Σ(θ0)`.
    pub covariance: f64,
    /// The same for the worst member of a nuisance class.
    pub uniform_covariance: f64,
    /// Minimum KS p-value per component of `Δ_n`.
    pub normality_p: f64,
    /// Bound on the median `|Ψ_n|` at the largest `n`.
    pub psi_median: f64,
    /// Minimum correlation of `Δ_n` across nuisance members.
    pub correlation: f64,
    /// Bound on `n^{-1/2} h^{1/α-1}` for `α > 1`.
    pub rate: f64,
}

impl Default for LanThresholds {
    fn default() -> Self {
        LanThresholds {
            covariance: 0.10,
            uniform_covariance: 0.15,
            normality_p: 0.01,
            psi_median: 0.15,
            correlation: 0.9,
            rate: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanExperimentConfig {
    pub spec: LevyMeasureSpec,
    pub theta0: Theta,
    pub nuisances: Vec<NuisanceSpec>,
    pub schemes: Vec<SamplingScheme>,
    pub v_list: Vec<[f64; 2]>,
    pub replications: usize,
    pub seed: u64,
    pub delta1: f64,
    /// Ledger threshold as a fraction of `h^{1/α}` for tapered measures.
    pub eps_factor: f64,
    pub energy_permutations: usize,
    pub thresholds: LanThresholds,
}

impl LanExperimentConfig {
    pub fn new(spec: LevyMeasureSpec, theta0: Theta, schemes: Vec<SamplingScheme>, v_list: Vec<[f64; 2]>) -> Self {
        LanExperimentConfig {
            delta1: spec.delta / 2.0,
            spec,
            theta0,
            nuisances: vec![NuisanceSpec::Zero],
            schemes,
            v_list,
            replications: 1000,
            seed: 1,
            eps_factor: 0.1,
            energy_permutations: 199,
            thresholds: LanThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.replications < 100 {
            return Err(LevyError::param("replications", "must be at least 100"));
        }
        if self.schemes.is_empty() || self.nuisances.is_empty() {
            return Err(LevyError::param("schemes", "need at least one scheme and one nuisance"));
        }
        for nu in &self.nuisances {
            nu.validate()?;
            nu.check_compatible(&self.spec)?;
        }
        for s in &self.schemes {
            SamplingScheme::new(s.n, s.h)?;
            let r = rate_matrices(&self.spec, s)?;
            for v in &self.v_list {
                perturbed(&self.theta0, &r, *v)?;
            }
        }
        if !(self.delta1 > 0.0 && self.delta1 < self.spec.delta) {
            return Err(LevyError::param("delta1", "must lie in (0, delta)"));
        }
        if !(self.eps_factor > 0.0 && self.eps_factor <= 1.0) {
            return Err(LevyError::param("eps_factor", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn method(&self, scheme: &SamplingScheme) -> ZMethod {
        if self.spec.taper == Taper::None {
            ZMethod::Exact
        } else {
            ZMethod::Ledger {
                eps: self.eps_factor * scheme.h.powf(1.0 / self.spec.alpha),
                small: SmallJumps::Gaussian,
            }
        }
    }
}

/// `θ0 + r(n)v`, which must keep `γ > 0`.
pub fn perturbed(theta0: &Theta, rates: &RateMatrices, v: [f64; 2]) -> Result<Theta> {
    let d = rates.apply(v);
    Theta::new(theta0.beta + d[0], theta0.gamma + d[1])
        .map_err(|_| LevyError::param("v_list", "θ0 + r(n)v leaves the parameter set"))
}

/// Increment laws under `θ0` and under each local alternative.
pub struct LanModels {
    pub scheme: SamplingScheme,
    pub rates: RateMatrices,
    pub fisher: FisherMatrix,
    pub null: IncrementModel,
    /// `None` for `v = 0`.
    pub alternatives: Vec<([f64; 2], Option<IncrementModel>)>,
}

impl LanModels {
    /// `limit` is the table of `φ_{α,C±}`, reused for untapered measures
    /// without nuisance.
    pub fn build(
        spec: &LevyMeasureSpec,
        theta0: &Theta,
        nuisance: &NuisanceSpec,
        scheme: &SamplingScheme,
        v_list: &[[f64; 2]],
        fisher: &FisherMatrix,
        limit: Option<&DensityTable>,
        opts: &InversionOptions,
    ) -> Result<Self> {
        let rates = rate_matrices(spec, scheme)?;
        let h = scheme.h;
        let grid = grid_for(spec, h).points();
        let shared = nuisance.is_zero();
        let (null, base) = match limit {
            Some(phi) if shared && spec.taper == Taper::None => (IncrementModel::from_limit(spec, phi, theta0, h)?, None),
            _ => {
                let base = CharExponent::at_time(spec, h)?;
                let m = IncrementModel::with_base(&base, theta0, nuisance, h, &grid, opts)?;
                (m, Some(base))
            }
        };
        let mut alternatives = Vec::with_capacity(v_list.len());
        for &v in v_list {
            if v == [0.0, 0.0] {
                alternatives.push((v, None));
                continue;
            }
            let th = perturbed(theta0, &rates, v)?;
            let m = if shared {
                null.at_theta(&th)?
            } else {
                let base = base.as_ref().expect("base exponent built for nuisance models");
                IncrementModel::with_base(base, &th, nuisance, h, &grid, opts)?
            };
            alternatives.push((v, Some(m)));
        }
        Ok(LanModels {
            scheme: *scheme,
            rates,
            fisher: *fisher,
            null,
            alternatives,
        })
    }
}

/// `Σ_k [ln p_h(θ1; ΔX_k) - ln p_h(θ0; ΔX_k)]`.
pub fn loglik_ratio(increments: &[f64], null: &IncrementModel, alt: &IncrementModel) -> Result<f64> {
    let mut s = 0.0;
    for &x in increments {
        s += alt.log_density(x)? - null.log_density(x)?;
    }
    Ok(s)
}

/// `Δ_n = Σ_k r(n)ᵀ g_h(θ0; ΔX_k)`.
pub fn delta_n(increments: &[f64], null: &IncrementModel, rates: &RateMatrices) -> Result<[f64; 2]> {
    let mut acc = [0.0; 2];
    for &x in increments {
        let g = rates.transpose(null.score(x)?);
        acc[0] += g[0];
        acc[1] += g[1];
    }
    Ok(acc)
}

/// `Ψ_n = log-likelihood ratio - vᵀΔ_n + ½ vᵀΣv`.
pub fn remainder_psi(loglik: f64, delta: [f64; 2], v: [f64; 2], fisher: &FisherMatrix) -> f64 {
    loglik - (v[0] * delta[0] + v[1] * delta[1]) + 0.5 * fisher.quadratic(v)
}

/// `Δ_n`, and per alternative the log-likelihood ratio and `Ψ_n`, of one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub delta: [f64; 2],
    pub loglik: Vec<f64>,
    pub psi: Vec<f64>,
}

pub fn path_stats(increments: &[f64], models: &LanModels) -> Result<PathStats> {
    let delta = delta_n(increments, &models.null, &models.rates)?;
    let mut loglik = Vec::with_capacity(models.alternatives.len());
    let mut psi = Vec::with_capacity(models.alternatives.len());
    for (v, alt) in &models.alternatives {
        let l = match alt {
            Some(m) => loglik_ratio(increments, &models.null, m)?,
            None => 0.0,
        };
        loglik.push(l);
        psi.push(if alt.is_some() {
            remainder_psi(l, delta, *v, &models.fisher)
        } else {
            0.0
        });
    }
    Ok(PathStats { delta, loglik, psi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub alpha: f64,
    pub n: usize,
    pub h: f64,
    pub value: f64,
    pub threshold: f64,
    /// `α ≤ 1`, where the condition holds for every scheme.
    pub automatic: bool,
    pub pass: bool,
}

pub fn check_rate_condition(alpha: f64, scheme: &SamplingScheme, threshold: f64) -> RateVerdict {
    let value = scheme.rate_check(alpha);
    let automatic = alpha <= 1.0;
    RateVerdict {
        alpha,
        n: scheme.n,
        h: scheme.h,
        value,
        threshold,
        automatic,
        pass: automatic || value < threshold,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiSummary {
    pub v: [f64; 2],
    pub mean: f64,
    pub sd: f64,
    pub median_abs: f64,
    /// Share of paths with `|Ψ_n| > 0.5`.
    pub tail_fraction: f64,
}

/// Summary of one `(scheme, nuisance)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub h: f64,
    pub nuisance: NuisanceSpec,
    pub paths: usize,
    /// Paths dropped because some increment hit the density floor.
    pub flagged: usize,
    pub delta_mean: [f64; 2],
    pub delta_se: [f64; 2],
    pub delta_cov: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    pub cov_deviation: f64,
    /// Deviation from `Σ` with its off-diagonal replaced by the score
    /// cross-covariance [`FisherMatrix::cross`]; informational.
    pub cross_cov_deviation: f64,
    pub ks_p: [f64; 2],
    pub energy_p: f64,
    pub psi: Vec<PsiSummary>,
    pub cov_ok: bool,
    pub normal_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiTrend {
    pub nuisance: NuisanceSpec,
    pub v: [f64; 2],
    pub n: Vec<usize>,
    pub median_abs: Vec<f64>,
    pub decreasing: bool,
    pub below_bound: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalTrend {
    pub nuisance: NuisanceSpec,
    pub n: Vec<usize>,
    pub cov12: Vec<f64>,
    pub se: Vec<f64>,
    pub toward_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSummary {
    pub n: usize,
    pub worst_cov_deviation: f64,
    pub worst_nuisance: NuisanceSpec,
    pub worst_psi_median: f64,
    /// Smallest componentwise correlation of `Δ_n` with the first member.
    pub min_correlation: f64,
    pub weight_invariant: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanReport {
    pub config: LanExperimentConfig,
    pub fisher: FisherMatrix,
    pub rates: Vec<RateMatrices>,
    pub rate_checks: Vec<RateVerdict>,
    pub cells: Vec<CellSummary>,
    pub psi_trends: Vec<PsiTrend>,
    pub off_diagonal: Vec<OffDiagonalTrend>,
    pub uniform: Vec<UniformSummary>,
    pub passed: bool,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let pairs: Vec<[f64; 2]> = a.iter().zip(b).map(|(x, y)| [*x, *y]).collect();
    let c = covariance2(&pairs);
    c[0][1] / (c[0][0] * c[1][1]).sqrt()
}

/// Runs every `(scheme, nuisance)` cell of the experiment. Paths of the
/// same replication share their `Z` stream across nuisance members.
pub fn run_lan(config: &LanExperimentConfig, opts: &InversionOptions) -> Result<LanReport> {
    config.validate()?;
    let spec = &config.spec;
    let theta0 = &config.theta0;
    let fisher = fisher_matrix(spec.alpha, spec.c_plus, spec.c_minus, theta0.gamma)?;
    let limit = if spec.taper == Taper::None {
        Some(density_limit(spec, &default_grid(spec.alpha).points(), opts)?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..config.schemes.len()).collect();
    order.sort_by_key(|&i| config.schemes[i].n);

    let mut cells = Vec::new();
    let mut deltas: Vec<Vec<Vec<Option<[f64; 2]>>>> = Vec::new();
    let mut rates = Vec::new();
    let mut rate_checks = Vec::new();
    for &si in &order {
        let scheme = &config.schemes[si];
        rates.push(rate_matrices(spec, scheme)?);
        rate_checks.push(check_rate_condition(spec.alpha, scheme, config.thresholds.rate));
        let seed = derive_seed(config.seed, si as u64);
        let method = config.method(scheme);
        let mut per_nu = Vec::new();
        for nu in &config.nuisances {
            let models = LanModels::build(spec, theta0, nu, scheme, &config.v_list, &fisher, limit.as_ref(), opts)?;
            let stats: Vec<Option<PathStats>> = (0..config.replications as u64)
                .into_par_iter()
                .map(|r| -> Result<Option<PathStats>> {
                    let path = sample_path(spec, theta0, nu, scheme, method, seed, r)?;
                    match path_stats(&path.increments(), &models) {
                        Ok(s) => Ok(Some(s)),
                        Err(LevyError::NumericalZero { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            per_nu.push(stats.iter().map(|s| s.as_ref().map(|p| p.delta)).collect());
            cells.push(summarize(config, scheme, nu, &fisher, &stats, derive_seed(seed, 7))?);
        }
        deltas.push(per_nu);
    }

    let mut psi_trends = Vec::new();
    let mut off_diagonal = Vec::new();
    let nn = config.nuisances.len();
    for (j, nu) in config.nuisances.iter().enumerate() {
        let col: Vec<&CellSummary> = (0..order.len()).map(|i| &cells[i * nn + j]).collect();
        for (k, v) in config.v_list.iter().enumerate() {
            let med: Vec<f64> = col.iter().map(|c| c.psi[k].median_abs).collect();
            let trivial = *v == [0.0, 0.0];
            let decreasing = trivial || med.windows(2).all(|w| w[1] < w[0]);
            let below_bound = med.last().is_some_and(|&m| m < config.thresholds.psi_median);
            psi_trends.push(PsiTrend {
                nuisance: *nu,
                v: *v,
                n: col.iter().map(|c| c.n).collect(),
                median_abs: med,
                decreasing,
                below_bound,
                passed: decreasing && below_bound,
            });
        }
        let cov12: Vec<f64> = col.iter().map(|c| c.delta_cov[0][1]).collect();
        let se: Vec<f64> = col
            .iter()
            .map(|c| (c.delta_cov[0][0] * c.delta_cov[1][1] / c.paths as f64).sqrt())
            .collect();
        let toward_zero = (0..cov12.len()).all(|i| {
            cov12[i].abs() <= 2.0 * se[i] || (i > 0 && cov12[i].abs() <= cov12[i - 1].abs() + 2.0 * se[i])
        });
        off_diagonal.push(OffDiagonalTrend {
            nuisance: *nu,
            n: col.iter().map(|c| c.n).collect(),
            cov12,
            se,
            toward_zero,
        });
    }

    let mut uniform = Vec::new();
    if nn > 1 {
        for (i, &si) in order.iter().enumerate() {
            let scheme = &config.schemes[si];
            let row = &cells[i * nn..(i + 1) * nn];
            let worst = row
                .iter()
                .max_by(|a, b| a.cov_deviation.total_cmp(&b.cov_deviation))
                .expect("non-empty class");
            let worst_psi = row
                .iter()
                .flat_map(|c| c.psi.iter().map(|p| p.median_abs))
                .fold(0.0, f64::max);
            let mut min_corr = f64::INFINITY;
            for j in 1..nn {
                let (a, b): (Vec<[f64; 2]>, Vec<[f64; 2]>) = deltas[i][0]
                    .iter()
                    .zip(&deltas[i][j])
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .unzip();
                for k in 0..2 {
                    let xa: Vec<f64> = a.iter().map(|d| d[k]).collect();
                    let xb: Vec<f64> = b.iter().map(|d| d[k]).collect();
                    min_corr = min_corr.min(correlation(&xa, &xb));
                }
            }
            let weight_invariant = weight_invariance(
                spec,
                theta0,
                &config.nuisances,
                scheme.h,
                64,
                derive_seed(config.seed, si as u64),
            )?;
            let passed = worst.cov_deviation <= config.thresholds.uniform_covariance
                && min_corr > config.thresholds.correlation
                && weight_invariant;
            uniform.push(UniformSummary {
                n: scheme.n,
                worst_cov_deviation: worst.cov_deviation,
                worst_nuisance: worst.nuisance,
                worst_psi_median: worst_psi,
                min_correlation: min_corr,
                weight_invariant,
                passed,
            });
        }
    }

    let passed = cells.iter().all(|c| c.cov_ok && c.normal_ok)
        && psi_trends.iter().all(|t| t.passed)
        && uniform.iter().all(|u| u.passed);
    Ok(LanReport {
        config: config.clone(),
        fisher,
        rates,
        rate_checks,
        cells,
        psi_trends,
        off_diagonal,
        uniform,
        passed,
    })
}

fn summarize(
    config: &LanExperimentConfig,
    scheme: &SamplingScheme,
    nu: &NuisanceSpec,
    fisher: &FisherMatrix,
    stats: &[Option<PathStats>],
    seed: u64,
) -> Result<CellSummary> {
    let ok: Vec<&PathStats> = stats.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(LevyError::InsufficientSamples("every path hit the density floor".into()));
    }
    let d: Vec<[f64; 2]> = ok.iter().map(|s| s.delta).collect();
    let cov = covariance2(&d);
    let sigma = fisher.matrix();
    let mut mean = [0.0; 2];
    let mut se = [0.0; 2];
    let mut ks_p = [0.0; 2];
    for k in 0..2 {
        let x: Vec<f64> = d.iter().map(|v| v[k]).collect();
        let m = mean_se(&x);
        mean[k] = m.mean;
        se[k] = m.se;
        let sd = sigma[k][k].sqrt();
        ks_p[k] = ks_one_sample(&x, |y| normal_cdf(y / sd)).p_value;
    }
    let mut rng = stream(seed, Purpose::Auxiliary, 0);
    let reference: Vec<[f64; 2]> = (0..d.len())
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [a * sigma[0][0].sqrt(), b * sigma[1][1].sqrt()]
        })
        .collect();
    let (_, energy_p) = energy_test(&d, &reference, config.energy_permutations, &mut rng);
    let psi = config
        .v_list
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let p: Vec<f64> = ok.iter().map(|s| s.psi[k]).collect();
            let m = mean_se(&p);
            let abs: Vec<f64> = p.iter().map(|x| x.abs()).collect();
            PsiSummary {
                v: *v,
                mean: m.mean,
                sd: m.sd,
                median_abs: median(&abs),
                tail_fraction: abs.iter().filter(|&&a| a > 0.5).count() as f64 / abs.len() as f64,
            }
        })
        .collect();
    let cov_deviation = relative_frobenius(&cov, &sigma);
    let full = [[sigma[0][0], fisher.cross], [fisher.cross, sigma[1][1]]];
    let cross_cov_deviation = relative_frobenius(&cov, &full);
    let t = &config.thresholds;
    Ok(CellSummary {
        n: scheme.n,
        h: scheme.h,
        nuisance: *nu,
        paths: ok.len(),
        flagged: stats.len() - ok.len(),
        delta_mean: mean,
        delta_se: se,
        delta_cov: cov,
        sigma,
        cov_deviation,
        cross_cov_deviation,
        ks_p,
        energy_p,
        psi,
        cov_ok: cov_deviation <= t.covariance,
        normal_ok: ks_p.iter().all(|&p| p > t.normality_p),
    })
}

/// True when `Ξ_h` computed from paths that share a seed is bitwise the
/// same for every nuisance member.
pub fn weight_invariance(
    spec: &LevyMeasureSpec,
    theta: &Theta,
    nuisances: &[NuisanceSpec],
    h: f64,
    paths: usize,
    seed: u64,
) -> Result<bool> {
    let eps = default_eps(spec, h);
    let small = SmallJumpMoments::new(spec, eps)?;
    let scheme = SamplingScheme::new(1, h)?;
    let method = ZMethod::Ledger {
        eps,
        small: SmallJumps::Gaussian,
    };
    for r in 0..paths as u64 {
        let mut first = None;
        for nu in nuisances {
            let p = sample_path(spec, theta, nu, &scheme, method, seed, r)?;
            let ledger = p.ledger.as_ref().expect("ledger method keeps the ledger");
            let f = functionals_with_z(ledger, spec, theta, h, p.z[1], &small, Patch::Mean)?;
            let w = match modified_weight(&f, theta) {
                Ok(w) => Some((w.xi_beta.to_bits(), w.xi_gamma.to_bits())),
                Err(LevyError::Degenerate(_)) => None,
                Err(e) => return Err(e),
            };
            match first {
                None => first = Some(w),
                Some(ref a) if *a != w => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Point {
    pub n: usize,
    pub h: f64,
    /// `n^{-δ₁/2} E|r̃ᵀ g_h(θ0; ΔX)|^{2+δ₁}`.
    pub estimate: f64,
    pub se: f64,
    /// The moment without the `n^{-δ₁/2}` factor.
    pub moment: f64,
}

/// Monte-Carlo A3 statistic for one scheme from `mc_size` increments.
#[allow(clippy::too_many_arguments)]
pub fn a3_statistic(
    spec: &LevyMeasureSpec,
    theta0: &Theta,
    nuisance: &NuisanceSpec,
    scheme: &SamplingScheme,
    delta1: f64,
    mc_size: usize,
    seed: u64,
    opts: &InversionOptions,
) -> Result<A3Point> {
    if !(delta1 >= 0.0 && delta1 < spec.delta) {
        return Err(LevyError::param("delta1", "must lie in [0, delta)"));
    }
    let model = if spec.taper == Taper::None && nuisance.is_zero() {
        let phi = density_limit(spec, &default_grid(spec.alpha).points(), opts)?;
        IncrementModel::from_limit(spec, &phi, theta0, scheme.h)?
    } else {
        IncrementModel::new(spec, theta0, nuisance, scheme.h, opts)?
    };
    a3_with_model(&model, spec, scheme, delta1, mc_size, seed)
}

fn a3_with_model(
    model: &IncrementModel,
    spec: &LevyMeasureSpec,
    scheme: &SamplingScheme,
    delta1: f64,
    mc_size: usize,
    seed: u64,
) -> Result<A3Point> {
    // One long path supplies `mc_size` independent increments.
    let long = SamplingScheme::new(mc_size, scheme.h)?;
    let method = if spec.taper == Taper::None {
        ZMethod::Exact
    } else {
        ZMethod::Ledger {
            eps: default_eps(spec, scheme.h),
            small: SmallJumps::Gaussian,
        }
    };
    let path = sample_path(spec, &model.theta, &model.nuisance, &long, method, seed, 0)?;
    let q = 2.0 + delta1;
    let vals: Vec<f64> = path
        .increments()
        .par_iter()
        .filter_map(|&x| model.scaled_score(x).ok())
        .map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt().powf(q))
        .collect();
    let m = mean_se(&vals);
    let k = (scheme.n as f64).powf(-delta1 / 2.0);
    Ok(A3Point {
        n: scheme.n,
        h: scheme.h,
        estimate: k * m.mean,
        se: k * m.se,
        moment: m.mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Report {
    pub delta1: f64,
    pub points: Vec<A3Point>,
    /// Consecutive ratios with their standard errors.
    pub ratios: Vec<[f64; 2]>,
    /// `(n_{i+1}/n_i)^{-δ₁/2}`.
    pub expected_ratios: Vec<f64>,
    pub strictly_decreasing: bool,
    pub ratios_match: bool,
    pub passed: bool,
}

/// [`a3_statistic`] over a list of schemes with independent seeds.
pub fn a3_sweep(
    spec: &LevyMeasureSpec,
    theta0: &Theta,
    nuisance: &NuisanceSpec,
    schemes: &[SamplingScheme],
    delta1: f64,
    mc_size: usize,
    seed: u64,
    opts: &InversionOptions,
) -> Result<A3Report> {
    let mut sorted = schemes.to_vec();
    sorted.sort_by_key(|s| s.n);
    let limit_model = if spec.taper == Taper::None && nuisance.is_zero() {
        let phi = density_limit(spec, &default_grid(spec.alpha).points(), opts)?;
        Some(IncrementModel::from_limit(spec, &phi, theta0, 1.0)?)
    } else {
        None
    };
    let mut points = Vec::new();
    for (i, s) in sorted.iter().enumerate() {
        let seed_i = derive_seed(seed, i as u64);
        let p = match &limit_model {
            Some(m) => {
                let mut m = m.clone();
                m.t = s.h;
                m.kernels.t = s.h;
                m.norm = crate::densities::Normalization::new(spec, theta0, s.h)?;
                a3_with_model(&m, spec, s, delta1, mc_size, seed_i)?
            }
            None => a3_statistic(spec, theta0, nuisance, s, delta1, mc_size, seed_i, opts)?,
        };
        points.push(p);
    }
    let mut ratios = Vec::new();
    let mut expected = Vec::new();
    let mut matches = true;
    for w in points.windows(2) {
        let r = w[1].estimate / w[0].estimate;
        let se = r * ((w[1].se / w[1].estimate).powi(2) + (w[0].se / w[0].estimate).powi(2)).sqrt();
        let e = (w[1].n as f64 / w[0].n as f64).powf(-delta1 / 2.0);
        matches &= (r - e).abs() <= 2.0 * se;
        ratios.push([r, se]);
        expected.push(e);
    }
    let strictly_decreasing = points.windows(2).all(|w| w[1].estimate < w[0].estimate);
    Ok(A3Report {
        delta1,
        passed: strictly_decreasing && matches,
        points,
        ratios,
        expected_ratios: expected,
        strictly_decreasing,
        ratios_match: matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_models(n: usize, v: &[[f64; 2]]) -> (LevyMeasureSpec, LanModels) {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None).unwrap();
        let opts = InversionOptions::default();
        let scheme = SamplingScheme::unit_horizon(n).unwrap();
        let phi = density_limit(&spec, &default_grid(1.5).points(), &opts).unwrap();
        let fisher = fisher_matrix(1.5, 1.0, 1.0, 1.0).unwrap();
        let m = LanModels::build(
            &spec,
            &Theta::unit(),
            &NuisanceSpec::Zero,
            &scheme,
            v,
            &fisher,
            Some(&phi),
            &opts,
        )
        .unwrap();
        (spec, m)
    }

    #[test]
    fn loglik_identities() {
        let (spec, m) = stable_models(200, &[[0.0, 0.0], [0.6, 0.8], [-0.6, -0.8]]);
        let p = sample_path(&spec, &Theta::unit(), &NuisanceSpec::Zero, &m.scheme, ZMethod::Exact, 3, 0).unwrap();
        let inc = p.increments();
        let alt = m.alternatives[1].1.as_ref().unwrap();
        assert_eq!(loglik_ratio(&inc, &m.null, &m.null).unwrap(), 0.0);
        assert_eq!(loglik_ratio(&inc, &m.null, alt).unwrap(), -loglik_ratio(&inc, alt, &m.null).unwrap());
        let s = path_stats(&inc, &m).unwrap();
        assert_eq!(s.psi[0], 0.0);
        let quad = m.fisher.quadratic([0.6, 0.8]);
        let lhs = s.psi[1] + s.psi[2];
        let rhs = s.loglik[1] + s.loglik[2] + quad;
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn likelihood_ratio_is_a_martingale() {
        let (spec, m) = stable_models(10, &[[0.6, 0.8]]);
        let alt = m.alternatives[0].1.as_ref().unwrap();
        let vals: Vec<f64> = (0..10_000)
            .map(|r| {
                let p = sample_path(&spec, &Theta::unit(), &NuisanceSpec::Zero, &m.scheme, ZMethod::Exact, 5, r)
                    .unwrap();
                loglik_ratio(&p.increments(), &m.null, alt).unwrap().exp()
            })
            .collect();
        let s = mean_se(&vals);
        assert!((s.mean - 1.0).abs() < 3.0 * s.se, "{s:?}");
    }

    #[test]
    fn delta_matches_scaled_score_sum() {
        let (spec, m) = stable_models(100, &[]);
        let p = sample_path(&spec, &Theta::unit(), &NuisanceSpec::Zero, &m.scheme, ZMethod::Exact, 9, 0).unwrap();
        let inc = p.increments();
        let d = delta_n(&inc, &m.null, &m.rates).unwrap();
        let mut acc = [0.0; 2];
        for &x in &inc {
            let g = m.null.scaled_score(x).unwrap();
            acc[0] += g[0] / 10.0;
            acc[1] += g[1] / 10.0;
        }
        assert!((d[0] - acc[0]).abs() < 1e-10 && (d[1] - acc[1]).abs() < 1e-10);
    }

    #[test]
    fn rate_condition_examples() {
        let s = SamplingScheme::unit_horizon(2000).unwrap();
        assert!(check_rate_condition(0.8, &s, 0.2).pass);
        let v = check_rate_condition(1.5, &s, 0.2);
        assert!((v.value - 2000f64.powf(-1.0 / 6.0)).abs() < 1e-12);
        assert!(!v.pass);
        let fine = SamplingScheme::new(2000, 1.0 / 4e6).unwrap();
        let w = check_rate_condition(1.5, &fine, 0.2);
        assert!(w.value > 1.0 && !w.pass);
    }

    #[test]
    fn small_lan_run_is_deterministic_and_zero_v_is_trivial() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None).unwrap();
        let mut cfg = LanExperimentConfig::new(
            spec,
            Theta::unit(),
            vec![SamplingScheme::unit_horizon(100).unwrap()],
            vec![[0.0, 0.0]],
        );
        cfg.replications = 100;
        cfg.energy_permutations = 19;
        let opts = InversionOptions::default();
        let a = run_lan(&cfg, &opts).unwrap();
        let b = run_lan(&cfg, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells[0].psi[0].median_abs, 0.0);
        assert!(a.psi_trends[0].decreasing);
        cfg.replications = 50;
        assert!(run_lan(&cfg, &opts).is_err());
    }

    #[test]
    fn perturbation_must_stay_in_theta() {
        let spec = LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None).unwrap();
        let cfg = LanExperimentConfig::new(
            spec,
            Theta::new(0.0, 0.01).unwrap(),
            vec![SamplingScheme::unit_horizon(100).unwrap()],
            vec![[0.0, -1.0]],
        );
        assert!(cfg.validate().is_err());
    }
}
