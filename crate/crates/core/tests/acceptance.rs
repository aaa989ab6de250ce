//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with the numbers behind the verdict; the process fails if any does.

use std::f64::consts::FRAC_1_PI;
use std::time::Instant;

use levylan::densities::{
    default_grid, density_alpha_t, density_limit, grid_for, invert_points, CharExponent, InversionOptions, NuisanceSpec,
    TransitionExponent,
};
use levylan::lan_harness::{a3_sweep, run_lan, LanExperimentConfig};
use levylan::malliavin::{
    check_representation, default_eps, kappa_inverse_moments, moment_sweep, pathwise_check, sample_weights, Patch,
};
use levylan::score_fisher::{fisher_matrix, rate_matrices, IncrementModel};
use levylan::simulator::SamplingScheme;
use levylan::{LevyMeasureSpec, Result, Taper, Theta};

type Check = fn() -> Result<(bool, String)>;

fn sweep() -> Vec<SamplingScheme> {
    [500, 2000, 8000]
        .iter()
        .map(|&n| SamplingScheme::unit_horizon(n).unwrap())
        .collect()
}

fn stable(alpha: f64, cp: f64, cm: f64) -> LevyMeasureSpec {
    LevyMeasureSpec::new(alpha, cp, cm, Taper::None).unwrap()
}

fn cauchy_golden() -> Result<(bool, String)> {
    let spec = LevyMeasureSpec::cauchy();
    let phi = density_limit(&spec, &default_grid(1.0).points(), &InversionOptions::default())?;
    let err = (0..=20_000)
        .map(|i| -10.0 + i as f64 * 1e-3)
        .map(|x| (phi.value(x) - FRAC_1_PI / (1.0 + x * x)).abs())
        .fold(0.0, f64::max);
    let f = fisher_matrix(1.0, FRAC_1_PI, FRAC_1_PI, 1.0)?;
    let ok = err < 1e-6 && (f.sigma11 - 0.5).abs() <= 1e-3 && (f.sigma22 - 0.5).abs() <= 1e-3;
    Ok((
        ok,
        format!("max |φ - Cauchy| = {err:.2e}, Σ11 = {:.6}, Σ22 = {:.6}", f.sigma11, f.sigma22),
    ))
}

fn builtin_tapers() -> Vec<Taper> {
    vec![
        Taper::None,
        Taper::ExpAbs,
        Taper::Gauss,
        Taper::SechLike,
        Taper::SmoothDamp { u1: 1.0 },
    ]
}

fn normalization_symmetry() -> Result<(bool, String)> {
    let opts = InversionOptions::default();
    let mut worst_mass: f64 = 0.0;
    let mut worst_asym: f64 = 0.0;
    let mut tables = 0;
    for taper in builtin_tapers() {
        for &alpha in &[0.5, 1.0, 1.5, 1.9] {
            for (cp, cm) in [(1.0, 1.0), (1.0, 0.3)] {
                let spec = LevyMeasureSpec::new(alpha, cp, cm, taper)?;
                for &t in &[1e-3, 1e-2, 1e-1] {
                    let grid = grid_for(&spec, t).points();
                    let tab = density_alpha_t(&spec, t, &grid, &opts)?;
                    tables += 1;
                    worst_mass = worst_mass.max((tab.total_mass() - 1.0).abs());
                    if spec.is_symmetric() {
                        let peak = tab.meta.peak;
                        for &z in &grid {
                            worst_asym = worst_asym.max((tab.value(z) - tab.value(-z)).abs() / peak);
                        }
                    }
                }
            }
        }
    }
    Ok((
        worst_mass <= 1e-4 && worst_asym <= 1e-9,
        format!("{tables} tables, worst |mass - 1| = {worst_mass:.2e}, worst relative asymmetry = {worst_asym:.2e}"),
    ))
}

/// Largest error of the analytic score against central differences of
/// `ln p_t`, relative to `|g| + natural scale`.
fn fd_error(spec: &LevyMeasureSpec, nuisance: NuisanceSpec, theta: Theta, t: f64) -> Result<f64> {
    let opts = InversionOptions::default();
    let m = IncrementModel::new(spec, &theta, &nuisance, t, &opts)?;
    let base = CharExponent::at_time(spec, t)?;
    let xs: Vec<f64> = (-150..=150).map(|i| m.norm.to_x(i as f64 * 0.1 + 0.013)).collect();
    let logp = |th: Theta| -> Result<Vec<f64>> {
        let e = TransitionExponent {
            base: &base,
            theta: th,
            nuisance,
            t,
        };
        Ok(invert_points(&e, &xs, &opts)?.0.iter().map(|v| v.ln()).collect())
    };
    let hb = 1e-5 * m.norm.scale / t;
    let hg = 1e-5 * theta.gamma;
    let bp = logp(Theta::new(theta.beta + hb, theta.gamma)?)?;
    let bm = logp(Theta::new(theta.beta - hb, theta.gamma)?)?;
    let gp = logp(Theta::new(theta.beta, theta.gamma + hg)?)?;
    let gm = logp(Theta::new(theta.beta, theta.gamma - hg)?)?;
    let peak = xs.iter().map(|&x| m.density(x)).fold(0.0, f64::max);
    let scale = [t / m.norm.scale, 1.0 / theta.gamma];
    let mut worst: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if m.density(x) < 1e-6 * peak {
            continue;
        }
        let g = m.score(x)?;
        let fd = [(bp[i] - bm[i]) / (2.0 * hb), (gp[i] - gm[i]) / (2.0 * hg)];
        for k in 0..2 {
            worst = worst.max((g[k] - fd[k]).abs() / (g[k].abs() + scale[k]));
        }
    }
    Ok(worst)
}

fn score_correctness() -> Result<(bool, String)> {
    let asym = LevyMeasureSpec::new(1.3, 1.0, 0.4, Taper::Gauss)?;
    let c_t = asym.c_t(0.05)?;
    let cases = [
        (asym, NuisanceSpec::Zero, Theta::new(0.5, 1.5)?, 0.05),
        (
            LevyMeasureSpec::new(1.5, 1.0, 1.0, Taper::None)?,
            NuisanceSpec::compound_poisson(5.0),
            Theta::unit(),
            0.01,
        ),
        (
            LevyMeasureSpec::new(0.8, 1.0, 0.5, Taper::ExpAbs)?,
            NuisanceSpec::Zero,
            Theta::new(-0.3, 0.7)?,
            0.02,
        ),
    ];
    let mut errs = Vec::new();
    for (spec, nu, th, t) in cases {
        errs.push(fd_error(&spec, nu, th, t)?);
    }
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok((
        worst <= 1e-3 && c_t != 0.0,
        format!("errors {:?}, asymmetric c_t = {c_t:.4e}", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()),
    ))
}

fn pathwise_inequality() -> Result<(bool, String)> {
    let mut lines = Vec::new();
    let mut ok = true;
    for (spec, theta) in [
        (stable(1.5, 1.0, 1.0), Theta::unit()),
        (LevyMeasureSpec::new(1.2, 1.0, 0.3, Taper::ExpAbs)?, Theta::new(0.2, 2.5)?),
    ] {
        let t = 0.01;
        let s = sample_weights(&spec, &theta, &NuisanceSpec::Zero, t, default_eps(&spec, t), 100_000, 41, Patch::Mean)?;
        let r = pathwise_check(&s, &theta);
        ok &= r.passed && r.paths + r.excluded == 100_000;
        lines.push(format!(
            "{} paths, {} violations, max ratio {:.4} vs bound {:.4}",
            r.paths, r.violations_patched, r.max_ratio_patched, r.bound
        ));
    }
    Ok((ok, lines.join("; ")))
}

fn representation() -> Result<(bool, String)> {
    let mut ok = true;
    let mut lines = Vec::new();
    for spec in [stable(1.5, 1.0, 1.0), stable(1.5, 1.0, 0.3)] {
        let r = check_representation(
            &spec,
            &Theta::unit(),
            &NuisanceSpec::Zero,
            0.01,
            200_000,
            40,
            5,
            &InversionOptions::default(),
        )?;
        ok &= r.pass_fraction.iter().all(|&f| f >= 0.95);
        lines.push(format!("C- = {}: bins within 3 SE {:?}", spec.c_minus, r.pass_fraction));
    }
    Ok((ok, lines.join("; ")))
}

fn moment_boundedness() -> Result<(bool, String)> {
    let spec = stable(1.5, 1.0, 1.0);
    let delta1 = spec.delta / 2.0;
    let m = moment_sweep(&spec, &[Theta::unit()], &sweep(), delta1, 100_000, 11)?;
    let k = kappa_inverse_moments(&spec, &[1e-3, 1e-2, 1e-1], &[1.0, 2.0], 100_000, 12)?;
    let flat = k.trends.iter().all(|t| t.flat);
    let slope = &m.trends[0];
    Ok((
        m.passed && flat,
        format!(
            "moment slope {:.4} ± {:.4}; κ^-p estimates {:?}; flat = {flat}",
            slope.slope,
            slope.slope_se,
            k.rows.iter().map(|r| format!("{:.4}±{:.4}", r.estimate, r.se)).collect::<Vec<_>>()
        ),
    ))
}

fn lan_summary(cfg: &LanExperimentConfig, focus_n: usize) -> Result<(bool, String)> {
    let r = run_lan(cfg, &InversionOptions::default())?;
    let cell = r.cells.iter().find(|c| c.n == focus_n).expect("focus scheme present");
    let trend = &r.psi_trends[0];
    let ok = cell.cov_ok && cell.normal_ok && trend.passed;
    Ok((
        ok,
        format!(
            "n={focus_n}: cov deviation {:.3}, cov {:.3?} vs Σ {:.3?}, KS p {:.3?}; score cross-covariance {:.3} \
             (deviation {:.3} with it); median |Ψ| {:.4?} (flagged {})",
            cell.cov_deviation,
            cell.delta_cov,
            cell.sigma,
            cell.ks_p,
            r.fisher.cross,
            cell.cross_cov_deviation,
            trend.median_abs,
            r.cells.iter().map(|c| c.flagged).sum::<usize>()
        ),
    ))
}

fn lan_triple() -> Result<(bool, String)> {
    let mut cfg = LanExperimentConfig::new(stable(1.5, 1.0, 1.0), Theta::unit(), sweep(), vec![[0.6, 0.8]]);
    cfg.seed = 2024;
    lan_summary(&cfg, 2000)
}

fn asymmetric_norming() -> Result<(bool, String)> {
    let spec = stable(0.8, 1.0, 0.0);
    let mut worst: f64 = 0.0;
    for s in sweep() {
        let r = rate_matrices(&spec, &s)?;
        let a = spec.alpha;
        let c_h = s.h * (1.0 - s.h.powf((1.0 - a) / a)) / (1.0 - a);
        worst = worst.max((r.c_h - c_h).abs() / c_h);
        let off = c_h / s.h / (s.n as f64).sqrt();
        worst = worst.max((r.r[0][1] - off).abs() / off);
    }
    let mut cfg = LanExperimentConfig::new(spec, Theta::unit(), sweep(), vec![[0.6, 0.8]]);
    cfg.seed = 2025;
    let (ok, line) = lan_summary(&cfg, 2000)?;
    Ok((ok && worst <= 1e-10, format!("c_h relative error {worst:.1e}; {line}")))
}

fn uniform_sweep() -> Result<(bool, String)> {
    let mut cfg = LanExperimentConfig::new(
        stable(1.5, 1.0, 1.0),
        Theta::unit(),
        vec![SamplingScheme::unit_horizon(2000)?],
        vec![[0.6, 0.8]],
    );
    cfg.nuisances = vec![
        NuisanceSpec::Zero,
        NuisanceSpec::compound_poisson(1.0),
        NuisanceSpec::compound_poisson(5.0),
    ];
    cfg.seed = 2026;
    let r = run_lan(&cfg, &InversionOptions::default())?;
    let u = &r.uniform[0];
    let ok = u.worst_cov_deviation <= 0.15 && u.weight_invariant;
    Ok((
        ok,
        format!(
            "worst cov deviation {:.3} ({}), Ξ invariant = {}, min corr {:.4}, worst median |Ψ| {:.4}",
            u.worst_cov_deviation,
            u.worst_nuisance.label(),
            u.weight_invariant,
            u.min_correlation,
            u.worst_psi_median
        ),
    ))
}

fn a3_decay() -> Result<(bool, String)> {
    let spec = stable(1.5, 1.0, 1.0);
    let delta1 = spec.delta / 2.0;
    let r = a3_sweep(
        &spec,
        &Theta::unit(),
        &NuisanceSpec::Zero,
        &sweep(),
        delta1,
        100_000,
        13,
        &InversionOptions::default(),
    )?;
    Ok((
        r.passed,
        format!(
            "estimates {:?}, ratios {:?} vs {:.4}",
            r.points.iter().map(|p| format!("{:.4}±{:.4}", p.estimate, p.se)).collect::<Vec<_>>(),
            r.ratios.iter().map(|q| format!("{:.4}±{:.4}", q[0], q[1])).collect::<Vec<_>>(),
            4f64.powf(-delta1 / 2.0)
        ),
    ))
}

fn main() {
    let checks: [(usize, &str, Check); 10] = [
        (1, "Cauchy golden values", cauchy_golden),
        (2, "normalization and symmetry", normalization_symmetry),
        (3, "score correctness", score_correctness),
        (4, "pathwise Malliavin inequality", pathwise_inequality),
        (5, "representation", representation),
        (6, "moment boundedness", moment_boundedness),
        (7, "LAN triple", lan_triple),
        (8, "asymmetric norming", asymmetric_norming),
        (9, "uniform sweep", uniform_sweep),
        (10, "A3 decay", a3_decay),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {} {name} [{secs:.1}s]: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
