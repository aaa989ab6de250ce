//! Configuration documents and the experiment commands behind the
//! `levylan` binary.
//!
//! A run is described by one JSON document (see `docs/config-schema.md`).
//! Every command validates the whole document first, writes its artifacts
//! under `output_dir` and returns an [`Outcome`] whose verdict decides the
//! process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::densities::{default_grid, density_alpha_t, density_limit, grid_for, InversionOptions, NuisanceSpec};
use crate::error::{LevyError, Result};
use crate::lan_harness::{a3_sweep, check_rate_condition, run_lan, LanExperimentConfig, LanThresholds};
use crate::levy_model::{LevyMeasureSpec, Theta};
use crate::malliavin::{
    check_representation, default_eps, kappa_inverse_moments, moment_sweep, pathwise_check, sample_weights, Patch,
};
use crate::rng::derive_seed;
use crate::score_fisher::{fisher_matrix, g_functions, rate_matrices};
use crate::simulator::{sample_path, SamplingScheme, SmallJumps, ZMethod};

pub const SCHEMA_VERSION: u32 = 1;

/// Which Malliavin diagnostics `malliavin` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalliavinCheck {
    Pathwise,
    Representation,
    Kappa,
    Moments,
}

/// Experiment block. Every field has a default so a minimal document only
/// names the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// Time points for densities, scores and Malliavin checks.
    pub times: Vec<f64>,
    /// Monte-Carlo size for Malliavin and A3 estimates.
    pub mc_size: usize,
    pub bins: usize,
    pub replications: usize,
    pub v_list: Vec<[f64; 2]>,
    /// Defaults to half the spec's `delta`.
    pub delta1: Option<f64>,
    pub kappa_p: Vec<f64>,
    /// Paths written by `simulate`.
    pub paths: usize,
    pub malliavin_checks: Vec<MalliavinCheck>,
    /// Run the A3 sweep as part of `lan`.
    pub a3: bool,
    pub thresholds: LanThresholds,
    pub inversion: InversionOptions,
    /// Tolerance for density normalization.
    pub mass_tol: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            times: vec![0.001, 0.01, 0.1],
            mc_size: 100_000,
            bins: 40,
            replications: 1000,
            v_list: vec![[0.6, 0.8]],
            delta1: None,
            kappa_p: vec![1.0, 2.0],
            paths: 1,
            malliavin_checks: vec![MalliavinCheck::Pathwise, MalliavinCheck::Representation],
            a3: false,
            thresholds: LanThresholds::default(),
            inversion: InversionOptions::default(),
            mass_tol: 1e-4,
        }
    }
}

fn default_nuisances() -> Vec<NuisanceSpec> {
    vec![NuisanceSpec::Zero]
}

fn default_schemes() -> Vec<SamplingScheme> {
    [500, 2000, 8000].iter().map(|&n| SamplingScheme { n, h: 1.0 / n as f64 }).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("levylan-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: LevyMeasureSpec,
    pub theta: Theta,
    #[serde(default = "default_nuisances")]
    pub nuisances: Vec<NuisanceSpec>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SamplingScheme>,
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

/// Scalar overrides taken from the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub mc_size: Option<usize>,
}

impl RunConfig {
    /// Parses and validates a document. Serde errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LevyError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| LevyError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(m) = o.mc_size {
            self.experiment.mc_size = m;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LevyError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        Theta::new(self.theta.beta, self.theta.gamma)?;
        for nu in &self.nuisances {
            nu.validate()?;
            nu.check_compatible(&self.model)?;
        }
        for s in &self.schemes {
            SamplingScheme::new(s.n, s.h)?;
        }
        let e = &self.experiment;
        if e.times.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(LevyError::param("experiment.times", "must lie in (0, 1]"));
        }
        if e.mc_size == 0 {
            return Err(LevyError::param("experiment.mc_size", "must be positive"));
        }
        if let Some(d) = e.delta1 {
            if !(d > 0.0 && d < self.model.delta) {
                return Err(LevyError::param("experiment.delta1", "must lie in (0, delta)"));
            }
        }
        if !(e.mass_tol > 0.0) {
            return Err(LevyError::param("experiment.mass_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn delta1(&self) -> f64 {
        self.experiment.delta1.unwrap_or(self.model.delta / 2.0)
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lan_config(&self) -> LanExperimentConfig {
        let mut c = LanExperimentConfig::new(self.model.clone(), self.theta, self.schemes.clone(), self.experiment.v_list.clone());
        c.nuisances = self.nuisances.clone();
        c.replications = self.experiment.replications;
        c.seed = self.seed;
        c.delta1 = self.delta1();
        c.thresholds = self.experiment.thresholds;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Density,
    Fisher,
    Simulate,
    Lan,
    Malliavin,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Fisher => "fisher",
            Command::Simulate => "simulate",
            Command::Lan => "lan",
            Command::Malliavin => "malliavin",
            Command::Check => "check",
        }
    }
}

/// Named verdicts and the files written by one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub verdicts: Vec<(String, bool)>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|(_, ok)| *ok)
    }

    fn verdict(&mut self, name: impl Into<String>, ok: bool) {
        self.verdicts.push((name.into(), ok));
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut w = Writer::new(cfg)?;
    match cmd {
        Command::Density => cmd_density(cfg, &mut w),
        Command::Fisher => cmd_fisher(cfg, &mut w),
        Command::Simulate => cmd_simulate(cfg, &mut w),
        Command::Lan => cmd_lan(cfg, &mut w),
        Command::Malliavin => cmd_malliavin(cfg, &mut w),
        Command::Check => cmd_check(cfg, &mut w),
    }?;
    let summary = json!({
        "command": cmd.name(),
        "passed": w.outcome.passed(),
        "verdicts": w.outcome.verdicts.iter().map(|(k, v)| json!({"name": k, "passed": v})).collect::<Vec<_>>(),
    });
    w.json(&format!("{}_verdicts.json", cmd.name()), summary)?;
    Ok(w.outcome)
}

/// Output sink that stamps every file with the config hash and seed.
struct Writer {
    dir: PathBuf,
    hash: String,
    seed: u64,
    outcome: Outcome,
}

impl Writer {
    fn new(cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Writer {
            dir: cfg.output_dir.clone(),
            hash: cfg.hash(),
            seed: cfg.seed,
            outcome: Outcome::default(),
        })
    }

    fn json(&mut self, name: &str, body: Value) -> Result<()> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.hash,
            "seed": self.seed,
            "body": body,
        });
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        self.outcome.files.push(path);
        Ok(())
    }

    /// Appends `config_hash` and `seed` columns to CSV text.
    fn csv(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                writeln!(f, "{line},config_hash,seed")?;
            } else {
                writeln!(f, "{line},{},{}", self.hash, self.seed)?;
            }
        }
        self.outcome.files.push(path);
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn cmd_density(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let spec = &cfg.model;
    let opts = &cfg.experiment.inversion;
    let grid = default_grid(spec.alpha).points();
    let symmetric = spec.is_symmetric();
    let mut meta = Vec::new();
    let mut tables = vec![(None, density_limit(spec, &grid, opts)?, grid)];
    for &t in &cfg.experiment.times {
        let grid = grid_for(spec, t).points();
        tables.push((Some(t), density_alpha_t(spec, t, &grid, opts)?, grid));
    }
    for (t, table, grid) in &tables {
        let mass = table.total_mass();
        let mass_ok = (mass - 1.0).abs() <= cfg.experiment.mass_tol;
        let label = t.map_or("limit".to_string(), |t| format!("t={t}"));
        w.outcome.verdict(format!("mass {label}"), mass_ok);
        let asym = if symmetric {
            let peak = table.meta.peak;
            let a = grid.iter().map(|&z| (table.value(z) - table.value(-z)).abs()).fold(0.0, f64::max) / peak;
            w.outcome.verdict(format!("symmetry {label}"), a <= 1e-9);
            Some(a)
        } else {
            None
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        let name = t.map_or("density_limit.csv".to_string(), |t| format!("density_t{t}.csv"));
        w.csv(&name, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
        meta.push(json!({
            "t": t,
            "file": name,
            "total_mass": mass,
            "mass_ok": mass_ok,
            "max_asymmetry": asym,
            "meta": to_value(&table.meta)?,
            "left_tail": to_value(&table.left)?,
            "right_tail": to_value(&table.right)?,
        }));
    }
    w.json("density_meta.json", json!({ "spec": to_value(spec)?, "tables": meta }))
}

fn cmd_fisher(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let spec = &cfg.model;
    let f = fisher_matrix(spec.alpha, spec.c_plus, spec.c_minus, cfg.theta.gamma)?;
    let ok = f.sigma11 > 0.0 && f.sigma22 > 0.0 && f.sigma11.is_finite() && f.sigma22.is_finite();
    w.outcome.verdict("fisher positive", ok);
    let rates = cfg
        .schemes
        .iter()
        .map(|s| rate_matrices(spec, s).and_then(|r| to_value(&r)))
        .collect::<Result<Vec<_>>>()?;
    for nu in &cfg.nuisances {
        for &t in &cfg.experiment.times {
            let grid = grid_for(spec, t).points();
            let g = g_functions(spec, &cfg.theta, nu, t, &grid, &cfg.experiment.inversion)?;
            let mut buf = Vec::new();
            g.write_csv(&mut buf)?;
            w.csv(&format!("g_{}_t{t}.csv", nu.label()), std::str::from_utf8(&buf).expect("csv is utf-8"))?;
        }
    }
    w.json("fisher.json", json!({ "fisher": to_value(&f)?, "rates": rates }))
}

fn path_method(spec: &LevyMeasureSpec, h: f64) -> ZMethod {
    if spec.taper == crate::levy_model::Taper::None {
        ZMethod::Exact
    } else {
        ZMethod::Ledger {
            eps: default_eps(spec, h),
            small: SmallJumps::Gaussian,
        }
    }
}

fn cmd_simulate(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let spec = &cfg.model;
    let mut index = Vec::new();
    for (si, s) in cfg.schemes.iter().enumerate() {
        let seed = derive_seed(cfg.seed, si as u64);
        let method = path_method(spec, s.h);
        for nu in &cfg.nuisances {
            for r in 0..cfg.experiment.paths as u64 {
                let p = sample_path(spec, &cfg.theta, nu, s, method, seed, r)?;
                let mut buf = Vec::new();
                p.write_csv(&mut buf)?;
                let name = format!("path_n{}_{}_r{r}.csv", s.n, nu.label());
                w.csv(&name, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
                index.push(json!({
                    "file": name,
                    "n": s.n,
                    "h": s.h,
                    "nuisance": to_value(nu)?,
                    "replication": r,
                    "method": to_value(&method)?,
                    "jumps": p.ledger.as_ref().map(|l| l.jumps.len()),
                    "small_jump_bias": p.small_jump_bias,
                }));
            }
        }
    }
    w.json("simulate.json", json!({ "paths": index }))
}

fn cmd_lan(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let lan = cfg.lan_config();
    let report = run_lan(&lan, &cfg.experiment.inversion)?;
    let mut csv = String::from("n,nuisance,paths,flagged,cov_deviation,ks_p_beta,ks_p_gamma,energy_p,cov_ok,normal_ok\n");
    for c in &report.cells {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.n,
            c.nuisance.label(),
            c.paths,
            c.flagged,
            c.cov_deviation,
            c.ks_p[0],
            c.ks_p[1],
            c.energy_p,
            c.cov_ok,
            c.normal_ok
        );
        w.outcome
            .verdict(format!("covariance n={} {}", c.n, c.nuisance.label()), c.cov_ok);
        w.outcome
            .verdict(format!("normality n={} {}", c.n, c.nuisance.label()), c.normal_ok);
    }
    for t in &report.psi_trends {
        w.outcome
            .verdict(format!("psi v={:?} {}", t.v, t.nuisance.label()), t.passed);
    }
    for u in &report.uniform {
        w.outcome.verdict(format!("uniform n={}", u.n), u.passed);
    }
    w.csv("lan_summary.csv", &csv)?;
    w.json("lan_report.json", to_value(&report)?)?;
    if cfg.experiment.a3 {
        let a3 = a3_sweep(
            &cfg.model,
            &cfg.theta,
            &cfg.nuisances[0],
            &cfg.schemes,
            cfg.delta1(),
            cfg.experiment.mc_size,
            derive_seed(cfg.seed, 0xa3),
            &cfg.experiment.inversion,
        )?;
        w.outcome.verdict("a3 decay", a3.passed);
        w.json("a3_report.json", to_value(&a3)?)?;
    }
    Ok(())
}

fn cmd_malliavin(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let spec = &cfg.model;
    let e = &cfg.experiment;
    let nu = &cfg.nuisances[0];
    let mut body = serde_json::Map::new();
    for check in &e.malliavin_checks {
        match check {
            MalliavinCheck::Pathwise => {
                let mut reps = Vec::new();
                for (i, &t) in e.times.iter().enumerate() {
                    let s = sample_weights(
                        spec,
                        &cfg.theta,
                        nu,
                        t,
                        default_eps(spec, t),
                        e.mc_size,
                        derive_seed(cfg.seed, 100 + i as u64),
                        Patch::Mean,
                    )?;
                    let r = pathwise_check(&s, &cfg.theta);
                    w.outcome.verdict(format!("pathwise t={t}"), r.passed);
                    reps.push(json!({ "t": t, "report": to_value(&r)?, "drop_rate": s.drop_rate() }));
                }
                body.insert("pathwise".into(), Value::Array(reps));
            }
            MalliavinCheck::Representation => {
                let mut reps = Vec::new();
                for (i, &t) in e.times.iter().enumerate() {
                    let r = check_representation(
                        spec,
                        &cfg.theta,
                        nu,
                        t,
                        e.mc_size,
                        e.bins,
                        derive_seed(cfg.seed, 200 + i as u64),
                        &e.inversion,
                    )?;
                    w.outcome.verdict(format!("representation t={t}"), r.passed);
                    reps.push(to_value(&r)?);
                }
                body.insert("representation".into(), Value::Array(reps));
            }
            MalliavinCheck::Kappa => {
                let r = kappa_inverse_moments(spec, &e.times, &e.kappa_p, e.mc_size, derive_seed(cfg.seed, 300))?;
                w.outcome.verdict("kappa inverse moments", r.passed);
                body.insert("kappa".into(), to_value(&r)?);
            }
            MalliavinCheck::Moments => {
                let r = moment_sweep(
                    spec,
                    &[cfg.theta],
                    &cfg.schemes,
                    cfg.delta1(),
                    e.mc_size,
                    derive_seed(cfg.seed, 400),
                )?;
                w.outcome.verdict("weight moments", r.passed);
                body.insert("moments".into(), to_value(&r)?);
            }
        }
    }
    w.json("malliavin_report.json", Value::Object(body))
}

fn cmd_check(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let spec = &cfg.model;
    let h1 = spec.verify_h1(1e-2, &LevyMeasureSpec::default_h1_grid());
    let h2 = spec.verify_h2();
    w.outcome.verdict("H1", h1.passed);
    w.outcome.verdict("H2", h2.passed);
    let mut nus = Vec::new();
    for nu in &cfg.nuisances {
        let ok = nu.check_compatible(spec).is_ok();
        w.outcome.verdict(format!("nuisance {}", nu.label()), ok);
        nus.push(json!({ "nuisance": to_value(nu)?, "bg_index": nu.bg_index(), "compatible": ok }));
    }
    let mut rates = Vec::new();
    for s in &cfg.schemes {
        let r = check_rate_condition(spec.alpha, s, cfg.experiment.thresholds.rate);
        w.outcome.verdict(format!("rate n={} h={}", s.n, s.h), r.pass);
        rates.push(to_value(&r)?);
    }
    w.json(
        "check.json",
        json!({ "h1": to_value(&h1)?, "h2": to_value(&h2)?, "nuisances": nus, "rate": rates }),
    )
}
