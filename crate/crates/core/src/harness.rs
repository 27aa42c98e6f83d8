//! Experiment orchestration: config parsing, seeded parallel runs, CSV and
//! manifest persistence, aggregation and SVG plots.
//!
//! Each (kernel, seed) pair gets one environment; every policy then runs on
//! that environment with its own random stream. Streams are ChaCha8 keyed by
//! `(master seed, seed)` with the stream id hashed from the kernel and policy
//! labels, so adding or removing a policy never changes another's draws.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algorithms::{
    baseline_window, beta_width, restart_interval, run_r_gp_ucb, run_random, run_rperp, run_sw_gp_ucb, BetaParams,
    RPerpConfig, RunCounters, RunRecord, StepRow, UcbConfig, UcbWidth,
};
use crate::environment::{build_abrupt_env, build_interval_env, build_stationary_env, Grid, NonStationaryEnv};
use crate::error::{Error, Result};
use crate::gp::greedy_mig_curve;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::theory::{rate_value, RateKind, RateQuery, RateValue};

/// Environment variable overriding `master_seed`.
pub const SEED_ENV_VAR: &str = "NSKB_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub plot: bool,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelConfig>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvType {
    Abrupt,
    Interval,
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(rename = "type", default = "default_env_type")]
    pub kind: EnvType,
    /// Expansion centres per reward function.
    #[serde(rename = "U", default = "default_centers")]
    pub centers: usize,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub grid: GridConfig,
    /// Segment length of the interval environment.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<usize>,
    /// Fixes the environment across run seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            kind: default_env_type(),
            centers: default_centers(),
            horizon: default_horizon(),
            rho: default_rho(),
            grid: GridConfig::default(),
            interval: None,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub per_axis: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, per_axis: 30 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub lengthscale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl KernelConfig {
    pub fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.family, self.lengthscale, self.nu)
    }

    /// File-name friendly label, e.g. `se_l0.5` or `matern2.5_l0.5`.
    pub fn label(&self) -> String {
        match self.nu {
            Some(nu) if self.family == KernelFamily::Matern => format!("matern{nu}_l{}", self.lengthscale),
            _ => format!("{}_l{}", self.family.as_str(), self.lengthscale),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Rperp,
    RGpUcb,
    SwGpUcb,
    Random,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Rperp => "rperp",
            PolicyName::RGpUcb => "r_gp_ucb",
            PolicyName::SwGpUcb => "sw_gp_ucb",
            PolicyName::Random => "random",
        }
    }
}

/// An interval or window length: `"auto"` or a fixed integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    Auto,
    Fixed(usize),
}

impl Serialize for Setting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Setting::Auto => s.serialize_str("auto"),
            Setting::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Setting::Fixed(n as usize)),
            Raw::Str(s) if s == "auto" => Ok(Setting::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected \"auto\" or an integer, got \"{s}\""))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: PolicyName,
    /// Display and CSV name; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Restart interval (rperp, r_gp_ucb); `auto` when absent.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<Setting>,
    /// Sliding window (sw_gp_ucb); `auto` when absent.
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Setting>,
    /// Whether `auto` intervals may use the measured `V_T` (rperp).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vt_known: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_scale: Option<f64>,
    /// Concentration constant in the R-PERP width.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_refit: Option<bool>,
}

impl PolicyConfig {
    pub fn new(name: PolicyName) -> Self {
        Self {
            name,
            label: None,
            interval: None,
            window: None,
            vt_known: None,
            beta_scale: None,
            concentration: None,
            lambda: None,
            exact_refit: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.as_str())
    }

    fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(1.0)
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_delta() -> f64 {
    0.1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_env_type() -> EnvType {
    EnvType::Abrupt
}
fn default_centers() -> usize {
    10
}
fn default_horizon() -> usize {
    5000
}
fn default_rho() -> f64 {
    0.1
}
fn default_kernels() -> Vec<KernelConfig> {
    vec![KernelConfig {
        family: KernelFamily::Se,
        lengthscale: 0.5,
        nu: None,
    }]
}
fn default_policies() -> Vec<PolicyConfig> {
    [PolicyName::Rperp, PolicyName::RGpUcb, PolicyName::SwGpUcb, PolicyName::Random]
        .into_iter()
        .map(PolicyConfig::new)
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            seeds: default_seeds(),
            delta: default_delta(),
            output_dir: default_output_dir(),
            plot: false,
            workers: None,
            environment: EnvironmentConfig::default(),
            kernels: default_kernels(),
            policies: default_policies(),
        }
    }
}

fn positive(field: String, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0; got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies the `NSKB_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        config.apply_env_overrides()?;
        Ok(config)
    }

    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
            self.master_seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV_VAR, format!("not an unsigned integer: {raw:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1); got {}", self.delta)));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be >= 1"));
        }

        let env = &self.environment;
        let horizon = env.horizon;
        if horizon == 0 {
            return Err(Error::config("environment.T", "must be >= 1"));
        }
        if env.kind == EnvType::Abrupt && horizon < 5 {
            return Err(Error::config("environment.T", "abrupt environment needs T >= 5"));
        }
        if env.centers == 0 {
            return Err(Error::config("environment.U", "must be >= 1"));
        }
        if !(env.rho.is_finite() && env.rho >= 0.0) {
            return Err(Error::config("environment.rho", format!("must be >= 0; got {}", env.rho)));
        }
        Grid::new(env.grid.dim, env.grid.per_axis)?;
        match (env.kind, env.interval) {
            (EnvType::Interval, None) => return Err(Error::config("environment.H", "required for the interval environment")),
            (EnvType::Interval, Some(h)) if h == 0 || h > horizon => {
                return Err(Error::config("environment.H", format!("must lie in [1, {horizon}]; got {h}")))
            }
            (EnvType::Abrupt | EnvType::Stationary, Some(_)) => {
                return Err(Error::config("environment.H", "only the interval environment takes H"))
            }
            _ => {}
        }

        if self.kernels.is_empty() {
            return Err(Error::config("kernels", "need at least one kernel"));
        }
        let mut kernel_labels = BTreeSet::new();
        for (i, k) in self.kernels.iter().enumerate() {
            k.spec().map_err(|e| Error::config(format!("kernels[{i}]"), e.to_string()))?;
            if !kernel_labels.insert(k.label()) {
                return Err(Error::config(format!("kernels[{i}]"), "duplicate kernel"));
            }
        }

        if self.policies.is_empty() {
            return Err(Error::config("policies", "need at least one policy"));
        }
        let mut labels = BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            let field = |name: &str| format!("policies[{i}].{name}");
            if !labels.insert(p.label().to_string()) {
                return Err(Error::config(field("label"), format!("duplicate policy label {:?}", p.label())));
            }
            if p.label().is_empty() || p.label().contains([',', '"', '\n', '/']) {
                return Err(Error::config(field("label"), "must be non-empty without commas, quotes, slashes"));
            }
            let rperp = p.name == PolicyName::Rperp;
            let restarts = matches!(p.name, PolicyName::Rperp | PolicyName::RGpUcb);
            let forbid = |present: bool, name: &str| {
                if present {
                    Err(Error::config(field(name), format!("not a parameter of {}", p.name.as_str())))
                } else {
                    Ok(())
                }
            };
            forbid(p.interval.is_some() && !restarts, "H")?;
            forbid(p.window.is_some() && p.name != PolicyName::SwGpUcb, "W")?;
            forbid(p.vt_known.is_some() && !rperp, "vt_known")?;
            forbid(p.beta_scale.is_some() && !rperp, "beta_scale")?;
            forbid(p.concentration.is_some() && !rperp, "C")?;
            forbid(p.exact_refit.is_some() && !rperp, "exact_refit")?;
            forbid(p.lambda.is_some() && p.name == PolicyName::Random, "lambda")?;
            if let Some(Setting::Fixed(h)) = p.interval {
                let lo = if rperp { 2 } else { 1 };
                if h < lo || h > horizon {
                    return Err(Error::config(field("H"), format!("must lie in [{lo}, {horizon}]; got {h}")));
                }
            }
            if let Some(Setting::Fixed(w)) = p.window {
                if w == 0 {
                    return Err(Error::config(field("W"), "must be >= 1"));
                }
            }
            if rperp && horizon < 2 {
                return Err(Error::config("environment.T", "rperp needs T >= 2"));
            }
            positive(field("beta_scale"), p.beta_scale.unwrap_or(1.0))?;
            positive(field("C"), p.concentration.unwrap_or(1.0))?;
            positive(field("lambda"), p.lambda())?;
        }
        Ok(())
    }
}

/// Independent ChaCha8 stream for `(master, seed, tag)`.
pub fn derive_rng(master: u64, seed: u64, tag: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(fnv1a(tag.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Builds the environment for one `(kernel, seed)` pair.
pub fn build_environment(config: &ExperimentConfig, kernel: &KernelConfig, seed: u64) -> Result<NonStationaryEnv> {
    let env = &config.environment;
    let spec = kernel.spec()?;
    let grid = Grid::new(env.grid.dim, env.grid.per_axis)?;
    let mut rng = derive_rng(config.master_seed, env.seed.unwrap_or(seed), &format!("env/{}", kernel.label()));
    match env.kind {
        EnvType::Abrupt => build_abrupt_env(&spec, env.centers, grid, env.horizon, env.rho, &mut rng),
        EnvType::Stationary => build_stationary_env(&spec, env.centers, grid, env.horizon, env.rho, &mut rng),
        EnvType::Interval => {
            let h = env.interval.expect("validated");
            build_interval_env(&spec, env.centers, grid, env.horizon, h, env.rho, &mut rng)
        }
    }
}

/// Parameters a policy actually ran with.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedPolicy {
    pub label: String,
    pub name: PolicyName,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub interval: Option<usize>,
    #[serde(rename = "W", skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_sqrt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn nu_or_zero(kernel: &KernelConfig) -> f64 {
    kernel.nu.unwrap_or(0.0)
}

/// Resolves `auto` settings and confidence widths against a concrete environment.
pub fn resolve_policy(
    config: &ExperimentConfig,
    policy: &PolicyConfig,
    kernel: &KernelConfig,
    env: &NonStationaryEnv,
) -> Result<ResolvedPolicy> {
    let horizon = env.horizon();
    let t = horizon as f64;
    let vt = env.total_variation();
    let dim = env.grid().dim();
    let nu = nu_or_zero(kernel);
    // without drift the windowed baselines keep everything
    let window = |setting: Option<Setting>| -> Result<usize> {
        match setting.unwrap_or(Setting::Auto) {
            Setting::Fixed(n) => Ok(n),
            Setting::Auto if vt > 0.0 && horizon >= 2 => baseline_window(kernel.family, t, vt, dim, nu),
            Setting::Auto => Ok(horizon),
        }
    };
    let mut resolved = ResolvedPolicy {
        label: policy.label().to_string(),
        name: policy.name,
        interval: None,
        window: None,
        beta_sqrt: None,
        lambda: (policy.name != PolicyName::Random).then(|| policy.lambda()),
    };
    match policy.name {
        PolicyName::Rperp => {
            let h = match policy.interval.unwrap_or(Setting::Auto) {
                Setting::Fixed(h) => h,
                Setting::Auto => {
                    let known = policy.vt_known.unwrap_or(true) && vt > 0.0;
                    restart_interval(kernel.family, t, if known { vt } else { 1.0 }, dim, nu, known)?
                }
            };
            resolved.interval = Some(h);
            resolved.beta_sqrt = Some(beta_width(&BetaParams {
                rkhs_bound: env.rkhs_bound(),
                noise_scale: env.noise_scale(),
                lambda: policy.lambda(),
                concentration: policy.concentration.unwrap_or(1.0),
                n_arms: env.n_arms(),
                horizon,
                interval: h,
                delta: config.delta,
            })?);
        }
        PolicyName::RGpUcb => resolved.interval = Some(window(policy.interval)?),
        PolicyName::SwGpUcb => resolved.window = Some(window(policy.window)?),
        PolicyName::Random => {}
    }
    Ok(resolved)
}

fn run_policy(
    config: &ExperimentConfig,
    policy: &PolicyConfig,
    resolved: &ResolvedPolicy,
    kernel: &KernelConfig,
    env: &NonStationaryEnv,
    seed: u64,
) -> Result<RunRecord> {
    let spec = kernel.spec()?;
    let mut rng = derive_rng(config.master_seed, seed, &format!("policy/{}/{}", kernel.label(), resolved.label));
    let horizon = env.horizon();
    let ucb = |rounds: usize| -> Result<UcbConfig> {
        let lambda = policy.lambda();
        Ok(UcbConfig {
            kernel: spec,
            lambda,
            width: UcbWidth {
                rkhs_bound: env.rkhs_bound(),
                noise_scale: env.noise_scale(),
                lambda,
                delta: config.delta,
                mig: greedy_mig_curve(&spec, lambda, env.grid().points(), rounds)?,
            },
        })
    };
    let mut record = match policy.name {
        PolicyName::Rperp => {
            let mut cfg = RPerpConfig::new(spec, resolved.interval.expect("resolved"), resolved.beta_sqrt.expect("resolved"));
            cfg.lambda = policy.lambda();
            cfg.beta_scale = policy.beta_scale.unwrap_or(1.0);
            cfg.exact_refit = policy.exact_refit.unwrap_or(false);
            run_rperp(env, &cfg, &mut rng)?
        }
        PolicyName::RGpUcb => {
            let h = resolved.interval.expect("resolved");
            run_r_gp_ucb(env, &ucb((h - 1).min(horizon))?, h, &mut rng)?
        }
        PolicyName::SwGpUcb => {
            let w = resolved.window.expect("resolved");
            run_sw_gp_ucb(env, &ucb(w.min(horizon.saturating_sub(1)))?, w, &mut rng)?
        }
        PolicyName::Random => run_random(env, &mut rng)?,
    };
    record.policy = resolved.label.clone();
    record.seed = Some(seed);
    Ok(record)
}

/// Per-step mean cumulative regret and its standard error across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateCurve {
    pub policy: String,
    pub n_seeds: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Groups records by policy (first-appearance order) and averages their
/// cumulative regret. Standard error is the sample deviation over `sqrt(n)`.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<AggregateCurve>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let horizon = first.horizon();
    if let Some(r) = records.iter().find(|r| r.horizon() != horizon) {
        return Err(Error::usage(format!(
            "aggregate: mixed horizons ({horizon} vs {} for {})",
            r.horizon(),
            r.policy
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
    }
    Ok(order
        .into_iter()
        .map(|policy| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.policy == policy).collect();
            let n = runs.len() as f64;
            let (mean, stderr) = (0..horizon)
                .map(|t| {
                    let mean = runs.iter().map(|r| r.rows[t].cumulative_regret).sum::<f64>() / n;
                    let se = if runs.len() < 2 {
                        0.0
                    } else {
                        let ss: f64 = runs.iter().map(|r| (r.rows[t].cumulative_regret - mean).powi(2)).sum();
                        (ss / (n - 1.0) / n).sqrt()
                    };
                    (mean, se)
                })
                .unzip();
            AggregateCurve {
                policy: policy.to_string(),
                n_seeds: runs.len(),
                mean,
                stderr,
            }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    policy: String,
    seed: u64,
    t: usize,
    arm_index: usize,
    y: f64,
    inst_regret: f64,
    cum_regret: f64,
}

/// Writes records as CSV rows `policy, seed, t, arm_index, y, inst_regret, cum_regret`.
pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in records {
        for row in &r.rows {
            w.serialize(CsvRow {
                policy: r.policy.clone(),
                seed: r.seed.unwrap_or(0),
                t: row.t,
                arm_index: row.arm,
                y: row.y,
                inst_regret: row.regret,
                cum_regret: row.cumulative_regret,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] back into step traces.
pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: Vec<RunRecord> = Vec::new();
    for row in reader.deserialize() {
        let row: CsvRow = row?;
        let step = StepRow {
            t: row.t,
            arm: row.arm_index,
            y: row.y,
            regret: row.inst_regret,
            cumulative_regret: row.cum_regret,
        };
        match out.last_mut() {
            Some(r) if r.policy == row.policy && r.seed == Some(row.seed) => r.rows.push(step),
            _ => out.push(RunRecord {
                policy: row.policy,
                seed: Some(row.seed),
                rows: vec![step],
                counters: RunCounters::default(),
                config: serde_json::Value::Null,
                deviations: Vec::new(),
            }),
        }
    }
    Ok(out)
}

/// One subplot: a title and its curves.
#[derive(Clone, Debug)]
pub struct PlotPanel {
    pub title: String,
    pub curves: Vec<AggregateCurve>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders panels side by side: cumulative regret against `t` on linear
/// axes, one polyline per policy over a shaded one-stderr band.
pub fn render_svg(panels: &[PlotPanel]) -> Result<String> {
    if panels.is_empty() || panels.iter().any(|p| p.curves.is_empty()) {
        return Err(Error::usage("emit_plot: nothing to plot"));
    }
    let width = PANEL_W * panels.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{PANEL_H}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k as f64 * PANEL_W + MARGIN_L;
        let x1 = (k + 1) as f64 * PANEL_W - MARGIN_R;
        let (y0, y1) = (PANEL_H - MARGIN_B, MARGIN_T);
        let horizon = panel.curves.iter().map(|c| c.mean.len()).max().unwrap_or(1).max(1);
        let y_max = panel
            .curves
            .iter()
            .flat_map(|c| c.mean.iter().zip(&c.stderr).map(|(m, s)| m + s))
            .fold(0.0f64, f64::max);
        let y_max = if y_max > 0.0 { y_max } else { 1.0 };
        let sx = |t: usize| {
            if horizon == 1 {
                x0
            } else {
                x0 + (t - 1) as f64 / (horizon - 1) as f64 * (x1 - x0)
            }
        };
        let sy = |v: f64| y0 - v / y_max * (y0 - y1);

        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            (x0 + x1) / 2.0,
            MARGIN_T - 15.0,
            xml_escape(&panel.title)
        );
        let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
        for i in 0..=4 {
            let t = 1 + (horizon - 1) * i / 4;
            let v = y_max * i as f64 / 4.0;
            let (tx, vy) = (sx(t), sy(v));
            let _ = writeln!(svg, r#"<line x1="{tx:.2}" y1="{y0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 4.0);
            let _ = writeln!(svg, r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, y0 + 18.0);
            let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{vy:.2}" x2="{x0:.2}" y2="{vy:.2}" stroke="black"/>"#, x0 - 4.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, x0 - 7.0, vy + 4.0);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
            (x0 + x1) / 2.0,
            PANEL_H - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">cumulative regret</text>"#,
            x0 - 55.0,
            (y0 + y1) / 2.0
        );

        for (c, curve) in panel.curves.iter().enumerate() {
            let color = PALETTE[c % PALETTE.len()];
            let n = curve.mean.len();
            let mut band = String::new();
            for t in 1..=n {
                let _ = write!(band, "{:.2},{:.2} ", sx(t), sy(curve.mean[t - 1] + curve.stderr[t - 1]));
            }
            for t in (1..=n).rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(t), sy(curve.mean[t - 1] - curve.stderr[t - 1]));
            }
            let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
            let line: Vec<String> = (1..=n).map(|t| format!("{:.2},{:.2}", sx(t), sy(curve.mean[t - 1]))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
            let ly = y1 + 10.0 + 16.0 * c as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="4" fill="{color}"/>"#,
                x0 + 10.0,
                ly - 4.0
            );
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, x0 + 28.0, xml_escape(&curve.policy));
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot_panels(panels: &[PlotPanel], path: &Path) -> Result<()> {
    let svg = render_svg(panels)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Single-panel plot of `curves`.
pub fn emit_plot(curves: &[AggregateCurve], path: &Path) -> Result<()> {
    emit_plot_panels(
        &[PlotPanel {
            title: String::new(),
            curves: curves.to_vec(),
        }],
        path,
    )
}

/// All runs for one kernel.
#[derive(Clone, Debug)]
pub struct KernelResults {
    pub kernel: KernelConfig,
    /// Ordered by seed, then by policy as configured.
    pub records: Vec<RunRecord>,
    pub curves: Vec<AggregateCurve>,
}

impl KernelResults {
    pub fn csv_name(&self) -> String {
        format!("regret_{}.csv", self.kernel.label())
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub kernels: Vec<KernelResults>,
    /// Resolved configuration and measured environment quantities.
    pub manifest: serde_json::Value,
}

/// Runs every (kernel, seed, policy) combination without touching the disk.
pub fn execute(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    let pairs: Vec<(usize, u64)> =
        (0..config.kernels.len()).flat_map(|k| config.seeds.iter().map(move |&s| (k, s))).collect();
    let envs: Vec<NonStationaryEnv> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(k, seed)| build_environment(config, &config.kernels[k], seed))
            .collect::<Result<_>>()
    })?;
    let resolved: Vec<Vec<ResolvedPolicy>> = pairs
        .iter()
        .zip(&envs)
        .map(|(&(k, _), env)| {
            config
                .policies
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    resolve_policy(config, p, &config.kernels[k], env)
                        .map_err(|e| Error::config(format!("policies[{i}]"), e.to_string()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> =
        (0..pairs.len()).flat_map(|e| (0..config.policies.len()).map(move |p| (e, p))).collect();
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e, p)| {
                let (k, seed) = pairs[e];
                run_policy(config, &config.policies[p], &resolved[e][p], &config.kernels[k], &envs[e], seed)
            })
            .collect::<Result<_>>()
    })?;

    let mut kernels = Vec::with_capacity(config.kernels.len());
    let mut kernel_manifest = Vec::new();
    let per_kernel = config.seeds.len() * config.policies.len();
    for (k, kernel) in config.kernels.iter().enumerate() {
        let recs: Vec<RunRecord> = records[k * per_kernel..(k + 1) * per_kernel].to_vec();
        let curves = aggregate(&recs)?;
        let runs: Vec<serde_json::Value> = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(kk, _))| kk == k)
            .map(|(e, &(_, seed))| {
                let env = &envs[e];
                let deviations: Vec<&Vec<String>> =
                    records[e * config.policies.len()..(e + 1) * config.policies.len()].iter().map(|r| &r.deviations).collect();
                json!({
                    "seed": seed,
                    "V_T": env.total_variation(),
                    "B": env.rkhs_bound(),
                    "breakpoints": env.breakpoints(),
                    "policies": resolved[e],
                    "deviations": deviations,
                })
            })
            .collect();
        let horizon = config.environment.horizon as f64;
        let gamma = (horizon > 1.0)
            .then(|| crate::algorithms::gamma_proxy(kernel.family, horizon, config.environment.grid.dim, nu_or_zero(kernel)))
            .transpose()?;
        kernel_manifest.push(json!({
            "label": kernel.label(),
            "kernel": kernel.spec()?,
            "csv": format!("regret_{}.csv", kernel.label()),
            "gamma_proxy": gamma,
            "runs": runs,
        }));
        kernels.push(KernelResults {
            kernel: *kernel,
            records: recs,
            curves,
        });
    }

    // the echo leaves out settings that cannot affect results
    let mut echo = serde_json::to_value(config).expect("config serialises");
    if let Some(obj) = echo.as_object_mut() {
        obj.remove("workers");
        obj.remove("output_dir");
        obj.remove("plot");
    }
    let manifest = json!({
        "config": echo,
        "n_arms": envs.first().map(|e| e.n_arms()),
        "kernels": kernel_manifest,
    });
    Ok(Experiment {
        config: config.clone(),
        kernels,
        manifest,
    })
}

/// Runs the experiment and writes CSVs, `manifest.json` and (optionally)
/// `regret.svg` to `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let experiment = execute(config)?;
    persist(&experiment)?;
    Ok(experiment)
}

pub fn persist(experiment: &Experiment) -> Result<()> {
    let dir = &experiment.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for k in &experiment.kernels {
        write_csv(&k.records, &dir.join(k.csv_name()))?;
    }
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&experiment.manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    if experiment.config.plot {
        let panels: Vec<PlotPanel> = experiment
            .kernels
            .iter()
            .map(|k| PlotPanel {
                title: k.kernel.label(),
                curves: k.curves.clone(),
            })
            .collect();
        emit_plot_panels(&panels, &dir.join("regret.svg"))?;
    }
    Ok(())
}

/// Sets `path` (dotted, with numeric segments indexing arrays) in a TOML table.
pub fn set_toml_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(path, "malformed parameter path"));
    }
    let mut cursor = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for part in &parts[1..] {
        cursor = match cursor {
            toml::Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| Error::config(path, format!("{part:?} is not an index")))?;
                let len = a.len();
                a.get_mut(i)
                    .ok_or_else(|| Error::config(path, format!("index {i} out of range (len {len})")))?
            }
            _ => return Err(Error::config(path, format!("cannot descend into a scalar at {part:?}"))),
        };
    }
    *cursor = value;
    Ok(())
}

/// Interprets a sweep value as a TOML literal, falling back to a bare string.
pub fn parse_sweep_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Runs the experiment once per value of `param`, each into
/// `<output_dir>/<param>=<value>`.
pub fn sweep(config_text: &str, param: &str, values: &[String]) -> Result<Vec<(String, Experiment)>> {
    let base: toml::Table = toml::from_str(config_text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let mut out = Vec::with_capacity(values.len());
    for raw in values {
        let mut table = base.clone();
        set_toml_path(&mut table, param, parse_sweep_value(raw))?;
        let mut config = ExperimentConfig::from_table(table)?;
        config.apply_env_overrides()?;
        let name: String = format!("{param}={raw}")
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
            .collect();
        config.output_dir = config.output_dir.join(name);
        out.push((raw.clone(), run_experiment(&config)?));
    }
    Ok(out)
}

/// All rate calculators for one parameter set.
pub fn theory_table(family: KernelFamily, horizon: f64, total_variation: f64, dim: usize, nu: f64) -> Result<Vec<(RateKind, RateValue)>> {
    RateKind::ALL
        .iter()
        .map(|&kind| {
            let q = RateQuery {
                family,
                horizon,
                total_variation,
                dim,
                nu,
                kind,
            };
            Ok((kind, rate_value(&q)?))
        })
        .collect()
}
