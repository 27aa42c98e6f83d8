//! GP-UCB baselines with bounded memory: periodic restarts (R-GP-UCB) or a
//! sliding window over the most recent observations (SW-GP-UCB).

use rand::Rng;
use serde::Serialize;

use super::{Recorder, RunCounters, RunRecord};
use crate::environment::NonStationaryEnv;
use crate::error::{Error, Result};
use crate::gp::IncrementalPosterior;
use crate::kernels::KernelSpec;

/// `beta_n^{1/2} = B + rho / sqrt(lambda) * sqrt(2 (gamma_n + 1 + ln(1/delta)))`
/// with `gamma_n` read off a greedy information-gain curve at design size `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UcbWidth {
    pub rkhs_bound: f64,
    pub noise_scale: f64,
    pub lambda: f64,
    pub delta: f64,
    /// `mig[n - 1]` is the gain proxy after `n` points; sizes past the end reuse the last entry.
    #[serde(skip)]
    pub mig: Vec<f64>,
}

impl UcbWidth {
    pub fn at(&self, n: usize) -> f64 {
        let gamma = match n {
            0 => 0.0,
            _ => self.mig.get(n - 1).or(self.mig.last()).copied().unwrap_or(0.0),
        };
        self.rkhs_bound
            + self.noise_scale / self.lambda.sqrt() * (2.0 * (gamma + 1.0 + (1.0 / self.delta).ln())).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UcbConfig {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub width: UcbWidth,
}

/// How much history the baseline keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Memory {
    /// Forget everything every `H` steps.
    Restart(usize),
    /// Keep the last `W` observations.
    Sliding(usize),
}

impl Memory {
    fn validate(self) -> Result<()> {
        match self {
            Memory::Restart(0) => Err(Error::config("H", "restart interval must be >= 1")),
            Memory::Sliding(0) => Err(Error::config("W", "window must be >= 1")),
            _ => Ok(()),
        }
    }
}

pub fn run_r_gp_ucb<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &UcbConfig,
    interval: usize,
    rng: &mut R,
) -> Result<RunRecord> {
    run_inner(env, config, Memory::Restart(interval), rng, None)
}

pub fn run_sw_gp_ucb<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &UcbConfig,
    window: usize,
    rng: &mut R,
) -> Result<RunRecord> {
    run_inner(env, config, Memory::Sliding(window), rng, None)
}

/// Either baseline, calling `observer(t, design)` before each decision with
/// the arms currently in memory (oldest first).
pub fn run_ucb_observed<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &UcbConfig,
    memory: Memory,
    rng: &mut R,
    observer: &mut dyn FnMut(usize, &[usize]),
) -> Result<RunRecord> {
    run_inner(env, config, memory, rng, Some(observer))
}

fn run_inner<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &UcbConfig,
    memory: Memory,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(usize, &[usize])>,
) -> Result<RunRecord> {
    memory.validate()?;
    let domain = env.grid().points();
    let mut post = IncrementalPosterior::new(config.kernel, config.lambda, domain, (0..domain.len()).collect(), true)?;
    let mut rec = Recorder::with_capacity(env.horizon());
    let mut counters = RunCounters::default();

    for t in 1..=env.horizon() {
        if let Memory::Restart(h) = memory {
            if (t - 1) % h == 0 {
                post.clear();
                counters.intervals += 1;
            }
        }
        if let Some(obs) = observer.as_mut() {
            let design: Vec<usize> = post.design().collect();
            obs(t, &design);
        }
        counters.max_design_size = counters.max_design_size.max(post.len());

        let beta = config.width.at(post.len());
        let mut best = (0, f64::NEG_INFINITY);
        for slot in 0..domain.len() {
            let score = post.mean(slot) + beta * post.variance(slot).sqrt();
            if score > best.1 {
                best = (slot, score);
            }
        }
        let arm = post.arm(best.0);
        let y = env.observe(t, arm, rng)?;
        rec.push(t, arm, y, env.regret(t, arm)?);
        post.push(arm, Some(y))?;
        if let Memory::Sliding(w) = memory {
            if post.len() > w {
                post.pop_front();
            }
        }
    }

    let (policy, echo) = match memory {
        Memory::Restart(h) => ("r_gp_ucb", serde_json::json!({ "config": config, "H": h })),
        Memory::Sliding(w) => ("sw_gp_ucb", serde_json::json!({ "config": config, "W": w })),
    };
    Ok(rec.finish(policy, counters, echo, Vec::new()))
}
