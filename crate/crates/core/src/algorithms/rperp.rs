//! Restarting phased elimination with random permutation (R-PERP).
//!
//! The horizon is cut into restart intervals of `H` steps. Inside an
//! interval, batches of geometrically growing size are chosen by greedy
//! posterior-variance maximisation over the surviving arms, played in a
//! uniformly random order, and then used on their own to build confidence
//! bounds that prune the surviving set. The last batch of an interval only
//! collects reward.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::schedule::batch_size;
use super::{BatchStats, Recorder, RunCounters, RunRecord};
use crate::environment::NonStationaryEnv;
use crate::error::{Error, Result};
use crate::gp::{fit_posterior, DesignSet, IncrementalPosterior, PosteriorModel};
use crate::kernels::KernelSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RPerpConfig {
    /// Restart interval `H`.
    pub interval: usize,
    /// Confidence width `beta^{1/2}` before scaling.
    pub beta_sqrt: f64,
    pub lambda: f64,
    pub kernel: KernelSpec,
    /// Multiplier on `beta_sqrt`; anything but 1 is flagged in the record.
    pub beta_scale: f64,
    /// Refit every posterior from scratch instead of using rank-one updates.
    pub exact_refit: bool,
}

impl RPerpConfig {
    pub fn new(kernel: KernelSpec, interval: usize, beta_sqrt: f64) -> Self {
        Self {
            interval,
            beta_sqrt,
            lambda: 1.0,
            kernel,
            beta_scale: 1.0,
            exact_refit: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.beta_sqrt * self.beta_scale
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if self.interval < 2 || self.interval > horizon {
            return Err(Error::config(
                "H",
                format!("restart interval must lie in [2, {horizon}]; got {}", self.interval),
            ));
        }
        if !(self.beta_sqrt.is_finite() && self.beta_sqrt > 0.0) {
            return Err(Error::config("beta_sqrt", format!("must be > 0; got {}", self.beta_sqrt)));
        }
        if !(self.beta_scale.is_finite() && self.beta_scale > 0.0) {
            return Err(Error::config("beta_scale", format!("must be > 0; got {}", self.beta_scale)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config("lambda", format!("must be > 0; got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Greedy maximum-variance batch over `active` together with the tracker
/// holding its factorisation.
#[derive(Clone, Debug)]
pub struct CandidateBatch<'a> {
    /// Picked arms in pick order; may repeat.
    pub arms: Vec<usize>,
    /// Posterior variance of each pick at the moment it was picked.
    pub variances: Vec<f64>,
    tracker: IncrementalPosterior<'a>,
}

impl<'a> CandidateBatch<'a> {
    pub fn into_tracker(self) -> IncrementalPosterior<'a> {
        self.tracker
    }
}

fn check_selection(active: &[usize], n: usize) -> Result<()> {
    if active.is_empty() {
        return Err(Error::usage("candidate selection over an empty arm set"));
    }
    if n == 0 {
        return Err(Error::usage("candidate selection needs a batch size >= 1"));
    }
    Ok(())
}

/// Picks `n` arms from `active`, each maximising the posterior variance given
/// the picks so far (lowest arm index on ties). Targets play no role.
pub fn select_candidates<'a>(
    spec: &KernelSpec,
    lambda: f64,
    domain: &'a [Vec<f64>],
    active: &[usize],
    n: usize,
) -> Result<CandidateBatch<'a>> {
    check_selection(active, n)?;
    let mut tracked = active.to_vec();
    tracked.sort_unstable();
    let mut tracker = IncrementalPosterior::new(*spec, lambda, domain, tracked, false)?;
    let mut arms = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for _ in 0..n {
        let slot = tracker.argmax_variance();
        let arm = tracker.arm(slot);
        variances.push(tracker.variance(slot));
        tracker.push(arm, None)?;
        arms.push(arm);
    }
    Ok(CandidateBatch {
        arms,
        variances,
        tracker,
    })
}

/// Same rule as [`select_candidates`], refitting the posterior from scratch
/// before every pick.
pub fn select_candidates_exact(
    spec: &KernelSpec,
    lambda: f64,
    domain: &[Vec<f64>],
    active: &[usize],
    n: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    check_selection(active, n)?;
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    let mut arms: Vec<usize> = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for _ in 0..n {
        let model = fit_posterior(spec, lambda, &DesignSet::from_arms(domain, &arms), None)?;
        let (mut best, mut best_var) = (sorted[0], f64::NEG_INFINITY);
        for &a in &sorted {
            let v = model.variance(&domain[a]);
            if v > best_var {
                best = a;
                best_var = v;
            }
        }
        arms.push(best);
        variances.push(best_var);
    }
    Ok((arms, variances))
}

/// Uniformly random reordering (Fisher-Yates).
pub fn permute_candidates<T: Clone, R: Rng + ?Sized>(candidates: &[T], rng: &mut R) -> Vec<T> {
    let mut out = candidates.to_vec();
    out.shuffle(rng);
    out
}

/// Keeps the arms whose `ucb` reaches the best `lcb`. `lcb[k]`, `ucb[k]`
/// belong to `active[k]`. The arm attaining the best `lcb` always survives.
pub fn eliminate(active: &[usize], lcb: &[f64], ucb: &[f64]) -> Vec<usize> {
    assert_eq!(active.len(), lcb.len(), "one lcb per arm");
    assert_eq!(active.len(), ucb.len(), "one ucb per arm");
    let best_lcb = lcb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    active
        .iter()
        .zip(ucb)
        .filter(|(_, &u)| u >= best_lcb)
        .map(|(&a, _)| a)
        .collect()
}

/// What an observer sees after each eliminating batch.
#[derive(Debug)]
pub struct BatchReport<'r> {
    /// 1-based restart interval index.
    pub interval: usize,
    /// 1-based batch index within the interval.
    pub batch: usize,
    /// Global step of the batch's first observation.
    pub first_step: usize,
    /// Arms in the order they were played.
    pub arms: &'r [usize],
    pub observations: &'r [f64],
    /// Posterior fitted on this batch alone.
    pub model: &'r PosteriorModel,
    /// Width actually used (`beta_sqrt * beta_scale`).
    pub width: f64,
    pub active_before: &'r [usize],
    pub active_after: &'r [usize],
}

pub fn run_rperp<R: Rng + ?Sized>(env: &NonStationaryEnv, config: &RPerpConfig, rng: &mut R) -> Result<RunRecord> {
    run_inner(env, config, rng, None)
}

/// [`run_rperp`] with a callback after every eliminating batch.
pub fn run_rperp_observed<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &RPerpConfig,
    rng: &mut R,
    observer: &mut dyn FnMut(&BatchReport<'_>),
) -> Result<RunRecord> {
    run_inner(env, config, rng, Some(observer))
}

fn run_inner<R: Rng + ?Sized>(
    env: &NonStationaryEnv,
    config: &RPerpConfig,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(&BatchReport<'_>)>,
) -> Result<RunRecord> {
    let horizon = env.horizon();
    config.validate(horizon)?;
    let domain = env.grid().points();
    let spec = &config.kernel;
    let lambda = config.lambda;
    let width = config.width();

    let mut rec = Recorder::with_capacity(horizon);
    let mut counters = RunCounters::default();
    let mut t = 1;

    for interval in 1..=horizon.div_ceil(config.interval) {
        let interval_len = config.interval.min(horizon - (interval - 1) * config.interval);
        let mut active: Vec<usize> = (0..env.n_arms()).collect();
        let (mut prev, mut consumed) = (1, 0);
        let mut stats = Vec::new();
        counters.intervals += 1;

        for batch in 1.. {
            let n = batch_size(interval_len, prev, consumed)?;
            let (picked, tracker) = if config.exact_refit {
                (select_candidates_exact(spec, lambda, domain, &active, n)?.0, None)
            } else {
                let c = select_candidates(spec, lambda, domain, &active, n)?;
                (c.arms.clone(), Some(c.into_tracker()))
            };
            // order[m] = picked[perm[m]]
            let perm: Vec<usize> = permute_candidates(&(0..n).collect::<Vec<_>>(), rng);
            let order: Vec<usize> = perm.iter().map(|&p| picked[p]).collect();

            let first_step = t;
            let mut ys = Vec::with_capacity(n);
            for &arm in &order {
                let y = env.observe(t, arm, rng)?;
                rec.push(t, arm, y, env.regret(t, arm)?);
                ys.push(y);
                t += 1;
            }
            consumed += n;

            if consumed == interval_len {
                stats.push(BatchStats {
                    size: n,
                    active_before: active.len(),
                    active_after: None,
                });
                break;
            }

            let (lcb, ucb, model) = match tracker {
                Some(mut tracker) => {
                    // the batch posterior is order-free: map y back to pick order
                    let mut y_pick = vec![0.0; n];
                    for (m, &p) in perm.iter().enumerate() {
                        y_pick[p] = ys[m];
                    }
                    tracker.attach_targets(&y_pick)?;
                    // tracked slots are `active` sorted, which `active` already is
                    let (lcb, ucb): (Vec<f64>, Vec<f64>) = (0..active.len())
                        .map(|slot| {
                            let mu = tracker.mean(slot);
                            let s = width * tracker.variance(slot).sqrt();
                            (mu - s, mu + s)
                        })
                        .unzip();
                    let model = observer.is_some().then(|| tracker.to_model());
                    (lcb, ucb, model)
                }
                None => {
                    let model = fit_posterior(spec, lambda, &DesignSet::from_arms(domain, &order), Some(&ys))?;
                    let mut lcb = Vec::with_capacity(active.len());
                    let mut ucb = Vec::with_capacity(active.len());
                    for &a in &active {
                        let mu = model.mean(&domain[a])?;
                        let s = width * model.std_dev(&domain[a]);
                        lcb.push(mu - s);
                        ucb.push(mu + s);
                    }
                    (lcb, ucb, Some(model))
                }
            };

            let survivors = eliminate(&active, &lcb, &ucb);
            debug_assert!(!survivors.is_empty());
            if let (Some(obs), Some(model)) = (observer.as_mut(), model.as_ref()) {
                obs(&BatchReport {
                    interval,
                    batch,
                    first_step,
                    arms: &order,
                    observations: &ys,
                    model,
                    width,
                    active_before: &active,
                    active_after: &survivors,
                });
            }
            stats.push(BatchStats {
                size: n,
                active_before: active.len(),
                active_after: Some(survivors.len()),
            });
            active = survivors;
            prev = n;
        }
        counters.batches.push(stats);
    }
    debug_assert_eq!(t, horizon + 1);

    let mut deviations = Vec::new();
    if config.beta_scale != 1.0 {
        deviations.push(format!("beta_scale = {}", config.beta_scale));
    }
    let echo = serde_json::to_value(config).expect("config serialises");
    Ok(rec.finish("rperp", counters, echo, deviations))
}
