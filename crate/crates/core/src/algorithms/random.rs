use rand::Rng;

use super::{Recorder, RunCounters, RunRecord};
use crate::environment::NonStationaryEnv;
use crate::error::Result;

/// Uniformly random arm at every step.
pub fn run_random<R: Rng + ?Sized>(env: &NonStationaryEnv, rng: &mut R) -> Result<RunRecord> {
    let n = env.n_arms();
    let mut rec = Recorder::with_capacity(env.horizon());
    for t in 1..=env.horizon() {
        let arm = rng.gen_range(0..n);
        let y = env.observe(t, arm, rng)?;
        rec.push(t, arm, y, env.regret(t, arm)?);
    }
    Ok(rec.finish("random", RunCounters::default(), serde_json::json!({}), Vec::new()))
}
