//! Bandit policies over a [`NonStationaryEnv`](crate::environment::NonStationaryEnv).
//!
//! Each `run_*` function drives one policy for the environment's full
//! horizon and returns a [`RunRecord`]. All randomness (permutations, random
//! arms, observation noise) comes from the generator passed in, so a fixed
//! seed reproduces the trace exactly. Ties are broken towards the lowest arm
//! index.

mod random;
mod record;
mod rperp;
mod schedule;
mod ucb;

pub use random::run_random;
pub use record::{BatchStats, RunCounters, RunRecord, StepRow};
pub use rperp::{
    eliminate, permute_candidates, run_rperp, run_rperp_observed, select_candidates, select_candidates_exact,
    BatchReport, CandidateBatch, RPerpConfig,
};
pub use schedule::{
    baseline_window, batch_schedule, batch_size, batches_per_interval_bound, beta_width, gamma_proxy,
    restart_interval, total_batch_budget, BetaParams,
};
pub use ucb::{run_r_gp_ucb, run_sw_gp_ucb, run_ucb_observed, Memory, UcbConfig, UcbWidth};

pub(crate) use record::Recorder;
