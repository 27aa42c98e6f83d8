use serde::Serialize;

/// One environment step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub t: usize,
    pub arm: usize,
    pub y: f64,
    pub regret: f64,
    pub cumulative_regret: f64,
}

/// Bookkeeping for one R-PERP batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub size: usize,
    pub active_before: usize,
    /// `None` for the interval's final batch, which never eliminates.
    pub active_after: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunCounters {
    /// Restart intervals started (R-PERP, R-GP-UCB).
    pub intervals: usize,
    /// Per interval, per batch (R-PERP only).
    pub batches: Vec<Vec<BatchStats>>,
    /// Largest GP design used for a decision (UCB baselines).
    pub max_design_size: usize,
}

impl RunCounters {
    pub fn eliminating_batches(&self) -> Vec<usize> {
        self.batches
            .iter()
            .map(|b| b.iter().filter(|s| s.active_after.is_some()).count())
            .collect()
    }
}

/// Full trace of one policy run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: String,
    pub seed: Option<u64>,
    pub rows: Vec<StepRow>,
    pub counters: RunCounters,
    /// Resolved policy parameters.
    pub config: serde_json::Value,
    /// Settings that depart from the theoretical defaults.
    pub deviations: Vec<String>,
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cumulative_regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_regret)
    }

    pub fn arms(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.arm).collect()
    }
}

/// Accumulates step rows with a running regret sum.
#[derive(Debug, Default)]
pub(crate) struct Recorder {
    rows: Vec<StepRow>,
    total: f64,
}

impl Recorder {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            rows: Vec::with_capacity(n),
            total: 0.0,
        }
    }

    pub(crate) fn push(&mut self, t: usize, arm: usize, y: f64, regret: f64) {
        self.total += regret;
        self.rows.push(StepRow {
            t,
            arm,
            y,
            regret,
            cumulative_regret: self.total,
        });
    }

    pub(crate) fn finish(
        self,
        policy: &str,
        counters: RunCounters,
        config: serde_json::Value,
        deviations: Vec<String>,
    ) -> RunRecord {
        RunRecord {
            policy: policy.to_string(),
            seed: None,
            rows: self.rows,
            counters,
            config,
            deviations,
        }
    }
}
