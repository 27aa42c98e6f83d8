//! GP posterior inference with a regularised Gram matrix `K + lambda I`.
//!
//! [`PosteriorModel`] is the general, point-based model: fit once, query
//! anywhere. [`IncrementalPosterior`] is the hot-loop variant used by the
//! policies: it tracks the whitened kernel vectors `L^{-1} k(X, x)` of a fixed
//! set of arms so that appending a design point costs `O(arms * n)` and
//! dropping the oldest one (sliding windows) costs `O(n^2 + arms * n)`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Posterior variances are clamped below at this value.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Ordered multiset of design points. Duplicates are allowed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DesignSet {
    pub points: Vec<Vec<f64>>,
}

impl DesignSet {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        Self { points }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Collects the points of `arms` from `domain`, keeping order and repeats.
    pub fn from_arms(domain: &[Vec<f64>], arms: &[usize]) -> Self {
        Self {
            points: arms.iter().map(|&a| domain[a].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lower-triangular factor stored by rows; row `i` has `i + 1` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct LowerFactor {
    rows: Vec<Vec<f64>>,
}

impl LowerFactor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Solves `L z = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(l, z)| l * z).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L^T z = b` in place.
    fn backward_solve(&self, b: &mut [f64]) {
        let n = self.len();
        for i in (0..n).rev() {
            b[i] /= self.rows[i][i];
            let zi = b[i];
            for (j, bj) in b[..i].iter_mut().enumerate() {
                *bj -= self.rows[i][j] * zi;
            }
        }
    }

    /// Appends a row `[l, d]` given the off-diagonal part `l = L^{-1} k` and
    /// the new diagonal entry's square `d2`.
    fn push_row(&mut self, mut l: Vec<f64>, d2: f64, lambda: f64) -> Result<f64> {
        let size = self.len() + 1;
        if !(d2 > 0.0) || !d2.is_finite() {
            return Err(Error::Cholesky {
                row: size - 1,
                size,
                pivot: d2,
                lambda,
            });
        }
        let d = d2.sqrt();
        l.push(d);
        self.rows.push(l);
        Ok(d)
    }

    fn log_det(&self) -> f64 {
        2.0 * self.rows.iter().map(|r| r[r.len() - 1].ln()).sum::<f64>()
    }

    /// Dense `L L^T`.
    #[cfg(test)]
    pub(crate) fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = self.rows[i][..=j]
                    .iter()
                    .zip(&self.rows[j][..=j])
                    .map(|(a, b)| a * b)
                    .sum();
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}

/// Cholesky factorisation of `K(points, points) + lambda I`.
fn factorize(spec: &KernelSpec, lambda: f64, points: &[Vec<f64>]) -> Result<LowerFactor> {
    let mut factor = LowerFactor::default();
    for p in points {
        let mut k: Vec<f64> = points[..factor.len()].iter().map(|q| spec.eval(q, p)).collect();
        factor.forward_solve(&mut k);
        let d2 = spec.eval(p, p) + lambda - k.iter().map(|v| v * v).sum::<f64>();
        factor.push_row(k, d2, lambda)?;
    }
    Ok(factor)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::config("lambda", format!("lambda must be finite and > 0; got {lambda}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Targets {
    raw: Vec<f64>,
    /// `L^{-1} y`
    whitened: Vec<f64>,
    /// `(K + lambda I)^{-1} y`
    solved: Vec<f64>,
}

impl Targets {
    fn new(factor: &LowerFactor, y: &[f64]) -> Self {
        let mut whitened = y.to_vec();
        factor.forward_solve(&mut whitened);
        let mut solved = whitened.clone();
        factor.backward_solve(&mut solved);
        Self {
            raw: y.to_vec(),
            whitened,
            solved,
        }
    }
}

/// Fitted GP posterior. Immutable; [`PosteriorModel::extend`] returns a new value.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorModel {
    spec: KernelSpec,
    lambda: f64,
    design: Vec<Vec<f64>>,
    factor: LowerFactor,
    targets: Option<Targets>,
}

pub fn fit_posterior(
    spec: &KernelSpec,
    lambda: f64,
    design: &DesignSet,
    targets: Option<&[f64]>,
) -> Result<PosteriorModel> {
    check_lambda(lambda)?;
    if let Some(y) = targets {
        if y.len() != design.len() {
            return Err(Error::usage(format!(
                "target length {} does not match design size {}",
                y.len(),
                design.len()
            )));
        }
    }
    let factor = factorize(spec, lambda, &design.points)?;
    let targets = targets.map(|y| Targets::new(&factor, y));
    Ok(PosteriorModel {
        spec: *spec,
        lambda,
        design: design.points.clone(),
        factor,
        targets,
    })
}

impl PosteriorModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn has_targets(&self) -> bool {
        self.targets.is_some()
    }

    /// `(K + lambda I)^{-1} y`, when fitted with targets.
    pub fn solved_targets(&self) -> Option<&[f64]> {
        self.targets.as_ref().map(|t| t.solved.as_slice())
    }

    fn kernel_vector(&self, x: &[f64]) -> Vec<f64> {
        self.design.iter().map(|p| self.spec.eval(p, x)).collect()
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        let t = self
            .targets
            .as_ref()
            .ok_or_else(|| Error::usage("posterior mean requested from a model fitted without targets"))?;
        Ok(self.kernel_vector(x).iter().zip(&t.solved).map(|(k, a)| k * a).sum())
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        let mut v = self.kernel_vector(x);
        self.factor.forward_solve(&mut v);
        let reduction: f64 = v.iter().map(|z| z * z).sum();
        (self.spec.eval(x, x) - reduction).max(VARIANCE_FLOOR)
    }

    pub fn std_dev(&self, x: &[f64]) -> f64 {
        self.variance(x).sqrt()
    }

    /// New model with `point` appended, via a single added factor row.
    /// A model carrying targets needs the matching observation `y`.
    pub fn extend(&self, point: &[f64], y: Option<f64>) -> Result<PosteriorModel> {
        if self.targets.is_some() != y.is_some() {
            return Err(Error::usage(
                "extend: supply an observation exactly when the model carries targets",
            ));
        }
        let mut l = self.kernel_vector(point);
        self.factor.forward_solve(&mut l);
        let d2 = self.spec.eval(point, point) + self.lambda - l.iter().map(|v| v * v).sum::<f64>();
        let mut factor = self.factor.clone();
        factor.push_row(l, d2, self.lambda)?;
        let mut design = self.design.clone();
        design.push(point.to_vec());
        let targets = match (&self.targets, y) {
            (Some(t), Some(y)) => {
                let mut raw = t.raw.clone();
                raw.push(y);
                Some(Targets::new(&factor, &raw))
            }
            _ => None,
        };
        Ok(PosteriorModel {
            spec: self.spec,
            lambda: self.lambda,
            design,
            factor,
            targets,
        })
    }

    /// `ln det(K + lambda I)`.
    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    #[cfg(test)]
    pub(crate) fn factor(&self) -> &LowerFactor {
        &self.factor
    }
}

pub fn posterior_mean(model: &PosteriorModel, x: &[f64]) -> Result<f64> {
    model.mean(x)
}

pub fn posterior_variance(model: &PosteriorModel, x: &[f64]) -> f64 {
    model.variance(x)
}

/// `1/2 ln det(I + K(X, X) / lambda)`.
pub fn information_gain(spec: &KernelSpec, lambda: f64, design: &DesignSet) -> Result<f64> {
    check_lambda(lambda)?;
    let factor = factorize(spec, lambda, &design.points)?;
    Ok(0.5 * (factor.log_det() - design.len() as f64 * lambda.ln()))
}

/// Running greedy information-gain bound: entry `n - 1` is the bound after
/// `n` greedy maximum-variance picks over `domain`.
pub fn greedy_mig_curve(
    spec: &KernelSpec,
    lambda: f64,
    domain: &[Vec<f64>],
    rounds: usize,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if domain.is_empty() {
        return Err(Error::usage("greedy MIG bound needs a non-empty domain"));
    }
    let mut tracker = IncrementalPosterior::new(*spec, lambda, domain, (0..domain.len()).collect(), false)?;
    let mut acc = 0.0;
    let mut curve = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let slot = tracker.argmax_variance();
        acc += 0.5 * (1.0 + tracker.variance(slot) / lambda).ln();
        curve.push(acc);
        tracker.push(tracker.arm(slot), None)?;
    }
    Ok(curve)
}

/// Greedy maximum-variance upper proxy for the maximum information gain after `rounds` picks.
pub fn greedy_mig_bound(spec: &KernelSpec, lambda: f64, domain: &[Vec<f64>], rounds: usize) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::usage("greedy MIG bound needs at least one round"));
    }
    Ok(*greedy_mig_curve(spec, lambda, domain, rounds)?.last().expect("rounds >= 1"))
}

/// Incrementally maintained posterior over a fixed universe of arms.
///
/// Only `tracked` arms get cached whitened kernel vectors; design points may
/// be any arm of the universe.
#[derive(Clone, Debug)]
pub struct IncrementalPosterior<'a> {
    spec: KernelSpec,
    lambda: f64,
    universe: &'a [Vec<f64>],
    tracked: Vec<usize>,
    slot_of: Vec<Option<usize>>,
    /// `L^{-1} k(X, x)` per tracked slot.
    proj: Vec<Vec<f64>>,
    var: Vec<f64>,
    factor: LowerFactor,
    design: VecDeque<usize>,
    observations: Option<VecDeque<f64>>,
    /// `L^{-1} y` when observations are carried.
    whitened: Vec<f64>,
}

impl<'a> IncrementalPosterior<'a> {
    pub fn new(
        spec: KernelSpec,
        lambda: f64,
        universe: &'a [Vec<f64>],
        tracked: Vec<usize>,
        with_targets: bool,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let mut slot_of = vec![None; universe.len()];
        for (slot, &arm) in tracked.iter().enumerate() {
            if arm >= universe.len() {
                return Err(Error::usage(format!("tracked arm {arm} outside a universe of {}", universe.len())));
            }
            slot_of[arm] = Some(slot);
        }
        let var = tracked
            .iter()
            .map(|&a| spec.eval(&universe[a], &universe[a]))
            .collect();
        Ok(Self {
            spec,
            lambda,
            universe,
            proj: vec![Vec::new(); tracked.len()],
            tracked,
            slot_of,
            var,
            factor: LowerFactor::default(),
            design: VecDeque::new(),
            observations: with_targets.then(VecDeque::new),
            whitened: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    pub fn tracked(&self) -> &[usize] {
        &self.tracked
    }

    pub fn arm(&self, slot: usize) -> usize {
        self.tracked[slot]
    }

    /// Design arms, oldest first.
    pub fn design(&self) -> impl Iterator<Item = usize> + '_ {
        self.design.iter().copied()
    }

    pub fn variance(&self, slot: usize) -> f64 {
        self.var[slot].max(VARIANCE_FLOOR)
    }

    /// Posterior mean for a tracked slot; zero when no observations are carried.
    pub fn mean(&self, slot: usize) -> f64 {
        self.proj[slot].iter().zip(&self.whitened).map(|(a, b)| a * b).sum()
    }

    /// Slot of maximal variance, lowest slot on ties.
    pub fn argmax_variance(&self) -> usize {
        let mut best = 0;
        for slot in 1..self.var.len() {
            if self.variance(slot) > self.variance(best) {
                best = slot;
            }
        }
        best
    }

    fn whitened_kernel(&self, arm: usize) -> Vec<f64> {
        match self.slot_of[arm] {
            Some(slot) => self.proj[slot].clone(),
            None => {
                let x = &self.universe[arm];
                let mut v: Vec<f64> = self.design.iter().map(|&d| self.spec.eval(&self.universe[d], x)).collect();
                self.factor.forward_solve(&mut v);
                v
            }
        }
    }

    /// Appends `arm` to the design (with its observation when targets are carried).
    pub fn push(&mut self, arm: usize, y: Option<f64>) -> Result<()> {
        if self.observations.is_some() != y.is_some() {
            return Err(Error::usage("push: observation required exactly when targets are carried"));
        }
        let p = &self.universe[arm];
        let l = self.whitened_kernel(arm);
        let d2 = self.spec.eval(p, p) + self.lambda - l.iter().map(|v| v * v).sum::<f64>();
        let d = self.factor.push_row(l, d2, self.lambda)?;
        let l = &self.factor.rows[self.factor.len() - 1];
        let n = l.len() - 1;
        for (slot, &x_arm) in self.tracked.iter().enumerate() {
            let v = &mut self.proj[slot];
            let dot: f64 = v.iter().zip(&l[..n]).map(|(a, b)| a * b).sum();
            let c = (self.spec.eval(&self.universe[x_arm], p) - dot) / d;
            v.push(c);
            self.var[slot] -= c * c;
        }
        if let (Some(obs), Some(y)) = (self.observations.as_mut(), y) {
            let dot: f64 = self.whitened.iter().zip(&l[..n]).map(|(a, b)| a * b).sum();
            self.whitened.push((y - dot) / d);
            obs.push_back(y);
        }
        self.design.push_back(arm);
        Ok(())
    }

    /// Removes the oldest design point.
    ///
    /// With `L = [[a, 0], [u, M]]`, the remaining block is `M M^T + u u^T`;
    /// its factor comes from Givens rotations folding the column `u` into
    /// `M`. The same rotations carry every cached `L^{-1} k` vector (and
    /// `L^{-1} y`) over to the new factor.
    pub fn pop_front(&mut self) {
        if self.design.is_empty() {
            return;
        }
        self.design.pop_front();
        if let Some(obs) = self.observations.as_mut() {
            obs.pop_front();
        }
        let mut rows = std::mem::take(&mut self.factor.rows);
        rows.remove(0);
        let m = rows.len();
        // u = first column of the remaining rows; rows become M
        let mut u: Vec<f64> = rows.iter_mut().map(|r| r.remove(0)).collect();
        let mut rotations = Vec::with_capacity(m);
        for k in 0..m {
            let lkk = rows[k][k];
            let r = lkk.hypot(u[k]);
            let (c, s) = (lkk / r, u[k] / r);
            rows[k][k] = r;
            for i in k + 1..m {
                let lik = rows[i][k];
                rows[i][k] = c * lik + s * u[i];
                u[i] = c * u[i] - s * lik;
            }
            rotations.push((c, s));
        }
        self.factor.rows = rows;

        let rotate = |z: &mut Vec<f64>| {
            // z = [z_removed, z_rest...]; the removed coordinate plays the role of u
            let mut zu = z.remove(0);
            for (k, &(c, s)) in rotations.iter().enumerate() {
                let zk = z[k];
                z[k] = c * zk + s * zu;
                zu = c * zu - s * zk;
            }
        };
        for slot in 0..self.tracked.len() {
            rotate(&mut self.proj[slot]);
            let x = &self.universe[self.tracked[slot]];
            self.var[slot] = self.spec.eval(x, x) - self.proj[slot].iter().map(|v| v * v).sum::<f64>();
        }
        if self.observations.is_some() {
            rotate(&mut self.whitened);
        }
    }

    /// Drops the whole design, keeping the tracked arms.
    pub fn clear(&mut self) {
        self.factor = LowerFactor::default();
        self.design.clear();
        if let Some(obs) = self.observations.as_mut() {
            obs.clear();
        }
        self.whitened.clear();
        for (slot, &arm) in self.tracked.iter().enumerate() {
            self.proj[slot].clear();
            let x = &self.universe[arm];
            self.var[slot] = self.spec.eval(x, x);
        }
    }

    /// Attaches observations (in design order) to a target-free tracker.
    pub fn attach_targets(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != self.design.len() {
            return Err(Error::usage(format!(
                "attach_targets: {} observations for {} design points",
                y.len(),
                self.design.len()
            )));
        }
        let mut w = y.to_vec();
        self.factor.forward_solve(&mut w);
        self.whitened = w;
        self.observations = Some(y.iter().copied().collect());
        Ok(())
    }

    /// Snapshot as a point-based [`PosteriorModel`] sharing the current factor.
    pub fn to_model(&self) -> PosteriorModel {
        let design: Vec<Vec<f64>> = self.design.iter().map(|&a| self.universe[a].clone()).collect();
        let targets = self.observations.as_ref().map(|obs| {
            let raw: Vec<f64> = obs.iter().copied().collect();
            let mut solved = self.whitened.clone();
            self.factor.backward_solve(&mut solved);
            Targets {
                raw,
                whitened: self.whitened.clone(),
                solved,
            }
        });
        PosteriorModel {
            spec: self.spec,
            lambda: self.lambda,
            design,
            factor: self.factor.clone(),
            targets,
        }
    }
}
