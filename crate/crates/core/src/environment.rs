//! Oblivious non-stationary reward environments on a finite grid.
//!
//! Every reward function is a finite kernel expansion `sum_i a_i k(., c_i)`
//! whose values on the grid are cached at construction, so regrets and
//! sup-norm gaps are exact.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Regular grid over `[0, 1]^dim` with `per_axis` evenly spaced coordinates
/// per axis (endpoints included), enumerated with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    per_axis: usize,
    points: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("environment.grid.dim", "grid dimension must be >= 1"));
        }
        if per_axis == 0 {
            return Err(Error::config("environment.grid.per_axis", "need at least one point per axis"));
        }
        let total = per_axis
            .checked_pow(dim as u32)
            .filter(|&n| n <= 1 << 22)
            .ok_or_else(|| Error::config("environment.grid", "grid too large"))?;
        let coord = |i: usize| {
            if per_axis == 1 {
                0.0
            } else {
                i as f64 / (per_axis - 1) as f64
            }
        };
        let points = (0..total)
            .map(|mut flat| {
                let mut p = vec![0.0; dim];
                for axis in (0..dim).rev() {
                    p[axis] = coord(flat % per_axis);
                    flat /= per_axis;
                }
                p
            })
            .collect();
        Ok(Self { dim, per_axis, points })
    }

    /// Grid over explicit points (not necessarily a lattice).
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::usage("empty domain"))?;
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::usage("domain points must share a positive dimension"));
        }
        Ok(Self {
            dim,
            per_axis: 0,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis; zero for grids built from explicit points.
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-axis bounding box of the points.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|a| {
                self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[a]), hi.max(p[a]))
                })
            })
            .collect()
    }
}

/// `f(x) = sum_i weights[i] * k(x, centers[i])` with grid values cached.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardFunction {
    spec: KernelSpec,
    centers: Vec<Vec<f64>>,
    weights: Vec<f64>,
    values: Vec<f64>,
    argmax: usize,
    rkhs_norm: f64,
}

impl RewardFunction {
    pub fn new(spec: KernelSpec, centers: Vec<Vec<f64>>, weights: Vec<f64>, grid: &Grid) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(Error::usage("reward function needs matching, non-empty centers and weights"));
        }
        if centers.iter().any(|c| c.len() != grid.dim()) {
            return Err(Error::usage("center dimension does not match the grid"));
        }
        let eval = |x: &[f64]| -> f64 {
            centers.iter().zip(&weights).map(|(c, w)| w * spec.eval(x, c)).sum()
        };
        let values: Vec<f64> = grid.points().iter().map(|p| eval(p)).collect();
        let mut argmax = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[argmax] {
                argmax = i;
            }
        }
        let gram = crate::kernels::gram_matrix(&spec, &centers);
        let quad: f64 = (0..weights.len())
            .map(|i| weights[i] * (0..weights.len()).map(|j| gram[i][j] * weights[j]).sum::<f64>())
            .sum();
        Ok(Self {
            spec,
            centers,
            weights,
            values,
            argmax,
            rkhs_norm: quad.max(0.0).sqrt(),
        })
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * self.spec.eval(x, c))
            .sum()
    }

    pub fn grid_value(&self, arm: usize) -> f64 {
        self.values[arm]
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    /// Lowest-index maximiser over the grid.
    pub fn argmax(&self) -> usize {
        self.argmax
    }

    pub fn max(&self) -> f64 {
        self.values[self.argmax]
    }

    /// `sqrt(a^T K(C, C) a)`.
    pub fn rkhs_norm(&self) -> f64 {
        self.rkhs_norm
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `max over the grid of |self - other|`.
    pub fn sup_gap(&self, other: &RewardFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Draws `n_centers` centres uniformly from the grid's bounding box and
/// weights uniformly from `[-1, 1]`.
pub fn sample_rkhs_function<R: Rng + ?Sized>(
    spec: &KernelSpec,
    n_centers: usize,
    grid: &Grid,
    rng: &mut R,
) -> Result<RewardFunction> {
    if n_centers == 0 {
        return Err(Error::config("environment.U", "need at least one center"));
    }
    let bounds = grid.bounds();
    let mut centers = Vec::with_capacity(n_centers);
    let mut weights = Vec::with_capacity(n_centers);
    for _ in 0..n_centers {
        centers.push(
            bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect(),
        );
        weights.push(rng.gen_range(-1.0..=1.0));
    }
    RewardFunction::new(*spec, centers, weights, grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Stationary,
    Abrupt,
    Interval,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// First step (1-based) governed by `function`.
    pub start: usize,
    pub function: RewardFunction,
}

/// Fixed schedule of reward functions over steps `1..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonStationaryEnv {
    kind: EnvKind,
    grid: Grid,
    schedule: Vec<Segment>,
    noise_scale: f64,
    horizon: usize,
}

impl NonStationaryEnv {
    pub fn from_schedule(grid: Grid, schedule: Vec<Segment>, noise_scale: f64, horizon: usize) -> Result<Self> {
        Self::with_kind(EnvKind::Custom, grid, schedule, noise_scale, horizon)
    }

    fn with_kind(
        kind: EnvKind,
        grid: Grid,
        schedule: Vec<Segment>,
        noise_scale: f64,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("environment.T", "horizon must be >= 1"));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::config("environment.rho", format!("noise scale must be >= 0; got {noise_scale}")));
        }
        match schedule.first() {
            Some(s) if s.start == 1 => {}
            _ => return Err(Error::usage("schedule must start at step 1")),
        }
        if schedule.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::usage("schedule breakpoints must be strictly increasing"));
        }
        if schedule.last().map_or(false, |s| s.start > horizon) {
            return Err(Error::usage("schedule breakpoint beyond the horizon"));
        }
        if schedule.iter().any(|s| s.function.grid_values().len() != grid.len()) {
            return Err(Error::usage("reward function was cached on a different grid"));
        }
        Ok(Self {
            kind,
            grid,
            schedule,
            noise_scale,
            horizon,
        })
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_arms(&self) -> usize {
        self.grid.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn schedule(&self) -> &[Segment] {
        &self.schedule
    }

    pub fn breakpoints(&self) -> Vec<usize> {
        self.schedule.iter().map(|s| s.start).collect()
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        let mut ends: Vec<usize> = self.schedule.iter().skip(1).map(|s| s.start).collect();
        ends.push(self.horizon + 1);
        self.schedule.iter().zip(ends).map(|(s, e)| e - s.start).collect()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::usage(format!("step {t} outside 1..={}", self.horizon)));
        }
        Ok(())
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.grid.len() {
            return Err(Error::usage(format!("arm {arm} outside a domain of {} points", self.grid.len())));
        }
        Ok(())
    }

    /// `f_t`, for `t` in `1..=horizon`.
    pub fn function_at(&self, t: usize) -> Result<&RewardFunction> {
        self.check_step(t)?;
        let idx = self.schedule.partition_point(|s| s.start <= t) - 1;
        Ok(&self.schedule[idx].function)
    }

    /// Noisy observation `f_t(x) + rho * eps`, `eps ~ N(0, 1)`.
    ///
    /// One standard normal is drawn per call regardless of `rho`, so the
    /// generator's stream does not depend on the noise scale.
    pub fn observe<R: Rng + ?Sized>(&self, t: usize, arm: usize, rng: &mut R) -> Result<f64> {
        self.check_arm(arm)?;
        let f = self.function_at(t)?;
        let eps: f64 = rng.sample(StandardNormal);
        Ok(f.grid_value(arm) + self.noise_scale * eps)
    }

    /// `max f_t - f_t(x)`; exact since the domain is finite.
    pub fn regret(&self, t: usize, arm: usize) -> Result<f64> {
        self.check_arm(arm)?;
        let f = self.function_at(t)?;
        Ok(f.max() - f.grid_value(arm))
    }

    /// Sum of grid sup-norm gaps between consecutive functions.
    pub fn total_variation(&self) -> f64 {
        self.schedule
            .windows(2)
            .map(|w| w[1].function.sup_gap(&w[0].function))
            .sum()
    }

    /// Largest RKHS norm over the schedule.
    pub fn rkhs_bound(&self) -> f64 {
        self.schedule
            .iter()
            .map(|s| s.function.rkhs_norm())
            .fold(0.0, f64::max)
    }

    /// Batch-average function `(1/len) sum_{t=start}^{start+len-1} f_t` on the grid.
    pub fn average_values(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        if len == 0 {
            return Err(Error::usage("average over an empty step range"));
        }
        self.check_step(start)?;
        self.check_step(start + len - 1)?;
        let mut acc = vec![0.0; self.grid.len()];
        for t in start..start + len {
            for (a, v) in acc.iter_mut().zip(self.function_at(t)?.grid_values()) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= len as f64);
        Ok(acc)
    }
}

pub fn env_observe<R: Rng + ?Sized>(env: &NonStationaryEnv, t: usize, arm: usize, rng: &mut R) -> Result<f64> {
    env.observe(t, arm, rng)
}

pub fn env_regret(env: &NonStationaryEnv, t: usize, arm: usize) -> Result<f64> {
    env.regret(t, arm)
}

pub fn env_total_variation(env: &NonStationaryEnv) -> f64 {
    env.total_variation()
}

pub fn build_stationary_env<R: Rng + ?Sized>(
    spec: &KernelSpec,
    n_centers: usize,
    grid: Grid,
    horizon: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<NonStationaryEnv> {
    let function = sample_rkhs_function(spec, n_centers, &grid, rng)?;
    NonStationaryEnv::with_kind(
        EnvKind::Stationary,
        grid,
        vec![Segment { start: 1, function }],
        noise_scale,
        horizon,
    )
}

/// Three independent functions switching after `floor(T/5)` and `floor(2T/5)` steps.
pub fn build_abrupt_env<R: Rng + ?Sized>(
    spec: &KernelSpec,
    n_centers: usize,
    grid: Grid,
    horizon: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<NonStationaryEnv> {
    if horizon < 5 {
        return Err(Error::config("environment.T", "abrupt environment needs T >= 5"));
    }
    let starts = [1, horizon / 5 + 1, 2 * horizon / 5 + 1];
    let schedule = starts
        .iter()
        .map(|&start| {
            Ok(Segment {
                start,
                function: sample_rkhs_function(spec, n_centers, &grid, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NonStationaryEnv::with_kind(EnvKind::Abrupt, grid, schedule, noise_scale, horizon)
}

/// `ceil(T/H)` consecutive segments of length `H` (the last one shorter),
/// each with its own independently drawn function.
pub fn build_interval_env<R: Rng + ?Sized>(
    spec: &KernelSpec,
    n_centers: usize,
    grid: Grid,
    horizon: usize,
    interval: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<NonStationaryEnv> {
    if interval == 0 || interval > horizon {
        return Err(Error::config(
            "environment.H",
            format!("interval length must lie in [1, {horizon}]; got {interval}"),
        ));
    }
    let schedule = (0..horizon.div_ceil(interval))
        .map(|i| {
            Ok(Segment {
                start: i * interval + 1,
                function: sample_rkhs_function(spec, n_centers, &grid, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NonStationaryEnv::with_kind(EnvKind::Interval, grid, schedule, noise_scale, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn se() -> KernelSpec {
        KernelSpec::se(0.5).unwrap()
    }

    /// Grid-scan oracle for the total variation: walk every step pair.
    fn scan_total_variation(env: &NonStationaryEnv) -> f64 {
        let mut tv = 0.0;
        for t in 2..=env.horizon() {
            let (a, b) = (env.function_at(t - 1).unwrap(), env.function_at(t).unwrap());
            let mut gap: f64 = 0.0;
            for (i, p) in env.grid().points().iter().enumerate() {
                gap = gap.max((b.value_at(p) - a.value_at(p)).abs());
                assert_eq!(a.grid_value(i), a.value_at(p));
            }
            tv += gap;
        }
        tv
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(2, 30).unwrap();
        assert_eq!(g.len(), 900);
        assert_eq!(g.points()[0], vec![0.0, 0.0]);
        assert_eq!(g.points()[1], vec![0.0, 1.0 / 29.0]);
        assert_eq!(g.points()[899], vec![1.0, 1.0]);
        assert!(Grid::new(0, 3).is_err());
        assert!(Grid::new(2, 0).is_err());
    }

    #[test]
    fn single_center_peaks_at_its_center() {
        let g = Grid::new(2, 5).unwrap();
        let center = g.points()[12].clone();
        let f = RewardFunction::new(se(), vec![center.clone()], vec![1.0], &g).unwrap();
        assert_eq!(f.grid_value(12), 1.0);
        assert_eq!(f.argmax(), 12);
        for (i, p) in g.points().iter().enumerate() {
            let r = crate::kernels::distance(p, &center);
            for (j, q) in g.points().iter().enumerate() {
                if crate::kernels::distance(q, &center) > r {
                    assert!(f.grid_value(j) <= f.grid_value(i));
                }
            }
        }
    }

    #[test]
    fn negative_single_center_is_nonpositive() {
        let g = Grid::new(2, 6).unwrap();
        let f = RewardFunction::new(se(), vec![vec![0.3, 0.6]], vec![-1.0], &g).unwrap();
        assert!(f.grid_values().iter().all(|&v| (-1.0..0.0).contains(&v)));
    }

    #[test]
    fn rkhs_norm_matches_quadratic_form() {
        let g = Grid::new(2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let f = sample_rkhs_function(&se(), 10, &g, &mut rng).unwrap();
        let c = f.centers();
        let k = nalgebra::DMatrix::from_fn(10, 10, |i, j| se().eval(&c[i], &c[j]));
        let a = nalgebra::DVector::from_column_slice(f.weights());
        let oracle = (a.transpose() * k * &a)[(0, 0)].sqrt();
        assert!((f.rkhs_norm() - oracle).abs() < 1e-10);
        // reproducible from the seed
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let again = sample_rkhs_function(&se(), 10, &g, &mut rng).unwrap();
        assert_eq!(again.rkhs_norm(), f.rkhs_norm());
        assert!(f.weights().iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(c.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn sup_norm_bounded_by_weight_mass() {
        let g = Grid::new(2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f = sample_rkhs_function(&se(), 10, &g, &mut rng).unwrap();
            let mass: f64 = f.weights().iter().map(|w| w.abs()).sum();
            assert!(f.grid_values().iter().all(|v| v.abs() <= mass + 1e-12));
            assert!(mass <= 10.0);
        }
    }

    #[test]
    fn abrupt_breakpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let env = build_abrupt_env(&se(), 10, Grid::new(2, 4).unwrap(), 5000, 0.1, &mut rng).unwrap();
        assert_eq!(env.breakpoints(), vec![1, 1001, 2001]);
        let env = build_abrupt_env(&se(), 10, Grid::new(2, 4).unwrap(), 5, 0.1, &mut rng).unwrap();
        assert_eq!(env.segment_lengths(), vec![1, 1, 3]);
        assert!(build_abrupt_env(&se(), 10, Grid::new(2, 4).unwrap(), 4, 0.1, &mut rng).is_err());
    }

    #[test]
    fn abrupt_total_variation_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let env = build_abrupt_env(&se(), 10, Grid::new(2, 7).unwrap(), 50, 0.1, &mut rng).unwrap();
        let s = env.schedule();
        let expected = s[1].function.sup_gap(&s[0].function) + s[2].function.sup_gap(&s[1].function);
        assert_eq!(env.total_variation(), expected);
        assert!((env.total_variation() - scan_total_variation(&env)).abs() < 1e-12);
        assert!(env.total_variation() > 0.0);
    }

    #[test]
    fn interval_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grid::new(2, 4).unwrap();
        let env = build_interval_env(&se(), 5, g.clone(), 10, 3, 0.1, &mut rng).unwrap();
        assert_eq!(env.segment_lengths(), vec![3, 3, 3, 1]);
        let stat = build_interval_env(&se(), 5, g.clone(), 10, 10, 0.1, &mut rng).unwrap();
        assert_eq!(stat.total_variation(), 0.0);
        assert!(matches!(
            build_interval_env(&se(), 5, g.clone(), 10, 0, 0.1, &mut rng),
            Err(Error::Config { .. })
        ));
        assert!(build_interval_env(&se(), 5, g, 10, 11, 0.1, &mut rng).is_err());
    }

    #[test]
    fn interval_total_variation_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let env = build_interval_env(&se(), 10, Grid::new(2, 6).unwrap(), 100, 20, 0.1, &mut rng).unwrap();
        assert_eq!(env.schedule().len(), 5);
        assert!((env.total_variation() - scan_total_variation(&env)).abs() < 1e-12);
        assert!(env.total_variation() > 0.0);
    }

    #[test]
    fn stationary_env_has_zero_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let env = build_stationary_env(&se(), 10, Grid::new(2, 5).unwrap(), 30, 0.1, &mut rng).unwrap();
        assert_eq!(env.total_variation(), 0.0);
        assert_eq!(env.kind(), EnvKind::Stationary);
    }

    #[test]
    fn noiseless_observation_is_exact_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env = build_abrupt_env(&se(), 10, Grid::new(2, 5).unwrap(), 20, 0.0, &mut rng).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(env.observe(7, 3, &mut r).unwrap(), env.function_at(7).unwrap().grid_value(3));

        let noisy = NonStationaryEnv {
            noise_scale: 0.3,
            ..env.clone()
        };
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(noisy.observe(4, 2, &mut a).unwrap(), noisy.observe(4, 2, &mut b).unwrap());
        assert!(noisy.observe(0, 2, &mut a).is_err());
        assert!(noisy.observe(21, 2, &mut a).is_err());
        assert!(matches!(noisy.observe(3, 25, &mut a), Err(Error::Usage(_))));
    }

    #[test]
    fn noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = 0.1;
        let env = build_stationary_env(&se(), 10, Grid::new(2, 5).unwrap(), 10, rho, &mut rng).unwrap();
        let truth = env.function_at(1).unwrap().grid_value(6);
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| env.observe(1, 6, &mut rng).unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - truth).abs() < 4.0 * rho / (n as f64).sqrt());
        assert!((sd - rho).abs() < 0.02 * rho);
    }

    #[test]
    fn regret_cases() {
        let g = Grid::new(2, 6).unwrap();
        let center = vec![0.2, 0.2];
        let f = RewardFunction::new(se(), vec![center], vec![1.0], &g).unwrap();
        let env = NonStationaryEnv::from_schedule(g.clone(), vec![Segment { start: 1, function: f.clone() }], 0.5, 10)
            .unwrap();
        assert_eq!(env.regret(3, f.argmax()).unwrap(), 0.0);
        // farthest corner from (0.2, 0.2) is (1, 1), the last grid point
        let corner = g.len() - 1;
        let best = g.points().iter().map(|p| f.value_at(p)).fold(f64::NEG_INFINITY, f64::max);
        assert!((env.regret(3, corner).unwrap() - (best - f.value_at(&[1.0, 1.0]))).abs() < 1e-15);
        let quiet = NonStationaryEnv { noise_scale: 0.0, ..env.clone() };
        for arm in 0..g.len() {
            assert!(env.regret(5, arm).unwrap() >= 0.0);
            assert_eq!(env.regret(5, arm).unwrap(), quiet.regret(5, arm).unwrap());
        }
    }

    #[test]
    fn schedule_validation() {
        let g = Grid::new(1, 3).unwrap();
        let f = RewardFunction::new(se(), vec![vec![0.5]], vec![1.0], &g).unwrap();
        let seg = |start| Segment { start, function: f.clone() };
        assert!(NonStationaryEnv::from_schedule(g.clone(), vec![seg(2)], 0.1, 5).is_err());
        assert!(NonStationaryEnv::from_schedule(g.clone(), vec![seg(1), seg(1)], 0.1, 5).is_err());
        assert!(NonStationaryEnv::from_schedule(g.clone(), vec![seg(1), seg(6)], 0.1, 5).is_err());
        assert!(NonStationaryEnv::from_schedule(g.clone(), vec![seg(1)], -0.1, 5).is_err());
        let ok = NonStationaryEnv::from_schedule(g, vec![seg(1), seg(3)], 0.1, 5).unwrap();
        // identical functions: a breakpoint with zero gap
        assert_eq!(ok.total_variation(), 0.0);
    }

    #[test]
    fn batch_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let env = build_abrupt_env(&se(), 4, Grid::new(1, 5).unwrap(), 10, 0.1, &mut rng).unwrap();
        let avg = env.average_values(2, 3).unwrap();
        for arm in 0..5 {
            let expected: f64 = (2..5).map(|t| env.function_at(t).unwrap().grid_value(arm)).sum::<f64>() / 3.0;
            assert!((avg[arm] - expected).abs() < 1e-15);
        }
        assert!(env.average_values(9, 3).is_err());
    }
}
