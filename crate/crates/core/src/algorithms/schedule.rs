//! Batch sizes, confidence widths and restart/window lengths.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;

fn ceil_sqrt(n: u64) -> u64 {
    let r = n.isqrt();
    if r * r == n {
        r
    } else {
        r + 1
    }
}

/// Next batch size `min(ceil(sqrt(T_i * N_prev)), T_i - consumed)`.
pub fn batch_size(interval_len: usize, prev: usize, consumed: usize) -> Result<usize> {
    if consumed >= interval_len {
        return Err(Error::usage(format!(
            "batch_size: interval of {interval_len} steps already exhausted ({consumed} consumed)"
        )));
    }
    if prev == 0 {
        return Err(Error::usage("batch_size: previous batch size must be >= 1"));
    }
    let grown = ceil_sqrt(interval_len as u64 * prev as u64) as usize;
    Ok(grown.min(interval_len - consumed))
}

/// All batch sizes of one interval, starting from `N_0 = 1`.
pub fn batch_schedule(interval_len: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let (mut prev, mut consumed) = (1, 0);
    while consumed < interval_len {
        let n = batch_size(interval_len, prev, consumed).expect("consumed < interval_len");
        sizes.push(n);
        consumed += n;
        prev = n;
    }
    sizes
}

/// `1 + log2 log2 H`, the per-interval batch allowance.
pub fn batches_per_interval_bound(interval_len: usize) -> f64 {
    1.0 + (interval_len as f64).log2().log2()
}

/// Inputs of the R-PERP confidence width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaParams {
    /// RKHS norm bound `B`.
    pub rkhs_bound: f64,
    /// Sub-Gaussian noise scale `rho`.
    pub noise_scale: f64,
    pub lambda: f64,
    /// Absolute constant of the permutation concentration term.
    pub concentration: f64,
    pub n_arms: usize,
    pub horizon: usize,
    pub interval: usize,
    pub delta: f64,
}

/// `Q_{T,H} = ceil(T/H) (1 + log2 log2 H)`.
pub fn total_batch_budget(horizon: usize, interval: usize) -> f64 {
    horizon.div_ceil(interval) as f64 * batches_per_interval_bound(interval)
}

/// `beta^{1/2} = B (C / sqrt(lambda) sqrt(L) + 1) + rho / sqrt(lambda) sqrt(2 L)`
/// with `L = ln(4 |X| Q_{T,H} / delta)`.
pub fn beta_width(p: &BetaParams) -> Result<f64> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::config(name, format!("must be finite and > 0; got {v}")))
        }
    };
    positive("B", p.rkhs_bound)?;
    positive("lambda", p.lambda)?;
    positive("C", p.concentration)?;
    if !(p.noise_scale.is_finite() && p.noise_scale >= 0.0) {
        return Err(Error::config("rho", format!("must be >= 0; got {}", p.noise_scale)));
    }
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::config("delta", format!("must lie in (0, 1); got {}", p.delta)));
    }
    if p.n_arms == 0 || p.horizon == 0 {
        return Err(Error::config("n_arms", "arm count and horizon must be positive"));
    }
    if p.interval < 2 {
        return Err(Error::config("H", format!("interval must be >= 2; got {}", p.interval)));
    }
    let q = total_batch_budget(p.horizon, p.interval);
    let log_term = (4.0 * p.n_arms as f64 * q / p.delta).ln();
    let inv_sqrt_lambda = p.lambda.sqrt().recip();
    Ok(p.rkhs_bound * (p.concentration * inv_sqrt_lambda * log_term.sqrt() + 1.0)
        + p.noise_scale * inv_sqrt_lambda * (2.0 * log_term).sqrt())
}

fn check_rate_inputs(family: KernelFamily, horizon: f64, dim: usize, nu: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 1.0) {
        return Err(Error::config("T", format!("horizon must exceed 1; got {horizon}")));
    }
    if dim == 0 {
        return Err(Error::config("d", "dimension must be >= 1"));
    }
    if family == KernelFamily::Matern && !(nu.is_finite() && nu > 0.5) {
        return Err(Error::config("nu", format!("need nu > 1/2; got {nu}")));
    }
    Ok(())
}

fn clamp_ceil(value: f64, lo: usize, horizon: f64) -> usize {
    let hi = (horizon.floor() as usize).max(lo);
    if value.is_nan() {
        return lo;
    }
    let c = value.ceil();
    if c >= hi as f64 {
        hi
    } else if c <= lo as f64 {
        lo
    } else {
        c as usize
    }
}

/// Restart interval balancing drift against per-interval learning cost.
///
/// SE: `T^{2/3} V^{-2/3} (ln T)^{(d+2)/3}`; Matérn: `(T/V)^a (ln T)^{(4nu+d)/(6nu+2d)}`
/// with `a = (2nu+d)/(3nu+d)`. Without a known `V_T` the variation factor is
/// dropped. The ceiling is clamped to `[2, T]`.
pub fn restart_interval(
    family: KernelFamily,
    horizon: f64,
    total_variation: f64,
    dim: usize,
    nu: f64,
    vt_known: bool,
) -> Result<usize> {
    check_rate_inputs(family, horizon, dim, nu)?;
    if horizon < 2.0 {
        return Err(Error::config("T", "restart interval needs T >= 2"));
    }
    if vt_known && !(total_variation > 0.0) {
        return Err(Error::config("vt", format!("V_T must be > 0 when known; got {total_variation}")));
    }
    let d = dim as f64;
    let (t_exp, log_exp) = match family {
        KernelFamily::Se => (2.0 / 3.0, (d + 2.0) / 3.0),
        KernelFamily::Matern => ((2.0 * nu + d) / (3.0 * nu + d), (4.0 * nu + d) / (6.0 * nu + 2.0 * d)),
    };
    let v_factor = if vt_known { total_variation.powf(-t_exp) } else { 1.0 };
    let value = horizon.powf(t_exp) * v_factor * horizon.ln().powf(log_exp);
    Ok(clamp_ceil(value, 2, horizon))
}

/// MIG growth proxy: `ln^{d+1} T` (SE) or `T^{d/(2nu+d)} ln^{2nu/(2nu+d)} T` (Matérn).
pub fn gamma_proxy(family: KernelFamily, horizon: f64, dim: usize, nu: f64) -> Result<f64> {
    check_rate_inputs(family, horizon, dim, nu)?;
    let d = dim as f64;
    let ln_t = horizon.ln();
    Ok(match family {
        KernelFamily::Se => ln_t.powf(d + 1.0),
        KernelFamily::Matern => horizon.powf(d / (2.0 * nu + d)) * ln_t.powf(2.0 * nu / (2.0 * nu + d)),
    })
}

/// `ceil(gamma~^{1/4} (T / V)^{1/2})` clamped to `[1, T]`; used as the
/// R-GP-UCB restart interval and the SW-GP-UCB window.
pub fn baseline_window(family: KernelFamily, horizon: f64, total_variation: f64, dim: usize, nu: f64) -> Result<usize> {
    if !(total_variation > 0.0) {
        return Err(Error::config("vt", format!("V_T must be > 0; got {total_variation}")));
    }
    let gamma = gamma_proxy(family, horizon, dim, nu)?;
    Ok(clamp_ceil(gamma.powf(0.25) * (horizon / total_variation).sqrt(), 1, horizon))
}
