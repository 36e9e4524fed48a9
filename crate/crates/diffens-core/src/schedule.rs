//! Variance-preserving forward/backward diffusion: noise schedule, closed-form
//! marginals and the sampling time grid.
//!
//! Conventions: drift `f(x,t) = -0.5 beta(t) x`, diffusion `g(t) = sqrt(beta(t))`,
//! time horizon fixed to `T = 1`. `gamma(t)` is the squared mean-decay
//! coefficient, so the marginal of `x_t` given `x_0` is
//! `N(sqrt(gamma) x_0, (1 - gamma) I)` and a diffused centered Gaussian with
//! covariance `S` has covariance `gamma S + (1 - gamma) I`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmath;

/// Shape of the rate function `beta(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
}

/// VP-SDE noise schedule with linear `beta(t) = beta_min + t (beta_max - beta_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub kind: ScheduleKind,
}

impl NoiseSchedule {
    pub fn linear(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max.is_finite()) {
            return Err(Error::domain(format!(
                "noise schedule requires 0 < beta_min <= beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        Ok(NoiseSchedule {
            beta_min,
            beta_max,
            kind: ScheduleKind::Linear,
        })
    }

    /// The defaults used throughout: `beta_min = 0.1`, `beta_max = 20`.
    pub fn default_vp() -> Self {
        NoiseSchedule {
            beta_min: 0.1,
            beta_max: 20.0,
            kind: ScheduleKind::Linear,
        }
    }

    /// Instantaneous rate `beta(t)`.
    #[inline]
    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// Squared mean-decay coefficient
    /// `gamma(t) = exp(-(beta_min t + 0.5 (beta_max - beta_min) t^2))`.
    ///
    /// Strictly decreasing on (0, 1] with `gamma(0) = 1`.
    pub fn gamma(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        let integral = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t;
        Ok(fmath::exp(-integral))
    }

    /// Marginal standard deviation `sqrt(1 - gamma(t))`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(fmath::sqrt(1.0 - self.gamma(t)?))
    }
}

/// Draw from the forward transition `q_{t|0}(. | x0)` given a standard normal
/// vector `z`: `sqrt(gamma) x0 + sqrt(1 - gamma) z`.
pub fn forward_sample(schedule: &NoiseSchedule, x0: &[f64], t: f64, z: &[f64]) -> Result<Vec<f64>> {
    if x0.len() != z.len() {
        return Err(Error::Dimension {
            expected: x0.len(),
            got: z.len(),
        });
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("forward_sample requires 0 < t <= 1, got {t}")));
    }
    let gamma = schedule.gamma(t)?;
    let a = fmath::sqrt(gamma);
    let b = fmath::sqrt(1.0 - gamma);
    Ok(x0.iter().zip(z).map(|(x, n)| a * x + b * n).collect())
}

/// Conditional score `grad_{x_t} log q_{t|0}(x_t | x0) = -(x_t - sqrt(gamma) x0) / (1 - gamma)`.
///
/// Equals `-z / sqrt(1 - gamma)` when `x_t = forward_sample(x0, t, z)`.
pub fn conditional_score(
    schedule: &NoiseSchedule,
    x_t: &[f64],
    x0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if x_t.len() != x0.len() {
        return Err(Error::Dimension {
            expected: x_t.len(),
            got: x0.len(),
        });
    }
    let gamma = schedule.gamma(t)?;
    let var = 1.0 - gamma;
    if var <= 0.0 {
        return Err(Error::Singular(
            "conditional score undefined at t = 0 (zero variance)".into(),
        ));
    }
    let a = fmath::sqrt(gamma);
    Ok(x_t
        .iter()
        .zip(x0)
        .map(|(xt, x)| -(xt - a * x) / var)
        .collect())
}

/// Diffused diagonal covariance: per coordinate `gamma a + (1 - gamma)`.
pub fn marginal_gaussian_covariance(
    schedule: &NoiseSchedule,
    sigma0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if sigma0.iter().any(|&a| a <= 0.0) {
        return Err(Error::domain("initial variances must be positive"));
    }
    let gamma = schedule.gamma(t)?;
    Ok(sigma0.iter().map(|&a| gamma * a + (1.0 - gamma)).collect())
}

/// Discretization of `[t_min, 1]` used by training and sampling.
///
/// `n_steps` counts intervals, so there are `n_steps + 1` nodes. Scores are
/// evaluated at the upper node of each interval (`nodes[1..]`, the *levels*);
/// level-trained models keep one regressor per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

pub const DEFAULT_T_MIN: f64 = 1e-3;

impl TimeGrid {
    /// Uniform grid with `n_steps` intervals from `t_min` to 1.
    pub fn uniform(n_steps: usize, t_min: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        if !(t_min > 0.0 && t_min < 1.0) {
            return Err(Error::domain(format!("t_min must lie in (0, 1), got {t_min}")));
        }
        let h = (1.0 - t_min) / n_steps as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|i| t_min + i as f64 * h).collect();
        // pin the endpoint exactly
        nodes[n_steps] = 1.0;
        Ok(TimeGrid { nodes })
    }

    /// Grid from explicit nodes; must be strictly increasing with
    /// `nodes[0] > 0` and `nodes[last] = 1`.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("grid needs at least two nodes"));
        }
        if !(nodes[0] > 0.0) {
            return Err(Error::domain("first node must be positive"));
        }
        if nodes[nodes.len() - 1] != 1.0 {
            return Err(Error::domain("last node must equal 1"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid nodes must be strictly increasing"));
        }
        Ok(TimeGrid { nodes })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn t_min(&self) -> f64 {
        self.nodes[0]
    }

    #[inline]
    pub fn t_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Score-evaluation times: all nodes above `t_min`, one per step.
    #[inline]
    pub fn levels(&self) -> &[f64] {
        &self.nodes[1..]
    }

    /// Index of the level nearest to `t`; times below the first level clamp
    /// to level 0 and times above 1 clamp to the last.
    pub fn level_index(&self, t: f64) -> usize {
        let levels = self.levels();
        let k = levels.partition_point(|&x| x < t);
        if k == 0 {
            return 0;
        }
        if k == levels.len() {
            return levels.len() - 1;
        }
        // nearest of levels[k-1], levels[k]; ties to the lower level
        if t - levels[k - 1] <= levels[k] - t {
            k - 1
        } else {
            k
        }
    }
}
