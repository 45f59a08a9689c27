//! Monte Carlo estimation of the risk-sensitive functional
//! `(1/T) ln E_x[exp(∫_0^T f(Y_s) ds + Σ_{τ_i ≤ T} c(Y_{τ_i-}, ξ_i))]`
//! under a stationary policy, by exact event simulation of the chain.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::dyadic_step;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::policy::{Action, Policy};
use crate::propagator::{metzler_exp, weighted_kernel};

/// Stream reserved for bootstrap resampling; trajectories use streams `0..N`.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub start: usize,
    /// Decisions happen at multiples of `2^{-grid_k}`.
    pub grid_k: u32,
    pub decide_at_zero: bool,
    /// Decide at time zero and right after every transition of the chain
    /// instead of on the grid.
    pub jump_time_mode: bool,
    pub bootstrap_resamples: usize,
    /// Shorter horizons evaluated on the same trajectories.
    pub ladder: Vec<f64>,
}

impl SimConfig {
    pub fn new(horizon: f64, trajectories: usize, seed: u64, start: usize, grid_k: u32) -> Self {
        SimConfig {
            horizon,
            trajectories,
            seed,
            start,
            grid_k,
            decide_at_zero: true,
            jump_time_mode: false,
            bootstrap_resamples: 1000,
            ladder: vec![horizon / 8.0, horizon / 4.0, horizon / 2.0],
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.trajectories == 0 {
            return Err(Error::Argument("at least one trajectory is required".into()));
        }
        if self.start >= spec.n() {
            return Err(Error::Argument(format!(
                "start state {} out of range for {} states",
                self.start,
                spec.n()
            )));
        }
        if let Some(t) = self.ladder.iter().find(|t| !(**t > 0.0 && **t <= self.horizon)) {
            return Err(Error::Argument(format!("ladder horizon {t} outside (0, {}]", self.horizon)));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        dyadic_step(self.grid_k)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Accumulated exponent over `[0, T]`.
    pub exponent: f64,
    pub impulse_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathSummary {
    exponent: f64,
    impulses: usize,
    max_burst: usize,
}

struct BurstCounter {
    window: VecDeque<f64>,
    max: usize,
}

impl BurstCounter {
    fn new() -> Self {
        BurstCounter {
            window: VecDeque::new(),
            max: 0,
        }
    }

    // impulses in (t - 1, t]
    fn push(&mut self, t: f64) {
        while self.window.front().is_some_and(|&s| s <= t - 1.0) {
            self.window.pop_front();
        }
        self.window.push_back(t);
        self.max = self.max.max(self.window.len());
    }
}

fn draw_target(rng: &mut ChaCha8Rng, row: &[f64], from: usize, rate: f64) -> usize {
    let mut u = rng.random::<f64>() * rate;
    let mut last = from;
    for (y, &q) in row.iter().enumerate() {
        if y == from || q <= 0.0 {
            continue;
        }
        last = y;
        if u < q {
            return y;
        }
        u -= q;
    }
    last
}

/// Walks one path. `checkpoints` must be sorted and lie in `(0, T]`; the
/// exponent at each is written to `at_checkpoints`.
fn walk(
    spec: &ModelSpec,
    policy: &Policy,
    config: &SimConfig,
    index: u64,
    checkpoints: &[f64],
    at_checkpoints: &mut Vec<f64>,
    mut times: Option<&mut Vec<f64>>,
) -> PathSummary {
    let mut rng = config.rng(index);
    let horizon = config.horizon;
    let delta = config.delta();
    let mut x = config.start;
    let mut t = 0.0;
    let mut exponent = 0.0;
    let mut bursts = BurstCounter::new();
    let mut impulses = 0;
    let mut next_check = 0;
    let mut grid_index: u64 = if config.decide_at_zero { 0 } else { 1 };
    let mut pending_decision = config.jump_time_mode && config.decide_at_zero;

    let mut decide = |x: &mut usize, t: f64, exponent: &mut f64| {
        if let Action::Jump(xi) = policy.actions[*x] {
            let j = spec.impulse_position(xi).expect("validated jump target");
            *exponent += spec.cost(*x, j);
            *x = xi;
            impulses += 1;
            bursts.push(t);
            if let Some(ts) = times.as_deref_mut() {
                ts.push(t);
            }
        }
    };

    loop {
        if pending_decision {
            pending_decision = false;
            decide(&mut x, t, &mut exponent);
        }
        let rate = -spec.generator[(x, x)];
        let arrival = if rate > 0.0 {
            t - (1.0 - rng.random::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        };
        let grid_time = if config.jump_time_mode {
            f64::INFINITY
        } else {
            grid_index as f64 * delta
        };
        let next = arrival.min(grid_time).min(horizon);
        while next_check < checkpoints.len() && checkpoints[next_check] < next {
            at_checkpoints.push(exponent + spec.running_cost[x] * (checkpoints[next_check] - t));
            next_check += 1;
        }
        exponent += spec.running_cost[x] * (next - t);
        t = next;
        if grid_time <= horizon && grid_time <= arrival {
            decide(&mut x, t, &mut exponent);
            grid_index += 1;
        } else if arrival < horizon {
            x = draw_target(&mut rng, spec.generator.row(x), x, rate);
            pending_decision = config.jump_time_mode;
        } else {
            break;
        }
    }
    while next_check < checkpoints.len() {
        at_checkpoints.push(exponent);
        next_check += 1;
    }
    PathSummary {
        exponent,
        impulses,
        max_burst: bursts.max,
    }
}

/// One controlled path, reproducible from `(seed, trajectory_index)`.
pub fn sample_trajectory(spec: &ModelSpec, policy: &Policy, config: &SimConfig, trajectory_index: u64) -> Result<Trajectory> {
    policy.validate(spec)?;
    config.validate(spec)?;
    let mut times = Vec::new();
    let summary = walk(spec, policy, config, trajectory_index, &[], &mut Vec::new(), Some(&mut times));
    Ok(Trajectory {
        exponent: summary.exponent,
        impulse_times: times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JEstimate {
    pub horizon: f64,
    pub trajectories: usize,
    /// `(1/T) (logsumexp(Z) - ln N)`
    pub point: f64,
    /// Bootstrap standard error of `point`.
    pub stderr: f64,
    /// Impulses per unit time over trajectories.
    pub impulse_rate: RateStats,
    /// Most impulses in any half-open window of length one.
    pub max_burst: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub estimate: JEstimate,
    /// `(T', point, stderr)` for each ladder horizon, then `T` itself.
    pub ladder: Vec<(f64, f64, f64)>,
    pub exponents: Vec<f64>,
    pub impulse_counts: Vec<usize>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `(1/T) ln mean exp(Z)` and its bootstrap standard error.
fn log_mean_exp_with_stderr(values: &[f64], horizon: f64, config: &SimConfig) -> (f64, f64) {
    let n = values.len();
    let point = (log_sum_exp(values) - (n as f64).ln()) / horizon;
    let resamples = config.bootstrap_resamples;
    if resamples < 2 || values.iter().all(|v| *v == values[0]) {
        return (point, 0.0);
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| (v - top).exp()).collect();
    let stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = config.rng(BOOTSTRAP_STREAM - b);
            let mut drawn = Vec::with_capacity(n);
            let mut sum = 0.0;
            for _ in 0..n {
                let i = rng.random_range(0..n);
                sum += weights[i];
                drawn.push(i);
            }
            let lse = if sum > 0.0 {
                top + sum.ln()
            } else {
                let vals: Vec<f64> = drawn.iter().map(|&i| values[i]).collect();
                log_sum_exp(&vals)
            };
            (lse - (n as f64).ln()) / horizon
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (resamples as f64 - 1.0);
    (point, var.sqrt())
}

/// Simulates every trajectory and assembles the estimate, the horizon
/// ladder and the raw exponents.
pub fn run_simulation(spec: &ModelSpec, policy: &Policy, config: &SimConfig) -> Result<SimulationRun> {
    policy.validate(spec)?;
    config.validate(spec)?;
    let mut ladder_times = config.ladder.clone();
    ladder_times.sort_by(f64::total_cmp);
    ladder_times.dedup();
    let paths: Vec<(PathSummary, Vec<f64>)> = (0..config.trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut at = Vec::with_capacity(ladder_times.len());
            let s = walk(spec, policy, config, i, &ladder_times, &mut at, None);
            (s, at)
        })
        .collect();

    let exponents: Vec<f64> = paths.iter().map(|(s, _)| s.exponent).collect();
    let impulse_counts: Vec<usize> = paths.iter().map(|(s, _)| s.impulses).collect();
    let (point, stderr) = log_mean_exp_with_stderr(&exponents, config.horizon, config);
    let rates: Vec<f64> = impulse_counts.iter().map(|&c| c as f64 / config.horizon).collect();
    let impulse_rate = RateStats {
        min: rates.iter().copied().fold(f64::INFINITY, f64::min),
        mean: rates.iter().sum::<f64>() / rates.len() as f64,
        max: rates.iter().copied().fold(0.0, f64::max),
    };
    let max_burst = paths.iter().map(|(s, _)| s.max_burst).max().unwrap_or(0);

    let mut ladder = Vec::with_capacity(ladder_times.len() + 1);
    for (j, &t) in ladder_times.iter().enumerate() {
        if t == config.horizon {
            continue;
        }
        let vals: Vec<f64> = paths.iter().map(|(_, at)| at[j]).collect();
        let (p, se) = log_mean_exp_with_stderr(&vals, t, config);
        ladder.push((t, p, se));
    }
    ladder.push((config.horizon, point, stderr));

    Ok(SimulationRun {
        estimate: JEstimate {
            horizon: config.horizon,
            trajectories: config.trajectories,
            point,
            stderr,
            impulse_rate,
            max_burst,
        },
        ladder,
        exponents,
        impulse_counts,
    })
}

pub fn estimate_j(spec: &ModelSpec, policy: &Policy, config: &SimConfig) -> Result<JEstimate> {
    let config = SimConfig {
        ladder: Vec::new(),
        ..config.clone()
    };
    Ok(run_simulation(spec, policy, &config)?.estimate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityStats {
    pub impulse_rate: RateStats,
    pub max_burst: usize,
    pub max_impulses: usize,
    /// Largest impulse count the grid allows on `[0, T]`; `None` in
    /// jump-time mode.
    pub grid_count_bound: Option<usize>,
    /// `1/δ`, the most impulses in a unit window on the grid.
    pub grid_burst_bound: Option<usize>,
    pub within_bounds: bool,
}

pub fn admissibility_stats(spec: &ModelSpec, policy: &Policy, config: &SimConfig) -> Result<AdmissibilityStats> {
    let run = run_simulation(
        spec,
        policy,
        &SimConfig {
            ladder: Vec::new(),
            bootstrap_resamples: 0,
            ..config.clone()
        },
    )?;
    Ok(admissibility_from_run(config, &run))
}

pub fn admissibility_from_run(config: &SimConfig, run: &SimulationRun) -> AdmissibilityStats {
    let max_impulses = run.impulse_counts.iter().copied().max().unwrap_or(0);
    let (count_bound, burst_bound) = if config.jump_time_mode {
        (None, None)
    } else {
        let steps = (config.horizon / config.delta()).floor() as usize;
        (
            Some(steps + usize::from(config.decide_at_zero)),
            Some((1.0 / config.delta()).round() as usize),
        )
    };
    let within_bounds = count_bound.is_none_or(|b| max_impulses <= b)
        && burst_bound.is_none_or(|b| run.estimate.max_burst <= b);
    AdmissibilityStats {
        impulse_rate: run.estimate.impulse_rate,
        max_burst: run.estimate.max_burst,
        max_impulses,
        grid_count_bound: count_bound,
        grid_burst_bound: burst_bound,
        within_bounds,
    }
}

/// Exact `(1/T) ln E_x[exp(Z_T)]` for grid-mode simulation, from products
/// of the policy's one-step matrix. The Monte Carlo estimate targets this.
pub fn exact_log_moment(spec: &ModelSpec, policy: &Policy, config: &SimConfig) -> Result<f64> {
    config.validate(spec)?;
    if config.jump_time_mode {
        return Err(Error::Argument("exact moments are only available in grid mode".into()));
    }
    let kernel = weighted_kernel(spec, config.delta(), 0.0)?;
    let steps = (config.horizon / config.delta()).floor() as usize;
    let rest = config.horizon - steps as f64 * config.delta();
    let decision = |v: &[f64]| -> Vec<f64> {
        (0..spec.n())
            .map(|x| match policy.actions[x] {
                Action::Continue => v[x],
                Action::Jump(xi) => spec.cost(x, spec.impulse_position(xi).expect("validated")).exp() * v[xi],
            })
            .collect()
    };
    // applied right to left: K_rest, then (K D) per grid step, then D at zero
    let mut v = vec![1.0; spec.n()];
    if rest > 0.0 {
        v = metzler_exp(&spec.generator, &spec.running_cost, rest)
            .map_err(|_| Error::KernelOverflow {
                magnitude: rest * spec.running_cost_norm(),
            })?
            .matvec(&v);
    }
    let mut log_scale = 0.0;
    for _ in 0..steps {
        v = normalize(kernel.apply(&decision(&v)), &mut log_scale);
    }
    if config.decide_at_zero {
        v = decision(&v);
    }
    Ok((v[config.start].ln() + log_scale) / config.horizon)
}

fn normalize(mut v: Vec<f64>, log_scale: &mut f64) -> Vec<f64> {
    let top = v.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        *log_scale += top.ln();
        for x in &mut v {
            *x /= top;
        }
    }
    v
}
