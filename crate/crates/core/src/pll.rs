//! Closed-loop homodyne phase-locked loop simulation.
//!
//! The homodyne output is `eta = sin(phi_bar − phi_hat) + z`; under the
//! threshold constraint `<(phi_bar − phi_hat)^2> << 1` the loop is locked,
//! the sine linearizes, and `eta` is exactly the Kalman-Bucy innovation. The
//! canonical-measurement variant wraps `phi_bar − phi_hat + z` through a
//! sawtooth instead.
//!
//! Feedback timing is causal: the local-oscillator phase applied at step j is
//! the estimate after processing step j−1 (one-step-delayed sample-and-hold),
//! and the estimator advances by explicit Euler with the step-start gain.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kalman::FilterPlan;
use crate::model::{LinearModel, TimeGrid};
use crate::sim::{self, Trajectory};
use crate::spectral::DiscreteOnePole;

/// Discriminator nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscriminatorMode {
    /// `eta = sin(phi_bar − phi_hat) + z` (physical homodyne output).
    Nonlinear,
    /// `eta = phi_bar − phi_hat + z` (threshold-regime approximation).
    Linearized,
    /// `eta = sawtooth(phi_bar − phi_hat + z)` (canonical measurement).
    Canonical,
}

/// Estimator in the loop.
#[derive(Debug, Clone)]
pub enum PllEstimator {
    /// Time-varying Kalman-Bucy gain from the Riccati path started at `sigma0`.
    KalmanBucy { sigma0: DMatrix<f64> },
    /// Constant steady-state loop filter `Gamma_ss / (i omega + pole)`
    /// (`pole = 0` is the Wiener-process pure integrator).
    WienerLoop { gain: f64, pole: f64 },
}

pub use crate::sim::InitialCondition;

/// Stationary experiments start the message in its stationary distribution
/// (scalar mean-reverting case); diffusing and oscillator messages start at 0.
pub fn default_initial_condition(model: &LinearModel) -> InitialCondition {
    if model.state_dim() == 1 && model.drift[(0, 0)] < 0.0 {
        let k = -model.drift[(0, 0)];
        let kappa = model.effective_process_noise()[(0, 0)];
        InitialCondition::Gaussian(DMatrix::from_element(1, 1, kappa / (2.0 * k)))
    } else {
        InitialCondition::Zero
    }
}

/// One closed-loop realization.
#[derive(Debug, Clone)]
pub struct PllRun {
    pub grid: TimeGrid,
    /// Message phase phi_bar(t_j) = C x(t_j).
    pub true_phase: Vec<f64>,
    /// Local-oscillator phase phi_hat(t_j) (pre-update, i.e. causal).
    pub estimate: Vec<f64>,
    /// Discriminator output eta(t_j).
    pub homodyne_record: Vec<f64>,
    pub mode: DiscriminatorMode,
    /// Times at which the loop slipped a cycle.
    pub slips: Vec<f64>,
}

/// Periodic sawtooth `f(phi) = [(phi − pi) mod 2pi] − pi`, the identity on
/// `(-pi, pi)` and 2pi-periodic everywhere.
pub fn sawtooth_wrap(phi: f64) -> f64 {
    debug_assert!(phi.is_finite());
    use std::f64::consts::PI;
    if (-PI..PI).contains(&phi) {
        return phi;
    }
    (phi - PI).rem_euclid(2.0 * PI) - PI
}

enum LoopEstimator<'a> {
    Kb { drift: &'a DMatrix<f64>, gains: &'a [DVector<f64>] },
    Wiener { coeffs: DiscreteOnePole },
}

/// Core loop over a prepared trajectory; the measurement noise draws come
/// from the trajectory record, so paired-seed mode comparisons see identical
/// noise.
fn pll_loop(
    model: &LinearModel,
    estimator: &LoopEstimator<'_>,
    mode: DiscriminatorMode,
    traj: &Trajectory,
    slip_threshold: f64,
) -> PllRun {
    let grid = &traj.grid;
    let dt = grid.dt;
    let n = model.state_dim();
    let points = grid.num_points();
    let beta_row = &model.obs_row;

    let mut true_phase = Vec::with_capacity(points);
    let mut estimate = Vec::with_capacity(points);
    let mut eta_record = Vec::with_capacity(points);

    let mut x_hat = DVector::<f64>::zeros(n);
    let mut wiener_state = 0.0f64;
    // beta for mapping the scalar loop-filter state onto the phase.
    let beta = beta_row[0];

    for j in 0..points {
        let phi_bar = (beta_row * &traj.states[j])[0];
        let phi_hat = match estimator {
            LoopEstimator::Kb { .. } => (beta_row * &x_hat)[0],
            LoopEstimator::Wiener { .. } => beta * wiener_state,
        };
        let err = phi_bar - phi_hat;
        let z = traj.obs_noise[j];
        let eta = match mode {
            DiscriminatorMode::Nonlinear => err.sin() + z,
            DiscriminatorMode::Linearized => err + z,
            DiscriminatorMode::Canonical => sawtooth_wrap(err + z),
        };
        true_phase.push(phi_bar);
        estimate.push(phi_hat);
        eta_record.push(eta);

        if j < grid.steps {
            match estimator {
                LoopEstimator::Kb { drift, gains } => {
                    x_hat = &x_hat + (*drift * &x_hat + &gains[j] * eta) * dt;
                }
                LoopEstimator::Wiener { coeffs } => {
                    coeffs.step(&mut wiener_state, eta);
                }
            }
        }
    }

    let mut run = PllRun {
        grid: grid.clone(),
        true_phase,
        estimate,
        homodyne_record: eta_record,
        mode,
        slips: Vec::new(),
    };
    run.slips = detect_cycle_slips(&run, slip_threshold);
    run
}

fn build_loop_gains(
    model: &LinearModel,
    grid: &TimeGrid,
    estimator: &PllEstimator,
) -> Result<Option<Vec<DVector<f64>>>> {
    match estimator {
        PllEstimator::KalmanBucy { sigma0 } => {
            Ok(Some(FilterPlan::new(model, grid, sigma0)?.gains))
        }
        PllEstimator::WienerLoop { .. } => {
            if model.state_dim() != 1 {
                return Err(Error::Unsupported(
                    "the constant loop filter applies to scalar (stationary or \
                     Wiener-process) messages only"
                        .into(),
                ));
            }
            Ok(None)
        }
    }
}

fn wiener_coeffs(estimator: &PllEstimator, dt: f64) -> Result<Option<DiscreteOnePole>> {
    match estimator {
        PllEstimator::WienerLoop { gain, pole } => {
            let rt = crate::spectral::RationalTransfer {
                gain: *gain,
                zero: None,
                pole: *pole,
                form: crate::spectral::TransferForm::Causal,
            };
            Ok(Some(crate::spectral::discretize_one_pole(&rt, dt)?))
        }
        PllEstimator::KalmanBucy { .. } => Ok(None),
    }
}

/// Run one phase-locked loop realization. The message starts from the
/// model's default initial condition (stationary draw for a mean-reverting
/// scalar message, zero otherwise) and everything is deterministic in `seed`.
pub fn run_pll(
    model: &LinearModel,
    estimator: &PllEstimator,
    mode: DiscriminatorMode,
    grid: &TimeGrid,
    seed: u64,
) -> Result<PllRun> {
    let initial = default_initial_condition(model);
    run_pll_from(model, estimator, mode, grid, &initial, seed)
}

/// [`run_pll`] with an explicit initial-state policy.
pub fn run_pll_from(
    model: &LinearModel,
    estimator: &PllEstimator,
    mode: DiscriminatorMode,
    grid: &TimeGrid,
    initial: &InitialCondition,
    seed: u64,
) -> Result<PllRun> {
    let gains = build_loop_gains(model, grid, estimator)?;
    let coeffs = wiener_coeffs(estimator, grid.dt)?;
    let x0 = initial.draw(model.state_dim(), seed)?;
    let traj = sim::simulate(model, grid, &x0, seed)?;
    let est = match (&gains, coeffs) {
        (Some(g), None) => LoopEstimator::Kb { drift: &model.drift, gains: g },
        (None, Some(c)) => LoopEstimator::Wiener { coeffs: c },
        _ => unreachable!(),
    };
    Ok(pll_loop(model, &est, mode, &traj, std::f64::consts::PI))
}

/// Cycle-slip events: a slip is recorded each time `|phi_bar − phi_hat|`
/// first crosses `threshold` past the current lock point, which then shifts
/// by 2pi toward the excursion.
pub fn detect_cycle_slips(run: &PllRun, threshold: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut slips = Vec::new();
    if run.true_phase.is_empty() {
        return slips;
    }
    let e0 = run.true_phase[0] - run.estimate[0];
    let mut lock = 2.0 * PI * (e0 / (2.0 * PI)).round();
    for j in 0..run.true_phase.len() {
        let excursion = run.true_phase[j] - run.estimate[j] - lock;
        if excursion.abs() > threshold {
            slips.push(run.grid.time(j));
            lock += 2.0 * PI * excursion.signum();
        }
    }
    slips
}

/// Smoothed state estimates from the post-loop filter, delayed by `t_d`.
#[derive(Debug, Clone)]
pub struct DelayedEstimates {
    /// Smoothed estimates of the message state x1(t_j).
    pub values: Vec<f64>,
    /// Last index with a full `t_d` of future record behind it.
    pub valid_until: usize,
    /// Set when `t_d < 5/gamma`: the truncated anticausal tail biases the
    /// result above Monte Carlo resolution.
    pub truncation_warning: bool,
}

/// Apply the discretized post-loop filter to the loop's own estimate record.
///
/// The loop realizes `x^ = H y`, so filtering the estimate with `F = G/H`
/// applies the optimum unrealizable filter `G` to the record. The anticausal
/// exponential runs as a reverse-time exact-pole recursion with the finite
/// `t_d` window imposed exactly via `s_w[j] = s[j] − a^{d+1} s[j+d+1]`.
pub fn apply_post_loop_smoother(
    run: &PllRun,
    beta: f64,
    f_disc: &DiscreteOnePole,
    t_d: f64,
) -> Result<DelayedEstimates> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    if !(t_d >= 0.0) {
        return Err(Error::InvalidInput("delay must be >= 0".into()));
    }
    let steps = run.grid.steps;
    let delay_samples = (t_d / run.grid.dt).round() as usize;
    if delay_samples > steps {
        return Err(Error::InvalidInput(
            "delay exceeds the record length".into(),
        ));
    }
    let state_est: Vec<f64> = run.estimate.iter().map(|phi| phi / beta).collect();
    let ideal = f_disc.apply_reversed(&state_est);
    let window_decay = f_disc.decay.powi(delay_samples as i32 + 1);
    let mut values = ideal.clone();
    for j in 0..values.len() {
        if j + delay_samples + 1 < ideal.len() {
            values[j] -= window_decay * ideal[j + delay_samples + 1];
        }
    }
    let rate = if f_disc.decay > 0.0 {
        -f_disc.decay.ln() / run.grid.dt
    } else {
        f64::INFINITY
    };
    Ok(DelayedEstimates {
        values,
        valid_until: steps - delay_samples,
        truncation_warning: t_d * rate < 5.0,
    })
}

/// Post-loop smoothing attached to a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct PostSmootherSetup {
    pub coeffs: DiscreteOnePole,
    pub delay: f64,
}

/// Everything needed to run one PLL experiment.
#[derive(Debug, Clone)]
pub struct PllSetup {
    pub model: LinearModel,
    pub estimator: PllEstimator,
    pub mode: DiscriminatorMode,
    pub grid: TimeGrid,
    /// Closed-loop rate; sets the steady-state and interior windows.
    pub gamma: f64,
    pub initial: InitialCondition,
    pub post_smoother: Option<PostSmootherSetup>,
}

/// Monte Carlo aggregate over independent loop realizations.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub trials: usize,
    /// Mean of (phi_bar − phi_hat)^2 per step.
    pub mse_trajectory: Vec<f64>,
    /// Standard error of the per-step mean (sample std / sqrt(trials)).
    pub stderr_trajectory: Vec<f64>,
    /// Mean over trials of each trial's steady-state-window average.
    pub steady_state_mse: f64,
    pub steady_state_stderr: f64,
    /// Cycle slips per unit time.
    pub slip_rate: f64,
    /// Interior mean-square error of the post-loop smoothed state estimate.
    pub smoothed_mse: Option<f64>,
    pub smoothed_stderr: Option<f64>,
}

/// First index of the steady-state window: the final third of the record,
/// and at least `20/gamma` past the start.
pub fn steady_state_window(grid: &TimeGrid, gamma: f64) -> Result<usize> {
    let start = (2.0 * grid.duration() / 3.0).max(20.0 / gamma);
    let idx = grid.index_at_offset(start);
    if idx >= grid.steps {
        return Err(Error::InvalidInput(format!(
            "record too short for a steady-state window (needs > {:.3} time units)",
            start
        )));
    }
    Ok(idx)
}

struct TrialOutput {
    err_sq: Vec<f64>,
    tail_mean: f64,
    slips: usize,
    smoothed_mean: Option<f64>,
}

fn run_trial(setup: &PllSetup, gains: Option<&Vec<DVector<f64>>>, coeffs: Option<DiscreteOnePole>, tail_start: usize, seed: u64) -> Result<TrialOutput> {
    let model = &setup.model;
    let x0 = setup.initial.draw(model.state_dim(), seed)?;
    let traj = sim::simulate(model, &setup.grid, &x0, seed)?;
    let est = match (gains, coeffs) {
        (Some(g), None) => LoopEstimator::Kb { drift: &model.drift, gains: g },
        (None, Some(c)) => LoopEstimator::Wiener { coeffs: c },
        _ => unreachable!(),
    };
    let run = pll_loop(model, &est, setup.mode, &traj, std::f64::consts::PI);

    let err_sq: Vec<f64> = run
        .true_phase
        .iter()
        .zip(&run.estimate)
        .map(|(t, e)| (t - e) * (t - e))
        .collect();
    let tail = &err_sq[tail_start..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;

    let smoothed_mean = match &setup.post_smoother {
        Some(ps) => {
            let beta = model.obs_row[0];
            let smoothed = apply_post_loop_smoother(&run, beta, &ps.coeffs, ps.delay)?;
            let margin = setup.grid.index_at_offset(10.0 / setup.gamma);
            let hi = smoothed.valid_until.min(setup.grid.steps - margin);
            if margin >= hi {
                return Err(Error::InvalidInput(
                    "record too short for an interior smoothing window".into(),
                ));
            }
            let mut acc = 0.0;
            for j in margin..=hi {
                let truth = traj.states[j][0];
                let diff = truth - smoothed.values[j];
                acc += diff * diff;
            }
            Some(acc / (hi - margin + 1) as f64)
        }
        None => None,
    };

    Ok(TrialOutput { err_sq, tail_mean, slips: run.slips.len(), smoothed_mean })
}

/// Run `trials` independent loops (seeds derived from `master_seed`) and
/// aggregate. Trials execute in parallel chunks but accumulate in a fixed
/// order, so the result is identical to sequential execution.
pub fn monte_carlo_mse(setup: &PllSetup, trials: usize, master_seed: u64) -> Result<MonteCarloResult> {
    if trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    let gains = match &setup.estimator {
        PllEstimator::KalmanBucy { sigma0 } => {
            Some(FilterPlan::new(&setup.model, &setup.grid, sigma0)?.gains)
        }
        PllEstimator::WienerLoop { .. } => {
            build_loop_gains(&setup.model, &setup.grid, &setup.estimator)?
        }
    };
    let coeffs = wiener_coeffs(&setup.estimator, setup.grid.dt)?;
    let tail_start = steady_state_window(&setup.grid, setup.gamma)?;

    const CHUNK: usize = 32;
    let points = setup.grid.num_points();
    let chunk_ranges: Vec<(usize, usize)> = (0..trials)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(trials)))
        .collect();

    struct ChunkStats {
        sum_e2: Vec<f64>,
        sum_e4: Vec<f64>,
        tail_means: Vec<f64>,
        smoothed_means: Vec<f64>,
        slips: usize,
    }

    let chunks: Vec<Result<ChunkStats>> = chunk_ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut stats = ChunkStats {
                sum_e2: vec![0.0; points],
                sum_e4: vec![0.0; points],
                tail_means: Vec::with_capacity(hi - lo),
                smoothed_means: Vec::with_capacity(hi - lo),
                slips: 0,
            };
            for trial in lo..hi {
                let seed = sim::derive_trial_seed(master_seed, trial as u64);
                let out = run_trial(setup, gains.as_ref(), coeffs, tail_start, seed)?;
                for (j, &e2) in out.err_sq.iter().enumerate() {
                    stats.sum_e2[j] += e2;
                    stats.sum_e4[j] += e2 * e2;
                }
                stats.tail_means.push(out.tail_mean);
                stats.slips += out.slips;
                if let Some(sm) = out.smoothed_mean {
                    stats.smoothed_means.push(sm);
                }
            }
            Ok(stats)
        })
        .collect();

    let mut sum_e2 = vec![0.0; points];
    let mut sum_e4 = vec![0.0; points];
    let mut tail_means = Vec::with_capacity(trials);
    let mut smoothed_means = Vec::new();
    let mut total_slips = 0usize;
    for chunk in chunks {
        let c = chunk?;
        for j in 0..points {
            sum_e2[j] += c.sum_e2[j];
            sum_e4[j] += c.sum_e4[j];
        }
        tail_means.extend(c.tail_means);
        smoothed_means.extend(c.smoothed_means);
        total_slips += c.slips;
    }

    let t = trials as f64;
    let mse_trajectory: Vec<f64> = sum_e2.iter().map(|s| s / t).collect();
    let stderr_trajectory: Vec<f64> = sum_e2
        .iter()
        .zip(&sum_e4)
        .map(|(&s2, &s4)| {
            let var = ((s4 - s2 * s2 / t) / (t - 1.0)).max(0.0);
            (var / t).sqrt()
        })
        .collect();

    let (steady_state_mse, steady_state_stderr) = mean_and_stderr(&tail_means);
    let (smoothed_mse, smoothed_stderr) = if smoothed_means.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_and_stderr(&smoothed_means);
        (Some(m), Some(s))
    };

    Ok(MonteCarloResult {
        trials,
        mse_trajectory,
        stderr_trajectory,
        steady_state_mse,
        steady_state_stderr,
        slip_rate: total_slips as f64 / (t * setup.grid.duration()),
        smoothed_mse,
        smoothed_stderr,
    })
}

/// Sample mean and its standard error (`sample std / sqrt(len)`).
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
