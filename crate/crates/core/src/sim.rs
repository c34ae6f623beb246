//! Seeded stochastic simulation of state and observation trajectories.
//!
//! Discrete white-noise convention: a continuous white noise of intensity `W`
//! is represented per step by a Gaussian sample of variance `W/dt` (so the
//! per-step integral `B du` has covariance `B U B^T dt`, and the recorded
//! observation is the step-averaged `y_j = C x_j + z_j` with
//! `var(z_j) = Z/dt`).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LinearModel, TimeGrid};

/// One realization of the model on a grid: states, the exact noise draws that
/// produced them, and the scalar observation record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// State x(t_j), length steps+1.
    pub states: Vec<DVector<f64>>,
    /// Scaled process increment `B^+`-input driving step j -> j+1, length steps.
    /// Each entry is `Delta u_j ~ N(0, U dt)` (m-vector); the recursion is
    /// `x_{j+1} = x_j + A x_j dt + B Delta u_j`.
    pub process_noise: Vec<DVector<f64>>,
    /// Step-averaged measurement noise z(t_j) ~ N(0, Z/dt), length steps+1.
    pub obs_noise: Vec<f64>,
    /// Linear observation record y(t_j) = C x(t_j) + z(t_j), length steps+1.
    pub observations: Vec<f64>,
}

impl Trajectory {
    /// Re-run the discrete recursion from the recorded noise; must reproduce
    /// the stored states bit for bit.
    pub fn replay_matches(&self, model: &LinearModel) -> bool {
        let dt = self.grid.dt;
        let mut x = self.states[0].clone();
        for j in 0..self.grid.steps {
            x = euler_maruyama_step(model, &x, &self.process_noise[j], dt);
            if x != self.states[j + 1] {
                return false;
            }
        }
        true
    }
}

/// One Euler-Maruyama update `x + A x dt + B du`.
#[inline]
pub fn euler_maruyama_step(
    model: &LinearModel,
    x: &DVector<f64>,
    du: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    x + (&model.drift * x) * dt + &model.input * du
}

/// Simulate a trajectory; identical `(model, grid, x0, seed)` inputs produce
/// bit-identical output.
pub fn simulate(model: &LinearModel, grid: &TimeGrid, x0: &DVector<f64>, seed: u64) -> Result<Trajectory> {
    if x0.len() != model.state_dim() {
        return Err(Error::InvalidInput(format!(
            "x0 has length {}, model needs {}",
            x0.len(),
            model.state_dim()
        )));
    }
    let mut rng = trial_stream(seed, STREAM_TRAJECTORY);
    let dt = grid.dt;
    let m = model.noise_dim();
    // Delta u ~ N(0, U dt): scale the Cholesky factor of U by sqrt(dt).
    let chol_u = linalg::psd_cholesky(&model.process_intensity, "process intensity")? * dt.sqrt();
    let obs_sd = (model.meas_intensity / dt).sqrt();

    let points = grid.num_points();
    let mut states = Vec::with_capacity(points);
    let mut process_noise = Vec::with_capacity(grid.steps);
    let mut obs_noise = Vec::with_capacity(points);
    let mut observations = Vec::with_capacity(points);

    let mut x = x0.clone();
    let z0: f64 = obs_sd * rng.sample::<f64, _>(StandardNormal);
    obs_noise.push(z0);
    observations.push((&model.obs_row * &x)[0] + z0);
    states.push(x.clone());

    for _ in 0..grid.steps {
        let raw = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let du = &chol_u * raw;
        x = euler_maruyama_step(model, &x, &du, dt);
        let z: f64 = obs_sd * rng.sample::<f64, _>(StandardNormal);
        obs_noise.push(z);
        observations.push((&model.obs_row * &x)[0] + z);
        states.push(x.clone());
        process_noise.push(du);
    }

    Ok(Trajectory { grid: grid.clone(), states, process_noise, obs_noise, observations })
}

/// Substream used for the trajectory noise draws.
pub const STREAM_TRAJECTORY: u64 = 0;
/// Substream used for initial-state draws.
pub const STREAM_INITIAL: u64 = 1;

/// Independent, reproducible RNG substream of a trial seed.
pub fn trial_stream(seed: u64, substream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(substream);
    rng
}

/// Initial message-state policy for Monte Carlo drivers.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    Zero,
    /// Draw `x(t0) ~ N(0, cov)` from the trial's initial-state stream.
    Gaussian(DMatrix<f64>),
}

impl InitialCondition {
    pub fn draw(&self, n: usize, seed: u64) -> Result<DVector<f64>> {
        match self {
            InitialCondition::Zero => Ok(DVector::zeros(n)),
            InitialCondition::Gaussian(cov) => draw_initial_state(cov, seed),
        }
    }
}

/// Per-trial seed derived from a master seed by splitmix-style mixing, so
/// Monte Carlo trials are statistically independent and each reproducible on
/// its own.
pub fn derive_trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(trial_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw `x0 ~ N(0, cov)` from the trial's initial-state substream.
pub fn draw_initial_state(cov: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    let chol = linalg::psd_cholesky(cov, "initial covariance")?;
    let mut rng = trial_stream(seed, STREAM_INITIAL);
    let raw = DVector::from_fn(cov.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&chol * raw)
}
