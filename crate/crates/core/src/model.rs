//! Continuous-time linear-Gaussian state-space models.
//!
//! A model is
//!
//! `dx/dt = A x + B u`,   `<u(t) u(s)^T> = U delta(t-s)`
//! `y(t)  = C x + z`,     `<z(t) z(s)>   = Z delta(t-s)`
//!
//! with a single scalar observation row `C = [beta, 0, ..., 0]` in every
//! phase-tracking case. `Z = hbar*omega0 / (4 P)` is the shot-noise floor of
//! homodyne detection at mean optical power `P`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Uniform time grid: `steps` intervals of width `dt` starting at `t0`.
///
/// A trajectory sampled on this grid has `steps + 1` points
/// `t_j = t0 + j*dt`, `j = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if steps < 1 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidInput("t0 must be finite".into()));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid covering `[t0, t0 + duration]` with the step count rounded to
    /// match `duration` as closely as possible.
    pub fn from_duration(t0: f64, dt: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidInput(format!(
                "duration must be positive, got {duration}"
            )));
        }
        let steps = (duration / dt).round().max(1.0) as usize;
        Self::new(t0, dt, steps)
    }

    /// Number of sample points (`steps + 1`).
    pub fn num_points(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Index of the first sample with `t - t0 >= offset` (clamped to the grid).
    pub fn index_at_offset(&self, offset: f64) -> usize {
        ((offset / self.dt).ceil().max(0.0) as usize).min(self.steps)
    }
}

/// Physical parameters of the optical field: `hbar`, carrier frequency
/// `omega0`, mean power `power`, and the phase coupling `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub omega0: f64,
    pub power: f64,
    pub beta: f64,
}

impl PhysicalParams {
    pub fn new(hbar: f64, omega0: f64, power: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("omega0", omega0), ("power", power), ("beta", beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(Self { hbar, omega0, power, beta })
    }

    /// Normalized parameters (`hbar = omega0 = 1`) with the power chosen to
    /// yield the requested measurement-noise intensity `Z = hbar*omega0/(4 P)`.
    pub fn from_meas_intensity(z: f64, beta: f64) -> Result<Self> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidInput(format!("Z must be strictly positive, got {z}")));
        }
        Self::new(1.0, 1.0, 1.0 / (4.0 * z), beta)
    }

    /// Measurement white-noise intensity `Z = hbar*omega0/(4 P)`.
    pub fn meas_intensity(&self) -> f64 {
        self.hbar * self.omega0 / (4.0 * self.power)
    }
}

/// Continuous-time linear state-space model with scalar observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Drift matrix `A` (n x n), units 1/time.
    pub drift: DMatrix<f64>,
    /// Input matrix `B` (n x m).
    pub input: DMatrix<f64>,
    /// Observation row `C` (1 x n).
    pub obs_row: RowDVector<f64>,
    /// Process white-noise spectral density `U` (m x m, symmetric PSD).
    pub process_intensity: DMatrix<f64>,
    /// Measurement white-noise spectral density `Z` (> 0), units rad^2 * time.
    pub meas_intensity: f64,
}

impl LinearModel {
    pub fn new(
        drift: DMatrix<f64>,
        input: DMatrix<f64>,
        obs_row: RowDVector<f64>,
        process_intensity: DMatrix<f64>,
        meas_intensity: f64,
    ) -> Result<Self> {
        let n = drift.nrows();
        if n == 0 || drift.ncols() != n {
            return Err(Error::InvalidInput("drift must be square with n >= 1".into()));
        }
        let m = input.ncols();
        if input.nrows() != n || m == 0 {
            return Err(Error::InvalidInput(format!(
                "input must be {n} x m with m >= 1, got {} x {}",
                input.nrows(),
                m
            )));
        }
        if obs_row.len() != n {
            return Err(Error::InvalidInput(format!(
                "obs_row must have length {n}, got {}",
                obs_row.len()
            )));
        }
        if process_intensity.nrows() != m || process_intensity.ncols() != m {
            return Err(Error::InvalidInput(format!(
                "process_intensity must be {m} x {m}"
            )));
        }
        if (&process_intensity - process_intensity.transpose()).amax()
            > 1e-12 * process_intensity.amax().max(1.0)
        {
            return Err(Error::InvalidInput("process_intensity must be symmetric".into()));
        }
        if !linalg::is_psd(&process_intensity, 1e-12) {
            return Err(Error::InvalidInput(
                "process_intensity must be positive semidefinite".into(),
            ));
        }
        if !(meas_intensity > 0.0) || !meas_intensity.is_finite() {
            return Err(Error::InvalidInput(format!(
                "meas_intensity must be strictly positive, got {meas_intensity}"
            )));
        }
        let all_finite = drift.iter().all(|v| v.is_finite())
            && input.iter().all(|v| v.is_finite())
            && obs_row.iter().all(|v| v.is_finite())
            && process_intensity.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput("model matrices must be finite".into()));
        }
        Ok(Self { drift, input, obs_row, process_intensity, meas_intensity })
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Noise input dimension m.
    pub fn noise_dim(&self) -> usize {
        self.input.ncols()
    }

    /// Effective process-noise intensity `D = B U B^T` (n x n).
    pub fn effective_process_noise(&self) -> DMatrix<f64> {
        &self.input * &self.process_intensity * self.input.transpose()
    }

    /// `C^T Z^{-1} C` (n x n), the measurement information rate.
    pub fn measurement_information(&self) -> DMatrix<f64> {
        self.obs_row.transpose() * self.obs_row.clone() / self.meas_intensity
    }

    /// `C^T / Z` (n-vector), so the Kalman-Bucy gain is `Sigma * gain_map`.
    pub fn gain_map(&self) -> DVector<f64> {
        self.obs_row.transpose() / self.meas_intensity
    }
}

/// Scalar message modeled as an Ornstein-Uhlenbeck process
/// `dx/dt = -k x + u`, `<u u> = kappa delta`, observed through `C = [beta]`.
///
/// `k = 0` degenerates to the Wiener-process (phase diffusion) message.
pub fn ou_model(k: f64, kappa: f64, beta: f64, phys: &PhysicalParams) -> Result<LinearModel> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput(format!("decay rate k must be >= 0, got {k}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!(
            "process intensity kappa must be >= 0, got {kappa}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    LinearModel::new(
        DMatrix::from_element(1, 1, -k),
        DMatrix::from_element(1, 1, 1.0),
        RowDVector::from_row_slice(&[beta]),
        DMatrix::from_element(1, 1, kappa),
        phys.meas_intensity(),
    )
}

/// OU message specified by the dimensionless measurement strength
/// `Lambda = 4 beta^2 P / (hbar omega0 k) = beta^2 / (Z k)`.
pub fn ou_model_from_lambda(k: f64, kappa: f64, beta: f64, lambda: f64) -> Result<LinearModel> {
    if !(k > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidInput(
            "Lambda parameterization needs k > 0 and Lambda > 0".into(),
        ));
    }
    let z = beta * beta / (lambda * k);
    let phys = PhysicalParams::from_meas_intensity(z, beta)?;
    ou_model(k, kappa, beta, &phys)
}

/// Wiener-process message (`k = 0`, `beta = 1`) specified by the photon-number
/// parameter `N = P / (hbar omega0 kappa)`, so `Z = 1 / (4 N kappa)`.
pub fn wiener_model_from_photon_number(kappa: f64, photon_number: f64) -> Result<LinearModel> {
    if !(kappa > 0.0) || !(photon_number > 0.0) {
        return Err(Error::InvalidInput(
            "Wiener model needs kappa > 0 and N > 0".into(),
        ));
    }
    let z = 1.0 / (4.0 * photon_number * kappa);
    let phys = PhysicalParams::from_meas_intensity(z, 1.0)?;
    ou_model(0.0, kappa, 1.0, &phys)
}

/// Phase coupling of a multi-bounce probe: `beta = 2 M k0 cos(theta)`.
///
/// `k0` is the optical wavenumber, supplied by the caller.
pub fn beta_from_geometry(bounces: u32, theta: f64, k0: f64) -> f64 {
    2.0 * bounces as f64 * k0 * theta.cos()
}

/// Harmonic-oscillator position/momentum model observed through the optical
/// phase: `A = [[0, 1/m], [-m omega_m^2, 0]]`, `B = [0, 1]^T`,
/// `U = hbar beta^2 P / omega0` (radiation-pressure noise), `C = [beta, 0]`.
///
/// The constant radiation-pressure force is absorbed into the equilibrium
/// position and does not appear.
pub fn oscillator_model(
    mass: f64,
    omega_m: f64,
    beta: f64,
    phys: &PhysicalParams,
) -> Result<LinearModel> {
    if !(mass > 0.0) || !(omega_m > 0.0) {
        return Err(Error::InvalidInput(format!(
            "mass and omega_m must be positive, got {mass}, {omega_m}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "beta must be strictly positive (beta = 0 leaves the oscillator unobserved), got {beta}"
        )));
    }
    let u = phys.hbar * beta * beta * phys.power / phys.omega0;
    LinearModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / mass, -mass * omega_m * omega_m, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        RowDVector::from_row_slice(&[beta, 0.0]),
        DMatrix::from_element(1, 1, u),
        phys.meas_intensity(),
    )
}

/// Measurement-strength parameter `Q = sqrt(U V) / (m omega_m^2)`
/// with `V = 4 beta^2 P / (hbar omega0) = beta^2 / Z`.
pub fn oscillator_q(mass: f64, omega_m: f64, beta: f64, phys: &PhysicalParams) -> f64 {
    2.0 * beta * beta * phys.power / (mass * phys.omega0 * omega_m * omega_m)
}
