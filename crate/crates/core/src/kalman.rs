//! Continuous-time Kalman-Bucy filtering.
//!
//! Estimator equation `dx^/dt = A x^ + Gamma eta`, innovation
//! `eta = y − C x^`, gain `Gamma = Sigma C^T Z^{-1}`, and the variance
//! (Riccati) equation
//!
//! `dSigma/dt = A Sigma + Sigma A^T − Sigma C^T Z^{-1} C Sigma + B U B^T`.
//!
//! Integration treats the observation as the step-averaged record, held
//! constant over each grid interval, and advances the joint
//! (estimate, covariance) system with explicit RK4 in two half-steps per
//! interval. The covariance path is deterministic, so all data-dependent
//! updates reduce to precomputed affine maps that Monte Carlo trials share.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LinearModel, TimeGrid};

/// Which way a filter pass consumed the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Output of a filter pass: per-step estimates, covariances, gains and
/// innovations. Forward runs also record interval midpoints, which the
/// fixed-interval smoother consumes.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub grid: TimeGrid,
    pub direction: Direction,
    /// Estimates x^(t_j) (forward) or retrodictions x''(t_j) (backward).
    pub estimates: Vec<DVector<f64>>,
    /// Covariances Sigma(t_j) (forward) or Xi(t_j) (backward).
    pub covariances: Vec<DMatrix<f64>>,
    /// Gains Gamma(t_j) = Sigma C^T Z^{-1} (or Upsilon = Xi C^T Z^{-1}).
    pub gains: Vec<DVector<f64>>,
    /// Innovations eta(t_j) = y(t_j) − C x^(t_j).
    pub innovations: Vec<f64>,
    /// Estimates at interval midpoints (forward runs; length = steps).
    pub estimates_mid: Vec<DVector<f64>>,
    /// Covariances at interval midpoints (forward runs; length = steps).
    pub covariances_mid: Vec<DMatrix<f64>>,
}

/// Riccati right-hand side `A S + S A^T − S M S + D`.
fn riccati_rhs(a: &DMatrix<f64>, info: &DMatrix<f64>, d: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let a_s = a * s;
    &a_s + a_s.transpose() - s * info * s + d
}

/// One explicit RK4 step of the Riccati equation alone.
fn riccati_rk4_step(
    a: &DMatrix<f64>,
    info: &DMatrix<f64>,
    d: &DMatrix<f64>,
    s: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let k1 = riccati_rhs(a, info, d, s);
    let k2 = riccati_rhs(a, info, d, &(s + &k1 * (h / 2.0)));
    let k3 = riccati_rhs(a, info, d, &(s + &k2 * (h / 2.0)));
    let k4 = riccati_rhs(a, info, d, &(s + &k3 * h));
    let mut out = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    linalg::symmetrize(&mut out);
    out
}

/// Affine update for the estimate over one (half-)step with the observation
/// held constant: `x_next = phi * x + psi * y`.
#[derive(Debug, Clone)]
struct AffineStep {
    phi: DMatrix<f64>,
    psi: DVector<f64>,
}

/// Joint RK4 (half-)step: advances Sigma and builds the matching affine map
/// for the estimate. Stage covariances enter the estimate stages so the pair
/// integrates the coupled system to 4th order.
fn joint_rk4_step(
    a: &DMatrix<f64>,
    info: &DMatrix<f64>,
    d: &DMatrix<f64>,
    gain_map: &DVector<f64>,
    sigma: &DMatrix<f64>,
    h: f64,
) -> (DMatrix<f64>, AffineStep) {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);

    let r1 = riccati_rhs(a, info, d, sigma);
    let sig_a = sigma + &r1 * (h / 2.0);
    let r2 = riccati_rhs(a, info, d, &sig_a);
    let sig_b = sigma + &r2 * (h / 2.0);
    let r3 = riccati_rhs(a, info, d, &sig_b);
    let sig_c = sigma + &r3 * h;
    let r4 = riccati_rhs(a, info, d, &sig_c);
    let mut sigma_next = sigma + (r1 + r2 * 2.0 + r3 * 2.0 + r4) * (h / 6.0);
    linalg::symmetrize(&mut sigma_next);

    // Closed-loop matrices A − Sigma C^T Z^{-1} C and input gains at stages.
    let m0 = a - sigma * info;
    let ma = a - &sig_a * info;
    let mb = a - &sig_b * info;
    let mc = a - &sig_c * info;
    let g0 = sigma * gain_map;
    let ga = &sig_a * gain_map;
    let gb = &sig_b * gain_map;
    let gc = &sig_c * gain_map;

    let k1 = m0;
    let kap1 = g0;
    let k2 = &ma * (&eye + &k1 * (h / 2.0));
    let kap2 = &ma * (&kap1 * (h / 2.0)) + ga;
    let k3 = &mb * (&eye + &k2 * (h / 2.0));
    let kap3 = &mb * (&kap2 * (h / 2.0)) + gb;
    let k4 = &mc * (&eye + &k3 * h);
    let kap4 = &mc * (&kap3 * h) + gc;

    let phi = &eye + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let psi = (kap1 + kap2 * 2.0 + kap3 * 2.0 + kap4) * (h / 6.0);
    (sigma_next, AffineStep { phi, psi })
}

/// Precomputed filter pass for one (model, grid, Sigma0): the covariance and
/// gain paths plus the per-half-interval affine estimate maps. Running the
/// filter on an observation record is then a cheap data pass, repeatable
/// across Monte Carlo trials.
#[derive(Debug, Clone)]
pub struct FilterPlan {
    pub grid: TimeGrid,
    obs_row: Vec<f64>,
    /// Sigma(t_j), length steps+1.
    pub sigmas: Vec<DMatrix<f64>>,
    /// Sigma at interval midpoints, length steps.
    pub sigmas_mid: Vec<DMatrix<f64>>,
    /// Gamma(t_j) = Sigma(t_j) C^T Z^{-1}, length steps+1.
    pub gains: Vec<DVector<f64>>,
    first_half: Vec<AffineStep>,
    second_half: Vec<AffineStep>,
}

impl FilterPlan {
    pub fn new(model: &LinearModel, grid: &TimeGrid, sigma0: &DMatrix<f64>) -> Result<Self> {
        let n = model.state_dim();
        if sigma0.nrows() != n || sigma0.ncols() != n {
            return Err(Error::InvalidInput(format!("Sigma0 must be {n} x {n}")));
        }
        if !linalg::is_psd(sigma0, 1e-10) {
            return Err(Error::InvalidInput("Sigma0 must be symmetric PSD".into()));
        }
        let a = &model.drift;
        let info = model.measurement_information();
        let d = model.effective_process_noise();
        let gain_map = model.gain_map();
        let h = grid.dt / 2.0;

        let mut sigmas = Vec::with_capacity(grid.steps + 1);
        let mut sigmas_mid = Vec::with_capacity(grid.steps);
        let mut gains = Vec::with_capacity(grid.steps + 1);
        let mut first_half = Vec::with_capacity(grid.steps);
        let mut second_half = Vec::with_capacity(grid.steps);

        let mut sigma = sigma0.clone();
        linalg::symmetrize(&mut sigma);
        gains.push(&sigma * &gain_map);
        sigmas.push(sigma.clone());

        for j in 0..grid.steps {
            let (sig_mid, map_a) = joint_rk4_step(a, &info, &d, &gain_map, &sigma, h);
            let (sig_next, map_b) = joint_rk4_step(a, &info, &d, &gain_map, &sig_mid, h);
            if !linalg::is_psd(&sig_next, 1e-9) {
                return Err(Error::StepSize(format!(
                    "covariance lost positive semidefiniteness at step {} (t = {:.6}); \
                     reduce dt",
                    j + 1,
                    grid.time(j + 1)
                )));
            }
            gains.push(&sig_next * &gain_map);
            sigmas_mid.push(sig_mid);
            sigmas.push(sig_next.clone());
            first_half.push(map_a);
            second_half.push(map_b);
            sigma = sig_next;
        }

        Ok(Self {
            grid: grid.clone(),
            obs_row: model.obs_row.iter().copied().collect(),
            sigmas,
            sigmas_mid,
            gains,
            first_half,
            second_half,
        })
    }

    fn observe(&self, x: &DVector<f64>) -> f64 {
        self.obs_row.iter().zip(x.iter()).map(|(c, v)| c * v).sum()
    }

    /// Run the precomputed filter over one observation record.
    pub fn run(&self, observations: &[f64], x0: &DVector<f64>) -> Result<FilterRun> {
        let points = self.grid.num_points();
        if observations.len() != points {
            return Err(Error::InvalidInput(format!(
                "observation record has {} samples, grid needs {points}",
                observations.len()
            )));
        }
        let mut estimates = Vec::with_capacity(points);
        let mut estimates_mid = Vec::with_capacity(self.grid.steps);
        let mut innovations = Vec::with_capacity(points);

        let mut x = x0.clone();
        innovations.push(observations[0] - self.observe(&x));
        estimates.push(x.clone());
        for j in 0..self.grid.steps {
            let y = observations[j];
            let x_mid = &self.first_half[j].phi * &x + &self.first_half[j].psi * y;
            let x_next = &self.second_half[j].phi * &x_mid + &self.second_half[j].psi * y;
            innovations.push(observations[j + 1] - self.observe(&x_next));
            estimates_mid.push(x_mid);
            estimates.push(x_next.clone());
            x = x_next;
        }

        Ok(FilterRun {
            grid: self.grid.clone(),
            direction: Direction::Forward,
            estimates,
            covariances: self.sigmas.clone(),
            gains: self.gains.clone(),
            innovations,
            estimates_mid,
            covariances_mid: self.sigmas_mid.clone(),
        })
    }
}

/// Forward Kalman-Bucy pass over a full observation record.
pub fn kb_filter(
    model: &LinearModel,
    grid: &TimeGrid,
    observations: &[f64],
    x0: &DVector<f64>,
    sigma0: &DMatrix<f64>,
) -> Result<FilterRun> {
    if x0.len() != model.state_dim() {
        return Err(Error::InvalidInput(format!(
            "x0 has length {}, model needs {}",
            x0.len(),
            model.state_dim()
        )));
    }
    FilterPlan::new(model, grid, sigma0)?.run(observations, x0)
}

/// Integrate the variance equation alone over a grid (RK4, two half-steps per
/// interval). Returns Sigma at every grid node.
pub fn integrate_variance(
    model: &LinearModel,
    grid: &TimeGrid,
    sigma0: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = model.state_dim();
    if sigma0.nrows() != n || sigma0.ncols() != n {
        return Err(Error::InvalidInput(format!("Sigma0 must be {n} x {n}")));
    }
    let a = &model.drift;
    let info = model.measurement_information();
    let d = model.effective_process_noise();
    let h = grid.dt / 2.0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    let mut sigma = sigma0.clone();
    linalg::symmetrize(&mut sigma);
    out.push(sigma.clone());
    for j in 0..grid.steps {
        let mid = riccati_rk4_step(a, &info, &d, &sigma, h);
        sigma = riccati_rk4_step(a, &info, &d, &mid, h);
        if !linalg::is_psd(&sigma, 1e-9) {
            return Err(Error::StepSize(format!(
                "covariance lost positive semidefiniteness at step {}",
                j + 1
            )));
        }
        out.push(sigma.clone());
    }
    Ok(out)
}

/// Default relative tolerance for steady-state detection.
pub const STEADY_STATE_TOL: f64 = 1e-10;
/// Default integration budget for steady-state detection.
pub const STEADY_STATE_BUDGET: usize = 10_000_000;

/// Steady-state error covariance: the PSD root of
/// `A S + S A^T − S C^T Z^{-1} C S + B U B^T = 0`.
///
/// n = 1 uses the quadratic-root closed form; larger models integrate the
/// variance equation until `||dSigma/dt|| < tol * ||Sigma||`.
pub fn steady_state_covariance(model: &LinearModel, tol: f64) -> Result<DMatrix<f64>> {
    steady_state_covariance_with_budget(model, tol, STEADY_STATE_BUDGET)
}

/// Same as [`steady_state_covariance`] with an explicit step budget; exceeding
/// the budget is a no-steady-state error (e.g. an undriven oscillator, the
/// Q -> 0 regime where the relaxation time diverges).
pub fn steady_state_covariance_with_budget(
    model: &LinearModel,
    tol: f64,
    budget: usize,
) -> Result<DMatrix<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let n = model.state_dim();
    let info = model.measurement_information();
    let d = model.effective_process_noise();

    if n == 1 {
        let a = model.drift[(0, 0)];
        let s = info[(0, 0)];
        let dd = d[(0, 0)];
        if s <= 0.0 {
            // No measurement: Lyapunov balance, needs a stable drift.
            if a < 0.0 {
                return Ok(DMatrix::from_element(1, 1, dd / (-2.0 * a)));
            }
            if dd == 0.0 && a <= 0.0 {
                return Ok(DMatrix::from_element(1, 1, 0.0));
            }
            return Err(Error::NoSteadyState(
                "scalar model is undetectable and unstable".into(),
            ));
        }
        let root = (a * a + s * dd).sqrt();
        return Ok(DMatrix::from_element(1, 1, (a + root) / s));
    }

    let a = &model.drift;
    // Rate scale for the integration step: drift plus the geometric mean of
    // the process-noise and measurement-information rates.
    let rate = a.norm() + (d.norm() * info.norm()).sqrt();
    let h = 0.01 / rate.max(1e-12);
    // Start away from any non-attracting fixed point (a scaled, asymmetric
    // diagonal) so undriven rotations are detected as non-convergent.
    let scale = {
        let dn = d.amax();
        let sn = info.amax();
        if dn > 0.0 && sn > 0.0 {
            (dn / sn).sqrt()
        } else {
            1.0
        }
    };
    let mut sigma = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            scale * (1.0 + i as f64)
        } else {
            0.0
        }
    });

    for _ in 0..budget {
        let residual = riccati_rhs(a, &info, &d, &sigma);
        let sig_norm = sigma.norm();
        if residual.norm() <= tol * sig_norm.max(1e-280) {
            linalg::symmetrize(&mut sigma);
            return Ok(sigma);
        }
        if !sig_norm.is_finite() || sig_norm > 1e150 {
            return Err(Error::NoSteadyState("variance equation diverged".into()));
        }
        let mid = riccati_rk4_step(a, &info, &d, &sigma, h / 2.0);
        sigma = riccati_rk4_step(a, &info, &d, &mid, h / 2.0);
    }
    Err(Error::NoSteadyState(format!(
        "no fixed point within {budget} steps (undriven or undetectable mode)"
    )))
}

/// Analytic solution of the scalar Ornstein-Uhlenbeck variance equation.
///
/// `gamma = k sqrt(kappa Lambda / k + 1)` is the closed-loop rate and
/// `Sigma_ss = [sqrt(kappa Lambda / k + 1) − 1] / Lambda` the steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct OuClosedForm {
    pub k: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma_ss: f64,
}

impl OuClosedForm {
    pub fn new(k: f64, kappa: f64, lambda: f64) -> Result<Self> {
        if !(k > 0.0) || !(kappa > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidInput(
                "closed form needs k > 0, kappa > 0, Lambda > 0".into(),
            ));
        }
        let ratio = (kappa * lambda / k + 1.0).sqrt();
        Ok(Self { k, kappa, lambda, gamma: k * ratio, sigma_ss: (ratio - 1.0) / lambda })
    }

    /// Transient constant `mu = (gamma/k + 1 + Lambda Sigma0) / (gamma/k − 1 − Lambda Sigma0)`.
    ///
    /// Infinite exactly at the fixed point `Sigma0 = Sigma_ss`; the variance
    /// evaluation uses an equivalent form that stays regular there.
    pub fn mu(&self, sigma0: f64) -> f64 {
        let a = self.gamma / self.k;
        let den = a - 1.0 - self.lambda * sigma0;
        if den == 0.0 {
            f64::INFINITY
        } else {
            (a + 1.0 + self.lambda * sigma0) / den
        }
    }

    /// `Sigma(t0 + elapsed)` starting from `Sigma(t0) = sigma0`.
    pub fn variance_at(&self, sigma0: f64, elapsed: f64) -> Result<f64> {
        if !(sigma0 >= 0.0) {
            return Err(Error::InvalidInput(format!("Sigma0 must be >= 0, got {sigma0}")));
        }
        if !(elapsed >= 0.0) {
            return Err(Error::InvalidInput(format!("t must be >= t0, got offset {elapsed}")));
        }
        let a = self.gamma / self.k;
        let e = (-2.0 * self.gamma * elapsed).exp();
        // Regular form of Sigma_ss (mu − c e^{-2 gamma t}) / (mu + e^{-2 gamma t}),
        // multiplied through by (a − 1 − Lambda Sigma0).
        let p = a + 1.0 + self.lambda * sigma0;
        let q = a - 1.0 - self.lambda * sigma0;
        let c = (a + 1.0) / (a - 1.0);
        Ok(self.sigma_ss * (p - c * e * q) / (p + e * q))
    }

    /// Gain `Gamma(t) = Lambda k Sigma(t) / beta` for unit beta.
    pub fn gain_at(&self, sigma0: f64, elapsed: f64) -> Result<f64> {
        Ok(self.lambda * self.k * self.variance_at(sigma0, elapsed)?)
    }
}

/// Closed-form variance and gain for the Wiener-process message (`beta = 1`):
/// `Sigma_ss = 1/(2 sqrt(N))`, `gamma = 2 kappa sqrt(N)`,
/// `Gamma(t) = 4 N kappa Sigma(t)`.
pub fn wiener_process_closed_form(
    kappa: f64,
    photon_number: f64,
    sigma0: f64,
    elapsed: f64,
) -> Result<(f64, f64)> {
    if !(kappa > 0.0) || !(photon_number > 0.0) {
        return Err(Error::InvalidInput("need kappa > 0 and N > 0".into()));
    }
    if !(sigma0 >= 0.0) || !(elapsed >= 0.0) {
        return Err(Error::InvalidInput("need Sigma0 >= 0 and t >= t0".into()));
    }
    let root_n = photon_number.sqrt();
    let sigma_ss = 0.5 / root_n;
    let gamma = 2.0 * kappa * root_n;
    let e = (-2.0 * gamma * elapsed).exp();
    // Regular form of Sigma_ss (mu − e^{-2 gamma t}) / (mu + e^{-2 gamma t}).
    let p = 1.0 + 2.0 * root_n * sigma0;
    let q = 1.0 - 2.0 * root_n * sigma0;
    let sigma = sigma_ss * (p - e * q) / (p + e * q);
    let gain = 4.0 * photon_number * kappa * sigma;
    Ok((sigma, gain))
}

/// Threshold margin `beta^2 Sigma11`; the linearized loop analysis requires
/// this to stay well below 1 rad^2.
pub fn threshold_margin(beta: f64, sigma11: f64) -> f64 {
    debug_assert!(sigma11 >= 0.0);
    beta * beta * sigma11
}

/// Stationary variance `kappa / 2k` of the OU message, used as the default
/// prior for stationary experiments.
pub fn ou_stationary_variance(k: f64, kappa: f64) -> Result<f64> {
    if !(k > 0.0) || !(kappa >= 0.0) {
        return Err(Error::InvalidInput("stationary variance needs k > 0".into()));
    }
    Ok(kappa / (2.0 * k))
}
