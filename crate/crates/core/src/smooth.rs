//! Fixed-interval smoothing by two equivalent routes.
//!
//! Bryson-Frazier integrates, backward from the final filter state,
//!
//! `dx~/dt  = A x~ + B U B^T Sigma^{-1} (x~ − x^)`
//! `dPi/dt  = (A + B U B^T Sigma^{-1}) Pi + Pi (...)^T − B U B^T`
//!
//! while the two-filter smoother runs an information-form backward filter
//! `(Omega, omega) = (Xi^{-1}, Xi^{-1} x'')` from `Omega(T) = 0`,
//! `omega(T) = 0` and combines `Pi = (Sigma^{-1} + Omega)^{-1}`,
//! `x~ = Pi (Sigma^{-1} x^ + omega)`. The combination is evaluated in the
//! factored form `Pi = Sigma (I + Omega Sigma)^{-1}`, which never inverts
//! Sigma itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::{FilterPlan, FilterRun};
use crate::linalg;
use crate::model::{LinearModel, TimeGrid};

/// Smoothed estimates and covariances on the forward grid.
#[derive(Debug, Clone)]
pub struct SmoothRun {
    pub grid: TimeGrid,
    /// Smoothed estimates x~(t_j).
    pub estimates: Vec<DVector<f64>>,
    /// Smoothing covariances Pi(t_j).
    pub covariances: Vec<DMatrix<f64>>,
}

/// Information-form output of the backward filter: `Omega = Xi^{-1}` and
/// `omega = Xi^{-1} x''`, both zero at the final time, where the retrodiction
/// carries no information.
#[derive(Debug, Clone)]
pub struct BackwardInfo {
    pub grid: TimeGrid,
    pub info_matrices: Vec<DMatrix<f64>>,
    pub info_vectors: Vec<DVector<f64>>,
}

impl BackwardInfo {
    /// Covariance-form retrodiction `(x''(t_j), Xi(t_j), Upsilon(t_j))` at a
    /// node where `Omega` is invertible (it never is at the final time).
    pub fn retrodiction(
        &self,
        model: &LinearModel,
        j: usize,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let omega = &self.info_matrices[j];
        let xi = linalg::sym_positive_inverse(omega, "backward information matrix")?;
        let x = &xi * &self.info_vectors[j];
        let upsilon = &xi * model.gain_map();
        Ok((x, xi, upsilon))
    }
}

fn check_same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput("runs live on different grids".into()));
    }
    Ok(())
}

/// Precomputed Bryson-Frazier pass for one covariance path: the smoothing
/// covariances and the backward affine maps for the estimate. One RK4 step
/// per interval, with stages at the interval end, midpoint and start, taken
/// straight from the forward pass.
#[derive(Debug, Clone)]
pub struct BrysonFrazierPlan {
    grid: TimeGrid,
    /// Pi(t_j), length steps+1.
    pub covariances: Vec<DMatrix<f64>>,
    maps: Vec<BfStep>,
    /// Sigma(t0) was exactly zero: the smoothed start is pinned to the prior.
    pinned_start: bool,
}

#[derive(Debug, Clone)]
struct BfStep {
    on_prev: DMatrix<f64>,
    on_est_end: DMatrix<f64>,
    on_est_mid: DMatrix<f64>,
    on_est_start: DMatrix<f64>,
}

impl BrysonFrazierPlan {
    /// Build from the deterministic parts of a forward pass.
    pub fn new(
        model: &LinearModel,
        grid: &TimeGrid,
        sigmas: &[DMatrix<f64>],
        sigmas_mid: &[DMatrix<f64>],
    ) -> Result<Self> {
        let n = model.state_dim();
        if sigmas.len() != grid.num_points() || sigmas_mid.len() != grid.steps {
            return Err(Error::InvalidInput(
                "covariance path does not match the grid".into(),
            ));
        }
        let d = model.effective_process_noise();
        let sigma0_zero = sigmas[0].amax() == 0.0;
        let sigma0_pd = linalg::sym_positive_inverse(&sigmas[0], "Sigma(t0)").is_ok();
        let d_pd = linalg::sym_positive_inverse(&d, "B U B^T").is_ok();
        if !sigma0_pd && !(d_pd && sigma0_zero) {
            return Err(Error::IllConditioned(
                "smoother needs Sigma(t0) positive definite, or B U B^T positive definite \
                 with Sigma(t0) = 0 exactly"
                    .into(),
            ));
        }
        let pinned_start = !sigma0_pd;

        let a = &model.drift;
        let eye = DMatrix::<f64>::identity(n, n);
        let h = grid.dt;
        // D Sigma^{-1} at a path point.
        let w_at = |s: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            Ok(&d * linalg::sym_positive_inverse(s, "Sigma along the smoothing path")?)
        };

        let mut covariances = vec![DMatrix::<f64>::zeros(n, n); grid.num_points()];
        covariances[grid.steps] = sigmas[grid.steps].clone();
        let mut maps = Vec::with_capacity(grid.steps);

        let mut pi = sigmas[grid.steps].clone();
        for j in (0..grid.steps).rev() {
            let first_interval = j == 0 && pinned_start;
            let w_end = w_at(&sigmas[j + 1])?;
            let w_mid = w_at(&sigmas_mid[j])?;
            // With a pinned start the Sigma(t0) stage never gets evaluated.
            let w_start = if first_interval { DMatrix::zeros(n, n) } else { w_at(&sigmas[j])? };

            // Backward-time derivative of Pi: −G Pi − Pi G^T + D, G = A + D Sigma^{-1}.
            let g_end = a + &w_end;
            let g_mid = a + &w_mid;
            let g_start = a + &w_start;
            let pi_rhs = |g: &DMatrix<f64>, p: &DMatrix<f64>| -> DMatrix<f64> {
                let gp = g * p;
                -(&gp) - gp.transpose() + &d
            };
            // Backward-time derivative of x~: −(A + W) x~ + W x^(t).
            let m_end = -(&g_end);
            let m_mid = -(&g_mid);
            let m_start = -(&g_start);

            let k1 = m_end.clone();
            let e1 = w_end.clone();
            let k2 = &m_mid * (&eye + &k1 * (h / 2.0));
            let e2 = &m_mid * (&e1 * (h / 2.0));
            let f2 = w_mid.clone();
            let k3 = &m_mid * (&eye + &k2 * (h / 2.0));
            let e3 = &m_mid * (&e2 * (h / 2.0));
            let f3 = &m_mid * (&f2 * (h / 2.0)) + &w_mid;
            let k4 = &m_start * (&eye + &k3 * h);
            let e4 = &m_start * (&e3 * h);
            let f4 = &m_start * (&f3 * h);
            let g4 = w_start.clone();

            maps.push(BfStep {
                on_prev: &eye + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0),
                on_est_end: (&e1 + &e2 * 2.0 + &e3 * 2.0 + &e4) * (h / 6.0),
                on_est_mid: (&f2 * 2.0 + &f3 * 2.0 + &f4) * (h / 6.0),
                on_est_start: &g4 * (h / 6.0),
            });

            if first_interval {
                pi = DMatrix::zeros(n, n);
            } else {
                let p1 = pi_rhs(&g_end, &pi);
                let p2 = pi_rhs(&g_mid, &(&pi + &p1 * (h / 2.0)));
                let p3 = pi_rhs(&g_mid, &(&pi + &p2 * (h / 2.0)));
                let p4 = pi_rhs(&g_start, &(&pi + &p3 * h));
                pi += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
                linalg::symmetrize(&mut pi);
                if !linalg::is_psd(&pi, 1e-9) {
                    return Err(Error::StepSize(format!(
                        "smoothing covariance lost positive semidefiniteness at t = {:.6}",
                        grid.time(j)
                    )));
                }
            }
            covariances[j] = pi.clone();
        }
        maps.reverse();

        Ok(Self { grid: grid.clone(), covariances, maps, pinned_start })
    }

    pub fn from_filter_plan(model: &LinearModel, plan: &FilterPlan) -> Result<Self> {
        Self::new(model, &plan.grid, &plan.sigmas, &plan.sigmas_mid)
    }

    pub fn from_filter_run(model: &LinearModel, fr: &FilterRun) -> Result<Self> {
        Self::new(model, &fr.grid, &fr.covariances, &fr.covariances_mid)
    }

    /// Backward pass over one forward run.
    pub fn run(&self, fr: &FilterRun) -> Result<SmoothRun> {
        check_same_grid(&self.grid, &fr.grid)?;
        if fr.estimates_mid.len() != self.grid.steps {
            return Err(Error::InvalidInput(
                "forward run is missing interval midpoints".into(),
            ));
        }
        let steps = self.grid.steps;
        let mut estimates = vec![DVector::<f64>::zeros(0); steps + 1];
        estimates[steps] = fr.estimates[steps].clone();
        let mut x = fr.estimates[steps].clone();
        for j in (0..steps).rev() {
            if j == 0 && self.pinned_start {
                x = fr.estimates[0].clone();
            } else {
                let m = &self.maps[j];
                x = &m.on_prev * &x
                    + &m.on_est_end * &fr.estimates[j + 1]
                    + &m.on_est_mid * &fr.estimates_mid[j]
                    + &m.on_est_start * &fr.estimates[j];
            }
            estimates[j] = x.clone();
        }
        Ok(SmoothRun { grid: self.grid.clone(), estimates, covariances: self.covariances.clone() })
    }
}

/// Bryson-Frazier smoothing of one forward run.
pub fn bryson_frazier_smooth(model: &LinearModel, fr: &FilterRun) -> Result<SmoothRun> {
    if fr.direction != crate::kalman::Direction::Forward {
        return Err(Error::InvalidInput("smoother needs a forward run".into()));
    }
    BrysonFrazierPlan::from_filter_run(model, fr)?.run(fr)
}

/// Precomputed backward information filter: the `Omega` path and the per-
/// interval affine maps for `omega` (two half-steps per interval, composed).
#[derive(Debug, Clone)]
pub struct BackwardPlan {
    grid: TimeGrid,
    /// Omega(t_j), length steps+1, Omega(T) = 0.
    pub info_matrices: Vec<DMatrix<f64>>,
    maps: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl BackwardPlan {
    pub fn new(model: &LinearModel, grid: &TimeGrid) -> Result<Self> {
        let n = model.state_dim();
        let a = &model.drift;
        let a_t = a.transpose();
        let info_rate = model.measurement_information();
        let d = model.effective_process_noise();
        let g = model.gain_map(); // C^T / Z, the constant omega drive per unit y
        let eye = DMatrix::<f64>::identity(n, n);
        let h = grid.dt / 2.0;

        // Backward-time (tau = T − t) derivatives:
        //   dOmega/dtau = Omega A + A^T Omega + C^T Z^{-1} C − Omega D Omega
        //   domega/dtau = (A^T − Omega D) omega + C^T Z^{-1} y
        let omega_rhs = |om: &DMatrix<f64>| -> DMatrix<f64> {
            let oa = om * a;
            &oa + oa.transpose() + &info_rate - om * &d * om
        };

        let half_step = |om: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
            let r1 = omega_rhs(om);
            let om_a = om + &r1 * (h / 2.0);
            let r2 = omega_rhs(&om_a);
            let om_b = om + &r2 * (h / 2.0);
            let r3 = omega_rhs(&om_b);
            let om_c = om + &r3 * h;
            let r4 = omega_rhs(&om_c);
            let mut next = om + (r1 + r2 * 2.0 + r3 * 2.0 + r4) * (h / 6.0);
            linalg::symmetrize(&mut next);

            let m0 = &a_t - om * &d;
            let ma = &a_t - &om_a * &d;
            let mb = &a_t - &om_b * &d;
            let mc = &a_t - &om_c * &d;
            let k1 = m0;
            let kap1 = g.clone();
            let k2 = &ma * (&eye + &k1 * (h / 2.0));
            let kap2 = &ma * (&kap1 * (h / 2.0)) + &g;
            let k3 = &mb * (&eye + &k2 * (h / 2.0));
            let kap3 = &mb * (&kap2 * (h / 2.0)) + &g;
            let k4 = &mc * (&eye + &k3 * h);
            let kap4 = &mc * (&kap3 * h) + &g;
            let phi = &eye + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let psi = (kap1 + kap2 * 2.0 + kap3 * 2.0 + kap4) * (h / 6.0);
            (next, phi, psi)
        };

        let mut info_matrices = vec![DMatrix::<f64>::zeros(n, n); grid.num_points()];
        let mut maps = vec![(DMatrix::<f64>::zeros(0, 0), DVector::<f64>::zeros(0)); grid.steps];
        let mut omega = DMatrix::<f64>::zeros(n, n);
        for j in (0..grid.steps).rev() {
            let (om_mid, phi_a, psi_a) = half_step(&omega);
            let (om_next, phi_b, psi_b) = half_step(&om_mid);
            if !linalg::is_psd(&om_next, 1e-9) {
                return Err(Error::StepSize(format!(
                    "backward information matrix lost positive semidefiniteness at t = {:.6}",
                    grid.time(j)
                )));
            }
            // omega_j = phi_b (phi_a omega_{j+1} + psi_a y) + psi_b y.
            let phi = &phi_b * &phi_a;
            let psi = &phi_b * psi_a + psi_b;
            maps[j] = (phi, psi);
            omega = om_next;
            info_matrices[j] = omega.clone();
        }

        Ok(Self { grid: grid.clone(), info_matrices, maps })
    }

    /// Backward pass over one observation record.
    pub fn run(&self, observations: &[f64]) -> Result<BackwardInfo> {
        if observations.len() != self.grid.num_points() {
            return Err(Error::InvalidInput(format!(
                "observation record has {} samples, grid needs {}",
                observations.len(),
                self.grid.num_points()
            )));
        }
        let steps = self.grid.steps;
        let n = self.info_matrices[0].nrows();
        let mut info_vectors = vec![DVector::<f64>::zeros(n); steps + 1];
        let mut omega_vec = DVector::<f64>::zeros(n);
        for j in (0..steps).rev() {
            let (phi, psi) = &self.maps[j];
            omega_vec = phi * &omega_vec + psi * observations[j];
            info_vectors[j] = omega_vec.clone();
        }
        Ok(BackwardInfo {
            grid: self.grid.clone(),
            info_matrices: self.info_matrices.clone(),
            info_vectors,
        })
    }
}

/// Information-form backward filter over a full observation record.
pub fn backward_filter(
    model: &LinearModel,
    grid: &TimeGrid,
    observations: &[f64],
) -> Result<BackwardInfo> {
    BackwardPlan::new(model, grid)?.run(observations)
}

/// Combine a forward run with the backward information filter:
/// `Pi = (Sigma^{-1} + Omega)^{-1}` and `x~ = Pi (Sigma^{-1} x^ + omega)`,
/// evaluated as `Pi = Sigma (I + Omega Sigma)^{-1}` and
/// `x~ = (I + Sigma Omega)^{-1} (x^ + Sigma omega)`.
pub fn two_filter_combine(fwd: &FilterRun, bwd: &BackwardInfo) -> Result<SmoothRun> {
    check_same_grid(&fwd.grid, &bwd.grid)?;
    let n = fwd.estimates[0].len();
    let eye = DMatrix::<f64>::identity(n, n);
    let points = fwd.grid.num_points();
    let mut estimates = Vec::with_capacity(points);
    let mut covariances = Vec::with_capacity(points);
    for j in 0..points {
        let sigma = &fwd.covariances[j];
        let omega = &bwd.info_matrices[j];
        let gram = &eye + omega * sigma;
        let gram_inv = linalg::general_inverse(&gram, gram.amax(), "I + Omega Sigma")?;
        let mut pi = sigma * &gram_inv;
        linalg::symmetrize(&mut pi);
        // (I + Sigma Omega)^{-1} = ((I + Omega Sigma)^T)^{-1} = gram_inv^T.
        let x = gram_inv.transpose() * (&fwd.estimates[j] + sigma * &bwd.info_vectors[j]);
        estimates.push(x);
        covariances.push(pi);
    }
    Ok(SmoothRun { grid: fwd.grid.clone(), estimates, covariances })
}

/// Monte Carlo estimate of the interior filtering and smoothing errors of
/// the observed state component.
#[derive(Debug, Clone)]
pub struct SmoothingMcResult {
    pub trials: usize,
    pub filtered_mse: f64,
    pub filtered_stderr: f64,
    pub smoothed_mse: f64,
    pub smoothed_stderr: f64,
}

/// Simulate, filter and smooth `trials` independent records, and average the
/// squared error of the first state component over the interior window
/// (`interior_margin` time units clear of both record ends). Trials run in
/// parallel chunks but accumulate in a fixed order.
pub fn smoothing_monte_carlo(
    model: &LinearModel,
    grid: &TimeGrid,
    sigma0: &DMatrix<f64>,
    initial: &crate::sim::InitialCondition,
    interior_margin: f64,
    trials: usize,
    master_seed: u64,
) -> Result<SmoothingMcResult> {
    use rayon::prelude::*;

    if trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    let lo = grid.index_at_offset(interior_margin);
    let hi = grid.steps.saturating_sub(lo);
    if lo >= hi {
        return Err(Error::InvalidInput(
            "record too short for the interior smoothing window".into(),
        ));
    }
    let plan = FilterPlan::new(model, grid, sigma0)?;
    let bf = BrysonFrazierPlan::from_filter_plan(model, &plan)?;
    let n = model.state_dim();

    const CHUNK: usize = 32;
    let ranges: Vec<(usize, usize)> =
        (0..trials).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(trials))).collect();
    let chunks: Vec<Result<Vec<(f64, f64)>>> = ranges
        .par_iter()
        .map(|&(start, end)| {
            let mut out = Vec::with_capacity(end - start);
            for trial in start..end {
                let seed = crate::sim::derive_trial_seed(master_seed, trial as u64);
                let x0 = initial.draw(n, seed)?;
                let traj = crate::sim::simulate(model, grid, &x0, seed)?;
                let fr = plan.run(&traj.observations, &DVector::zeros(n))?;
                let sr = bf.run(&fr)?;
                let (mut af, mut asm) = (0.0, 0.0);
                for j in lo..=hi {
                    let ef = traj.states[j][0] - fr.estimates[j][0];
                    let es = traj.states[j][0] - sr.estimates[j][0];
                    af += ef * ef;
                    asm += es * es;
                }
                let len = (hi - lo + 1) as f64;
                out.push((af / len, asm / len));
            }
            Ok(out)
        })
        .collect();

    let mut filt = Vec::with_capacity(trials);
    let mut smooth = Vec::with_capacity(trials);
    for chunk in chunks {
        for (f, s) in chunk? {
            filt.push(f);
            smooth.push(s);
        }
    }
    let (filtered_mse, filtered_stderr) = crate::pll::mean_and_stderr(&filt);
    let (smoothed_mse, smoothed_stderr) = crate::pll::mean_and_stderr(&smooth);
    Ok(SmoothingMcResult { trials, filtered_mse, filtered_stderr, smoothed_mse, smoothed_stderr })
}

/// Steady-state smoothing error of the OU message:
/// `Pi_ss = kappa / (2 k sqrt(kappa Lambda / k + 1))`.
pub fn ou_smoothing_steady_state(k: f64, kappa: f64, lambda: f64) -> Result<f64> {
    if !(k > 0.0) || !(kappa >= 0.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidInput(
            "smoothing steady state needs k > 0, kappa >= 0, Lambda >= 0".into(),
        ));
    }
    Ok(kappa / (2.0 * k * (kappa * lambda / k + 1.0).sqrt()))
}

/// Steady state of the backward (retrodiction) filter for the OU message,
/// the PSD root of `−2k Xi + Lambda k Xi^2 − kappa = 0`:
/// `Xi_ss = [1 + sqrt(kappa Lambda / k + 1)] / Lambda`.
pub fn ou_backward_steady_state(k: f64, kappa: f64, lambda: f64) -> Result<f64> {
    if !(k > 0.0) || !(kappa >= 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidInput(
            "backward steady state needs k > 0, kappa >= 0, Lambda > 0".into(),
        ));
    }
    Ok((1.0 + (kappa * lambda / k + 1.0).sqrt()) / lambda)
}
