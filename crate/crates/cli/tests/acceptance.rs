//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`). Every
//! tolerance is pinned in code.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use phaselock_core::kalman::{self, OuClosedForm};
use phaselock_core::model::{ou_model_from_lambda, wiener_model_from_photon_number, TimeGrid};
use phaselock_core::oscillator::{self, OscParams};
use phaselock_core::pll::{
    monte_carlo_mse, DiscriminatorMode, PllEstimator, PllSetup, PostSmootherSetup,
};
use phaselock_core::sim::InitialCondition;
use phaselock_core::smooth::{self, smoothing_monte_carlo};
use phaselock_core::spectral;

fn criterion(id: &str, pass: bool, detail: &str) {
    println!("acceptance {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn ou_model() -> phaselock_core::LinearModel {
    ou_model_from_lambda(1.0, 1.0, 1.0, 8.0).unwrap()
}

const GAMMA_OU: f64 = 3.0;

#[test]
fn acceptance_01_ou_filtering_steady_state() {
    let start = Instant::now();
    let cf = OuClosedForm::new(1.0, 1.0, 8.0).unwrap();
    criterion("01a", (cf.sigma_ss - 0.25).abs() < 1e-14, &format!("analytic Sigma_ss = {}", cf.sigma_ss));

    // Numeric Riccati agrees to relative error < 1e-6.
    let model = ou_model();
    let grid = TimeGrid::from_duration(0.0, 1e-3 / GAMMA_OU, 30.0 / GAMMA_OU).unwrap();
    let prior = DMatrix::from_element(1, 1, 0.5);
    let sigmas = kalman::integrate_variance(&model, &grid, &prior).unwrap();
    let numeric = sigmas.last().unwrap()[(0, 0)];
    let rel = (numeric - 0.25).abs() / 0.25;
    criterion("01b", rel < 1e-6, &format!("Riccati steady state rel err {rel:.2e}"));

    // Monte Carlo linearized PLL: 1e3 trials, duration 40/gamma,
    // dt = 1/(200 gamma), tail MSE within 3 stderr of 0.25.
    let setup = PllSetup {
        model,
        estimator: PllEstimator::KalmanBucy { sigma0: prior.clone() },
        mode: DiscriminatorMode::Linearized,
        grid: TimeGrid::from_duration(0.0, 1.0 / (200.0 * GAMMA_OU), 40.0 / GAMMA_OU).unwrap(),
        gamma: GAMMA_OU,
        initial: InitialCondition::Gaussian(prior),
        post_smoother: None,
    };
    let mc = monte_carlo_mse(&setup, 1000, 42).unwrap();
    let diff = (mc.steady_state_mse - 0.25).abs();
    criterion(
        "01c",
        diff < 3.0 * mc.steady_state_stderr,
        &format!("tail MSE {:.5} +- {:.5}", mc.steady_state_mse, mc.steady_state_stderr),
    );
    let elapsed = start.elapsed().as_secs_f64();
    criterion("01d", elapsed < 60.0, &format!("runtime {elapsed:.2} s < 60 s"));
}

#[test]
fn acceptance_02_ou_transient_matches_closed_form() {
    // mu = 2, gamma = 3 from Sigma0 = 0; spot value Sigma = 0.1 at
    // elapsed = ln(2)/6; full path to rel err < 1e-6 over [0, 10/gamma]
    // at dt = 1e-4/gamma.
    let cf = OuClosedForm::new(1.0, 1.0, 8.0).unwrap();
    assert!((cf.mu(0.0) - 2.0).abs() < 1e-14);
    assert!((cf.gamma - 3.0).abs() < 1e-14);
    let spot = cf.variance_at(0.0, (2.0f64).ln() / 6.0).unwrap();
    criterion("02a", (spot - 0.1).abs() < 1e-14, &format!("closed-form spot value {spot}"));

    let model = ou_model();
    let dt = 1e-4 / GAMMA_OU;
    let grid = TimeGrid::from_duration(0.0, dt, 10.0 / GAMMA_OU).unwrap();
    let sigmas = kalman::integrate_variance(&model, &grid, &DMatrix::zeros(1, 1)).unwrap();
    let mut worst = 0.0f64;
    for (j, s) in sigmas.iter().enumerate().skip(1) {
        let exact = cf.variance_at(0.0, grid.time(j)).unwrap();
        worst = worst.max((s[(0, 0)] - exact).abs() / exact);
    }
    criterion("02b", worst < 1e-6, &format!("max rel err {worst:.2e} over [0, 10/gamma]"));
}

#[test]
fn acceptance_03_wiener_process_filter_and_smoother() {
    let n_photon = 100.0f64;
    let sigma_ss = 0.5 / n_photon.sqrt();
    let pi_ss = 0.25 / n_photon.sqrt();
    criterion(
        "03a",
        (sigma_ss - 0.05).abs() < 1e-15 && (pi_ss - 0.025).abs() < 1e-15,
        "Sigma_ss = 1/(2 sqrt N) = 0.05, Pi_ss = 1/(4 sqrt N) = 0.025",
    );

    let model = wiener_model_from_photon_number(1.0, n_photon).unwrap();
    let gamma = 2.0 * n_photon.sqrt();
    let grid = TimeGrid::from_duration(0.0, 1.0 / (200.0 * gamma), 40.0 / gamma).unwrap();
    let prior = DMatrix::from_element(1, 1, sigma_ss);
    let mc = smoothing_monte_carlo(
        &model,
        &grid,
        &prior,
        &InitialCondition::Zero,
        10.0 / gamma,
        1000,
        42,
    )
    .unwrap();
    criterion(
        "03b",
        (mc.filtered_mse - 0.05).abs() < 3.0 * mc.filtered_stderr,
        &format!("filtered MSE {:.5} +- {:.5}", mc.filtered_mse, mc.filtered_stderr),
    );
    criterion(
        "03c",
        (mc.smoothed_mse - 0.025).abs() < 3.0 * mc.smoothed_stderr,
        &format!("smoothed MSE {:.5} +- {:.5}", mc.smoothed_mse, mc.smoothed_stderr),
    );
}

#[test]
fn acceptance_04_ou_smoothing_three_routes() {
    let target = 1.0 / 6.0;
    // (a) Bryson-Frazier: interior smoothing covariance of a long run.
    let model = ou_model();
    let grid = TimeGrid::from_duration(0.0, 1e-3, 60.0 / GAMMA_OU).unwrap();
    let prior = DMatrix::from_element(1, 1, 0.5);
    let plan = kalman::FilterPlan::new(&model, &grid, &prior).unwrap();
    let bf = smooth::BrysonFrazierPlan::from_filter_plan(&model, &plan).unwrap();
    let pi_bf = bf.covariances[grid.steps / 2][(0, 0)];
    // (b) Two-filter combination of the steady-state roots.
    let xi_ss = smooth::ou_backward_steady_state(1.0, 1.0, 8.0).unwrap();
    assert!((xi_ss - 0.5).abs() < 1e-14);
    let pi_combined = 1.0 / (1.0 / 0.25 + 1.0 / xi_ss);
    // (c) Frequency-domain quadrature.
    let sx = spectral::LorentzianSpectrum::message(1.0, 1.0).unwrap();
    let sxy = spectral::cross_spectrum(&sx, 1.0).unwrap();
    let sy = spectral::observation_spectrum(&sx, 1.0, 0.125).unwrap();
    let pi_quad = spectral::smoothing_mse(&sx, &sxy, &sy).unwrap();

    let routes = [pi_bf, pi_combined, pi_quad];
    let worst = routes
        .iter()
        .flat_map(|a| routes.iter().map(move |b| (a - b).abs() / target))
        .fold(0.0f64, f64::max);
    criterion(
        "04a",
        worst < 1e-4 && (pi_combined - target).abs() < 1e-14,
        &format!("routes {pi_bf:.8}/{pi_combined:.8}/{pi_quad:.8}, spread {worst:.2e}"),
    );

    // Monte Carlo interior smoothed MSE within 3 stderr of 1/6.
    let mc_grid = TimeGrid::from_duration(0.0, 1.0 / (200.0 * GAMMA_OU), 40.0 / GAMMA_OU).unwrap();
    let mc = smoothing_monte_carlo(
        &model,
        &mc_grid,
        &prior,
        &InitialCondition::Gaussian(prior.clone()),
        10.0 / GAMMA_OU,
        1000,
        42,
    )
    .unwrap();
    criterion(
        "04b",
        (mc.smoothed_mse - target).abs() < 3.0 * mc.smoothed_stderr,
        &format!("MC smoothed MSE {:.5} +- {:.5}", mc.smoothed_mse, mc.smoothed_stderr),
    );
}

#[test]
fn acceptance_05_wiener_filter_synthesis() {
    let z = 0.125f64;
    let sx = spectral::LorentzianSpectrum::message(1.0, 1.0).unwrap();
    let sxy = spectral::cross_spectrum(&sx, 1.0).unwrap();
    let sy = spectral::observation_spectrum(&sx, 1.0, z).unwrap();
    let hplus = spectral::spectral_factorize(&sy).unwrap();
    let h = spectral::wiener_filter(&sxy, &hplus).unwrap();
    let l = spectral::loop_filter(&h, 1.0).unwrap();

    let shapes = (hplus.gain - z.sqrt()).abs() < 1e-14
        && (hplus.zero.unwrap() - 3.0).abs() < 1e-12
        && (hplus.pole - 1.0).abs() < 1e-14
        && (h.gain - 2.0).abs() < 1e-12
        && (h.pole - 3.0).abs() < 1e-12
        && (l.gain - 2.0).abs() < 1e-12
        && (l.pole - 1.0).abs() < 1e-12;
    criterion("05a", shapes, "H+ = sqrt(Z)(iw+3)/(iw+1), H = 2/(iw+3), L = 2/(iw+1)");

    let mut factor_err = 0.0f64;
    let mut loop_err = 0.0f64;
    for i in 0..1000 {
        let omega = 10f64.powf(-3.0 + 6.0 * i as f64 / 999.0);
        for w in [omega, -omega] {
            factor_err = factor_err.max((hplus.eval(w).norm_sqr() - sy.value(w)).abs() / sy.value(w));
            let closed = l.eval(w) / (1.0 + l.eval(w));
            loop_err = loop_err.max((closed - h.eval(w)).norm());
        }
    }
    criterion(
        "05b",
        factor_err < 1e-10 && loop_err < 1e-10,
        &format!("identity residuals {factor_err:.2e} / {loop_err:.2e}"),
    );

    let mse = spectral::filtering_mse(&sx, 1.0, z).unwrap();
    let rel = (mse - 0.25).abs() / 0.25;
    criterion("05c", rel < 1e-4, &format!("log-integral MSE {mse:.8}, rel err {rel:.2e}"));
}

#[test]
fn acceptance_06_post_loop_smoother() {
    let sx = spectral::LorentzianSpectrum::message(1.0, 1.0).unwrap();
    let sxy = spectral::cross_spectrum(&sx, 1.0).unwrap();
    let sy = spectral::observation_spectrum(&sx, 1.0, 0.125).unwrap();
    let h = spectral::wiener_filter(&sxy, &spectral::spectral_factorize(&sy).unwrap()).unwrap();
    let l = spectral::loop_filter(&h, 1.0).unwrap();
    let g = spectral::unrealizable_filter(&sxy, &sy).unwrap();
    let f = spectral::post_loop_filter(&g, &h).unwrap();

    let shape = (f.transfer.gain - 4.0).abs() < 1e-12
        && (f.rate - 3.0).abs() < 1e-12
        && (f.impulse(-0.5) - 4.0 * (-1.5f64).exp()).abs() < 1e-12
        && f.impulse(0.25) == 0.0;
    criterion("06a", shape, "F = 4/(-iw+3), f(t) = 4 e^{3t} for t <= 0");

    let dt = 1.0 / (200.0 * GAMMA_OU);
    let setup = PllSetup {
        model: ou_model(),
        estimator: PllEstimator::WienerLoop { gain: l.gain, pole: l.pole },
        mode: DiscriminatorMode::Linearized,
        grid: TimeGrid::from_duration(0.0, dt, 40.0 / GAMMA_OU).unwrap(),
        gamma: GAMMA_OU,
        initial: InitialCondition::Gaussian(DMatrix::from_element(1, 1, 0.5)),
        post_smoother: Some(PostSmootherSetup {
            coeffs: spectral::discretize_one_pole(&f.transfer, dt).unwrap(),
            delay: 10.0 / GAMMA_OU,
        }),
    };
    let mc = monte_carlo_mse(&setup, 1000, 42).unwrap();
    let smoothed = mc.smoothed_mse.unwrap();
    let se = mc.smoothed_stderr.unwrap();
    criterion(
        "06b",
        (smoothed - 1.0 / 6.0).abs() < 3.0 * se,
        &format!("delayed-estimate MSE {smoothed:.5} +- {se:.5}"),
    );
}

#[test]
fn acceptance_07_oscillator_filter() {
    let start = Instant::now();
    let p = OscParams::normalized(1.0).unwrap();
    let sigma = oscillator::filter_steady_state(&p).unwrap();
    let values = (sigma[(0, 0)] - 0.455090).abs() < 1e-6
        && (sigma[(0, 1)] - 0.207107).abs() < 1e-6
        && (sigma[(1, 1)] - 0.643594).abs() < 1e-6;
    criterion(
        "07a",
        values,
        &format!(
            "Sigma11 {:.6}, Sigma12 {:.6}, Sigma22 {:.6}",
            sigma[(0, 0)],
            sigma[(0, 1)],
            sigma[(1, 1)]
        ),
    );

    let mut det_worst = 0.0f64;
    for q in [0.1, 1.0, 10.0] {
        let s = oscillator::filter_steady_state(&OscParams::normalized(q).unwrap()).unwrap();
        let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
        det_worst = det_worst.max((det - 0.25).abs());
    }
    criterion("07b", det_worst < 1e-9, &format!("max |det - 1/4| = {det_worst:.2e}"));

    let model = p.to_linear_model(1.0).unwrap();
    let numeric = kalman::steady_state_covariance(&model, kalman::STEADY_STATE_TOL).unwrap();
    let rel = (&numeric - &sigma).amax() / sigma.amax();
    criterion("07c", rel < 1e-6, &format!("Riccati convergence rel err {rel:.2e}"));
    let elapsed = start.elapsed().as_secs_f64();
    criterion("07d", elapsed < 10.0, &format!("runtime {elapsed:.2} s < 10 s"));
}

#[test]
fn acceptance_08_oscillator_smoothing() {
    let p = OscParams::normalized(1.0).unwrap();
    let pi = oscillator::smoothing_steady_state(&p).unwrap();
    criterion("08a", pi[(0, 1)] == 0.0, "Pi12 = 0");

    let mut worst = 0.0f64;
    let mut bounds_ok = true;
    for i in 0..20 {
        let q = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
        let pq = OscParams::normalized(q).unwrap();
        let m = oscillator::smoothing_steady_state(&pq).unwrap();
        let product = m[(0, 0)] * m[(1, 1)];
        let formula = (1.0 / 32.0) * (1.0 + 1.0 / (1.0 + q * q).sqrt());
        worst = worst.max((product - formula).abs());
        bounds_ok &= product > 1.0 / 32.0 && product <= 1.0 / 16.0;
    }
    criterion(
        "08b",
        worst < 1e-9 && bounds_ok,
        &format!("product formula residual {worst:.2e}, bounds hold on 20 log-spaced Q"),
    );

    let product = pi[(0, 0)] * pi[(1, 1)];
    let rel = (product - 0.0533447).abs() / 0.0533447;
    criterion("08c", rel < 1e-4, &format!("Q = 1 product {product:.7} (rel to quoted {rel:.1e})"));
}

#[test]
fn acceptance_09_smoother_method_equivalence() {
    // OU record.
    let model = ou_model();
    let grid = TimeGrid::from_duration(0.0, 1e-3, 10.0).unwrap();
    let prior = DMatrix::from_element(1, 1, 0.5);
    let traj = phaselock_core::sim::simulate(&model, &grid, &DVector::from_element(1, 0.2), 7)
        .unwrap();
    let fr = kalman::kb_filter(&model, &grid, &traj.observations, &DVector::zeros(1), &prior)
        .unwrap();
    let bf = smooth::bryson_frazier_smooth(&model, &fr).unwrap();
    let bwd = smooth::backward_filter(&model, &grid, &traj.observations).unwrap();
    let tf = smooth::two_filter_combine(&fr, &bwd).unwrap();
    let mut worst = 0.0f64;
    for j in 0..=grid.steps {
        worst = worst.max((&bf.estimates[j] - &tf.estimates[j]).amax());
        worst = worst.max((&bf.covariances[j] - &tf.covariances[j]).amax());
    }
    criterion("09a", worst < 1e-6, &format!("OU max abs difference {worst:.2e}"));

    // Oscillator record.
    let p = OscParams::normalized(1.0).unwrap();
    let model = p.to_linear_model(1.0).unwrap();
    let grid = TimeGrid::from_duration(0.0, 5e-4, 20.0).unwrap();
    let sigma0 = p.ground_state_covariance();
    let traj = phaselock_core::sim::simulate(&model, &grid, &DVector::zeros(2), 13).unwrap();
    let fr = kalman::kb_filter(&model, &grid, &traj.observations, &DVector::zeros(2), &sigma0)
        .unwrap();
    let bf = smooth::bryson_frazier_smooth(&model, &fr).unwrap();
    let bwd = smooth::backward_filter(&model, &grid, &traj.observations).unwrap();
    let tf = smooth::two_filter_combine(&fr, &bwd).unwrap();
    let mut worst = 0.0f64;
    for j in 0..=grid.steps {
        worst = worst.max((&bf.estimates[j] - &tf.estimates[j]).amax());
        worst = worst.max((&bf.covariances[j] - &tf.covariances[j]).amax());
    }
    criterion("09b", worst < 1e-6, &format!("oscillator max abs difference {worst:.2e}"));
}

#[test]
fn acceptance_10_threshold_behavior() {
    // 4N = 400: nonlinear matches linearized within 10% on paired seeds.
    let make = |mode| {
        let n_photon = 100.0f64;
        let gamma = 2.0 * n_photon.sqrt();
        PllSetup {
            model: wiener_model_from_photon_number(1.0, n_photon).unwrap(),
            estimator: PllEstimator::KalmanBucy {
                sigma0: DMatrix::from_element(1, 1, 0.05),
            },
            mode,
            grid: TimeGrid::from_duration(0.0, 1.0 / (200.0 * gamma), 40.0 / gamma).unwrap(),
            gamma,
            initial: InitialCondition::Zero,
            post_smoother: None,
        }
    };
    let lin = monte_carlo_mse(&make(DiscriminatorMode::Linearized), 400, 42).unwrap();
    let nl = monte_carlo_mse(&make(DiscriminatorMode::Nonlinear), 400, 42).unwrap();
    let rel = (nl.steady_state_mse - lin.steady_state_mse).abs() / lin.steady_state_mse;
    criterion("10a", rel < 0.10, &format!("mode disagreement {rel:.3} at 4N = 400"));

    // 4N = 2: strictly positive slip rate and MSE above the linear value.
    let n_photon = 0.5f64;
    let gamma = 2.0 * n_photon.sqrt();
    let setup = PllSetup {
        model: wiener_model_from_photon_number(1.0, n_photon).unwrap(),
        estimator: PllEstimator::KalmanBucy {
            sigma0: DMatrix::from_element(1, 1, 0.5 / n_photon.sqrt()),
        },
        mode: DiscriminatorMode::Nonlinear,
        grid: TimeGrid::from_duration(0.0, 1.0 / (200.0 * gamma), 200.0).unwrap(),
        gamma,
        initial: InitialCondition::Zero,
        post_smoother: None,
    };
    let mc = monte_carlo_mse(&setup, 200, 42).unwrap();
    let prediction = 0.5 / n_photon.sqrt();
    criterion(
        "10b",
        mc.slip_rate > 0.0 && mc.steady_state_mse > prediction,
        &format!(
            "slip rate {:.3e}/time, MSE {:.3} vs linear {:.3}",
            mc.slip_rate, mc.steady_state_mse, prediction
        ),
    );
}

#[test]
fn acceptance_11_csv_determinism() {
    // Identical config and seed produce byte-identical CSV output modulo the
    // version metadata line, via the real binary.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        "experiment = ou-filter\nk = 1\nkappa = 1\nLambda = 8\n\
         dt = 1.6666666666666666e-3\nduration = 13.333333333333334\n\
         trials = 100\nmaster_seed = 42\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_phaselock");
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let status = std::process::Command::new(bin)
            .args(["run", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        out_dir
    };
    let a = run("a");
    let b = run("b");
    let strip_version = |path: &std::path::Path| -> String {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# phaselock-version"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut pass = true;
    for name in ["ou-filter-summary.csv", "ou-filter-trace.csv"] {
        pass &= strip_version(&a.join(name)) == strip_version(&b.join(name));
    }
    criterion("11", pass, "summary and trace byte-identical modulo the version line");
}

#[test]
fn acceptance_summary_banner() {
    // Purely informational: names the criteria covered by this target.
    println!(
        "acceptance suite covers: 01 OU filtering, 02 OU transient, 03 Wiener process, \
         04 OU smoothing, 05 Wiener synthesis, 06 post-loop smoother, 07 oscillator filter, \
         08 oscillator smoothing, 09 smoother equivalence, 10 threshold behavior, \
         11 CSV determinism"
    );
}
