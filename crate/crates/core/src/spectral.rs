//! Frequency-domain Wiener filtering for the stationary first-order cases.
//!
//! The message spectrum is Lorentzian, `S_x = kappa / (omega^2 + k^2)`, the
//! observation adds a white floor `Z`, and every transfer function involved is
//! a one-pole rational: the minimum-phase factor
//! `H+ = sqrt(Z) (i omega + gamma)/(i omega + k)`, the realizable Wiener
//! filter `H = Gamma_ss / (i omega + gamma)`, the loop filter
//! `L = Gamma_ss / (i omega + k)`, and the anticausal post-loop smoother
//! `F = (k + gamma)/(−i omega + gamma)`. The scope is deliberately limited to
//! this family; general rational factorization is not attempted.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `strength / (omega^2 + corner^2) + floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianSpectrum {
    pub strength: f64,
    pub corner: f64,
    pub floor: f64,
}

impl LorentzianSpectrum {
    pub fn new(strength: f64, corner: f64, floor: f64) -> Result<Self> {
        if !(strength >= 0.0) || !(corner >= 0.0) || !(floor >= 0.0) {
            return Err(Error::InvalidInput(
                "spectrum needs strength, corner, floor >= 0".into(),
            ));
        }
        Ok(Self { strength, corner, floor })
    }

    /// Message spectrum of the OU process, `S_x = kappa / (omega^2 + k^2)`.
    pub fn message(kappa: f64, k: f64) -> Result<Self> {
        Self::new(kappa, k, 0.0)
    }

    pub fn value(&self, omega: f64) -> f64 {
        self.strength / (omega * omega + self.corner * self.corner) + self.floor
    }
}

/// Cross spectrum `S_xy = beta kappa / (omega^2 + k^2)` of message and record.
pub fn cross_spectrum(sx: &LorentzianSpectrum, beta: f64) -> Result<LorentzianSpectrum> {
    if sx.floor != 0.0 {
        return Err(Error::InvalidInput("message spectrum must have zero floor".into()));
    }
    LorentzianSpectrum::new(beta * sx.strength, sx.corner, 0.0)
}

/// Observation spectrum `S_y = beta^2 kappa / (omega^2 + k^2) + Z`.
pub fn observation_spectrum(
    sx: &LorentzianSpectrum,
    beta: f64,
    z: f64,
) -> Result<LorentzianSpectrum> {
    if sx.floor != 0.0 {
        return Err(Error::InvalidInput("message spectrum must have zero floor".into()));
    }
    if !(z > 0.0) {
        return Err(Error::InvalidInput("measurement floor Z must be positive".into()));
    }
    LorentzianSpectrum::new(beta * beta * sx.strength, sx.corner, z)
}

/// Whether the single pole sits in `i omega + p` (causal) or `−i omega + p`
/// (anticausal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferForm {
    Causal,
    Anticausal,
}

/// One-pole rational transfer `gain (±i omega + zero)/(±i omega + pole)`;
/// the numerator factor is present only when `zero` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransfer {
    pub gain: f64,
    pub zero: Option<f64>,
    pub pole: f64,
    pub form: TransferForm,
}

impl RationalTransfer {
    pub fn eval(&self, omega: f64) -> Complex64 {
        let w = match self.form {
            TransferForm::Causal => omega,
            TransferForm::Anticausal => -omega,
        };
        let den = Complex64::new(self.pole, w);
        let num = match self.zero {
            Some(z) => Complex64::new(z, w),
            None => Complex64::new(1.0, 0.0),
        };
        self.gain * num / den
    }
}

/// Closed-loop rate of the factorization: `gamma = sqrt(k^2 + strength/floor)`.
fn corner_gamma(sy: &LorentzianSpectrum) -> f64 {
    (sy.corner * sy.corner + sy.strength / sy.floor).sqrt()
}

/// Minimum-phase spectral factor `H+` with `|H+|^2 = S_y`:
/// `H+ = sqrt(Z) (i omega + gamma)/(i omega + k)`.
pub fn spectral_factorize(sy: &LorentzianSpectrum) -> Result<RationalTransfer> {
    if !(sy.floor > 0.0) {
        return Err(Error::InvalidInput(
            "factorization needs a white floor (Z > 0)".into(),
        ));
    }
    Ok(RationalTransfer {
        gain: sy.floor.sqrt(),
        zero: Some(corner_gamma(sy)),
        pole: sy.corner,
        form: TransferForm::Causal,
    })
}

/// Realizable Wiener filter `H = (1/H+) [S_xy / H+*]_+`.
///
/// For the one-pole family the realizable part works out to
/// `H = Gamma_ss / (i omega + gamma)` with
/// `Gamma_ss = strength_xy / (Z (gamma + k))`.
pub fn wiener_filter(
    sxy: &LorentzianSpectrum,
    hplus: &RationalTransfer,
) -> Result<RationalTransfer> {
    let gamma = match (hplus.form, hplus.zero) {
        (TransferForm::Causal, Some(z)) => z,
        _ => {
            return Err(Error::Unsupported(
                "H+ must be the causal minimum-phase factor".into(),
            ))
        }
    };
    if sxy.floor != 0.0 {
        return Err(Error::Unsupported("cross spectrum must have zero floor".into()));
    }
    let k = hplus.pole;
    if (sxy.corner - k).abs() > 1e-9 * k.abs().max(sxy.corner.abs()).max(1e-12) {
        return Err(Error::Unsupported(format!(
            "cross-spectrum corner {} does not match the factor pole {k}",
            sxy.corner
        )));
    }
    let z = hplus.gain * hplus.gain;
    let gain = sxy.strength / (z * (gamma + k));
    Ok(RationalTransfer { gain, zero: None, pole: gamma, form: TransferForm::Causal })
}

/// Loop filter realizing `H` inside the feedback loop:
/// `L = H / (1 − beta H)`, which moves the pole from `gamma` back to `k`.
pub fn loop_filter(h: &RationalTransfer, beta: f64) -> Result<RationalTransfer> {
    if h.zero.is_some() || h.form != TransferForm::Causal {
        return Err(Error::Unsupported("loop filter needs the one-pole causal H".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput("beta must be >= 0".into()));
    }
    let mut pole = h.pole - beta * h.gain;
    // The Wiener-process limit lands on a pure integrator; snap float dust.
    if pole.abs() < 1e-9 * h.pole.abs() {
        pole = 0.0;
    }
    Ok(RationalTransfer { gain: h.gain, zero: None, pole, form: TransferForm::Causal })
}

/// Optimum unrealizable filter `G = S_xy / S_y`, a causal x anticausal pole
/// pair sharing the rate `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrealizablePair {
    pub causal: RationalTransfer,
    pub anticausal: RationalTransfer,
}

impl UnrealizablePair {
    pub fn eval(&self, omega: f64) -> Complex64 {
        self.causal.eval(omega) * self.anticausal.eval(omega)
    }
}

pub fn unrealizable_filter(
    sxy: &LorentzianSpectrum,
    sy: &LorentzianSpectrum,
) -> Result<UnrealizablePair> {
    if !(sy.floor > 0.0) {
        return Err(Error::InvalidInput("S_y needs a white floor".into()));
    }
    if sxy.floor != 0.0 || (sxy.corner - sy.corner).abs() > 1e-9 * sy.corner.max(1e-12) {
        return Err(Error::Unsupported(
            "S_xy must be a pure Lorentzian sharing S_y's corner".into(),
        ));
    }
    let gamma = corner_gamma(sy);
    // G = (strength_xy / Z) / (omega^2 + gamma^2), split symmetrically.
    let root_gain = (sxy.strength / sy.floor).sqrt();
    Ok(UnrealizablePair {
        causal: RationalTransfer {
            gain: root_gain,
            zero: None,
            pole: gamma,
            form: TransferForm::Causal,
        },
        anticausal: RationalTransfer {
            gain: root_gain,
            zero: None,
            pole: gamma,
            form: TransferForm::Anticausal,
        },
    })
}

/// Anticausal post-loop filter `F = G / H` with its closed-form impulse
/// response `f(t) = gain e^{gamma t}` for `t <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostLoopFilter {
    pub transfer: RationalTransfer,
    /// Decay rate of the anticausal exponential (the pole `gamma`).
    pub rate: f64,
    /// Suggested causal-approximation delay, `10 / gamma`.
    pub suggested_delay: f64,
}

impl PostLoopFilter {
    /// Impulse response `f(t) = gain e^{gamma t}` for `t <= 0`, else 0.
    pub fn impulse(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.transfer.gain * (self.rate * t).exp()
        } else {
            0.0
        }
    }

    /// Fraction of the impulse-response mass ignored by truncating the
    /// anticausal tail beyond a delay `t_d`: `e^{−gamma t_d}`.
    pub fn tail_fraction(&self, delay: f64) -> f64 {
        (-self.rate * delay).exp()
    }
}

pub fn post_loop_filter(
    g: &UnrealizablePair,
    h: &RationalTransfer,
) -> Result<PostLoopFilter> {
    let gamma = g.causal.pole;
    if (g.anticausal.pole - gamma).abs() > 1e-12 * gamma.max(1e-12)
        || (h.pole - gamma).abs() > 1e-9 * gamma.max(1e-12)
        || h.zero.is_some()
    {
        return Err(Error::Unsupported(
            "post-loop filter needs G and H from the same synthesis".into(),
        ));
    }
    if !(h.gain > 0.0) {
        return Err(Error::Unsupported("H must have positive gain".into()));
    }
    // F = G/H: the causal pole cancels, leaving gain/(−i omega + gamma).
    let gain = g.causal.gain * g.anticausal.gain / h.gain;
    Ok(PostLoopFilter {
        transfer: RationalTransfer {
            gain,
            zero: None,
            pole: gamma,
            form: TransferForm::Anticausal,
        },
        rate: gamma,
        suggested_delay: 10.0 / gamma,
    })
}

/// Absolute tolerance of the MSE quadratures.
const QUAD_TOL: f64 = 1e-8;

fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(Error::Precision("quadrature did not converge".into()));
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(l + r)
}

/// `(1/2pi) Integral g(tan u) sec^2 u du` over `(-pi/2, pi/2)`, i.e. the full
/// frequency-axis integral of `g` after the compactifying substitution.
fn frequency_integral(g: &dyn Fn(f64) -> f64) -> Result<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let f = |u: f64| {
        let t = u.tan();
        g(t) * (1.0 + t * t)
    };
    let (a, b) = (-FRAC_PI_2, FRAC_PI_2);
    let fa = f(a);
    let fm = f(0.0);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    Ok(adaptive_simpson(&f, a, b, fa, fm, fb, whole, QUAD_TOL, 60)? / (2.0 * PI))
}

/// Mean-square error of realizable Wiener filtering,
/// `Sigma = (Z/beta^2) Integral (d omega/2pi) ln[1 + beta^2 S_x(omega)/Z]`.
pub fn filtering_mse(sx: &LorentzianSpectrum, beta: f64, z: f64) -> Result<f64> {
    if sx.floor != 0.0 {
        return Err(Error::InvalidInput("message spectrum must have zero floor".into()));
    }
    if !(z > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidInput("need beta > 0 and Z > 0".into()));
    }
    if sx.strength == 0.0 {
        return Ok(0.0);
    }
    let c = beta * beta * sx.strength / z;
    let k2 = sx.corner * sx.corner;
    let integral = frequency_integral(&|omega| (c / (omega * omega + k2)).ln_1p())?;
    Ok(z / (beta * beta) * integral)
}

/// Mean-square error of unrealizable (smoothing) estimation,
/// `Pi = Integral (d omega/2pi) [S_x − |S_xy|^2 / S_y]`.
pub fn smoothing_mse(
    sx: &LorentzianSpectrum,
    sxy: &LorentzianSpectrum,
    sy: &LorentzianSpectrum,
) -> Result<f64> {
    if sx.floor != 0.0 || sxy.floor != 0.0 {
        return Err(Error::InvalidInput("S_x and S_xy must have zero floor".into()));
    }
    if !(sy.floor > 0.0) {
        return Err(Error::InvalidInput("S_y needs a white floor".into()));
    }
    if sx.strength == 0.0 {
        return Ok(0.0);
    }
    frequency_integral(&|omega| {
        let sx_v = sx.value(omega);
        let sxy_v = sxy.value(omega);
        let sy_v = sy.value(omega);
        sx_v - sxy_v * sxy_v / sy_v
    })
}

/// Exact-pole discretization of a one-pole transfer:
/// `state <- decay * state + input_gain * input` per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteOnePole {
    pub decay: f64,
    pub input_gain: f64,
}

impl DiscreteOnePole {
    /// Pass-through recursion (decay 0, unit input gain).
    pub fn identity() -> Self {
        Self { decay: 0.0, input_gain: 1.0 }
    }

    #[inline]
    pub fn step(&self, state: &mut f64, input: f64) -> f64 {
        *state = self.decay * *state + self.input_gain * input;
        *state
    }

    /// Run the recursion forward over a series (causal realization).
    pub fn apply_forward(&self, series: &[f64]) -> Vec<f64> {
        let mut state = 0.0;
        series.iter().map(|&x| self.step(&mut state, x)).collect()
    }

    /// Run the recursion from the end of the record backward (anticausal
    /// realization; output index j sums inputs at j, j+1, ...).
    pub fn apply_reversed(&self, series: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; series.len()];
        let mut state = 0.0;
        for j in (0..series.len()).rev() {
            out[j] = self.step(&mut state, series[j]);
        }
        out
    }

    /// Response of the sampled recursion at angular frequency `omega`.
    pub fn frequency_response(&self, omega: f64, dt: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -omega * dt);
        Complex64::new(self.input_gain, 0.0) / (1.0 - self.decay * z_inv)
    }
}

/// Discretize a one-pole transfer with the exact-pole (zero-order-hold) map:
/// `decay = e^{−p dt}`, `input_gain = gain (1 − e^{−p dt})/p`, with the pure
/// integrator (`p = 0`) special-cased to a running sum `gain * dt`.
pub fn discretize_one_pole(rt: &RationalTransfer, dt: f64) -> Result<DiscreteOnePole> {
    if rt.zero.is_some() {
        return Err(Error::Unsupported("discretization needs a pure one-pole".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let p = rt.pole;
    if p == 0.0 {
        if rt.form != TransferForm::Causal {
            return Err(Error::Unsupported("anticausal integrator is not realizable".into()));
        }
        return Ok(DiscreteOnePole { decay: 1.0, input_gain: rt.gain * dt });
    }
    if p < 0.0 {
        return Err(Error::InvalidInput(format!("unstable pole {p} rejected")));
    }
    if p * dt >= 0.1 {
        return Err(Error::InvalidInput(format!(
            "pole-rate * dt = {:.3} too coarse (need < 0.1)",
            p * dt
        )));
    }
    let decay = (-p * dt).exp();
    Ok(DiscreteOnePole { decay, input_gain: rt.gain * (1.0 - decay) / p })
}

#[cfg(test)]
mod tests {
    use super::*;

    // k = kappa = beta = 1, Z = 1/8 throughout: gamma = 3, Sigma_ss = 1/4,
    // Gamma_ss = 2, Pi_ss = 1/6.
    const Z: f64 = 0.125;

    fn setup() -> (LorentzianSpectrum, LorentzianSpectrum, LorentzianSpectrum) {
        let sx = LorentzianSpectrum::message(1.0, 1.0).unwrap();
        let sxy = cross_spectrum(&sx, 1.0).unwrap();
        let sy = observation_spectrum(&sx, 1.0, Z).unwrap();
        (sx, sxy, sy)
    }

    #[test]
    fn observation_spectrum_values() {
        let (_, _, sy) = setup();
        assert!((sy.value(0.0) - 1.125).abs() < 1e-15);
        assert!((sy.value(1e8) - Z).abs() < 1e-15);
        let sx = LorentzianSpectrum::message(1.0, 1.0).unwrap();
        let flat = observation_spectrum(&sx, 0.0, Z).unwrap();
        assert_eq!(flat.value(0.3), Z);
    }

    #[test]
    fn factorization_identity() {
        let (_, _, sy) = setup();
        let hplus = spectral_factorize(&sy).unwrap();
        assert_eq!(hplus.zero, Some(3.0));
        assert_eq!(hplus.pole, 1.0);
        assert!((hplus.gain - Z.sqrt()).abs() < 1e-15);
        // |H+|^2 = S_y at 1000 log-spaced frequencies, both signs.
        for i in 0..1000 {
            let omega = 10f64.powf(-3.0 + 6.0 * i as f64 / 999.0);
            for w in [omega, -omega] {
                let mag2 = hplus.eval(w).norm_sqr();
                let rel = (mag2 - sy.value(w)).abs() / sy.value(w);
                assert!(rel < 1e-10, "rel {rel:.2e} at omega {w:.2e}");
            }
        }
        // kappa = 0: all-pass sqrt(Z).
        let flat = LorentzianSpectrum::new(0.0, 1.0, Z).unwrap();
        let hp = spectral_factorize(&flat).unwrap();
        assert_eq!(hp.zero, Some(1.0));
        assert!((hp.eval(2.7).norm() - Z.sqrt()).abs() < 1e-15);
        // Zero floor is undefined.
        let pure = LorentzianSpectrum::message(1.0, 1.0).unwrap();
        assert!(spectral_factorize(&pure).is_err());
    }

    #[test]
    fn wiener_filter_one_pole() {
        let (_, sxy, sy) = setup();
        let hplus = spectral_factorize(&sy).unwrap();
        let h = wiener_filter(&sxy, &hplus).unwrap();
        assert!((h.gain - 2.0).abs() < 1e-12);
        assert_eq!(h.pole, 3.0);
        // Mismatched corners are rejected.
        let bad = LorentzianSpectrum::new(1.0, 2.0, 0.0).unwrap();
        assert!(wiener_filter(&bad, &hplus).is_err());
        // Nothing to estimate.
        let zero = LorentzianSpectrum::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(wiener_filter(&zero, &hplus).unwrap().gain, 0.0);
    }

    #[test]
    fn wiener_filter_satisfies_wiener_hopf() {
        // K_xy(tau) = Integral_0^inf h(s) K_y(tau − s) ds for tau >= 0,
        // checked by quadrature on a tau grid. Here
        // K_x = (kappa/2k) e^{−k|tau|} and K_y = K_x + Z delta.
        let (_, sxy, sy) = setup();
        let hplus = spectral_factorize(&sy).unwrap();
        let h = wiener_filter(&sxy, &hplus).unwrap();
        let (gain, gamma) = (h.gain, h.pole);
        let k = 1.0;
        for tau in [0.0, 0.1, 0.5, 1.0, 2.0] {
            // Split the integral at s = tau; 2000-point Simpson per piece is
            // plenty for 1e-8 on these smooth exponentials.
            let integrand = |s: f64| {
                let kernel = 0.5 * (-(k * (tau - s).abs())).exp(); // beta^2 kappa / 2k = 1/2
                gain * (-gamma * s).exp() * kernel
            };
            let simpson = |a: f64, b: f64, n: usize| {
                let h_step = (b - a) / n as f64;
                let mut acc = integrand(a) + integrand(b);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * integrand(a + i as f64 * h_step);
                }
                acc * h_step / 3.0
            };
            let far = tau + 40.0 / gamma;
            let mut rhs = simpson(0.0, tau.max(1e-12), 2000) + simpson(tau.max(1e-12), far, 2000);
            rhs += Z * gain * (-gamma * tau).exp(); // white part of K_y
            let lhs = 0.5 * (-k * tau).exp(); // K_xy(tau) = kappa beta / 2k
            assert!((lhs - rhs).abs() < 1e-6, "tau {tau}: lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn loop_filter_pole_moves_to_corner() {
        let (_, sxy, sy) = setup();
        let h = wiener_filter(&sxy, &spectral_factorize(&sy).unwrap()).unwrap();
        let l = loop_filter(&h, 1.0).unwrap();
        assert!((l.pole - 1.0).abs() < 1e-12);
        assert!((l.gain - 2.0).abs() < 1e-12);
        // Closed loop reproduces H pointwise: H = L / (1 + beta L).
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let omega = -50.0 + 0.1 * i as f64;
            let closed = l.eval(omega) / (1.0 + l.eval(omega));
            worst = worst.max((closed - h.eval(omega)).norm());
        }
        assert!(worst < 1e-12, "loop identity residual {worst:.2e}");
        // beta = 0 leaves H untouched.
        let open = loop_filter(&h, 0.0).unwrap();
        assert_eq!(open.pole, h.pole);
        // Wiener-process limit: pure integrator.
        let h_w = RationalTransfer {
            gain: 20.0,
            zero: None,
            pole: 20.0,
            form: TransferForm::Causal,
        };
        let l_w = loop_filter(&h_w, 1.0).unwrap();
        assert_eq!(l_w.pole, 0.0);
    }

    #[test]
    fn filtering_mse_matches_closed_form() {
        let (sx, _, _) = setup();
        let mse = filtering_mse(&sx, 1.0, Z).unwrap();
        assert!((mse - 0.25).abs() < 0.25 * 1e-4, "mse {mse}");
        // kappa = 0: nothing to estimate.
        let flat = LorentzianSpectrum::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(filtering_mse(&flat, 1.0, Z).unwrap(), 0.0);
        // Wiener-process regime via k -> 0: N = 100, Sigma -> 1/(2 sqrt(N)).
        let z_w = 0.0025;
        let sx_w = LorentzianSpectrum::message(1.0, 1e-9).unwrap();
        let mse_w = filtering_mse(&sx_w, 1.0, z_w).unwrap();
        assert!((mse_w - 0.05).abs() < 0.05 * 1e-4, "mse_w {mse_w}");
    }

    #[test]
    fn unrealizable_filter_pointwise() {
        let (_, sxy, sy) = setup();
        let g = unrealizable_filter(&sxy, &sy).unwrap();
        // G = 8 / (omega^2 + 9) at these parameters.
        for omega in [0.0, 0.3, 1.0, 5.0, 40.0] {
            let expected = 8.0 / (omega * omega + 9.0);
            let got = g.eval(omega);
            assert!((got.re - expected).abs() < 1e-12 * expected.max(1e-12));
            assert!(got.im.abs() < 1e-15);
            // Definition at a point.
            let direct = sxy.value(omega) / sy.value(omega);
            assert!((got.re - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn post_loop_filter_impulse_and_tail() {
        let (_, sxy, sy) = setup();
        let hplus = spectral_factorize(&sy).unwrap();
        let h = wiener_filter(&sxy, &hplus).unwrap();
        let g = unrealizable_filter(&sxy, &sy).unwrap();
        let f = post_loop_filter(&g, &h).unwrap();
        assert!((f.transfer.gain - 4.0).abs() < 1e-12);
        assert_eq!(f.transfer.form, TransferForm::Anticausal);
        assert!((f.rate - 3.0).abs() < 1e-12);
        // f(t) = 4 e^{3t} for t <= 0, zero after.
        assert!((f.impulse(0.0) - 4.0).abs() < 1e-12);
        assert!((f.impulse(-1.0) - 4.0 * (-3.0f64).exp()).abs() < 1e-12);
        assert_eq!(f.impulse(0.1), 0.0);
        // DC gain equals the impulse integral (k + gamma)/gamma.
        let dc = f.transfer.eval(0.0).re;
        assert!((dc - 4.0 / 3.0).abs() < 1e-12);
        // Truncation mass beyond the suggested delay.
        assert!((f.suggested_delay - 10.0 / 3.0).abs() < 1e-12);
        let tail = f.tail_fraction(f.suggested_delay);
        assert!(tail < 5e-5, "tail {tail:.2e}");
    }

    #[test]
    fn smoothing_mse_matches_closed_form() {
        let (sx, sxy, sy) = setup();
        let pi = smoothing_mse(&sx, &sxy, &sy).unwrap();
        let target = 1.0 / 6.0;
        assert!((pi - target).abs() < target * 1e-4, "pi {pi}");
        // Cross-module agreement with the state-space steady state.
        let pi_ss = crate::smooth::ou_smoothing_steady_state(1.0, 1.0, 8.0).unwrap();
        assert!((pi - pi_ss).abs() < target * 1e-4);
        // kappa = 0.
        let flat = LorentzianSpectrum::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(smoothing_mse(&flat, &flat, &sy).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_never_beats_filtering() {
        for (i, j) in (0..5).flat_map(|i| (0..5).map(move |j| (i, j))) {
            let k = 10f64.powf(-1.0 + i as f64 * 0.5);
            let lambda = 10f64.powf(j as f64);
            let z = 1.0 / (lambda * k);
            let sx = LorentzianSpectrum::message(1.0, k).unwrap();
            let sxy = cross_spectrum(&sx, 1.0).unwrap();
            let sy = observation_spectrum(&sx, 1.0, z).unwrap();
            let filt = filtering_mse(&sx, 1.0, z).unwrap();
            let smooth = smoothing_mse(&sx, &sxy, &sy).unwrap();
            assert!(
                smooth <= filt * (1.0 + 1e-10),
                "k {k} Lambda {lambda}: smooth {smooth} filt {filt}"
            );
        }
    }

    #[test]
    fn discretize_exact_pole() {
        let h = RationalTransfer { gain: 2.0, zero: None, pole: 3.0, form: TransferForm::Causal };
        let dt = 1e-3;
        let d = discretize_one_pole(&h, dt).unwrap();
        // Euler limit of the coefficients.
        assert!((d.decay - (1.0 - 3.0 * dt)).abs() < (3.0 * dt) * (3.0 * dt));
        assert!((d.input_gain - 2.0 * dt).abs() < 2.0 * dt * 3.0 * dt);
        // Step response is exact for sample-held inputs:
        // y_n = (gain/p)(1 − e^{−p n dt}).
        let input = vec![1.0; 2000];
        let out = d.apply_forward(&input);
        for (idx, &y) in out.iter().enumerate() {
            let t = (idx + 1) as f64 * dt;
            let exact = (2.0 / 3.0) * (1.0 - (-3.0 * t).exp());
            assert!((y - exact).abs() < 1e-12, "step response at {t}");
        }
        // Magnitude response within 1% up to omega = 1/(10 dt).
        let mut worst = 0.0f64;
        for i in 1..=100 {
            let omega = i as f64 / (10.0 * dt) / 100.0;
            let mag_d = d.frequency_response(omega, dt).norm();
            let mag_c = h.eval(omega).norm();
            worst = worst.max((mag_d - mag_c).abs() / mag_c);
        }
        assert!(worst < 0.01, "magnitude error {worst:.3e}");
        // Unstable pole rejected, integrator special-cased.
        let bad = RationalTransfer { gain: 1.0, zero: None, pole: -1.0, form: TransferForm::Causal };
        assert!(discretize_one_pole(&bad, dt).is_err());
        let integ =
            RationalTransfer { gain: 20.0, zero: None, pole: 0.0, form: TransferForm::Causal };
        let di = discretize_one_pole(&integ, dt).unwrap();
        assert_eq!(di.decay, 1.0);
        assert!((di.input_gain - 20.0 * dt).abs() < 1e-15);
        // Running sum times gain * dt.
        let ramp = di.apply_forward(&[1.0, 1.0, 1.0]);
        assert!((ramp[2] - 3.0 * 20.0 * dt).abs() < 1e-12);
        // Too-coarse sampling refused.
        assert!(discretize_one_pole(&h, 0.05).is_err());
    }

    #[test]
    fn wiener_process_synthesis_limit() {
        // k -> 0 with N = 100 (kappa = 1): gamma -> 2 kappa sqrt(N) = 20,
        // Gamma_ss -> 20, L a pure integrator.
        let z = 0.0025;
        let sx = LorentzianSpectrum::message(1.0, 1e-12).unwrap();
        let sy = observation_spectrum(&sx, 1.0, z).unwrap();
        let hplus = spectral_factorize(&sy).unwrap();
        assert!((hplus.zero.unwrap() - 20.0).abs() < 1e-9);
        let sxy = cross_spectrum(&sx, 1.0).unwrap();
        let h = wiener_filter(&sxy, &hplus).unwrap();
        assert!((h.gain - 20.0).abs() < 1e-9);
        let l = loop_filter(&h, 1.0).unwrap();
        assert_eq!(l.pole, 0.0);
    }
}
