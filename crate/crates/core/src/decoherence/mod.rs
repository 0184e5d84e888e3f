//! Relaxation and dephasing rates.
//!
//! Conventions: rates are in 1/s, frequencies in rad/s. Frequency-noise
//! spectra `S_ω(ω)` are in (rad/s)²/Hz; a 1/f frequency-noise power
//! `A_ω` is its value at 1 Hz. The dephasing exponent is
//!
//! `χ(τ) = τ²/(2π) ∫_{ω_low}^∞ S_ω(ω) g_N(ωτ) dω`
//!
//! with `g0(z) = sinc²(z/2)` (Ramsey) and `g1(z) = sinc²(z/4)·sin²(z/4)`
//! (Hahn echo); the decay envelope is `exp(-χ)`.

mod budget;

pub use budget::*;

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{PHI0, TWO_PI};
use crate::noise_psd::{Mutuals, PsdModel};
use crate::numerics::{brent, golden_section, integrate, integrate_log, QuadOptions};
use crate::qubit_model::{symmetry_point_d_asymmetry, QubitCurves, QubitPoint, EPS_PER_AMP_PHI0};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FluxZ1f,
    FluxX1f,
    BiaslineZ,
    BiaslineX,
    Purcell,
    OhmicFluxZ,
    OhmicFluxX,
    OhmicCharge,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::FluxZ1f => "flux_z_1f",
            Channel::FluxX1f => "flux_x_1f",
            Channel::BiaslineZ => "biasline_z",
            Channel::BiaslineX => "biasline_x",
            Channel::Purcell => "purcell",
            Channel::OhmicFluxZ => "ohmic_flux_z",
            Channel::OhmicFluxX => "ohmic_flux_x",
            Channel::OhmicCharge => "ohmic_charge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRate {
    pub channel: Channel,
    pub gamma1: f64,
}

/// Golden-rule relaxation rate `|m|²·(S(ω01) + S(-ω01)) = |m|²·2S⁺(ω01)`
/// for a transverse matrix element `m` (rad/s per unit of noise).
pub fn gamma1_channel(matrix_element: f64, s_plus: f64) -> Result<f64> {
    if !(s_plus >= 0.0 && s_plus.is_finite()) {
        return Err(Error::Domain(format!(
            "spectral density must be finite and >= 0, got {s_plus}"
        )));
    }
    Ok(matrix_element * matrix_element * 2.0 * s_plus)
}

pub fn gamma1_psd(matrix_element: f64, psd: &PsdModel, omega01: f64) -> Result<f64> {
    if !(omega01 > 0.0) {
        return Err(Error::Domain(format!(
            "qubit frequency must be > 0, got {omega01}"
        )));
    }
    gamma1_channel(matrix_element, psd.eval(omega01)?)
}

/// Transverse matrix elements (rad/s per A) of the Z and X bias-line
/// currents. Each line threads both loops, so the two paths add coherently.
pub fn biasline_matrix_elements(point: &QubitPoint, m: &Mutuals) -> (f64, f64) {
    let z = (point.mz_ge * m.zz + point.mx_ge * m.xz) / PHI0;
    let x = (point.mz_ge * m.zx + point.mx_ge * m.xx) / PHI0;
    (z, x)
}

/// Purcell decay rate through the readout resonator, `κ·(g/(ωr - ω01))²`.
pub fn purcell_rate(omega01: f64, omega_r: f64, kappa: f64, g: f64) -> Result<f64> {
    let detuning = omega_r - omega01;
    if detuning == 0.0 {
        return Err(Error::Domain(
            "qubit is resonant with the readout resonator".into(),
        ));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!(
            "kappa must be > 0, got {kappa}"
        )));
    }
    Ok(kappa * (g / detuning).powi(2))
}

/// Purcell-limited `T1 = ((ωr - ω01)/g)²/κ`; infinite when `g = 0`.
pub fn t1_purcell(omega01: f64, omega_r: f64, kappa: f64, g: f64) -> Result<f64> {
    Ok(1.0 / purcell_rate(omega01, omega_r, kappa, g)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub channel: String,
    /// 1/s.
    pub gamma: f64,
    /// `1/gamma` in s; `None` when the rate is zero.
    pub time: Option<f64>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T1Budget {
    pub gamma1: f64,
    pub t1: Option<f64>,
    /// Sorted by decreasing rate.
    pub rows: Vec<BudgetRow>,
}

pub(crate) fn inverse(rate: f64) -> Option<f64> {
    (rate > 0.0).then(|| 1.0 / rate)
}

pub fn combine_t1(rates: &[ChannelRate]) -> Result<T1Budget> {
    if rates.is_empty() {
        return Err(Error::InvalidInput(
            "no relaxation channels to combine".into(),
        ));
    }
    if let Some(bad) = rates
        .iter()
        .find(|r| !(r.gamma1 >= 0.0 && r.gamma1.is_finite()))
    {
        return Err(Error::Domain(format!(
            "{} rate is invalid: {}",
            bad.channel.name(),
            bad.gamma1
        )));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(|a, b| {
        b.gamma1
            .total_cmp(&a.gamma1)
            .then(a.channel.cmp(&b.channel))
    });
    let total: f64 = sorted.iter().map(|r| r.gamma1).sum();
    let rows = sorted
        .iter()
        .map(|r| BudgetRow {
            channel: r.channel.name().to_string(),
            gamma: r.gamma1,
            time: inverse(r.gamma1),
            fraction: if total > 0.0 { r.gamma1 / total } else { 0.0 },
        })
        .collect();
    Ok(T1Budget {
        gamma1: total,
        t1: inverse(total),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Ramsey,
    Echo,
}

impl Filter {
    pub fn from_index(n: u32) -> Result<Self> {
        match n {
            0 => Ok(Filter::Ramsey),
            1 => Ok(Filter::Echo),
            _ => Err(Error::InvalidInput(format!(
                "filter index must be 0 or 1, got {n}"
            ))),
        }
    }

    /// `g_N(z)`.
    pub fn weight(self, z: f64) -> f64 {
        match self {
            Filter::Ramsey => {
                let u = 0.5 * z;
                if u.abs() < 1e-4 {
                    1.0 - u * u / 3.0
                } else {
                    (u.sin() / u).powi(2)
                }
            }
            Filter::Echo => {
                let u = 0.25 * z;
                if u == 0.0 {
                    0.0
                } else {
                    let s = u.sin();
                    s.powi(4) / (u * u)
                }
            }
        }
    }

    /// `g_N(z)` averaged over one period at large z is `c/z²`.
    fn mean_tail_coeff(self) -> f64 {
        match self {
            Filter::Ramsey => 2.0,
            Filter::Echo => 6.0,
        }
    }
}

/// Filter-function integrals for pure 1/f^α noise:
/// `η0 = (2π)^(α-1) ∫_{ω_low t}^∞ z^-α g0(z) dz`,
/// `η1 = (2π)^(α-1) ∫_0^∞ z^-α g1(z) dz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaFactors {
    pub eta0: f64,
    pub eta1: f64,
    pub omega_low: f64,
    pub t_typ: f64,
    pub alpha: f64,
}

impl EtaFactors {
    pub fn new(alpha: f64, omega_low: f64, t_typ: f64) -> Result<Self> {
        Ok(Self {
            eta0: eta_factor(Filter::Ramsey, alpha, omega_low, t_typ)?,
            eta1: eta_factor(Filter::Echo, alpha, omega_low, t_typ)?,
            omega_low,
            t_typ,
            alpha,
        })
    }

    pub fn get(&self, filter: Filter) -> f64 {
        match filter {
            Filter::Ramsey => self.eta0,
            Filter::Echo => self.eta1,
        }
    }
}

const ETA_UPPER: f64 = 320.0 * PI;
const ECHO_LOWER: f64 = 1e-8;

pub fn eta_factor(filter: Filter, alpha: f64, omega_low: f64, t_typ: f64) -> Result<f64> {
    if !(0.5..=1.5).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0.5, 1.5], got {alpha}"
        )));
    }
    let opts = QuadOptions {
        rel_tol: 1e-11,
        max_intervals: 5000,
        ..QuadOptions::default()
    };
    let h = |z: f64| z.powf(-alpha) * filter.weight(z);
    let (z_low, head) = match filter {
        Filter::Ramsey => {
            let zl = omega_low * t_typ;
            if !(zl > 0.0 && zl.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "Ramsey eta needs omega_low * t_typ > 0, got {zl}"
                )));
            }
            (zl, 0.0)
        }
        // g1 ~ z²/16 near zero; the sliver below ECHO_LOWER is done by hand
        Filter::Echo => (
            ECHO_LOWER,
            ECHO_LOWER.powf(3.0 - alpha) / (16.0 * (3.0 - alpha)),
        ),
    };
    let mut total = head;
    if z_low < 1.0 {
        total += integrate_log(h, z_low, 1.0, opts)?.value;
    }
    let mid_lo = z_low.max(1.0);
    if mid_lo < ETA_UPPER {
        total += integrate(h, mid_lo, ETA_UPPER, opts)?.value;
    }
    let tail_lo = mid_lo.max(ETA_UPPER);
    total += filter.mean_tail_coeff() * tail_lo.powf(-alpha - 1.0) / (alpha + 1.0);
    Ok(TWO_PI.powf(alpha - 1.0) * total)
}

/// `1/Tφ = (A_ω·η)^(1/(1+α))`. `None` means no dephasing (`A_ω = 0`).
pub fn tphi_closed_form(a_omega: f64, eta: &EtaFactors, filter: Filter) -> Option<f64> {
    (a_omega > 0.0).then(|| (a_omega * eta.get(filter)).powf(-1.0 / (1.0 + eta.alpha)))
}

/// Closed form with the Ramsey cutoff evaluated at `t_typ = Tφ` itself.
pub fn tphi_closed_form_self_consistent(
    a_omega: f64,
    alpha: f64,
    omega_low: f64,
    filter: Filter,
) -> Result<Option<(f64, EtaFactors)>> {
    if !(a_omega > 0.0) {
        return Ok(None);
    }
    let mut t = 1e-6;
    for _ in 0..100 {
        let eta = EtaFactors {
            eta0: eta_factor(Filter::Ramsey, alpha, omega_low, t)?,
            eta1: if filter == Filter::Echo {
                eta_factor(Filter::Echo, alpha, omega_low, t)?
            } else {
                f64::NAN
            },
            omega_low,
            t_typ: t,
            alpha,
        };
        let next = tphi_closed_form(a_omega, &eta, filter).expect("a_omega > 0");
        if (next - t).abs() <= 1e-12 * t || filter == Filter::Echo {
            return Ok(Some((next, eta)));
        }
        t = next;
    }
    Err(Error::NonConvergence(
        "self-consistent closed-form dephasing time".into(),
    ))
}

/// 1/f frequency-noise power from the Z/X flux powers, including the
/// correlated cross term.
pub fn a_omega_flux(point: &QubitPoint, a_z: f64, a_x: f64, c_zx: f64) -> f64 {
    let (wz, wx) = (point.d_omega_d_phi_z, point.d_omega_d_phi_x);
    wz * wz * a_z + wx * wx * a_x + 2.0 * wz * wx * c_zx * (a_z * a_x).sqrt()
}

const CHI_SPLIT: f64 = 1.0;
const CHI_ZMAX: f64 = 1e3;
const CHI_TAIL_SPAN: f64 = 1e3;
const TAU_MIN: f64 = 1e-9;
const TAU_MAX: f64 = 1.0;

/// `∫_{z_low}^∞ w(z) g(z) dz` for a nonnegative weight `w`. Each filter
/// period up to `CHI_ZMAX` is integrated separately; beyond it `g` is
/// replaced by its period average.
fn filter_integral(w: &dyn Fn(f64) -> f64, filter: Filter, z_low: f64) -> Result<f64> {
    if !(z_low > 0.0) {
        return Err(Error::Domain(format!(
            "lower cutoff must be > 0, got {z_low}"
        )));
    }
    let opts = QuadOptions {
        rel_tol: 1e-9,
        max_intervals: 400,
        ..QuadOptions::default()
    };
    let h = |z: f64| w(z) * filter.weight(z);
    let mut total = 0.0;
    if z_low < CHI_SPLIT {
        total += integrate_log(h, z_low, CHI_SPLIT, opts)?.value;
    }
    let period = 4.0 * PI;
    let mut a = z_low.max(CHI_SPLIT);
    while a < CHI_ZMAX {
        let b = (a + period).min(CHI_ZMAX);
        total += integrate(h, a, b, opts)?.value;
        a = b;
    }
    let c = filter.mean_tail_coeff();
    let tail_lo = z_low.max(CHI_ZMAX);
    let tail_hi = CHI_ZMAX * CHI_TAIL_SPAN;
    if tail_lo < tail_hi {
        total += integrate_log(|z| w(z) * c / (z * z), tail_lo, tail_hi, opts)?.value;
    }
    Ok(total)
}

/// Dephasing exponent `χ(τ)` for a frequency-noise spectrum `s_omega`.
pub fn chi(s_omega: &dyn Fn(f64) -> f64, filter: Filter, tau: f64, omega_low: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be > 0, got {tau}")));
    }
    let w = |z: f64| s_omega(z / tau);
    Ok(tau / TWO_PI * filter_integral(&w, filter, omega_low * tau)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DephasingCurve {
    /// 1/e time of the envelope, s.
    pub t_phi: f64,
    /// `(τ, exp(-χ(τ)))`.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DephasingResult {
    pub t_phi_ramsey: Option<f64>,
    pub t_phi_echo: Option<f64>,
    pub samples_ramsey: Vec<(f64, f64)>,
    pub samples_echo: Vec<(f64, f64)>,
    pub method: DephasingMethod,
}

const ENVELOPE_SAMPLES: usize = 49;

/// Solve `χ(τ) + Γ_w·τ = 1` for τ in [1 ns, 1 s], where `Γ_w` is an extra
/// Markovian dephasing rate, and sample the envelope up to 3·Tφ.
pub fn tphi_quadrature_with_rate(
    s_omega: &dyn Fn(f64) -> f64,
    filter: Filter,
    omega_low: f64,
    gamma_white: f64,
) -> Result<DephasingCurve> {
    tphi_quadrature_sampled(s_omega, filter, omega_low, gamma_white, ENVELOPE_SAMPLES)
}

pub(crate) fn tphi_quadrature_sampled(
    s_omega: &dyn Fn(f64) -> f64,
    filter: Filter,
    omega_low: f64,
    gamma_white: f64,
    n_samples: usize,
) -> Result<DephasingCurve> {
    if !(omega_low > 0.0) {
        return Err(Error::InvalidInput(format!(
            "omega_low must be > 0, got {omega_low}"
        )));
    }
    if !(gamma_white >= 0.0 && gamma_white.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "white dephasing rate must be >= 0, got {gamma_white}"
        )));
    }
    let exponent =
        |tau: f64| -> Result<f64> { Ok(chi(s_omega, filter, tau, omega_low)? + gamma_white * tau) };
    let lo = TAU_MIN.ln();
    let hi = TAU_MAX.ln();
    let f_lo = exponent(TAU_MIN)? - 1.0;
    let f_hi = exponent(TAU_MAX)? - 1.0;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::NoBracket {
            lo: TAU_MIN,
            hi: TAU_MAX,
        });
    }
    let failure: Cell<Option<Error>> = Cell::new(None);
    let g = |u: f64| match exponent(u.exp()) {
        Ok(v) => v - 1.0,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let root = brent(g, lo, hi, 1e-11, 200);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let t_phi = root?.exp();
    let mut samples = Vec::with_capacity(n_samples);
    if n_samples >= 2 {
        samples.push((0.0, 1.0));
        for k in 1..n_samples {
            let tau = 3.0 * t_phi * k as f64 / (n_samples - 1) as f64;
            samples.push((tau, (-exponent(tau)?).exp()));
        }
    }
    Ok(DephasingCurve { t_phi, samples })
}

/// As [`tphi_quadrature_with_rate`], but `None` when the envelope has not
/// reached 1/e by the end of the search window.
pub fn tphi_quadrature_opt(
    s_omega: &dyn Fn(f64) -> f64,
    filter: Filter,
    omega_low: f64,
    gamma_white: f64,
) -> Result<Option<DephasingCurve>> {
    tphi_quadrature_opt_sampled(s_omega, filter, omega_low, gamma_white, ENVELOPE_SAMPLES)
}

pub(crate) fn tphi_quadrature_opt_sampled(
    s_omega: &dyn Fn(f64) -> f64,
    filter: Filter,
    omega_low: f64,
    gamma_white: f64,
    n_samples: usize,
) -> Result<Option<DephasingCurve>> {
    if !(omega_low > 0.0) {
        return Err(Error::InvalidInput(format!(
            "omega_low must be > 0, got {omega_low}"
        )));
    }
    if chi(s_omega, filter, TAU_MAX, omega_low)? + gamma_white * TAU_MAX <= 1.0 {
        return Ok(None);
    }
    tphi_quadrature_sampled(s_omega, filter, omega_low, gamma_white, n_samples).map(Some)
}

pub fn tphi_quadrature(
    s_omega: &dyn Fn(f64) -> f64,
    filter: Filter,
    omega_low: f64,
) -> Result<DephasingCurve> {
    tphi_quadrature_with_rate(s_omega, filter, omega_low, 0.0)
}

/// Ramsey and echo dephasing by quadrature.
pub fn dephasing_quadrature(
    s_omega: &dyn Fn(f64) -> f64,
    omega_low: f64,
    gamma_white: f64,
) -> Result<DephasingResult> {
    let r = tphi_quadrature_with_rate(s_omega, Filter::Ramsey, omega_low, gamma_white)?;
    let e = tphi_quadrature_with_rate(s_omega, Filter::Echo, omega_low, gamma_white)?;
    Ok(DephasingResult {
        t_phi_ramsey: Some(r.t_phi),
        t_phi_echo: Some(e.t_phi),
        samples_ramsey: r.samples,
        samples_echo: e.samples,
        method: DephasingMethod::Quadrature,
    })
}

/// Least-squares fit of `exp(-(τ/T)²)` to envelope samples.
/// Returns `(T, R²)`.
pub fn gaussian_envelope_fit(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(
            "need at least 3 envelope samples".into(),
        ));
    }
    let tmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if !(tmax > 0.0) {
        return Err(Error::InvalidInput("envelope samples span no time".into()));
    }
    let sse = |ln_t: f64| {
        let t = ln_t.exp();
        samples
            .iter()
            .map(|&(tau, y)| (y - (-(tau / t).powi(2)).exp()).powi(2))
            .sum::<f64>()
    };
    let (ln_t, res) = golden_section(sse, (tmax * 1e-3).ln(), (tmax * 1e3).ln(), 1e-10);
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let tot: f64 = samples.iter().map(|s| (s.1 - mean).powi(2)).sum();
    Ok((ln_t.exp(), 1.0 - res / tot))
}

/// Markovian dephasing `Γφ = (∂ω01/∂λ)²·S_λ(0)/2`.
pub fn gamma_phi_white(sensitivity: f64, s_lambda_0: f64) -> Result<f64> {
    if !(s_lambda_0 >= 0.0 && s_lambda_0.is_finite()) {
        return Err(Error::Domain(format!(
            "low-frequency noise must be finite, got {s_lambda_0}"
        )));
    }
    Ok(0.5 * sensitivity * sensitivity * s_lambda_0)
}

/// Quasistatic second-order flux dephasing, `1.6·Σ_λ |∂²ω01/∂λ²|·A_λ`.
pub fn gamma_phi_second_order(point: &QubitPoint, a_z: f64, a_x: f64) -> f64 {
    1.6 * (point.d2_omega.zz.abs() * a_z + point.d2_omega.xx.abs() * a_x)
}

/// Dephasing by thermal photons in the readout resonator.
pub fn gamma_phi_shot_noise(kappa: f64, chi_disp: f64, nbar: f64) -> Result<f64> {
    if !(kappa > 0.0 && chi_disp > 0.0 && nbar >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "shot noise needs kappa, chi > 0 and nbar >= 0 (got {kappa}, {chi_disp}, {nbar})"
        )));
    }
    let k2 = kappa * kappa;
    let c2 = 4.0 * chi_disp * chi_disp;
    Ok(k2 / (k2 + c2) * c2 / kappa * nbar)
}

/// Junction critical-current noise model. Each junction's normalized
/// critical current `δIc/Ic` has 1/f power `a_ic` at 1 Hz, independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCurrentModel {
    pub a_ic: f64,
    /// ∂lnΔ/∂lnIc of the X-loop SQUID's effective critical current.
    pub dln_delta_dln_ic: f64,
    /// ∂lnIp/∂lnIc of the X-loop SQUID's effective critical current.
    pub dln_ip_dln_ic: f64,
    /// The same two derivatives for each of the two main-loop junctions.
    pub main_dln_delta_dln_ic: f64,
    pub main_dln_ip_dln_ic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalCurrentDephasing {
    /// ∂ω01/∂(δIc/Ic) per junction: X-loop left, X-loop right, main, main.
    pub per_junction: [f64; 4],
    /// Root-sum-square sensitivity, rad/s.
    pub sensitivity: f64,
    pub a_omega: f64,
    pub t_phi: Option<f64>,
}

/// Per-junction frequency sensitivities to normalized critical-current
/// fluctuations.
///
/// X-loop junction `l` (critical current `I0(1+d)`) moves the asymmetry by
/// `∂d/∂ln Ic_l = (1-d²)/2`, which shifts the symmetry point. Both X-loop
/// junctions also change the SQUID's effective critical current, with
/// weight `∂ln I_sq/∂ln Ic_l`, and through it Δ and Ip.
pub fn critical_current_sensitivities(
    point: &QubitPoint,
    d: f64,
    model: &CriticalCurrentModel,
) -> Result<[f64; 4]> {
    let (eps, delta, w) = (point.epsilon, point.delta, point.omega01);
    let phi_x = point.bias.phi_x;
    let dw_dd = -(eps / w) * EPS_PER_AMP_PHI0 * point.ip * symmetry_point_d_asymmetry(d, phi_x)?;
    let s_a = dw_dd * 0.5 * (1.0 - d * d);

    let theta = TWO_PI * phi_x;
    let (il, ir) = (1.0 + d, 1.0 - d);
    let i_sq2 = il * il + ir * ir + 2.0 * il * ir * theta.cos();
    if !(i_sq2 > 0.0) {
        return Err(Error::Domain(
            "X-loop SQUID critical current vanishes".into(),
        ));
    }
    let w_l = il * (il + ir * theta.cos()) / i_sq2;
    let w_r = ir * (ir + il * theta.cos()) / i_sq2;
    let log_scale = |g_delta: f64, g_ip: f64| (delta * delta * g_delta + eps * eps * g_ip) / w;
    let s_b = log_scale(model.dln_delta_dln_ic, model.dln_ip_dln_ic);
    let s_main = log_scale(model.main_dln_delta_dln_ic, model.main_dln_ip_dln_ic);
    Ok([s_a + w_l * s_b, -s_a + w_r * s_b, s_main, s_main])
}

pub fn gamma_phi_critical_current(
    point: &QubitPoint,
    curves: &QubitCurves,
    model: &CriticalCurrentModel,
    eta: &EtaFactors,
    filter: Filter,
) -> Result<CriticalCurrentDephasing> {
    if !(model.a_ic >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "critical-current noise must be >= 0, got {}",
            model.a_ic
        )));
    }
    let per_junction = critical_current_sensitivities(point, curves.asymmetry(), model)?;
    let s2: f64 = per_junction.iter().map(|s| s * s).sum();
    let a_omega = s2 * model.a_ic;
    Ok(CriticalCurrentDephasing {
        per_junction,
        sensitivity: s2.sqrt(),
        a_omega,
        t_phi: tphi_closed_form(a_omega, eta, filter),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::HBAR;
    use crate::qubit_model::FluxBias;

    pub(crate) fn test_curves(d: f64) -> QubitCurves {
        let xs: Vec<f64> = (0..26).map(|i| 0.20 + 0.01 * i as f64).collect();
        let ip: Vec<f64> = xs
            .iter()
            .map(|x| 170e-9 * (1.0 - 1.2 * (x - 0.32)))
            .collect();
        let de: Vec<f64> = xs
            .iter()
            .map(|x| TWO_PI * 1e9 * (14.0 * (x - 0.27)).exp())
            .collect();
        QubitCurves::new(&xs, &ip, &de, d).unwrap()
    }

    fn one_over_f(a: f64, alpha: f64) -> impl Fn(f64) -> f64 {
        move |w: f64| a * (TWO_PI / w).powf(alpha)
    }

    #[test]
    fn gamma1_flux_by_hand() {
        let ip = 170e-9;
        let w01 = TWO_PI * 2e9;
        let a = (13.3e-6f64).powi(2);
        let m = ip * PHI0 / HBAR;
        let psd = PsdModel::OneOverF {
            amplitude: a,
            alpha: 1.0,
        };
        let g = gamma1_psd(m, &psd, w01).unwrap();
        let by_hand = 2.0 * m * m * a * (TWO_PI / w01);
        assert!((g - by_hand).abs() < 1e-12 * by_hand);
        let t1 = 1.0 / g;
        assert!(t1 > 0.3e-6 && t1 < 0.8e-6, "T1 = {t1}");
        assert_eq!(gamma1_psd(0.0, &psd, w01).unwrap(), 0.0);
        assert!(gamma1_psd(m, &psd, 0.0).is_err());
        // linear in the spectral amplitude
        let g3 = gamma1_psd(
            m,
            &PsdModel::OneOverF {
                amplitude: 3.0 * a,
                alpha: 1.0,
            },
            w01,
        )
        .unwrap();
        assert!((g3 / g - 3.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_element_vanishes_far_from_gap() {
        let c = test_curves(0.0);
        let near = c.point_at_epsilon(0.30, 0.0).unwrap();
        let far = c.point_at_epsilon(0.30, 1e3 * near.delta).unwrap();
        assert!(far.mz_ge.abs() < 2e-3 * near.mz_ge.abs());
    }

    #[test]
    fn purcell_arithmetic() {
        let omega_r = TWO_PI * 7.89e9;
        let t1 = t1_purcell(
            omega_r - TWO_PI * 2e9,
            omega_r,
            TWO_PI * 12.2e6,
            TWO_PI * 150e6,
        )
        .unwrap();
        let oracle = (2e9f64 / 150e6).powi(2) / (TWO_PI * 12.2e6);
        assert!((t1 / oracle - 1.0).abs() < 1e-12);
        assert!((t1 / 2.32e-6 - 1.0).abs() < 0.01, "T1 = {t1}");
        let t1_far = t1_purcell(
            omega_r - TWO_PI * 4e9,
            omega_r,
            TWO_PI * 12.2e6,
            TWO_PI * 150e6,
        )
        .unwrap();
        assert!((t1_far / t1 - 4.0).abs() < 1e-12);
        assert!(t1_purcell(omega_r - 1.0, omega_r, 1.0, 0.0)
            .unwrap()
            .is_infinite());
        assert!(t1_purcell(omega_r, omega_r, 1.0, 1.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let one = [ChannelRate {
            channel: Channel::FluxZ1f,
            gamma1: 2e5,
        }];
        assert!((combine_t1(&one).unwrap().t1.unwrap() - 5e-6).abs() < 1e-18);
        let two = [
            ChannelRate {
                channel: Channel::FluxZ1f,
                gamma1: 2e5,
            },
            ChannelRate {
                channel: Channel::Purcell,
                gamma1: 2e5,
            },
        ];
        assert!((combine_t1(&two).unwrap().t1.unwrap() - 2.5e-6).abs() < 1e-18);
        let mixed = [
            ChannelRate {
                channel: Channel::BiaslineX,
                gamma1: 1.5e5,
            },
            ChannelRate {
                channel: Channel::FluxZ1f,
                gamma1: 3.3e4,
            },
            ChannelRate {
                channel: Channel::OhmicCharge,
                gamma1: 0.0,
            },
            ChannelRate {
                channel: Channel::Purcell,
                gamma1: 4.3e5,
            },
        ];
        let b = combine_t1(&mixed).unwrap();
        let sum: f64 = b.rows.iter().map(|r| r.gamma).sum();
        assert!((sum - b.gamma1).abs() <= 1e-12 * b.gamma1);
        assert_eq!(b.rows[0].channel, "purcell");
        assert_eq!(b.rows[3].time, None);
        let mut rev = mixed;
        rev.reverse();
        assert_eq!(combine_t1(&rev).unwrap(), b);
        assert!(combine_t1(&[]).is_err());
    }

    #[test]
    fn eta_values() {
        let e1 = eta_factor(Filter::Echo, 1.0, TWO_PI * 10.0, 100e-9).unwrap();
        assert!((e1 - 2f64.ln()).abs() < 1e-6, "eta1 = {e1}");
        let e0 = eta_factor(Filter::Ramsey, 1.0, TWO_PI * 10.0, 100e-9).unwrap();
        assert!((e0 / 12.8 - 1.0).abs() < 0.1, "eta0 = {e0}");
        let ratio = (e0 / e1).sqrt();
        assert!(ratio > 3.8 && ratio < 4.8);
        let mut last = f64::INFINITY;
        for t in [1e-8, 1e-7, 1e-6, 1e-5, 1e-4] {
            let e = eta_factor(Filter::Ramsey, 1.0, TWO_PI * 10.0, t).unwrap();
            assert!(e < last);
            last = e;
        }
        assert!(eta_factor(Filter::Ramsey, 1.0, 0.0, 1e-7).is_err());
        assert!(eta_factor(Filter::Ramsey, 2.0, 1.0, 1e-7).is_err());
    }

    #[test]
    fn closed_form_scaling() {
        let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
        assert_eq!(tphi_closed_form(0.0, &eta, Filter::Ramsey), None);
        let t1 = tphi_closed_form(1e12, &eta, Filter::Ramsey).unwrap();
        let t4 = tphi_closed_form(4e12, &eta, Filter::Ramsey).unwrap();
        assert!((t1 / t4 - 2.0).abs() < 1e-12);
        let te = tphi_closed_form(1e12, &eta, Filter::Echo).unwrap();
        assert!(te > t1);
    }

    #[test]
    fn correlated_noise_with_opposite_sensitivities() {
        let c = test_curves(0.069);
        let sym = c.symmetry_point(0.35).unwrap();
        let p = c.compute_point(FluxBias::new(sym + 2e-3, 0.35)).unwrap();
        assert!(p.d_omega_d_phi_z * p.d_omega_d_phi_x < 0.0);
        let (az, ax) = (1.77e-10, 5.8e-11);
        let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
        let t0 = tphi_closed_form(a_omega_flux(&p, az, ax, 0.0), &eta, Filter::Ramsey).unwrap();
        let tc = tphi_closed_form(a_omega_flux(&p, az, ax, 0.47), &eta, Filter::Ramsey).unwrap();
        assert!(tc > t0);
    }

    #[test]
    fn quadrature_matches_closed_form_for_one_over_f() {
        let wl = TWO_PI * 10.0;
        for a in [1e11, 1e12, 1e13] {
            let s = one_over_f(a, 1.0);
            for filter in [Filter::Ramsey, Filter::Echo] {
                let q = tphi_quadrature(&s, filter, wl).unwrap().t_phi;
                let (c, _) = tphi_closed_form_self_consistent(a, 1.0, wl, filter)
                    .unwrap()
                    .unwrap();
                assert!((q / c - 1.0).abs() < 1e-3, "{filter:?} A={a}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn echo_outlasts_ramsey_for_decreasing_spectra() {
        let wl = TWO_PI * 10.0;
        let spectra: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(one_over_f(1e12, 0.9)),
            Box::new(|w: f64| 1e12 * TWO_PI / w / (1.0 + (w / 1e6).powi(2))),
            Box::new(|w: f64| 2e5 / (1.0 + (w / 1e5).powi(2))),
        ];
        for s in &spectra {
            let r = dephasing_quadrature(s.as_ref(), wl, 0.0).unwrap();
            assert!(r.t_phi_echo.unwrap() >= r.t_phi_ramsey.unwrap());
            for curve in [&r.samples_ramsey, &r.samples_echo] {
                assert!(curve.windows(2).all(|p| p[1].1 <= p[0].1));
            }
        }
    }

    #[test]
    fn white_noise_limit() {
        let sens = 3e10;
        let s_flux = 1e-15;
        let s = |_: f64| sens * sens * s_flux;
        let gamma = gamma_phi_white(sens, s_flux).unwrap();
        let q = tphi_quadrature(&s, Filter::Ramsey, TWO_PI * 10.0).unwrap();
        assert!(
            (q.t_phi * gamma - 1.0).abs() < 0.02,
            "Γ·Tφ = {}",
            q.t_phi * gamma
        );
        assert!((gamma_phi_white(2.0 * sens, s_flux).unwrap() / gamma - 4.0).abs() < 1e-14);
        assert!(gamma_phi_white(sens, f64::INFINITY).is_err());
        assert_eq!(gamma_phi_white(0.0, s_flux).unwrap(), 0.0);
        // the extra-rate path reproduces a white spectrum
        let zero = |_: f64| 0.0;
        let r = tphi_quadrature_with_rate(&zero, Filter::Echo, TWO_PI * 10.0, 2e5).unwrap();
        assert!((r.t_phi * 2e5 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbracketed_dephasing() {
        let tiny = |_: f64| 1e-3;
        assert!(matches!(
            tphi_quadrature(&tiny, Filter::Ramsey, TWO_PI * 10.0),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn one_over_f_envelope_is_gaussian() {
        let s = one_over_f(1e12, 1.0);
        let q = tphi_quadrature(&s, Filter::Ramsey, TWO_PI * 10.0).unwrap();
        let (t, r2) = gaussian_envelope_fit(&q.samples).unwrap();
        assert!(r2 > 0.999, "R² = {r2}");
        assert!((t / q.t_phi - 1.0).abs() < 0.1);
    }

    #[test]
    fn second_order_and_shot_noise() {
        let c = test_curves(0.0);
        let p = c.point_at_epsilon(0.30, 0.0).unwrap();
        assert_eq!(gamma_phi_second_order(&p, 0.0, 0.0), 0.0);
        let g1 = gamma_phi_second_order(&p, 1.77e-10, 5.8e-11);
        let g2 = gamma_phi_second_order(&p, 3.54e-10, 1.16e-10);
        assert!((g2 / g1 - 2.0).abs() < 1e-14);

        let (k, x) = (TWO_PI * 0.7e6, TWO_PI * 0.8e6);
        assert_eq!(gamma_phi_shot_noise(k, x, 0.0).unwrap(), 0.0);
        let per_photon = gamma_phi_shot_noise(k, x, 1.0).unwrap();
        let nbar = 5e6 / per_photon;
        assert!((nbar - 1.4).abs() < 0.1, "nbar = {nbar}");
        let g = gamma_phi_shot_noise(2.0 * x, x, 3.0).unwrap();
        assert!((g - 2.0 * x * 3.0 / 2.0).abs() < 1e-9 * g);
        assert!(gamma_phi_shot_noise(0.0, x, 1.0).is_err());
    }

    fn cc_model() -> CriticalCurrentModel {
        CriticalCurrentModel {
            a_ic: 4.0e-6,
            dln_delta_dln_ic: -4.0,
            dln_ip_dln_ic: 1.0,
            main_dln_delta_dln_ic: 0.0,
            main_dln_ip_dln_ic: 0.0,
        }
    }

    #[test]
    fn critical_current_sensitivity() {
        let c = test_curves(0.069);
        let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
        let p = c.point_at_epsilon(0.35, 0.0).unwrap();
        let r = gamma_phi_critical_current(&p, &c, &cc_model(), &eta, Filter::Ramsey).unwrap();
        assert!(r.sensitivity > 0.0);
        assert!(r.t_phi.is_some());
        let none = CriticalCurrentModel {
            a_ic: 0.0,
            ..cc_model()
        };
        let r0 = gamma_phi_critical_current(&p, &c, &none, &eta, Filter::Ramsey).unwrap();
        assert_eq!(r0.t_phi, None);
        // continuous through ε = 0
        let s = |e: f64| {
            let p = c.point_at_epsilon(0.35, e).unwrap();
            gamma_phi_critical_current(&p, &c, &cc_model(), &eta, Filter::Ramsey)
                .unwrap()
                .sensitivity
        };
        let s0 = s(0.0);
        for step in [1e-6 * p.delta, -1e-6 * p.delta] {
            assert!((s(step) - s0).abs() < 1e-4 * s0);
        }
    }

    #[test]
    fn critical_current_optimum_left_of_symmetry() {
        let c = test_curves(0.069);
        let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
        for phi_x in [0.30, 0.35, 0.40] {
            let sym = c.symmetry_point(phi_x).unwrap();
            let tphi = |phi_z: f64| {
                let p = c.compute_point(FluxBias::new(phi_z, phi_x)).unwrap();
                gamma_phi_critical_current(&p, &c, &cc_model(), &eta, Filter::Ramsey)
                    .unwrap()
                    .t_phi
                    .unwrap()
            };
            let (best, _) = golden_section(|z| -tphi(z), sym - 2e-3, sym + 2e-3, 1e-10);
            assert!(
                best < sym - 1e-8,
                "phi_x = {phi_x}: best {best} vs sym {sym}"
            );
        }
    }

    const CHANNELS: [Channel; 8] = [
        Channel::FluxZ1f,
        Channel::FluxX1f,
        Channel::BiaslineZ,
        Channel::BiaslineX,
        Channel::Purcell,
        Channel::OhmicFluxZ,
        Channel::OhmicFluxX,
        Channel::OhmicCharge,
    ];

    proptest::proptest! {
        #[test]
        fn t1_total_ignores_channel_order(
            rates in proptest::collection::vec(0.0f64..1e7, 8),
            perm in proptest::strategy::Strategy::prop_shuffle(proptest::sample::subsequence((0..8usize).collect::<Vec<_>>(), 8)),
        ) {
            let list: Vec<ChannelRate> = CHANNELS.iter().zip(&rates).map(|(&channel, &gamma1)| ChannelRate { channel, gamma1 }).collect();
            let shuffled: Vec<ChannelRate> = perm.iter().map(|&i| list[i]).collect();
            let a = combine_t1(&list).unwrap();
            proptest::prop_assert_eq!(&combine_t1(&shuffled).unwrap(), &a);
            let sum: f64 = rates.iter().sum();
            proptest::prop_assert!((a.gamma1 - sum).abs() <= 1e-12 * sum);
        }

        #[test]
        fn rates_linear_in_noise_amplitude(k in 0.01f64..100.0, w01 in 1e9f64..1e11, m in 1e3f64..1e12) {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            let models = [
                (PsdModel::OneOverF { amplitude: 1e-10, alpha: 1.0 }, PsdModel::OneOverF { amplitude: k * 1e-10, alpha: 1.0 }),
                (
                    PsdModel::Ohmic { coefficient: 1e-30, gamma: 1.0, temperature_k: 0.02 },
                    PsdModel::Ohmic { coefficient: k * 1e-30, gamma: 1.0, temperature_k: 0.02 },
                ),
                (
                    PsdModel::FilteredSource { a_v: 1e-12, s_v0: 1e-16, omega_l: 1e8 },
                    PsdModel::FilteredSource { a_v: k * 1e-12, s_v0: k * 1e-16, omega_l: 1e8 },
                ),
            ];
            for (base, scaled) in &models {
                proptest::prop_assert!(close(k * gamma1_psd(m, base, w01).unwrap(), gamma1_psd(m, scaled, w01).unwrap()));
            }
            proptest::prop_assert!(close(k * gamma_phi_white(m, 1e-20).unwrap(), gamma_phi_white(m, k * 1e-20).unwrap()));
            let kappa = TWO_PI * 12.2e6;
            proptest::prop_assert!(close(
                k * gamma_phi_shot_noise(kappa, TWO_PI * 0.8e6, 0.01).unwrap(),
                gamma_phi_shot_noise(kappa, TWO_PI * 0.8e6, k * 0.01).unwrap()
            ));
            let c = test_curves(0.069);
            let p = c.point_at_epsilon(0.33, TWO_PI * 0.3e9).unwrap();
            let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
            let base = CriticalCurrentModel { a_ic: 4e-6, ..cc_model() };
            let scaled = CriticalCurrentModel { a_ic: k * 4e-6, ..cc_model() };
            let a0 = gamma_phi_critical_current(&p, &c, &base, &eta, Filter::Ramsey).unwrap().a_omega;
            let a1 = gamma_phi_critical_current(&p, &c, &scaled, &eta, Filter::Ramsey).unwrap().a_omega;
            proptest::prop_assert!(close(k * a0, a1));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn closed_form_tracks_quadrature_near_pink(alpha in 0.9f64..=1.0, log_a in 11.0f64..14.0) {
            let (wl, a) = (TWO_PI * 10.0, 10f64.powf(log_a));
            let s = one_over_f(a, alpha);
            for filter in [Filter::Ramsey, Filter::Echo] {
                let q = tphi_quadrature(&s, filter, wl).unwrap().t_phi;
                let (c, _) = tphi_closed_form_self_consistent(a, alpha, wl, filter).unwrap().unwrap();
                proptest::prop_assert!((c / q - 1.0).abs() < 0.05, "{:?} α={} A={:e}: {} vs {}", filter, alpha, a, c, q);
            }
        }
    }
}
