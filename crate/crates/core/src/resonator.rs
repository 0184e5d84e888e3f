//! rf-SQUID terminated quarter-wave readout resonator.
//!
//! The SQUID potential is handled in reduced units,
//! `u(φ) = -β_L cos φ + (φ - φ_e)²/2 - i_b φ`, which is `U` divided by
//! `(Φ0/2π)²/L_g`, with `φ_e = 2π·Φr`, `β_L = 2π L_g I_c/Φ0` and
//! `i_b = 2π L_g I_b/Φ0`.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, PHI0, TWO_PI};
use crate::numerics::brent;
use crate::qubit_model::QubitPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquidParams {
    /// Junction critical current, A.
    pub i_c: f64,
    /// Geometric loop inductance, H.
    pub l_g: f64,
    /// External SQUID flux in Φ0.
    pub phi_r: f64,
}

impl SquidParams {
    pub fn new(i_c: f64, l_g: f64, phi_r: f64) -> Result<Self> {
        let sq = Self { i_c, l_g, phi_r };
        sq.validate()?;
        Ok(sq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_c > 0.0 && self.l_g > 0.0) {
            return Err(Error::InvalidInput(format!(
                "SQUID critical current and inductance must be > 0 (got {} A, {} H)",
                self.i_c, self.l_g
            )));
        }
        if !self.phi_r.is_finite() {
            return Err(Error::InvalidInput("SQUID flux must be finite".into()));
        }
        Ok(())
    }

    pub fn beta_l(&self) -> f64 {
        TWO_PI * self.l_g * self.i_c / PHI0
    }

    /// Current that corresponds to one unit of reduced bias, `Φ0/(2π L_g)`.
    pub fn current_scale(&self) -> f64 {
        PHI0 / (TWO_PI * self.l_g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Resonance frequency, rad/s.
    pub omega_r: f64,
    /// Energy decay rate, rad/s.
    pub kappa: f64,
    pub z0_ohm: f64,
    /// Phase velocity of the waveguide, m/s.
    pub vph: f64,
    /// Waveguide length, m.
    pub length: f64,
    /// Qubit to SQUID mutual inductance, H.
    pub m_qr: f64,
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega_r > 0.0
            && self.kappa > 0.0
            && self.z0_ohm > 0.0
            && self.vph > 0.0
            && self.length > 0.0
            && self.m_qr >= 0.0
            && self.m_qr.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!(
                "invalid resonator parameters: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Length of a quarter-wave section resonant at `omega_r`.
pub fn quarter_wave_length(omega_r: f64, vph: f64) -> f64 {
    std::f64::consts::PI * vph / (2.0 * omega_r)
}

/// Junction phase at the minimum of the SQUID potential for bias `i_b` (A).
///
/// For `β_L < 1` the potential is convex and the minimum is unique. Larger
/// `β_L` gives several local minima and is rejected.
pub fn squid_minimize(sq: &SquidParams, i_b: f64) -> Result<f64> {
    sq.validate()?;
    let beta = sq.beta_l();
    if beta >= 1.0 {
        return Err(Error::NoBracket { lo: beta, hi: 1.0 });
    }
    if !i_b.is_finite() {
        return Err(Error::InvalidInput("bias current must be finite".into()));
    }
    let center = TWO_PI * sq.phi_r + i_b / sq.current_scale();
    let grad = |p: f64| beta * p.sin() + p - center;
    let lo = center - beta;
    let hi = center + beta;
    let mut phi = if beta == 0.0 {
        center
    } else {
        brent(grad, lo, hi, 1e-15 * center.abs().max(1.0), 200)?
    };
    // Newton polish; the curvature 1 + β cos φ is bounded below by 1 - β.
    for _ in 0..3 {
        let step = grad(phi) / (1.0 + beta * phi.cos());
        phi -= step;
        if step.abs() <= f64::EPSILON * phi.abs().max(1.0) {
            break;
        }
    }
    Ok(phi)
}

/// Gradient of the reduced potential at `phi`; zero at a minimum.
pub fn reduced_gradient(sq: &SquidParams, i_b: f64, phi: f64) -> f64 {
    sq.beta_l() * phi.sin() + phi - TWO_PI * sq.phi_r - i_b / sq.current_scale()
}

/// Current through the geometric inductance.
pub fn screening_current(sq: &SquidParams, i_b: f64) -> Result<f64> {
    let phi = squid_minimize(sq, i_b)?;
    Ok((phi - TWO_PI * sq.phi_r) * sq.current_scale())
}

/// Small-signal inductance of the SQUID at zero bias,
/// `(Φ0/2π)²/U''(φ_J) = L_g/(1 + β_L cos φ_J)`.
pub fn effective_inductance(sq: &SquidParams) -> Result<f64> {
    let phi = squid_minimize(sq, 0.0)?;
    Ok(sq.l_g / (1.0 + sq.beta_l() * phi.cos()))
}

/// `I_g(I_b) ≈ I_g0 + r1·I_b + r2·I_b²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScreeningTaylor {
    pub i_g0: f64,
    pub r1: f64,
    /// 1/A.
    pub r2: f64,
}

impl ScreeningTaylor {
    pub fn eval(&self, i_b: f64) -> f64 {
        self.i_g0 + self.r1 * i_b + self.r2 * i_b * i_b
    }
}

/// Taylor coefficients of the screening current around zero bias, by
/// Richardson-extrapolated central differences.
pub fn screening_taylor(sq: &SquidParams) -> Result<ScreeningTaylor> {
    screening_taylor_with_step(sq, 1e-3 * sq.current_scale())
}

pub fn screening_taylor_with_step(sq: &SquidParams, h: f64) -> Result<ScreeningTaylor> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Taylor step must be > 0, got {h}"
        )));
    }
    let ig = |x: f64| screening_current(sq, x);
    let g0 = ig(0.0)?;
    let (p1, m1) = (ig(h)?, ig(-h)?);
    let (p2, m2) = (ig(0.5 * h)?, ig(-0.5 * h)?);
    let d1_h = (p1 - m1) / (2.0 * h);
    let d1_h2 = (p2 - m2) / h;
    let d2_h = (p1 - 2.0 * g0 + m1) / (h * h);
    let d2_h2 = (p2 - 2.0 * g0 + m2) / (0.25 * h * h);
    Ok(ScreeningTaylor {
        i_g0: g0,
        r1: (4.0 * d1_h2 - d1_h) / 3.0,
        r2: 0.5 * (4.0 * d2_h2 - d2_h) / 3.0,
    })
}

/// Zero-point amplitude of the current at the shorted end of the
/// resonator, terminated by inductance `l_sq`.
pub fn zero_point_current(res: &ResonatorParams, l_sq: f64) -> Result<f64> {
    res.validate()?;
    if !(l_sq >= 0.0 && l_sq.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "SQUID inductance must be >= 0, got {l_sq}"
        )));
    }
    let (c, w, z0, len) = (res.vph, res.omega_r, res.z0_ohm, res.length);
    let num = c * HBAR * w * z0;
    let den = c * l_sq * z0 + len * (l_sq * l_sq * w * w + z0 * z0);
    Ok((num / den).sqrt())
}

/// Linear exchange coupling `g` (rad/s) between qubit and resonator.
pub fn qubit_resonator_coupling(
    point: &QubitPoint,
    res: &ResonatorParams,
    r1: f64,
    i_b0: f64,
) -> f64 {
    // ⟨g|∂H/∂Φz|e⟩ = ħ·mz_ge/Φ0 when Φz is measured in webers
    (res.m_qr * point.mz_ge * r1 * i_b0 / PHI0).abs()
}
