//! Symmetrized noise spectral densities and the flux-noise correlation
//! algebra.
//!
//! Convention: `S(ω)` is in `(unit)²/Hz` with ω in rad/s, so that a
//! variance is `(1/2π)∫S(ω)dω` over the whole real line. Every model
//! returns the symmetrized spectrum `S⁺(ω) = [S(ω) + S(-ω)]/2`, which is
//! even in ω.

use serde::{Deserialize, Serialize};

use crate::constants::{bose_einstein, HBAR, K_B, PHI0, TWO_PI};
use crate::{Error, Result};

/// One attenuator, thermalised to a fridge plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationStage {
    pub temperature_k: f64,
    pub atten_db: f64,
}

/// Attenuators from room temperature (first) down to the device (last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationChain {
    pub stages: Vec<AttenuationStage>,
    pub source_temperature_k: f64,
}

impl AttenuationChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_temperature_k > 0.0) {
            return Err(Error::InvalidInput(format!(
                "chain source temperature must be > 0 K, got {}",
                self.source_temperature_k
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.temperature_k > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "stage {i}: temperature must be > 0 K, got {}",
                    s.temperature_k
                )));
            }
            if !(s.atten_db >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "stage {i}: attenuation must be >= 0 dB, got {}",
                    s.atten_db
                )));
            }
        }
        Ok(())
    }
}

/// Thermal photon number at the end of the chain, composing each
/// attenuator as a beam splitter:
/// `n_i = A_i·n_{i-1} + (1 - A_i)·n_BE(T_i, ω)`, `A_i = 10^(-dB/10)`.
pub fn chain_noise_photons(chain: &AttenuationChain, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!(
            "chain noise needs omega > 0, got {omega}"
        )));
    }
    chain.validate()?;
    let mut n = bose_einstein(chain.source_temperature_k, omega);
    for stage in &chain.stages {
        let transmission = 10f64.powf(-stage.atten_db / 10.0);
        n = transmission * n + (1.0 - transmission) * bose_einstein(stage.temperature_k, omega);
    }
    Ok(n)
}

/// Temperature whose Bose-Einstein occupation at ω equals `n`.
pub fn photons_to_temperature(n: f64, omega: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("photon number must be > 0, got {n}")));
    }
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega must be > 0, got {omega}")));
    }
    Ok(HBAR * omega / (K_B * (1.0 / n).ln_1p()))
}

/// Real part of `Z0 ∥ iωL`.
pub fn shunted_inductor_resistance(z0: f64, inductance: f64, omega: f64) -> f64 {
    let xl = omega * inductance;
    z0 * xl * xl / (z0 * z0 + xl * xl)
}

/// Symmetrized Johnson-Nyquist current noise through the bias inductor,
/// A²/Hz, given the line's thermal photon number at ω.
pub fn biasline_current_psd(z0: f64, inductance: f64, photons: f64, omega: f64) -> f64 {
    let w = omega.abs();
    let re_z = shunted_inductor_resistance(z0, inductance, w);
    // (1 + coth)/2 + (coth - 1)/2 = coth = 1 + 2n
    HBAR * w * re_z * (1.0 + 2.0 * photons) / (w * w * inductance * inductance)
}

/// Spectral density models, evaluated as `S⁺(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsdModel {
    /// `A·(2π/|ω|)^α`; `A` is the power at 1 Hz.
    OneOverF { amplitude: f64, alpha: f64 },
    /// `B·|ω|^γ·coth(ħ|ω|/2k_BT)`, the symmetrized form of
    /// `B·ω|ω|^(γ-1)·(1 + coth(ħω/2k_BT))`.
    Ohmic {
        coefficient: f64,
        gamma: f64,
        temperature_k: f64,
    },
    /// Current noise of a bias inductor `L_b` shunted by `Z0`, with the
    /// noise temperature taken from an attenuation chain at each ω.
    BiasLine {
        z0_ohm: f64,
        inductance_h: f64,
        chain: AttenuationChain,
    },
    /// Source voltage noise, 1/f plus white, through a first-order low-pass:
    /// `[A_V·2π/|ω| + S_V0] / (1 + (|ω|/ω_l)²)`.
    FilteredSource { a_v: f64, s_v0: f64, omega_l: f64 },
}

impl PsdModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match self {
            PsdModel::OneOverF { amplitude, alpha } => {
                if !(*amplitude >= 0.0) {
                    return bad(format!("1/f amplitude must be >= 0, got {amplitude}"));
                }
                if !(0.5..=1.5).contains(alpha) {
                    return bad(format!("1/f exponent must lie in [0.5, 1.5], got {alpha}"));
                }
            }
            PsdModel::Ohmic {
                coefficient,
                gamma,
                temperature_k,
            } => {
                if !(*coefficient >= 0.0) {
                    return bad(format!("ohmic coefficient must be >= 0, got {coefficient}"));
                }
                if !gamma.is_finite() {
                    return bad("ohmic exponent must be finite".into());
                }
                if !(*temperature_k > 0.0) {
                    return bad(format!(
                        "ohmic temperature must be > 0 K, got {temperature_k}"
                    ));
                }
            }
            PsdModel::BiasLine {
                z0_ohm,
                inductance_h,
                chain,
            } => {
                if !(*z0_ohm > 0.0 && *inductance_h > 0.0) {
                    return bad("bias line impedance and inductance must be > 0".into());
                }
                chain.validate()?;
            }
            PsdModel::FilteredSource { a_v, s_v0, omega_l } => {
                if !(*a_v >= 0.0 && *s_v0 >= 0.0) {
                    return bad("source noise powers must be >= 0".into());
                }
                if !(*omega_l > 0.0) {
                    return bad(format!("low-pass corner must be > 0, got {omega_l}"));
                }
            }
        }
        Ok(())
    }

    /// Whether the model diverges at ω = 0.
    pub fn diverges_at_zero(&self) -> bool {
        match self {
            PsdModel::OneOverF { amplitude, .. } => *amplitude > 0.0,
            PsdModel::FilteredSource { a_v, .. } => *a_v > 0.0,
            PsdModel::Ohmic { gamma, .. } => *gamma < 1.0,
            PsdModel::BiasLine { .. } => false,
        }
    }

    pub fn eval(&self, omega: f64) -> Result<f64> {
        let w = omega.abs();
        if !w.is_finite() {
            return Err(Error::Domain(format!("omega must be finite, got {omega}")));
        }
        match self {
            PsdModel::OneOverF { amplitude, alpha } => {
                if *amplitude == 0.0 {
                    return Ok(0.0);
                }
                if w == 0.0 {
                    return Err(Error::Domain("1/f spectrum diverges at omega = 0".into()));
                }
                Ok(amplitude * (TWO_PI / w).powf(*alpha))
            }
            PsdModel::Ohmic {
                coefficient,
                gamma,
                temperature_k,
            } => {
                if *coefficient == 0.0 {
                    return Ok(0.0);
                }
                if w == 0.0 {
                    // |ω|^γ coth(ħ|ω|/2kT) → |ω|^(γ-1)·2kT/ħ
                    return if *gamma > 1.0 {
                        Ok(0.0)
                    } else if *gamma == 1.0 {
                        Ok(coefficient * 2.0 * K_B * temperature_k / HBAR)
                    } else {
                        Err(Error::Domain(
                            "sub-ohmic spectrum diverges at omega = 0".into(),
                        ))
                    };
                }
                let x = HBAR * w / (2.0 * K_B * temperature_k);
                Ok(coefficient * w.powf(*gamma) / x.tanh())
            }
            PsdModel::BiasLine {
                z0_ohm,
                inductance_h,
                chain,
            } => {
                if w == 0.0 {
                    // classical limit 2·k_B·T/Z0 needs a temperature at ω → 0;
                    // use the limit of ħω(1 + 2n) = 2 k_B T_eff.
                    let tiny = 1e-3;
                    let n = chain_noise_photons(chain, tiny)?;
                    return Ok(biasline_current_psd(*z0_ohm, *inductance_h, n, tiny));
                }
                let n = chain_noise_photons(chain, w)?;
                Ok(biasline_current_psd(*z0_ohm, *inductance_h, n, w))
            }
            PsdModel::FilteredSource { a_v, s_v0, omega_l } => {
                let flicker = if *a_v == 0.0 {
                    0.0
                } else if w == 0.0 {
                    return Err(Error::Domain(
                        "1/f source noise diverges at omega = 0".into(),
                    ));
                } else {
                    a_v * TWO_PI / w
                };
                Ok((flicker + s_v0) / (1.0 + (w / omega_l).powi(2)))
            }
        }
    }
}

/// Mutual inductances (H) from bias line to loop flux; `zx` couples the
/// X line into the Z loop, and so on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Mutuals {
    pub zz: f64,
    pub zx: f64,
    pub xz: f64,
    pub xx: f64,
}

/// Everything that produces flux noise in the two loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxNoiseSpec {
    pub intrinsic_z: PsdModel,
    pub intrinsic_x: PsdModel,
    /// Correlation of the intrinsic Z and X flux noise, in (-1, 1).
    pub c_zx: f64,
    pub mutuals: Mutuals,
    pub r_z_ohm: f64,
    pub r_x_ohm: f64,
    pub source_z: Option<PsdModel>,
    pub source_x: Option<PsdModel>,
    pub biasline_z: Option<PsdModel>,
    pub biasline_x: Option<PsdModel>,
}

impl FluxNoiseSpec {
    /// Intrinsic, uncorrelated-by-default 1/f noise only.
    pub fn intrinsic_only(a_z: f64, a_x: f64, alpha: f64, c_zx: f64) -> Self {
        Self {
            intrinsic_z: PsdModel::OneOverF {
                amplitude: a_z,
                alpha,
            },
            intrinsic_x: PsdModel::OneOverF {
                amplitude: a_x,
                alpha,
            },
            c_zx,
            mutuals: Mutuals::default(),
            r_z_ohm: 1.0,
            r_x_ohm: 1.0,
            source_z: None,
            source_x: None,
            biasline_z: None,
            biasline_x: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsic_z.validate()?;
        self.intrinsic_x.validate()?;
        if !(self.c_zx.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "flux noise correlation must lie in (-1, 1), got {}",
                self.c_zx
            )));
        }
        let m = self.mutuals;
        if ![m.zz, m.zx, m.xz, m.xx].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "mutual inductances must be finite".into(),
            ));
        }
        let has_source = self.source_z.is_some() || self.source_x.is_some();
        if has_source && !(self.r_z_ohm > 0.0 && self.r_x_ohm > 0.0) {
            return Err(Error::InvalidInput(
                "source series resistances must be > 0".into(),
            ));
        }
        for m in [
            &self.source_z,
            &self.source_x,
            &self.biasline_z,
            &self.biasline_x,
        ]
        .into_iter()
        .flatten()
        {
            m.validate()?;
        }
        Ok(())
    }

    /// Current noise (A²/Hz) delivered by the Z and X bias lines.
    pub fn line_current_psd(&self, omega: f64) -> Result<(f64, f64)> {
        let line = |src: &Option<PsdModel>, bias: &Option<PsdModel>, r: f64| -> Result<f64> {
            let mut p = 0.0;
            if let Some(s) = src {
                p += s.eval(omega)? / (r * r);
            }
            if let Some(b) = bias {
                p += b.eval(omega)?;
            }
            Ok(p)
        };
        Ok((
            line(&self.source_z, &self.biasline_z, self.r_z_ohm)?,
            line(&self.source_x, &self.biasline_x, self.r_x_ohm)?,
        ))
    }
}

/// Composed flux spectra in Φ0²/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxPsd {
    pub s_z: f64,
    pub s_x: f64,
    pub c_zx: f64,
}

impl FluxPsd {
    pub fn correlation(&self) -> f64 {
        let denom = (self.s_z * self.s_x).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            self.c_zx / denom
        }
    }
}

fn check_cauchy_schwarz(s_a: f64, s_b: f64, c: f64) -> Result<()> {
    let bound = (s_a * s_b).max(0.0).sqrt();
    if c.abs() > bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
        return Err(Error::CauchySchwarz { cross: c, bound });
    }
    Ok(())
}

/// Self and cross flux spectra from intrinsic noise, bias sources and bias
/// line Johnson-Nyquist noise, routed through the mutual inductances.
pub fn compose_flux_psd(spec: &FluxNoiseSpec, omega: f64) -> Result<FluxPsd> {
    if omega == 0.0 {
        return Err(Error::Domain(
            "flux spectra are evaluated at omega != 0".into(),
        ));
    }
    let sz_int = spec.intrinsic_z.eval(omega)?;
    let sx_int = spec.intrinsic_x.eval(omega)?;
    let c_int = spec.c_zx * (sz_int * sx_int).sqrt();
    let (pz, px) = spec.line_current_psd(omega)?;
    let m = spec.mutuals;
    let (mzz, mzx, mxz, mxx) = (m.zz / PHI0, m.zx / PHI0, m.xz / PHI0, m.xx / PHI0);
    let out = FluxPsd {
        s_z: sz_int + mzz * mzz * pz + mzx * mzx * px,
        s_x: sx_int + mxz * mxz * pz + mxx * mxx * px,
        c_zx: c_int + mzz * mxz * pz + mzx * mxx * px,
    };
    check_cauchy_schwarz(out.s_z, out.s_x, out.c_zx)?;
    Ok(out)
}

/// From the `(z', x)` loop fluxes to `(z, x)` with `Φz = Φz' + Φx/2`.
/// Returns `(S_z, C_zx)`.
pub fn transform_zprime_to_z(s_zprime: f64, s_x: f64, c_zprime_x: f64) -> Result<(f64, f64)> {
    check_cauchy_schwarz(s_zprime, s_x, c_zprime_x)?;
    let s_z = s_zprime + c_zprime_x + 0.25 * s_x;
    let c_zx = c_zprime_x + 0.5 * s_x;
    debug_assert!(check_cauchy_schwarz(s_z, s_x, c_zx).is_ok());
    Ok((s_z, c_zx))
}

/// From `(z, x)` to `(z̃, x)` with `Φz̃ = Φz - F(Φx)`, given `dF/dΦx`.
/// Returns `(S_z̃, C_z̃x)`.
pub fn transform_z_to_ztilde(s_z: f64, s_x: f64, c_zx: f64, df_dphix: f64) -> (f64, f64) {
    let s_zt = s_z - 2.0 * df_dphix * c_zx + df_dphix * df_dphix * s_x;
    let c_ztx = c_zx - df_dphix * s_x;
    (s_zt, c_ztx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmColor {
    /// Shared between the z' and x loops.
    Red,
    /// z' loop only.
    Blue,
    /// x loop only.
    Yellow,
}

impl ArmColor {
    pub fn from_name(name: &str) -> Option<Self> {
        let n = name.to_ascii_lowercase();
        if n.starts_with("red") {
            Some(ArmColor::Red)
        } else if n.starts_with("blue") {
            Some(ArmColor::Blue)
        } else if n.starts_with("yellow") {
            Some(ArmColor::Yellow)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopArm {
    pub name: String,
    pub length_m: f64,
    pub width_m: f64,
    pub color: ArmColor,
}

/// Loop segments with surface-spin flux noise `A = B·l/w` per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopGeometry {
    pub arms: Vec<LoopArm>,
    pub b_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryNoise {
    pub a_zprime: f64,
    pub a_x: f64,
    pub c_zprime_x: f64,
    pub a_z: f64,
    pub c_zx: f64,
    /// Dimensionless correlation `C_zx / sqrt(A_z·A_x)`.
    pub corr_zx: f64,
}

/// 1/f powers at 1 Hz implied by the loop geometry, assuming independent
/// spins on each arm: `δΦz' = -δΦred + δΦblue`, `δΦx = δΦred + δΦyellow`.
pub fn geometry_model(geom: &LoopGeometry) -> Result<GeometryNoise> {
    if !(geom.b_coeff >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "geometry B coefficient must be >= 0, got {}",
            geom.b_coeff
        )));
    }
    let mut power = [0.0f64; 3];
    let mut seen = [false; 3];
    for arm in &geom.arms {
        if !(arm.length_m > 0.0 && arm.width_m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "arm {}: length and width must be > 0",
                arm.name
            )));
        }
        let idx = arm.color as usize;
        power[idx] += geom.b_coeff * arm.length_m / arm.width_m;
        seen[idx] = true;
    }
    for (i, name) in ["red", "blue", "yellow"].iter().enumerate() {
        if !seen[i] {
            return Err(Error::InvalidInput(format!(
                "geometry is missing the {name} arm"
            )));
        }
    }
    let [red, blue, yellow] = power;
    let a_zprime = red + blue;
    let a_x = red + yellow;
    let c_zprime_x = -red;
    let (a_z, c_zx) = transform_zprime_to_z(a_zprime, a_x, c_zprime_x)?;
    let denom = (a_z * a_x).sqrt();
    Ok(GeometryNoise {
        a_zprime,
        a_x,
        c_zprime_x,
        a_z,
        c_zx,
        corr_zx: if denom > 0.0 { c_zx / denom } else { 0.0 },
    })
}
