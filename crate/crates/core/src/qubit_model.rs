//! Two-level model of the tunable flux qubit.
//!
//! `H = -ħΔ(Φx)/2 σx - Ip(Φx)·[Φz - Φz_sym(Φx)]·σz`, which we write as
//! `H = -(ħ/2)(Δ σx + ε σz)` with `ε = 2·Ip·Φ0·(Φz - Φz_sym)/ħ` (fluxes
//! in units of Φ0). Ip(Φx) and Δ(Φx) come from user tables; the symmetry
//! point follows from the X-loop junction asymmetry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, PHI0, TWO_PI};
use crate::numerics::CubicSpline;
use crate::{Error, Result};

/// `2·Φ0/ħ`: converts `Ip·(flux in Φ0)` to angular frequency.
pub const EPS_PER_AMP_PHI0: f64 = 2.0 * PHI0 / HBAR;

/// Z-loop symmetry point `Φz_sym(Φx) = 1/2 + arctan(d·tan(πΦx))/(2π)`.
pub fn symmetry_point(d: f64, phi_x: f64) -> Result<f64> {
    Ok(symmetry_point_derivs(d, phi_x)?.0)
}

/// Symmetry point together with its first and second derivative in Φx.
pub fn symmetry_point_derivs(d: f64, phi_x: f64) -> Result<(f64, f64, f64)> {
    if !(phi_x.abs() < 0.5) {
        return Err(Error::Domain(format!(
            "symmetry point needs |phi_x| < 0.5, got {phi_x}"
        )));
    }
    let t = (PI * phi_x).tan();
    let q = 1.0 + d * d * t * t;
    let f = 0.5 + (d * t).atan() / TWO_PI;
    let f1 = 0.5 * d * (1.0 + t * t) / q;
    let f2 = d * PI * t * (1.0 - d * d) * (1.0 + t * t) / (q * q);
    Ok((f, f1, f2))
}

/// ∂Φz_sym/∂d at fixed Φx.
pub fn symmetry_point_d_asymmetry(d: f64, phi_x: f64) -> Result<f64> {
    if !(phi_x.abs() < 0.5) {
        return Err(Error::Domain(format!(
            "symmetry point needs |phi_x| < 0.5, got {phi_x}"
        )));
    }
    let t = (PI * phi_x).tan();
    Ok(t / (TWO_PI * (1.0 + d * d * t * t)))
}

/// Operating point in units of Φ0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxBias {
    pub phi_z: f64,
    pub phi_x: f64,
}

impl FluxBias {
    pub fn new(phi_z: f64, phi_x: f64) -> Self {
        Self { phi_z, phi_x }
    }
}

/// Tabulated persistent current and tunnelling amplitude versus Φx.
#[derive(Debug, Clone)]
pub struct QubitCurves {
    ip: CubicSpline,
    delta: CubicSpline,
    d: f64,
}

impl QubitCurves {
    /// `ip_amps` in A, `delta_rad` in rad/s.
    pub fn new(phi_x: &[f64], ip_amps: &[f64], delta_rad: &[f64], d: f64) -> Result<Self> {
        if !(d.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "junction asymmetry |d| must be < 1, got {d}"
            )));
        }
        if ip_amps.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput(
                "persistent current table must be positive".into(),
            ));
        }
        if delta_rad.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput(
                "tunnelling amplitude table must be positive".into(),
            ));
        }
        if phi_x.iter().any(|v| !(v.abs() < 0.5)) {
            return Err(Error::InvalidInput(
                "phi_x table must lie inside (-0.5, 0.5)".into(),
            ));
        }
        Ok(Self {
            ip: CubicSpline::new(phi_x, ip_amps)?,
            delta: CubicSpline::new(phi_x, delta_rad)?,
            d,
        })
    }

    /// Same as [`QubitCurves::new`] but with Δ given as plain frequency in Hz.
    pub fn from_hz(phi_x: &[f64], ip_amps: &[f64], delta_hz: &[f64], d: f64) -> Result<Self> {
        let rad: Vec<f64> = delta_hz.iter().map(|f| TWO_PI * f).collect();
        Self::new(phi_x, ip_amps, &rad, d)
    }

    pub fn asymmetry(&self) -> f64 {
        self.d
    }

    pub fn with_asymmetry(&self, d: f64) -> Result<Self> {
        if !(d.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "junction asymmetry |d| must be < 1, got {d}"
            )));
        }
        Ok(Self { d, ..self.clone() })
    }

    pub fn phi_x_range(&self) -> (f64, f64) {
        self.ip.domain()
    }

    /// `(Ip, dIp/dΦx, d²Ip/dΦx²)`.
    pub fn ip(&self, phi_x: f64) -> Result<(f64, f64, f64)> {
        self.ip.eval_all(phi_x)
    }

    /// `(Δ, dΔ/dΦx, d²Δ/dΦx²)` in rad/s per power of Φ0.
    pub fn delta(&self, phi_x: f64) -> Result<(f64, f64, f64)> {
        self.delta.eval_all(phi_x)
    }

    pub fn symmetry_point(&self, phi_x: f64) -> Result<f64> {
        symmetry_point(self.d, phi_x)
    }

    /// Φx at which Δ equals `delta_rad`; requires Δ monotone on the table.
    pub fn phi_x_for_delta(&self, delta_rad: f64) -> Result<f64> {
        let (lo, hi) = self.phi_x_range();
        crate::numerics::brent(
            |x| {
                self.delta
                    .eval(x)
                    .map(|v| v - delta_rad)
                    .unwrap_or(f64::NAN)
            },
            lo,
            hi,
            1e-13,
            200,
        )
    }

    pub fn compute_point(&self, bias: FluxBias) -> Result<QubitPoint> {
        if !(bias.phi_z.is_finite() && bias.phi_x.is_finite()) {
            return Err(Error::InvalidInput("flux bias must be finite".into()));
        }
        let (ip, ip1, ip2) = self.ip(bias.phi_x)?;
        let (delta, delta1, delta2) = self.delta(bias.phi_x)?;
        let (sym, f1, f2) = symmetry_point_derivs(self.d, bias.phi_x)?;
        let k = EPS_PER_AMP_PHI0;
        let u = bias.phi_z - sym;

        let eps = k * ip * u;
        let eps_z = k * ip;
        let eps_x = k * (ip1 * u - ip * f1);
        let eps_zx = k * ip1;
        let eps_xx = k * (ip2 * u - 2.0 * ip1 * f1 - ip * f2);

        let omega = eps.hypot(delta);
        let w_z = eps * eps_z / omega;
        let w_x = (eps * eps_x + delta * delta1) / omega;
        let w_zz = (eps_z * eps_z) / omega - w_z * w_z / omega;
        let w_xx = (eps_x * eps_x + eps * eps_xx + delta1 * delta1 + delta * delta2) / omega
            - w_x * w_x / omega;
        let w_zx = (eps_z * eps_x + eps * eps_zx) / omega - w_z * w_x / omega;

        // off-diagonal element of ∂H/∂λ between eigenstates, divided by ħ
        let mz_ge = 0.5 * (eps_z * delta) / omega;
        let mx_ge = 0.5 * (eps_x * delta - delta1 * eps) / omega;

        Ok(QubitPoint {
            bias,
            epsilon: eps,
            delta,
            omega01: omega,
            ip,
            phi_z_sym: sym,
            d_sym_d_phi_x: f1,
            d_eps_d_phi_z: eps_z,
            d_eps_d_phi_x: eps_x,
            d_delta_d_phi_x: delta1,
            d_omega_d_phi_z: w_z,
            d_omega_d_phi_x: w_x,
            d2_omega: SecondOrder {
                zz: w_zz,
                xx: w_xx,
                zx: w_zx,
            },
            mz_ge,
            mx_ge,
        })
    }

    /// Point at fixed Φx with the longitudinal field set to `epsilon` (rad/s).
    pub fn point_at_epsilon(&self, phi_x: f64, epsilon: f64) -> Result<QubitPoint> {
        let (ip, _, _) = self.ip(phi_x)?;
        let sym = self.symmetry_point(phi_x)?;
        self.compute_point(FluxBias::new(
            sym + epsilon / (EPS_PER_AMP_PHI0 * ip),
            phi_x,
        ))
    }

    /// Central finite-difference sensitivities, Richardson-extrapolated over
    /// steps `h` and `h/2`.
    pub fn sensitivities_fd(&self, bias: FluxBias, step: f64) -> Result<FdSensitivities> {
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "finite-difference step must be > 0, got {step}"
            )));
        }
        let (lo, hi) = self.phi_x_range();
        if bias.phi_x - step < lo || bias.phi_x + step > hi {
            return Err(Error::OutOfRange {
                what: "finite-difference stencil phi_x",
                value: bias.phi_x,
                lo: lo + step,
                hi: hi - step,
            });
        }
        let w = |dz: f64, dx: f64| -> Result<f64> {
            Ok(self
                .compute_point(FluxBias::new(bias.phi_z + dz, bias.phi_x + dx))?
                .omega01)
        };
        let first = |h: f64| -> Result<(f64, f64)> {
            Ok((
                (w(h, 0.0)? - w(-h, 0.0)?) / (2.0 * h),
                (w(0.0, h)? - w(0.0, -h)?) / (2.0 * h),
            ))
        };
        let second = |h: f64| -> Result<SecondOrder> {
            let w0 = w(0.0, 0.0)?;
            Ok(SecondOrder {
                zz: (w(h, 0.0)? - 2.0 * w0 + w(-h, 0.0)?) / (h * h),
                xx: (w(0.0, h)? - 2.0 * w0 + w(0.0, -h)?) / (h * h),
                zx: (w(h, h)? - w(h, -h)? - w(-h, h)? + w(-h, -h)?) / (4.0 * h * h),
            })
        };
        let (z1, x1) = first(step)?;
        let (z2, x2) = first(0.5 * step)?;
        let rich = |coarse: f64, fine: f64| (4.0 * fine - coarse) / 3.0;
        let s1 = second(step)?;
        let s2 = second(0.5 * step)?;
        Ok(FdSensitivities {
            d_omega_d_phi_z: rich(z1, z2),
            d_omega_d_phi_x: rich(x1, x2),
            d2_omega: SecondOrder {
                zz: rich(s1.zz, s2.zz),
                xx: rich(s1.xx, s2.xx),
                zx: rich(s1.zx, s2.zx),
            },
        })
    }
}

/// Second derivatives of ω01 in rad/s per Φ0².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrder {
    pub zz: f64,
    pub xx: f64,
    pub zx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdSensitivities {
    pub d_omega_d_phi_z: f64,
    pub d_omega_d_phi_x: f64,
    pub d2_omega: SecondOrder,
}

/// Qubit parameters and sensitivities at one bias point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitPoint {
    pub bias: FluxBias,
    /// Longitudinal field, rad/s.
    pub epsilon: f64,
    /// Transverse field, rad/s.
    pub delta: f64,
    pub omega01: f64,
    /// Persistent current, A.
    pub ip: f64,
    pub phi_z_sym: f64,
    pub d_sym_d_phi_x: f64,
    pub d_eps_d_phi_z: f64,
    pub d_eps_d_phi_x: f64,
    pub d_delta_d_phi_x: f64,
    pub d_omega_d_phi_z: f64,
    pub d_omega_d_phi_x: f64,
    pub d2_omega: SecondOrder,
    /// `⟨e|∂H/∂Φz|g⟩/ħ` in rad/s per Φ0; equals `(Ip·Φ0/ħ)·(Δ/ω01)`.
    pub mz_ge: f64,
    /// `⟨e|∂H/∂Φx|g⟩/ħ` in rad/s per Φ0, same phase convention as `mz_ge`.
    pub mx_ge: f64,
}
