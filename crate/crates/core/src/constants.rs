//! Physical constants (CODATA 2018 exact/recommended values).

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Magnetic flux quantum, Wb.
pub const PHI0: f64 = 2.067_833_848e-15;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Bundle of the constants, for callers that want to pass them around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub phi0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            k_b: K_B,
            phi0: PHI0,
        }
    }
}

/// Bose-Einstein occupation `1 / (exp(ħω / k_B T) - 1)`.
pub fn bose_einstein(temperature: f64, omega: f64) -> f64 {
    let x = HBAR * omega / (K_B * temperature);
    1.0 / x.exp_m1()
}

/// Plain frequency in Hz to angular frequency.
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

pub fn rad_to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}
