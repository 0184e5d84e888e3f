//! Time-domain Monte-Carlo check of the filter-function dephasing results.
//!
//! A stationary Gaussian process with spectrum `S(ω)` is written as
//! `x(t) = Σ_k a_k cos(ω_k t) + b_k sin(ω_k t)` with independent
//! `a_k, b_k ~ N(0, σ_k²)` and `σ_k² = (1/π)∫_bin S dω`. Bins below the
//! first FFT frequency are log-spaced sinusoids with a random frequency
//! inside each bin; the rest go through one inverse FFT per trace.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::decoherence::Filter;
use crate::noise_psd::PsdModel;
use crate::numerics::{integrate_log, QuadOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    /// Sample spacing, s.
    pub dt: f64,
    /// Samples kept per trace.
    pub n_samples: usize,
    pub n_traces: usize,
    pub seed: u64,
    pub target: PsdModel,
    /// Infrared cutoff of the synthesized band, rad/s.
    pub omega_low: f64,
    /// FFT length; at least `n_samples`. Sets the first FFT frequency.
    pub fft_len: usize,
    /// Log-spaced sinusoids per decade below the first FFT frequency.
    pub low_bins_per_decade: usize,
}

impl TrajectoryEnsemble {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if self.n_samples < 2 || self.n_traces == 0 {
            return bad("need at least 2 samples and 1 trace");
        }
        if self.fft_len < self.n_samples || self.fft_len % 2 != 0 {
            return bad("fft_len must be even and at least n_samples");
        }
        if !(self.omega_low > 0.0) {
            return bad("omega_low must be > 0");
        }
        if self.low_bins_per_decade == 0 {
            return bad("low_bins_per_decade must be > 0");
        }
        self.target.validate()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.n_samples - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub dt: f64,
    pub data: Vec<Vec<f64>>,
}

struct Band {
    /// `(ω_lo, ω_hi, σ)` per log-spaced low-frequency bin.
    low: Vec<(f64, f64, f64)>,
    /// σ per FFT bin `k = 1..=N/2`.
    fft: Vec<f64>,
}

fn bin_sigma(target: &PsdModel, lo: f64, hi: f64) -> Result<f64> {
    let opts = QuadOptions {
        rel_tol: 1e-9,
        ..QuadOptions::default()
    };
    let failure = std::cell::Cell::new(None);
    let s = |w: f64| match target.eval(w) {
        Ok(v) => v,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let r = integrate_log(s, lo, hi, opts);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let v =
        r.map_err(|e| Error::Domain(format!("spectrum is not integrable on [{lo}, {hi}]: {e}")))?;
    Ok((v.value / PI).sqrt())
}

fn plan_band(spec: &TrajectoryEnsemble) -> Result<Band> {
    let n = spec.fft_len;
    let dw = 2.0 * PI / (n as f64 * spec.dt);
    let nyquist = PI / spec.dt;
    let mut fft = Vec::with_capacity(n / 2);
    for k in 1..=n / 2 {
        let lo = (k as f64 - 0.5) * dw;
        let hi = ((k as f64 + 0.5) * dw).min(nyquist);
        fft.push(bin_sigma(&spec.target, lo, hi)?);
    }
    let mut low = Vec::new();
    let top = 0.5 * dw;
    if spec.omega_low < top {
        let decades = (top / spec.omega_low).log10();
        let m = ((decades * spec.low_bins_per_decade as f64).ceil() as usize).max(1);
        let ratio = (top / spec.omega_low).powf(1.0 / m as f64);
        let mut lo = spec.omega_low;
        for _ in 0..m {
            let hi = (lo * ratio).min(top);
            low.push((lo, hi, bin_sigma(&spec.target, lo, hi)?));
            lo = hi;
        }
    }
    Ok(Band { low, fft })
}

fn synthesize_one(
    spec: &TrajectoryEnsemble,
    band: &Band,
    fft: &Arc<dyn Fft<f64>>,
    index: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let mut gauss = || rng.sample::<f64, _>(StandardNormal);
    let mut out = vec![0.0; spec.n_samples];

    // low band first, so the draw order does not depend on the FFT length
    let low_draws: Vec<(f64, f64, f64)> = band
        .low
        .iter()
        .map(|&(lo, hi, sigma)| {
            let a = sigma * gauss();
            let b = sigma * gauss();
            let u = 0.5 * (1.0 + gauss().tanh());
            (lo * (hi / lo).powf(u), a, b)
        })
        .collect();
    for (w, a, b) in low_draws {
        let rot = Complex64::from_polar(1.0, w * spec.dt);
        let mut z = Complex64::new(1.0, 0.0);
        for (n, v) in out.iter_mut().enumerate() {
            *v += a * z.re + b * z.im;
            z *= rot;
            if n % 256 == 255 {
                // keep the phasor on the unit circle
                z /= z.norm();
            }
        }
    }

    let n = spec.fft_len;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, &sigma) in band.fft.iter().enumerate() {
        let a = sigma * gauss();
        let b = sigma * gauss();
        buf[k + 1] = Complex64::new(a, -b);
    }
    fft.process(&mut buf);
    for (v, c) in out.iter_mut().zip(&buf) {
        *v += c.re;
    }
    out
}

/// Gaussian traces with the target spectrum on `[ω_low, π/dt]`.
pub fn synthesize(spec: &TrajectoryEnsemble) -> Result<Traces> {
    spec.validate()?;
    let band = plan_band(spec)?;
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(spec.fft_len);
    let data = (0..spec.n_traces)
        .into_par_iter()
        .map(|i| synthesize_one(spec, &band, &fft, i))
        .collect();
    Ok(Traces { dt: spec.dt, data })
}

/// Traces that hold one Gaussian value each, standard deviation `sigma`.
pub fn quasistatic_traces(
    n_traces: usize,
    n_samples: usize,
    dt: f64,
    sigma: f64,
    seed: u64,
) -> Traces {
    let data = (0..n_traces)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            vec![sigma * rng.sample::<f64, _>(StandardNormal); n_samples]
        })
        .collect();
    Traces { dt, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySample {
    pub tau: f64,
    pub envelope: f64,
    pub stderr: f64,
}

/// Ensemble coherence `|⟨exp(iφ(τ))⟩|` with
/// `φ(τ) = sensitivity·∫_0^τ x dt`, sign-flipped after τ/2 for echo.
/// Each τ is rounded to the nearest representable sample count.
pub fn simulate_decay(
    traces: &Traces,
    sensitivity: f64,
    filter: Filter,
    taus: &[f64],
) -> Result<Vec<DecaySample>> {
    if traces.data.is_empty() {
        return Err(Error::InvalidInput("no traces".into()));
    }
    let len = traces.data[0].len();
    let dt = traces.dt;
    let steps: Vec<usize> = taus
        .iter()
        .map(|&tau| {
            let m = (tau / dt).round() as usize;
            match filter {
                Filter::Ramsey => m,
                Filter::Echo => 2 * ((m + 1) / 2),
            }
        })
        .collect();
    if let Some(&m) = steps.iter().max() {
        if m >= len {
            return Err(Error::InvalidInput(format!(
                "tau up to {} s needs {} samples per trace, have {len}",
                m as f64 * dt,
                m + 1
            )));
        }
    }
    let phases: Vec<Vec<f64>> = traces
        .data
        .par_iter()
        .map(|x| {
            // trapezoidal running integral
            let mut cum = vec![0.0; len];
            for n in 1..len {
                cum[n] = cum[n - 1] + 0.5 * dt * (x[n - 1] + x[n]);
            }
            steps
                .iter()
                .map(|&m| {
                    let integral = match filter {
                        Filter::Ramsey => cum[m],
                        Filter::Echo => 2.0 * cum[m / 2] - cum[m],
                    };
                    sensitivity * integral
                })
                .collect()
        })
        .collect();
    let n = traces.data.len() as f64;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for p in &phases {
                let (s, c) = p[j].sin_cos();
                sc += c;
                ss += s;
                sc2 += c * c;
                ss2 += s * s;
            }
            let (mc, ms) = (sc / n, ss / n);
            let env = mc.hypot(ms);
            let var_c = (sc2 / n - mc * mc).max(0.0);
            let var_s = (ss2 / n - ms * ms).max(0.0);
            let stderr = if env > 0.0 {
                ((mc * mc * var_c + ms * ms * var_s) / (env * env) / n).sqrt()
            } else {
                ((var_c + var_s) / n).sqrt()
            };
            DecaySample {
                tau: m as f64 * dt,
                envelope: env,
                stderr,
            }
        })
        .collect())
}

/// First time the envelope falls to 1/e, by linear interpolation of
/// `ln(envelope)` between bracketing samples.
pub fn decay_time_1e(samples: &[DecaySample]) -> Result<f64> {
    let target = -1.0;
    for w in samples.windows(2) {
        let (a, b) = (w[0], w[1]);
        let la = a.envelope.max(f64::MIN_POSITIVE).ln();
        let lb = b.envelope.max(f64::MIN_POSITIVE).ln();
        if la > target && lb <= target {
            return Ok(a.tau + (b.tau - a.tau) * (la - target) / (la - lb));
        }
    }
    Err(Error::NonConvergence(
        "envelope does not cross 1/e in the sampled window".into(),
    ))
}

/// Welch estimate of the spectrum in the same convention as [`PsdModel`],
/// with Hann windows and 50% overlap. Returns `(ω, S)` for bins `1..L/2`.
pub fn welch_psd(traces: &Traces, segment: usize) -> Result<Vec<(f64, f64)>> {
    if segment < 8 || segment % 2 != 0 {
        return Err(Error::InvalidInput(
            "segment length must be even and >= 8".into(),
        ));
    }
    let len = traces.data.first().map_or(0, |t| t.len());
    if len < segment {
        return Err(Error::InvalidInput(
            "traces are shorter than one segment".into(),
        ));
    }
    let window: Vec<f64> = (0..segment)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment as f64).cos())
        .collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);
    let hop = segment / 2;
    let sums = traces
        .data
        .par_iter()
        .map(|x| {
            let mut acc = vec![0.0; segment / 2];
            let mut count = 0usize;
            let mut start = 0;
            let mut buf = vec![Complex64::new(0.0, 0.0); segment];
            while start + segment <= x.len() {
                let seg = &x[start..start + segment];
                let mean = seg.iter().sum::<f64>() / segment as f64;
                for (b, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                    *b = Complex64::new((v - mean) * w, 0.0);
                }
                fft.process(&mut buf);
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += buf[k].norm_sqr();
                }
                count += 1;
                start += hop;
            }
            (acc, count)
        })
        .reduce(
            || (vec![0.0; segment / 2], 0),
            |(mut a, ca), (b, cb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, ca + cb)
            },
        );
    let (acc, count) = sums;
    let dw = 2.0 * PI / (segment as f64 * traces.dt);
    Ok((1..segment / 2)
        .map(|k| (k as f64 * dw, traces.dt * acc[k] / (w2 * count as f64)))
        .collect())
}
