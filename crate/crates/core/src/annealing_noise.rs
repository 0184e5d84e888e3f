//! Flux noise seen as noise on the annealing parameters ε and Δ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::qubit_model::{FluxBias, QubitCurves, QubitPoint};
use crate::{Error, Result};

/// 1/f powers at 1 Hz of ε, Δ and their cross term, in (rad/s)²/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealNoisePoint {
    pub delta: f64,
    pub epsilon: f64,
    pub a_eps: f64,
    pub a_delta: f64,
    pub a_delta_eps: f64,
}

pub fn anneal_noise(point: &QubitPoint, a_z: f64, a_x: f64, c_zx: f64) -> Result<AnnealNoisePoint> {
    if !(a_z >= 0.0 && a_x >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "flux noise powers must be >= 0, got {a_z}, {a_x}"
        )));
    }
    if !(c_zx.abs() <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "correlation must lie in [-1, 1], got {c_zx}"
        )));
    }
    let a_zx = c_zx * (a_z * a_x).sqrt();
    let (ez, ex, dx) = (
        point.d_eps_d_phi_z,
        point.d_eps_d_phi_x,
        point.d_delta_d_phi_x,
    );
    Ok(AnnealNoisePoint {
        delta: point.delta,
        epsilon: point.epsilon,
        a_eps: ez * ez * a_z + ex * ex * a_x + 2.0 * ez * ex * a_zx,
        a_delta: dx * dx * a_x,
        a_delta_eps: ez * dx * a_zx + ex * dx * a_x,
    })
}

/// A path through flux-bias space parametrised by `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnealPath {
    /// Φx swept linearly while Φz tracks a fixed ε (rad/s).
    AtEpsilon {
        phi_x_start: f64,
        phi_x_end: f64,
        epsilon: f64,
    },
    /// Straight line between two flux biases.
    Linear { start: FluxBias, end: FluxBias },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub s: f64,
    pub delta_hz: f64,
    pub eps_hz: f64,
    pub a_eps: f64,
    pub a_delta: f64,
    pub a_delta_eps: f64,
}

fn point_on_path(curves: &QubitCurves, path: &AnnealPath, s: f64) -> Result<QubitPoint> {
    match *path {
        AnnealPath::AtEpsilon {
            phi_x_start,
            phi_x_end,
            epsilon,
        } => curves.point_at_epsilon(phi_x_start + s * (phi_x_end - phi_x_start), epsilon),
        AnnealPath::Linear { start, end } => curves.compute_point(FluxBias::new(
            start.phi_z + s * (end.phi_z - start.phi_z),
            start.phi_x + s * (end.phi_x - start.phi_x),
        )),
    }
}

/// Noise powers along an annealing path at `samples` evenly spaced values
/// of `s`, endpoints included.
pub fn anneal_schedule_export(
    curves: &QubitCurves,
    path: &AnnealPath,
    samples: usize,
    a_z: f64,
    a_x: f64,
    c_zx: f64,
) -> Result<Vec<ScheduleRow>> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 schedule samples, got {samples}"
        )));
    }
    (0..samples)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 / (samples - 1) as f64;
            let p = point_on_path(curves, path, s)?;
            let n = anneal_noise(&p, a_z, a_x, c_zx)?;
            Ok(ScheduleRow {
                s,
                delta_hz: n.delta / TWO_PI,
                eps_hz: n.epsilon / TWO_PI,
                a_eps: n.a_eps,
                a_delta: n.a_delta,
                a_delta_eps: n.a_delta_eps,
            })
        })
        .collect()
}
