//! Parameter estimation from symmetry-point and dephasing-time data.

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::decoherence::{a_omega_flux, EtaFactors, Filter};
use crate::numerics::golden_section;
use crate::qubit_model::{symmetry_point, symmetry_point_d_asymmetry, FluxBias, QubitCurves};
use crate::{Error, Result};

/// Reflection center of a trace sampled on a strictly increasing grid.
///
/// The mismatch between the trace and its mirror image is measured over a
/// fixed half-window of a quarter of the span, so candidate centers are
/// restricted to the middle half of the grid.
pub fn extract_symmetry_point(phi_z: &[f64], signal: &[f64]) -> Result<f64> {
    if phi_z.len() != signal.len() {
        return Err(Error::Data("trace grid and signal differ in length".into()));
    }
    if phi_z.len() < 8 {
        return Err(Error::Data(format!(
            "trace needs at least 8 samples, got {}",
            phi_z.len()
        )));
    }
    if phi_z.windows(2).any(|w| !(w[1] > w[0])) || signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "trace grid must be strictly increasing with finite values".into(),
        ));
    }
    let lo = phi_z[0];
    let hi = phi_z[phi_z.len() - 1];
    let half = 0.25 * (hi - lo);
    let interp = |x: f64| -> f64 {
        let i = phi_z.partition_point(|&p| p <= x).clamp(1, phi_z.len() - 1);
        let (x0, x1) = (phi_z[i - 1], phi_z[i]);
        let t = (x - x0) / (x1 - x0);
        signal[i - 1] + t * (signal[i] - signal[i - 1])
    };
    const OFFSETS: usize = 256;
    let offsets: Vec<f64> = (1..=OFFSETS)
        .map(|k| half * k as f64 / OFFSETS as f64)
        .collect();
    let mismatch = |c: f64| -> f64 {
        offsets
            .iter()
            .map(|&u| (interp(c + u) - interp(c - u)).powi(2))
            .sum::<f64>()
            / OFFSETS as f64
    };
    let (c_lo, c_hi) = (lo + half, hi - half);
    const COARSE: usize = 200;
    let step = (c_hi - c_lo) / COARSE as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=COARSE {
        let m = mismatch(c_lo + step * k as f64);
        if m < best.1 {
            best = (k, m);
        }
    }
    if best.0 == 0 || best.0 == COARSE {
        return Err(Error::Data(
            "trace has no interior reflection center".into(),
        ));
    }
    let a = c_lo + step * (best.0 - 1) as f64;
    let b = c_lo + step * (best.0 + 1) as f64;
    let (c, m) = golden_section(mismatch, a, b, 1e-12 * (hi - lo));

    // a real center makes the mirror mismatch small against the signal spread
    let values: Vec<f64> = offsets
        .iter()
        .flat_map(|&u| [interp(c + u), interp(c - u)])
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let spread = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    if !(m < 0.5 * spread) {
        return Err(Error::Data("trace has no reflection symmetry".into()));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryRow {
    pub phi_x: f64,
    pub phi_z_sym: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymmetryFit {
    pub d: f64,
    pub sigma_d: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Objective at the start point and after each accepted step.
    pub cost_history: Vec<f64>,
}

/// Weighted least squares for the junction asymmetry.
///
/// Without per-row uncertainties the standard error is scaled by the
/// residual scatter.
pub fn fit_asymmetry(rows: &[SymmetryRow]) -> Result<AsymmetryFit> {
    if rows.len() < 3 {
        return Err(Error::Data(format!(
            "asymmetry fit needs at least 3 rows, got {}",
            rows.len()
        )));
    }
    for r in rows {
        if !(r.phi_x.abs() < 0.5) || !r.phi_z_sym.is_finite() {
            return Err(Error::Data(format!("invalid symmetry row {r:?}")));
        }
        if let Some(s) = r.sigma {
            if !(s > 0.0) {
                return Err(Error::Data(format!("sigma must be > 0, got {s}")));
            }
        }
    }
    let weighted = rows.iter().all(|r| r.sigma.is_some());
    let sig = |r: &SymmetryRow| if weighted { r.sigma.unwrap() } else { 1.0 };
    let cost = |d: f64| -> Result<f64> {
        let mut c = 0.0;
        for r in rows {
            c += ((r.phi_z_sym - symmetry_point(d, r.phi_x)?) / sig(r)).powi(2);
        }
        Ok(c)
    };

    let mut d = 0.0;
    let mut current = cost(d)?;
    let mut history = vec![current];
    let mut iterations = 0;
    let mut jtj;
    loop {
        iterations += 1;
        if iterations > 100 {
            return Err(Error::NonConvergence("asymmetry fit".into()));
        }
        let (mut jtr, mut h) = (0.0, 0.0);
        for r in rows {
            let s = sig(r);
            let res = (r.phi_z_sym - symmetry_point(d, r.phi_x)?) / s;
            let j = symmetry_point_d_asymmetry(d, r.phi_x)? / s;
            jtr += j * res;
            h += j * j;
        }
        jtj = h;
        if h == 0.0 {
            return Err(Error::Unidentifiable(
                "asymmetry has no effect at these phi_x".into(),
            ));
        }
        let mut step = jtr / h;
        // halve until the cost does not increase and |d| stays below 1
        let mut accepted = false;
        for _ in 0..60 {
            let trial = d + step;
            if trial.abs() < 0.999 {
                let c = cost(trial)?;
                if c <= current {
                    d = trial;
                    current = c;
                    history.push(c);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-14 {
            break;
        }
    }
    let dof = rows.len() - 1;
    let scale = if weighted { 1.0 } else { current / dof as f64 };
    let residuals = rows
        .iter()
        .map(|r| Ok(r.phi_z_sym - symmetry_point(d, r.phi_x)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymmetryFit {
        d,
        sigma_d: (scale / jtj).sqrt(),
        chi2: current,
        dof,
        iterations,
        residuals,
        cost_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ramsey,
    Echo,
}

impl From<Protocol> for Filter {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Ramsey => Filter::Ramsey,
            Protocol::Echo => Filter::Echo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRow {
    pub phi_z: f64,
    pub phi_x: f64,
    pub t_phi_s: f64,
    #[serde(default)]
    pub sigma_s: Option<f64>,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub omega_low: f64,
    pub t_typ: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            omega_low: crate::constants::TWO_PI * 10.0,
            t_typ: 100e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseFit {
    pub a_z: f64,
    pub a_x: f64,
    pub sqrt_a_z: f64,
    pub sqrt_a_x: f64,
    pub c_zx: f64,
    /// Standard errors of `(√A_z, √A_x, c_zx)`.
    pub std_err: [f64; 3],
    /// Covariance of `(√A_z, √A_x, c_zx)`.
    pub covariance: [[f64; 3]; 3],
    /// Weighted sum of squared log residuals.
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// `ln(T_measured / T_model)` per row.
    pub residuals: Vec<f64>,
    /// Objective at the start point and after each accepted step.
    pub cost_history: Vec<f64>,
}

const AMP_UNIT: f64 = 1e-6;

struct FluxFitProblem {
    wz: Vec<f64>,
    wx: Vec<f64>,
    eta: Vec<f64>,
    log_t: Vec<f64>,
    weight: Vec<f64>,
}

impl FluxFitProblem {
    /// Residuals `(ln T_meas - ln T_model)·w` and their Jacobian.
    fn evaluate(&self, p: &Vector3<f64>, jac: Option<&mut Vec<Vector3<f64>>>) -> Vec<f64> {
        let (a, b, th) = (p[0], p[1], p[2]);
        let c = th.tanh();
        let u2 = AMP_UNIT * AMP_UNIT;
        let mut rows = Vec::with_capacity(self.wz.len());
        let mut grads = Vec::new();
        for i in 0..self.wz.len() {
            let (wz, wx) = (self.wz[i], self.wx[i]);
            let aw = u2 * (wz * wz * a * a + wx * wx * b * b + 2.0 * wz * wx * c * a * b);
            // α = 1: ln T = -½ ln(A_ω η)
            let model = -0.5 * (aw * self.eta[i]).ln();
            rows.push((self.log_t[i] - model) * self.weight[i]);
            if jac.is_some() {
                let da = u2 * (2.0 * a * wz * wz + 2.0 * wz * wx * c * b);
                let db = u2 * (2.0 * b * wx * wx + 2.0 * wz * wx * c * a);
                let dt = u2 * 2.0 * wz * wx * (1.0 - c * c) * a * b;
                // d(residual) = +½ dA/A · w
                let k = 0.5 * self.weight[i] / aw;
                grads.push(Vector3::new(k * da, k * db, k * dt));
            }
        }
        if let Some(j) = jac {
            *j = grads;
        }
        rows
    }

    fn cost(&self, p: &Vector3<f64>) -> f64 {
        let r = self.evaluate(p, None);
        if r.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        r.iter().map(|v| v * v).sum()
    }
}

/// Fit `(√A_z, √A_x, c_zx)` to dephasing times using the closed-form 1/f
/// (α = 1) prediction, by Levenberg-Marquardt on log residuals.
pub fn fit_flux_noise(
    rows: &[CoherenceRow],
    curves: &QubitCurves,
    opts: &FitOptions,
) -> Result<NoiseFit> {
    if rows.len() < 4 {
        return Err(Error::Data(format!(
            "noise fit needs at least 4 rows, got {}",
            rows.len()
        )));
    }
    let mut phi_xs: Vec<f64> = rows.iter().map(|r| r.phi_x).collect();
    phi_xs.sort_by(f64::total_cmp);
    phi_xs.dedup();
    if phi_xs.len() < 2 {
        return Err(Error::Unidentifiable(
            "noise fit needs data at two or more phi_x values".into(),
        ));
    }
    let weighted = rows.iter().all(|r| r.sigma_s.is_some());
    let eta = EtaFactors::new(1.0, opts.omega_low, opts.t_typ)?;
    let mut prob = FluxFitProblem {
        wz: Vec::new(),
        wx: Vec::new(),
        eta: Vec::new(),
        log_t: Vec::new(),
        weight: Vec::new(),
    };
    for r in rows {
        if !(r.t_phi_s > 0.0) {
            return Err(Error::Data(format!(
                "dephasing time must be > 0, got {}",
                r.t_phi_s
            )));
        }
        let p = curves.compute_point(FluxBias::new(r.phi_z, r.phi_x))?;
        prob.wz.push(p.d_omega_d_phi_z);
        prob.wx.push(p.d_omega_d_phi_x);
        prob.eta.push(eta.get(r.protocol.into()));
        prob.log_t.push(r.t_phi_s.ln());
        let w = match (weighted, r.sigma_s) {
            (true, Some(s)) if s > 0.0 => r.t_phi_s / s,
            (true, _) => return Err(Error::Data("sigma must be > 0".into())),
            _ => 1.0,
        };
        prob.weight.push(w);
    }

    // coarse start over amplitudes (in μΦ0) and correlation
    let mut p = Vector3::new(10.0, 10.0, 0.0);
    let mut cost = f64::INFINITY;
    let grid = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
    for &a in &grid {
        for &b in &grid {
            for th in [-1.0, 0.0, 1.0] {
                let q = Vector3::new(a, b, th);
                let c = prob.cost(&q);
                if c < cost {
                    cost = c;
                    p = q;
                }
            }
        }
    }
    if !cost.is_finite() {
        return Err(Error::Data(
            "dephasing data cannot be evaluated at any start point".into(),
        ));
    }

    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jac = Vec::new();
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(Error::NonConvergence("flux-noise fit".into()));
        }
        let r = prob.evaluate(&p, Some(&mut jac));
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (g, res) in jac.iter().zip(&r) {
            jtj += g * g.transpose();
            jtr += g * *res;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = prob.cost(&trial);
            if c < cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = c;
                history.push(c);
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 || step.norm() < 1e-12 * p.norm() {
                    improved = false;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    // covariance from the Gauss-Newton Hessian at the optimum
    let r = prob.evaluate(&p, Some(&mut jac));
    let mut jtj = Matrix3::zeros();
    for g in &jac {
        jtj += g * g.transpose();
    }
    let eig = SymmetricEigen::new(jtj);
    let (emin, emax) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(emin > 1e-12 * emax) {
        return Err(Error::Unidentifiable(
            "noise parameters are not separately constrained by this dataset".into(),
        ));
    }
    let dof = rows.len() - 3;
    let scale = if weighted {
        1.0
    } else {
        cost / dof.max(1) as f64
    };
    let cov_p = jtj
        .try_inverse()
        .ok_or_else(|| Error::Unidentifiable("singular fit Hessian".into()))?
        * scale;
    let c = p[2].tanh();
    let d = Matrix3::from_diagonal(&Vector3::new(AMP_UNIT, AMP_UNIT, 1.0 - c * c));
    let cov = d * cov_p * d;
    let (sa, sb) = (p[0].abs() * AMP_UNIT, p[1].abs() * AMP_UNIT);
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(NoiseFit {
        a_z: sa * sa,
        a_x: sb * sb,
        sqrt_a_z: sa,
        sqrt_a_x: sb,
        c_zx: c,
        std_err: [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt(), cov[(2, 2)].sqrt()],
        covariance,
        chi2: cost,
        dof,
        iterations,
        residuals: r.iter().zip(&prob.weight).map(|(v, w)| v / w).collect(),
        cost_history: history,
    })
}

/// Closed-form 1/f dephasing time at one bias for given flux noise.
pub fn model_tphi(
    curves: &QubitCurves,
    bias: FluxBias,
    a_z: f64,
    a_x: f64,
    c_zx: f64,
    eta: &EtaFactors,
    filter: Filter,
) -> Result<Option<f64>> {
    let p = curves.compute_point(bias)?;
    Ok(crate::decoherence::tphi_closed_form(
        a_omega_flux(&p, a_z, a_x, c_zx),
        eta,
        filter,
    ))
}

/// Φz maximizing `tphi(Φz)` within `half_window` of the symmetry point at
/// `phi_x`.
pub fn tphi_argmax<F: Fn(f64) -> Result<f64>>(
    curves: &QubitCurves,
    phi_x: f64,
    half_window: f64,
    tphi: F,
) -> Result<f64> {
    let sym = curves.symmetry_point(phi_x)?;
    let (lo, hi) = (sym - half_window, sym + half_window);
    const COARSE: usize = 400;
    let step = (hi - lo) / COARSE as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=COARSE {
        let t = tphi(lo + step * k as f64)?;
        if t > best.1 {
            best = (k, t);
        }
    }
    if best.0 == 0 || best.0 == COARSE {
        return Err(Error::Data(
            "dephasing time has no interior maximum in the window".into(),
        ));
    }
    let failure = std::cell::Cell::new(None);
    let neg = |z: f64| match tphi(z) {
        Ok(t) => -t,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let (z, _) = golden_section(
        neg,
        lo + step * (best.0 - 1) as f64,
        lo + step * (best.0 + 1) as f64,
        1e-13,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(z)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), i + 1)))?);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

/// Reads `phi_z,phi_x,t_phi_s,sigma_s,protocol`.
pub fn read_coherence_csv(path: &Path) -> Result<Vec<CoherenceRow>> {
    read_rows(path)
}

/// Reads `phi_x,phi_z_sym,sigma`.
pub fn read_symmetry_csv(path: &Path) -> Result<Vec<SymmetryRow>> {
    read_rows(path)
}
