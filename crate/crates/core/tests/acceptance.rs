//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::f64::consts::{LN_2, PI};
use std::time::{Duration, Instant};

use flux_coherence::annealing_noise::{anneal_schedule_export, AnnealPath};
use flux_coherence::cli::run_validation;
use flux_coherence::config::{RunConfig, DEFAULT_CONFIG};
use flux_coherence::constants::{HBAR, PHI0, TWO_PI};
use flux_coherence::decoherence::{
    eta_factor, gamma_phi_critical_current, t1_purcell, tphi_closed_form_self_consistent,
    tphi_quadrature, CriticalCurrentModel, EtaFactors, Filter,
};
use flux_coherence::estimation::{
    fit_asymmetry, fit_flux_noise, model_tphi, tphi_argmax, CoherenceRow, FitOptions, Protocol,
    SymmetryRow,
};
use flux_coherence::noise_psd::{
    chain_noise_photons, geometry_model, photons_to_temperature, transform_z_to_ztilde, ArmColor,
    AttenuationChain, AttenuationStage, LoopArm, LoopGeometry,
};
use flux_coherence::qubit_model::{FluxBias, QubitCurves};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SQRT_AZ: f64 = 13.3e-6;
const SQRT_AX: f64 = 7.6e-6;
const C_ZX: f64 = 0.47;
const D_TRUE: f64 = 0.069;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn default_config() -> RunConfig {
    RunConfig::from_toml(DEFAULT_CONFIG, &[]).expect("default config parses")
}

fn default_curves() -> QubitCurves {
    default_config().curves().expect("default device curves")
}

fn within_budget(elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed < limit,
        format!(
            "{:.3} s (limit {:.3} s)",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

/// Bose-Einstein occupation, written out independently of the library.
fn occupation(t: f64, omega: f64) -> f64 {
    1.0 / ((HBAR * omega / (1.380_649e-23 * t)).exp() - 1.0)
}

fn criterion_1() -> Outcome {
    let chain = AttenuationChain {
        stages: vec![
            AttenuationStage {
                temperature_k: 4.0,
                atten_db: 20.0,
            },
            AttenuationStage {
                temperature_k: 0.5,
                atten_db: 10.0,
            },
            AttenuationStage {
                temperature_k: 0.01,
                atten_db: 10.0,
            },
        ],
        source_temperature_k: 300.0,
    };
    let omega = TWO_PI * 3e9;
    let start = Instant::now();
    let t = chain_noise_photons(&chain, omega).and_then(|n| photons_to_temperature(n, omega));
    let elapsed = start.elapsed();
    let Ok(t) = t else {
        return outcome(false, format!("chain evaluation failed: {t:?}"));
    };

    // hand-composed beam splitters and inverted occupation
    let mut n = occupation(300.0, omega);
    for (temp, db) in [(4.0, 20.0), (0.5, 10.0), (0.01, 10.0)] {
        let a = 10f64.powf(-db / 10.0);
        n = a * n + (1.0 - a) * occupation(temp, omega);
    }
    let t_oracle = HBAR * omega / (1.380_649e-23 * (1.0 + 1.0 / n).ln());

    let (fast, timing) = within_budget(elapsed, Duration::from_millis(1));
    let pass = (t - 0.170).abs() <= 0.010 && (t / t_oracle - 1.0).abs() < 1e-9 && fast;
    outcome(
        pass,
        format!(
            "T_noise = {:.1} mK (oracle {:.1} mK), {timing}",
            t * 1e3,
            t_oracle * 1e3
        ),
    )
}

fn criterion_2() -> Outcome {
    let sigma = 0.5e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<SymmetryRow> = (0..41)
        .map(|i| {
            let phi_x = 0.05 + 0.01 * i as f64;
            let sym = 0.5 + (D_TRUE * (PI * phi_x).tan()).atan() / TWO_PI;
            SymmetryRow {
                phi_x,
                phi_z_sym: sym + sigma * rng.sample::<f64, _>(StandardNormal),
                sigma: Some(sigma),
            }
        })
        .collect();
    let start = Instant::now();
    let fit = fit_asymmetry(&rows);
    let (fast, timing) = within_budget(start.elapsed(), Duration::from_secs(1));
    match fit {
        Ok(f) => outcome(
            (f.d - D_TRUE).abs() <= 0.003 && fast,
            format!(
                "d = {:.5} ± {:.5} (truth {D_TRUE}), {timing}",
                f.d, f.sigma_d
            ),
        ),
        Err(e) => outcome(false, format!("fit failed: {e}")),
    }
}

fn coherence_grid(curves: &QubitCurves, noise: f64, seed: u64) -> Vec<CoherenceRow> {
    let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for phi_x in [0.30, 0.35, 0.40] {
        let sym = curves.symmetry_point(phi_x).unwrap();
        for k in -6i32..=6 {
            let phi_z = sym + 0.4e-3 * k as f64;
            for protocol in [Protocol::Ramsey, Protocol::Echo] {
                let bias = FluxBias::new(phi_z, phi_x);
                let t = model_tphi(
                    curves,
                    bias,
                    SQRT_AZ * SQRT_AZ,
                    SQRT_AX * SQRT_AX,
                    C_ZX,
                    &eta,
                    protocol.into(),
                )
                .unwrap()
                .unwrap();
                let t_meas = t * (noise * rng.sample::<f64, _>(StandardNormal)).exp();
                rows.push(CoherenceRow {
                    phi_z,
                    phi_x,
                    t_phi_s: t_meas,
                    sigma_s: Some(noise * t_meas),
                    protocol,
                });
            }
        }
    }
    rows
}

fn criterion_3() -> Outcome {
    const SEEDS: u64 = 50;
    let curves = default_curves();
    let truth = [SQRT_AZ, SQRT_AX, C_ZX];
    let start = Instant::now();
    let (mut covered, mut total, mut all_three, mut failures) = (0usize, 0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let rows = coherence_grid(&curves, 0.1, 1000 + seed);
        let Ok(fit) = fit_flux_noise(&rows, &curves, &FitOptions::default()) else {
            failures += 1;
            continue;
        };
        let got = [fit.sqrt_a_z, fit.sqrt_a_x, fit.c_zx];
        let mut ok = 0;
        for k in 0..3 {
            let z = (got[k] - truth[k]).abs() / fit.std_err[k];
            worst = worst.max(z);
            total += 1;
            if z <= 2.0 {
                covered += 1;
                ok += 1;
            }
        }
        all_three += usize::from(ok == 3);
    }
    let (fast, timing) = within_budget(start.elapsed(), Duration::from_secs(30));
    let coverage = covered as f64 / total.max(1) as f64;
    outcome(
        failures == 0 && coverage >= 0.90 && fast,
        format!(
            "{SEEDS} seeds, 2σ coverage {:.1}% ({covered}/{total}), all three within 2σ in {all_three}/{SEEDS}, worst |z| {worst:.2}, {failures} failed fits, {timing}",
            100.0 * coverage
        ),
    )
}

fn criterion_4() -> Outcome {
    let omega_low = TWO_PI * 10.0;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for a in [1e11, 1e12, 1e13, 1e14] {
        let s = move |w: f64| a * TWO_PI / w;
        for filter in [Filter::Ramsey, Filter::Echo] {
            let quad = tphi_quadrature(&s, filter, omega_low).map(|c| c.t_phi);
            let closed = tphi_closed_form_self_consistent(a, 1.0, omega_low, filter);
            match (quad, closed) {
                (Ok(q), Ok(Some((c, _)))) => {
                    let rel = (c / q - 1.0).abs();
                    worst = worst.max(rel);
                    lines.push(format!("{:.0e}/{:?}: {:.2}%", a, filter, 100.0 * rel));
                }
                other => return outcome(false, format!("A = {a:e}, {filter:?}: {other:?}")),
            }
        }
    }
    let (fast, timing) = within_budget(start.elapsed(), Duration::from_secs(5));
    outcome(
        worst <= 0.05 && fast,
        format!(
            "worst deviation {:.2}% over A_ω = 1e11..1e14 [{}], {timing}",
            100.0 * worst,
            lines.join(", ")
        ),
    )
}

/// Composite Simpson rule on `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Ramsey integral `∫_{z_low}^∞ g0(z)/z dz` by Simpson on a log grid below
/// z = 1 and a linear grid above, each Richardson-refined over a halved
/// step, with the averaged tail `∫ 2/z³` past a whole number of periods.
fn eta0_oracle(z_low: f64) -> f64 {
    let g0 = |z: f64| {
        let u = 0.5 * z;
        if u.abs() < 1e-6 {
            1.0
        } else {
            (u.sin() / u).powi(2)
        }
    };
    let refine = |coarse: f64, fine: f64| fine + (fine - coarse) / 15.0;
    let log_part = |n| simpson(|v: f64| g0(v.exp()), z_low.ln(), 0.0, n);
    let head = refine(log_part(4000), log_part(8000));
    let upper = 2.0 * PI * 2000.0;
    let lin_part = |n| simpson(|z: f64| g0(z) / z, 1.0, upper, n);
    let body = refine(lin_part(400_000), lin_part(800_000));
    head + body + 1.0 / (upper * upper)
}

fn criterion_5() -> Outcome {
    let omega_low = TWO_PI * 10.0;
    let t = 100e-9;
    let (eta0, eta1) = match (
        eta_factor(Filter::Ramsey, 1.0, omega_low, t),
        eta_factor(Filter::Echo, 1.0, omega_low, t),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        other => return outcome(false, format!("eta evaluation failed: {other:?}")),
    };
    let oracle = eta0_oracle(omega_low * t);
    let ratio = (eta0 / eta1).sqrt();
    let pass = (eta1 - LN_2).abs() <= 1e-6
        && (eta0 / oracle - 1.0).abs() <= 0.10
        && (3.8..=4.8).contains(&ratio);
    outcome(
        pass,
        format!(
            "η1 = {eta1:.9} (ln 2 = {LN_2:.9}), η0 = {eta0:.5} (oracle {oracle:.5}), sqrt(η0/η1) = {ratio:.3}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut cfg = default_config();
    cfg.validate.n_traces = cfg.validate.n_traces.max(1000);
    let model = match cfg.build() {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("config: {e}")),
    };
    let start = Instant::now();
    let report = run_validation(&cfg, &model);
    let (fast, timing) = within_budget(start.elapsed(), Duration::from_secs(60));
    let report = match report {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("validation failed: {e}")),
    };
    let parts: Vec<String> = report
        .checks
        .iter()
        .map(|c| {
            let ns = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{:.1} ns", t * 1e9));
            format!(
                "{}: MC {} vs {} ({:.1}%)",
                c.protocol,
                ns(c.mc_t_s),
                ns(c.analytic_t_s),
                100.0 * c.rel_err.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let pass = report.a_omega > 0.0
        && report.n_traces >= 1000
        && report.checks.len() == 2
        && report
            .checks
            .iter()
            .all(|c| c.rel_err.is_some_and(|r| r <= 0.10))
        && fast;
    outcome(
        pass,
        format!("{} traces, {}, {timing}", report.n_traces, parts.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let arm = |name: &str, l: f64, color| LoopArm {
        name: name.into(),
        length_m: l * 1e-6,
        width_m: 2e-6,
        color,
    };
    let geom = LoopGeometry {
        arms: vec![
            arm("red", 60.0, ArmColor::Red),
            arm("blue", 140.0, ArmColor::Blue),
            arm("yellow", 60.0, ArmColor::Yellow),
        ],
        b_coeff: 1e-11,
    };
    let g = match geometry_model(&geom) {
        Ok(g) => g,
        Err(e) => return outcome(false, format!("geometry failed: {e}")),
    };
    let df = default_curves()
        .compute_point(FluxBias::new(0.5, 0.35))
        .unwrap()
        .d_sym_d_phi_x;
    let (_, c_tilde) = transform_z_to_ztilde(g.a_z, g.a_x, 0.0, df);
    let pass = g.c_zx == 0.0 && df > 0.0 && c_tilde < 0.0;
    outcome(
        pass,
        format!(
            "c_zx = {:e}, dF/dΦx = {df:.4}, c_z̃x = {c_tilde:.3e}",
            g.c_zx
        ),
    )
}

fn criterion_8() -> Outcome {
    let curves = default_curves();
    let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
    let cc = CriticalCurrentModel {
        a_ic: 4.0e-6,
        dln_delta_dln_ic: -4.0,
        dln_ip_dln_ic: 1.0,
        main_dln_delta_dln_ic: 0.0,
        main_dln_ip_dln_ic: 0.0,
    };
    let (az, ax) = (SQRT_AZ * SQRT_AZ, SQRT_AX * SQRT_AX);
    let mut ok = true;
    let mut parts = Vec::new();
    for phi_x in [0.30, 0.35, 0.40] {
        let sym = curves.symmetry_point(phi_x).unwrap();
        // search over |ε| <= 2Δ
        let p0 = curves.compute_point(FluxBias::new(sym, phi_x)).unwrap();
        let window = 2.0 * p0.delta / p0.d_eps_d_phi_z;
        let flux = tphi_argmax(&curves, phi_x, window, |z| {
            model_tphi(
                &curves,
                FluxBias::new(z, phi_x),
                az,
                ax,
                C_ZX,
                &eta,
                Filter::Ramsey,
            )
            .map(|t| t.unwrap_or(f64::INFINITY))
        });
        let ic = tphi_argmax(&curves, phi_x, window, |z| {
            let p = curves.compute_point(FluxBias::new(z, phi_x))?;
            Ok(
                gamma_phi_critical_current(&p, &curves, &cc, &eta, Filter::Ramsey)?
                    .t_phi
                    .unwrap_or(f64::INFINITY),
            )
        });
        match (flux, ic) {
            (Ok(f), Ok(i)) => {
                ok &= f < sym && i < sym;
                parts.push(format!(
                    "Φx {phi_x}: flux {:+.1} µΦ0, Ic {:+.1} µΦ0",
                    (f - sym) * 1e6,
                    (i - sym) * 1e6
                ));
            }
            other => {
                ok = false;
                parts.push(format!("Φx {phi_x}: {other:?}"));
            }
        }
    }
    outcome(ok, format!("argmax - Φz_sym: {}", parts.join("; ")))
}

/// ω01 from the spline tables and the closed-form symmetry point.
fn omega01_direct(curves: &QubitCurves, phi_z: f64, phi_x: f64) -> f64 {
    let d = curves.asymmetry();
    let sym = 0.5 + (d * (PI * phi_x).tan()).atan() / TWO_PI;
    let ip = curves.ip(phi_x).unwrap().0;
    let delta = curves.delta(phi_x).unwrap().0;
    let eps = 2.0 * PHI0 / HBAR * ip * (phi_z - sym);
    eps.hypot(delta)
}

fn criterion_9() -> Outcome {
    let curves = default_curves();
    let h = 1e-6;
    let deriv = |f: &dyn Fn(f64) -> f64| {
        let c = |s: f64| (f(s) - f(-s)) / (2.0 * s);
        let (coarse, fine) = (c(h), c(0.5 * h));
        (4.0 * fine - coarse) / 3.0
    };
    let mut worst = (0.0f64, 0.0f64);
    let mut count = 0;
    for i in 0..10 {
        let phi_x = 0.22 + 0.02 * i as f64;
        for j in 0..10 {
            // skip ε = 0, where ∂ω/∂Φz vanishes and the relative error is undefined
            let eps_ghz = [-3.0, -2.0, -1.0, -0.5, -0.2, 0.2, 0.5, 1.0, 2.0, 3.0][j];
            let p = curves
                .point_at_epsilon(phi_x, TWO_PI * 1e9 * eps_ghz)
                .unwrap();
            let (z, x) = (p.bias.phi_z, p.bias.phi_x);
            let fd_z = deriv(&|s| omega01_direct(&curves, z + s, x));
            let fd_x = deriv(&|s| omega01_direct(&curves, z, x + s));
            worst.0 = worst.0.max((p.d_omega_d_phi_z / fd_z - 1.0).abs());
            worst.1 = worst.1.max((p.d_omega_d_phi_x / fd_x - 1.0).abs());
            count += 1;
        }
    }
    outcome(
        count == 100 && worst.0 < 1e-6 && worst.1 < 1e-6,
        format!(
            "{count} points, worst relative error ∂/∂Φz {:.2e}, ∂/∂Φx {:.2e}",
            worst.0, worst.1
        ),
    )
}

fn criterion_10() -> Outcome {
    let curves = default_curves();
    let path = AnnealPath::AtEpsilon {
        phi_x_start: 0.44,
        phi_x_end: 0.20,
        epsilon: 0.0,
    };
    let rows = match anneal_schedule_export(
        &curves,
        &path,
        97,
        SQRT_AZ * SQRT_AZ,
        SQRT_AX * SQRT_AX,
        C_ZX,
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("schedule failed: {e}")),
    };
    let dominant = rows
        .iter()
        .all(|r| r.a_eps > r.a_delta_eps.abs() && r.a_eps > r.a_delta);
    let monotone = rows
        .windows(2)
        .all(|w| w[1].delta_hz < w[0].delta_hz && w[1].a_delta < w[0].a_delta);
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    let vanishing = last.a_delta / first.a_delta < 1e-2;
    outcome(
        dominant && monotone && vanishing,
        format!(
            "{} points, Δ/2π {:.2} GHz → {:.3} GHz, A_Δ {:.2e} → {:.2e}, A_ε dominant: {dominant}, monotone: {monotone}",
            rows.len(),
            first.delta_hz * 1e-9,
            last.delta_hz * 1e-9,
            first.a_delta,
            last.a_delta
        ),
    )
}

fn criterion_11() -> Outcome {
    let (omega_r, detuning, g, kappa) = (
        TWO_PI * 7.0e9,
        TWO_PI * 2.0e9,
        TWO_PI * 150e6,
        TWO_PI * 12.2e6,
    );
    let t1 = match t1_purcell(omega_r - detuning, omega_r, kappa, g) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("purcell failed: {e}")),
    };
    let oracle = (2e9f64 / 150e6).powi(2) / kappa;
    let pass = (t1 / 2.3e-6 - 1.0).abs() <= 0.02 && (t1 / oracle - 1.0).abs() < 1e-12;
    outcome(
        pass,
        format!("T1 = {:.3} µs (oracle {:.3} µs)", t1 * 1e6, oracle * 1e6),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("noise temperature of the attenuation chain", criterion_1),
        ("asymmetry fit round trip", criterion_2),
        ("flux-noise fit round trip", criterion_3),
        ("closed form versus quadrature", criterion_4),
        ("filter integrals", criterion_5),
        ("Monte-Carlo decay times", criterion_6),
        ("loop-geometry correlation", criterion_7),
        ("dephasing optimum left of symmetry", criterion_8),
        ("analytic versus finite-difference sensitivity", criterion_9),
        ("annealing noise ordering", criterion_10),
        ("Purcell arithmetic", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
