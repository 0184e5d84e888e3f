//! `fluxcoh` command-line front end.
//!
//! Numbers in CSV files use Rust's shortest round-trip exponent form
//! (`{:e}`, e.g. `2.5e-6`); infinite or undefined times are empty cells.
//! JSON uses `null` for the same values.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::annealing_noise::{anneal_noise, anneal_schedule_export, AnnealNoisePoint, AnnealPath};
use crate::config::{Format, Model, RunConfig};
use crate::constants::TWO_PI;
use crate::decoherence::{
    a_omega_flux, chi, coherence_budget_with, combine_t1, relaxation_rates, tphi_quadrature,
    CoherenceBudget, DephasingMethod, DephasingRow, Filter, NoiseEnvironment, T1Budget,
};
use crate::estimation::{fit_asymmetry, fit_flux_noise, read_coherence_csv, read_symmetry_csv};
use crate::mc_oracle::{
    decay_time_1e, simulate_decay, synthesize, DecaySample, TrajectoryEnsemble,
};
use crate::noise_psd::PsdModel;
use crate::qubit_model::QubitPoint;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

/// Environment variable that sets the worker-pool size.
pub const WORKERS_ENV: &str = "FLUXQ_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "fluxcoh",
    version,
    about = "Flux-qubit coherence budgets, sweeps and noise fits"
)]
pub struct Cli {
    /// TOML configuration; the built-in paper-like device if omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key by dotted path, e.g. `--set bias.phi_x=0.35`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory for all output files; overrides `output.dir`.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full T1 and Tφ budget at one bias point.
    Budget {
        #[arg(long)]
        phi_x: Option<f64>,
        #[arg(long, conflicts_with = "epsilon_hz")]
        phi_z: Option<f64>,
        #[arg(long)]
        epsilon_hz: Option<f64>,
    },
    /// Budget along the configured sweep axis.
    Sweep,
    /// Fit flux-noise parameters or the junction asymmetry to a CSV dataset.
    Fit {
        data: PathBuf,
        /// Dataset type; detected from the header when omitted.
        #[arg(long, value_enum)]
        kind: Option<DataKind>,
    },
    /// Compare Monte-Carlo decay with the filter-function prediction.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_traces: Option<usize>,
    },
    /// Noise on the annealing parameters along the configured path.
    Anneal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Coherence,
    Symmetry,
}

/// Exit code for an error raised while running a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Data(_) | Error::Io(_) => EXIT_DATA,
        Error::NonConvergence(_) | Error::Unidentifiable(_) | Error::NoBracket { .. } => {
            EXIT_CONVERGENCE
        }
        _ => EXIT_CONFIG,
    }
}

fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got '{v}'"
        ))
    })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let prepared = load(&cli).and_then(|cfg| {
        let model = cfg.build()?;
        Ok((cfg, model))
    });
    let (cfg, model) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let result = match &cli.command {
        Command::Budget { .. } => cmd_budget(&cfg, &model, &out).map(|_| EXIT_OK),
        Command::Sweep => cmd_sweep(&cfg, &model, &out).map(|_| EXIT_OK),
        Command::Fit { data, kind } => cmd_fit(&cfg, &model, data, *kind, &out).map(|_| EXIT_OK),
        Command::Validate { .. } => {
            cmd_validate(&cfg, &model, &out).map(|r| if r.pass { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Anneal => cmd_anneal(&cfg, &model, &out).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.set.clone();
    match &cli.command {
        Command::Validate { seed, n_traces } => {
            if let Some(s) = seed {
                overrides.push(format!("validate.seed={s}"));
            }
            if let Some(n) = n_traces {
                overrides.push(format!("validate.n_traces={n}"));
            }
        }
        Command::Budget { phi_x, .. } => {
            if let Some(x) = phi_x {
                overrides.push(format!("bias.phi_x={x:e}"));
            }
        }
        _ => {}
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Command::Budget {
        phi_z, epsilon_hz, ..
    } = &cli.command
    {
        if phi_z.is_some() {
            cfg.bias.phi_z = *phi_z;
            cfg.bias.epsilon_hz = None;
        }
        if epsilon_hz.is_some() {
            cfg.bias.epsilon_hz = *epsilon_hz;
            cfg.bias.phi_z = None;
        }
    }
    Ok(cfg)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, contents)?;
    Ok(p)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serializing {name}: {e}")))?;
    s.push('\n');
    write_file(dir, name, &s)
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// T1 budget restricted to the enabled channels.
pub fn t1_with_toggles(point: &QubitPoint, model: &Model, g: Option<f64>) -> Result<T1Budget> {
    let rates: Vec<_> = relaxation_rates(point, &model.env, g)?
        .into_iter()
        .filter(|r| model.toggles.enabled(r.channel))
        .collect();
    if rates.is_empty() {
        return Ok(T1Budget {
            gamma1: 0.0,
            t1: None,
            rows: Vec::new(),
        });
    }
    combine_t1(&rates)
}

fn budget_with(
    model: &Model,
    point: &QubitPoint,
    method: DephasingMethod,
    envelopes: bool,
) -> Result<CoherenceBudget> {
    let env = NoiseEnvironment {
        method,
        ..model.env.clone()
    };
    let mut b = coherence_budget_with(
        &model.curves,
        point.bias,
        &env,
        model.readout.as_ref(),
        envelopes,
    )?;
    b.t1 = t1_with_toggles(&b.point, model, b.coupling_g)?;
    Ok(b)
}

fn intrinsic_powers(env: &NoiseEnvironment) -> (f64, f64) {
    let amp = |m: &PsdModel| match m {
        PsdModel::OneOverF { amplitude, .. } => *amplitude,
        _ => 0.0,
    };
    (amp(&env.flux.intrinsic_z), amp(&env.flux.intrinsic_x))
}

#[derive(Debug, Clone, Serialize)]
pub struct DephasingSummary {
    pub t_phi_ramsey_s: Option<f64>,
    pub t_phi_echo_s: Option<f64>,
    pub mechanisms: Vec<DephasingRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub point: QubitPoint,
    pub omega01_hz: f64,
    pub coupling_g_hz: Option<f64>,
    pub t1: T1Budget,
    pub quadrature: DephasingSummary,
    /// `None` when the closed form does not apply (e.g. unequal exponents).
    pub closed_form: Option<DephasingSummary>,
    pub closed_form_note: Option<String>,
    pub annealing_noise: AnnealNoisePoint,
    pub geometry: Option<crate::noise_psd::GeometryNoise>,
}

fn summary(b: &CoherenceBudget) -> DephasingSummary {
    DephasingSummary {
        t_phi_ramsey_s: b.dephasing.t_phi_ramsey,
        t_phi_echo_s: b.dephasing.t_phi_echo,
        mechanisms: b.dephasing_rows.clone(),
    }
}

pub fn budget_report(cfg: &RunConfig, model: &Model) -> Result<(BudgetReport, CoherenceBudget)> {
    let point = cfg.bias.resolve(&model.curves)?;
    let quad = budget_with(model, &point, DephasingMethod::Quadrature, true)?;
    let (closed_form, closed_form_note) =
        match budget_with(model, &point, DephasingMethod::ClosedForm, false) {
            Ok(b) => (Some(summary(&b)), None),
            Err(e @ Error::InvalidInput(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
    let (az, ax) = intrinsic_powers(&model.env);
    let report = BudgetReport {
        point: quad.point,
        omega01_hz: quad.point.omega01 / TWO_PI,
        coupling_g_hz: quad.coupling_g.map(|g| g / TWO_PI),
        t1: quad.t1.clone(),
        quadrature: summary(&quad),
        closed_form,
        closed_form_note,
        annealing_noise: anneal_noise(&quad.point, az, ax, model.env.flux.c_zx)?,
        geometry: model.geometry,
    };
    Ok((report, quad))
}

fn fmt_time(t: Option<f64>) -> String {
    match t {
        None => "inf".into(),
        Some(t) if t >= 1e-3 => format!("{:.3} ms", t * 1e3),
        Some(t) if t >= 1e-6 => format!("{:.3} us", t * 1e6),
        Some(t) => format!("{:.3} ns", t * 1e9),
    }
}

pub fn render_budget(r: &BudgetReport) -> String {
    let mut s = String::new();
    let p = &r.point;
    let _ = writeln!(
        s,
        "bias phi_z = {:.6}, phi_x = {:.4}   omega01/2pi = {:.4} GHz   eps/2pi = {:.4} GHz   Delta/2pi = {:.4} GHz",
        p.bias.phi_z,
        p.bias.phi_x,
        r.omega01_hz / 1e9,
        p.epsilon / TWO_PI / 1e9,
        p.delta / TWO_PI / 1e9
    );
    if let Some(g) = r.coupling_g_hz {
        let _ = writeln!(s, "qubit-resonator coupling g/2pi = {:.1} MHz", g / 1e6);
    }
    let _ = writeln!(s, "\nT1 = {}", fmt_time(r.t1.t1));
    let _ = writeln!(
        s,
        "  {:<14} {:>12} {:>12} {:>9}",
        "channel", "gamma (1/s)", "T1", "fraction"
    );
    for row in &r.t1.rows {
        let _ = writeln!(
            s,
            "  {:<14} {:>12.4e} {:>12} {:>9.4}",
            row.channel,
            row.gamma,
            fmt_time(row.time),
            row.fraction
        );
    }
    let table = |s: &mut String, title: &str, d: &DephasingSummary| {
        let _ = writeln!(s, "\nTphi ({title})");
        let _ = writeln!(s, "  {:<18} {:>12} {:>12}", "mechanism", "Ramsey", "echo");
        for m in &d.mechanisms {
            let mark = if m.included { "" } else { " (not in total)" };
            let _ = writeln!(
                s,
                "  {:<18} {:>12} {:>12}{mark}",
                m.mechanism,
                fmt_time(m.t_phi_ramsey),
                fmt_time(m.t_phi_echo)
            );
        }
    };
    table(&mut s, "quadrature", &r.quadrature);
    match (&r.closed_form, &r.closed_form_note) {
        (Some(c), _) => table(&mut s, "closed form", c),
        (None, Some(n)) => {
            let _ = writeln!(s, "\nTphi (closed form): not available: {n}");
        }
        _ => {}
    }
    let a = &r.annealing_noise;
    let _ = writeln!(
        s,
        "\nannealing noise at 1 Hz ((rad/s)^2/Hz): A_eps = {:.4e}, A_Delta = {:.4e}, A_Delta_eps = {:.4e}",
        a.a_eps, a.a_delta, a.a_delta_eps
    );
    s
}

fn envelope_csv(samples: &[(f64, f64)]) -> String {
    csv_table(
        &["tau_s", "envelope"],
        samples.iter().map(|(t, e)| vec![num(*t), num(*e)]),
    )
}

pub fn cmd_budget(cfg: &RunConfig, model: &Model, out: &Path) -> Result<BudgetReport> {
    let (report, quad) = budget_report(cfg, model)?;
    if cfg.wants(Format::Json) {
        write_json(out, "budget.json", &report)?;
    }
    if cfg.wants(Format::Csv) {
        let t1 = csv_table(
            &["channel", "gamma_per_s", "t1_s", "fraction"],
            report.t1.rows.iter().map(|r| {
                vec![
                    r.channel.clone(),
                    num(r.gamma),
                    opt(r.time),
                    num(r.fraction),
                ]
            }),
        );
        write_file(out, "budget_t1.csv", &t1)?;
        let mut rows = Vec::new();
        for (method, d) in [
            ("quadrature", Some(&report.quadrature)),
            ("closed_form", report.closed_form.as_ref()),
        ] {
            if let Some(d) = d {
                for m in &d.mechanisms {
                    rows.push(vec![
                        method.to_string(),
                        m.mechanism.clone(),
                        opt(m.t_phi_ramsey),
                        opt(m.t_phi_echo),
                        m.included.to_string(),
                    ]);
                }
            }
        }
        write_file(
            out,
            "budget_dephasing.csv",
            &csv_table(
                &[
                    "method",
                    "mechanism",
                    "tphi_ramsey_s",
                    "tphi_echo_s",
                    "included",
                ],
                rows,
            ),
        )?;
        write_file(
            out,
            "envelope_ramsey.csv",
            &envelope_csv(&quad.dephasing.samples_ramsey),
        )?;
        write_file(
            out,
            "envelope_echo.csv",
            &envelope_csv(&quad.dephasing.samples_echo),
        )?;
    }
    print!("{}", render_budget(&report));
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub phi_z: f64,
    pub phi_x: f64,
    pub omega01_hz: f64,
    pub t1_total_s: Option<f64>,
    /// `(channel, T1)` for each enabled channel, in a fixed order.
    pub t1_channels: Vec<(String, Option<f64>)>,
    pub tphi_ramsey_s: Option<f64>,
    pub tphi_echo_s: Option<f64>,
}

pub fn sweep_rows(cfg: &RunConfig, model: &Model) -> Result<Vec<SweepRow>> {
    let points = cfg.sweep_points(&model.curves)?;
    points
        .par_iter()
        .map(|p| {
            let b = budget_with(model, p, model.env.method, false)?;
            let mut channels: Vec<(String, Option<f64>)> =
                b.t1.rows
                    .iter()
                    .map(|r| (r.channel.clone(), r.time))
                    .collect();
            channels.sort_by(|a, b| a.0.cmp(&b.0));
            Ok(SweepRow {
                phi_z: p.bias.phi_z,
                phi_x: p.bias.phi_x,
                omega01_hz: p.omega01 / TWO_PI,
                t1_total_s: b.t1.t1,
                t1_channels: channels,
                tphi_ramsey_s: b.dephasing.t_phi_ramsey,
                tphi_echo_s: b.dephasing.t_phi_echo,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let names: Vec<String> = rows
        .first()
        .map(|r| {
            r.t1_channels
                .iter()
                .map(|(c, _)| format!("t1_{c}_s"))
                .collect()
        })
        .unwrap_or_default();
    let mut header = vec!["phi_z", "phi_x", "omega01_hz", "t1_total_s"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["tphi_ramsey_s", "tphi_echo_s"]);
    csv_table(
        &header,
        rows.iter().map(|r| {
            let mut v = vec![
                num(r.phi_z),
                num(r.phi_x),
                num(r.omega01_hz),
                opt(r.t1_total_s),
            ];
            v.extend(r.t1_channels.iter().map(|(_, t)| opt(*t)));
            v.push(opt(r.tphi_ramsey_s));
            v.push(opt(r.tphi_echo_s));
            v
        }),
    )
}

pub fn cmd_sweep(cfg: &RunConfig, model: &Model, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = sweep_rows(cfg, model)?;
    if cfg.wants(Format::Csv) {
        let p = write_file(out, "sweep.csv", &sweep_csv(&rows))?;
        println!("wrote {} rows to {}", rows.len(), p.display());
    }
    if cfg.wants(Format::Json) {
        write_json(out, "sweep.json", &rows)?;
    }
    Ok(rows)
}

fn detect_kind(path: &Path) -> Result<DataKind> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.contains(&"t_phi_s") {
        Ok(DataKind::Coherence)
    } else if cols.contains(&"phi_z_sym") {
        Ok(DataKind::Symmetry)
    } else {
        Err(Error::Data(format!(
            "{}: header has neither a t_phi_s column (coherence data) nor a phi_z_sym column (symmetry data)",
            path.display()
        )))
    }
}

pub fn cmd_fit(
    cfg: &RunConfig,
    model: &Model,
    data: &Path,
    kind: Option<DataKind>,
    out: &Path,
) -> Result<()> {
    let kind = match kind {
        Some(k) => k,
        None => detect_kind(data)?,
    };
    match kind {
        DataKind::Coherence => {
            let rows = read_coherence_csv(data)?;
            let fit = fit_flux_noise(&rows, &model.curves, &cfg.fit_options())?;
            write_json(out, "fit.json", &fit)?;
            if cfg.wants(Format::Csv) {
                let csv = csv_table(
                    &["phi_z", "phi_x", "protocol", "t_phi_s", "log_residual"],
                    rows.iter().zip(&fit.residuals).map(|(r, res)| {
                        let proto = match r.protocol {
                            crate::estimation::Protocol::Ramsey => "ramsey",
                            crate::estimation::Protocol::Echo => "echo",
                        };
                        vec![
                            num(r.phi_z),
                            num(r.phi_x),
                            proto.into(),
                            num(r.t_phi_s),
                            num(*res),
                        ]
                    }),
                );
                write_file(out, "fit_residuals.csv", &csv)?;
            }
            println!(
                "sqrt(A_z) = {:.3} +- {:.3} uPhi0/rtHz, sqrt(A_x) = {:.3} +- {:.3} uPhi0/rtHz, c_zx = {:.3} +- {:.3}",
                fit.sqrt_a_z * 1e6,
                fit.std_err[0] * 1e6,
                fit.sqrt_a_x * 1e6,
                fit.std_err[1] * 1e6,
                fit.c_zx,
                fit.std_err[2]
            );
        }
        DataKind::Symmetry => {
            let rows = read_symmetry_csv(data)?;
            let fit = fit_asymmetry(&rows)?;
            write_json(out, "fit.json", &fit)?;
            println!("d = {:.5} +- {:.5}", fit.d, fit.sigma_d);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolCheck {
    pub protocol: &'static str,
    pub mc_t_s: Option<f64>,
    pub analytic_t_s: Option<f64>,
    pub rel_err: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub phi_z: f64,
    pub phi_x: f64,
    /// 1/f frequency-noise power at 1 Hz, (rad/s)²/Hz.
    pub a_omega: f64,
    pub alpha: f64,
    pub synth_alpha: f64,
    pub n_traces: usize,
    pub seed: u64,
    pub dt_s: Option<f64>,
    pub tolerance: f64,
    pub checks: Vec<ProtocolCheck>,
    pub pass: bool,
    #[serde(skip)]
    pub curves: Vec<Vec<(DecaySample, f64)>>,
}

/// Monte-Carlo versus quadrature comparison for intrinsic 1/f flux noise
/// projected onto the qubit frequency at the validation bias.
pub fn run_validation(cfg: &RunConfig, model: &Model) -> Result<ValidateReport> {
    let v = &cfg.validate;
    let point = cfg.validate_bias().resolve(&model.curves)?;
    let (az, ax, alpha) = model
        .env
        .intrinsic_one_over_f()
        .map_err(|e| Error::Config(format!("validate: {e}")))?;
    let a_omega = a_omega_flux(&point, az, ax, model.env.flux.c_zx);
    let synth_alpha = v.synth_alpha.unwrap_or(alpha);
    let omega_low = model.env.omega_low;
    let mut report = ValidateReport {
        phi_z: point.bias.phi_z,
        phi_x: point.bias.phi_x,
        a_omega,
        alpha,
        synth_alpha,
        n_traces: v.n_traces,
        seed: v.seed,
        dt_s: None,
        tolerance: v.tolerance,
        checks: Vec::new(),
        pass: true,
        curves: vec![Vec::new(), Vec::new()],
    };
    let filters = [(Filter::Ramsey, "ramsey"), (Filter::Echo, "echo")];
    if !(a_omega > 0.0) {
        for (_, name) in filters {
            report.checks.push(ProtocolCheck {
                protocol: name,
                mc_t_s: None,
                analytic_t_s: None,
                rel_err: None,
                pass: true,
            });
        }
        return Ok(report);
    }
    let s = move |w: f64| a_omega * (TWO_PI / w).powf(alpha);
    let analytic: Vec<f64> = filters
        .iter()
        .map(|(f, _)| tphi_quadrature(&s, *f, omega_low).map(|c| c.t_phi))
        .collect::<Result<_>>()?;
    let dt = analytic[0] / v.steps_per_tphi as f64;
    let horizon = 2.5 * analytic.iter().cloned().fold(0.0, f64::max);
    let n_samples = (horizon / dt).ceil() as usize + 3;
    let ensemble = TrajectoryEnsemble {
        dt,
        n_samples,
        n_traces: v.n_traces,
        seed: v.seed,
        target: PsdModel::OneOverF {
            amplitude: a_omega,
            alpha: synth_alpha,
        },
        omega_low,
        fft_len: (2 * n_samples).next_power_of_two(),
        low_bins_per_decade: 16,
    };
    let traces = synthesize(&ensemble)?;
    report.dt_s = Some(dt);
    for (k, ((filter, name), t_analytic)) in filters.iter().zip(&analytic).enumerate() {
        let span = 2.5 * t_analytic;
        let taus: Vec<f64> = (0..v.tau_points)
            .map(|i| span * i as f64 / (v.tau_points - 1) as f64)
            .collect();
        let mc = simulate_decay(&traces, 1.0, *filter, &taus)?;
        let curve = mc
            .iter()
            .map(|m| {
                let a = if m.tau > 0.0 {
                    (-chi(&s, *filter, m.tau, omega_low)?).exp()
                } else {
                    1.0
                };
                Ok((*m, a))
            })
            .collect::<Result<Vec<_>>>()?;
        let mc_t = decay_time_1e(&mc).ok();
        let rel = mc_t.map(|t| (t / t_analytic - 1.0).abs());
        let pass = rel.is_some_and(|r| r <= v.tolerance);
        report.pass &= pass;
        report.checks.push(ProtocolCheck {
            protocol: name,
            mc_t_s: mc_t,
            analytic_t_s: Some(*t_analytic),
            rel_err: rel,
            pass,
        });
        report.curves[k] = curve;
    }
    Ok(report)
}

pub fn cmd_validate(cfg: &RunConfig, model: &Model, out: &Path) -> Result<ValidateReport> {
    let report = run_validation(cfg, model)?;
    if cfg.wants(Format::Csv) {
        for (k, name) in ["ramsey", "echo"].iter().enumerate() {
            let csv = csv_table(
                &["tau_s", "mc_envelope", "mc_stderr", "analytic_envelope"],
                report.curves[k]
                    .iter()
                    .map(|(m, a)| vec![num(m.tau), num(m.envelope), num(m.stderr), num(*a)]),
            );
            write_file(out, &format!("validate_{name}.csv"), &csv)?;
        }
    }
    if cfg.wants(Format::Json) {
        write_json(out, "validate.json", &report)?;
    }
    for c in &report.checks {
        println!(
            "{} {}: mc = {}, analytic = {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.protocol,
            fmt_time(c.mc_t_s),
            fmt_time(c.analytic_t_s)
        );
    }
    Ok(report)
}

pub fn cmd_anneal(cfg: &RunConfig, model: &Model, out: &Path) -> Result<()> {
    let a = cfg
        .anneal
        .as_ref()
        .ok_or_else(|| Error::Config("no [anneal] section".into()))?;
    let path = AnnealPath::AtEpsilon {
        phi_x_start: a.phi_x_start,
        phi_x_end: a.phi_x_end,
        epsilon: TWO_PI * a.epsilon_hz,
    };
    let (az, ax) = intrinsic_powers(&model.env);
    let rows =
        anneal_schedule_export(&model.curves, &path, a.samples, az, ax, model.env.flux.c_zx)?;
    if cfg.wants(Format::Csv) {
        let csv = csv_table(
            &["s", "delta_hz", "eps_hz", "a_eps", "a_delta", "a_delta_eps"],
            rows.iter().map(|r| {
                vec![
                    num(r.s),
                    num(r.delta_hz),
                    num(r.eps_hz),
                    num(r.a_eps),
                    num(r.a_delta),
                    num(r.a_delta_eps),
                ]
            }),
        );
        let p = write_file(out, "anneal.csv", &csv)?;
        println!("wrote {} rows to {}", rows.len(), p.display());
    }
    if cfg.wants(Format::Json) {
        write_json(out, "anneal.json", &json!({ "path": path, "rows": rows }))?;
    }
    Ok(())
}
