//! Run configuration: TOML schema, dotted-path overrides, unit conversion
//! and up-front validation.
//!
//! Frequencies in the file are plain Hz and are converted to rad/s here;
//! inductances are in pH, critical currents in µA, lengths in µm where the
//! key says so.

use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::decoherence::{
    Channel, ChargeChannel, CriticalCurrentModel, DephasingMethod, NoiseEnvironment, Readout,
    ReadoutCoupling, ShotNoise,
};
use crate::estimation::FitOptions;
use crate::noise_psd::{
    compose_flux_psd, geometry_model, ArmColor, AttenuationChain, AttenuationStage, FluxNoiseSpec,
    GeometryNoise, LoopArm, LoopGeometry, Mutuals, PsdModel,
};
use crate::qubit_model::{FluxBias, QubitCurves, QubitPoint};
use crate::resonator::{quarter_wave_length, ResonatorParams, SquidParams};
use crate::{Error, Result};

/// Built-in configuration used when no file is given.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

const PH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub resonator: Option<ResonatorConfig>,
    pub squid: Option<SquidConfig>,
    pub noise: NoiseConfig,
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub dephasing: DephasingConfig,
    #[serde(default)]
    pub bias: BiasConfig,
    pub sweep: Option<SweepConfig>,
    pub anneal: Option<AnnealConfig>,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub phi_x: Vec<f64>,
    pub ip_amps: Vec<f64>,
    pub delta_hz: Vec<f64>,
    pub asymmetry_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub omega_r_hz: f64,
    pub kappa_hz: f64,
    pub z0_ohm: f64,
    pub vph_m_s: f64,
    /// Defaults to a quarter wavelength at the resonator frequency.
    pub length_m: Option<f64>,
    pub mqr_ph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidConfig {
    pub ic_ua: f64,
    pub lg_ph: f64,
    #[serde(default)]
    pub phi_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneOverFConfig {
    #[serde(rename = "amp_phi0_per_rtHz")]
    pub amp_phi0_per_rt_hz: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicConfig {
    pub z: OneOverFConfig,
    pub x: OneOverFConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub t_k: f64,
    pub atten_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasLineConfig {
    pub z0_ohm: f64,
    pub lb_ph: f64,
    pub chain: Vec<StageConfig>,
    pub source_t_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLoop<T> {
    pub z: Option<T>,
    pub x: Option<T>,
}

impl<T> Default for PerLoop<T> {
    fn default() -> Self {
        Self { z: None, x: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(rename = "av_v_rtHz")]
    pub av_v_rt_hz: f64,
    pub sv0_v2_hz: f64,
    pub lpf_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualsConfig {
    #[serde(default)]
    pub mzz_ph: f64,
    #[serde(default)]
    pub mzx_ph: f64,
    #[serde(default)]
    pub mxz_ph: f64,
    #[serde(default)]
    pub mxx_ph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OhmicConfig {
    pub coefficient: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeConfig {
    pub coefficient: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    pub temperature_k: f64,
    /// Transverse matrix element, rad/s per unit of charge noise.
    pub coupling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OhmicSection {
    pub z: Option<OhmicConfig>,
    pub x: Option<OhmicConfig>,
    pub charge: Option<ChargeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalCurrentConfig {
    pub a_ic: f64,
    #[serde(default = "default_g_delta")]
    pub dln_delta_dln_ic: f64,
    #[serde(default = "one")]
    pub dln_ip_dln_ic: f64,
    #[serde(default)]
    pub main_dln_delta_dln_ic: f64,
    #[serde(default)]
    pub main_dln_ip_dln_ic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub chi_hz: f64,
    pub nbar: f64,
}

/// Relaxation channels to include in T1 totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelToggles {
    pub flux_z_1f: bool,
    pub flux_x_1f: bool,
    pub biasline_z: bool,
    pub biasline_x: bool,
    pub purcell: bool,
    pub ohmic_flux_z: bool,
    pub ohmic_flux_x: bool,
    pub ohmic_charge: bool,
}

impl Default for ChannelToggles {
    fn default() -> Self {
        Self {
            flux_z_1f: true,
            flux_x_1f: true,
            biasline_z: true,
            biasline_x: true,
            purcell: true,
            ohmic_flux_z: true,
            ohmic_flux_x: true,
            ohmic_charge: true,
        }
    }
}

impl ChannelToggles {
    pub fn enabled(&self, c: Channel) -> bool {
        match c {
            Channel::FluxZ1f => self.flux_z_1f,
            Channel::FluxX1f => self.flux_x_1f,
            Channel::BiaslineZ => self.biasline_z,
            Channel::BiaslineX => self.biasline_x,
            Channel::Purcell => self.purcell,
            Channel::OhmicFluxZ => self.ohmic_flux_z,
            Channel::OhmicFluxX => self.ohmic_flux_x,
            Channel::OhmicCharge => self.ohmic_charge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub intrinsic: IntrinsicConfig,
    #[serde(default)]
    pub correlation_czx: f64,
    #[serde(default)]
    pub biasline: PerLoop<BiasLineConfig>,
    #[serde(default)]
    pub source: PerLoop<SourceConfig>,
    #[serde(default)]
    pub mutuals: MutualsConfig,
    #[serde(default = "one")]
    pub r_z_ohm: f64,
    #[serde(default = "one")]
    pub r_x_ohm: f64,
    #[serde(default)]
    pub ohmic: OhmicSection,
    pub critical_current: Option<CriticalCurrentConfig>,
    pub shot: Option<ShotConfig>,
    #[serde(default)]
    pub channels: ChannelToggles,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub l_um: f64,
    pub w_um: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub arms: Vec<ArmConfig>,
    pub b_coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DephasingConfig {
    pub method: DephasingMethod,
    /// Infrared cutoff, Hz.
    pub f_low_hz: f64,
    pub t_typ_s: f64,
    pub include_second_order: bool,
}

impl Default for DephasingConfig {
    fn default() -> Self {
        Self {
            method: DephasingMethod::Quadrature,
            f_low_hz: 10.0,
            t_typ_s: 100e-9,
            include_second_order: false,
        }
    }
}

/// Operating point: `phi_x` plus either `phi_z` or a detuning `epsilon_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasConfig {
    pub phi_x: f64,
    pub phi_z: Option<f64>,
    pub epsilon_hz: Option<f64>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            phi_x: 0.32,
            phi_z: None,
            epsilon_hz: None,
        }
    }
}

impl BiasConfig {
    pub fn resolve(&self, curves: &QubitCurves) -> Result<QubitPoint> {
        match (self.phi_z, self.epsilon_hz) {
            (Some(_), Some(_)) => Err(Error::Config(
                "bias: give phi_z or epsilon_hz, not both".into(),
            )),
            (Some(z), None) => curves.compute_point(FluxBias::new(z, self.phi_x)),
            (None, e) => curves.point_at_epsilon(self.phi_x, TWO_PI * e.unwrap_or(0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PhiZ,
    PhiX,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Inclusive range: Φ0 for flux axes, Hz for `delta`.
    pub range: [f64; 2],
    pub samples: usize,
    /// Fixed Φx for a `phi_z` sweep; defaults to `bias.phi_x`.
    pub phi_x: Option<f64>,
    /// Detuning held along `phi_x` and `delta` sweeps, Hz.
    #[serde(default)]
    pub epsilon_hz: f64,
    /// For `phi_z` sweeps, measure the range from the symmetry point.
    #[serde(default = "yes")]
    pub relative_to_symmetry: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealConfig {
    pub phi_x_start: f64,
    pub phi_x_end: f64,
    #[serde(default)]
    pub epsilon_hz: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub n_traces: usize,
    pub seed: u64,
    /// Operating point of the comparison; defaults to `bias`.
    pub phi_x: Option<f64>,
    pub epsilon_hz: Option<f64>,
    /// Time steps per analytic Ramsey Tφ.
    pub steps_per_tphi: usize,
    pub tau_points: usize,
    pub tolerance: f64,
    /// Exponent used for the synthesized traces; defaults to the model's.
    pub synth_alpha: Option<f64>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            n_traces: 1000,
            seed: 1,
            phi_x: None,
            epsilon_hz: None,
            steps_per_tphi: 100,
            tau_points: 60,
            tolerance: 0.10,
            synth_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "fluxcoh-out".into(),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_g_delta() -> f64 {
    -4.0
}

/// Everything the commands need, in internal units.
#[derive(Debug, Clone)]
pub struct Model {
    pub curves: QubitCurves,
    pub env: NoiseEnvironment,
    pub readout: Option<ReadoutCoupling>,
    pub geometry: Option<GeometryNoise>,
    pub toggles: ChannelToggles,
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    // TOML literal if it parses as one, bare string otherwise
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

impl RunConfig {
    /// Parse TOML text and apply `key=value` overrides by dotted path.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        // schema errors from the raw text carry line numbers
        let base: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set_dotted(&mut table, &k, v)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {e}")))
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => DEFAULT_CONFIG.to_string(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn curves(&self) -> Result<QubitCurves> {
        let d = &self.device;
        QubitCurves::from_hz(&d.phi_x, &d.ip_amps, &d.delta_hz, d.asymmetry_d)
            .map_err(|e| ctx("device", e))
    }

    pub fn flux_spec(&self) -> FluxNoiseSpec {
        let n = &self.noise;
        let one_f = |c: &OneOverFConfig| PsdModel::OneOverF {
            amplitude: c.amp_phi0_per_rt_hz * c.amp_phi0_per_rt_hz,
            alpha: c.alpha,
        };
        let biasline = |b: &BiasLineConfig| PsdModel::BiasLine {
            z0_ohm: b.z0_ohm,
            inductance_h: b.lb_ph * PH,
            chain: AttenuationChain {
                stages: b
                    .chain
                    .iter()
                    .map(|s| AttenuationStage {
                        temperature_k: s.t_k,
                        atten_db: s.atten_db,
                    })
                    .collect(),
                source_temperature_k: b.source_t_k,
            },
        };
        let source = |s: &SourceConfig| PsdModel::FilteredSource {
            a_v: s.av_v_rt_hz * s.av_v_rt_hz,
            s_v0: s.sv0_v2_hz,
            omega_l: TWO_PI * s.lpf_hz,
        };
        FluxNoiseSpec {
            intrinsic_z: one_f(&n.intrinsic.z),
            intrinsic_x: one_f(&n.intrinsic.x),
            c_zx: n.correlation_czx,
            mutuals: Mutuals {
                zz: n.mutuals.mzz_ph * PH,
                zx: n.mutuals.mzx_ph * PH,
                xz: n.mutuals.mxz_ph * PH,
                xx: n.mutuals.mxx_ph * PH,
            },
            r_z_ohm: n.r_z_ohm,
            r_x_ohm: n.r_x_ohm,
            source_z: n.source.z.as_ref().map(source),
            source_x: n.source.x.as_ref().map(source),
            biasline_z: n.biasline.z.as_ref().map(biasline),
            biasline_x: n.biasline.x.as_ref().map(biasline),
        }
    }

    pub fn readout(&self) -> Result<Option<Readout>> {
        match (&self.resonator, &self.squid) {
            (None, None) => Ok(None),
            (Some(r), Some(s)) => {
                let omega_r = TWO_PI * r.omega_r_hz;
                Ok(Some(Readout {
                    resonator: ResonatorParams {
                        omega_r,
                        kappa: TWO_PI * r.kappa_hz,
                        z0_ohm: r.z0_ohm,
                        vph: r.vph_m_s,
                        length: r
                            .length_m
                            .unwrap_or_else(|| quarter_wave_length(omega_r, r.vph_m_s)),
                        m_qr: r.mqr_ph * PH,
                    },
                    squid: SquidParams {
                        i_c: s.ic_ua * 1e-6,
                        l_g: s.lg_ph * PH,
                        phi_r: s.phi_r,
                    },
                }))
            }
            _ => Err(Error::Config(
                "resonator and squid sections must be given together".into(),
            )),
        }
    }

    pub fn environment(&self) -> Result<NoiseEnvironment> {
        let n = &self.noise;
        let ohmic = |o: &OhmicConfig| PsdModel::Ohmic {
            coefficient: o.coefficient,
            gamma: o.gamma,
            temperature_k: o.temperature_k,
        };
        Ok(NoiseEnvironment {
            flux: self.flux_spec(),
            ohmic_flux_z: n.ohmic.z.as_ref().map(ohmic),
            ohmic_flux_x: n.ohmic.x.as_ref().map(ohmic),
            ohmic_charge: n.ohmic.charge.as_ref().map(|c| ChargeChannel {
                psd: PsdModel::Ohmic {
                    coefficient: c.coefficient,
                    gamma: c.gamma,
                    temperature_k: c.temperature_k,
                },
                coupling: c.coupling,
            }),
            readout: self.readout()?,
            critical_current: n.critical_current.map(|c| CriticalCurrentModel {
                a_ic: c.a_ic,
                dln_delta_dln_ic: c.dln_delta_dln_ic,
                dln_ip_dln_ic: c.dln_ip_dln_ic,
                main_dln_delta_dln_ic: c.main_dln_delta_dln_ic,
                main_dln_ip_dln_ic: c.main_dln_ip_dln_ic,
            }),
            shot_noise: n.shot.map(|s| ShotNoise {
                chi_disp: TWO_PI * s.chi_hz,
                nbar: s.nbar,
            }),
            include_second_order: self.dephasing.include_second_order,
            omega_low: TWO_PI * self.dephasing.f_low_hz,
            t_typ: self.dephasing.t_typ_s,
            method: self.dephasing.method,
        })
    }

    pub fn geometry(&self) -> Result<Option<LoopGeometry>> {
        let Some(g) = &self.geometry else {
            return Ok(None);
        };
        let arms = g
            .arms
            .iter()
            .map(|a| {
                let color = ArmColor::from_name(&a.name).ok_or_else(|| {
                    Error::Config(format!(
                        "geometry.arms: cannot tell which loop arm '{}' is",
                        a.name
                    ))
                })?;
                Ok(LoopArm {
                    name: a.name.clone(),
                    length_m: a.l_um * 1e-6,
                    width_m: a.w_um * 1e-6,
                    color,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(LoopGeometry {
            arms,
            b_coeff: g.b_coeff,
        }))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            omega_low: TWO_PI * self.dephasing.f_low_hz,
            t_typ: self.dephasing.t_typ_s,
            max_iter: self.fit.max_iter,
        }
    }

    /// Bias points of the configured sweep, in row order.
    pub fn sweep_points(&self, curves: &QubitCurves) -> Result<Vec<QubitPoint>> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("no [sweep] section".into()))?;
        if s.samples == 0 {
            return Err(Error::Config("sweep.samples must be > 0".into()));
        }
        let [a, b] = s.range;
        let at = |k: usize| {
            if s.samples == 1 {
                a
            } else {
                a + (b - a) * k as f64 / (s.samples - 1) as f64
            }
        };
        let eps = TWO_PI * s.epsilon_hz;
        (0..s.samples)
            .map(|k| {
                let v = at(k);
                let p = match s.axis {
                    SweepAxis::PhiZ => {
                        let phi_x = s.phi_x.unwrap_or(self.bias.phi_x);
                        let z = if s.relative_to_symmetry {
                            curves.symmetry_point(phi_x)? + v
                        } else {
                            v
                        };
                        curves.compute_point(FluxBias::new(z, phi_x))
                    }
                    SweepAxis::PhiX => curves.point_at_epsilon(v, eps),
                    SweepAxis::Delta => {
                        curves.point_at_epsilon(curves.phi_x_for_delta(TWO_PI * v)?, eps)
                    }
                };
                p.map_err(|e| Error::Config(format!("sweep point {k} ({v}): {e}")))
            })
            .collect()
    }

    /// Check every section and return the model in internal units.
    pub fn build(&self) -> Result<Model> {
        let curves = self.curves()?;
        let env = self.environment()?;
        env.validate().map_err(|e| ctx("noise", e))?;
        for (name, c) in [
            ("z", &self.noise.intrinsic.z),
            ("x", &self.noise.intrinsic.x),
        ] {
            if !(c.amp_phi0_per_rt_hz >= 0.0) {
                return Err(Error::Config(format!(
                    "noise.intrinsic.{name}.amp_phi0_per_rtHz must be >= 0"
                )));
            }
        }
        // cross spectrum must be admissible across the whole band
        for f in [self.dephasing.f_low_hz, 1e3, 1e6, 1e9, 1e10] {
            compose_flux_psd(&env.flux, TWO_PI * f).map_err(|e| ctx("noise", e))?;
        }
        if env.method == DephasingMethod::ClosedForm {
            env.intrinsic_one_over_f()
                .map_err(|e| ctx("dephasing.method", e))?;
        }
        if let Some(c) = &env.critical_current {
            if !(c.a_ic >= 0.0) {
                return Err(Error::Config(
                    "noise.critical_current.a_ic must be >= 0".into(),
                ));
            }
        }
        let readout = match &env.readout {
            Some(r) => Some(r.prepare().map_err(|e| ctx("squid", e))?),
            None => None,
        };
        let geometry = match self.geometry()? {
            Some(g) => Some(geometry_model(&g).map_err(|e| ctx("geometry", e))?),
            None => None,
        };
        self.bias.resolve(&curves).map_err(|e| ctx("bias", e))?;
        if self.sweep.is_some() {
            self.sweep_points(&curves)?;
        }
        if let Some(a) = &self.anneal {
            if a.samples < 2 {
                return Err(Error::Config("anneal.samples must be >= 2".into()));
            }
            for x in [a.phi_x_start, a.phi_x_end] {
                curves
                    .point_at_epsilon(x, TWO_PI * a.epsilon_hz)
                    .map_err(|e| ctx("anneal", e))?;
            }
        }
        let v = &self.validate;
        if v.n_traces < 100 {
            return Err(Error::Config("validate.n_traces must be >= 100".into()));
        }
        if v.steps_per_tphi < 10 || v.tau_points < 5 {
            return Err(Error::Config(
                "validate.steps_per_tphi must be >= 10 and tau_points >= 5".into(),
            ));
        }
        if !(v.tolerance > 0.0) {
            return Err(Error::Config("validate.tolerance must be > 0".into()));
        }
        if let Some(a) = v.synth_alpha {
            if !(0.5..=1.5).contains(&a) {
                return Err(Error::Config(
                    "validate.synth_alpha must lie in [0.5, 1.5]".into(),
                ));
            }
        }
        if v.phi_x.is_some() || v.epsilon_hz.is_some() {
            self.validate_bias()
                .resolve(&curves)
                .map_err(|e| ctx("validate", e))?;
        }
        if self.fit.max_iter == 0 {
            return Err(Error::Config("fit.max_iter must be > 0".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must not be empty".into()));
        }
        Ok(Model {
            curves,
            env,
            readout,
            geometry,
            toggles: self.noise.channels,
        })
    }

    /// Operating point of the Monte-Carlo comparison.
    pub fn validate_bias(&self) -> BiasConfig {
        let v = &self.validate;
        if v.phi_x.is_none() && v.epsilon_hz.is_none() {
            return self.bias;
        }
        BiasConfig {
            phi_x: v.phi_x.unwrap_or(self.bias.phi_x),
            phi_z: None,
            epsilon_hz: Some(v.epsilon_hz.unwrap_or(0.0)),
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

fn ctx(section: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{section}: {other}")),
    }
}
