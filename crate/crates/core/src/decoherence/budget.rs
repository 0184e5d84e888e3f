use serde::{Deserialize, Serialize};

use super::*;
use crate::noise_psd::{compose_flux_psd, FluxNoiseSpec};
use crate::qubit_model::FluxBias;
use crate::resonator::{
    effective_inductance, qubit_resonator_coupling, screening_taylor, zero_point_current,
    ResonatorParams, SquidParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub resonator: ResonatorParams,
    pub squid: SquidParams,
}

/// Bias-independent part of the qubit-resonator coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutCoupling {
    pub l_sq: f64,
    pub r1: f64,
    pub i_b0: f64,
}

impl Readout {
    pub fn prepare(&self) -> Result<ReadoutCoupling> {
        let l_sq = effective_inductance(&self.squid)?;
        let r1 = screening_taylor(&self.squid)?.r1;
        let i_b0 = zero_point_current(&self.resonator, l_sq)?;
        Ok(ReadoutCoupling { l_sq, r1, i_b0 })
    }
}

/// Transverse charge-type noise: `Γ1 = coupling²·2S⁺(ω01)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeChannel {
    pub psd: PsdModel,
    pub coupling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoise {
    /// Dispersive shift, rad/s.
    pub chi_disp: f64,
    pub nbar: f64,
}

/// Every noise source acting on the qubit, with its coupling route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvironment {
    pub flux: FluxNoiseSpec,
    pub ohmic_flux_z: Option<PsdModel>,
    pub ohmic_flux_x: Option<PsdModel>,
    pub ohmic_charge: Option<ChargeChannel>,
    pub readout: Option<Readout>,
    pub critical_current: Option<CriticalCurrentModel>,
    pub shot_noise: Option<ShotNoise>,
    /// Add the quasistatic second-order flux rate to the dephasing total.
    pub include_second_order: bool,
    pub omega_low: f64,
    /// Typical experiment time used for the closed-form Ramsey cutoff.
    pub t_typ: f64,
    pub method: DephasingMethod,
}

impl NoiseEnvironment {
    pub fn validate(&self) -> Result<()> {
        self.flux.validate()?;
        for m in [&self.ohmic_flux_z, &self.ohmic_flux_x]
            .into_iter()
            .flatten()
        {
            m.validate()?;
        }
        if let Some(c) = &self.ohmic_charge {
            c.psd.validate()?;
        }
        if let Some(r) = &self.readout {
            r.resonator.validate()?;
            r.squid.validate()?;
        }
        if let Some(s) = &self.shot_noise {
            gamma_phi_shot_noise(1.0, s.chi_disp, s.nbar)?;
            if self.readout.is_none() {
                return Err(Error::InvalidInput(
                    "shot noise needs the readout resonator".into(),
                ));
            }
        }
        if !(self.omega_low > 0.0 && self.t_typ > 0.0) {
            return Err(Error::InvalidInput(
                "omega_low and t_typ must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Intrinsic 1/f powers `(A_z, A_x, α)` when both loops share one exponent.
    pub fn intrinsic_one_over_f(&self) -> Result<(f64, f64, f64)> {
        match (&self.flux.intrinsic_z, &self.flux.intrinsic_x) {
            (
                PsdModel::OneOverF {
                    amplitude: az,
                    alpha: pz,
                },
                PsdModel::OneOverF {
                    amplitude: ax,
                    alpha: px,
                },
            ) if pz == px => Ok((*az, *ax, *pz)),
            _ => Err(Error::InvalidInput(
                "closed-form dephasing needs 1/f intrinsic noise with a common exponent".into(),
            )),
        }
    }
}

/// Relaxation rates of every configured channel at one operating point.
pub fn relaxation_rates(
    point: &QubitPoint,
    env: &NoiseEnvironment,
    g: Option<f64>,
) -> Result<Vec<ChannelRate>> {
    let w = point.omega01;
    let mut out = vec![
        ChannelRate {
            channel: Channel::FluxZ1f,
            gamma1: gamma1_psd(point.mz_ge, &env.flux.intrinsic_z, w)?,
        },
        ChannelRate {
            channel: Channel::FluxX1f,
            gamma1: gamma1_psd(point.mx_ge, &env.flux.intrinsic_x, w)?,
        },
    ];
    let (pz, px) = env.flux.line_current_psd(w)?;
    let (mz, mx) = biasline_matrix_elements(point, &env.flux.mutuals);
    if env.flux.source_z.is_some() || env.flux.biasline_z.is_some() {
        out.push(ChannelRate {
            channel: Channel::BiaslineZ,
            gamma1: gamma1_channel(mz, pz)?,
        });
    }
    if env.flux.source_x.is_some() || env.flux.biasline_x.is_some() {
        out.push(ChannelRate {
            channel: Channel::BiaslineX,
            gamma1: gamma1_channel(mx, px)?,
        });
    }
    if let (Some(r), Some(g)) = (&env.readout, g) {
        out.push(ChannelRate {
            channel: Channel::Purcell,
            gamma1: purcell_rate(w, r.resonator.omega_r, r.resonator.kappa, g)?,
        });
    }
    if let Some(m) = &env.ohmic_flux_z {
        out.push(ChannelRate {
            channel: Channel::OhmicFluxZ,
            gamma1: gamma1_psd(point.mz_ge, m, w)?,
        });
    }
    if let Some(m) = &env.ohmic_flux_x {
        out.push(ChannelRate {
            channel: Channel::OhmicFluxX,
            gamma1: gamma1_psd(point.mx_ge, m, w)?,
        });
    }
    if let Some(c) = &env.ohmic_charge {
        out.push(ChannelRate {
            channel: Channel::OhmicCharge,
            gamma1: gamma1_psd(c.coupling, &c.psd, w)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DephasingRow {
    pub mechanism: String,
    pub t_phi_ramsey: Option<f64>,
    pub t_phi_echo: Option<f64>,
    /// Whether the mechanism enters the total.
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceBudget {
    pub point: QubitPoint,
    /// Qubit-resonator coupling, rad/s.
    pub coupling_g: Option<f64>,
    pub t1: T1Budget,
    pub dephasing: DephasingResult,
    pub dephasing_rows: Vec<DephasingRow>,
}

/// Frequency-noise spectrum from composed flux noise.
fn flux_frequency_psd<'a>(
    point: &'a QubitPoint,
    spec: &'a FluxNoiseSpec,
) -> impl Fn(f64) -> f64 + 'a {
    let (wz, wx) = (point.d_omega_d_phi_z, point.d_omega_d_phi_x);
    move |w: f64| match compose_flux_psd(spec, w) {
        Ok(f) => (wz * wz * f.s_z + wx * wx * f.s_x + 2.0 * wz * wx * f.c_zx).max(0.0),
        Err(_) => f64::NAN,
    }
}

struct Mechanism<'a> {
    name: &'static str,
    /// 1/f-type frequency noise, with its closed-form power and exponent.
    spectrum: Option<(Box<dyn Fn(f64) -> f64 + 'a>, f64, f64)>,
    gamma_white: f64,
    included: bool,
}

fn closed_form_time(
    a_omega: f64,
    alpha: f64,
    gamma_white: f64,
    eta: &EtaFactors,
    filter: Filter,
) -> Result<Option<f64>> {
    if a_omega <= 0.0 && gamma_white <= 0.0 {
        return Ok(None);
    }
    if gamma_white <= 0.0 {
        return Ok(tphi_closed_form(a_omega, eta, filter));
    }
    if a_omega <= 0.0 {
        return Ok(Some(1.0 / gamma_white));
    }
    let k = a_omega * eta.get(filter);
    let f = |u: f64| {
        let t = u.exp();
        k * t.powf(1.0 + alpha) + gamma_white * t - 1.0
    };
    let hi = (1.0 / gamma_white).min(k.powf(-1.0 / (1.0 + alpha)));
    Ok(Some(
        brent(f, (hi * 1e-3).ln(), hi.ln() + 1e-12, 1e-12, 200)?.exp(),
    ))
}

fn evaluate_mechanism(
    m: &Mechanism,
    env: &NoiseEnvironment,
    eta: &EtaFactors,
    envelopes: bool,
) -> Result<DephasingResult> {
    let n_samples = if envelopes { ENVELOPE_SAMPLES } else { 0 };
    if m.spectrum.is_none() {
        // purely Markovian: exp(-Γτ) for either filter
        let t = inverse(m.gamma_white);
        let samples: Vec<(f64, f64)> = t
            .filter(|_| envelopes)
            .map(|t| {
                (0..n_samples)
                    .map(|k| {
                        let tau = 3.0 * t * k as f64 / (n_samples - 1) as f64;
                        (tau, (-m.gamma_white * tau).exp())
                    })
                    .collect()
            })
            .unwrap_or_default();
        return Ok(DephasingResult {
            t_phi_ramsey: t,
            t_phi_echo: t,
            samples_ramsey: samples.clone(),
            samples_echo: samples,
            method: env.method,
        });
    }
    match env.method {
        DephasingMethod::Quadrature => {
            let zero = |_: f64| 0.0;
            let s: &dyn Fn(f64) -> f64 = match &m.spectrum {
                Some((s, _, _)) => s.as_ref(),
                None => &zero,
            };
            let r = tphi_quadrature_opt_sampled(
                s,
                Filter::Ramsey,
                env.omega_low,
                m.gamma_white,
                n_samples,
            )?;
            let e = tphi_quadrature_opt_sampled(
                s,
                Filter::Echo,
                env.omega_low,
                m.gamma_white,
                n_samples,
            )?;
            Ok(DephasingResult {
                t_phi_ramsey: r.as_ref().map(|c| c.t_phi),
                t_phi_echo: e.as_ref().map(|c| c.t_phi),
                samples_ramsey: r.map(|c| c.samples).unwrap_or_default(),
                samples_echo: e.map(|c| c.samples).unwrap_or_default(),
                method: DephasingMethod::Quadrature,
            })
        }
        DephasingMethod::ClosedForm => {
            let (a, alpha) = m
                .spectrum
                .as_ref()
                .map_or((0.0, eta.alpha), |(_, a, al)| (*a, *al));
            // closed-form envelope, with the Ramsey cutoff frozen at t_typ
            let sample = |t: Option<f64>, filter: Filter| -> Vec<(f64, f64)> {
                let Some(t) = t.filter(|_| envelopes) else {
                    return Vec::new();
                };
                (0..n_samples)
                    .map(|k| {
                        let tau = 3.0 * t * k as f64 / (n_samples - 1) as f64;
                        let chi = a * eta.get(filter) * tau.powf(1.0 + alpha) + m.gamma_white * tau;
                        (tau, (-chi).exp())
                    })
                    .collect()
            };
            let tr = closed_form_time(a, alpha, m.gamma_white, eta, Filter::Ramsey)?;
            let te = closed_form_time(a, alpha, m.gamma_white, eta, Filter::Echo)?;
            Ok(DephasingResult {
                t_phi_ramsey: tr,
                t_phi_echo: te,
                samples_ramsey: sample(tr, Filter::Ramsey),
                samples_echo: sample(te, Filter::Echo),
                method: DephasingMethod::ClosedForm,
            })
        }
    }
}

/// Full T1 and Tφ budget at one bias point.
pub fn coherence_budget(
    curves: &QubitCurves,
    bias: FluxBias,
    env: &NoiseEnvironment,
    readout: Option<&ReadoutCoupling>,
) -> Result<CoherenceBudget> {
    coherence_budget_with(curves, bias, env, readout, true)
}

/// As [`coherence_budget`]; `envelopes = false` skips sampling the total
/// decay envelopes, which dominates the cost of quadrature budgets.
pub fn coherence_budget_with(
    curves: &QubitCurves,
    bias: FluxBias,
    env: &NoiseEnvironment,
    readout: Option<&ReadoutCoupling>,
    envelopes: bool,
) -> Result<CoherenceBudget> {
    let point = curves.compute_point(bias)?;
    let prepared;
    let readout = match (readout, &env.readout) {
        (Some(r), _) => Some(r),
        (None, Some(r)) => {
            prepared = r.prepare()?;
            Some(&prepared)
        }
        (None, None) => None,
    };
    let g = match (&env.readout, readout) {
        (Some(r), Some(c)) => Some(qubit_resonator_coupling(&point, &r.resonator, c.r1, c.i_b0)),
        _ => None,
    };
    let t1 = combine_t1(&relaxation_rates(&point, env, g)?)?;

    // surface configuration errors before they turn into NaNs in quadrature
    compose_flux_psd(&env.flux, env.omega_low)?;

    let closed = env.method == DephasingMethod::ClosedForm;
    let (a_flux, alpha_flux) = if closed {
        let (az, ax, alpha) = env.intrinsic_one_over_f()?;
        (a_omega_flux(&point, az, ax, env.flux.c_zx), alpha)
    } else {
        (0.0, 1.0)
    };
    let eta = if closed {
        EtaFactors::new(alpha_flux, env.omega_low, env.t_typ)?
    } else {
        EtaFactors {
            eta0: f64::NAN,
            eta1: f64::NAN,
            omega_low: env.omega_low,
            t_typ: env.t_typ,
            alpha: 1.0,
        }
    };

    let flux_s = flux_frequency_psd(&point, &env.flux);
    let mut mechanisms: Vec<Mechanism> = vec![Mechanism {
        name: "flux",
        spectrum: Some((Box::new(flux_s), a_flux, alpha_flux)),
        gamma_white: 0.0,
        included: true,
    }];

    let cc_a = match &env.critical_current {
        Some(model) => {
            let s = critical_current_sensitivities(&point, curves.asymmetry(), model)?;
            s.iter().map(|v| v * v).sum::<f64>() * model.a_ic
        }
        None => 0.0,
    };
    if env.critical_current.is_some() {
        let cc_s = move |w: f64| cc_a * TWO_PI / w;
        mechanisms.push(Mechanism {
            name: "critical_current",
            spectrum: Some((Box::new(cc_s), cc_a, 1.0)),
            gamma_white: 0.0,
            included: true,
        });
    }
    let shot = match (&env.shot_noise, &env.readout) {
        (Some(s), Some(r)) => Some(gamma_phi_shot_noise(r.resonator.kappa, s.chi_disp, s.nbar)?),
        _ => None,
    };
    if let Some(rate) = shot {
        mechanisms.push(Mechanism {
            name: "shot_noise",
            spectrum: None,
            gamma_white: rate,
            included: true,
        });
    }
    let (az2, ax2) = match (&env.flux.intrinsic_z, &env.flux.intrinsic_x) {
        (PsdModel::OneOverF { amplitude: z, .. }, PsdModel::OneOverF { amplitude: x, .. }) => {
            (*z, *x)
        }
        _ => (0.0, 0.0),
    };
    let second = gamma_phi_second_order(&point, az2, ax2);
    mechanisms.push(Mechanism {
        name: "second_order_flux",
        spectrum: None,
        gamma_white: second,
        included: env.include_second_order,
    });

    let mut rows = Vec::new();
    for m in &mechanisms {
        let r = evaluate_mechanism(m, env, &eta, false)?;
        rows.push(DephasingRow {
            mechanism: m.name.to_string(),
            t_phi_ramsey: r.t_phi_ramsey,
            t_phi_echo: r.t_phi_echo,
            included: m.included,
        });
    }

    let included: Vec<&Mechanism> = mechanisms.iter().filter(|m| m.included).collect();
    let white: f64 = included.iter().map(|m| m.gamma_white).sum();
    let total_s = |w: f64| -> f64 {
        included
            .iter()
            .filter_map(|m| m.spectrum.as_ref())
            .map(|(s, _, _)| s(w))
            .sum()
    };
    let total_a: f64 = included
        .iter()
        .filter_map(|m| m.spectrum.as_ref())
        .map(|(_, a, _)| *a)
        .sum();
    let total = Mechanism {
        name: "total",
        spectrum: Some((Box::new(total_s), total_a, alpha_flux)),
        gamma_white: white,
        included: true,
    };
    let dephasing = evaluate_mechanism(&total, env, &eta, envelopes)?;
    rows.push(DephasingRow {
        mechanism: "total".into(),
        t_phi_ramsey: dephasing.t_phi_ramsey,
        t_phi_echo: dephasing.t_phi_echo,
        included: true,
    });

    Ok(CoherenceBudget {
        point,
        coupling_g: g,
        t1,
        dephasing,
        dephasing_rows: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::tests::test_curves;
    use crate::noise_psd::{AttenuationChain, AttenuationStage};

    fn env(method: DephasingMethod) -> NoiseEnvironment {
        NoiseEnvironment {
            flux: FluxNoiseSpec::intrinsic_only(1.77e-10, 5.8e-11, 1.0, 0.47),
            ohmic_flux_z: None,
            ohmic_flux_x: None,
            ohmic_charge: None,
            readout: None,
            critical_current: None,
            shot_noise: None,
            include_second_order: false,
            omega_low: TWO_PI * 10.0,
            t_typ: 100e-9,
            method,
        }
    }

    #[test]
    fn intrinsic_only_budget() {
        let c = test_curves(0.069);
        let sym = c.symmetry_point(0.35).unwrap();
        let bias = FluxBias::new(sym + 1e-3, 0.35);
        let e = env(DephasingMethod::ClosedForm);
        let b = coherence_budget(&c, bias, &e, None).unwrap();
        let sum: f64 = b.t1.rows.iter().map(|r| r.gamma).sum();
        assert!((sum / b.t1.gamma1 - 1.0).abs() < 1e-12);
        let total = b.dephasing.t_phi_ramsey.unwrap();
        let flux = b.dephasing_rows[0].t_phi_ramsey.unwrap();
        assert!((total / flux - 1.0).abs() < 1e-9);
        assert!(b.dephasing.t_phi_echo.unwrap() > total);

        let q = coherence_budget(&c, bias, &env(DephasingMethod::Quadrature), None).unwrap();
        let tq = q.dephasing.t_phi_ramsey.unwrap();
        // closed form freezes the cutoff at t_typ, quadrature uses τ itself
        assert!((tq / total - 1.0).abs() < 0.2, "{tq} vs {total}");
    }

    #[test]
    fn full_environment_runs() {
        let c = test_curves(0.069);
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
        let mut e = env(DephasingMethod::Quadrature);
        e.flux.mutuals = Mutuals {
            zz: 1.5e-12,
            zx: 0.1e-12,
            xz: 0.1e-12,
            xx: 1.5e-12,
        };
        e.flux.r_z_ohm = 1e3;
        e.flux.r_x_ohm = 1e3;
        e.flux.source_z = Some(PsdModel::FilteredSource {
            a_v: 6.4e-13,
            s_v0: 7.9e-17,
            omega_l: TWO_PI * 30e6,
        });
        e.flux.biasline_z = Some(PsdModel::BiasLine {
            z0_ohm: 50.0,
            inductance_h: 25e-12,
            chain: chain.clone(),
        });
        e.flux.biasline_x = Some(PsdModel::BiasLine {
            z0_ohm: 50.0,
            inductance_h: 25e-12,
            chain,
        });
        let omega_r = TWO_PI * 7.89e9;
        e.readout = Some(Readout {
            resonator: ResonatorParams {
                omega_r,
                kappa: TWO_PI * 12.2e6,
                z0_ohm: 50.0,
                vph: 1.2e8,
                length: crate::resonator::quarter_wave_length(omega_r, 1.2e8),
                m_qr: 30e-12,
            },
            squid: SquidParams {
                i_c: 1e-6,
                l_g: 100e-12,
                phi_r: 0.0,
            },
        });
        e.critical_current = Some(CriticalCurrentModel {
            a_ic: 4e-6,
            dln_delta_dln_ic: -4.0,
            dln_ip_dln_ic: 1.0,
            main_dln_delta_dln_ic: 0.0,
            main_dln_ip_dln_ic: 0.0,
        });
        e.shot_noise = Some(ShotNoise {
            chi_disp: TWO_PI * 0.8e6,
            nbar: 0.01,
        });
        e.validate().unwrap();
        let sym = c.symmetry_point(0.35).unwrap();
        let b = coherence_budget(&c, FluxBias::new(sym, 0.35), &e, None).unwrap();
        let names: Vec<&str> = b.t1.rows.iter().map(|r| r.channel.as_str()).collect();
        for ch in [
            "flux_z_1f",
            "flux_x_1f",
            "biasline_z",
            "biasline_x",
            "purcell",
        ] {
            assert!(names.contains(&ch), "{ch} missing");
        }
        assert!(b.coupling_g.unwrap() > 0.0);
        let total = b.dephasing.t_phi_ramsey.unwrap();
        for row in &b.dephasing_rows {
            if row.included {
                if let Some(t) = row.t_phi_ramsey {
                    assert!(t >= total * (1.0 - 1e-9), "{} {t} < {total}", row.mechanism);
                }
            }
        }
        assert!(
            !b.dephasing_rows
                .iter()
                .find(|r| r.mechanism == "second_order_flux")
                .unwrap()
                .included
        );
    }

    #[test]
    fn closed_form_with_white_rate() {
        let eta = EtaFactors::new(1.0, TWO_PI * 10.0, 100e-9).unwrap();
        let t = closed_form_time(1e12, 1.0, 1e5, &eta, Filter::Ramsey)
            .unwrap()
            .unwrap();
        let chi = 1e12 * eta.eta0 * t * t + 1e5 * t;
        assert!((chi - 1.0).abs() < 1e-9);
        assert_eq!(
            closed_form_time(0.0, 1.0, 0.0, &eta, Filter::Ramsey).unwrap(),
            None
        );
        assert_eq!(
            closed_form_time(0.0, 1.0, 1e5, &eta, Filter::Echo).unwrap(),
            Some(1e-5)
        );
    }

    #[test]
    fn closed_form_requires_one_over_f() {
        let c = test_curves(0.0);
        let mut e = env(DephasingMethod::ClosedForm);
        e.flux.intrinsic_x = PsdModel::OneOverF {
            amplitude: 5.8e-11,
            alpha: 0.9,
        };
        assert!(coherence_budget(&c, FluxBias::new(0.5, 0.3), &e, None).is_err());
    }
}
