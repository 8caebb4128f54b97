//! Spin-wave scenarios on cavity ⊗ spin-wave boson.

use floqsq::liouville::{Diagnostics, Liouvillian};
use floqsq::model::{swa_dissipators, swa_hamiltonians, swa_vacuum, ModelParams, ModulationAmplitude, TimeDependentHamiltonian};
use floqsq::observables::{swa_moments, to_db, SwaMoments};
use floqsq::oracle::{
    adiabatic_dissipators, adiabatic_evolution, adiabatic_regime, adiabatic_steady_state, analytic_evolution,
    analytic_steady, AnalyticParams,
};
use floqsq::hilbert::Operator;
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use super::*;
use crate::config::required;
use crate::output::{col, Cell, Table};

pub const DEFAULT_N_A: usize = 10;
pub const DEFAULT_N_B: usize = 30;
pub const DEFAULT_N_B_ADIABATIC: usize = 40;
const DEFAULT_ATOMS: usize = 100;

#[derive(Clone, Copy, Debug)]
struct Cutoffs {
    n_a: usize,
    n_b: usize,
}

impl Cutoffs {
    fn parse(cfg: &Config) -> ConfigResult<Self> {
        Ok(Self {
            n_a: at_least("numerics.n_a", cfg.usize("numerics.n_a")?.unwrap_or(DEFAULT_N_A), 1)?,
            n_b: at_least("numerics.n_b", cfg.usize("numerics.n_b")?.unwrap_or(DEFAULT_N_B), 2)?,
        })
    }

    fn enlarged(self) -> Self {
        Self {
            n_a: self.n_a + 2,
            n_b: self.n_b + 2,
        }
    }

    fn json(self) -> Json {
        json!({ "n_a": self.n_a, "n_b": self.n_b })
    }
}

fn atoms(cfg: &Config) -> ConfigResult<usize> {
    at_least("model.N", cfg.usize("model.N")?.unwrap_or(DEFAULT_ATOMS), 1)
}

fn swa_series(
    p: &ModelParams,
    c: Cutoffs,
    full: bool,
    num: &Numerics,
    t_final: f64,
    samples: usize,
) -> floqsq::Result<(Vec<SwaMoments>, Diagnostics)> {
    let (h, heff) = swa_hamiltonians(p, c.n_a, c.n_b)?;
    let diss = swa_dissipators(p, c.n_a, c.n_b)?;
    let (h, omega_max) = if full {
        (h, Some(p.omega_max()?))
    } else {
        (TimeDependentHamiltonian::constant(heff), None)
    };
    let l = Liouvillian::with_frame(&h, &diss, num.frame)?;
    let cfg = num.propagation(t_final, omega_max);
    run_on_grid(&l, &swa_vacuum(c.n_a, c.n_b)?, &cfg, samples, swa_moments)
}

fn xi2_of(m: &[SwaMoments]) -> Vec<f64> {
    m.iter().map(|m| m.xi2).collect()
}

/// Runs the SWA dynamics and, when requested, the enlarged truncation.
fn swa_series_checked(
    p: &ModelParams,
    c: Cutoffs,
    full: bool,
    num: &Numerics,
    t_final: f64,
    samples: usize,
    label: &str,
) -> floqsq::Result<(Vec<SwaMoments>, Diagnostics, Option<Json>)> {
    let check = match num.check {
        TruncationCheck::None => false,
        TruncationCheck::Effective => !full,
        TruncationCheck::All => true,
    };
    let (base, big) = rayon::join(
        || swa_series(p, c, full, num, t_final, samples),
        || check.then(|| swa_series(p, c.enlarged(), full, num, t_final, samples)),
    );
    let (m, d) = base?;
    let entry = match big {
        Some(r) => {
            let (mb, _) = r?;
            let rel = max_relative_change(&xi2_of(&m), &xi2_of(&mb));
            Some(truncation_entry(label, c.json(), c.enlarged().json(), rel))
        }
        None => None,
    };
    Ok((m, d, entry))
}

pub fn swa_compare(cfg: &Config) -> ConfigResult<Prepared> {
    required("model.g_col", cfg.f64("model.g_col")?)?;
    let n = atoms(cfg)?;
    let spec = ModelSpec::parse(cfg, Reference::SpinWave, ALL_MODEL_KEYS)?;
    let (p, derived) = spec.checked(n)?;
    let num = Numerics::parse(cfg)?;
    let cut = Cutoffs::parse(cfg)?;
    let horizon = Horizon::parse(cfg, Horizon::KappaT(40.0))?;
    let samples = samples(cfg, 160)?;
    let full = cfg.bool("run.full")?.unwrap_or(true);
    let t_final = horizon.kappa_t(p.g_col());
    let job: Job = Box::new(move |rec| {
        let (eff, fr) = rayon::join(
            || swa_series_checked(&p, cut, false, &num, t_final, samples, "effective"),
            || full.then(|| swa_series_checked(&p, cut, true, &num, t_final, samples, "full")),
        );
        let (me, de, ce) = eff?;
        rec.diagnostic("effective", diagnostics_json(&de));
        let mut checks: Vec<Json> = ce.into_iter().collect();
        let mf = match fr {
            Some(r) => {
                let (m, d, c) = r?;
                rec.diagnostic("full", diagnostics_json(&d));
                checks.extend(c);
                Some(m)
            }
            None => None,
        };
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));
        let mut columns = vec![col("kappa_t", "1"), col("sqrtN_g_t", "1")];
        if mf.is_some() {
            columns.extend([col("xi2_full", "1"), col("xi2_full_db", "dB")]);
        }
        columns.extend([col("xi2_eff", "1"), col("xi2_eff_db", "dB")]);
        if mf.is_some() {
            columns.extend([col("n_b_full", "1"), col("abs_bb_full", "1")]);
        }
        columns.extend([col("n_b_eff", "1"), col("abs_bb_eff", "1")]);
        let mut table = Table::new(columns);
        for (k, t) in grid_times(t_final, samples).into_iter().enumerate() {
            let mut row: Vec<Cell> = vec![t.into(), (t * p.g_col()).into()];
            if let Some(mf) = &mf {
                row.extend([mf[k].xi2.into(), to_db(mf[k].xi2).into()]);
            }
            row.extend([me[k].xi2.into(), to_db(me[k].xi2).into()]);
            if let Some(mf) = &mf {
                row.extend([mf[k].n_b.into(), mf[k].bb.norm().into()]);
            }
            row.extend([me[k].n_b.into(), me[k].bb.norm().into()]);
            table.push(row);
        }
        rec.write_table("swa_compare.csv", &table)?;
        Ok(())
    });
    Ok(Prepared { derived, job })
}

pub fn adiabatic_compare(cfg: &Config) -> ConfigResult<Prepared> {
    required("model.g_col", cfg.f64("model.g_col")?)?;
    let n = atoms(cfg)?;
    let spec = ModelSpec::parse(
        cfg,
        Reference::SpinWave,
        ModelKeys {
            gamma: true,
            modulation: false,
        },
    )?;
    let ratios = cfg
        .f64_list("sweep.a_m_ratio")?
        .unwrap_or_else(|| vec![0.15, 0.13, 0.12]);
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(ConfigError::at("sweep.a_m_ratio", "needs positive finite ratios"));
    }
    let num = Numerics::parse(cfg)?;
    let cut = Cutoffs::parse(cfg)?;
    let n_b_ad = at_least(
        "numerics.n_b_adiabatic",
        cfg.usize("numerics.n_b_adiabatic")?.unwrap_or(DEFAULT_N_B_ADIABATIC),
        2,
    )?;
    let horizon = Horizon::parse(cfg, Horizon::KappaT(40.0))?;
    let samples = samples(cfg, 160)?;
    let full = cfg.bool("run.full")?.unwrap_or(false);
    let mut derived = serde_json::Map::new();
    let mut points = Vec::new();
    for &r in &ratios {
        let (p, d) = spec.with_modulation(ModulationAmplitude::Relative(r)).checked(n)?;
        let a = AnalyticParams::from_model(&p).map_err(|e| ConfigError::at("sweep.a_m_ratio", e.to_string()))?;
        derived.insert(format!("a_m_ratio={r}"), d);
        points.push((r, p, a));
    }
    let job: Job = Box::new(move |rec| {
        let rows = points
            .par_iter()
            .map(|(ratio, p, a)| -> floqsq::Result<_> {
                let t_final = horizon.kappa_t(p.g_col());
                let times = grid_times(t_final, samples);
                let analytic = times
                    .iter()
                    .map(|&t| Ok(analytic_evolution(a, t)?.xi2))
                    .collect::<floqsq::Result<Vec<f64>>>()?;
                // adiabatic model on the same grid
                let diss = adiabatic_dissipators(a, n_b_ad)?;
                let sig = diss[0].op.signature().clone();
                let l = Liouvillian::constant(&Operator::zeros(&sig), &diss)?;
                let mut pc = num.propagation(t_final, None);
                let interval = t_final / samples as f64;
                let sub = (interval / pc.resolve_dt(&l).min(interval) - 1e-9).ceil().max(1.0) as usize;
                pc.dt = Some(interval / sub as f64);
                pc.sample_stride = sub;
                let adiabatic: Vec<f64> = adiabatic_evolution(a, n_b_ad, &pc)?.iter().map(|m| m.xi2).collect();
                if adiabatic.len() != samples + 1 {
                    return Err(floqsq::Error::Solver("adiabatic run missed sample times".into()));
                }
                let ad_ss = adiabatic_steady_state(a, n_b_ad)?;
                let (me, de, ce) = swa_series_checked(p, cut, false, &num, t_final, samples, &format!("effective a_m_ratio={ratio}"))?;
                let fr = if full {
                    Some(swa_series_checked(p, cut, true, &num, t_final, samples, &format!("full a_m_ratio={ratio}"))?)
                } else {
                    None
                };
                Ok((*ratio, p, *a, times, analytic, adiabatic, ad_ss, me, de, ce, fr))
            })
            .collect::<floqsq::Result<Vec<_>>>()?;

        let mut columns = vec![
            col("a_m_ratio", "1"),
            col("kappa_t", "1"),
            col("sqrtN_g_t", "1"),
            col("xi2_analytic", "1"),
            col("xi2_analytic_db", "dB"),
            col("xi2_adiabatic", "1"),
            col("xi2_adiabatic_db", "dB"),
            col("xi2_swa_eff", "1"),
            col("xi2_swa_eff_db", "dB"),
        ];
        if full {
            columns.extend([col("xi2_swa_full", "1"), col("xi2_swa_full_db", "dB")]);
        }
        let mut table = Table::new(columns);
        let mut summary = Table::new(vec![
            col("a_m_ratio", "1"),
            col("g_minus", "1"),
            col("g_plus", "1"),
            col("r", "1"),
            col("gamma_c", "kappa"),
            col("a_factor", "1"),
            col("xi2_ss_analytic", "1"),
            col("xi2_ss_analytic_db", "dB"),
            col("xi2_ss_adiabatic", "1"),
            col("xi2_ss_adiabatic_db", "dB"),
            col("adiabatic_regime", "bool"),
        ]);
        let mut checks = Vec::new();
        let mut diags = Vec::new();
        for (ratio, p, a, times, analytic, adiabatic, ad_ss, me, de, ce, fr) in rows {
            let full_xi = fr.as_ref().map(|(m, _, _)| xi2_of(m));
            for (k, &t) in times.iter().enumerate() {
                let mut row: Vec<Cell> = vec![
                    ratio.into(),
                    t.into(),
                    (t * p.g_col()).into(),
                    analytic[k].into(),
                    to_db(analytic[k]).into(),
                    adiabatic[k].into(),
                    to_db(adiabatic[k]).into(),
                    me[k].xi2.into(),
                    to_db(me[k].xi2).into(),
                ];
                if let Some(xf) = &full_xi {
                    row.extend([xf[k].into(), to_db(xf[k]).into()]);
                }
                table.push(row);
            }
            let ss = analytic_steady(&a)?;
            summary.push(vec![
                ratio.into(),
                a.g_minus.into(),
                a.g_plus.into(),
                ss.r.into(),
                ss.gamma_c.into(),
                ss.a_factor.into(),
                ss.xi2_ss.into(),
                to_db(ss.xi2_ss).into(),
                ad_ss.moments.xi2.into(),
                to_db(ad_ss.moments.xi2).into(),
                adiabatic_regime(&a).into(),
            ]);
            let mut d = json!({
                "a_m_ratio": ratio,
                "adiabatic_steady_state": {
                    "n_b": ad_ss.n_b,
                    "residual": ad_ss.solve.residual,
                    "sigma_min": ad_ss.solve.sigma_min,
                    "doubling_shift": ad_ss.truncation_shift,
                },
                "effective": diagnostics_json(&de),
            });
            checks.extend(ce);
            if let Some((_, df, cf)) = fr {
                d["full"] = diagnostics_json(&df);
                checks.extend(cf);
            }
            diags.push(d);
        }
        rec.note("the adiabatic model relaxes to γ_c/(γ_c+γ) sinh²r; the closed form carries the extra factor 1/(1+γ/κ)");
        rec.diagnostic("runs", Json::Array(diags));
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));
        rec.write_table("adiabatic_compare.csv", &table)?;
        rec.write_table("adiabatic_summary.csv", &summary)?;
        Ok(())
    });
    Ok(Prepared {
        derived: Json::Object(derived),
        job,
    })
}
