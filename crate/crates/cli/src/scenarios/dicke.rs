//! Scenarios on the cavity ⊗ Dicke-manifold model.

use floqsq::liouville::{
    steady_state, steady_state_periodic, Diagnostics, Liouvillian, PeriodicConfig,
};
use floqsq::model::{effective_hamiltonian, full_dissipators, full_hamiltonian, ground_state, ModelParams, TimeDependentHamiltonian};
use floqsq::observables::{husimi_grid, husimi_prefactor, to_db, wineland_xi2};
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use super::*;
use crate::config::required;
use crate::output::{col, Cell, Table};

const DEFAULT_N_MAX: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Full,
    Effective,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Full => "full",
            Kind::Effective => "effective",
        }
    }
}

fn n_max(cfg: &Config) -> ConfigResult<usize> {
    let n = cfg.usize("numerics.n_max")?.unwrap_or(DEFAULT_N_MAX);
    at_least("numerics.n_max", n, 1)
}

fn full_flag(cfg: &Config, default: bool) -> ConfigResult<bool> {
    Ok(cfg.bool("run.full")?.unwrap_or(default))
}

fn liouvillian(p: &ModelParams, n_max: usize, kind: Kind, num: &Numerics) -> floqsq::Result<Liouvillian> {
    let diss = full_dissipators(p, n_max)?;
    let h = match kind {
        Kind::Full => full_hamiltonian(p, n_max)?,
        Kind::Effective => TimeDependentHamiltonian::constant(effective_hamiltonian(p, n_max)?),
    };
    Liouvillian::with_frame(&h, &diss, num.frame)
}

fn omega_max(p: &ModelParams, kind: Kind) -> floqsq::Result<Option<f64>> {
    match kind {
        Kind::Full => p.omega_max().map(Some),
        Kind::Effective => Ok(None),
    }
}

/// ξ² on the sample grid from the ground state.
fn xi2_series(
    p: &ModelParams,
    n_max: usize,
    kind: Kind,
    num: &Numerics,
    t_final: f64,
    samples: usize,
) -> floqsq::Result<(Vec<f64>, Diagnostics)> {
    let l = liouvillian(p, n_max, kind, num)?;
    let rho0 = ground_state(n_max, p.n_atoms)?;
    let cfg = num.propagation(t_final, omega_max(p, kind)?);
    run_on_grid(&l, &rho0, &cfg, samples, |rho| Ok(wineland_xi2(rho)?.xi2))
}

/// Runs `kind` at `n_max` and, when requested, at `n_max + 2`.
fn xi2_series_checked(
    p: &ModelParams,
    n_max: usize,
    kind: Kind,
    num: &Numerics,
    t_final: f64,
    samples: usize,
) -> floqsq::Result<(Vec<f64>, Diagnostics, Option<Json>)> {
    let check = match num.check {
        TruncationCheck::None => false,
        TruncationCheck::Effective => kind == Kind::Effective,
        TruncationCheck::All => true,
    };
    let (base, check) = rayon::join(
        || xi2_series(p, n_max, kind, num, t_final, samples),
        || check.then(|| xi2_series(p, n_max + 2, kind, num, t_final, samples)),
    );
    let (xi, diag) = base?;
    let entry = match check {
        Some(r) => {
            let (big, _) = r?;
            let rel = max_relative_change(&xi, &big);
            Some(truncation_entry(
                &format!("{} N={}", kind.label(), p.n_atoms),
                json!({ "n_max": n_max }),
                json!({ "n_max": n_max + 2 }),
                rel,
            ))
        }
        None => None,
    };
    Ok((xi, diag, entry))
}

pub fn xi_evolution(cfg: &Config) -> ConfigResult<Prepared> {
    let n = required("model.N", cfg.usize("model.N")?)?;
    let n = at_least("model.N", n, 1)?;
    let spec = ModelSpec::parse(cfg, Reference::Dicke, ALL_MODEL_KEYS)?;
    let (p, derived) = spec.checked(n)?;
    let num = Numerics::parse(cfg)?;
    let n_max = n_max(cfg)?;
    let horizon = Horizon::parse(cfg, Horizon::ScaledT(45.0))?;
    let samples = samples(cfg, 200)?;
    let full = full_flag(cfg, true)?;
    let t_final = horizon.kappa_t(p.g_col());
    let job: Job = Box::new(move |rec| {
        let (eff, full_run) = rayon::join(
            || xi2_series_checked(&p, n_max, Kind::Effective, &num, t_final, samples),
            || full.then(|| xi2_series_checked(&p, n_max, Kind::Full, &num, t_final, samples)),
        );
        let (xi_eff, diag_eff, check_eff) = eff?;
        rec.diagnostic("effective", diagnostics_json(&diag_eff));
        let mut checks: Vec<Json> = check_eff.into_iter().collect();
        let xi_full = match full_run {
            Some(r) => {
                let (xi, diag, check) = r?;
                rec.diagnostic("full", diagnostics_json(&diag));
                checks.extend(check);
                Some(xi)
            }
            None => None,
        };
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));

        let mut columns = vec![col("kappa_t", "1"), col("sqrtN_g_t", "1")];
        if xi_full.is_some() {
            columns.extend([col("xi2_full", "1"), col("xi2_full_db", "dB")]);
        }
        columns.extend([col("xi2_eff", "1"), col("xi2_eff_db", "dB")]);
        let mut table = Table::new(columns);
        for (k, t) in grid_times(t_final, samples).into_iter().enumerate() {
            let mut row: Vec<Cell> = vec![t.into(), (t * p.g_col()).into()];
            if let Some(xf) = &xi_full {
                row.extend([xf[k].into(), to_db(xf[k]).into()]);
            }
            row.extend([xi_eff[k].into(), to_db(xi_eff[k]).into()]);
            table.push(row);
        }
        rec.write_table("xi_evolution.csv", &table)?;
        Ok(())
    });
    Ok(Prepared { derived, job })
}

pub fn husimi_panel(cfg: &Config) -> ConfigResult<Prepared> {
    let n = required("model.N", cfg.usize("model.N")?)?;
    let n = at_least("model.N", n, 1)?;
    let spec = ModelSpec::parse(cfg, Reference::Dicke, ALL_MODEL_KEYS)?;
    let (p, derived) = spec.checked(n)?;
    let num = Numerics::parse(cfg)?;
    let n_max = n_max(cfg)?;
    let times = cfg.f64_list("husimi.sqrtN_g_t")?.unwrap_or_else(|| vec![0.0, 15.0, 45.0]);
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(ConfigError::at("husimi.sqrtN_g_t", "needs non-negative finite times"));
    }
    let n_theta = at_least("husimi.n_theta", cfg.usize("husimi.n_theta")?.unwrap_or(61), 2)?;
    let n_phi = at_least("husimi.n_phi", cfg.usize("husimi.n_phi")?.unwrap_or(120), 2)?;
    let normalize = cfg.bool("husimi.normalize")?.unwrap_or(true);
    let kind = match cfg.str("husimi.hamiltonian")?.as_deref() {
        None | Some("full") => Kind::Full,
        Some("effective") => Kind::Effective,
        Some(other) => {
            return Err(ConfigError::at(
                "husimi.hamiltonian",
                format!("expected \"full\" or \"effective\", found \"{other}\""),
            ))
        }
    };
    let job: Job = Box::new(move |rec| {
        let g_col = p.g_col();
        let check = match num.check {
            TruncationCheck::None => false,
            TruncationCheck::Effective => kind == Kind::Effective,
            TruncationCheck::All => true,
        };
        // each panel is an independent run from t = 0
        let states = times
            .par_iter()
            .map(|&s| -> floqsq::Result<_> {
                let t = s / g_col;
                let evolve = |nm: usize| -> floqsq::Result<_> {
                    let rho0 = ground_state(nm, p.n_atoms)?;
                    if t == 0.0 {
                        return Ok((rho0, None));
                    }
                    let l = liouvillian(&p, nm, kind, &num)?;
                    let c = num.propagation(t, omega_max(&p, kind)?);
                    let prop = floqsq::liouville::propagate_liouvillian(&l, &rho0, &c, &[], |_, _| Ok(()))?;
                    Ok((prop.final_state, Some(prop.diagnostics)))
                };
                let (rho, diag) = evolve(n_max)?;
                let entry = if check && t > 0.0 {
                    let (big, _) = evolve(n_max + 2)?;
                    let a = wineland_xi2(&rho)?.xi2;
                    let b = wineland_xi2(&big)?.xi2;
                    Some(truncation_entry(
                        &format!("{} N={} sqrtN_g_t={s}", kind.label(), p.n_atoms),
                        json!({ "n_max": n_max }),
                        json!({ "n_max": n_max + 2 }),
                        ((a - b) / b).abs(),
                    ))
                } else {
                    None
                };
                Ok((s, t, rho, diag, entry))
            })
            .collect::<floqsq::Result<Vec<_>>>()?;

        let mut long = Table::new(vec![
            col("panel", "1"),
            col("kappa_t", "1"),
            col("sqrtN_g_t", "1"),
            col("theta", "rad"),
            col("phi", "rad"),
            col("q", if normalize { "1 (max-normalized)" } else { "1/sr" }),
        ]);
        let mut summary = Table::new(vec![
            col("panel", "1"),
            col("kappa_t", "1"),
            col("sqrtN_g_t", "1"),
            col("xi2", "1"),
            col("xi2_db", "dB"),
            col("integral", "1"),
            col("mean_x", "1"),
            col("mean_y", "1"),
            col("mean_z", "1"),
            col("var_x", "1"),
            col("var_y", "1"),
            col("var_z", "1"),
        ]);
        let mut diags = Vec::new();
        let mut checks = Vec::new();
        for (panel, (s, t, rho, diag, entry)) in states.into_iter().enumerate() {
            let grid = husimi_grid(&rho, n_theta, n_phi, false)?;
            let integral = grid.integral();
            let m = grid.moments();
            let max = grid.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = if normalize && max > 0.0 { 1.0 / max } else { 1.0 };
            for (i, &theta) in grid.thetas.iter().enumerate() {
                for (k, &phi) in grid.phis.iter().enumerate() {
                    long.push(vec![
                        panel.into(),
                        t.into(),
                        s.into(),
                        theta.into(),
                        phi.into(),
                        (grid.q[[i, k]] * scale).into(),
                    ]);
                }
            }
            let xi2 = wineland_xi2(&rho)?.xi2;
            summary.push(vec![
                panel.into(),
                t.into(),
                s.into(),
                xi2.into(),
                to_db(xi2).into(),
                integral.into(),
                m.mean[0].into(),
                m.mean[1].into(),
                m.mean[2].into(),
                m.variance[0].into(),
                m.variance[1].into(),
                m.variance[2].into(),
            ]);
            diags.push(json!({ "panel": panel, "sqrtN_g_t": s, "integrator": diag.as_ref().map(diagnostics_json) }));
            checks.extend(entry);
        }
        rec.extra(
            "husimi_grid",
            json!({
                "n_theta": n_theta,
                "n_phi": n_phi,
                "theta": "pi*i/(n_theta-1), i = 0..n_theta-1",
                "phi": "2*pi*k/n_phi, k = 0..n_phi-1",
                "normalized_to_unit_max": normalize,
                "prefactor": husimi_prefactor(p.n_atoms),
                "prefactor_form": "(N+1)/(4*pi)",
                "hamiltonian": kind.label(),
            }),
        );
        rec.diagnostic("panels", Json::Array(diags));
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));
        rec.write_table("husimi.csv", &long)?;
        rec.write_table("husimi_summary.csv", &summary)?;
        Ok(())
    });
    Ok(Prepared { derived, job })
}

fn atom_numbers(cfg: &Config) -> ConfigResult<Vec<usize>> {
    let ns = required("sweep.N", cfg.usize_list("sweep.N")?)?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(ConfigError::at("sweep.N", "needs a non-empty list of positive atom numbers"));
    }
    Ok(ns)
}

pub fn xi_vs_gamma(cfg: &Config) -> ConfigResult<Prepared> {
    let ns = atom_numbers(cfg)?;
    let spec = ModelSpec::parse(
        cfg,
        Reference::Dicke,
        ModelKeys {
            gamma: false,
            modulation: true,
        },
    )?;
    let gammas = cfg
        .f64_list("sweep.gamma")?
        .unwrap_or_else(|| vec![0.0, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1]);
    if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(ConfigError::at("sweep.gamma", "needs non-negative finite decay rates"));
    }
    let num = Numerics::parse(cfg)?;
    let n_max = n_max(cfg)?;
    let horizon = Horizon::parse(cfg, Horizon::ScaledT(45.0))?;
    let full = full_flag(cfg, false)?;
    let mut derived = serde_json::Map::new();
    let mut points = Vec::new();
    for &n in &ns {
        for &g in &gammas {
            let (p, d) = spec.with_gamma(g).checked(n)?;
            derived.insert(format!("N={n} gamma={g}"), d);
            points.push(p);
        }
    }
    let job: Job = Box::new(move |rec| {
        let rows = points
            .par_iter()
            .map(|p| -> floqsq::Result<_> {
                let t = horizon.kappa_t(p.g_col());
                let (xi_eff, d_eff, c_eff) = xi2_series_checked(p, n_max, Kind::Effective, &num, t, 1)?;
                let fr = if full {
                    Some(xi2_series_checked(p, n_max, Kind::Full, &num, t, 1)?)
                } else {
                    None
                };
                Ok((p, t, xi_eff[1], d_eff, c_eff, fr))
            })
            .collect::<floqsq::Result<Vec<_>>>()?;
        let mut columns = vec![
            col("N", "1"),
            col("gamma_over_kappa", "1"),
            col("kappa_t", "1"),
            col("sqrtN_g_t", "1"),
            col("xi2_eff", "1"),
            col("xi2_eff_db", "dB"),
        ];
        if full {
            columns.extend([col("xi2_full", "1"), col("xi2_full_db", "dB")]);
        }
        let mut table = Table::new(columns);
        let mut checks = Vec::new();
        let mut diags = Vec::new();
        for (p, t, xe, de, ce, fr) in rows {
            let mut row: Vec<Cell> = vec![
                p.n_atoms.into(),
                p.gamma.into(),
                t.into(),
                (t * p.g_col()).into(),
                xe.into(),
                to_db(xe).into(),
            ];
            let mut d = json!({ "N": p.n_atoms, "gamma": p.gamma, "effective": diagnostics_json(&de) });
            checks.extend(ce);
            if let Some((xf, df, cf)) = fr {
                row.extend([xf[1].into(), to_db(xf[1]).into()]);
                d["full"] = diagnostics_json(&df);
                checks.extend(cf);
            }
            diags.push(d);
            table.push(row);
        }
        rec.diagnostic("runs", Json::Array(diags));
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));
        rec.write_table("xi_vs_gamma.csv", &table)?;
        Ok(())
    });
    Ok(Prepared {
        derived: Json::Object(derived),
        job,
    })
}

/// Effective steady-state ξ² with its solve diagnostics.
fn effective_steady(p: &ModelParams, n_max: usize) -> floqsq::Result<(f64, Json)> {
    let heff = effective_hamiltonian(p, n_max)?;
    let ss = steady_state(&heff, &full_dissipators(p, n_max)?)?;
    let xi2 = wineland_xi2(&ss.state)?.xi2;
    Ok((xi2, json!({ "residual": ss.residual, "sigma_min": ss.sigma_min })))
}

pub fn xi_vs_n(cfg: &Config) -> ConfigResult<Prepared> {
    let ns = atom_numbers(cfg)?;
    let spec = ModelSpec::parse(cfg, Reference::Dicke, ALL_MODEL_KEYS)?;
    let num = Numerics::parse(cfg)?;
    let n_max = n_max(cfg)?;
    let full = full_flag(cfg, false)?;
    let defaults = PeriodicConfig::default();
    let periodic = PeriodicConfig {
        dt: num.dt,
        tol: cfg.f64("numerics.periodic_tol")?.map_or(Ok(defaults.tol), |v| positive("numerics.periodic_tol", v))?,
        max_periods: cfg.usize("numerics.max_periods")?.unwrap_or(defaults.max_periods),
        frame: num.frame,
        cycle_samples: at_least(
            "numerics.cycle_samples",
            cfg.usize("numerics.cycle_samples")?.unwrap_or(defaults.cycle_samples),
            1,
        )?,
        ..defaults
    };
    let mut derived = serde_json::Map::new();
    let mut points = Vec::new();
    for &n in &ns {
        let (p, d) = spec.checked(n)?;
        derived.insert(format!("N={n}"), d);
        points.push(p);
    }
    let job: Job = Box::new(move |rec| {
        let check = num.check != TruncationCheck::None;
        let rows = points
            .par_iter()
            .map(|p| -> floqsq::Result<_> {
                let (xi, solve) = effective_steady(p, n_max)?;
                let entry = if check {
                    let (big, _) = effective_steady(p, n_max + 2)?;
                    Some(truncation_entry(
                        &format!("effective steady state N={}", p.n_atoms),
                        json!({ "n_max": n_max }),
                        json!({ "n_max": n_max + 2 }),
                        ((xi - big) / big).abs(),
                    ))
                } else {
                    None
                };
                let fr = if full {
                    let h = full_hamiltonian(p, n_max)?;
                    let diss = full_dissipators(p, n_max)?;
                    let cfg = PeriodicConfig {
                        omega_max: Some(p.omega_max()?),
                        ..periodic.clone()
                    };
                    let ps = steady_state_periodic(&h, &diss, &ground_state(n_max, p.n_atoms)?, &cfg)?;
                    // squeezing of the instantaneous states, averaged over one period
                    let mut acc = 0.0;
                    for s in &ps.cycle {
                        acc += wineland_xi2(s)?.xi2;
                    }
                    let xi = acc / ps.cycle.len() as f64;
                    let d = json!({
                        "periods": ps.periods,
                        "period": ps.period,
                        "final_change": ps.change,
                        "tolerance": cfg.tol,
                        "integrator": diagnostics_json(&ps.diagnostics),
                    });
                    Some((xi, d))
                } else {
                    None
                };
                Ok((p.n_atoms, xi, solve, entry, fr))
            })
            .collect::<floqsq::Result<Vec<_>>>()?;
        let mut columns = vec![col("N", "1"), col("xi2_ss_eff", "1"), col("xi2_ss_eff_db", "dB")];
        if full {
            columns.extend([col("xi2_ss_full", "1"), col("xi2_ss_full_db", "dB")]);
        }
        let mut table = Table::new(columns);
        let mut checks = Vec::new();
        let mut diags = Vec::new();
        for (n, xi, solve, entry, fr) in rows {
            let mut row: Vec<Cell> = vec![n.into(), xi.into(), to_db(xi).into()];
            let mut d = json!({ "N": n, "effective_steady_state": solve });
            checks.extend(entry);
            if let Some((xf, df)) = fr {
                row.extend([xf.into(), to_db(xf).into()]);
                d["full_periodic"] = df;
            }
            diags.push(d);
            table.push(row);
        }
        if full {
            rec.note("full-model ξ² is the mean over the instantaneous states of the final period");
        }
        rec.diagnostic("runs", Json::Array(diags));
        flag_warnings(rec, &checks);
        rec.diagnostic("truncation", Json::Array(checks));
        rec.write_table("xi_vs_N.csv", &table)?;
        Ok(())
    });
    Ok(Prepared {
        derived: Json::Object(derived),
        job,
    })
}
