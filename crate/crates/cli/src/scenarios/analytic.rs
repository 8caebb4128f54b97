//! Closed-form device projection.

use floqsq::oracle::{analytic_evolution, device_projection, DeviceInputs};
use floqsq::observables::to_db;
use serde_json::json;

use super::*;
use crate::config::required;
use crate::output::{col, Table};

pub fn projection(cfg: &Config) -> ConfigResult<Prepared> {
    let target_db = required("projection.target_db", cfg.f64("projection.target_db")?)?;
    if !(target_db < 0.0 && target_db.is_finite()) {
        return Err(ConfigError::at("projection.target_db", format!("must be negative, found {target_db}")));
    }
    let mut inputs = DeviceInputs::reference(target_db);
    if let Some(v) = cfg.f64("projection.g_col_mhz")? {
        inputs.g_col_mhz = positive("projection.g_col_mhz", v)?;
    }
    if let Some(v) = cfg.f64("projection.kappa_mhz")? {
        inputs.kappa_mhz = positive("projection.kappa_mhz", v)?;
    }
    if let Some(v) = cfg.f64("projection.gamma_mhz")? {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::at("projection.gamma_mhz", format!("must be ≥ 0, found {v}")));
        }
        inputs.gamma_mhz = v;
    }
    if let Some(v) = cfg.f64("projection.g_minus")? {
        inputs.g_minus = positive("projection.g_minus", v)?;
    }
    let t_max_us = positive("projection.t_max_us", cfg.f64("projection.t_max_us")?.unwrap_or(10.0))?;
    let samples = at_least("projection.samples", cfg.usize("projection.samples")?.unwrap_or(200), 1)?;
    let proj = device_projection(inputs).map_err(|e| ConfigError::at("projection.target_db", e.to_string()))?;
    let derived = serde_json::to_value(&proj).unwrap_or(serde_json::Value::Null);
    let job: Job = Box::new(move |rec| {
        let unit_us = proj.time_unit_s() * 1e6;
        let mut row = Table::new(vec![
            col("target_db", "dB"),
            col("g_col_over_2pi_mhz", "MHz"),
            col("kappa_over_2pi_mhz", "MHz"),
            col("gamma_over_2pi_mhz", "MHz"),
            col("g_minus", "1"),
            col("g_plus", "1"),
            col("r", "1"),
            col("gamma_c_per_us", "1/us"),
            col("xi2_ss_db", "dB"),
            col("t_reach_within_1dB_us", "us"),
        ]);
        row.push(vec![
            target_db.into(),
            inputs.g_col_mhz.into(),
            inputs.kappa_mhz.into(),
            inputs.gamma_mhz.into(),
            proj.params.g_minus.into(),
            proj.params.g_plus.into(),
            proj.r.into(),
            (proj.gamma_c_per_s * 1e-6).into(),
            proj.xi2_ss_db.into(),
            (proj.t_reach_s * 1e6).into(),
        ]);
        let mut curve = Table::new(vec![
            col("t_us", "us"),
            col("kappa_t", "1"),
            col("xi2", "1"),
            col("xi2_db", "dB"),
        ]);
        for k in 0..=samples {
            let t_us = t_max_us * k as f64 / samples as f64;
            let kt = t_us / unit_us;
            let xi2 = analytic_evolution(&proj.params, kt)?.xi2;
            curve.push(vec![t_us.into(), kt.into(), xi2.into(), to_db(xi2).into()]);
        }
        rec.note(format!(
            "G_+ = G_− tanh r with r chosen so that the closed-form steady state equals {target_db} dB; \
             reach time is the first time within 1 dB of that level"
        ));
        rec.diagnostic(
            "projection",
            json!({ "xi2_ss_db": proj.xi2_ss_db, "target_db": target_db, "mismatch_db": proj.xi2_ss_db - target_db }),
        );
        rec.write_table("projection.csv", &row)?;
        rec.write_table("projection_curve.csv", &curve)?;
        Ok(())
    });
    Ok(Prepared { derived, job })
}
