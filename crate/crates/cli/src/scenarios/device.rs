//! Circuit drive mapping.

use std::f64::consts::{FRAC_PI_2, PI};

use floqsq::circuit::{load_preset, map_circuit, CircuitParams};
use serde_json::json;

use super::*;
use crate::config::required;
use crate::output::{col, Cell, Table};

fn req(cfg: &Config, key: &str) -> ConfigResult<f64> {
    required(key, cfg.f64(key)?)
}

pub fn device_map(cfg: &Config) -> ConfigResult<Prepared> {
    let cp = CircuitParams {
        e_j_ghz: req(cfg, "circuit.e_j_ghz")?,
        c0d: req(cfg, "circuit.c0d")?,
        q_zpf0: req(cfg, "circuit.q_zpf0")?,
        k0d: req(cfg, "circuit.k0d")?,
        f0: req(cfg, "circuit.f0")?,
        f1: req(cfg, "circuit.f1")?,
        f2: cfg.f64("circuit.f2")?.unwrap_or(0.0),
        f3: req(cfg, "circuit.f3")?,
        theta_l: cfg.f64("circuit.theta_l")?.unwrap_or(-FRAC_PI_2),
    };
    let preset = match cfg.str("device.preset")? {
        Some(name) => Some(load_preset(&name).map_err(|e| ConfigError::at("device.preset", e.to_string()))?),
        None => None,
    };
    let kappa_mhz = match cfg.f64("device.kappa_mhz")? {
        Some(k) => Some(positive("device.kappa_mhz", k)?),
        None => preset.as_ref().and_then(|p| p.kappa.map(|q| q.value)),
    };
    let drives = map_circuit(&cp).map_err(|e| ConfigError::at("circuit.f0", e.to_string()))?;
    let derived = json!({ "drive_amplitudes_rad_per_s": drives, "circuit": cp });
    let job: Job = Box::new(move |rec| {
        let mut columns = vec![
            col("omega_rad_per_s", "rad/s"),
            col("a_m_rad_per_s", "rad/s"),
            col("omega1_rad_per_s", "rad/s"),
            col("omega_over_2pi_mhz", "MHz"),
            col("a_m_over_2pi_mhz", "MHz"),
            col("omega1_over_2pi_mhz", "MHz"),
        ];
        let mhz = |w: f64| w / (2.0 * PI * 1e6);
        let mut row: Vec<Cell> = vec![
            drives.omega.into(),
            drives.a_m.into(),
            drives.omega1_amplitude.into(),
            mhz(drives.omega).into(),
            mhz(drives.a_m).into(),
            mhz(drives.omega1_amplitude).into(),
        ];
        if let Some(k) = kappa_mhz {
            columns.extend([
                col("kappa_over_2pi_mhz", "MHz"),
                col("omega_over_kappa", "1"),
                col("a_m_over_kappa", "1"),
                col("omega1_over_kappa", "1"),
            ]);
            let [w, a, w1] = drives.in_units_of_kappa(k);
            row.extend([k.into(), w.into(), a.into(), w1.into()]);
        }
        let mut table = Table::new(columns);
        table.push(row);
        for w in &drives.warnings {
            rec.note(w.clone());
        }
        if let Some(p) = &preset {
            let units = p.in_model_units().ok();
            rec.extra("preset", json!({ "table": p, "in_units_of_kappa": units }));
        }
        rec.write_table("device_map.csv", &table)?;
        Ok(())
    });
    Ok(Prepared { derived, job })
}
