//! Scenario registry and the pieces shared by several scenarios.

use std::f64::consts::FRAC_PI_2;
use std::io;

use floqsq::hilbert::DensityMatrix;
use floqsq::liouville::{propagate_liouvillian, Diagnostics, Frame, Liouvillian, Method, PropagationConfig};
use floqsq::model::{DeltaBranch, ModelParams, ModulationAmplitude};
use serde_json::{json, Value as Json};

use crate::config::{Config, ConfigError, ConfigResult};
use crate::output::RunRecord;

mod analytic;
mod device;
mod dicke;
mod swa;

/// Relative ξ² change at the enlarged truncation above which a run is flagged.
pub const TRUNCATION_TOL: f64 = 1e-3;

pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub required: &'static [&'static str],
    pub minimal: &'static str,
}

/// Sorted by name.
pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "adiabatic-compare",
        description: "spin-wave squeezing from the closed form, the adiabatic model and the two-mode model for several A_m/ω_m",
        required: &["model.g_col"],
        minimal: "scenario = \"adiabatic-compare\"\nmodel.g_col = 10.0\nnumerics.t_final = 2.0\nnumerics.n_a = 3\nnumerics.n_b = 10\n",
    },
    ScenarioInfo {
        name: "analytic-projection",
        description: "closed-form squeezing time and level for a device reaching a target ξ² in dB",
        required: &["projection.target_db"],
        minimal: "scenario = \"analytic-projection\"\nprojection.target_db = -20.0\n",
    },
    ScenarioInfo {
        name: "device-map",
        description: "SQUID flux drive to cavity drive amplitudes, optionally scaled by a platform preset",
        required: &[
            "circuit.e_j_ghz",
            "circuit.c0d",
            "circuit.q_zpf0",
            "circuit.k0d",
            "circuit.f0",
            "circuit.f1",
            "circuit.f3",
        ],
        minimal: "scenario = \"device-map\"\ncircuit.e_j_ghz = 500.0\ncircuit.c0d = 1e-12\ncircuit.q_zpf0 = 1e-23\ncircuit.k0d = 0.3\ncircuit.f0 = 0.8\ncircuit.f1 = 0.01\ncircuit.f3 = 0.02\n",
    },
    ScenarioInfo {
        name: "husimi-panel",
        description: "spin Husimi Q on a (θ, φ) grid at selected times",
        required: &["model.N"],
        minimal: "scenario = \"husimi-panel\"\nmodel.N = 4\nhusimi.sqrtN_g_t = [0.0, 5.0]\n",
    },
    ScenarioInfo {
        name: "swa-compare",
        description: "spin-wave ξ², ⟨b†b⟩ and |⟨bb⟩| from the full and effective two-mode dynamics",
        required: &["model.g_col"],
        minimal: "scenario = \"swa-compare\"\nmodel.g_col = 10.0\nnumerics.t_final = 1.0\nnumerics.n_a = 3\nnumerics.n_b = 10\n",
    },
    ScenarioInfo {
        name: "xi-evolution",
        description: "Wineland ξ² versus time from the full and effective Dicke dynamics",
        required: &["model.N"],
        minimal: "scenario = \"xi-evolution\"\nmodel.N = 4\nnumerics.sqrtN_g_t = 10.0\n",
    },
    ScenarioInfo {
        name: "xi-vs-N",
        description: "steady-state ξ² versus atom number",
        required: &["sweep.N"],
        minimal: "scenario = \"xi-vs-N\"\nsweep.N = [4, 8]\n",
    },
    ScenarioInfo {
        name: "xi-vs-gamma",
        description: "ξ² at a fixed time versus spin decay rate for several atom numbers",
        required: &["sweep.N"],
        minimal: "scenario = \"xi-vs-gamma\"\nsweep.N = [4]\n",
    },
];

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(floqsq::Error),
    Io(io::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<floqsq::Error> for RunError {
    fn from(e: floqsq::Error) -> Self {
        RunError::Numerical(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

pub type Job = Box<dyn FnOnce(&mut RunRecord) -> Result<(), RunError>>;

/// A validated scenario ready to run.
pub struct Prepared {
    /// Derived couplings echoed into the manifest.
    pub derived: Json,
    pub job: Job,
}

/// Reads and validates every key the scenario uses. Nothing is computed here
/// beyond derived couplings.
pub fn prepare(name: &str, cfg: &Config) -> ConfigResult<Prepared> {
    let prepared = match name {
        "adiabatic-compare" => swa::adiabatic_compare(cfg)?,
        "analytic-projection" => analytic::projection(cfg)?,
        "device-map" => device::device_map(cfg)?,
        "husimi-panel" => dicke::husimi_panel(cfg)?,
        "swa-compare" => swa::swa_compare(cfg)?,
        "xi-evolution" => dicke::xi_evolution(cfg)?,
        "xi-vs-N" => dicke::xi_vs_n(cfg)?,
        "xi-vs-gamma" => dicke::xi_vs_gamma(cfg)?,
        other => {
            let names: Vec<&str> = SCENARIOS.iter().map(|s| s.name).collect();
            return Err(ConfigError::at(
                "scenario",
                format!("unknown scenario `{other}`; available: {}", names.join(", ")),
            ));
        }
    };
    cfg.reject_unknown()?;
    Ok(prepared)
}

/// Single-atom or collective coupling as configured.
#[derive(Clone, Copy, Debug)]
enum Coupling {
    Single(f64),
    Collective(f64),
}

/// Model keys other than the atom number, which sweeps may own.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    base: ModelParams,
    coupling: Coupling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Dicke,
    SpinWave,
}

pub struct ModelKeys {
    /// `model.gamma` is read unless a sweep owns it.
    pub gamma: bool,
    /// `model.a_m` / `model.a_m_ratio` are read unless a sweep owns them.
    pub modulation: bool,
}

pub const ALL_MODEL_KEYS: ModelKeys = ModelKeys {
    gamma: true,
    modulation: true,
};

impl ModelSpec {
    pub fn parse(cfg: &Config, reference: Reference, keys: ModelKeys) -> ConfigResult<Self> {
        let mut base = match reference {
            Reference::Dicke => ModelParams::dicke_reference(1),
            Reference::SpinWave => ModelParams::spin_wave_reference(1),
        };
        let g = cfg.f64("model.g")?;
        let g_col = cfg.f64("model.g_col")?;
        let coupling = match (g, g_col) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at("model.g_col", "set either model.g or model.g_col, not both"));
            }
            (Some(g), None) => Coupling::Single(g),
            (None, Some(c)) => Coupling::Collective(c),
            (None, None) => match reference {
                Reference::Dicke => Coupling::Single(base.g),
                Reference::SpinWave => Coupling::Collective(10.0),
            },
        };
        if let Some(v) = cfg.f64("model.delta_c")? {
            base.delta_c = v;
        }
        let omega = cfg.f64("model.omega")?;
        let omega_ratio = cfg.f64("model.omega_ratio")?;
        match (omega, omega_ratio) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at("model.omega_ratio", "set either model.omega or model.omega_ratio"));
            }
            (Some(w), None) => base.omega = w,
            (None, Some(r)) => base.omega = r * base.delta_c,
            (None, None) => {
                // keep the reference Ω/Δ_c when only Δ_c changes
                let ratio = match reference {
                    Reference::Dicke => 0.2,
                    Reference::SpinWave => 0.1,
                };
                base.omega = ratio * base.delta_c;
            }
        }
        if keys.modulation {
            let a = cfg.f64("model.a_m")?;
            let ratio = cfg.f64("model.a_m_ratio")?;
            match (a, ratio) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::at("model.a_m_ratio", "set either model.a_m or model.a_m_ratio"));
                }
                (Some(a), None) => base.modulation = ModulationAmplitude::Absolute(a),
                (None, Some(r)) => base.modulation = ModulationAmplitude::Relative(r),
                (None, None) => {}
            }
        }
        base.omega_m = cfg.f64("model.omega_m")?;
        base.theta_l = cfg.f64("model.theta_l")?.unwrap_or(-FRAC_PI_2);
        if let Some(k) = cfg.f64("model.kappa")? {
            base.kappa = k;
        }
        if keys.gamma {
            if let Some(g) = cfg.f64("model.gamma")? {
                base.gamma = g;
            }
        }
        if let Some(c) = cfg.bool("model.compensate_delta")? {
            base.compensate_delta = c;
        }
        if let Some(b) = cfg.str("model.delta_branch")? {
            base.delta_branch = match b.as_str() {
                "dressed" => DeltaBranch::Dressed,
                "bare" => DeltaBranch::Bare,
                other => {
                    return Err(ConfigError::at(
                        "model.delta_branch",
                        format!("expected \"dressed\" or \"bare\", found \"{other}\""),
                    ))
                }
            };
        }
        Ok(Self { base, coupling })
    }

    pub fn with_modulation(&self, m: ModulationAmplitude) -> Self {
        let mut s = self.clone();
        s.base.modulation = m;
        s
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut s = self.clone();
        s.base.gamma = gamma;
        s
    }

    pub fn at(&self, n_atoms: usize) -> ModelParams {
        let mut p = self.base.clone();
        p.n_atoms = n_atoms;
        p.g = match self.coupling {
            Coupling::Single(g) => g,
            Coupling::Collective(c) => c / (n_atoms.max(1) as f64).sqrt(),
        };
        p
    }

    /// Model parameters at `n_atoms` with their derived couplings, or the
    /// validation failure reported against the model section.
    pub fn checked(&self, n_atoms: usize) -> ConfigResult<(ModelParams, Json)> {
        let p = self.at(n_atoms);
        let d = p
            .derive()
            .map_err(|e| ConfigError::at(model_key(&e), e.to_string()))?;
        let derived = serde_json::to_value(&d).unwrap_or(Json::Null);
        Ok((p, derived))
    }
}

fn model_key(e: &floqsq::Error) -> &'static str {
    match e {
        floqsq::Error::ImaginaryFrequency { .. } => "model.omega",
        floqsq::Error::UnstableSqueezing { .. } => "model.a_m_ratio",
        _ => "model",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationCheck {
    None,
    Effective,
    All,
}

/// Integrator keys under `numerics`.
#[derive(Clone, Debug)]
pub struct Numerics {
    pub method: Method,
    pub dt: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub frame: Frame,
    pub check: TruncationCheck,
}

impl Numerics {
    pub fn parse(cfg: &Config) -> ConfigResult<Self> {
        let defaults = PropagationConfig::default();
        let method = match cfg.str("numerics.method")?.as_deref() {
            None | Some("rk4") => Method::Rk4,
            Some("rk45") => Method::Rk45,
            Some(other) => {
                return Err(ConfigError::at(
                    "numerics.method",
                    format!("expected \"rk4\" or \"rk45\", found \"{other}\""),
                ))
            }
        };
        let frame = match cfg.str("numerics.frame")?.as_deref() {
            None | Some("interaction") => Frame::Interaction,
            Some("direct") => Frame::Direct,
            Some(other) => {
                return Err(ConfigError::at(
                    "numerics.frame",
                    format!("expected \"interaction\" or \"direct\", found \"{other}\""),
                ))
            }
        };
        let check = match cfg.str("numerics.truncation_check")?.as_deref() {
            None | Some("effective") => TruncationCheck::Effective,
            Some("none") => TruncationCheck::None,
            Some("all") => TruncationCheck::All,
            Some(other) => {
                return Err(ConfigError::at(
                    "numerics.truncation_check",
                    format!("expected \"none\", \"effective\" or \"all\", found \"{other}\""),
                ))
            }
        };
        let dt = cfg.f64("numerics.dt")?;
        if let Some(dt) = dt {
            positive("numerics.dt", dt)?;
        }
        let rtol = cfg.f64("numerics.rtol")?.unwrap_or(defaults.rtol);
        let atol = cfg.f64("numerics.atol")?.unwrap_or(defaults.atol);
        positive("numerics.rtol", rtol)?;
        positive("numerics.atol", atol)?;
        Ok(Self {
            method,
            dt,
            rtol,
            atol,
            frame,
            check,
        })
    }

    pub fn propagation(&self, t_final: f64, omega_max: Option<f64>) -> PropagationConfig {
        PropagationConfig {
            method: self.method,
            dt: self.dt,
            rtol: self.rtol,
            atol: self.atol,
            t_final,
            omega_max,
            frame: self.frame,
            ..PropagationConfig::default()
        }
    }
}

pub fn positive(key: &str, v: f64) -> ConfigResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::at(key, format!("must be positive and finite, found {v}")))
    }
}

pub fn at_least(key: &str, v: usize, min: usize) -> ConfigResult<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(ConfigError::at(key, format!("must be at least {min}, found {v}")))
    }
}

/// Final time in units of 1/κ from `numerics.t_final` or `numerics.sqrtN_g_t`.
#[derive(Clone, Copy, Debug)]
pub enum Horizon {
    KappaT(f64),
    ScaledT(f64),
}

impl Horizon {
    pub fn parse(cfg: &Config, default: Horizon) -> ConfigResult<Self> {
        let k = cfg.f64("numerics.t_final")?;
        let s = cfg.f64("numerics.sqrtN_g_t")?;
        match (k, s) {
            (Some(_), Some(_)) => Err(ConfigError::at(
                "numerics.sqrtN_g_t",
                "set either numerics.t_final or numerics.sqrtN_g_t",
            )),
            (Some(t), None) => Ok(Horizon::KappaT(positive("numerics.t_final", t)?)),
            (None, Some(t)) => Ok(Horizon::ScaledT(positive("numerics.sqrtN_g_t", t)?)),
            (None, None) => Ok(default),
        }
    }

    pub fn kappa_t(self, g_col: f64) -> f64 {
        match self {
            Horizon::KappaT(t) => t,
            Horizon::ScaledT(s) => s / g_col,
        }
    }
}

pub fn samples(cfg: &Config, default: usize) -> ConfigResult<usize> {
    let n = cfg.usize("numerics.samples")?.unwrap_or(default);
    at_least("numerics.samples", n, 1)
}

/// Propagates on the grid `t_k = k t_final / samples` and maps each sampled
/// state through `f`. The step is the automatic one shrunk to divide the
/// sample interval, so runs with different generators share sample times.
pub fn run_on_grid<T>(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    base: &PropagationConfig,
    samples: usize,
    mut f: impl FnMut(&DensityMatrix) -> floqsq::Result<T>,
) -> floqsq::Result<(Vec<T>, Diagnostics)> {
    let mut cfg = base.clone();
    let interval = cfg.t_final / samples as f64;
    let dt_auto = cfg.resolve_dt(l).min(interval);
    let sub = (interval / dt_auto - 1e-9).ceil().max(1.0) as usize;
    cfg.dt = Some(interval / sub as f64);
    cfg.sample_stride = sub;
    let mut out = Vec::with_capacity(samples + 1);
    let prop = propagate_liouvillian(l, rho0, &cfg, &[], |_, rho| {
        out.push(f(rho)?);
        Ok(())
    })?;
    if out.len() != samples + 1 {
        return Err(floqsq::Error::Solver(format!(
            "expected {} samples, integrator produced {}",
            samples + 1,
            out.len()
        )));
    }
    Ok((out, prop.diagnostics))
}

pub fn grid_times(t_final: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|k| t_final * k as f64 / samples as f64).collect()
}

/// Largest relative difference between a series and its enlarged-truncation rerun.
pub fn max_relative_change(base: &[f64], enlarged: &[f64]) -> f64 {
    base.iter()
        .zip(enlarged)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max)
}

pub fn truncation_entry(label: &str, cutoffs: Json, enlarged: Json, rel: f64) -> Json {
    json!({
        "run": label,
        "cutoffs": cutoffs,
        "enlarged": enlarged,
        "max_relative_xi2_change": rel,
        "tolerance": TRUNCATION_TOL,
        "flagged": !(rel <= TRUNCATION_TOL),
    })
}

pub fn diagnostics_json(d: &Diagnostics) -> Json {
    serde_json::to_value(d).unwrap_or(Json::Null)
}

pub fn flag_warnings(rec: &mut RunRecord, entries: &[Json]) {
    for e in entries {
        if e["flagged"] == json!(true) {
            rec.note(format!(
                "truncation check flagged for {}: relative ξ² change {} exceeds {}",
                e["run"], e["max_relative_xi2_change"], TRUNCATION_TOL
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_sorted_and_unique() {
        let names: Vec<&str> = SCENARIOS.iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), 8);
    }

    #[test]
    fn minimal_configs_validate() {
        for s in SCENARIOS {
            let cfg = Config::parse(s.minimal).unwrap();
            let name = cfg.str("scenario").unwrap().unwrap();
            assert_eq!(name, s.name);
            prepare(&name, &cfg).unwrap_or_else(|e| panic!("{}: {e}", s.name));
            for key in s.required {
                assert!(cfg.contains(key), "{} minimal config lacks {key}", s.name);
            }
        }
    }

    #[test]
    fn each_required_key_is_enforced() {
        for s in SCENARIOS {
            for key in s.required {
                let text: String = s
                    .minimal
                    .lines()
                    .filter(|l| !l.starts_with(&format!("{key} ")))
                    .map(|l| format!("{l}\n"))
                    .collect();
                let cfg = Config::parse(&text).unwrap();
                cfg.str("scenario").unwrap();
                let err = prepare(s.name, &cfg).err().expect("missing key accepted");
                assert_eq!(err.key.as_deref(), Some(*key), "{}", s.name);
            }
        }
    }

    #[test]
    fn g_col_spec_scales_single_atom_coupling() {
        let cfg = Config::parse("model.g_col = 10.0\n").unwrap();
        let spec = ModelSpec::parse(&cfg, Reference::SpinWave, ALL_MODEL_KEYS).unwrap();
        assert!((spec.at(100).g - 1.0).abs() < 1e-15);
        assert!((spec.at(25).g_col() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn imaginary_frequency_names_omega() {
        let cfg = Config::parse("model.omega_ratio = 1.5\n").unwrap();
        let spec = ModelSpec::parse(&cfg, Reference::Dicke, ALL_MODEL_KEYS).unwrap();
        assert_eq!(spec.checked(6).unwrap_err().key.as_deref(), Some("model.omega"));
    }

    #[test]
    fn grid_times_are_exact_multiples() {
        let t = grid_times(40.0, 160);
        assert_eq!(t.len(), 161);
        assert_eq!(t[160], 40.0);
        assert_eq!(t[4], 1.0);
    }
}
