//! Stripline-plus-SQUID drive mapping and experimental platform presets.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant [J s].
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Drive amplitudes above this fraction of `f0` trigger a warning.
pub const WEAK_DRIVE_RATIO: f64 = 0.1;

/// SQUID flux-phase drive `f(t) = f0 + [f1 + f2 sin(ω_m t)] cos(ω_L t + θ_L) + f3 sin(ω_m t)`
/// and the line quantities entering the quadratic potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Josephson energy in GHz·h.
    pub e_j_ghz: f64,
    /// Total line capacitance `C_0 d` [F].
    pub c0d: f64,
    /// Zero-point amplitude of the fundamental mode, in J^{1/2}·s so that
    /// `2 q²/(C_0 d)` is a squared flux.
    pub q_zpf0: f64,
    /// Mode wavenumber times line length.
    pub k0d: f64,
    pub f0: f64,
    pub f1: f64,
    /// Amplitude of the slowly modulated pump component `f2(t)`.
    pub f2: f64,
    pub f3: f64,
    pub theta_l: f64,
}

/// Drive strengths in rad/s with the sign of the prefactor kept.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriveAmplitudes {
    pub omega: f64,
    pub a_m: f64,
    pub omega1_amplitude: f64,
    pub warnings: Vec<String>,
}

impl DriveAmplitudes {
    /// The three amplitudes divided by `κ` given as `κ/2π` in MHz.
    pub fn in_units_of_kappa(&self, kappa_mhz: f64) -> [f64; 3] {
        let k = 2.0 * PI * kappa_mhz * 1e6;
        [self.omega / k, self.a_m / k, self.omega1_amplitude / k]
    }
}

/// `Ω = −2(2e/ħ)²(E_J/C_0d) q² f1 sin f0 cos²(k0 d)/ħ`, with `A_m` and `Ω₁`
/// obtained by replacing `f1` with `f3` and `f2`.
pub fn map_circuit(cp: &CircuitParams) -> Result<DriveAmplitudes> {
    let fields = [cp.e_j_ghz, cp.c0d, cp.q_zpf0, cp.k0d, cp.f0, cp.f1, cp.f2, cp.f3, cp.theta_l];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("circuit parameters must be finite".into()));
    }
    if cp.c0d <= 0.0 || cp.e_j_ghz <= 0.0 {
        return Err(Error::InvalidParameter("E_J and C0d must be positive".into()));
    }
    let s0 = cp.f0.sin();
    if s0.abs() < 1e-12 {
        return Err(Error::ZeroCoupling);
    }
    let e_j = cp.e_j_ghz * 1e9 * PLANCK;
    let phase = 2.0 * ELEMENTARY_CHARGE / HBAR;
    let unit = -2.0 * phase * phase * (e_j / cp.c0d) * cp.q_zpf0 * cp.q_zpf0 * s0 * cp.k0d.cos().powi(2) / HBAR;
    let mut warnings = Vec::new();
    for (name, v) in [("f1", cp.f1), ("f2", cp.f2), ("f3", cp.f3)] {
        if v.abs() > WEAK_DRIVE_RATIO * cp.f0.abs() {
            warnings.push(format!("{name} = {v} exceeds {WEAK_DRIVE_RATIO}·f0; weak-drive expansion is unreliable"));
        }
    }
    Ok(DriveAmplitudes {
        omega: unit * cp.f1,
        a_m: unit * cp.f3,
        omega1_amplitude: unit * cp.f2,
        warnings,
    })
}

/// A reported value with its qualifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    /// Reported as "about".
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub approximate: bool,
    /// Reported as an upper bound only.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub upper_bound: bool,
}

/// One experimental platform. Frequencies are divided by 2π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformPreset {
    pub name: String,
    /// Cavity frequency tunable through a SQUID.
    pub tunable: bool,
    /// GHz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Quantity>,
    /// MHz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Quantity>,
    /// MHz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_col: Option<Quantity>,
    /// MHz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_phi: Option<Quantity>,
    /// Hz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Quantity>,
}

/// Preset rates divided by κ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PresetInModelUnits {
    pub omega_c: Option<f64>,
    pub g_col: Option<f64>,
    pub gamma_phi: Option<f64>,
    pub gamma: Option<f64>,
    /// Single-atom coupling `g_col/√N`.
    pub g: Option<f64>,
}

impl PlatformPreset {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega_c,
            self.q,
            self.kappa,
            self.n,
            self.g_col,
            self.gamma_phi,
            self.gamma,
        ];
        for q in all.iter().flatten() {
            if !q.value.is_finite() || q.value < 0.0 {
                return Err(Error::PresetFormat(format!(
                    "{}: values must be finite and non-negative",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// `C = g_col²/(κγ)` with γ in Hz; `gamma_hz` replaces the stored γ.
    /// `None` when κ, `g_col` or γ is missing.
    pub fn cooperativity(&self, gamma_hz: Option<f64>) -> Option<f64> {
        let kappa = self.kappa?.value * 1e6;
        let g_col = self.g_col?.value * 1e6;
        let gamma = gamma_hz.or(self.gamma.map(|q| q.value))?;
        Some(g_col * g_col / (kappa * gamma))
    }

    /// Same quantity from `N g²/(κγ)` with `g = g_col/√N`; needs `N`.
    pub fn cooperativity_per_atom(&self, gamma_hz: Option<f64>) -> Option<f64> {
        let n = self.n?.value;
        let kappa = self.kappa?.value * 1e6;
        let g = self.g_col?.value * 1e6 / n.sqrt();
        let gamma = gamma_hz.or(self.gamma.map(|q| q.value))?;
        Some(n * g * g / (kappa * gamma))
    }

    /// Converts to the internal units with κ as scale. Fails without κ.
    pub fn in_model_units(&self) -> Result<PresetInModelUnits> {
        let kappa_mhz = self
            .kappa
            .ok_or_else(|| Error::InvalidParameter(format!("preset {} has no cavity loss rate", self.name)))?
            .value;
        let scale = |q: Option<Quantity>, to_mhz: f64| q.map(|q| q.value * to_mhz / kappa_mhz);
        let g_col = scale(self.g_col, 1.0);
        Ok(PresetInModelUnits {
            omega_c: scale(self.omega_c, 1e3),
            g_col,
            gamma_phi: scale(self.gamma_phi, 1.0),
            gamma: scale(self.gamma, 1e-6),
            g: g_col.zip(self.n).map(|(g, n)| g / n.value.sqrt()),
        })
    }
}

#[derive(Deserialize, Serialize)]
struct PresetFile {
    preset: Vec<PlatformPreset>,
}

const PRESET_DATA: &str = include_str!("../data/presets.toml");

fn presets() -> &'static BTreeMap<String, PlatformPreset> {
    static PRESETS: OnceLock<BTreeMap<String, PlatformPreset>> = OnceLock::new();
    PRESETS.get_or_init(|| {
        let file = parse_presets(PRESET_DATA).expect("embedded preset table is valid");
        file.into_iter().map(|p| (p.name.clone(), p)).collect()
    })
}

/// Parses a preset table in the embedded format.
pub fn parse_presets(text: &str) -> Result<Vec<PlatformPreset>> {
    let file: PresetFile = toml::from_str(text).map_err(|e| Error::PresetFormat(e.to_string()))?;
    for p in &file.preset {
        p.validate()?;
    }
    Ok(file.preset)
}

/// Serializes presets in the format read by [`parse_presets`].
pub fn write_presets(presets: &[PlatformPreset]) -> Result<String> {
    toml::to_string(&PresetFile {
        preset: presets.to_vec(),
    })
    .map_err(|e| Error::PresetFormat(e.to_string()))
}

/// Preset names in table order.
pub fn preset_names() -> Vec<&'static str> {
    let mut order: Vec<(usize, &str)> = Vec::new();
    for name in presets().keys() {
        let pos = PRESET_DATA.find(&format!("name = \"{name}\"")).unwrap_or(usize::MAX);
        order.push((pos, name.as_str()));
    }
    order.sort();
    order.into_iter().map(|(_, n)| n).collect()
}

pub fn load_preset(name: &str) -> Result<PlatformPreset> {
    presets().get(name).cloned().ok_or_else(|| Error::UnknownPreset {
        name: name.to_string(),
        available: preset_names().join(", "),
    })
}

pub fn all_presets() -> Vec<PlatformPreset> {
    preset_names().into_iter().map(|n| presets()[n].clone()).collect()
}
