//! Closed-form steady state and squeezing dynamics of the spin-wave model,
//! the adiabatic reduced model obtained by eliminating the cavity, and the
//! device-scale projection built on top of them.
//!
//! Rates are in units of κ unless a function says otherwise.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{boson_annihilation, DensityMatrix, Operator, SPIN_WAVE};
use crate::liouville::{
    propagate_liouvillian, steady_state, Dissipator, Liouvillian, PropagationConfig, SteadyState,
};
use crate::model::{a_factor_from_cooperativity, a_factor_from_rates, ModelParams};
use crate::observables::{swa_moments, to_db, SwaMoments};

/// Default spin-wave truncation of the adiabatic model.
pub const ADIABATIC_N_B: usize = 12;
/// Largest `γ/κ` for which the adiabatic model is flagged as valid.
pub const ADIABATIC_MAX_GAMMA_RATIO: f64 = 0.1;

/// Inputs of the closed-form predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticParams {
    pub g_minus: f64,
    pub g_plus: f64,
    /// Collective coupling `√N g`.
    pub g_col: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl AnalyticParams {
    pub fn from_model(p: &ModelParams) -> Result<Self> {
        let d = p.derive()?;
        Ok(Self {
            g_minus: d.g_minus,
            g_plus: d.g_plus,
            g_col: d.g_col,
            kappa: p.kappa,
            gamma: p.gamma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.g_minus, self.g_plus, self.g_col, self.kappa, self.gamma];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("analytic parameters must be finite".into()));
        }
        if self.kappa <= 0.0 || self.gamma < 0.0 || self.g_plus < 0.0 || self.g_col < 0.0 {
            return Err(Error::InvalidParameter(
                "need κ > 0 and non-negative γ, G_+ and collective coupling".into(),
            ));
        }
        if self.g_plus >= self.g_minus {
            return Err(Error::UnstableSqueezing {
                g_plus: self.g_plus,
                g_minus: self.g_minus,
            });
        }
        Ok(())
    }

    /// `G² = G_−² − G_+²`
    pub fn g_eff_sq(&self) -> f64 {
        self.g_minus * self.g_minus - self.g_plus * self.g_plus
    }

    /// `tanh r = G_+/G_−`
    pub fn r(&self) -> f64 {
        (self.g_plus / self.g_minus).atanh()
    }

    /// Cavity-induced decay `γ_c = 4G² g_col²/κ`.
    pub fn gamma_c(&self) -> f64 {
        4.0 * self.g_eff_sq() * self.g_col * self.g_col / self.kappa
    }

    /// `C = g_col²/(κγ)`, infinite at γ = 0.
    pub fn cooperativity(&self) -> f64 {
        if self.gamma == 0.0 {
            f64::INFINITY
        } else {
            self.g_col * self.g_col / (self.kappa * self.gamma)
        }
    }

    /// `𝒜` in the cooperativity form.
    pub fn a_factor(&self) -> f64 {
        a_factor_from_cooperativity(self.g_eff_sq(), self.cooperativity(), self.gamma / self.kappa)
    }

    /// `𝒜` in the rate form.
    pub fn a_factor_rates(&self) -> f64 {
        a_factor_from_rates(self.gamma_c(), self.gamma, self.kappa)
    }

    /// Relaxation rate `γ_c + γ` of both moments.
    pub fn relaxation_rate(&self) -> f64 {
        self.gamma_c() + self.gamma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticSteadyState {
    pub n_b: f64,
    pub corr: C64,
    pub xi2_ss: f64,
    pub a_factor: f64,
    pub r: f64,
    pub gamma_c: f64,
}

pub fn analytic_steady(p: &AnalyticParams) -> Result<AnalyticSteadyState> {
    p.validate()?;
    let a = p.a_factor();
    let r = p.r();
    Ok(AnalyticSteadyState {
        n_b: a * r.sinh().powi(2),
        corr: C64::new(-a * (2.0 * r).sinh() / 2.0, 0.0),
        xi2_ss: 1.0 + a * ((-2.0 * r).exp() - 1.0),
        a_factor: a,
        r,
        gamma_c: p.gamma_c(),
    })
}

/// Spin-wave moments at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub n_b: f64,
    pub corr: C64,
    pub xi2: f64,
}

/// Moments relaxing exponentially at `γ_c + γ` from zero initial moments.
pub fn analytic_evolution(p: &AnalyticParams, t: f64) -> Result<MomentPoint> {
    analytic_evolution_from(p, 0.0, C64::new(0.0, 0.0), t)
}

/// As [`analytic_evolution`] from arbitrary initial `⟨b†b⟩` and `⟨bb⟩`.
/// With zero initial moments `ξ²` reduces to `ξ²_ss − (ξ²_ss − 1)e^{−(γ_c+γ)t}`.
pub fn analytic_evolution_from(p: &AnalyticParams, n_b0: f64, corr0: C64, t: f64) -> Result<MomentPoint> {
    let ss = analytic_steady(p)?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t} must be finite and non-negative")));
    }
    let decay = (-p.relaxation_rate() * t).exp();
    let n_b = (n_b0 - ss.n_b) * decay + ss.n_b;
    let corr = (corr0 - ss.corr) * decay + ss.corr;
    let xi2 = if n_b0 == 0.0 && corr0 == C64::new(0.0, 0.0) {
        ss.xi2_ss - (ss.xi2_ss - 1.0) * decay
    } else {
        1.0 + 2.0 * (n_b - corr.norm())
    };
    Ok(MomentPoint { t, n_b, corr, xi2 })
}

/// Whether `γ ≪ κ` holds well enough for the adiabatic model.
pub fn adiabatic_regime(p: &AnalyticParams) -> bool {
    p.gamma <= ADIABATIC_MAX_GAMMA_RATIO * p.kappa
}

/// Squeezed-mode operator `β = cosh(r) b + sinh(r) b†` on `n_b + 1` Fock levels.
pub fn beta_operator(r: f64, n_b: usize) -> Result<Operator> {
    let b = boson_annihilation(SPIN_WAVE, n_b)?;
    Ok(&(&b * r.cosh()) + &(&b.adjoint() * r.sinh()))
}

/// `γ_c ℒ(β)/2` and `γ ℒ(b)/2`.
pub fn adiabatic_dissipators(p: &AnalyticParams, n_b: usize) -> Result<Vec<Dissipator>> {
    p.validate()?;
    let b = boson_annihilation(SPIN_WAVE, n_b)?;
    Ok(vec![
        Dissipator::new(beta_operator(p.r(), n_b)?, p.gamma_c())?,
        Dissipator::new(b, p.gamma)?,
    ])
}

/// Right-hand side of the adiabatic master equation for a spin-wave state.
pub fn adiabatic_rhs(rho: &DensityMatrix, p: &AnalyticParams) -> Result<Array2<C64>> {
    let sig = rho.signature();
    if sig.factors().len() != 1 || sig.position(SPIN_WAVE).is_err() {
        return Err(Error::DimensionMismatch(
            "adiabatic model acts on a single spin-wave factor".into(),
        ));
    }
    let diss = adiabatic_dissipators(p, rho.dim() - 1)?;
    crate::liouville::lindblad_rhs(&Operator::zeros(sig), &diss, rho)
}

/// Adiabatic steady state with the moment shift from doubling `n_b`.
#[derive(Clone, Debug)]
pub struct AdiabaticSteadyState {
    pub solve: SteadyState,
    pub moments: SwaMoments,
    pub n_b: usize,
    /// Largest change of `⟨b†b⟩` or `|⟨bb⟩|` when `n_b` is doubled.
    pub truncation_shift: f64,
}

fn adiabatic_solve(p: &AnalyticParams, n_b: usize) -> Result<(SteadyState, SwaMoments)> {
    let diss = adiabatic_dissipators(p, n_b)?;
    let sig = diss[0].op.signature().clone();
    let ss = steady_state(&Operator::zeros(&sig), &diss)?;
    let m = swa_moments(&ss.state)?;
    Ok((ss, m))
}

pub fn adiabatic_steady_state(p: &AnalyticParams, n_b: usize) -> Result<AdiabaticSteadyState> {
    let (solve, moments) = adiabatic_solve(p, n_b)?;
    let (_, doubled) = adiabatic_solve(p, 2 * n_b)?;
    let shift = (moments.n_b - doubled.n_b)
        .abs()
        .max((moments.bb.norm() - doubled.bb.norm()).abs());
    Ok(AdiabaticSteadyState {
        solve,
        moments,
        n_b,
        truncation_shift: shift,
    })
}

/// Propagates the adiabatic model from the spin-wave vacuum and returns the
/// moments at every sample.
pub fn adiabatic_evolution(p: &AnalyticParams, n_b: usize, config: &PropagationConfig) -> Result<Vec<MomentPoint>> {
    let diss = adiabatic_dissipators(p, n_b)?;
    let sig = diss[0].op.signature().clone();
    let l = Liouvillian::constant(&Operator::zeros(&sig), &diss)?;
    let rho0 = DensityMatrix::basis(sig, 0)?;
    let mut out = Vec::new();
    propagate_liouvillian(&l, &rho0, config, &[], |t, rho| {
        let m = swa_moments(rho)?;
        out.push(MomentPoint {
            t,
            n_b: m.n_b,
            corr: m.bb,
            xi2: m.xi2,
        });
        Ok(())
    })?;
    Ok(out)
}

/// How the single-atom coupling behaves as `N` varies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Fixed `g`; `g_col = g√N`.
    FixedSingleAtom { g: f64 },
    /// Fixed `g_col`.
    FixedCollective,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n_atoms: usize,
    pub g_col: f64,
    pub cooperativity: f64,
    pub a_factor: f64,
    pub n_b: f64,
    pub xi2_ss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingProbe {
    pub rows: Vec<ScalingRow>,
    /// Least-squares `μ` in `ξ²_ss ∝ N^{−μ}`; `None` with fewer than two
    /// distinct `N`.
    pub mu: Option<f64>,
}

pub fn scaling_probe(p: &AnalyticParams, n_list: &[usize], mode: ScalingMode) -> Result<ScalingProbe> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::InvalidParameter("atom number must be ≥ 1".into()));
        }
        let mut q = *p;
        if let ScalingMode::FixedSingleAtom { g } = mode {
            q.g_col = g * (n as f64).sqrt();
        }
        let ss = analytic_steady(&q)?;
        rows.push(ScalingRow {
            n_atoms: n,
            g_col: q.g_col,
            cooperativity: q.cooperativity(),
            a_factor: ss.a_factor,
            n_b: ss.n_b,
            xi2_ss: ss.xi2_ss,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n_atoms as f64).ln(), r.xi2_ss.ln()))
        .collect();
    Ok(ScalingProbe {
        mu: log_slope(&pts).map(|s| -s),
        rows,
    })
}

fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Squeezing parameter `r` whose steady state reaches `target` (linear).
/// At γ = 0 this is `−ln(target)/2`; otherwise `𝒜` depends on `r` through
/// `G` and the increasing branch of `ξ²_ss(r)` is searched.
pub fn r_for_target(g_minus: f64, g_col: f64, kappa: f64, gamma: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("target ξ² = {target} must lie in (0, 1)")));
    }
    if gamma == 0.0 {
        return Ok(-target.ln() / 2.0);
    }
    let xi = |r: f64| -> f64 {
        let p = AnalyticParams {
            g_minus,
            g_plus: g_minus * r.tanh(),
            g_col,
            kappa,
            gamma,
        };
        analytic_steady(&p).map(|s| s.xi2_ss).unwrap_or(f64::INFINITY)
    };
    // golden-section search for the optimum
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if xi(a) < xi(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let r_opt = 0.5 * (lo + hi);
    if xi(r_opt) > target {
        return Err(Error::InvalidParameter(format!(
            "target ξ² = {target} below the optimum {} reachable at these rates",
            xi(r_opt)
        )));
    }
    let (mut lo, mut hi) = (0.0, r_opt);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Earliest time at which `ξ²(t)` from zero initial moments is within
/// `margin_db` of its steady-state value; zero if there is no squeezing.
pub fn reach_time(p: &AnalyticParams, margin_db: f64) -> Result<f64> {
    let ss = analytic_steady(p)?;
    if ss.xi2_ss >= 1.0 {
        return Ok(0.0);
    }
    let bound = ss.xi2_ss * 10f64.powf(margin_db / 10.0);
    if bound >= 1.0 {
        return Ok(0.0);
    }
    Ok(-((bound - ss.xi2_ss) / (1.0 - ss.xi2_ss)).ln() / p.relaxation_rate())
}

/// Device inputs in ordinary frequency units (`x/2π` in MHz).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviceInputs {
    pub g_col_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub g_minus: f64,
    pub target_db: f64,
}

impl DeviceInputs {
    /// `√N g/2π = 10 MHz`, `κ/2π = 1 MHz`, `γ = 0` and `G_− = 0.17`.
    pub fn reference(target_db: f64) -> Self {
        Self {
            g_col_mhz: 10.0,
            kappa_mhz: 1.0,
            gamma_mhz: 0.0,
            g_minus: 0.17,
            target_db,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviceProjection {
    pub inputs: DeviceInputs,
    /// Same system in units of κ.
    pub params: AnalyticParams,
    pub r: f64,
    pub xi2_ss_db: f64,
    /// `γ_c` in s⁻¹.
    pub gamma_c_per_s: f64,
    /// Earliest time within 1 dB of the steady state, in seconds.
    pub t_reach_s: f64,
}

impl DeviceProjection {
    /// Seconds per unit of `κt`.
    pub fn time_unit_s(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.inputs.kappa_mhz * 1e6)
    }

    /// `ξ²` in dB at time `t_s` seconds.
    pub fn xi2_db_at(&self, t_s: f64) -> Result<f64> {
        Ok(to_db(analytic_evolution(&self.params, t_s / self.time_unit_s())?.xi2))
    }
}

pub fn device_projection(inputs: DeviceInputs) -> Result<DeviceProjection> {
    if !(inputs.kappa_mhz > 0.0) || inputs.gamma_mhz < 0.0 || !(inputs.g_col_mhz > 0.0) {
        return Err(Error::InvalidParameter("device rates must be positive (γ may be zero)".into()));
    }
    let g_col = inputs.g_col_mhz / inputs.kappa_mhz;
    let gamma = inputs.gamma_mhz / inputs.kappa_mhz;
    let target = 10f64.powf(inputs.target_db / 10.0);
    let r = r_for_target(inputs.g_minus, g_col, 1.0, gamma, target)?;
    let params = AnalyticParams {
        g_minus: inputs.g_minus,
        g_plus: inputs.g_minus * r.tanh(),
        g_col,
        kappa: 1.0,
        gamma,
    };
    let ss = analytic_steady(&params)?;
    let mut out = DeviceProjection {
        inputs,
        params,
        r,
        xi2_ss_db: to_db(ss.xi2_ss),
        gamma_c_per_s: 0.0,
        t_reach_s: 0.0,
    };
    let unit = out.time_unit_s();
    out.gamma_c_per_s = ss.gamma_c / unit;
    out.t_reach_s = reach_time(&params, 1.0)? * unit;
    Ok(out)
}
