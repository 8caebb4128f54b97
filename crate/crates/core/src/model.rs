//! Model parameters, derived couplings and Hamiltonian builders.
//!
//! All frequencies and rates are in units of the cavity loss rate, so
//! `kappa = 1` in every paper-scale configuration. The rotating frame is fixed
//! by two resonance conditions: the atomic detuning sits on the lower squeezing
//! sideband (`Δ_q = −ω_s`) and the modulation drives the first Floquet sideband
//! (`ω_m = 2ω_s`, plus the collective shift `δ` when compensation is on).

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    boson_annihilation, dicke_spin_operators, embed, fock_annihilation, DensityMatrix, Operator, SpaceSignature,
    CAVITY, SPIN, SPIN_WAVE,
};
use crate::liouville::Dissipator;

/// Cavity-frequency modulation amplitude `A_m`, either in units of κ or as a
/// fraction of the modulation frequency `ω_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationAmplitude {
    Absolute(f64),
    Relative(f64),
}

/// Which closed form of the collective detuning `δ` is used for compensation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaBranch {
    /// `δ = g₀²/ω_s`, with `g₀ = √N g cosh(r_c) J₀(η_m)`.
    #[default]
    Dressed,
    /// `δ = N g²/Δ_c`.
    Bare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_atoms: usize,
    /// Single-atom coupling.
    pub g: f64,
    /// Cavity detuning from half the two-photon drive frequency.
    pub delta_c: f64,
    /// Two-photon drive amplitude.
    pub omega: f64,
    pub modulation: ModulationAmplitude,
    /// Modulation frequency; `None` selects the sideband resonance.
    pub omega_m: Option<f64>,
    pub theta_l: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub compensate_delta: bool,
    pub delta_branch: DeltaBranch,
}

impl ModelParams {
    /// Single-ensemble parameters of the Dicke-model runs: `g = 0.5`,
    /// `Δ_c = 200`, `Ω = 0.2 Δ_c`, `A_m = 0.34 ω_m`, `γ = 0.01`.
    pub fn dicke_reference(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            g: 0.5,
            delta_c: 200.0,
            omega: 40.0,
            modulation: ModulationAmplitude::Relative(0.34),
            omega_m: None,
            theta_l: -FRAC_PI_2,
            kappa: 1.0,
            gamma: 0.01,
            compensate_delta: false,
            delta_branch: DeltaBranch::Dressed,
        }
    }

    /// Spin-wave comparison parameters: `Δ_c = 200`, `Ω = 0.1 Δ_c`,
    /// `A_m = 0.15 ω_m`, `γ = 0.01`, `√N g = 10`, with δ compensation.
    pub fn spin_wave_reference(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            g: 10.0 / (n_atoms as f64).sqrt(),
            delta_c: 200.0,
            omega: 20.0,
            modulation: ModulationAmplitude::Relative(0.15),
            omega_m: None,
            theta_l: -FRAC_PI_2,
            kappa: 1.0,
            gamma: 0.01,
            compensate_delta: true,
            delta_branch: DeltaBranch::Dressed,
        }
    }

    /// Collective coupling `√N g`.
    pub fn g_col(&self) -> f64 {
        (self.n_atoms as f64).sqrt() * self.g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 {
            return Err(Error::InvalidParameter("atom number N must be ≥ 1".into()));
        }
        let named = [
            ("g", self.g),
            ("delta_c", self.delta_c),
            ("omega", self.omega),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("theta_l", self.theta_l),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} is not finite")));
            }
        }
        for (name, v) in [("g", self.g), ("omega", self.omega), ("kappa", self.kappa), ("gamma", self.gamma)] {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be ≥ 0")));
            }
        }
        match self.modulation {
            ModulationAmplitude::Absolute(a) | ModulationAmplitude::Relative(a) if !(a >= 0.0 && a.is_finite()) => {
                return Err(Error::InvalidParameter(format!("modulation amplitude {a} must be ≥ 0")));
            }
            _ => {}
        }
        if let Some(w) = self.omega_m {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("omega_m = {w} must be > 0")));
            }
        }
        if self.omega >= self.delta_c {
            return Err(Error::ImaginaryFrequency {
                omega: self.omega,
                delta_c: self.delta_c,
            });
        }
        Ok(())
    }

    /// Frame quantities that exist for any valid parameter set.
    pub fn frame(&self) -> Result<RotatingFrame> {
        self.validate()?;
        RotatingFrame::compute(self)
    }

    pub fn derive(&self) -> Result<DerivedCouplings> {
        DerivedCouplings::compute(self)
    }

    /// Fastest bare frequency of the problem, `max(2Δ_c, ω_m, |Δ_q|)`, used for
    /// the automatic step size.
    pub fn omega_max(&self) -> Result<f64> {
        let f = self.frame()?;
        Ok((2.0 * self.delta_c.abs()).max(f.omega_m).max(f.delta_q.abs()))
    }
}

/// Squeezed cavity mode, resonance conditions and sideband parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotatingFrame {
    pub r_c: f64,
    pub omega_s: f64,
    pub delta_q: f64,
    pub omega_m: f64,
    pub a_m: f64,
    pub a_m_prime: f64,
    pub eta_m: f64,
    /// Amplitude of the corrective drive `Ω₁(t) = A_m tanh(2r_c) sin(ω_m t)`.
    pub omega1_amplitude: f64,
    pub delta_bare: f64,
    pub delta_dressed: f64,
    pub delta_shift: f64,
    pub delta_branch: DeltaBranch,
}

impl RotatingFrame {
    fn compute(p: &ModelParams) -> Result<Self> {
        let r_c = squeezing_parameter(p.delta_c, p.omega)?;
        let omega_s = squeezed_mode_frequency(p.delta_c, p.omega)?;
        // A'_m = A_m cosh(2r_c)[1 − tanh²(2r_c)]
        let prime_factor = (2.0 * r_c).cosh() * (1.0 - (2.0 * r_c).tanh().powi(2));
        let g_col = p.g_col();
        let delta_bare = g_col * g_col / p.delta_c;
        let delta_dressed_at = |eta: f64| {
            let g0 = g_col * r_c.cosh() * bessel_j(0, eta);
            g0 * g0 / omega_s
        };
        let pick = |eta: f64| match p.delta_branch {
            DeltaBranch::Dressed => delta_dressed_at(eta),
            DeltaBranch::Bare => delta_bare,
        };

        let (omega_m, a_m) = match (p.modulation, p.omega_m) {
            (ModulationAmplitude::Absolute(a), Some(w)) => (w, a),
            (ModulationAmplitude::Relative(x), Some(w)) => (w, x * w),
            (ModulationAmplitude::Relative(x), None) => {
                // η_m does not depend on ω_m here
                let eta = x * prime_factor;
                let shift = if p.compensate_delta { pick(eta) } else { 0.0 };
                let w = 2.0 * omega_s + shift;
                (w, x * w)
            }
            (ModulationAmplitude::Absolute(a), None) => {
                let mut w = 2.0 * omega_s;
                if p.compensate_delta {
                    // δ depends on ω_m only through J₀(η_m); the map is a contraction
                    for _ in 0..100 {
                        let next = 2.0 * omega_s + pick(a * prime_factor / w);
                        let done = (next - w).abs() <= 1e-15 * next;
                        w = next;
                        if done {
                            break;
                        }
                    }
                }
                (w, a)
            }
        };
        let a_m_prime = a_m * prime_factor;
        let eta_m = a_m_prime / omega_m;
        let delta_dressed = delta_dressed_at(eta_m);
        let delta_shift = match p.delta_branch {
            DeltaBranch::Dressed => delta_dressed,
            DeltaBranch::Bare => delta_bare,
        };
        Ok(Self {
            r_c,
            omega_s,
            delta_q: -omega_s,
            omega_m,
            a_m,
            a_m_prime,
            eta_m,
            omega1_amplitude: a_m * (2.0 * r_c).tanh(),
            delta_bare,
            delta_dressed,
            delta_shift,
            delta_branch: p.delta_branch,
        })
    }

    pub fn g_minus(&self) -> f64 {
        self.a_m / (2.0 * self.omega_m)
    }
}

/// `r_c = ¼ ln[(Δ_c + Ω)/(Δ_c − Ω)]`
pub fn squeezing_parameter(delta_c: f64, omega: f64) -> Result<f64> {
    if omega >= delta_c {
        return Err(Error::ImaginaryFrequency { omega, delta_c });
    }
    Ok(0.25 * ((delta_c + omega) / (delta_c - omega)).ln())
}

/// `ω_s = √(Δ_c² − Ω²)`
pub fn squeezed_mode_frequency(delta_c: f64, omega: f64) -> Result<f64> {
    if omega >= delta_c {
        return Err(Error::ImaginaryFrequency { omega, delta_c });
    }
    Ok((delta_c * delta_c - omega * omega).sqrt())
}

/// Bessel function of the first kind for any integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let v = puruspe::Jn(n.unsigned_abs(), x);
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}

/// `𝒜` from the collective cooperativity: `4G²C / [(4G²C + 1)(1 + γ/κ)]`.
/// An infinite cooperativity (γ = 0) gives the limit `1/(1 + γ/κ)`.
pub fn a_factor_from_cooperativity(g_eff_sq: f64, coop: f64, gamma_over_kappa: f64) -> f64 {
    let x = 4.0 * g_eff_sq * coop;
    if x.is_infinite() {
        return 1.0 / (1.0 + gamma_over_kappa);
    }
    x / ((x + 1.0) * (1.0 + gamma_over_kappa))
}

/// `𝒜` from rates: `(γ_c/γ) / [(γ_c/γ + 1)(1 + γ/κ)]`.
pub fn a_factor_from_rates(gamma_c: f64, gamma: f64, kappa: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    let x = gamma_c / gamma;
    x / ((x + 1.0) * (1.0 + gamma / kappa))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedCouplings {
    #[serde(flatten)]
    pub frame: RotatingFrame,
    pub g_col: f64,
    pub g_minus: f64,
    pub g_plus: f64,
    /// `G = √(G_−² − G_+²)`
    pub g_eff: f64,
    /// `tanh r = G_+/G_−`
    pub r: f64,
    pub gamma_c: f64,
    /// Collective cooperativity `N g²/(κγ)`; infinite for γ = 0.
    pub coop: f64,
    pub a_factor: f64,
}

impl DerivedCouplings {
    pub fn compute(p: &ModelParams) -> Result<Self> {
        let frame = p.frame()?;
        let g_minus = frame.g_minus();
        let g_plus = p.omega / (2.0 * p.delta_c);
        if g_plus >= g_minus {
            return Err(Error::UnstableSqueezing { g_plus, g_minus });
        }
        let g_eff_sq = g_minus * g_minus - g_plus * g_plus;
        let g_col = p.g_col();
        let gamma_c = 4.0 * g_eff_sq * g_col * g_col / p.kappa;
        let coop = if p.gamma == 0.0 {
            f64::INFINITY
        } else {
            g_col * g_col / (p.kappa * p.gamma)
        };
        Ok(Self {
            frame,
            g_col,
            g_minus,
            g_plus,
            g_eff: g_eff_sq.sqrt(),
            r: (g_plus / g_minus).atanh(),
            gamma_c,
            coop,
            a_factor: a_factor_from_cooperativity(g_eff_sq, coop, p.gamma / p.kappa),
        })
    }
}

/// Time dependence of a Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Waveform {
    Constant,
    Sine { omega: f64 },
}

impl Waveform {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Waveform::Constant => 1.0,
            Waveform::Sine { omega } => (omega * t).sin(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub op: Operator,
    pub waveform: Waveform,
}

/// `H(t) = Σ_k f_k(t) H_k` with scalar waveforms `f_k`.
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    terms: Vec<HamiltonianTerm>,
}

impl TimeDependentHamiltonian {
    pub fn new(terms: Vec<HamiltonianTerm>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("Hamiltonian needs at least one term".into()))?;
        let sig = first.op.signature().clone();
        if terms.iter().any(|t| t.op.signature() != &sig) {
            return Err(Error::DimensionMismatch("Hamiltonian terms on different spaces".into()));
        }
        Ok(Self { terms })
    }

    pub fn constant(op: Operator) -> Self {
        Self {
            terms: vec![HamiltonianTerm {
                op,
                waveform: Waveform::Constant,
            }],
        }
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    pub fn signature(&self) -> &SpaceSignature {
        self.terms[0].op.signature()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.waveform == Waveform::Constant)
    }

    /// Common period of the sinusoidal terms, if any.
    pub fn period(&self) -> Option<f64> {
        self.terms.iter().find_map(|t| match t.waveform {
            Waveform::Sine { omega } => Some(2.0 * PI / omega),
            Waveform::Constant => None,
        })
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut acc = Operator::zeros(self.signature());
        for term in &self.terms {
            acc = acc
                .try_add(&term.op, C64::new(term.waveform.at(t), 0.0))
                .expect("terms share a signature");
        }
        acc
    }
}

struct CavitySpinOps {
    a: Operator,
    sz: Operator,
    sp: Operator,
    sm: Operator,
}

fn cavity_spin_ops(n_max: usize, n_atoms: usize) -> Result<CavitySpinOps> {
    let sig = SpaceSignature::cavity_spin(n_max, n_atoms)?;
    let a = embed(&sig, CAVITY, &fock_annihilation(n_max)?)?;
    let s = dicke_spin_operators(n_atoms)?;
    Ok(CavitySpinOps {
        a,
        sz: embed(&sig, SPIN, &s.sz)?,
        sp: embed(&sig, SPIN, &s.sp)?,
        sm: embed(&sig, SPIN, &s.sm)?,
    })
}

/// `e^{iθ} a² + e^{−iθ} a†²`
fn two_photon_term(a: &Operator, theta: f64) -> Operator {
    let a2 = a * a;
    let phase = C64::from_polar(1.0, theta);
    a2.scale(phase).try_add(&a2.adjoint(), phase.conj()).expect("same space")
}

/// Shared cavity part: static `Δ_c a†a + ½Ω(e^{iθ}a² + h.c.)` and the
/// modulated `A_m a†a + ½A_m tanh(2r_c)(e^{iθ}a² + h.c.)`.
fn cavity_terms(p: &ModelParams, frame: &RotatingFrame, a: &Operator) -> (Operator, Operator) {
    let n = &a.adjoint() * a;
    let pair = two_photon_term(a, p.theta_l);
    let stat = &(&n * p.delta_c) + &(&pair * (0.5 * p.omega));
    let modulated = &(&n * frame.a_m) + &(&pair * (0.5 * frame.omega1_amplitude));
    (stat, modulated)
}

/// Full rotating-frame Hamiltonian on cavity (`n_max`) ⊗ Dicke manifold:
/// `H(t) = H₀ + sin(ω_m t) H₁`.
pub fn full_hamiltonian(p: &ModelParams, n_max: usize) -> Result<TimeDependentHamiltonian> {
    let frame = p.frame()?;
    let ops = cavity_spin_ops(n_max, p.n_atoms)?;
    let (cav_static, cav_mod) = cavity_terms(p, &frame, &ops.a);
    let coupling = &(&ops.a * &ops.sp) + &(&ops.a.adjoint() * &ops.sm);
    let h0 = &(&cav_static + &(&ops.sz * frame.delta_q)) + &(&coupling * p.g);
    TimeDependentHamiltonian::new(vec![
        HamiltonianTerm {
            op: h0,
            waveform: Waveform::Constant,
        },
        HamiltonianTerm {
            op: cav_mod,
            waveform: Waveform::Sine { omega: frame.omega_m },
        },
    ])
}

/// `H(t)` evaluated at a single time.
pub fn full_hamiltonian_at(p: &ModelParams, n_max: usize, t: f64) -> Result<Operator> {
    Ok(full_hamiltonian(p, n_max)?.at(t))
}

/// `H_eff = g a†(G_− S_− + G_+ S_+) + h.c.` in the gauge `θ_L = −π/2` with the
/// phase `i` absorbed into `a`.
pub fn effective_hamiltonian(p: &ModelParams, n_max: usize) -> Result<Operator> {
    let frame = p.frame()?;
    let ops = cavity_spin_ops(n_max, p.n_atoms)?;
    let g_minus = frame.g_minus();
    let g_plus = p.omega / (2.0 * p.delta_c);
    let jump = &(&ops.sm * g_minus) + &(&ops.sp * g_plus);
    let half = &(&ops.a.adjoint() * &jump) * p.g;
    Ok(&half + &half.adjoint())
}

/// Spin-wave versions of the full and effective Hamiltonians on
/// cavity (`n_a`) ⊗ spin-wave boson (`n_b`), with `S_− → √N b`.
pub fn swa_hamiltonians(
    p: &ModelParams,
    n_a: usize,
    n_b: usize,
) -> Result<(TimeDependentHamiltonian, Operator)> {
    let frame = p.frame()?;
    let sig = SpaceSignature::two_mode(n_a, n_b)?;
    let a = embed(&sig, CAVITY, &fock_annihilation(n_a)?)?;
    let b = embed(&sig, SPIN_WAVE, &boson_annihilation(SPIN_WAVE, n_b)?)?;
    let g_col = p.g_col();

    let (cav_static, cav_mod) = cavity_terms(p, &frame, &a);
    let nb = &b.adjoint() * &b;
    // Δ_q S_z → Δ_q b†b up to a constant
    let exchange = &(&a * &b.adjoint()) + &(&a.adjoint() * &b);
    let h0 = &(&cav_static + &(&nb * frame.delta_q)) + &(&exchange * g_col);
    let full = TimeDependentHamiltonian::new(vec![
        HamiltonianTerm {
            op: h0,
            waveform: Waveform::Constant,
        },
        HamiltonianTerm {
            op: cav_mod,
            waveform: Waveform::Sine { omega: frame.omega_m },
        },
    ])?;

    let g_minus = frame.g_minus();
    let g_plus = p.omega / (2.0 * p.delta_c);
    let jump = &(&b * g_minus) + &(&b.adjoint() * g_plus);
    let half = &(&a.adjoint() * &jump) * g_col;
    Ok((full, &half + &half.adjoint()))
}

/// Amplitudes of the `n`-th Floquet sideband of the two spin-cavity couplings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SidebandAmplitudes {
    /// `g cosh(r_c) iⁿ Jₙ(η_m)` multiplying `a S_+`.
    pub co_rotating: C64,
    /// `g sinh(r_c) iⁿ Jₙ(η_m)` multiplying `a S_−`.
    pub counter_rotating: C64,
}

pub fn sideband_coupling(n: i32, p: &ModelParams) -> Result<SidebandAmplitudes> {
    let frame = p.frame()?;
    let weight = C64::i().powi(n) * bessel_j(n, frame.eta_m);
    Ok(SidebandAmplitudes {
        co_rotating: weight * (p.g * frame.r_c.cosh()),
        counter_rotating: weight * (p.g * frame.r_c.sinh()),
    })
}

/// `κ ℒ(a)/2` and the collective `γ ℒ(S_−)/(2N)`.
pub fn full_dissipators(p: &ModelParams, n_max: usize) -> Result<Vec<Dissipator>> {
    p.validate()?;
    let ops = cavity_spin_ops(n_max, p.n_atoms)?;
    Ok(vec![
        Dissipator::new(ops.a, p.kappa)?,
        Dissipator::new(ops.sm, p.gamma / p.n_atoms as f64)?,
    ])
}

/// `κ ℒ(a)/2` and `γ ℒ(b)/2` on cavity (`n_a`) ⊗ spin wave (`n_b`).
pub fn swa_dissipators(p: &ModelParams, n_a: usize, n_b: usize) -> Result<Vec<Dissipator>> {
    p.validate()?;
    let sig = SpaceSignature::two_mode(n_a, n_b)?;
    let a = embed(&sig, CAVITY, &fock_annihilation(n_a)?)?;
    let b = embed(&sig, SPIN_WAVE, &boson_annihilation(SPIN_WAVE, n_b)?)?;
    Ok(vec![Dissipator::new(a, p.kappa)?, Dissipator::new(b, p.gamma)?])
}

/// Cavity vacuum with all atoms in the ground state `|m = −N/2⟩`.
pub fn ground_state(n_max: usize, n_atoms: usize) -> Result<DensityMatrix> {
    let sig = SpaceSignature::cavity_spin(n_max, n_atoms)?;
    DensityMatrix::basis(sig, n_atoms)
}

/// Joint vacuum of cavity and spin wave.
pub fn swa_vacuum(n_a: usize, n_b: usize) -> Result<DensityMatrix> {
    DensityMatrix::basis(SpaceSignature::two_mode(n_a, n_b)?, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Operator;
    use approx::assert_relative_eq;

    fn params_with(omega: f64, a_m_ratio: f64) -> ModelParams {
        ModelParams {
            omega,
            modulation: ModulationAmplitude::Relative(a_m_ratio),
            ..ModelParams::dicke_reference(4)
        }
    }

    #[test]
    fn squeezed_mode_closed_forms() {
        // values from a 30-digit evaluation of ¼ln(240/160) and √(200² − 40²)
        let d = params_with(40.0, 0.34).derive().unwrap();
        assert_relative_eq!(d.frame.r_c, 0.101_366_277_027_041_1, max_relative = 1e-14);
        assert_relative_eq!(d.frame.omega_s, 195.959_179_422_654, max_relative = 1e-14);
        assert_eq!(d.frame.delta_q, -d.frame.omega_s);

        let d0 = params_with(0.0, 0.34).derive().unwrap();
        assert_eq!(d0.frame.r_c, 0.0);
        assert_eq!(d0.frame.omega_s, 200.0);
    }

    #[test]
    fn reference_couplings() {
        let d = ModelParams::dicke_reference(18).derive().unwrap();
        assert_relative_eq!(d.g_plus, 0.1, max_relative = 1e-15);
        assert_relative_eq!(d.g_minus, 0.17, max_relative = 1e-14);
        // atanh(10/17) from the log form ½ ln(27/7)
        assert_relative_eq!(d.r, 0.5 * (27.0f64 / 7.0).ln(), max_relative = 1e-14);
        assert_relative_eq!(d.r, 0.674_963_358_474_507_9, max_relative = 1e-12);
        assert_relative_eq!(d.frame.omega_m, 2.0 * d.frame.omega_s, max_relative = 1e-15);
    }

    #[test]
    fn derive_errors() {
        let mut p = params_with(200.0, 0.34);
        assert!(matches!(p.derive(), Err(Error::ImaginaryFrequency { .. })));
        p.omega = 40.0;
        p.modulation = ModulationAmplitude::Relative(0.1);
        assert!(matches!(p.derive(), Err(Error::UnstableSqueezing { .. })));
    }

    #[test]
    fn derive_identities() {
        let mut p = ModelParams::dicke_reference(12);
        p.gamma = 0.03;
        let d = p.derive().unwrap();
        assert_relative_eq!(d.r.tanh(), d.g_plus / d.g_minus, max_relative = 1e-14);
        assert_relative_eq!(d.g_eff.powi(2), d.g_minus.powi(2) - d.g_plus.powi(2), max_relative = 1e-14);
        assert_relative_eq!(4.0 * d.g_eff.powi(2) * d.coop, d.gamma_c / p.gamma, max_relative = 1e-14);
        let other = a_factor_from_rates(d.gamma_c, p.gamma, p.kappa);
        assert!((d.a_factor - other).abs() < 1e-14);
        assert!(d.a_factor >= 0.0 && d.a_factor < 1.0);
    }

    #[test]
    fn weak_squeezing_expansion() {
        for &omega in &[0.5, 1.0, 2.0, 5.0] {
            let ws = squeezed_mode_frequency(200.0, omega).unwrap();
            let approx = 200.0 - omega * omega / 400.0;
            assert!((ws - approx).abs() < omega.powi(4) / 200f64.powi(3));
        }
    }

    #[test]
    fn compensation_shifts_modulation_frequency() {
        let p = ModelParams::spin_wave_reference(100);
        let f = p.frame().unwrap();
        assert_relative_eq!(f.omega_m, 2.0 * f.omega_s + f.delta_dressed, max_relative = 1e-15);
        assert_relative_eq!(f.delta_bare, 0.5, max_relative = 1e-14);
        assert!((f.delta_dressed - f.delta_bare).abs() < 0.01);

        let absolute = ModelParams {
            modulation: ModulationAmplitude::Absolute(f.a_m),
            ..p.clone()
        };
        let g = absolute.frame().unwrap();
        assert_relative_eq!(g.omega_m, f.omega_m, max_relative = 1e-13);
    }

    #[test]
    fn full_hamiltonian_hermitian_and_periodic() {
        let p = ModelParams::dicke_reference(4);
        let h = full_hamiltonian(&p, 3).unwrap();
        let period = h.period().unwrap();
        for k in 0..100 {
            let t = 0.0137 * k as f64 + 0.003;
            let ht = h.at(t);
            assert!(ht.hermiticity_error() < 1e-12);
            let shifted = h.at(t + period);
            assert!(ht.max_abs_diff(&shifted).unwrap() < 1e-10);
        }
    }

    #[test]
    fn full_hamiltonian_at_zero_is_static_part() {
        let p = ModelParams::dicke_reference(3);
        let h = full_hamiltonian(&p, 3).unwrap();
        let h0 = &h.terms()[0].op;
        assert!(h.at(0.0).max_abs_diff(h0).unwrap() == 0.0);
    }

    #[test]
    fn uncoupled_hamiltonian_is_diagonal() {
        let p = ModelParams {
            g: 0.0,
            omega: 0.0,
            modulation: ModulationAmplitude::Absolute(0.0),
            ..ModelParams::dicke_reference(4)
        };
        let h = full_hamiltonian_at(&p, 3, 0.37).unwrap().to_dense();
        let f = p.frame().unwrap();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if i != j {
                    assert_eq!(h[[i, j]].norm(), 0.0);
                }
            }
            let (n, k) = (i / 5, i % 5);
            let m = 2.0 - k as f64;
            assert!((h[[i, i]].re - (200.0 * n as f64 + f.delta_q * m)).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_hamiltonian_properties() {
        // beam-splitter limit
        let p = params_with(0.0, 0.34);
        let h = effective_hamiltonian(&p, 3).unwrap();
        let ops = cavity_spin_ops(3, 4).unwrap();
        let bs = &(&(&ops.a.adjoint() * &ops.sm) + &(&ops.a * &ops.sp)) * (p.g * 0.17);
        assert!(h.max_abs_diff(&bs).unwrap() < 1e-14);

        // parity (−1)^{a†a + S_z + N/2}
        let p = ModelParams::dicke_reference(4);
        let h = effective_hamiltonian(&p, 3).unwrap();
        assert!(h.is_hermitian());
        let sig = h.signature().clone();
        let mut parity = ndarray::Array2::zeros((20, 20));
        for i in 0..20 {
            let (n, k) = (i / 5, i % 5);
            let excitations = n + (4 - k);
            parity[[i, i]] = C64::new(if excitations % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
        }
        let parity = Operator::from_dense(sig, parity).unwrap();
        assert!(h.commutator(&parity).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn anti_stokes_matrix_element() {
        let p = ModelParams::dicke_reference(1);
        let h = effective_hamiltonian(&p, 2).unwrap();
        // |n, spin⟩ index = n * 2 + k, with k = 0 excited and k = 1 ground
        let one_e = 2;
        let zero_g = 1;
        assert_relative_eq!(h.get(one_e, zero_g).re, p.g * 0.1, max_relative = 1e-14);
        assert_eq!(h.get(one_e, zero_g).im, 0.0);
    }

    #[test]
    fn swa_effective_in_beta_form() {
        let p = ModelParams::spin_wave_reference(50);
        let d = p.derive().unwrap();
        let (n_a, n_b) = (3, 8);
        let (_, heff) = swa_hamiltonians(&p, n_a, n_b).unwrap();
        let sig = SpaceSignature::two_mode(n_a, n_b).unwrap();
        let a = embed(&sig, CAVITY, &fock_annihilation(n_a).unwrap()).unwrap();
        let b = embed(&sig, SPIN_WAVE, &boson_annihilation(SPIN_WAVE, n_b).unwrap()).unwrap();
        let beta = &(&b * d.r.cosh()) + &(&b.adjoint() * d.r.sinh());
        let half = &(&a.adjoint() * &beta) * (d.g_eff * d.g_col);
        let expected = &half + &half.adjoint();
        assert!(heff.max_abs_diff(&expected).unwrap() < 1e-10);
    }

    #[test]
    fn swa_collective_scaling_and_zero_coupling() {
        let base = ModelParams::dicke_reference(10);
        let doubled = ModelParams { n_atoms: 20, ..base.clone() };
        let (_, h1) = swa_hamiltonians(&base, 2, 3).unwrap();
        let (_, h2) = swa_hamiltonians(&doubled, 2, 3).unwrap();
        let ratio = h2.get(4, 1).re / h1.get(4, 1).re;
        assert_relative_eq!(ratio, 2f64.sqrt(), max_relative = 1e-13);

        let off = ModelParams { g: 0.0, ..base };
        let (full, eff) = swa_hamiltonians(&off, 2, 3).unwrap();
        assert_eq!(eff.max_abs(), 0.0);
        let h = full.at(0.0).to_dense();
        // only the diagonal detuning and the cavity pair drive survive
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if i != j && (i % 4) != (j % 4) {
                    assert_eq!(h[[i, j]].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn sideband_amplitudes() {
        let p = ModelParams {
            modulation: ModulationAmplitude::Relative(0.0),
            ..ModelParams::dicke_reference(4)
        };
        let f = p.frame().unwrap();
        let s0 = sideband_coupling(0, &p).unwrap();
        assert_relative_eq!(s0.co_rotating.re, p.g * f.r_c.cosh(), max_relative = 1e-15);
        let s1 = sideband_coupling(1, &p).unwrap();
        assert_eq!(s1.co_rotating.norm(), 0.0);
    }

    #[test]
    fn first_sideband_small_eta_limit() {
        // J₁(η)/η = ½ − η²/16 + η⁴/384 − …
        for &eta in &[1e-1f64, 1e-2, 1e-3] {
            let series = 0.5 - eta * eta / 16.0 + eta.powi(4) / 384.0;
            assert!((bessel_j(1, eta) / eta - series).abs() < 1e-10);
        }
        let p = ModelParams {
            modulation: ModulationAmplitude::Relative(0.01),
            ..ModelParams::dicke_reference(4)
        };
        let f = p.frame().unwrap();
        let s1 = sideband_coupling(1, &p).unwrap();
        // i·J₁ is purely imaginary
        assert!(s1.co_rotating.re.abs() < 1e-18);
        let strength = s1.co_rotating.im;
        assert_relative_eq!(strength, p.g * f.a_m_prime / (2.0 * f.omega_m), max_relative = 2e-2);
        assert_relative_eq!(strength, p.g * f.g_minus(), max_relative = 2e-2);
    }

    #[test]
    fn negative_order_bessel() {
        assert_relative_eq!(bessel_j(-1, 0.3), -bessel_j(1, 0.3));
        assert_relative_eq!(bessel_j(-2, 0.3), bessel_j(2, 0.3));
    }
}
