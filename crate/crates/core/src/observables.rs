//! Squeezing measures and phase-space distributions.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{boson_annihilation, dicke_spin_operators, DensityMatrix, Operator, SPIN, SPIN_WAVE};
use crate::linalg::hermitian_eigh;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqueezingResult {
    pub xi2: f64,
    pub xi2_db: f64,
    pub mean_spin: [f64; 3],
    /// Unit vector ⊥ `mean_spin` along which the variance is smallest.
    pub min_direction: [f64; 3],
    pub min_variance: f64,
}

/// Covariance data of the collective spin.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinMoments {
    pub n_atoms: usize,
    pub mean: [f64; 3],
    /// Symmetrized covariance `⟨S_iS_j + S_jS_i⟩/2 − ⟨S_i⟩⟨S_j⟩`.
    pub covariance: [[f64; 3]; 3],
}

impl SpinMoments {
    pub fn variance_along(&self, n: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += n[i] * self.covariance[i][j] * n[j];
            }
        }
        v
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Reduces `rho` to the factor `label` unless it already is that factor alone.
pub fn reduce_to(rho: &DensityMatrix, label: &str) -> Result<DensityMatrix> {
    let sig = rho.signature();
    sig.position(label)?;
    if sig.factors().len() == 1 {
        Ok(rho.clone())
    } else {
        rho.partial_trace(label)
    }
}

pub fn spin_moments(rho: &DensityMatrix) -> Result<SpinMoments> {
    let spin = reduce_to(rho, SPIN)?;
    let n_atoms = spin.dim() - 1;
    let s = dicke_spin_operators(n_atoms)?;
    let ops = [&s.sx, &s.sy, &s.sz];
    let m = spin.matrix();
    let dense: Vec<Array2<C64>> = ops.iter().map(|o| o.to_dense()).collect();
    let expect = |o: &Array2<C64>| -> C64 {
        // Tr(ρO)
        let mut acc = C64::new(0.0, 0.0);
        for ((i, j), v) in m.indexed_iter() {
            acc += v * o[[j, i]];
        }
        acc
    };
    let mean: [f64; 3] = std::array::from_fn(|i| expect(&dense[i]).re);
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let prod = dense[i].dot(&dense[j]);
            let sym = expect(&prod).re;
            let c = sym - mean[i] * mean[j];
            covariance[i][j] = c;
            covariance[j][i] = c;
        }
    }
    Ok(SpinMoments {
        n_atoms,
        mean,
        covariance,
    })
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Orthonormal basis `(e1, e2)` of the plane ⊥ `m`, with `e1` from
/// Gram–Schmidt of the z axis (x axis when `m ∥ z`).
pub fn perpendicular_basis(m: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mh = normalize(m);
    let project = |axis: [f64; 3]| {
        let c = dot(axis, mh);
        [axis[0] - c * mh[0], axis[1] - c * mh[1], axis[2] - c * mh[2]]
    };
    let mut e1 = project([0.0, 0.0, 1.0]);
    if dot(e1, e1).sqrt() < 1e-8 {
        e1 = project([1.0, 0.0, 0.0]);
    }
    let e1 = normalize(e1);
    let e2 = cross(mh, e1);
    (e1, e2)
}

/// Default mean-spin threshold `1e−6·N/2`.
pub fn default_threshold(n_atoms: usize) -> f64 {
    1e-6 * n_atoms as f64 / 2.0
}

/// Wineland parameter `ξ² = N ⟨ΔS_⊥⟩²_min / |⟨S⟩|²` of the spin part of `rho`.
pub fn wineland_xi2(rho: &DensityMatrix) -> Result<SqueezingResult> {
    let moments = spin_moments(rho)?;
    squeezing_from_moments(&moments, default_threshold(moments.n_atoms))
}

pub fn squeezing_from_moments(moments: &SpinMoments, threshold: f64) -> Result<SqueezingResult> {
    let m = moments.mean;
    let length = dot(m, m).sqrt();
    if !(length > threshold) {
        return Err(Error::UndefinedSqueezing { length, threshold });
    }
    let (e1, e2) = perpendicular_basis(m);
    let a = moments.variance_along(e1);
    let c = moments.variance_along(e2);
    let mut b = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            b += e1[i] * moments.covariance[i][j] * e2[j];
        }
    }
    let half_diff = 0.5 * (a - c);
    let radius = half_diff.hypot(b);
    let lambda = 0.5 * (a + c) - radius;
    // eigenvector (cos α, sin α) in the (e1, e2) basis
    let (u, v) = if radius <= 1e-14 * (a.abs() + c.abs()).max(1e-300) {
        (1.0, 0.0)
    } else {
        let x = (b, lambda - a);
        let y = (lambda - c, b);
        let pick = if x.0.hypot(x.1) >= y.0.hypot(y.1) { x } else { y };
        let n = pick.0.hypot(pick.1);
        (pick.0 / n, pick.1 / n)
    };
    let dir = normalize([
        u * e1[0] + v * e2[0],
        u * e1[1] + v * e2[1],
        u * e1[2] + v * e2[2],
    ]);
    let xi2 = moments.n_atoms as f64 * lambda / (length * length);
    Ok(SqueezingResult {
        xi2,
        xi2_db: to_db(xi2),
        mean_spin: m,
        min_direction: dir,
        min_variance: lambda,
    })
}

/// Spin-wave moments `⟨b†b⟩`, `⟨bb⟩` and `ξ²_SWA = 1 + 2(⟨b†b⟩ − |⟨bb⟩|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwaMoments {
    pub n_b: f64,
    pub bb: C64,
    pub b: C64,
    pub xi2: f64,
}

pub fn swa_moments(rho: &DensityMatrix) -> Result<SwaMoments> {
    let reduced = reduce_to(rho, SPIN_WAVE)?;
    let b = boson_annihilation(SPIN_WAVE, reduced.dim() - 1)?;
    let n = &b.adjoint() * &b;
    let bb = &b * &b;
    let n_b = reduced.expect(&n)?.re;
    let bb = reduced.expect(&bb)?;
    Ok(SwaMoments {
        n_b,
        bb,
        b: reduced.expect(&b)?,
        xi2: 1.0 + 2.0 * (n_b - bb.norm()),
    })
}

pub fn swa_xi2(rho: &DensityMatrix) -> Result<f64> {
    Ok(swa_moments(rho)?.xi2)
}

/// `(2j + 1)/(4π)` with `j = N/2`, normalizing `Q` to unit integral on the sphere.
pub fn husimi_prefactor(n_atoms: usize) -> f64 {
    (n_atoms as f64 + 1.0) / (4.0 * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HusimiSample {
    pub theta: f64,
    pub phi: f64,
    pub q: f64,
}

/// Rotation `R(θ,φ) = exp[iθ(S_x sinφ − S_y cosφ)]` applied to `|m = +j⟩`
/// for a fixed `φ` and many `θ`.
struct CoherentStates {
    vecs: Array2<C64>,
    eigvals: Vec<f64>,
    /// `U†|+j⟩`
    top: Array1<C64>,
}

impl CoherentStates {
    fn new(sx: &Operator, sy: &Operator, phi: f64) -> Result<Self> {
        let gen = &(sx * phi.sin()) - &(sy * phi.cos());
        let (eigvals, vecs) = hermitian_eigh(&gen.to_dense())?;
        let top = vecs.row(0).mapv(|v| v.conj());
        Ok(Self { vecs, eigvals, top })
    }

    fn state(&self, theta: f64) -> Array1<C64> {
        let phased: Array1<C64> = self
            .top
            .iter()
            .zip(&self.eigvals)
            .map(|(c, g)| c * C64::from_polar(1.0, theta * g))
            .collect();
        self.vecs.dot(&phased)
    }
}

fn overlap(rho: &Array2<C64>, psi: &Array1<C64>) -> f64 {
    let rpsi = rho.dot(psi);
    psi.iter().zip(rpsi.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re
}

/// `Q(θ,φ) = (N+1)/(4π) ⟨CSS|R†ρ_spin R|CSS⟩` on the cavity-reduced spin state.
pub fn husimi_q(rho: &DensityMatrix, theta: f64, phi: f64) -> Result<HusimiSample> {
    let spin = reduce_to(rho, SPIN)?;
    let n_atoms = spin.dim() - 1;
    let s = dicke_spin_operators(n_atoms)?;
    let cs = CoherentStates::new(&s.sx, &s.sy, phi)?;
    let q = husimi_prefactor(n_atoms) * overlap(spin.matrix(), &cs.state(theta));
    Ok(HusimiSample { theta, phi, q })
}

/// `Q` on the grid `θ_i = πi/(n_θ−1)`, `φ_k = 2πk/n_φ`; `q[[i, k]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HusimiGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub q: Array2<f64>,
    pub normalized_to_unit_max: bool,
}

pub fn husimi_grid(rho: &DensityMatrix, n_theta: usize, n_phi: usize, normalize_to_unit_max: bool) -> Result<HusimiGrid> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::InvalidParameter(format!(
            "Husimi grid needs at least 2×2 points, got {n_theta}×{n_phi}"
        )));
    }
    let spin = reduce_to(rho, SPIN)?;
    let n_atoms = spin.dim() - 1;
    let s = dicke_spin_operators(n_atoms)?;
    let thetas: Vec<f64> = (0..n_theta).map(|i| PI * i as f64 / (n_theta - 1) as f64).collect();
    let phis: Vec<f64> = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
    let pref = husimi_prefactor(n_atoms);
    let mut q = Array2::zeros((n_theta, n_phi));
    for (k, &phi) in phis.iter().enumerate() {
        let cs = CoherentStates::new(&s.sx, &s.sy, phi)?;
        for (i, &theta) in thetas.iter().enumerate() {
            q[[i, k]] = pref * overlap(spin.matrix(), &cs.state(theta));
        }
    }
    if normalize_to_unit_max {
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > 0.0 {
            q.mapv_inplace(|v| v / max);
        }
    }
    Ok(HusimiGrid {
        thetas,
        phis,
        q,
        normalized_to_unit_max: normalize_to_unit_max,
    })
}

impl HusimiGrid {
    /// Quadrature weights for `sinθ dθ dφ`: trapezoid in θ, periodic in φ.
    fn weight(&self, i: usize) -> f64 {
        let n = self.thetas.len();
        let dtheta = PI / (n - 1) as f64;
        let dphi = 2.0 * PI / self.phis.len() as f64;
        let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        end * dtheta * dphi * self.thetas[i].sin()
    }

    /// `∫ Q sinθ dθ dφ`
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.thetas.len() {
            let w = self.weight(i);
            acc += w * self.q.row(i).sum();
        }
        acc
    }

    /// Mean and variance of the unit vector `(sinθcosφ, sinθsinφ, cosθ)`
    /// under `Q` as a distribution on the sphere.
    pub fn moments(&self) -> HusimiMoments {
        let mut total = 0.0;
        let mut first = [0.0; 3];
        let mut second = [0.0; 3];
        for (i, &theta) in self.thetas.iter().enumerate() {
            let w = self.weight(i);
            for (k, &phi) in self.phis.iter().enumerate() {
                let p = w * self.q[[i, k]];
                let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                total += p;
                for a in 0..3 {
                    first[a] += p * n[a];
                    second[a] += p * n[a] * n[a];
                }
            }
        }
        let mean: [f64; 3] = std::array::from_fn(|a| first[a] / total);
        let variance: [f64; 3] = std::array::from_fn(|a| second[a] / total - mean[a] * mean[a]);
        HusimiMoments { mean, variance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HusimiMoments {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpaceSignature;
    use approx::assert_relative_eq;

    fn spin_state(n: usize, psi: &[C64]) -> DensityMatrix {
        DensityMatrix::pure(SpaceSignature::single(SPIN, n + 1).unwrap(), psi).unwrap()
    }

    fn basis(n: usize, k: usize) -> DensityMatrix {
        DensityMatrix::basis(SpaceSignature::single(SPIN, n + 1).unwrap(), k).unwrap()
    }

    #[test]
    fn ground_state_is_coherent() {
        for n in [1, 2, 7, 18] {
            let r = wineland_xi2(&basis(n, n)).unwrap();
            assert!((r.xi2 - 1.0).abs() < 1e-12);
            assert!(dot(r.min_direction, r.mean_spin).abs() < 1e-10);
            assert_relative_eq!(r.mean_spin[2], -(n as f64) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn vanishing_mean_spin_is_rejected() {
        // |m = 0⟩ of N = 2 has zero mean spin
        let r = wineland_xi2(&basis(2, 1));
        assert!(matches!(r, Err(Error::UndefinedSqueezing { .. })));
    }

    #[test]
    fn perpendicular_basis_is_orthonormal() {
        for m in [[0.0, 0.0, 1.0], [0.0, 0.0, -3.0], [1.0, 2.0, 3.0], [1.0, 0.0, 0.0]] {
            let (e1, e2) = perpendicular_basis(m);
            assert!(dot(e1, m).abs() < 1e-12 && dot(e2, m).abs() < 1e-12);
            assert!((dot(e1, e1) - 1.0).abs() < 1e-12 && dot(e1, e2).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_and_thermal_swa() {
        let sig = SpaceSignature::single(SPIN_WAVE, 11).unwrap();
        let vac = DensityMatrix::basis(sig.clone(), 0).unwrap();
        assert_eq!(swa_xi2(&vac).unwrap(), 1.0);
        let nbar: f64 = 0.3;
        let mut m = Array2::zeros((11, 11));
        for k in 0..11 {
            m[[k, k]] = C64::new((nbar / (1.0 + nbar)).powi(k as i32) / (1.0 + nbar), 0.0);
        }
        let tr: C64 = m.diag().sum();
        m /= tr;
        let th = DensityMatrix::new(sig, m).unwrap();
        let mo = swa_moments(&th).unwrap();
        assert_eq!(mo.bb.norm(), 0.0);
        assert!(mo.xi2 > 1.0);
        assert!((mo.xi2 - (1.0 + 2.0 * nbar)).abs() < 1e-4);
    }

    #[test]
    fn coherent_state_husimi_peak() {
        let n = 6;
        let rho = basis(n, 0);
        let s = husimi_q(&rho, 0.0, 0.3).unwrap();
        assert_relative_eq!(s.q, husimi_prefactor(n), max_relative = 1e-12);
        let grid = husimi_grid(&rho, 31, 40, true).unwrap();
        assert_eq!(grid.q.iter().copied().fold(f64::MIN, f64::max), 1.0);
        assert!(grid.q.row(0).iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn husimi_rotation_direction() {
        // R(θ,φ)|+j⟩ points along (θ, φ)
        let n = 4;
        let s = dicke_spin_operators(n).unwrap();
        for &(theta, phi) in &[(0.7, 0.0), (1.2, 1.0), (2.5, 4.0)] {
            let cs = CoherentStates::new(&s.sx, &s.sy, phi).unwrap();
            let psi = cs.state(theta);
            let rho = spin_state(n, psi.as_slice().unwrap());
            let m = spin_moments(&rho).unwrap().mean;
            let j = n as f64 / 2.0;
            let expected = [j * theta.sin() * phi.cos(), j * theta.sin() * phi.sin(), j * theta.cos()];
            for a in 0..3 {
                assert!((m[a] - expected[a]).abs() < 1e-12, "{m:?} vs {expected:?}");
            }
        }
    }
}
