//! Lindblad superoperators, time propagation and steady states.
//!
//! Density matrices are vectorized row-major, `vec(ρ)[i·d + j] = ρ_ij`, so that
//! `AρB ↦ (A ⊗ Bᵀ) vec(ρ)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Operator, SpaceSignature};
use crate::model::{TimeDependentHamiltonian, Waveform};
use crate::sparse::CsrMatrix;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Jump operator `o` entering as `(rate/2)ℒ(o)ρ` with
/// `ℒ(o)ρ = 2oρo† − o†oρ − ρo†o`.
#[derive(Clone, Debug)]
pub struct Dissipator {
    pub op: Operator,
    pub rate: f64,
}

impl Dissipator {
    pub fn new(op: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("dissipation rate {rate} must be ≥ 0")));
        }
        Ok(Self { op, rate })
    }
}

/// Dense evaluation of `i[ρ,H] + Σ (rate/2)ℒ(o)ρ`.
pub fn lindblad_rhs(h: &Operator, dissipators: &[Dissipator], rho: &DensityMatrix) -> Result<Array2<C64>> {
    check_signature(h.signature(), rho.signature())?;
    let r = rho.matrix();
    let hd = h.to_dense();
    let i = C64::i();
    let mut out = (r.dot(&hd) - hd.dot(r)) * i;
    for d in dissipators {
        check_signature(d.op.signature(), rho.signature())?;
        let o = d.op.to_dense();
        let od = o.t().mapv(|v| v.conj());
        let ood = od.dot(&o);
        let term = o.dot(r).dot(&od) * C64::new(2.0, 0.0) - ood.dot(r) - r.dot(&ood);
        out = out + term * C64::new(0.5 * d.rate, 0.0);
    }
    Ok(out)
}

fn check_signature(a: &SpaceSignature, b: &SpaceSignature) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} vs {b}")));
    }
    Ok(())
}

fn transpose(m: &CsrMatrix) -> CsrMatrix {
    let entries = m.iter().map(|(r, c, v)| (c, r, v)).collect();
    CsrMatrix::from_triplets(m.ncols(), m.nrows(), entries)
}

fn conjugate(m: &CsrMatrix) -> CsrMatrix {
    let entries = m.iter().map(|(r, c, v)| (r, c, v.conj())).collect();
    CsrMatrix::from_triplets(m.nrows(), m.ncols(), entries)
}

/// `−i(H ⊗ I − I ⊗ Hᵀ)`
fn commutator_superop(h: &CsrMatrix) -> CsrMatrix {
    let id = CsrMatrix::identity(h.nrows());
    let left = h.kron(&id);
    let right = id.kron(&transpose(h));
    left.axpby(-C64::i(), &right, C64::i())
}

/// `(rate/2)(2 o ⊗ ō − o†o ⊗ I − I ⊗ (o†o)ᵀ)`
fn dissipator_superop(d: &Dissipator) -> CsrMatrix {
    let o = d.op.to_csr();
    let ood = o.adjoint().matmul(&o);
    let id = CsrMatrix::identity(o.nrows());
    let jump = o.kron(&conjugate(&o));
    let anti = ood.kron(&id).axpby(C64::new(1.0, 0.0), &id.kron(&transpose(&ood)), C64::new(1.0, 0.0));
    let half = C64::new(0.5 * d.rate, 0.0);
    jump.axpby(half * 2.0, &anti, -half)
}

/// Frame in which the integrator evolves the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Integrate `ρ̇ = ℒ(t)ρ` as given.
    Direct,
    /// Integrate in the interaction picture of the diagonal part `D(t)` of
    /// `H(t)`, so that only off-diagonal couplings limit the step size.
    /// States handed to callers are always transformed back.
    #[default]
    Interaction,
}

/// Phases `Φ_i(t) = Σ_k D_k[i] ∫₀ᵗ f_k` of the diagonal Hamiltonian part.
#[derive(Clone, Debug)]
struct DiagonalFrame {
    /// Diagonal of each waveform's part of `H`.
    parts: Vec<(Waveform, Vec<f64>)>,
}

/// `∫₀ᵗ f(s) ds`
fn waveform_integral(w: &Waveform, t: f64) -> f64 {
    match *w {
        Waveform::Constant => t,
        Waveform::Sine { omega } => (1.0 - (omega * t).cos()) / omega,
    }
}

/// Scratch buffers for applying a framed Liouvillian.
#[derive(Clone, Debug, Default)]
struct Workspace {
    w: Vec<f64>,
    u: Vec<C64>,
    p: Vec<C64>,
    xin: Vec<C64>,
}

/// Entries of `vec(ρ)` kept by a restricted Liouvillian.
#[derive(Clone, Debug)]
struct Support {
    /// Full index of each kept entry.
    index: Vec<usize>,
    /// Positions of the diagonal entries `ρ_ii`.
    diag: Vec<usize>,
    /// Positions of `ρ_ij` and `ρ_ji` for `i < j`.
    pairs: Vec<(usize, usize)>,
}

/// `ℒ(t) = Σ_k f_k(t) ℒ_k`, stored on one shared sparsity pattern.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    signature: SpaceSignature,
    waveforms: Vec<Waveform>,
    /// Waveforms of every Hamiltonian term, including purely diagonal ones
    /// absorbed into the frame.
    drive: Vec<Waveform>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    /// `values[k][nz]` is the coefficient of waveform `k`.
    values: Vec<Vec<C64>>,
    frame: Option<DiagonalFrame>,
    support: Option<Support>,
}

impl Liouvillian {
    pub fn new(h: &TimeDependentHamiltonian, dissipators: &[Dissipator]) -> Result<Self> {
        Self::with_frame(h, dissipators, Frame::Direct)
    }

    pub fn with_frame(h: &TimeDependentHamiltonian, dissipators: &[Dissipator], frame: Frame) -> Result<Self> {
        let sig = h.signature().clone();
        let d = sig.dim();
        let mut parts: Vec<(Waveform, CsrMatrix)> = Vec::new();
        let mut diags: Vec<(Waveform, Vec<f64>)> = Vec::new();
        let mut drive: Vec<Waveform> = Vec::new();
        for term in h.terms() {
            if !drive.contains(&term.waveform) {
                drive.push(term.waveform);
            }
            let mut op = term.op.to_csr();
            if frame == Frame::Interaction {
                let mut diag = vec![0.0; d];
                let mut off = Vec::with_capacity(op.nnz());
                for (r, c, v) in op.iter() {
                    if r == c {
                        diag[r] = v.re;
                    } else {
                        off.push((r, c, v));
                    }
                }
                op = CsrMatrix::from_triplets(d, d, off);
                match diags.iter_mut().find(|(w, _)| *w == term.waveform) {
                    Some((_, acc)) => acc.iter_mut().zip(&diag).for_each(|(a, b)| *a += b),
                    None => diags.push((term.waveform, diag)),
                }
            }
            // a purely diagonal term lives entirely in the frame
            if op.nnz() > 0 || frame == Frame::Direct {
                push_part(&mut parts, term.waveform, commutator_superop(&op));
            }
        }
        for d in dissipators {
            check_signature(d.op.signature(), &sig)?;
            push_part(&mut parts, Waveform::Constant, dissipator_superop(d));
        }
        let mut l = Self::from_parts(sig, parts, drive);
        diags.retain(|(_, v)| v.iter().any(|x| *x != 0.0));
        if !diags.is_empty() {
            l.frame = Some(DiagonalFrame { parts: diags });
        }
        Ok(l)
    }

    pub fn constant(h: &Operator, dissipators: &[Dissipator]) -> Result<Self> {
        Self::new(&TimeDependentHamiltonian::constant(h.clone()), dissipators)
    }

    fn from_parts(signature: SpaceSignature, parts: Vec<(Waveform, CsrMatrix)>, drive: Vec<Waveform>) -> Self {
        let n = signature.dim() * signature.dim();
        // union pattern
        let mut entries = Vec::new();
        for (_, m) in &parts {
            entries.extend(m.iter().map(|(r, c, _)| (r, c, C64::new(1.0, 0.0))));
        }
        let pattern = CsrMatrix::from_triplets(n, n, entries);
        let (indptr, indices, _) = pattern.raw_parts();
        let (indptr, indices) = (indptr.to_vec(), indices.to_vec());
        let mut values = Vec::with_capacity(parts.len());
        for (_, m) in &parts {
            let mut v = vec![ZERO; indices.len()];
            for r in 0..n {
                let span = indptr[r]..indptr[r + 1];
                let cols = &indices[span.clone()];
                for (c, x) in m.row(r) {
                    let pos = cols.binary_search(&c).expect("pattern covers all parts");
                    v[span.start + pos] = x;
                }
            }
            values.push(v);
        }
        Self {
            signature,
            waveforms: parts.into_iter().map(|(w, _)| w).collect(),
            drive,
            indptr,
            indices,
            values,
            frame: None,
            support: None,
        }
    }

    pub fn signature(&self) -> &SpaceSignature {
        &self.signature
    }

    /// Length of `vec(ρ)`.
    pub fn size(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn frame(&self) -> Frame {
        if self.frame.is_some() {
            Frame::Interaction
        } else {
            Frame::Direct
        }
    }

    pub fn is_constant(&self) -> bool {
        self.drive.iter().all(|w| *w == Waveform::Constant)
    }

    pub fn period(&self) -> Option<f64> {
        self.drive.iter().find_map(|w| match *w {
            Waveform::Sine { omega } => Some(2.0 * PI / omega),
            Waveform::Constant => None,
        })
    }

    /// Largest frequency appearing in the waveforms.
    pub fn drive_frequency(&self) -> Option<f64> {
        self.drive
            .iter()
            .filter_map(|w| match *w {
                Waveform::Sine { omega } => Some(omega.abs()),
                Waveform::Constant => None,
            })
            .reduce(f64::max)
    }

    /// Gershgorin bound on the spectral radius of the integrated generator
    /// over all `t`. In the interaction frame the largest rate at which a
    /// coupling coefficient rotates is added.
    pub fn spectral_bound(&self) -> f64 {
        let d = self.signature.dim();
        let mut best = 0.0f64;
        let mut fastest = 0.0f64;
        for r in 0..self.size() {
            let span = self.indptr[r]..self.indptr[r + 1];
            let mut s = 0.0;
            for k in span {
                s += self.values.iter().map(|v| v[k].norm()).sum::<f64>();
                if let Some(f) = &self.frame {
                    let (r, c) = (self.full_index(r), self.full_index(self.indices[k]));
                    let (i, j, p, q) = (r / d, r % d, c / d, c % d);
                    let rate: f64 = f.parts.iter().map(|(_, dg)| (dg[i] - dg[j] - dg[p] + dg[q]).abs()).sum();
                    fastest = fastest.max(rate);
                }
            }
            best = best.max(s);
        }
        best + fastest
    }

    fn weights(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.waveforms.iter().map(|w| w.at(t)));
    }

    /// `e^{iΦ_i(t)}` into `u`.
    fn frame_phases(&self, t: f64, u: &mut Vec<C64>) {
        let f = self.frame.as_ref().expect("interaction frame");
        u.clear();
        for i in 0..self.signature.dim() {
            let phi: f64 = f.parts.iter().map(|(w, dg)| dg[i] * waveform_integral(w, t)).sum();
            u.push(C64::from_polar(1.0, phi));
        }
    }

    /// `e^{iΦ_i(t)}` into `u` and `e^{i(Φ_i − Φ_j)}` into `p`.
    fn phases(&self, t: f64, u: &mut Vec<C64>, p: &mut Vec<C64>) {
        let d = self.signature.dim();
        self.frame_phases(t, u);
        p.clear();
        match &self.support {
            None => {
                for i in 0..d {
                    for j in 0..d {
                        p.push(u[i] * u[j].conj());
                    }
                }
            }
            Some(s) => p.extend(s.index.iter().map(|&f| u[f / d] * u[f % d].conj())),
        }
    }

    /// `y = ℒ(t) x` in the frame of this Liouvillian.
    pub fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        self.apply_with(t, x, y, &mut Workspace::default());
    }

    fn apply_with(&self, t: f64, x: &[C64], y: &mut [C64], ws: &mut Workspace) {
        self.weights(t, &mut ws.w);
        if self.frame.is_none() {
            self.apply_weighted(&ws.w, x, y);
            return;
        }
        self.phases(t, &mut ws.u, &mut ws.p);
        ws.xin.clear();
        ws.xin.extend(x.iter().zip(&ws.p).map(|(a, p)| a * p.conj()));
        self.apply_weighted(&ws.w, &ws.xin, y);
        y.iter_mut().zip(&ws.p).for_each(|(a, p)| *a *= p);
    }

    /// Converts a state vector of this frame at time `t` to the direct frame.
    pub fn to_direct(&self, t: f64, x: &[C64]) -> Vec<C64> {
        if self.frame.is_none() {
            return x.to_vec();
        }
        let (mut u, mut p) = (Vec::new(), Vec::new());
        self.phases(t, &mut u, &mut p);
        x.iter().zip(&p).map(|(a, p)| a * p.conj()).collect()
    }

    fn apply_weighted(&self, w: &[f64], x: &[C64], y: &mut [C64]) {
        let rows = 0..self.size();
        match self.values.len() {
            1 => {
                let v0 = &self.values[0];
                for r in rows {
                    let mut s = ZERO;
                    for k in self.indptr[r]..self.indptr[r + 1] {
                        s += v0[k] * x[self.indices[k]];
                    }
                    y[r] = s * w[0];
                }
            }
            2 => {
                let (v0, v1) = (&self.values[0], &self.values[1]);
                let (w0, w1) = (w[0], w[1]);
                for r in rows {
                    let mut s = ZERO;
                    for k in self.indptr[r]..self.indptr[r + 1] {
                        s += (v0[k] * w0 + v1[k] * w1) * x[self.indices[k]];
                    }
                    y[r] = s;
                }
            }
            _ => {
                for r in rows {
                    let mut s = ZERO;
                    for k in self.indptr[r]..self.indptr[r + 1] {
                        let mut coef = ZERO;
                        for (v, &wk) in self.values.iter().zip(w) {
                            coef += v[k] * wk;
                        }
                        s += coef * x[self.indices[k]];
                    }
                    y[r] = s;
                }
            }
        }
    }

    /// Entries of `vec(ρ)` that can become nonzero when starting from the
    /// support of `x0`, or `None` when that is nearly everything. Symmetries
    /// such as excitation-number parity leave large parts of `ρ` identically zero.
    fn reachable_rows(&self, x0: &[C64]) -> Option<Vec<usize>> {
        let n = self.size();
        let mut adj_ptr = vec![0usize; n + 1];
        for &c in &self.indices {
            adj_ptr[c + 1] += 1;
        }
        for i in 0..n {
            adj_ptr[i + 1] += adj_ptr[i];
        }
        let mut fill = adj_ptr.clone();
        let mut adj = vec![0usize; self.indices.len()];
        for r in 0..n {
            for &c in &self.indices[self.indptr[r]..self.indptr[r + 1]] {
                adj[fill[c]] = r;
                fill[c] += 1;
            }
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| x0[i] != ZERO).collect();
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(c) = stack.pop() {
            for &r in &adj[adj_ptr[c]..adj_ptr[c + 1]] {
                if !seen[r] {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
        let rows: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
        (rows.len() * 10 < n * 9).then_some(rows)
    }

    fn full_index(&self, k: usize) -> usize {
        self.support.as_ref().map_or(k, |s| s.index[k])
    }

    /// Copy acting only on the entries reachable from `x0`, or `None` if
    /// restricting would save little.
    fn restrict(&self, x0: &[C64]) -> Option<Self> {
        if self.support.is_some() {
            return None;
        }
        let index = self.reachable_rows(x0)?;
        let d = self.signature.dim();
        let mut pos = vec![usize::MAX; self.size()];
        for (k, &f) in index.iter().enumerate() {
            pos[f] = k;
        }
        let mut diag = Vec::new();
        let mut pairs = Vec::new();
        for (k, &f) in index.iter().enumerate() {
            let (i, j) = (f / d, f % d);
            if i == j {
                diag.push(k);
            } else if i < j {
                // the transpose must be kept as well for Hermitian bookkeeping
                let partner = pos[j * d + i];
                if partner == usize::MAX {
                    return None;
                }
                pairs.push((k, partner));
            }
        }
        let mut indptr = Vec::with_capacity(index.len() + 1);
        let mut indices = Vec::new();
        let mut values: Vec<Vec<C64>> = vec![Vec::new(); self.values.len()];
        indptr.push(0);
        for &f in &index {
            for k in self.indptr[f]..self.indptr[f + 1] {
                let c = pos[self.indices[k]];
                if c != usize::MAX {
                    indices.push(c);
                    for (out, v) in values.iter_mut().zip(&self.values) {
                        out.push(v[k]);
                    }
                }
            }
            indptr.push(indices.len());
        }
        Some(Self {
            signature: self.signature.clone(),
            waveforms: self.waveforms.clone(),
            drive: self.drive.clone(),
            indptr,
            indices,
            values,
            frame: self.frame.clone(),
            support: Some(Support { index, diag, pairs }),
        })
    }

    fn compress(&self, full: &[C64]) -> Vec<C64> {
        match &self.support {
            None => full.to_vec(),
            Some(s) => s.index.iter().map(|&f| full[f]).collect(),
        }
    }

    fn expand(&self, x: &[C64]) -> Vec<C64> {
        match &self.support {
            None => x.to_vec(),
            Some(s) => {
                let d = self.signature.dim();
                let mut full = vec![ZERO; d * d];
                for (&f, v) in s.index.iter().zip(x) {
                    full[f] = *v;
                }
                full
            }
        }
    }

    fn trace_of(&self, x: &[C64]) -> C64 {
        match &self.support {
            None => trace_vec(x, self.signature.dim()),
            Some(s) => s.diag.iter().map(|&k| x[k]).sum(),
        }
    }

    /// Largest `|ρ_ij − ρ_ji*|`, after which `ρ` is made exactly Hermitian
    /// when `apply` is set.
    fn hermitian_part(&self, x: &mut [C64], apply: bool) -> f64 {
        let Some(s) = &self.support else {
            let d = self.signature.dim();
            return if apply { hermitize(x, d) } else { hermiticity_drift(x, d) };
        };
        let mut drift = 0.0f64;
        for &k in &s.diag {
            drift = drift.max(x[k].im.abs());
            if apply {
                x[k].im = 0.0;
            }
        }
        for &(k, l) in &s.pairs {
            let (a, b) = (x[k], x[l].conj());
            drift = drift.max((a - b).norm());
            if apply {
                let m = (a + b) * 0.5;
                x[k] = m;
                x[l] = m.conj();
            }
        }
        drift
    }

    /// Sparse matrix of `ℒ(t)`; only defined in the direct frame.
    pub fn at(&self, t: f64) -> Result<CsrMatrix> {
        if self.frame.is_some() {
            return Err(Error::InvalidParameter("matrix form needs a direct-frame Liouvillian".into()));
        }
        let mut w = Vec::new();
        self.weights(t, &mut w);
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.size() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v: C64 = self.values.iter().zip(&w).map(|(v, &wk)| v[k] * wk).sum();
                entries.push((r, self.indices[k], v));
            }
        }
        Ok(CsrMatrix::from_triplets(self.size(), self.size(), entries))
    }
}

fn push_part(parts: &mut Vec<(Waveform, CsrMatrix)>, w: Waveform, m: CsrMatrix) {
    if let Some((_, acc)) = parts.iter_mut().find(|(pw, _)| *pw == w) {
        *acc = acc.axpby(C64::new(1.0, 0.0), &m, C64::new(1.0, 0.0));
    } else {
        parts.push((w, m));
    }
}

pub fn vectorize(rho: &DensityMatrix) -> Vec<C64> {
    rho.matrix().iter().copied().collect()
}

pub fn unvectorize(signature: &SpaceSignature, x: &[C64]) -> DensityMatrix {
    let d = signature.dim();
    let m = Array2::from_shape_vec((d, d), x.to_vec()).expect("length d²");
    DensityMatrix::new_unchecked(signature.clone(), m).expect("square")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    Rk45,
}

/// Integration settings. `dt = None` selects the automatic step: the smaller of
/// `(2π/ω_max)/20` and `STEP_FACTOR / ‖ℒ‖` with `‖ℒ‖` from
/// [`Liouvillian::spectral_bound`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationConfig {
    pub method: Method,
    pub dt: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub t_final: f64,
    pub sample_stride: usize,
    pub hermitize_each_step: bool,
    /// Highest physical frequency for the resolution rule, if known.
    pub omega_max: Option<f64>,
    /// Absolute trace drift that aborts the run.
    pub max_trace_drift: f64,
    pub frame: Frame,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: None,
            rtol: 1e-8,
            atol: 1e-10,
            t_final: 1.0,
            sample_stride: 1,
            hermitize_each_step: true,
            omega_max: None,
            max_trace_drift: 1e-6,
            frame: Frame::Interaction,
        }
    }
}

/// `dt·‖ℒ‖` of the automatic step. RK4 is stable up to ≈2.8 on the imaginary
/// axis, but positivity and 1e−6 step-halving agreement need a finer step.
pub const STEP_FACTOR: f64 = 0.25;
/// Trace deviation above which the state is renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-10;

impl PropagationConfig {
    pub fn with_t_final(t_final: f64) -> Self {
        Self {
            t_final,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_final = {} must be > 0", self.t_final)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
            }
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample_stride must be ≥ 1".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter("rtol and atol must be > 0".into()));
        }
        Ok(())
    }

    /// Step size used for `liouvillian`.
    pub fn resolve_dt(&self, liouvillian: &Liouvillian) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        let mut dt = f64::INFINITY;
        let omega_max = self.omega_max.or(liouvillian.drive_frequency());
        if let Some(w) = omega_max.filter(|w| *w > 0.0) {
            dt = 2.0 * PI / w / 20.0;
        }
        let bound = liouvillian.spectral_bound();
        if bound > 0.0 {
            dt = dt.min(STEP_FACTOR / bound);
        }
        if dt.is_finite() {
            dt
        } else {
            self.t_final / 100.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub renormalizations: usize,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
}

/// Sampled trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub observables: BTreeMap<String, Vec<C64>>,
    pub metadata: BTreeMap<String, String>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.observables.get(name).map(|v| v.iter().map(|z| z.re).collect())
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub series: TimeSeries,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
}

/// Named operator whose expectation value is recorded at each sample.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: Operator) -> Self {
        Self { name: name.into(), op }
    }
}

/// `Tr(ρO)` for vectorized ρ.
fn expect_vec(op: &CsrMatrix, x: &[C64]) -> C64 {
    let d = op.nrows();
    // Tr(ρO) = Σ_ij ρ_ij O_ji
    op.iter().map(|(j, i, v)| x[i * d + j] * v).sum()
}

fn hermitize(x: &mut [C64], d: usize) -> f64 {
    let mut drift = 0.0f64;
    for i in 0..d {
        x[i * d + i].im = 0.0;
        for j in (i + 1)..d {
            let a = x[i * d + j];
            let b = x[j * d + i].conj();
            drift = drift.max((a - b).norm());
            let m = (a + b) * 0.5;
            x[i * d + j] = m;
            x[j * d + i] = m.conj();
        }
    }
    drift
}

fn hermiticity_drift(x: &[C64], d: usize) -> f64 {
    let mut drift = 0.0f64;
    for i in 0..d {
        drift = drift.max(x[i * d + i].im.abs());
        for j in (i + 1)..d {
            drift = drift.max((x[i * d + j] - x[j * d + i].conj()).norm());
        }
    }
    drift
}

fn trace_vec(x: &[C64], d: usize) -> C64 {
    (0..d).map(|i| x[i * d + i]).sum()
}

struct Stepper<'a> {
    l: &'a Liouvillian,
    ws: Workspace,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
}

impl<'a> Stepper<'a> {
    fn new(l: &'a Liouvillian) -> Self {
        let n = l.size();
        Self {
            l,
            ws: Workspace::default(),
            k: std::array::from_fn(|_| vec![ZERO; n]),
            tmp: vec![ZERO; n],
        }
    }

    /// `k[out] = ℒ(t)·src`, with `src` either `x` or the stage buffer.
    fn eval(&mut self, t: f64, from_tmp: bool, out: usize, x: &[C64]) {
        let src: &[C64] = if from_tmp { &self.tmp } else { x };
        self.l.apply_with(t, src, &mut self.k[out], &mut self.ws);
    }

    fn rk4(&mut self, t: f64, h: f64, x: &mut [C64]) {
        self.eval(t, false, 0, x);
        for (tm, (xi, k)) in self.tmp.iter_mut().zip(x.iter().zip(&self.k[0])) {
            *tm = xi + k * (0.5 * h);
        }
        self.eval(t + 0.5 * h, true, 1, x);
        for (tm, (xi, k)) in self.tmp.iter_mut().zip(x.iter().zip(&self.k[1])) {
            *tm = xi + k * (0.5 * h);
        }
        self.eval(t + 0.5 * h, true, 2, x);
        for (tm, (xi, k)) in self.tmp.iter_mut().zip(x.iter().zip(&self.k[2])) {
            *tm = xi + k * h;
        }
        self.eval(t + h, true, 3, x);
        let h6 = h / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += (self.k[0][i] + (self.k[1][i] + self.k[2][i]) * 2.0 + self.k[3][i]) * h6;
        }
    }

    /// One Dormand–Prince trial step; returns the 5th-order solution in `out`
    /// and the scaled error norm.
    fn dopri(&mut self, t: f64, h: f64, x: &[C64], out: &mut [C64], rtol: f64, atol: f64) -> f64 {
        const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        self.eval(t, false, 0, x);
        for s in 1..7 {
            for i in 0..x.len() {
                let mut acc = x[i];
                for (j, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        acc += self.k[j][i] * (h * a);
                    }
                }
                self.tmp[i] = acc;
            }
            self.eval(t + C[s] * h, true, s, x);
        }
        let mut err = 0.0f64;
        for i in 0..x.len() {
            let mut hi = x[i];
            let mut lo = x[i];
            for s in 0..7 {
                hi += self.k[s][i] * (h * B5[s]);
                lo += self.k[s][i] * (h * B4[s]);
            }
            out[i] = hi;
            let scale = atol + rtol * x[i].norm().max(hi.norm());
            err = err.max((hi - lo).norm() / scale);
        }
        err
    }
}

/// Integrates `ρ̇ = ℒ(t)ρ` from `t = 0` and records the expectation value of
/// each observable at every sample. Samples are taken every `sample_stride`
/// steps of the nominal grid and always at `t_final`.
pub fn propagate(
    h: &TimeDependentHamiltonian,
    dissipators: &[Dissipator],
    rho0: &DensityMatrix,
    config: &PropagationConfig,
    observables: &[Observable],
) -> Result<Propagation> {
    let l = Liouvillian::with_frame(h, dissipators, config.frame)?;
    propagate_liouvillian(&l, rho0, config, observables, |_, _| Ok(()))
}

/// General form of [`propagate`] with a prebuilt Liouvillian and a callback
/// receiving every sampled state.
pub fn propagate_liouvillian<F>(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    config: &PropagationConfig,
    observables: &[Observable],
    mut on_sample: F,
) -> Result<Propagation>
where
    F: FnMut(f64, &DensityMatrix) -> Result<()>,
{
    config.validate()?;
    check_signature(l.signature(), rho0.signature())?;
    rho0.validate()?;
    for o in observables {
        check_signature(o.op.signature(), l.signature())?;
    }
    let sig = l.signature().clone();
    let ops: Vec<CsrMatrix> = observables.iter().map(|o| o.op.to_csr()).collect();
    let dt = config.resolve_dt(l);
    let x0 = vectorize(rho0);
    let restricted = l.restrict(&x0);
    let l = restricted.as_ref().unwrap_or(l);
    let n_steps = (config.t_final / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_final / n_steps as f64;

    let mut series = TimeSeries::default();
    for o in observables {
        series.observables.insert(o.name.clone(), Vec::new());
    }
    let mut diag = Diagnostics {
        method: config.method,
        dt,
        ..Diagnostics::default()
    };
    let mut x = l.compress(&x0);
    let mut record = |t: f64, x: &[C64], series: &mut TimeSeries| -> Result<()> {
        let direct = l.expand(&l.to_direct(t, x));
        let x = &direct[..];
        series.times.push(t);
        for (o, op) in observables.iter().zip(&ops) {
            series.observables.get_mut(&o.name).unwrap().push(expect_vec(op, x));
        }
        on_sample(t, &unvectorize(&sig, x))
    };
    record(0.0, &x, &mut series)?;

    let mut stepper = Stepper::new(l);
    let check = |t: f64, x: &mut [C64], diag: &mut Diagnostics| -> Result<()> {
        let herm = l.hermitian_part(x, config.hermitize_each_step);
        diag.max_hermiticity_drift = diag.max_hermiticity_drift.max(herm);
        let tr = l.trace_of(x);
        let drift = (tr - 1.0).norm();
        diag.max_trace_drift = diag.max_trace_drift.max(drift);
        let bad_entry = x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm() > 1.0 + 1e-6);
        if bad_entry || drift > config.max_trace_drift || herm > 1e-6 {
            return Err(Error::IntegrationFailure {
                t,
                reason: if bad_entry {
                    "state entries left the unit disk or became non-finite".into()
                } else {
                    "trace or Hermiticity drift exceeded tolerance".into()
                },
                trace_drift: drift,
                hermiticity_drift: herm,
            });
        }
        if drift > RENORMALIZE_TOL {
            let inv = 1.0 / tr.re;
            x.iter_mut().for_each(|v| *v *= inv);
            diag.renormalizations += 1;
        }
        Ok(())
    };

    match config.method {
        Method::Rk4 => {
            for step in 1..=n_steps {
                let t0 = (step - 1) as f64 * dt;
                stepper.rk4(t0, dt, &mut x);
                let t = step as f64 * dt;
                check(t, &mut x, &mut diag)?;
                diag.steps += 1;
                if step % config.sample_stride == 0 || step == n_steps {
                    record(t, &x, &mut series)?;
                }
            }
        }
        Method::Rk45 => {
            let mut out = vec![ZERO; x.len()];
            let mut h = dt;
            let mut t = 0.0;
            let mut targets: Vec<f64> = (1..=n_steps)
                .filter(|s| s % config.sample_stride == 0 || *s == n_steps)
                .map(|s| s as f64 * dt)
                .collect();
            targets.reverse();
            while let Some(&target) = targets.last() {
                let step = h.min(target - t);
                let err = stepper.dopri(t, step, &x, &mut out, config.rtol, config.atol);
                if !err.is_finite() {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: "non-finite error estimate".into(),
                        trace_drift: f64::NAN,
                        hermiticity_drift: f64::NAN,
                    });
                }
                if err <= 1.0 {
                    t = if step == target - t { target } else { t + step };
                    x.copy_from_slice(&out);
                    check(t, &mut x, &mut diag)?;
                    diag.steps += 1;
                    if t == target {
                        targets.pop();
                        record(t, &x, &mut series)?;
                    }
                } else {
                    diag.rejected_steps += 1;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
                if h < 1e-14 * config.t_final.max(1.0) {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: "adaptive step size underflow".into(),
                        trace_drift: diag.max_trace_drift,
                        hermiticity_drift: diag.max_hermiticity_drift,
                    });
                }
            }
        }
    }
    let t_end = series.times.last().copied().unwrap_or(0.0);
    Ok(Propagation {
        series,
        final_state: unvectorize(&sig, &l.expand(&l.to_direct(t_end, &x))),
        diagnostics: diag,
    })
}

/// Result of a direct steady-state solve.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityMatrix,
    /// `‖ℒρ‖_max` of the returned state.
    pub residual: f64,
    /// Estimated smallest singular value of the bordered system.
    pub sigma_min: f64,
}

/// Relative threshold on the smallest singular value of the bordered
/// Liouvillian below which the null space is treated as degenerate.
pub const AMBIGUITY_TOL: f64 = 1e-10;
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;
pub const STEADY_POSITIVITY_TOL: f64 = -1e-8;

/// Null vector of a time-independent Liouvillian. The row belonging to `ρ₀₀`
/// is replaced by the trace condition and the system is solved by sparse LU.
pub fn steady_state(h: &Operator, dissipators: &[Dissipator]) -> Result<SteadyState> {
    let l = Liouvillian::constant(h, dissipators)?;
    steady_state_liouvillian(&l)
}

pub fn steady_state_liouvillian(l: &Liouvillian) -> Result<SteadyState> {
    if !l.is_constant() {
        return Err(Error::InvalidParameter("steady_state needs a time-independent generator".into()));
    }
    let sig = l.signature().clone();
    let d = sig.dim();
    let n = l.size();
    let lm = l.at(0.0)?;

    let mut triplets = Vec::with_capacity(lm.nnz() + d);
    let mut norm_inf = 0.0f64;
    for r in 1..n {
        let mut s = 0.0;
        for (c, v) in lm.row(r) {
            triplets.push(Triplet::new(r, c, v));
            s += v.norm();
        }
        norm_inf = norm_inf.max(s);
    }
    for i in 0..d {
        triplets.push(Triplet::new(0, i * d + i, C64::new(1.0, 0.0)));
    }
    norm_inf = norm_inf.max(d as f64);
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solver(format!("assembling bordered Liouvillian: {e:?}")))?;
    let lu = match a.sp_lu() {
        Ok(lu) => lu,
        // a structurally rank-deficient system has no isolated null vector
        Err(faer::sparse::linalg::LuError::SymbolicSingular { .. }) => {
            return Err(Error::AmbiguousSteadyState { sigma_min: 0.0 })
        }
        Err(e) => return Err(Error::Solver(format!("sparse LU failed: {e:?}"))),
    };

    let sigma_min = smallest_singular_value(&lu, n);
    if !(sigma_min >= AMBIGUITY_TOL * norm_inf) {
        return Err(Error::AmbiguousSteadyState { sigma_min });
    }

    let mut rhs = Mat::<C64>::zeros(n, 1);
    rhs[(0, 0)] = C64::new(1.0, 0.0);
    let mut sol = rhs.clone();
    lu.solve_in_place(sol.as_mut());
    // one round of iterative refinement
    let mut x: Vec<C64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let mut ax = vec![ZERO; n];
    for _ in 0..2 {
        l.apply(0.0, &x, &mut ax);
        ax[0] = trace_vec(&x, d);
        let mut res = Mat::<C64>::from_fn(n, 1, |i, _| rhs[(i, 0)] - ax[i]);
        lu.solve_in_place(res.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += res[(i, 0)];
        }
    }

    hermitize(&mut x, d);
    let tr = trace_vec(&x, d).re;
    x.iter_mut().for_each(|v| *v /= tr);
    l.apply(0.0, &x, &mut ax);
    let residual = ax.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(residual < STEADY_RESIDUAL_TOL) {
        return Err(Error::Solver(format!("steady-state residual {residual:.3e} above tolerance")));
    }
    let state = unvectorize(&sig, &x);
    let min_eig = state.min_eigenvalue()?;
    if min_eig < STEADY_POSITIVITY_TOL {
        return Err(Error::Solver(format!("steady state has negative eigenvalue {min_eig:.3e}")));
    }
    Ok(SteadyState {
        state,
        residual,
        sigma_min,
    })
}

/// Inverse iteration on `AᴴA` using the LU factors of `A`.
fn smallest_singular_value(lu: &faer::sparse::linalg::solvers::Lu<usize, C64>, n: usize) -> f64 {
    // deterministic start vector with no special alignment
    let mut v = Mat::<C64>::from_fn(n, 1, |i, _| C64::new(1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0, 0.0));
    let mut sigma = f64::NAN;
    for _ in 0..30 {
        let nv = v.norm_l2();
        if !(nv.is_finite() && nv > 0.0) {
            return 0.0;
        }
        v = Mat::from_fn(n, 1, |i, _| v[(i, 0)] / nv);
        let mut w = v.clone();
        lu.solve_adjoint_in_place(w.as_mut());
        lu.solve_in_place(w.as_mut());
        let growth = w.norm_l2();
        if !growth.is_finite() {
            return 0.0;
        }
        let next = 1.0 / growth.sqrt();
        let converged = (next - sigma).abs() <= 1e-6 * next;
        sigma = next;
        v = w;
        if converged {
            break;
        }
    }
    sigma
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicConfig {
    pub dt: Option<f64>,
    /// Convergence threshold on `‖ρ̄_k − ρ̄_{k−1}‖_max` of consecutive period averages.
    pub tol: f64,
    pub max_periods: usize,
    /// Averaging window used when the generator has no drive frequency.
    pub fallback_period: f64,
    pub omega_max: Option<f64>,
    pub frame: Frame,
    /// Number of evenly spaced states kept from the final period.
    pub cycle_samples: usize,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        Self {
            dt: None,
            tol: 1e-7,
            max_periods: 200_000,
            fallback_period: 1.0,
            omega_max: None,
            frame: Frame::Interaction,
            cycle_samples: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicSteadyState {
    /// Period-averaged state.
    pub state: DensityMatrix,
    /// State at the last stroboscopic time `kT`.
    pub stroboscopic: DensityMatrix,
    /// Instantaneous states at `(k−1)T + jT/n`, `j = 0..n`, over the final period.
    pub cycle: Vec<DensityMatrix>,
    pub period: f64,
    pub periods: usize,
    pub change: f64,
    pub diagnostics: Diagnostics,
}

/// Long-time limit of a periodically driven Liouvillian, from fixed-step RK4
/// over whole periods starting at `rho0`.
pub fn steady_state_periodic(
    h: &TimeDependentHamiltonian,
    dissipators: &[Dissipator],
    rho0: &DensityMatrix,
    config: &PeriodicConfig,
) -> Result<PeriodicSteadyState> {
    let l = Liouvillian::with_frame(h, dissipators, config.frame)?;
    steady_state_periodic_liouvillian(&l, rho0, config)
}

pub fn steady_state_periodic_liouvillian(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    config: &PeriodicConfig,
) -> Result<PeriodicSteadyState> {
    check_signature(l.signature(), rho0.signature())?;
    rho0.validate()?;
    let period = l.period().unwrap_or(config.fallback_period);
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("averaging period {period} must be > 0")));
    }
    let prop = PropagationConfig {
        dt: config.dt,
        t_final: period,
        omega_max: config.omega_max,
        ..PropagationConfig::default()
    };
    let dt_nominal = prop.resolve_dt(l);
    let cycle_samples = config.cycle_samples.max(1);
    // whole number of steps per sample slot
    let per_slot = (period / dt_nominal / cycle_samples as f64).ceil().max(1.0) as usize;
    let steps = per_slot * cycle_samples;
    let dt = period / steps as f64;
    let sig = l.signature();
    let x0 = vectorize(rho0);
    let restricted = l.restrict(&x0);
    let l = restricted.as_ref().unwrap_or(l);

    let mut diag = Diagnostics {
        method: Method::Rk4,
        dt,
        ..Diagnostics::default()
    };
    let mut x = l.compress(&x0);
    let mut stepper = Stepper::new(l);
    let mut avg = vec![ZERO; x.len()];
    let mut prev_avg: Option<Vec<C64>> = None;
    let mut cycle: Vec<Vec<C64>> = Vec::with_capacity(cycle_samples);
    let mut last_change = f64::NAN;
    for k in 1..=config.max_periods {
        let start = (k - 1) * steps;
        // trapezoid average of the direct-frame state over one period
        let x0 = l.to_direct(start as f64 * dt, &x);
        avg.iter_mut().zip(&x0).for_each(|(a, v)| *a = v * 0.5);
        cycle.clear();
        cycle.push(x0);
        for s in 0..steps {
            let t = (start + s) as f64 * dt;
            stepper.rk4(t, dt, &mut x);
            let herm = l.hermitian_part(&mut x, true);
            diag.max_hermiticity_drift = diag.max_hermiticity_drift.max(herm);
            let tr = l.trace_of(&x);
            let drift = (tr - 1.0).norm();
            diag.max_trace_drift = diag.max_trace_drift.max(drift);
            if !drift.is_finite() || drift > 1e-6 {
                return Err(Error::IntegrationFailure {
                    t: t + dt,
                    reason: "trace drift exceeded tolerance".into(),
                    trace_drift: drift,
                    hermiticity_drift: herm,
                });
            }
            if drift > RENORMALIZE_TOL {
                let inv = 1.0 / tr.re;
                x.iter_mut().for_each(|v| *v *= inv);
                diag.renormalizations += 1;
            }
            diag.steps += 1;
            let direct = l.to_direct(t + dt, &x);
            let wgt = if s + 1 == steps { 0.5 } else { 1.0 };
            avg.iter_mut().zip(&direct).for_each(|(a, v)| *a += v * wgt);
            if (s + 1) % per_slot == 0 && s + 1 < steps {
                cycle.push(direct);
            }
        }
        let inv = 1.0 / steps as f64;
        avg.iter_mut().for_each(|a| *a *= inv);
        if let Some(p) = &prev_avg {
            last_change = p.iter().zip(&avg).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if last_change < config.tol {
                let t_end = (k * steps) as f64 * dt;
                return Ok(PeriodicSteadyState {
                    state: unvectorize(sig, &l.expand(&avg)),
                    stroboscopic: unvectorize(sig, &l.expand(&l.to_direct(t_end, &x))),
                    cycle: cycle.iter().map(|c| unvectorize(sig, &l.expand(c))).collect(),
                    period,
                    periods: k,
                    change: last_change,
                    diagnostics: diag,
                });
            }
        }
        match &mut prev_avg {
            Some(p) => p.copy_from_slice(&avg),
            None => prev_avg = Some(avg.clone()),
        }
    }
    Err(Error::NoConvergence {
        periods: config.max_periods,
        change: last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed, fock_annihilation, SpaceSignature, CAVITY};
    use approx::assert_relative_eq;

    fn cavity(n_max: usize) -> (SpaceSignature, Operator) {
        let a = fock_annihilation(n_max).unwrap();
        (a.signature().clone(), a)
    }

    #[test]
    fn zero_generator_gives_zero() {
        let (sig, _) = cavity(3);
        let rho = DensityMatrix::basis(sig.clone(), 1).unwrap();
        let out = lindblad_rhs(&Operator::zeros(&sig), &[], &rho).unwrap();
        assert!(out.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn photon_decay_rate() {
        let (sig, a) = cavity(3);
        let n = &a.adjoint() * &a;
        let rho = DensityMatrix::basis(sig.clone(), 1).unwrap();
        let diss = [Dissipator::new(a, 1.0).unwrap()];
        let out = lindblad_rhs(&Operator::zeros(&sig), &diss, &rho).unwrap();
        let dn: C64 = (0..4).map(|i| out.row(i).dot(&n.to_dense().column(i))).sum();
        assert_relative_eq!(dn.re, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn superoperator_matches_dense_rhs() {
        let sig = SpaceSignature::two_mode(2, 2).unwrap();
        let a = embed(&sig, CAVITY, &fock_annihilation(2).unwrap()).unwrap();
        let b = embed(&sig, crate::hilbert::SPIN_WAVE, &crate::hilbert::boson_annihilation("spin_wave", 2).unwrap()).unwrap();
        let h = &(&(&a.adjoint() * &b) * C64::new(0.3, 0.2)) + &(&(&b.adjoint() * &a) * C64::new(0.3, -0.2));
        let h = &h + &(&(&a.adjoint() * &a) * 1.7);
        let diss = [Dissipator::new(a.clone(), 0.8).unwrap(), Dissipator::new(b.clone(), 0.3).unwrap()];
        let psi: Vec<C64> = (0..9).map(|i| C64::new(1.0 + i as f64, 0.5 * i as f64 - 1.0)).collect();
        let rho = DensityMatrix::pure(sig.clone(), &psi).unwrap();
        let dense = lindblad_rhs(&h, &diss, &rho).unwrap();
        let l = Liouvillian::constant(&h, &diss).unwrap();
        let x = vectorize(&rho);
        let mut y = vec![ZERO; x.len()];
        l.apply(0.0, &x, &mut y);
        for (u, v) in dense.iter().zip(&y) {
            assert!((u - v).norm() < 1e-13);
        }
        assert!(trace_vec(&y, 9).norm() < 1e-12);
    }

    #[test]
    fn cavity_decay_closed_form() {
        let (sig, a) = cavity(3);
        let n = &a.adjoint() * &a;
        let rho = DensityMatrix::basis(sig.clone(), 1).unwrap();
        let diss = [Dissipator::new(a, 1.0).unwrap()];
        let cfg = PropagationConfig {
            dt: Some(1e-3),
            ..PropagationConfig::with_t_final(5.0)
        };
        let h = TimeDependentHamiltonian::constant(Operator::zeros(&sig));
        let run = propagate(&h, &diss, &rho, &cfg, &[Observable::new("n", n)]).unwrap();
        let n_t = run.series.real("n").unwrap();
        assert_eq!(*run.series.times.last().unwrap(), 5.0);
        for (t, v) in run.series.times.iter().zip(n_t) {
            assert!((v - (-t).exp()).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn rk45_agrees_with_rk4() {
        let (sig, a) = cavity(4);
        let h = &(&a + &a.adjoint()) * 2.0;
        let diss = [Dissipator::new(a.clone(), 0.5).unwrap()];
        let rho = DensityMatrix::basis(sig.clone(), 0).unwrap();
        let obs = [Observable::new("a", a)];
        let base = PropagationConfig {
            dt: Some(0.01),
            sample_stride: 50,
            ..PropagationConfig::with_t_final(2.0)
        };
        let h = TimeDependentHamiltonian::constant(h);
        let r4 = propagate(&h, &diss, &rho, &base, &obs).unwrap();
        let r45 = propagate(&h, &diss, &rho, &PropagationConfig { method: Method::Rk45, ..base }, &obs).unwrap();
        assert_eq!(r4.series.times, r45.series.times);
        assert!(r4.final_state.max_abs_diff(&r45.final_state).unwrap() < 1e-7);
    }

    #[test]
    fn oversized_step_is_reported() {
        let (sig, a) = cavity(4);
        let h = TimeDependentHamiltonian::constant(&(&a.adjoint() * &a) * 100.0);
        let psi = vec![C64::new(1.0, 0.0); 5];
        let rho = DensityMatrix::pure(sig, &psi).unwrap();
        let cfg = PropagationConfig {
            dt: Some(0.1),
            frame: Frame::Direct,
            ..PropagationConfig::with_t_final(5.0)
        };
        assert!(matches!(propagate(&h, &[], &rho, &cfg, &[]), Err(Error::IntegrationFailure { .. })));
    }

    #[test]
    fn vacuum_is_cavity_steady_state() {
        let (sig, a) = cavity(4);
        let h = &(&a.adjoint() * &a) * 3.0;
        let ss = steady_state(&h, &[Dissipator::new(a, 1.0).unwrap()]).unwrap();
        let vac = DensityMatrix::basis(sig, 0).unwrap();
        assert!(ss.state.max_abs_diff(&vac).unwrap() < 1e-12);
        assert!(ss.residual < 1e-10);
    }

    #[test]
    fn degenerate_null_space_is_rejected() {
        let sig = SpaceSignature::two_mode(2, 1).unwrap();
        let a = embed(&sig, CAVITY, &fock_annihilation(2).unwrap()).unwrap();
        let err = steady_state(&Operator::zeros(&sig), &[Dissipator::new(a, 1.0).unwrap()]);
        assert!(matches!(err, Err(Error::AmbiguousSteadyState { .. })), "{err:?}");
    }

    #[test]
    fn periodic_solver_handles_static_generator() {
        let (sig, a) = cavity(4);
        let h = &(&a + &a.adjoint()) * 0.7;
        let diss = [Dissipator::new(a, 1.0).unwrap()];
        let direct = steady_state(&h, &diss).unwrap();
        let rho0 = DensityMatrix::basis(sig, 0).unwrap();
        let periodic = steady_state_periodic(
            &TimeDependentHamiltonian::constant(h),
            &diss,
            &rho0,
            &PeriodicConfig {
                tol: 1e-10,
                ..PeriodicConfig::default()
            },
        )
        .unwrap();
        assert!(periodic.state.trace_distance(&direct.state).unwrap() < 1e-6);
    }
    #[test]
    fn interaction_frame_matches_direct_frame() {
        let p = crate::model::ModelParams::dicke_reference(2);
        let h = crate::model::full_hamiltonian(&p, 2).unwrap();
        let diss = crate::model::full_dissipators(&p, 2).unwrap();
        let rho0 = crate::model::ground_state(2, 2).unwrap();
        let cfg = PropagationConfig {
            dt: Some(2e-5),
            sample_stride: 1000,
            ..PropagationConfig::with_t_final(0.1)
        };
        let direct = propagate(&h, &diss, &rho0, &PropagationConfig { frame: Frame::Direct, ..cfg.clone() }, &[]).unwrap();
        let inter = propagate(&h, &diss, &rho0, &cfg, &[]).unwrap();
        assert_eq!(Liouvillian::with_frame(&h, &diss, Frame::Interaction).unwrap().frame(), Frame::Interaction);
        assert!(direct.final_state.max_abs_diff(&inter.final_state).unwrap() < 1e-9);
    }
}

