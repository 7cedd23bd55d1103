//! Parent Hamiltonians `H_N^m = Σ_x τ_x(1 − G_m)` on open chains, their
//! low spectrum, and martingale gap certificates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GapError, Result};
use crate::ground::{epsilon_analytic, epsilon_numeric, ground_space, DENSE_VECTOR_CAP, SUBSPACE_TOL};
use crate::linalg::{
    apply_local, c, eig_hermitian, min_nonzero_of, random_vector, subspace_distance, CMatrix, CVector, Subspace,
    RANK_TOL,
};
use crate::transfer::{DecayConstants, KrausTuple};

/// Largest `n^N` for which `H` is materialised and fully diagonalised.
pub const DENSE_MATRIX_CAP: usize = 1024;
/// Relative cutoff: eigenvalues below `ZERO_REL·‖H‖` count as zero.
pub const ZERO_REL: f64 = 1e-9;
pub const LANCZOS_MAX_ITER: usize = 240;
const LANCZOS_TOL: f64 = 1e-11;
/// Overlap `N` values sampled per `l` when estimating `ε_l` numerically.
pub const EPS_SAMPLES: usize = 4;

/// Size limits for dense and matrix-free work.
#[derive(Clone, Copy, Debug)]
pub struct Caps {
    pub dense_matrix: usize,
    pub vector: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { dense_matrix: DENSE_MATRIX_CAP, vector: DENSE_VECTOR_CAP }
    }
}

/// `H_N^m` as a matrix-free operator.
#[derive(Clone, Debug)]
pub struct ChainHamiltonian {
    n: usize,
    sites: usize,
    m: usize,
    proj: CMatrix,
}

impl ChainHamiltonian {
    pub fn new(v: &KrausTuple, m: usize, sites: usize) -> Result<Self> {
        if m == 0 || sites < m {
            return Err(GapError::Parameter(format!("need 1 ≤ m ≤ N, got m = {m}, N = {sites}")));
        }
        let proj = ground_space(v, m)?.projector();
        Ok(ChainHamiltonian { n: v.n(), sites, m, proj })
    }

    pub fn dim(&self) -> usize {
        self.n.pow(self.sites as u32)
    }

    pub fn terms(&self) -> usize {
        self.sites - self.m + 1
    }

    /// Upper bound on `‖H‖`: the number of projector terms.
    pub fn norm_bound(&self) -> f64 {
        self.terms() as f64
    }

    /// `H W`, column by column.
    pub fn apply(&self, w: &CMatrix) -> CMatrix {
        let mut out = w * c(self.terms() as f64);
        for x in 0..self.terms() {
            out -= apply_local(&self.proj, w, self.n, self.sites, x);
        }
        out
    }

    pub fn apply_vec(&self, w: &CVector) -> CVector {
        let m = CMatrix::from_column_slice(w.len(), 1, w.as_slice());
        self.apply(&m).column(0).into_owned()
    }

    /// Largest `‖(1 − G_m)_x W‖` over the local terms.
    pub fn local_residual(&self, w: &CMatrix) -> f64 {
        (0..self.terms())
            .map(|x| crate::linalg::op_norm(&(w - apply_local(&self.proj, w, self.n, self.sites, x))))
            .fold(0.0, f64::max)
    }

    pub fn dense(&self) -> CMatrix {
        let d = self.dim();
        self.apply(&CMatrix::identity(d, d))
    }
}

/// Dense `H_N^m`; errors above `cap`.
pub fn build_h(v: &KrausTuple, m: usize, sites: usize, cap: usize) -> Result<CMatrix> {
    let d = v
        .n()
        .checked_pow(sites as u32)
        .ok_or(GapError::CapExceeded { dim: usize::MAX, cap })?;
    if d > cap {
        return Err(GapError::CapExceeded { dim: d, cap });
    }
    let h = ChainHamiltonian::new(v, m, sites)?.dense();
    Ok((&h + h.adjoint()) * c(0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub n: usize,
    pub m: usize,
    pub method: SpectrumMethod,
    pub ground_energy: f64,
    /// Smallest eigenvalue above the zero cutoff.
    pub gap: Option<f64>,
    pub kernel_dim: usize,
    /// Dense mode only; Lanczos mode deflates `Ran Γ_N` directly.
    pub kernel: Option<Subspace>,
    pub kernel_distance: f64,
    pub kernel_matches_gamma: bool,
    /// `max_x ‖(1 − G_m)_x K‖` for a kernel frame `K`.
    pub frustration_residual: f64,
    /// Lanczos residual of the reported gap value.
    pub residual: f64,
}

/// Full diagonalisation of `H_N^m` within `caps.dense_matrix`.
pub fn exact_spectrum(v: &KrausTuple, m: usize, sites: usize, caps: Caps) -> Result<SpectrumReport> {
    let op = ChainHamiltonian::new(v, m, sites)?;
    if op.dim() > caps.dense_matrix {
        return Err(GapError::CapExceeded { dim: op.dim(), cap: caps.dense_matrix });
    }
    let h = op.dense();
    let h = (&h + h.adjoint()) * c(0.5);
    let (vals, vecs) = eig_hermitian(&h)?;
    let norm = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let zero_tol = ZERO_REL * norm.max(1.0);
    let kdim = vals.iter().take_while(|&&x| x <= zero_tol).count();
    let frame = vecs.columns(0, kdim).into_owned();
    let kernel = Subspace::from_orthonormal(frame.clone(), RANK_TOL);
    let gamma = ground_space(v, sites)?;
    let kernel_distance = subspace_distance(&kernel, &gamma)?;
    Ok(SpectrumReport {
        n: sites,
        m,
        method: SpectrumMethod::Dense,
        ground_energy: vals[0],
        gap: min_nonzero_of(&vals, zero_tol)?,
        kernel_dim: kdim,
        kernel: Some(kernel),
        kernel_distance,
        kernel_matches_gamma: kernel_distance <= SUBSPACE_TOL,
        frustration_residual: op.local_residual(&frame),
        residual: 0.0,
    })
}

struct Ritz {
    value: f64,
    vector: CVector,
    residual: f64,
}

fn orthogonalise(w: &mut CVector, basis: &[CVector]) {
    for _ in 0..2 {
        for q in basis {
            let p = q.dotc(w);
            w.axpy(-p, q, c(1.0));
        }
    }
}

/// Smallest eigenpair of `H` restricted to the complement of `deflate`.
fn lanczos_min(op: &ChainHamiltonian, deflate: &[CVector], seed: u64) -> Result<Ritz> {
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q0 = random_vector(&mut rng, d);
    orthogonalise(&mut q0, deflate);
    let nrm = q0.norm();
    if nrm < 1e-12 {
        return Err(GapError::Numerical("deflation space fills the chain".into()));
    }
    q0 /= c(nrm);
    let scale = op.norm_bound();
    let mut basis = vec![q0];
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (vec![], vec![]);
    let max_iter = LANCZOS_MAX_ITER.min(d - deflate.len());
    let mut best: Option<Ritz> = None;
    for j in 0..max_iter {
        let mut w = op.apply_vec(&basis[j]);
        let a = basis[j].dotc(&w).re;
        alpha.push(a);
        // Deflation last: projecting on the Krylov basis afterwards would
        // re-inject kernel components that then grow geometrically.
        orthogonalise(&mut w, &basis);
        orthogonalise(&mut w, deflate);
        let b = w.norm();
        let done = b <= 1e-13 * scale || j + 1 == max_iter;
        if j % 4 == 3 || done {
            let t = tridiagonal(&alpha, &beta);
            let (vals, vecs) = eig_hermitian(&t)?;
            let last = vecs[(alpha.len() - 1, 0)].norm();
            let residual = b * last;
            let mut vector = CVector::zeros(d);
            for (i, q) in basis.iter().enumerate() {
                vector.axpy(vecs[(i, 0)], q, c(1.0));
            }
            let r = Ritz { value: vals[0], vector, residual };
            let converged = residual <= LANCZOS_TOL * scale;
            best = Some(r);
            if converged || done {
                break;
            }
        }
        beta.push(b);
        basis.push(w / c(b));
    }
    best.ok_or_else(|| GapError::Numerical("Lanczos produced no Ritz pair".into()))
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> CMatrix {
    let k = alpha.len();
    CMatrix::from_fn(k, k, |i, j| {
        if i == j {
            c(alpha[i])
        } else if i == j + 1 || j == i + 1 {
            c(beta[i.min(j)])
        } else {
            c(0.0)
        }
    })
}

/// Smallest nonzero eigenvalue of `H_N^m` without materialising it:
/// `Ran Γ_N` is deflated, and any further near-zero Ritz vectors join
/// the deflation set until the smallest Ritz value is nonzero.
pub fn lanczos_gap(v: &KrausTuple, m: usize, sites: usize, caps: Caps, seed: u64) -> Result<SpectrumReport> {
    let op = ChainHamiltonian::new(v, m, sites)?;
    if op.dim() > caps.vector {
        return Err(GapError::CapExceeded { dim: op.dim(), cap: caps.vector });
    }
    let gamma = ground_space(v, sites)?;
    let kernel_frame = gamma.frame().clone();
    let frustration_residual = op.local_residual(&kernel_frame);
    let mut deflate: Vec<CVector> = (0..kernel_frame.ncols()).map(|j| kernel_frame.column(j).into_owned()).collect();
    let zero_tol = ZERO_REL * op.norm_bound();
    let mut extra = 0;
    loop {
        let r = lanczos_min(&op, &deflate, seed.wrapping_add(extra as u64))?;
        if r.value > zero_tol || extra >= 64 {
            let gap = (r.value > zero_tol).then_some(r.value);
            return Ok(SpectrumReport {
                n: sites,
                m,
                method: SpectrumMethod::Lanczos,
                ground_energy: 0.0,
                gap,
                kernel_dim: deflate.len(),
                kernel: None,
                kernel_distance: if extra == 0 { 0.0 } else { 1.0 },
                kernel_matches_gamma: extra == 0 && frustration_residual <= 1e-10,
                frustration_residual,
                residual: r.residual,
            });
        }
        let mut vnew = r.vector;
        orthogonalise(&mut vnew, &deflate);
        let nv = vnew.norm();
        deflate.push(vnew / c(nv));
        extra += 1;
    }
}

/// Dense when within `caps.dense_matrix`, otherwise Lanczos.
pub fn spectrum(v: &KrausTuple, m: usize, sites: usize, caps: Caps, seed: u64) -> Result<SpectrumReport> {
    let d = v.n().checked_pow(sites as u32).unwrap_or(usize::MAX);
    if d <= caps.dense_matrix {
        exact_spectrum(v, m, sites, caps)
    } else {
        lanczos_gap(v, m, sites, caps, seed)
    }
}

#[derive(Clone, Debug)]
pub struct GapCertificate {
    pub m: usize,
    pub l: usize,
    pub gamma_lm: f64,
    pub epsilon_l: f64,
    /// Whether `epsilon_l` came from dense overlaps or the analytic bound.
    pub epsilon_numeric: bool,
    pub bound: f64,
    pub valid_from: usize,
}

/// Numeric `ε_l` as the max over `N = 2l..2l+EPS_SAMPLES−1` within the
/// vector cap, or `None` when even `N = 2l` is too large.
pub fn epsilon_estimate(v: &KrausTuple, l: usize, caps: Caps) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for big_n in 2 * l..2 * l + EPS_SAMPLES {
        match epsilon_numeric(v, l, big_n, caps.vector) {
            Ok(e) => best = Some(best.map_or(e, |b: f64| b.max(e))),
            Err(GapError::CapExceeded { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

/// Certificate at a fixed `l`: `γ_{l,m}/(l+2)·(1 − ε_l√l)²`.
pub fn gap_certificate(v: &KrausTuple, m: usize, l: usize, dc: &DecayConstants, caps: Caps) -> Result<GapCertificate> {
    if l < m {
        return Err(GapError::Precondition(format!("l = {l} below m = {m}")));
    }
    let (eps, numeric) = match epsilon_estimate(v, l, caps)? {
        Some(e) => (e, true),
        None => (epsilon_analytic(l, dc), false),
    };
    let root = eps * (l as f64).sqrt();
    if root >= 1.0 {
        return Err(GapError::MartingaleFails(root));
    }
    let g1 = spectrum(v, m, l, caps, 0)?.gap;
    let g2 = spectrum(v, m, 2 * l, caps, 0)?.gap;
    let gamma_lm = match (g1, g2) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(GapError::Numerical("H_l^m and H_2l^m have no nonzero spectrum".into())),
    };
    let bound = gamma_lm / (l as f64 + 2.0) * (1.0 - root).powi(2);
    Ok(GapCertificate { m, l, gamma_lm, epsilon_l: eps, epsilon_numeric: numeric, bound, valid_from: 2 * l + 1 })
}

/// First `l` in `l_min..=l_max` with `ε_l√l < 1`.
pub fn search_certificate(
    v: &KrausTuple,
    m: usize,
    l_min: usize,
    l_max: usize,
    dc: &DecayConstants,
    caps: Caps,
) -> Result<GapCertificate> {
    let mut last = GapError::MartingaleFails(f64::INFINITY);
    for l in l_min.max(m).max(1)..=l_max {
        match gap_certificate(v, m, l, dc, caps) {
            Ok(cert) => return Ok(cert),
            Err(e @ GapError::MartingaleFails(_)) => last = e,
            Err(e @ GapError::CapExceeded { .. }) => return Err(e),
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

#[derive(Clone, Debug)]
pub struct SoundnessRow {
    pub n: usize,
    pub gap: Option<f64>,
    pub method: SpectrumMethod,
    pub holds: bool,
}

/// `min_nonzero_eig(H_N^m) ≥ bound − 1e−9` for `N = valid_from..=n_max`.
pub fn soundness_table(v: &KrausTuple, cert: &GapCertificate, n_max: usize, caps: Caps) -> Result<Vec<SoundnessRow>> {
    let mut rows = Vec::new();
    for big_n in cert.valid_from..=n_max {
        let rep = spectrum(v, cert.m, big_n, caps, big_n as u64)?;
        let holds = rep.gap.map_or(true, |g| g >= cert.bound - 1e-9);
        rows.push(SoundnessRow { n: big_n, gap: rep.gap, method: rep.method, holds });
    }
    Ok(rows)
}

/// Largest `N` whose chain vectors fit in `caps.vector`.
pub fn max_checkable_n(n: usize, caps: Caps) -> usize {
    let mut big_n = 0;
    while n.checked_pow(big_n as u32 + 1).is_some_and(|d| d <= caps.vector) {
        big_n += 1;
    }
    big_n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_aklt, build_kappa_example, build_product};

    #[test]
    fn product_chain_has_unit_gap() {
        let v = build_product().kraus();
        let rep = exact_spectrum(&v, 1, 5, Caps::default()).unwrap();
        assert!(rep.ground_energy.abs() < 1e-12);
        assert!((rep.gap.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.kernel_dim, 1);
        let h = build_h(&v, 1, 3, 1024).unwrap();
        assert!(crate::linalg::is_hermitian(&h, 1e-14));
    }

    #[test]
    fn e1_kernel() {
        let v = build_kappa_example(1, 1, 1, 0.5, 2).unwrap().kraus();
        let rep = exact_spectrum(&v, 4, 6, Caps::default()).unwrap();
        assert_eq!(rep.kernel_dim, 4);
        assert!(rep.kernel_matches_gamma);
        assert!(rep.frustration_residual < 1e-10);
    }

    #[test]
    fn aklt_kernel_and_lanczos_agree() {
        let v = build_aklt().kraus();
        let rep = exact_spectrum(&v, 2, 4, Caps::default()).unwrap();
        assert_eq!(rep.kernel_dim, 4);
        let dense = exact_spectrum(&v, 2, 6, Caps::default()).unwrap();
        let caps = Caps { dense_matrix: 16, vector: 1 << 12 };
        let lz = lanczos_gap(&v, 2, 6, caps, 5).unwrap();
        assert!((dense.gap.unwrap() - lz.gap.unwrap()).abs() < 1e-8, "{:?} {:?}", dense.gap, lz.gap);
    }

    #[test]
    fn product_certificate() {
        let t = build_product();
        let v = t.kraus();
        let tr = crate::transfer::fixed_point_triple(&v, &t.p_hat_r(), &t.p_hat_l()).unwrap();
        let dc = crate::transfer::decay_constants(&v, &tr, 20).unwrap();
        let cert = gap_certificate(&v, 1, 2, &dc, Caps::default()).unwrap();
        assert!(cert.epsilon_l < 1e-12);
        assert!((cert.bound - 0.25).abs() < 1e-9);
        assert_eq!(cert.valid_from, 5);
    }

    #[test]
    fn cap_is_enforced() {
        let v = build_aklt().kraus();
        assert!(matches!(build_h(&v, 2, 8, 1024), Err(GapError::CapExceeded { .. })));
    }
}
