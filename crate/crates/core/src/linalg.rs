//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Everything here works on `DMatrix<Complex64>`. Rank decisions use a
//! relative singular-value cutoff; norms default to the operator norm.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GapError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative rank cutoff.
pub const RANK_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// An orthonormal frame spanning a subspace of `C^ambient`.
#[derive(Clone, Debug)]
pub struct Subspace {
    frame: CMatrix,
    tol: f64,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Subspace { frame: CMatrix::zeros(ambient, 0), tol: RANK_TOL }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { frame: CMatrix::identity(ambient, ambient), tol: RANK_TOL }
    }

    /// Wraps a frame that is already orthonormal. Caller's responsibility.
    pub fn from_orthonormal(frame: CMatrix, tol: f64) -> Self {
        Subspace { frame, tol }
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn frame(&self) -> &CMatrix {
        &self.frame
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn projector(&self) -> CMatrix {
        &self.frame * self.frame.adjoint()
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &CVector) -> f64 {
        if self.dim() == 0 {
            return v.norm();
        }
        let coeff = self.frame.adjoint() * v;
        (v - &self.frame * coeff).norm()
    }

    /// `‖(1 − P_self) W‖` for a frame `W` of another space.
    pub fn escape(&self, other: &CMatrix) -> f64 {
        if other.ncols() == 0 {
            return 0.0;
        }
        let rest = if self.dim() == 0 {
            other.clone()
        } else {
            other - &self.frame * (self.frame.adjoint() * other)
        };
        op_norm(&rest)
    }

    /// Whether `other ⊆ self` up to `tol`.
    pub fn contains(&self, other: &Subspace, tol: f64) -> bool {
        self.escape(other.frame()) <= tol
    }
}

/// Gram–Schmidt with column-norm pivoting and full reorthogonalisation.
///
/// Columns of `cols` are orthogonalised against `start` (assumed
/// orthonormal) and then picked largest-residual first until the largest
/// residual is at most `stop` or `limit` vectors were taken. Returns the
/// new orthonormal vectors and the residual norm at each pick, which is
/// nonincreasing.
pub fn pivoted_gram_schmidt(cols: &CMatrix, start: Option<&CMatrix>, stop: f64, limit: usize) -> (CMatrix, Vec<f64>) {
    let m = cols.nrows();
    let mut work = cols.clone();
    if let Some(s) = start {
        if s.ncols() > 0 {
            for _ in 0..2 {
                let coeff = s.adjoint() * &work;
                work -= s * coeff;
            }
        }
    }
    let mut picked: Vec<CVector> = Vec::new();
    let mut norms = Vec::new();
    let mut alive: Vec<bool> = vec![true; work.ncols()];
    while picked.len() < limit {
        let mut best = (usize::MAX, 0.0f64);
        for j in 0..work.ncols() {
            if alive[j] {
                let nj = work.column(j).norm();
                if nj > best.1 {
                    best = (j, nj);
                }
            }
        }
        if best.0 == usize::MAX || best.1 <= stop {
            break;
        }
        alive[best.0] = false;
        let mut q: CVector = work.column(best.0).into_owned();
        // Second pass against the picked vectors for stability.
        for p in &picked {
            let d = p.dotc(&q);
            q.axpy(-d, p, ONE);
        }
        if let Some(s) = start {
            if s.ncols() > 0 {
                let coeff = s.adjoint() * &q;
                q -= s * coeff;
            }
        }
        let nq = q.norm();
        if nq <= stop {
            continue;
        }
        q /= c(nq);
        for j in 0..work.ncols() {
            if alive[j] {
                let d = q.dotc(&work.column(j));
                let mut col = work.column_mut(j);
                col.axpy(-d, &q, ONE);
            }
        }
        norms.push(best.1);
        picked.push(q);
    }
    let mut out = CMatrix::zeros(m, picked.len());
    for (j, q) in picked.iter().enumerate() {
        out.set_column(j, q);
    }
    (out, norms)
}

/// Orthonormal basis of the column span of `cols`; directions whose
/// pivoted residual falls below `tol` relative to the largest column are
/// dropped.
///
/// Pivoted Gram–Schmidt is used instead of an SVD: the iterative SVD in
/// nalgebra can return inaccurate singular vectors on rank-deficient
/// inputs, and its `ColPivQR` pivots on entries rather than column norms.
pub fn orthonormal_span(cols: &CMatrix, tol: f64) -> Subspace {
    let (m, n) = cols.shape();
    if n == 0 || m == 0 {
        return Subspace { frame: CMatrix::zeros(m, 0), tol };
    }
    let top = (0..n).map(|j| cols.column(j).norm()).fold(0.0f64, f64::max);
    if top == 0.0 {
        return Subspace { frame: CMatrix::zeros(m, 0), tol };
    }
    let (q, _) = pivoted_gram_schmidt(cols, None, tol * top, m.min(n));
    Subspace { frame: q, tol }
}

/// Numerical rank with an absolute pivot cutoff.
pub fn rank_abs(a: &CMatrix, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    pivoted_gram_schmidt(a, None, tol, a.nrows().min(a.ncols())).0.ncols()
}

/// Orthonormal basis of `ker A`, the complement of `Ran A*` with an
/// absolute pivot cutoff.
pub fn null_space(a: &CMatrix, tol: f64) -> CMatrix {
    let (m, n) = a.shape();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let range = if m == 0 {
        CMatrix::zeros(n, 0)
    } else {
        pivoted_gram_schmidt(&a.adjoint(), None, tol, m.min(n)).0
    };
    let rest = n - range.ncols();
    pivoted_gram_schmidt(&CMatrix::identity(n, n), Some(&range), 1e-8, rest).0
}

/// Span of a list of vectors of one ambient dimension.
pub fn span_of_vectors(vs: &[CVector], ambient: usize, tol: f64) -> Result<Subspace> {
    if let Some(bad) = vs.iter().find(|v| v.len() != ambient) {
        return Err(GapError::Shape(format!(
            "vector of length {} in ambient dimension {}",
            bad.len(),
            ambient
        )));
    }
    let cols = CMatrix::from_fn(ambient, vs.len(), |i, j| vs[j][i]);
    Ok(orthonormal_span(&cols, tol))
}

/// Span of matrices, viewed as vectors in `C^{rows·cols}`.
pub fn span_of_matrices(ms: &[CMatrix], tol: f64) -> Result<Subspace> {
    let Some(first) = ms.first() else {
        return Ok(Subspace::zero(0));
    };
    let shape = first.shape();
    let vs: Vec<CVector> = ms
        .iter()
        .map(|m| {
            if m.shape() != shape {
                Err(GapError::Shape(format!("matrix {:?} among {:?}", m.shape(), shape)))
            } else {
                Ok(vec_of(m))
            }
        })
        .collect::<Result<_>>()?;
    span_of_vectors(&vs, shape.0 * shape.1, tol)
}

/// Column-stacking vectorisation.
pub fn vec_of(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVector, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn is_hermitian(h: &CMatrix, rel: f64) -> bool {
    if !h.is_square() {
        return false;
    }
    let scale = h.norm().max(1.0);
    (h - h.adjoint()).norm() <= rel * scale
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Real symmetric inputs take the faster real path.
pub fn eig_hermitian(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !is_hermitian(h, 1e-10) {
        return Err(GapError::NotHermitian);
    }
    let n = h.nrows();
    if n == 0 {
        return Ok((vec![], CMatrix::zeros(0, 0)));
    }
    let real = h.iter().all(|z| z.im == 0.0);
    let (vals, vecs): (Vec<f64>, CMatrix) = if real {
        let hr = h.map(|z| z.re);
        let hr = (&hr + hr.transpose()) * 0.5;
        let e = SymmetricEigen::new(hr);
        (e.eigenvalues.iter().cloned().collect(), e.eigenvectors.map(c))
    } else {
        let hs = (h + h.adjoint()) * c(0.5);
        let e = SymmetricEigen::new(hs);
        (e.eigenvalues.iter().cloned().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut frame = CMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        frame.set_column(j, &vecs.column(i));
    }
    Ok((sorted, frame))
}

/// Eigenvalues only, ascending.
pub fn eigvals_hermitian(h: &CMatrix) -> Result<Vec<f64>> {
    if !is_hermitian(h, 1e-10) {
        return Err(GapError::NotHermitian);
    }
    let real = h.iter().all(|z| z.im == 0.0);
    let mut vals: Vec<f64> = if real {
        let hr = h.map(|z| z.re);
        let hr = (&hr + hr.transpose()) * 0.5;
        hr.symmetric_eigenvalues().iter().cloned().collect()
    } else {
        let hs = (h + h.adjoint()) * c(0.5);
        hs.symmetric_eigenvalues().iter().cloned().collect()
    };
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Support projection and functions of a PSD matrix.
#[derive(Clone, Debug)]
pub struct PsdParts {
    pub support: CMatrix,
    pub pinv: CMatrix,
    pub sqrt: CMatrix,
    pub pinv_sqrt: CMatrix,
    /// Smallest eigenvalue on the support.
    pub min_positive: f64,
}

/// Support projection, pseudo-inverse and square roots of a PSD matrix.
///
/// Eigenvalues at or below `tol·‖A‖` count as zero.
pub fn support_and_pinv(a: &CMatrix, tol: f64) -> Result<PsdParts> {
    let (vals, vecs) = eig_hermitian(a)?;
    let n = a.nrows();
    let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = tol * norm;
    if vals.iter().any(|&v| v < -cut.max(1e-14)) {
        return Err(GapError::NotPsd(vals[0]));
    }
    let mut support = CMatrix::zeros(n, n);
    let mut pinv = CMatrix::zeros(n, n);
    let mut sqrt = CMatrix::zeros(n, n);
    let mut pinv_sqrt = CMatrix::zeros(n, n);
    let mut min_positive = f64::INFINITY;
    for (i, &v) in vals.iter().enumerate() {
        if norm > 0.0 && v > cut {
            let col = vecs.column(i);
            let outer = &col * col.adjoint();
            support += &outer;
            pinv += &outer * c(1.0 / v);
            sqrt += &outer * c(v.sqrt());
            pinv_sqrt += &outer * c(1.0 / v.sqrt());
            min_positive = min_positive.min(v);
        }
    }
    Ok(PsdParts { support, pinv, sqrt, pinv_sqrt, min_positive })
}

/// `sin` of the largest principal angle; 1 when dimensions differ.
pub fn subspace_distance(u: &Subspace, v: &Subspace) -> Result<f64> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(GapError::Shape(format!(
            "ambient dimensions {} vs {}",
            u.ambient_dim(),
            v.ambient_dim()
        )));
    }
    if u.dim() != v.dim() {
        return Ok(1.0);
    }
    if u.dim() == 0 {
        return Ok(0.0);
    }
    Ok(u.escape(v.frame()).max(v.escape(u.frame())).min(1.0))
}

/// Smallest eigenvalue above `zero_tol`, `None` when there is none.
pub fn min_nonzero_eig(h: &CMatrix, zero_tol: f64) -> Result<Option<f64>> {
    let vals = eigvals_hermitian(h)?;
    min_nonzero_of(&vals, zero_tol)
}

pub fn min_nonzero_of(vals: &[f64], zero_tol: f64) -> Result<Option<f64>> {
    if let Some(&v) = vals.iter().find(|&&v| v < -zero_tol) {
        return Err(GapError::NotPsd(v));
    }
    Ok(vals.iter().cloned().filter(|&v| v > zero_tol).fold(None, |acc, v| match acc {
        None => Some(v),
        Some(a) => Some(f64::min(a, v)),
    }))
}

/// Operator norm (largest singular value).
pub fn op_norm(a: &CMatrix) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    let gram = if m >= n { a.adjoint() * a } else { a * a.adjoint() };
    let gram = (&gram + gram.adjoint()) * c(0.5);
    let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0f64, f64::max);
    top.max(0.0).sqrt()
}

/// Hilbert–Schmidt norm.
pub fn hs_norm(a: &CMatrix) -> f64 {
    a.norm()
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(a: &CMatrix) -> Result<f64> {
    Ok(eigvals_hermitian(a)?.iter().map(|v| v.abs()).sum())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

/// Matrix unit `|i⟩⟨j|` in dimension `n`.
pub fn unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn diag_real(d: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d.len(), d.len());
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = c(x);
    }
    m
}

pub fn diag(d: &[C64]) -> CMatrix {
    let mut m = CMatrix::zeros(d.len(), d.len());
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = x;
    }
    m
}

/// Integer power by repeated squaring.
pub fn mat_pow(a: &CMatrix, mut e: u32) -> CMatrix {
    let mut base = a.clone();
    let mut acc = CMatrix::identity(a.nrows(), a.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Complex Gaussian matrix with i.i.d. standard normal parts.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(rng, n, n);
    (&g + g.adjoint()) * c(0.5)
}

/// Random density matrix of full rank.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(rng, n, n);
    let p = &g * g.adjoint();
    let t = p.trace();
    p / t
}

/// Eigenvalues of a general square matrix via complex Schur form.
pub fn eigvals_general(a: &CMatrix) -> Result<Vec<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    // Exact zero structure (nilpotent corners) can stall the shifted QR
    // sweep; a seeded unitary similarity changes the path, not the spectrum.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5c4u64);
    for attempt in 0..4 {
        let m = if attempt == 0 {
            a.clone()
        } else {
            let q = random_matrix(&mut rng, n, n).qr().q();
            q.adjoint() * a * &q
        };
        if let Some(schur) = nalgebra::Schur::try_new(m, 1e-15, 20_000) {
            let t = schur.unpack().1;
            return Ok((0..n).map(|i| t[(i, i)]).collect());
        }
    }
    Err(GapError::Numerical("Schur iteration did not converge".into()))
}

/// Unit vector closest to the null space of a square matrix: the unit
/// vector completing the pivoted span of the first `n − 1` directions of
/// `Ran A*`. Also returns `‖A v‖`.
pub fn null_vector(a: &CMatrix) -> (CVector, f64) {
    let n = a.ncols();
    let range = pivoted_gram_schmidt(&a.adjoint(), None, 0.0, n.saturating_sub(1)).0;
    let rest = pivoted_gram_schmidt(&CMatrix::identity(n, n), Some(&range), 0.0, 1).0;
    let v: CVector = rest.column(0).into_owned();
    let res = (a * &v).norm();
    (v, res)
}

/// Largest singular value of a linear map given as a matrix; alias kept
/// for readability where the matrix represents a superoperator.
pub fn superop_norm(m: &CMatrix) -> f64 {
    op_norm(m)
}

/// Inverse of a square matrix, error when singular.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| GapError::Numerical("singular matrix".into()))
}

/// Applies `op` (acting on `m` sites) at sites `x..x+m` of an `N`-site chain
/// with local dimension `n`, column by column. Site 0 is the most
/// significant tensor digit.
pub fn apply_local(op: &CMatrix, w: &CMatrix, n: usize, sites: usize, x: usize) -> CMatrix {
    let mid = op.nrows();
    let left = n.pow(x as u32);
    let total = n.pow(sites as u32);
    assert_eq!(w.nrows(), total, "vector length must be n^N");
    let right = total / (left * mid);
    assert_eq!(left * mid * right, total, "window exceeds the chain");
    let opt = op.transpose();
    let mut out = CMatrix::zeros(total, w.ncols());
    for j in 0..w.ncols() {
        let col = w.column(j);
        let src = col.as_slice();
        for a in 0..left {
            let off = a * mid * right;
            let block = nalgebra::DMatrixView::from_slice(&src[off..off + mid * right], right, mid);
            let res = block * &opt;
            let mut dst = out.column_mut(j);
            dst.as_mut_slice()[off..off + mid * right].copy_from_slice(res.as_slice());
        }
    }
    out
}
