//! Γ-maps and the finite-chain ground spaces they generate.
//!
//! Chain vectors live in `(C^n)^{⊗N}` with site 0 as the most significant
//! digit, so `ψ_{μ0} ⊗ … ⊗ ψ_{μ(N−1)}` sits at index `Σ μ_j n^{N−1−j}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GapError, Result};
use crate::linalg::{
    apply_local, eig_hermitian, eigvals_hermitian, hs_norm, null_space, rank_abs, inverse, kron, op_norm, orthonormal_span, random_matrix,
    subspace_distance, unvec, vec_of, CMatrix, CVector, Subspace, RANK_TOL,
};
use crate::model::{compute_lb, ClassATuple, MonomialSpans, LB_MAX, LB_PERSISTENCE};
use crate::transfer::{weighted_inner, DecayConstants, KrausTuple, SpectralTripleII};

/// Largest chain vector length handled densely.
pub const DENSE_VECTOR_CAP: usize = 1 << 20;
/// Principal-angle cutoff for subspace equality.
pub const SUBSPACE_TOL: f64 = 1e-9;
/// Smallest singular value still counted as injective.
pub const INJECTIVE_TOL: f64 = 1e-8;
/// Pivots of `((1 − P)W)*` below this count as "inside".
const INTERSECTION_TOL: f64 = 1e-7;

fn chain_len(n: usize, l: usize) -> Option<usize> {
    n.checked_pow(l as u32)
}

fn check_cap(n: usize, l: usize, cap: usize) -> Result<usize> {
    match chain_len(n, l) {
        Some(d) if d <= cap => Ok(d),
        Some(d) => Err(GapError::CapExceeded { dim: d, cap }),
        None => Err(GapError::CapExceeded { dim: usize::MAX, cap }),
    }
}

/// `Γ_l(X)`, contracted depth-first from the right:
/// `Γ_l(X) = Σ_ν Γ_{l−1}(X v_ν*) ⊗ ψ_ν`.
pub fn gamma(v: &KrausTuple, l: usize, x: &CMatrix) -> Result<CVector> {
    let k = v.k();
    if x.shape() != (k, k) {
        return Err(GapError::Shape(format!("X is {:?}, expected {k}x{k}", x.shape())));
    }
    let len = check_cap(v.n(), l, DENSE_VECTOR_CAP)?;
    let mut out = CVector::zeros(len);
    if hs_norm(x) == 0.0 {
        return Ok(out);
    }
    let adj: Vec<CMatrix> = v.ops().iter().map(|m| m.adjoint()).collect();
    gamma_rec(&adj, x, l, 0, 1, &mut out);
    Ok(out)
}

fn gamma_rec(adj: &[CMatrix], y: &CMatrix, remaining: usize, index: usize, stride: usize, out: &mut CVector) {
    if remaining == 0 {
        out[index] = y.trace();
        return;
    }
    let n = adj.len();
    for (nu, a) in adj.iter().enumerate() {
        let next = y * a;
        gamma_rec(adj, &next, remaining - 1, index + nu * stride, stride * n, out);
    }
}

/// Matrix of `Γ_l` on `vec(X)`: row `μ`, column `i + j·k`, entry `conj(v̂_μ)_{ij}`.
pub fn gamma_matrix(v: &KrausTuple, l: usize) -> Result<CMatrix> {
    let k = v.k();
    let rows = check_cap(v.n(), l, DENSE_VECTOR_CAP)?;
    let mut g = CMatrix::zeros(rows, k * k);
    let id = CMatrix::identity(k, k);
    words_rec(v.ops(), &id, l, 0, &mut g);
    Ok(g)
}

fn words_rec(ops: &[CMatrix], prefix: &CMatrix, remaining: usize, index: usize, g: &mut CMatrix) {
    if remaining == 0 {
        for (c, z) in prefix.iter().enumerate() {
            g[(index, c)] = z.conj();
        }
        return;
    }
    let n = ops.len();
    for (nu, op) in ops.iter().enumerate() {
        let next = prefix * op;
        words_rec(ops, &next, remaining - 1, index * n + nu, g);
    }
}

/// `𝒢_l = Ran Γ_l`.
pub fn ground_space(v: &KrausTuple, l: usize) -> Result<Subspace> {
    Ok(orthonormal_span(&gamma_matrix(v, l)?, RANK_TOL))
}

/// Orthonormal eigenvectors of a projection with eigenvalue near 1.
pub fn range_frame(p: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = eig_hermitian(p)?;
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    Ok(CMatrix::from_fn(p.nrows(), keep.len(), |r, c| vecs[(r, keep[c])]))
}

/// Orthonormal basis `u_i w_j*` of `p·M_k·q`.
pub fn corner_basis(p: &CMatrix, q: &CMatrix) -> Result<Vec<CMatrix>> {
    let u = range_frame(p)?;
    let w = range_frame(q)?;
    let mut out = Vec::with_capacity(u.ncols() * w.ncols());
    for j in 0..w.ncols() {
        for i in 0..u.ncols() {
            out.push(u.column(i) * w.column(j).adjoint());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GroundSpaceFrame {
    pub l: usize,
    /// `Ran Γ_l` over all of `M_k`.
    pub space: Subspace,
    /// `Z_i ∈ p·M·q` with `Γ_l(Z_i)` equal to frame column `i`.
    pub preimages: Option<Vec<CMatrix>>,
    pub dim_corner: usize,
    pub rank_corner: usize,
    pub injective: bool,
    pub bijective: bool,
    pub preimage_residual: Option<f64>,
}

pub fn gamma_frame(v: &KrausTuple, l: usize, p: &CMatrix, q: &CMatrix) -> Result<GroundSpaceFrame> {
    if l == 0 {
        return Err(GapError::Parameter("chain length must be at least 1".into()));
    }
    let g = gamma_matrix(v, l)?;
    let basis = corner_basis(p, q)?;
    let d = basis.len();
    let a = CMatrix::from_fn(g.ncols(), d, |r, c| basis[c].as_slice()[r]);
    let images = &g * &a;
    let space = orthonormal_span(&g, RANK_TOL);
    let rank_corner = orthonormal_span(&images, RANK_TOL).dim();
    let injective = rank_corner == d;
    let bijective = injective && rank_corner == space.dim();
    let (preimages, preimage_residual) = if bijective && d > 0 {
        let f = space.frame();
        // Full column rank here, so a thin QR solve is exact.
        let qr = images.clone().qr();
        let coeff = qr
            .r()
            .solve_upper_triangular(&(qr.q().adjoint() * f))
            .ok_or_else(|| GapError::Numerical("singular Γ image".into()))?;
        let pre: Vec<CMatrix> = (0..d)
            .map(|i| {
                let mut z = CMatrix::zeros(v.k(), v.k());
                for j in 0..d {
                    z += &basis[j] * coeff[(j, i)];
                }
                z
            })
            .collect();
        let mut worst = 0.0f64;
        for (i, z) in pre.iter().enumerate() {
            let r = (&g * vec_of(z) - f.column(i)).norm();
            worst = worst.max(r);
        }
        (Some(pre), Some(worst))
    } else {
        (None, None)
    };
    Ok(GroundSpaceFrame {
        l,
        space,
        preimages,
        dim_corner: d,
        rank_corner,
        injective,
        bijective,
        preimage_residual,
    })
}

/// Rank of `Γ_N` on `p·M·q`, via `ker Γ_N = 𝒦_N^⊥`.
fn corner_rank(k_frame: &CMatrix, corner_frame: &CMatrix) -> usize {
    if k_frame.ncols() == 0 || corner_frame.ncols() == 0 {
        return 0;
    }
    rank_abs(&(k_frame.adjoint() * corner_frame), INJECTIVE_TOL)
}

/// Per-`N` injectivity of `Γ_N` on `p·M·q` for `N = 1..=cap`.
pub fn injectivity_profile(v: &KrausTuple, p: &CMatrix, q: &CMatrix, cap: usize) -> Result<Vec<bool>> {
    let basis = corner_basis(p, q)?;
    let d = basis.len();
    let corner = CMatrix::from_fn(v.k() * v.k(), d, |r, c| basis[c].as_slice()[r]);
    Ok(MonomialSpans::new(v.ops())
        .take(cap)
        .map(|s| corner_rank(s.frame(), &corner) == d)
        .collect())
}

/// Smallest `M ≤ cap` with `Γ_N` injective on `p·M·q` for every `N = M..=cap`.
pub fn injectivity_threshold(v: &KrausTuple, p: &CMatrix, q: &CMatrix, cap: usize) -> Result<usize> {
    if cap == 0 {
        return Err(GapError::Parameter("cap must be at least 1".into()));
    }
    let prof = injectivity_profile(v, p, q, cap)?;
    let mut m = None;
    for (i, &ok) in prof.iter().enumerate().rev() {
        if ok {
            m = Some(i + 1);
        } else {
            break;
        }
    }
    m.ok_or_else(|| GapError::NotFound(format!("Γ_N not injective on p·M·q at N = {cap}")))
}

#[derive(Clone, Debug)]
pub struct RecursionReport {
    pub n: usize,
    pub trials: usize,
    /// Max relative residual of `Γ_N(X) = Σ_ν Γ_{N−1}(X v_ν*) ⊗ ψ_ν`.
    pub right_max: f64,
    /// Max relative residual of `Γ_N(X) = Σ_ν ψ_ν ⊗ Γ_{N−1}(v_ν* X)`.
    pub left_max: f64,
}

/// Checks both one-site recursions of `Γ` on seeded random `X`.
pub fn gamma_recursion_check(v: &KrausTuple, n: usize, trials: usize, seed: u64) -> Result<RecursionReport> {
    if n < 2 {
        return Err(GapError::Parameter("recursion needs N ≥ 2".into()));
    }
    let g_n = gamma_matrix(v, n)?;
    let g_m = gamma_matrix(v, n - 1)?;
    let (k, d) = (v.k(), v.n());
    let tail = g_m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut right_max, mut left_max) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let x = random_matrix(&mut rng, k, k);
        let full = &g_n * vec_of(&x);
        let scale = full.norm().max(1.0);
        let mut right = CVector::zeros(full.len());
        let mut left = CVector::zeros(full.len());
        for (nu, vn) in v.ops().iter().enumerate() {
            let r = &g_m * vec_of(&(&x * vn.adjoint()));
            let l = &g_m * vec_of(&(vn.adjoint() * &x));
            for mu in 0..tail {
                right[mu * d + nu] += r[mu];
                left[nu * tail + mu] += l[mu];
            }
        }
        right_max = right_max.max((&full - right).norm() / scale);
        left_max = left_max.max((&full - left).norm() / scale);
    }
    Ok(RecursionReport { n, trials, right_max, left_max })
}

#[derive(Clone, Debug)]
pub struct IntersectionRow {
    pub n: usize,
    pub dim_ground: usize,
    /// `None` when the intersection outgrew [`INTERSECTION_DIM_CAP`].
    pub dim_intersection: Option<usize>,
    pub distance: f64,
    pub holds: bool,
    /// `‖(1 − G_{N−1}⊗1) frame(𝒢_N)‖`.
    pub nesting_escape: f64,
}

#[derive(Clone, Debug)]
pub struct Condition4Data {
    pub l_b: usize,
    pub min_singular: f64,
    /// Max over `N` of the escape of `X⁻¹𝒦_{N+l_B}` from `𝒦_N`.
    pub max_escape: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct IntersectionReport {
    pub m: usize,
    pub rows: Vec<IntersectionRow>,
    pub recursion: RecursionReport,
    pub condition4: Option<Condition4Data>,
}

impl IntersectionReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Intersection spaces larger than this are abandoned; the property
/// already fails there since `𝒢_N` is much smaller.
pub const INTERSECTION_DIM_CAP: usize = 512;

/// Frames of `𝒟_N = ⋂_x τ_x(𝒢_m)` for `N = m..=n_max`, built by
/// intersecting `𝒟_{N−1} ⊗ C^n` with the last-window constraint. Entries
/// become `None` once the dimension exceeds [`INTERSECTION_DIM_CAP`].
pub fn intersection_frames(v: &KrausTuple, m: usize, n_max: usize) -> Result<Vec<Option<Subspace>>> {
    check_cap(v.n(), n_max, DENSE_VECTOR_CAP)?;
    let n = v.n();
    let g_m = ground_space(v, m)?;
    let proj = g_m.projector();
    let id_n = CMatrix::identity(n, n);
    let mut out = vec![Some(g_m.clone())];
    for big_n in m + 1..=n_max {
        let next = match out.last().expect("seeded") {
            Some(prev) if prev.dim() * n <= INTERSECTION_DIM_CAP => {
                let w = kron(prev.frame(), &id_n);
                if w.ncols() == 0 {
                    Some(Subspace::zero(w.nrows()))
                } else {
                    let r = &w - apply_local(&proj, &w, n, big_n, big_n - m);
                    let coeff = null_space(&r, INTERSECTION_TOL);
                    Some(Subspace::from_orthonormal(w * coeff, RANK_TOL))
                }
            }
            _ => None,
        };
        out.push(next);
    }
    Ok(out)
}

pub fn intersection_property(
    v: &KrausTuple,
    m: usize,
    n_max: usize,
    seed: u64,
    classa: Option<&ClassATuple>,
) -> Result<IntersectionReport> {
    if m == 0 || m > n_max {
        return Err(GapError::Parameter(format!("need 1 ≤ m ≤ N_max, got m = {m}, N_max = {n_max}")));
    }
    let n = v.n();
    let id_n = CMatrix::identity(n, n);
    let inter = intersection_frames(v, m, n_max)?;
    let mut rows = Vec::new();
    let mut prev = if m > 1 { Some(ground_space(v, m - 1)?) } else { None };
    for (i, d) in inter.iter().enumerate() {
        let big_n = m + i;
        let g = ground_space(v, big_n)?;
        let distance = match d {
            Some(d) => subspace_distance(&g, d)?,
            None => 1.0,
        };
        let nesting_escape = match &prev {
            Some(p) => Subspace::from_orthonormal(kron(p.frame(), &id_n), RANK_TOL).escape(g.frame()),
            None => 0.0,
        };
        rows.push(IntersectionRow {
            n: big_n,
            dim_ground: g.dim(),
            dim_intersection: d.as_ref().map(|d| d.dim()),
            distance,
            holds: distance <= SUBSPACE_TOL,
            nesting_escape,
        });
        prev = Some(g);
    }
    let recursion = gamma_recursion_check(v, n_max.max(2), 4, seed)?;
    let condition4 = match classa {
        Some(t) => Some(condition4_data(t, n_max)?),
        None => None,
    };
    Ok(IntersectionReport { m, rows, recursion, condition4 })
}

/// Checks `X = 1 ⊗ M^{l_B}` is invertible and `X⁻¹𝒦_{N+l_B} ⊆ 𝒦_N` for `N = l_B..=n_max`.
pub fn condition4_data(t: &ClassATuple, n_max: usize) -> Result<Condition4Data> {
    let l_b = compute_lb(t, LB_MAX, LB_PERSISTENCE)
        .ok_or_else(|| GapError::NotMember(format!("l_B not found up to {LB_MAX}")))?;
    let mpow = crate::linalg::mat_pow(&t.tetrad.m_matrix(), l_b as u32);
    let x = kron(&CMatrix::identity(t.n0, t.n0), &mpow);
    let min_singular = eigvals_hermitian(&(x.adjoint() * &x))?
        .first()
        .map(|v| v.max(0.0).sqrt())
        .unwrap_or(0.0);
    let xinv = inverse(&x)?;
    let k = t.k();
    let spans: Vec<Subspace> = MonomialSpans::new(&t.b).take(n_max.max(l_b) + l_b).collect();
    let mut max_escape = 0.0f64;
    for big_n in l_b..=n_max.max(l_b) {
        let big = &spans[big_n + l_b - 1];
        let small = &spans[big_n - 1];
        let moved = CMatrix::from_fn(k * k, big.dim(), |r, c| {
            let m = unvec(&big.frame().column(c).into_owned(), k, k);
            (&xinv * m).as_slice()[r]
        });
        let scale = op_norm(&moved).max(1e-300);
        max_escape = max_escape.max(small.escape(&moved) / scale);
    }
    Ok(Condition4Data { l_b, min_singular, max_escape, holds: min_singular > RANK_TOL && max_escape <= SUBSPACE_TOL })
}

/// Smallest `m ≤ m_max` whose intersection property holds for all
/// `N = m..=n_max`. This is the empirical interaction length.
pub fn empirical_interaction_length(v: &KrausTuple, m_max: usize, n_max: usize) -> Result<Option<usize>> {
    for m in 1..=m_max.min(n_max) {
        let inter = intersection_frames(v, m, n_max)?;
        let mut ok = true;
        for (i, d) in inter.iter().enumerate() {
            let Some(d) = d else {
                ok = false;
                break;
            };
            let g = ground_space(v, m + i)?;
            if subspace_distance(&g, d)? > SUBSPACE_TOL {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct OverlapReport {
    pub l: usize,
    pub n: usize,
    pub epsilon_numeric: Option<f64>,
    pub epsilon_analytic: f64,
    pub condition1_ok: bool,
}

impl OverlapReport {
    /// Numeric value when available, otherwise the analytic bound.
    pub fn epsilon(&self) -> f64 {
        self.epsilon_numeric.unwrap_or(self.epsilon_analytic)
    }
}

/// `2F·E(l−1)·(F²E(l−1) + 1)`; infinite for `l = 1`.
pub fn epsilon_analytic(l: usize, dc: &DecayConstants) -> f64 {
    if l < 2 {
        return f64::INFINITY;
    }
    let e = dc.e_at(l - 1);
    2.0 * dc.f * e * (dc.f * dc.f * e + 1.0)
}

/// `‖(1_{[0,N−l]} ⊗ G_l)(G_N ⊗ 1 − G_{N+1})‖`, dense.
pub fn epsilon_numeric(v: &KrausTuple, l: usize, big_n: usize, cap: usize) -> Result<f64> {
    let n = v.n();
    check_cap(n, big_n + 1, cap)?;
    let g_l = ground_space(v, l)?;
    let g_n = ground_space(v, big_n)?;
    let g_n1 = ground_space(v, big_n + 1)?;
    let w = kron(g_n.frame(), &CMatrix::identity(n, n));
    let f1 = g_n1.frame();
    let rest = &w - f1 * (f1.adjoint() * &w);
    if rest.ncols() == 0 || op_norm(&rest) < 1e-8 || g_l.dim() == 0 {
        return Ok(0.0);
    }
    let q = orthonormal_span(&rest, RANK_TOL);
    let u_adj = g_l.frame().adjoint();
    let win = n.pow(l as u32);
    let outer = q.frame().nrows() / win;
    let r = u_adj.nrows();
    let mut z = CMatrix::zeros(r * outer, q.dim());
    for j in 0..q.dim() {
        let col = q.frame().column(j);
        let block = nalgebra::DMatrixView::from_slice(col.as_slice(), win, outer);
        let red = &u_adj * block;
        z.column_mut(j).copy_from_slice(red.as_slice());
    }
    Ok(op_norm(&z))
}

pub fn epsilon_overlap(v: &KrausTuple, l: usize, big_n: usize, dc: &DecayConstants, cap: usize) -> Result<OverlapReport> {
    if l == 0 || big_n < 2 * l {
        return Err(GapError::Precondition(format!("need N ≥ 2l, got l = {l}, N = {big_n}")));
    }
    let analytic = epsilon_analytic(l, dc);
    let numeric = match epsilon_numeric(v, l, big_n, cap) {
        Ok(e) => Some(e),
        Err(GapError::CapExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let eps = numeric.unwrap_or(analytic);
    Ok(OverlapReport {
        l,
        n: big_n,
        epsilon_numeric: numeric,
        epsilon_analytic: analytic,
        condition1_ok: eps < 1.0 / (l as f64).sqrt(),
    })
}

#[derive(Clone, Debug)]
pub struct GramReport {
    pub n: usize,
    pub trials: usize,
    pub inner_violations: usize,
    pub norm_violations: usize,
    /// `None` when `N < L`, where the lower bound is not claimed.
    pub lower_violations: Option<usize>,
    pub min_slack: f64,
}

impl GramReport {
    pub fn violations(&self) -> usize {
        self.inner_violations + self.norm_violations + self.lower_violations.unwrap_or(0)
    }
}

fn random_corner(rng: &mut ChaCha8Rng, p: &CMatrix, q: &CMatrix) -> CMatrix {
    let k = p.nrows();
    p * random_matrix(rng, k, k) * q
}

pub fn gram_estimates(
    v: &KrausTuple,
    p: &CMatrix,
    q: &CMatrix,
    triple: &SpectralTripleII,
    dc: &DecayConstants,
    big_n: usize,
    trials: usize,
    seed: u64,
) -> Result<GramReport> {
    if big_n == 0 {
        return Err(GapError::Parameter("N must be positive".into()));
    }
    let g = gamma_matrix(v, big_n)?;
    let e = dc.e_at(big_n);
    let lower_const = (2.0 / (dc.a * dc.c)).sqrt();
    let check_lower = big_n >= dc.l;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inner_v, mut norm_v, mut lower_v) = (0, 0, 0);
    let mut min_slack = f64::INFINITY;
    const ABS: f64 = 1e-12;
    for _ in 0..trials {
        let x = random_corner(&mut rng, p, q);
        let y = random_corner(&mut rng, p, q);
        let gx = &g * vec_of(&x);
        let gy = &g * vec_of(&y);
        let xx = weighted_inner(triple, &x, &x).re.max(0.0);
        let yy = weighted_inner(triple, &y, &y).re.max(0.0);
        let lhs = (gx.dotc(&gy) - weighted_inner(triple, &x, &y)).norm();
        let slack = e * xx.sqrt() * yy.sqrt() - lhs;
        min_slack = min_slack.min(slack);
        if slack < -ABS * (1.0 + lhs) {
            inner_v += 1;
        }
        let gg = gx.norm_squared();
        let lo = gg - (1.0 - e) * xx;
        let hi = (1.0 + e) * xx - gg;
        min_slack = min_slack.min(lo).min(hi);
        if lo < -ABS * (1.0 + gg) || hi < -ABS * (1.0 + gg) {
            norm_v += 1;
        }
        if check_lower {
            let s = lower_const * gx.norm() - hs_norm(&x);
            min_slack = min_slack.min(s);
            if s < -ABS * (1.0 + hs_norm(&x)) {
                lower_v += 1;
            }
        }
    }
    if trials == 0 {
        min_slack = 0.0;
    }
    Ok(GramReport {
        n: big_n,
        trials,
        inner_violations: inner_v,
        norm_violations: norm_v,
        lower_violations: check_lower.then_some(lower_v),
        min_slack,
    })
}

/// Sum of `‖Γ_N(X)‖²` against `⟨X, X⟩_v`, exposed for diagnostics.
pub fn gamma_norm_ratio(v: &KrausTuple, triple: &SpectralTripleII, big_n: usize, x: &CMatrix) -> Result<f64> {
    let gx = gamma(v, big_n, x)?;
    let w = weighted_inner(triple, x, x).re;
    if w <= 0.0 {
        return Ok(if gx.norm() == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(gx.norm_squared() / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, unit};
    use crate::model::{build_aklt, build_kappa_example, build_product};

    fn e1() -> ClassATuple {
        build_kappa_example(1, 1, 1, 0.5, 2).unwrap()
    }

    #[test]
    fn gamma_matches_brute_force_on_e1() {
        let t = e1();
        let v = t.kraus();
        let x = unit(3, 1, 1);
        let got = gamma(&v, 3, &x).unwrap();
        for mu in 0..8usize {
            let digits = [(mu >> 2) & 1, (mu >> 1) & 1, mu & 1];
            let w = &v.ops()[digits[0]] * &v.ops()[digits[1]] * &v.ops()[digits[2]];
            let want = (&x * w.adjoint()).trace();
            assert!((got[mu] - want).norm() < 1e-14);
        }
        let g = gamma_matrix(&v, 3).unwrap();
        assert!((g * vec_of(&x) - got).norm() < 1e-14);
    }

    #[test]
    fn gamma_of_product_tuple() {
        let v = build_product().kraus();
        let x = CMatrix::from_element(1, 1, c(2.5));
        let g = gamma(&v, 4, &x).unwrap();
        assert!((g[0] - c(2.5)).norm() < 1e-15);
        assert!(g.iter().skip(1).all(|z| z.norm() == 0.0));
        let zero = gamma(&v, 4, &CMatrix::zeros(1, 1)).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn e1_frames() {
        let t = e1();
        let v = t.kraus();
        let f4 = gamma_frame(&v, 4, &t.p_hat_r(), &t.p_hat_l()).unwrap();
        assert_eq!(f4.space.dim(), 4);
        assert!(f4.bijective);
        assert!(f4.preimage_residual.unwrap() < 1e-10);
        let f1 = gamma_frame(&v, 1, &t.p_hat_r(), &t.p_hat_l()).unwrap();
        assert!(!f1.injective);
        assert_eq!(f1.space.dim(), 2);
    }

    #[test]
    fn thresholds() {
        let t = e1();
        assert_eq!(injectivity_threshold(&t.kraus(), &t.p_hat_r(), &t.p_hat_l(), 12).unwrap(), 2);
        let a = build_aklt();
        let id = CMatrix::identity(2, 2);
        assert_eq!(injectivity_threshold(&a.kraus(), &id, &id, 10).unwrap(), 2);
        let p = build_product();
        let one = CMatrix::identity(1, 1);
        assert_eq!(injectivity_threshold(&p.kraus(), &one, &one, 5).unwrap(), 1);
    }

    #[test]
    fn e1_intersection() {
        let t = e1();
        let rep = intersection_property(&t.kraus(), 4, 8, 1, Some(&t)).unwrap();
        assert!(rep.holds(), "{:?}", rep.rows);
        assert!(rep.rows.iter().all(|r| r.dim_ground == 4 && r.nesting_escape < 1e-9));
        assert!(rep.recursion.right_max < 1e-12 && rep.recursion.left_max < 1e-12);
        assert!(rep.condition4.unwrap().holds);
    }

    #[test]
    fn product_overlap_vanishes() {
        let p = build_product();
        let v = p.kraus();
        assert!(epsilon_numeric(&v, 2, 4, DENSE_VECTOR_CAP).unwrap() < 1e-14);
        let rep = intersection_property(&v, 1, 4, 0, None).unwrap();
        assert!(rep.holds());
    }
}
