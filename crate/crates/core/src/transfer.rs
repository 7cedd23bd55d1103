//! Transfer maps `T_v(X) = Σ v_μ X v_μ*`, their peripheral spectrum and
//! the decay constants built from it.
//!
//! Superoperators act on column-stacked vectorisations, so
//! `vec(T(X)) = (Σ conj(v_μ) ⊗ v_μ) vec(X)`.
//!
//! Uniform-norm quantities such as `‖T^N(1 − P)‖` are bounded above by
//! `√k · ‖·‖_{2→2}` of the matrix representation; every derived constant
//! is therefore an upper bound of its exact counterpart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GapError, Result};
use crate::linalg::{
    c, eigvals_general, null_vector, op_norm, random_matrix, random_vector, span_of_vectors,
    support_and_pinv, unvec, vec_of, CMatrix, CVector, C64, RANK_TOL,
};
use crate::model::MonomialSpans;

/// Eigenvalues within this distance of the unit circle count as peripheral.
pub const PERIPHERAL_TOL: f64 = 1e-8;
/// Margin added to the largest non-peripheral modulus.
pub const S_MARGIN: f64 = 1e-10;
pub const RESOLVENT_SAMPLES: usize = 64;
/// Projector residual accepted for `s(e) = p`, `s(ρ) = q`.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct KrausTuple {
    k: usize,
    v: Vec<CMatrix>,
}

impl KrausTuple {
    pub fn new(v: Vec<CMatrix>) -> Result<Self> {
        let k = v.first().map(|m| m.nrows()).ok_or_else(|| GapError::Shape("empty tuple".into()))?;
        if v.iter().any(|m| m.shape() != (k, k)) {
            return Err(GapError::Shape("Kraus operators of mixed shape".into()));
        }
        Ok(KrausTuple { k, v })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.v
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.k, self.k);
        for v in &self.v {
            out += v * x * v.adjoint();
        }
        out
    }

    /// `T*(X) = Σ v_μ* X v_μ`, the Hilbert–Schmidt adjoint.
    pub fn apply_adjoint(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.k, self.k);
        for v in &self.v {
            out += v.adjoint() * x * v;
        }
        out
    }

    pub fn apply_pow(&self, x: &CMatrix, n: usize) -> CMatrix {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply(&y);
        }
        y
    }

    /// `k²×k²` representation on column-stacked vectors.
    pub fn matrix(&self) -> CMatrix {
        let kk = self.k * self.k;
        let mut m = CMatrix::zeros(kk, kk);
        for v in &self.v {
            m += v.conjugate().kronecker(v);
        }
        m
    }

    /// Corner tuple `v_p = (p v_μ p)_μ`.
    pub fn corner(&self, p: &CMatrix) -> KrausTuple {
        KrausTuple { k: self.k, v: self.v.iter().map(|v| p * v * p).collect() }
    }

    /// `Σ_μ ‖v_μ‖²`.
    pub fn sum_sq_norms(&self) -> f64 {
        self.v.iter().map(|v| op_norm(v).powi(2)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TransferRep {
    pub matrix: CMatrix,
    pub spectral_radius: f64,
    /// All eigenvalues, sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    pub peripheral: Vec<C64>,
}

pub fn transfer_matrix_rep(v: &KrausTuple) -> Result<TransferRep> {
    let matrix = v.matrix();
    let mut eigenvalues = eigvals_general(&matrix)?;
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let spectral_radius = eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0);
    let peripheral = eigenvalues
        .iter()
        .cloned()
        .filter(|z| z.norm() >= spectral_radius - PERIPHERAL_TOL)
        .collect();
    Ok(TransferRep { matrix, spectral_radius, eigenvalues, peripheral })
}

/// Largest eigenvalue modulus of `T` strictly inside the unit circle.
pub fn subleading_modulus(v: &KrausTuple) -> Result<f64> {
    let rep = transfer_matrix_rep(v)?;
    Ok(rep
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .find(|&m| m < rep.spectral_radius - PERIPHERAL_TOL)
        .unwrap_or(0.0))
}

/// Largest singular value, by power iteration on `AᴴA` for big matrices.
pub fn op_norm_fast(a: &CMatrix) -> f64 {
    if a.nrows().min(a.ncols()) <= 200 {
        return op_norm(a);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = random_vector(&mut rng, a.ncols());
    x /= c(x.norm());
    let mut est = 0.0;
    for _ in 0..1000 {
        let y = a.adjoint() * (a * &x);
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        let next = ny.sqrt();
        x = y / c(ny);
        if (next - est).abs() <= 1e-13 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Fixed points and decay data of a map with a simple peripheral eigenvalue 1.
#[derive(Clone, Debug)]
pub struct SpectralTripleII {
    pub k: usize,
    /// Upper bound on the non-peripheral spectral radius.
    pub s: f64,
    /// Radius used for the resolvent contour, `(1+s)/2`.
    pub s_prime: f64,
    pub e: CMatrix,
    pub rho: CMatrix,
    /// Upper bound of `sup_{|z|=s'} ‖(z−T)^{−1}‖` in the uniform norm.
    pub resolvent_bound: f64,
    pub support_e: CMatrix,
    pub support_rho: CMatrix,
    /// `‖s(e) − p‖`, `‖s(ρ) − q‖`.
    pub support_residuals: (f64, f64),
    /// Residual of the rank-one spectral projector identities.
    pub projector_residual: f64,
    /// Violations of the contour bound found on built-in random probes.
    pub item6_violations: usize,
}

impl SpectralTripleII {
    /// `φ(X) = Tr(ρX)`.
    pub fn phi(&self, x: &CMatrix) -> C64 {
        (&self.rho * x).trace()
    }

    /// `P(X) = φ(X) e`.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        &self.e * self.phi(x)
    }

    /// Superoperator matrix of `P`.
    pub fn projector_matrix(&self) -> CMatrix {
        vec_of(&self.e) * vec_of(&self.rho).adjoint()
    }
}

fn hermitian_psd_normalised(m: &CMatrix) -> CMatrix {
    // Fix the global phase so the trace is real and positive.
    let tr = m.trace();
    let phase = if tr.norm() > 1e-12 {
        tr / c(tr.norm())
    } else {
        let (mut best, mut arg) = (0.0, c(1.0));
        for i in 0..m.nrows() {
            if m[(i, i)].norm() > best {
                best = m[(i, i)].norm();
                arg = m[(i, i)] / c(best);
            }
        }
        arg
    };
    let m = m / phase;
    (&m + m.adjoint()) * c(0.5)
}

/// Computes `(s, e, ρ, resolvent bound)` and checks the supports against `(p, q)`.
pub fn fixed_point_triple(v: &KrausTuple, p: &CMatrix, q: &CMatrix) -> Result<SpectralTripleII> {
    let k = v.k();
    let rep = transfer_matrix_rep(v)?;
    let near_one: Vec<&C64> = rep.eigenvalues.iter().filter(|z| z.norm() >= 1.0 - PERIPHERAL_TOL).collect();
    if near_one.len() != 1 || (near_one[0] - c(1.0)).norm() > PERIPHERAL_TOL {
        return Err(GapError::NotSpectralII(format!(
            "{} eigenvalue(s) on the unit circle, spectral radius {:.12}",
            near_one.len(),
            rep.spectral_radius
        )));
    }
    let kk = k * k;
    let id = CMatrix::identity(kk, kk);
    let (ev, _) = null_vector(&(&rep.matrix - &id));
    let (rv, _) = null_vector(&(rep.matrix.adjoint() - &id));
    let mut e = hermitian_psd_normalised(&unvec(&ev, k, k));
    let mut rho = hermitian_psd_normalised(&unvec(&rv, k, k));
    rho /= rho.trace();
    let norm = (&rho * &e).trace();
    if norm.norm() < 1e-12 {
        return Err(GapError::NotSpectralII("φ(e) = 0, peripheral eigenvalue is defective".into()));
    }
    e /= norm;

    let proj = vec_of(&e) * vec_of(&rho).adjoint();
    let projector_residual = (&rep.matrix * &proj - &proj)
        .norm()
        .max((&proj * &rep.matrix - &proj).norm())
        .max((&proj * &proj - &proj).norm())
        .max((v.apply(&e) - &e).norm())
        .max((v.apply_adjoint(&rho) - &rho).norm());
    if projector_residual > PERIPHERAL_TOL {
        return Err(GapError::NotSpectralII(format!(
            "rank-one projector residual {:.3e}",
            projector_residual
        )));
    }

    let pe = support_and_pinv(&e, RANK_TOL)?;
    let pr = support_and_pinv(&rho, RANK_TOL)?;
    let support_residuals = ((&pe.support - p).norm(), (&pr.support - q).norm());
    if support_residuals.0 > SUPPORT_TOL || support_residuals.1 > SUPPORT_TOL {
        return Err(GapError::NotSpectralII(format!(
            "supports differ from (p, q): residuals {:.3e}, {:.3e}",
            support_residuals.0, support_residuals.1
        )));
    }

    let second = rep.eigenvalues.iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max);
    let s = (second + S_MARGIN).min(1.0 - 1e-12);
    let s_prime = 0.5 * (1.0 + s);
    let mut worst: f64 = 0.0;
    for j in 0..RESOLVENT_SAMPLES {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / RESOLVENT_SAMPLES as f64;
        let z = C64::from_polar(s_prime, theta);
        let shifted = &id * z - &rep.matrix;
        let inv = shifted
            .try_inverse()
            .ok_or_else(|| GapError::Numerical("resolvent contour meets the spectrum".into()))?;
        worst = worst.max(op_norm_fast(&inv));
    }
    let resolvent_bound = worst * (k as f64).sqrt();

    let mut triple = SpectralTripleII {
        k,
        s,
        s_prime,
        e,
        rho,
        resolvent_bound,
        support_e: pe.support,
        support_rho: pr.support,
        support_residuals,
        projector_residual,
        item6_violations: 0,
    };
    triple.item6_violations = item6_check(v, &triple, 10, 40, 0).violations;
    Ok(triple)
}

#[derive(Clone, Debug)]
pub struct Item6Report {
    pub samples: usize,
    pub n_max: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen.
    pub min_slack: f64,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
}

/// Checks `‖T^N(A) − φ(A)e‖ ≤ s'^{N+1}·R·‖A‖` on seeded random `A`.
pub fn item6_check(v: &KrausTuple, t: &SpectralTripleII, samples: usize, n_max: usize, seed: u64) -> Item6Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..samples {
        let a = random_matrix(&mut rng, v.k(), v.k());
        let na = op_norm(&a);
        let limit = t.project(&a);
        let mut x = a.clone();
        for n in 1..=n_max {
            x = v.apply(&x);
            let lhs = op_norm(&(&x - &limit));
            let rhs = t.s_prime.powi(n as i32 + 1) * t.resolvent_bound * na;
            if lhs > rhs {
                violations += 1;
            }
            min_slack = min_slack.min(rhs - lhs);
            if rhs > 0.0 {
                max_ratio = max_ratio.max(lhs / rhs);
            }
        }
    }
    Item6Report { samples, n_max, violations, min_slack, max_ratio }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ItemStatus {
    Pass,
    /// Universal statement checked on a finite sample only.
    PassSampled,
    Fail,
}

impl ItemStatus {
    pub fn ok(&self) -> bool {
        !matches!(self, ItemStatus::Fail)
    }

    pub fn label(&self) -> &'static str {
        match self {
            ItemStatus::Pass => "pass",
            ItemStatus::PassSampled => "pass (sampled)",
            ItemStatus::Fail => "fail",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionItem {
    pub item: &'static str,
    pub status: ItemStatus,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Condition2Report {
    pub items: Vec<ConditionItem>,
}

impl Condition2Report {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.status.ok())
    }

    pub fn status(&self, item: &str) -> Option<&ItemStatus> {
        self.items.iter().find(|i| i.item == item).map(|i| &i.status)
    }
}

const SPAN_CAP: usize = 64;

fn is_projection(p: &CMatrix) -> bool {
    (p * p - p).norm() < 1e-10 && (p - p.adjoint()).norm() < 1e-10
}

/// Orthonormal basis vectors of `Ran p`.
fn range_basis(p: &CMatrix) -> Vec<CVector> {
    let k = p.nrows();
    let s = crate::linalg::orthonormal_span(p, RANK_TOL);
    (0..s.dim()).map(|j| CVector::from_fn(k, |i, _| s.frame()[(i, j)])).collect()
}

/// Checks whether `{K η : K ∈ span}` fills `Ran target` for some degree.
fn spans_reach(v: &[CMatrix], eta: &CVector, target_rank: usize, adjoint: bool) -> Option<usize> {
    let k = eta.len();
    for (idx, span) in MonomialSpans::new(v).take(SPAN_CAP).enumerate() {
        let vecs: Vec<CVector> = (0..span.dim())
            .map(|j| {
                let m = unvec(&span.frame().column(j).into_owned(), k, k);
                if adjoint {
                    m.adjoint() * eta
                } else {
                    m * eta
                }
            })
            .collect();
        let s = span_of_vectors(&vecs, k, RANK_TOL).ok()?;
        if s.dim() == target_rank {
            return Some(idx + 1);
        }
    }
    None
}

/// Per-item check of the eight transfer and support conditions for `(v, p, q)`.
pub fn check_condition2(v: &KrausTuple, p: &CMatrix, q: &CMatrix, seed: u64) -> Condition2Report {
    let k = v.k();
    let id = CMatrix::identity(k, k);
    let mut items = Vec::new();
    let pq = p * q;
    let proj_ok = is_projection(p) && is_projection(q);
    let commute = (p * q - q * p).norm();
    let item1 = proj_ok && commute < 1e-10 && pq.norm() > 1e-10;
    items.push(ConditionItem {
        item: "(i)",
        status: if item1 { ItemStatus::Pass } else { ItemStatus::Fail },
        detail: format!("‖[p,q]‖ = {:.3e}, ‖pq‖ = {:.3e}", commute, pq.norm()),
    });

    let r2 = v.ops().iter().map(|m| (m * p - p * m * p).norm()).fold(0.0, f64::max);
    items.push(ConditionItem {
        item: "(ii)",
        status: if r2 < 1e-10 { ItemStatus::Pass } else { ItemStatus::Fail },
        detail: format!("max ‖v p − p v p‖ = {:.3e}", r2),
    });
    let r3 = v.ops().iter().map(|m| (q * m - q * m * q).norm()).fold(0.0, f64::max);
    items.push(ConditionItem {
        item: "(iii)",
        status: if r3 < 1e-10 { ItemStatus::Pass } else { ItemStatus::Fail },
        detail: format!("max ‖q v − q v q‖ = {:.3e}", r3),
    });

    let item4 = if item1 {
        match fixed_point_triple(&v.corner(&pq), &pq, &pq) {
            Ok(t) => ConditionItem {
                item: "(iv)",
                status: ItemStatus::Pass,
                detail: format!("s = {:.6}, supports match pq", t.s),
            },
            Err(err) => ConditionItem { item: "(iv)", status: ItemStatus::Fail, detail: err.to_string() },
        }
    } else {
        ConditionItem { item: "(iv)", status: ItemStatus::Fail, detail: "requires (i)".into() }
    };
    items.push(item4);

    let radius = |proj: &CMatrix| transfer_matrix_rep(&v.corner(proj)).map(|r| r.spectral_radius);
    for (label, proj) in [("(v)", &id - q), ("(vi)", &id - p)] {
        let item = match radius(&proj) {
            Ok(r) => ConditionItem {
                item: label,
                status: if r < 1.0 - PERIPHERAL_TOL { ItemStatus::Pass } else { ItemStatus::Fail },
                detail: format!("spectral radius {:.6}", r),
            },
            Err(err) => ConditionItem { item: label, status: ItemStatus::Fail, detail: err.to_string() },
        };
        items.push(item);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = |proj: &CMatrix| -> Vec<CVector> {
        let mut out: Vec<CVector> =
            range_basis(proj).into_iter().filter(|x| (&pq * x).norm() > 1e-10).collect();
        for _ in 0..10 {
            out.push(proj * random_vector(&mut rng, k));
        }
        out
    };
    let vq = v.corner(q);
    let eta = samples(q);
    let rank_q = range_basis(q).len();
    let worst7 = eta.iter().map(|x| spans_reach(vq.ops(), x, rank_q, true)).collect::<Vec<_>>();
    items.push(sampled_item("(vii)", &worst7, eta.len()));
    let vp = v.corner(p);
    let xi = samples(p);
    let rank_p = range_basis(p).len();
    let worst8 = xi.iter().map(|x| spans_reach(vp.ops(), x, rank_p, false)).collect::<Vec<_>>();
    items.push(sampled_item("(viii)", &worst8, xi.len()));
    Condition2Report { items }
}

fn sampled_item(label: &'static str, reach: &[Option<usize>], count: usize) -> ConditionItem {
    if reach.iter().all(|r| r.is_some()) {
        let lmax = reach.iter().flatten().max().cloned().unwrap_or(0);
        ConditionItem {
            item: label,
            status: ItemStatus::PassSampled,
            detail: format!("{} vectors, all reached by degree {}", count, lmax),
        }
    } else {
        let misses = reach.iter().filter(|r| r.is_none()).count();
        ConditionItem {
            item: label,
            status: ItemStatus::Fail,
            detail: format!("{} of {} vectors never span within degree {}", misses, count, SPAN_CAP),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayConstants {
    pub a: f64,
    pub c: f64,
    pub x: CMatrix,
    pub y: CMatrix,
    /// Upper bounds of `‖T^N(1−P)‖` for `N = 1..=N_max` (index `N−1`).
    pub t_norms: Vec<f64>,
    /// `Ẽ(N) = k²‖T^N(1−P)‖`.
    pub e_tilde: Vec<f64>,
    /// `E(N) = Ẽ(N)/(ac)`.
    pub e_profile: Vec<f64>,
    pub f: f64,
    pub l: usize,
}

impl DecayConstants {
    /// `E(N)`; zero for `N = 0` is never used. Beyond the table the
    /// last value is reused, which only over-estimates.
    pub fn e_at(&self, n: usize) -> f64 {
        let i = n.max(1) - 1;
        self.e_profile.get(i).cloned().unwrap_or(*self.e_profile.last().unwrap_or(&0.0))
    }

    pub fn e_tilde_at(&self, n: usize) -> f64 {
        let i = n.max(1) - 1;
        self.e_tilde.get(i).cloned().unwrap_or(*self.e_tilde.last().unwrap_or(&0.0))
    }

    pub fn n_max(&self) -> usize {
        self.e_profile.len()
    }
}

pub fn decay_constants(v: &KrausTuple, t: &SpectralTripleII, n_max: usize) -> Result<DecayConstants> {
    if n_max == 0 {
        return Err(GapError::Parameter("N_max must be positive".into()));
    }
    let k = v.k();
    let pe = support_and_pinv(&t.e, RANK_TOL)?;
    let pr = support_and_pinv(&t.rho, RANK_TOL)?;
    let x = pe.pinv;
    let y = pr.pinv;
    let a = 1.0 / op_norm(&x);
    let cc = 1.0 / op_norm(&y);
    let m = v.matrix();
    let kk = k * k;
    let rest = CMatrix::identity(kk, kk) - t.projector_matrix();
    let sqrt_k = (k as f64).sqrt();
    let mut t_norms = Vec::with_capacity(n_max);
    let mut cur = rest.clone();
    for _ in 0..n_max {
        cur = &m * &cur;
        t_norms.push(sqrt_k * op_norm_fast(&cur));
    }
    let k2 = (k * k) as f64;
    let e_tilde: Vec<f64> = t_norms.iter().map(|x| k2 * x).collect();
    let e_profile: Vec<f64> = e_tilde.iter().map(|x| x / (a * cc)).collect();
    let f = t_norms.iter().cloned().fold(0.0, f64::max) + op_norm(&t.e);
    // suffix maxima
    let mut suffix = vec![0.0f64; n_max + 1];
    for i in (0..n_max).rev() {
        suffix[i] = suffix[i + 1].max(e_profile[i]);
    }
    let l = (0..n_max).find(|&i| suffix[i] < 0.5).map(|i| i + 1).ok_or(GapError::LNotFound(n_max))?;
    Ok(DecayConstants { a, c: cc, x, y, t_norms, e_tilde, e_profile, f, l })
}

/// `⟨X, Y⟩_v = φ(X* e Y)`.
pub fn weighted_inner(t: &SpectralTripleII, x: &CMatrix, y: &CMatrix) -> C64 {
    (&t.rho * x.adjoint() * &t.e * y).trace()
}

#[derive(Clone, Debug)]
pub struct BoundStat {
    pub name: &'static str,
    pub checks: usize,
    pub violations: usize,
    /// Smallest `right − left` (or `−residual` for identities), normalised by scale.
    pub min_slack: f64,
}

#[derive(Clone, Debug)]
pub struct BasicCpReport {
    pub n: usize,
    pub trials: usize,
    pub items: Vec<BoundStat>,
}

impl BasicCpReport {
    pub fn all_hold(&self) -> bool {
        self.items.iter().all(|i| i.violations == 0)
    }
}

const SLACK_TOL: f64 = -1e-9;
const SUP_RANGE: usize = 200;

struct Slack {
    stat: BoundStat,
}

impl Slack {
    fn new(name: &'static str) -> Self {
        Slack { stat: BoundStat { name, checks: 0, violations: 0, min_slack: f64::INFINITY } }
    }

    fn record(&mut self, slack: f64) {
        self.stat.checks += 1;
        if slack < SLACK_TOL {
            self.stat.violations += 1;
        }
        self.stat.min_slack = self.stat.min_slack.min(slack);
    }
}

/// Evaluates both sides of the four corner inequalities for `v` with
/// `v_μ p = p v_μ p`, on `trials` seeded random `(A, η)`.
pub fn basiccp_bounds_check(v: &KrausTuple, p: &CMatrix, n: usize, trials: usize, seed: u64) -> Result<BasicCpReport> {
    let k = v.k();
    let pre = v.ops().iter().map(|m| (m * p - p * m * p).norm()).fold(0.0, f64::max);
    if pre > 1e-10 {
        return Err(GapError::Precondition(format!("v p ≠ p v p (residual {:.3e})", pre)));
    }
    if n == 0 {
        return Err(GapError::Parameter("N must be positive".into()));
    }
    let id = CMatrix::identity(k, k);
    let pbar = &id - p;
    let vp = v.corner(p);
    let vpb = v.corner(&pbar);
    let sum_v = v.sum_sq_norms();

    // T_p^m(1), T_pbar^m(1) for m = 0..=max(N, SUP_RANGE).
    let range = n.max(SUP_RANGE);
    let mut tp_one = vec![id.clone()];
    let mut tpb_one = vec![id.clone()];
    let mut t_one = vec![id.clone()];
    let mut tpb_pbar = vec![pbar.clone()];
    for m in 1..=range {
        tp_one.push(vp.apply(&tp_one[m - 1]));
        tpb_one.push(vpb.apply(&tpb_one[m - 1]));
        t_one.push(v.apply(&t_one[m - 1]));
        tpb_pbar.push(vpb.apply(&tpb_pbar[m - 1]));
    }
    let sup_p = (1..=range).map(|m| op_norm(&tp_one[m])).fold(0.0, f64::max);
    let sup_pb = (1..=range).map(|m| op_norm(&tpb_one[m])).fold(0.0, f64::max);
    let s_sum = |mm: usize| -> f64 {
        (1..=mm)
            .map(|m| tpb_one[mm - m].trace().re.max(0.0).sqrt() * op_norm(&tp_one[m - 1]).sqrt())
            .sum()
    };

    let words: Option<Vec<CMatrix>> = if (v.n() as f64).powi(n as i32) <= 4096.0 {
        let mut w = vec![id.clone()];
        for _ in 0..n {
            w = w.iter().flat_map(|x| v.ops().iter().map(move |m| x * m)).collect();
        }
        Some(w)
    } else {
        None
    };

    let mut it1 = Slack::new("1: corner identities");
    let mut it2 = Slack::new("2: off-corner weight bound");
    let mut it3 = Slack::new("3: T^N(A) − pT^N(A)p bound");
    let mut it4 = Slack::new("4: sup ‖T^M‖ bound");

    // Word-level identities do not depend on the random draw.
    match &words {
        Some(ws) => {
            for w in ws {
                let wa = w.adjoint();
                it1.record(-(p * &wa * &pbar).norm());
                it1.record(-(&pbar * &wa * &pbar - &wa * &pbar).norm());
            }
        }
        None => {
            for m in v.ops() {
                let ma = m.adjoint();
                it1.record(-(p * &ma * &pbar).norm());
                it1.record(-(&pbar * &ma * &pbar - &ma * &pbar).norm());
            }
        }
    }

    let tn_pbar = v.apply_pow(&pbar, n);
    let rhs2_scalar = |eta: &CVector| -> f64 {
        let s: f64 = (1..=n)
            .map(|m| {
                let tr = tpb_one[n - m].trace().re.max(0.0).sqrt();
                let q = (eta.adjoint() * &tp_one[m - 1] * eta)[(0, 0)].re.max(0.0).sqrt();
                tr * q
            })
            .sum();
        s * s * sum_v
    };
    let s_n = s_sum(n);
    let tpb_n_norm = op_norm(&tpb_one[n]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a = random_matrix(&mut rng, k, k);
        let eta = random_vector(&mut rng, k);
        let na = op_norm(&a);
        let scale = na.max(1.0);

        let tn_a = v.apply_pow(&a, n);
        let lhs_b = &pbar * &tn_a * &pbar;
        let rhs_b = vpb.apply_pow(&a, n);
        it1.record(-(lhs_b - rhs_b).norm() / scale);
        let lhs_c = v.apply_pow(&(p * &a * p), n);
        let rhs_c = vp.apply_pow(&a, n);
        it1.record(-(lhs_c - rhs_c).norm() / scale);

        let peta = p * &eta;
        let lhs2 = (peta.adjoint() * &tn_pbar * &peta)[(0, 0)].re;
        if let Some(ws) = &words {
            // direct sum over words as a second evaluation
            let direct: f64 = ws.iter().map(|w| (&pbar * w.adjoint() * &peta).norm_squared()).sum();
            it1.record(-(direct - lhs2).abs() / direct.max(1.0));
        }
        let rhs2 = rhs2_scalar(&eta);
        it2.record((rhs2 - lhs2) / rhs2.max(1.0));

        let lhs3 = op_norm(&(&tn_a - p * &tn_a * p));
        let rhs3 = 2.0 * na * tpb_n_norm.sqrt() * (sup_p.sqrt() + sup_pb.sqrt() + s_n * sum_v.sqrt());
        it3.record((rhs3 - lhs3) / rhs3.max(1.0));
    }

    let lhs4 = (1..=range).map(|m| op_norm(&t_one[m])).fold(0.0, f64::max);
    let cross = (1..=range)
        .map(|m| s_sum(m) * sum_v.sqrt() * op_norm(&tpb_pbar[m]).sqrt())
        .fold(0.0, f64::max);
    let square = (1..=range).map(|m| s_sum(m).powi(2) * sum_v).fold(0.0, f64::max);
    let rhs4 = sup_p + sup_pb + 2.0 * cross + square;
    it4.record((rhs4 - lhs4) / rhs4.max(1.0));

    Ok(BasicCpReport { n, trials, items: vec![it1.stat, it2.stat, it3.stat, it4.stat] })
}
