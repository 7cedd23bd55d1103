//! ClassA model tuples: the tetrad `(λ, 𝔻, 𝔾, Y)`, the algebra `𝒟`,
//! membership of `𝔹` in `M_{n0} ⊗ 𝒟·M`, and span growth `l_𝔹`.
//!
//! Site-internal indices run over `−k_R..=k_L`; index `i` sits at matrix
//! position `i + k_R`. Tensor order is `M_{n0} ⊗ M_{k_R+k_L+1}`.

use std::collections::BTreeSet;

use crate::error::{GapError, Result};
use crate::linalg::{
    c, diag, inverse, kron, mat_pow, span_of_matrices, subspace_distance, unit,
    vec_of, CMatrix, Subspace, C64, ONE, RANK_TOL, ZERO,
};
use crate::transfer::{transfer_matrix_rep, KrausTuple};

/// Tolerance under which two spans are considered equal.
pub const SPAN_EQ_TOL: f64 = 1e-9;
/// Residual bound for the tetrad equations.
pub const TETRAD_TOL: f64 = 1e-10;
/// Relative residual bound for `B_μ ∈ M_{n0} ⊗ 𝒟·M`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
pub const LB_MAX: usize = 64;
pub const LB_PERSISTENCE: usize = 3;
const L_CHECK_CAP: usize = 64;

/// The weight vector `λ = (λ_{−k_R}, …, λ_{k_L})`.
#[derive(Clone, Debug)]
pub struct WoVector {
    pub k_r: usize,
    pub k_l: usize,
    pub lambda: Vec<C64>,
}

impl WoVector {
    pub fn dim(&self) -> usize {
        self.k_r + self.k_l + 1
    }

    /// `λ_i` for `i ∈ −k_R..=k_L`.
    pub fn at(&self, i: isize) -> C64 {
        self.lambda[(i + self.k_r as isize) as usize]
    }

    pub fn matrix(&self) -> CMatrix {
        diag(&self.lambda)
    }

    /// Violations of the ordering chain, as human-readable reasons.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lambda.len() != self.dim() {
            out.push(format!("Wo: expected {} weights, got {}", self.dim(), self.lambda.len()));
            return out;
        }
        if (self.at(0) - ONE).norm() > 1e-14 {
            out.push("Wo: λ_0 ≠ 1".to_string());
        }
        let mut chain = |side: &str, idx: Vec<isize>| {
            // idx runs from the outermost weight inward.
            for w in idx.windows(2) {
                if self.at(w[0]).norm() > self.at(w[1]).norm() * (1.0 + 1e-14) {
                    out.push(format!("Wo: |λ_{}| > |λ_{}| ({} side)", w[0], w[1], side));
                }
            }
            if let Some(&outer) = idx.first() {
                if self.at(outer).norm() == 0.0 {
                    out.push(format!("Wo: λ_{} = 0", outer));
                }
            }
            if let Some(&inner) = idx.last() {
                if self.at(inner).norm() >= 1.0 {
                    out.push(format!("Wo: |λ_{}| ≥ 1", inner));
                }
            }
        };
        chain("right", (-(self.k_r as isize)..=-1).collect());
        chain("left", (1..=self.k_l as isize).rev().collect());
        out
    }
}

/// The tuples `𝔻 = (D_a)` and `𝔾 = (G_b)`.
#[derive(Clone, Debug)]
pub struct BoundaryTuples {
    pub d: Vec<CMatrix>,
    pub g: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct Tetrad {
    pub wo: WoVector,
    pub boundary: BoundaryTuples,
    pub y: CMatrix,
}

impl Tetrad {
    pub fn k_r(&self) -> usize {
        self.wo.k_r
    }
    pub fn k_l(&self) -> usize {
        self.wo.k_l
    }
    /// `k_R + k_L + 1`.
    pub fn dim(&self) -> usize {
        self.wo.dim()
    }
    pub fn pos(&self, i: isize) -> usize {
        (i + self.k_r() as isize) as usize
    }

    /// `M = Λ_λ (1 + Y)`.
    pub fn m_matrix(&self) -> CMatrix {
        let id = CMatrix::identity(self.dim(), self.dim());
        self.wo.matrix() * (id + &self.y)
    }

    /// `I_R`: embeds a `(k_R+1)`-matrix on indices `−k_R..=0`.
    pub fn embed_r(&self, d: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        out.view_mut((0, 0), (self.k_r() + 1, self.k_r() + 1)).copy_from(d);
        out
    }

    /// `I_L`: embeds a `(k_L+1)`-matrix on indices `0..=k_L`.
    pub fn embed_l(&self, g: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        let o = self.k_r();
        out.view_mut((o, o), (self.k_l() + 1, self.k_l() + 1)).copy_from(g);
        out
    }

    /// `E_{ij}` in the `(k_R, k_L)` indexing.
    pub fn e(&self, i: isize, j: isize) -> CMatrix {
        unit(self.dim(), self.pos(i), self.pos(j))
    }

    pub fn p_r(&self) -> CMatrix {
        let mut p = CMatrix::zeros(self.dim(), self.dim());
        for i in -(self.k_r() as isize)..=0 {
            p[(self.pos(i), self.pos(i))] = ONE;
        }
        p
    }

    pub fn p_l(&self) -> CMatrix {
        let mut p = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..=self.k_l() as isize {
            p[(self.pos(i), self.pos(i))] = ONE;
        }
        p
    }

    /// Basis `{1, I_R(D_a), I_L(G_b), E_{−a,b}}` of the algebra `𝒟`.
    pub fn d_algebra_basis(&self) -> Vec<CMatrix> {
        let mut out = vec![CMatrix::identity(self.dim(), self.dim())];
        out.extend(self.boundary.d.iter().map(|d| self.embed_r(d)));
        out.extend(self.boundary.g.iter().map(|g| self.embed_l(g)));
        for a in 1..=self.k_r() as isize {
            for b in 1..=self.k_l() as isize {
                out.push(self.e(-a, b));
            }
        }
        out
    }

    /// `L_check = (k_R+k_L+1)·(nil(Y)+1)·#{|λ_i/λ_j|}`, capped at 64.
    pub fn l_check(&self) -> usize {
        let k = self.dim();
        let mut nil = 1;
        let mut yp = self.y.clone();
        while yp.norm() > 1e-14 && nil <= k {
            yp = &yp * &self.y;
            nil += 1;
        }
        let mut ratios = BTreeSet::new();
        for a in &self.wo.lambda {
            for b in &self.wo.lambda {
                if b.norm() > 0.0 {
                    // Bucket to 1e-10 relative so rounding does not split classes.
                    let r = a.norm() / b.norm();
                    ratios.insert((r.ln() * 1e10).round() as i64);
                }
            }
        }
        (k * (nil + 1) * ratios.len().max(1)).min(L_CHECK_CAP)
    }

    fn shape_errors(&self) -> Option<String> {
        let (kr, kl, k) = (self.k_r(), self.k_l(), self.dim());
        if self.wo.lambda.len() != k {
            return Some(format!("lambda has {} entries, expected {}", self.wo.lambda.len(), k));
        }
        if self.boundary.d.len() != kr {
            return Some(format!("D has {} matrices, expected {}", self.boundary.d.len(), kr));
        }
        if self.boundary.g.len() != kl {
            return Some(format!("G has {} matrices, expected {}", self.boundary.g.len(), kl));
        }
        if let Some(d) = self.boundary.d.iter().find(|d| d.shape() != (kr + 1, kr + 1)) {
            return Some(format!("D matrix of shape {:?}, expected {}x{}", d.shape(), kr + 1, kr + 1));
        }
        if let Some(g) = self.boundary.g.iter().find(|g| g.shape() != (kl + 1, kl + 1)) {
            return Some(format!("G matrix of shape {:?}, expected {}x{}", g.shape(), kl + 1, kl + 1));
        }
        if self.y.shape() != (k, k) {
            return Some(format!("Y of shape {:?}, expected {}x{}", self.y.shape(), k, k));
        }
        None
    }
}

/// One named check with its residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn residual(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check { name: name.into(), residual, tol, pass: residual.is_finite() && residual < tol }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Check { name: name.into(), residual: if pass { 0.0 } else { 1.0 }, tol: 0.5, pass }
    }
}

#[derive(Clone, Debug)]
pub struct TetradReport {
    pub checks: Vec<Check>,
    /// Failure reasons, e.g. `"Wo: λ_0 ≠ 1"`.
    pub reasons: Vec<String>,
    pub l_check: usize,
    pub accepted: bool,
}

fn rel_residual(lhs: &CMatrix, rhs: &CMatrix) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0)
}

fn strictly_upper_residual(m: &CMatrix) -> f64 {
    let mut r = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i.min(m.ncols().saturating_sub(1)) {
            r = r.max(m[(i, j)].norm());
        }
    }
    r
}

/// Residual of `x` against `span`, relative to `‖x‖`.
fn span_residual(span: &Subspace, x: &CMatrix) -> f64 {
    let nx = x.norm();
    if nx == 0.0 {
        0.0
    } else {
        span.residual(&vec_of(x)) / nx
    }
}

/// Checks every condition defining the tetrad set.
pub fn validate_tetrad(t: &Tetrad) -> Result<TetradReport> {
    if let Some(msg) = t.shape_errors() {
        return Err(GapError::Shape(msg));
    }
    let mut checks = Vec::new();
    let mut reasons = t.wo.violations();
    checks.push(Check::flag("Wo ordering", reasons.is_empty()));
    let l_check = t.l_check();
    if reasons.iter().any(|r| r.contains("λ_0") || r.contains("= 0")) {
        return Ok(TetradReport { checks, reasons, l_check, accepted: false });
    }

    let (kr, kl, k) = (t.k_r(), t.k_l(), t.dim());
    let lam = t.wo.matrix();

    // C^R(k_R): strictly upper triangular, D_a E_00 = E_{-a,0}, subalgebra.
    let mut cr = 0.0f64;
    let e00_r = unit(kr + 1, kr, kr);
    for (a, d) in t.boundary.d.iter().enumerate() {
        let a = a + 1;
        cr = cr.max(strictly_upper_residual(d));
        cr = cr.max((d * &e00_r - unit(kr + 1, kr - a, kr)).norm());
    }
    if kr > 0 {
        let span = span_of_matrices(&t.boundary.d, RANK_TOL)?;
        if span.dim() != kr {
            cr = cr.max(1.0);
        }
        for d1 in &t.boundary.d {
            for d2 in &t.boundary.d {
                cr = cr.max(span_residual(&span, &(d1 * d2)));
            }
        }
    }
    checks.push(Check::residual("C^R: D_a strictly upper, D_a E_00 = E_{-a,0}, subalgebra", cr, TETRAD_TOL));

    let mut cl = 0.0f64;
    let e00_l = unit(kl + 1, 0, 0);
    for (b, g) in t.boundary.g.iter().enumerate() {
        let b = b + 1;
        cl = cl.max(strictly_upper_residual(g));
        cl = cl.max((&e00_l * g - unit(kl + 1, 0, b)).norm());
    }
    if kl > 0 {
        let span = span_of_matrices(&t.boundary.g, RANK_TOL)?;
        if span.dim() != kl {
            cl = cl.max(1.0);
        }
        for g1 in &t.boundary.g {
            for g2 in &t.boundary.g {
                cl = cl.max(span_residual(&span, &(g1 * g2)));
            }
        }
    }
    checks.push(Check::residual("C^L: G_b strictly upper, E_00 G_b = E_{0,b}, subalgebra", cl, TETRAD_TOL));

    // Λ I_R(D_a) = λ_{-a} I_R(D_a) Λ
    let mut ld = 0.0f64;
    for (a, d) in t.boundary.d.iter().enumerate() {
        let a = a as isize + 1;
        let id = t.embed_r(d);
        ld = ld.max(rel_residual(&(&lam * &id), &(&id * &lam * t.wo.at(-a))));
    }
    if kr > 0 {
        checks.push(Check::residual("Λ I_R(D_a) = λ_{-a} I_R(D_a) Λ", ld, TETRAD_TOL));
    }

    // Λ I_L(G_b) = λ_b^{-1} I_L(G_b) Λ
    let mut lg = 0.0f64;
    for (b, g) in t.boundary.g.iter().enumerate() {
        let b = b as isize + 1;
        let ig = t.embed_l(g);
        lg = lg.max(rel_residual(&(&lam * &ig), &(&ig * &lam / t.wo.at(b))));
    }
    if kl > 0 {
        checks.push(Check::residual("Λ I_L(G_b) = λ_b^{-1} I_L(G_b) Λ", lg, TETRAD_TOL));
    }

    // YΛ = ΛY, P_R Y P_L = 0, Y strictly upper.
    let ly = rel_residual(&(&t.y * &lam), &(&lam * &t.y))
        .max((t.p_r() * &t.y * t.p_l()).norm())
        .max(strictly_upper_residual(&t.y));
    checks.push(Check::residual("YΛ = ΛY, P_R Y P_L = 0, Y strictly upper", ly, TETRAD_TOL));

    // The M^l intertwining relations for l = 1..L_check.
    let m = t.m_matrix();
    let mut r1 = 0.0f64;
    let mut r2 = 0.0f64;
    let ir: Vec<CMatrix> = t.boundary.d.iter().map(|d| t.embed_r(d)).collect();
    let il: Vec<CMatrix> = t.boundary.g.iter().map(|g| t.embed_l(g)).collect();
    let mut ml = CMatrix::identity(k, k);
    for _ in 1..=l_check {
        ml = &ml * &m;
        for a in 1..=kr as isize {
            let lhs = &ml * &ir[a as usize - 1];
            let mut rhs = CMatrix::zeros(k, k);
            for a2 in 1..=kr as isize {
                let coef = ml[(t.pos(-a2), t.pos(-a))];
                rhs += &ir[a2 as usize - 1] * &ml * coef;
            }
            r1 = r1.max(rel_residual(&lhs, &rhs));
        }
        for b in 1..=kl as isize {
            let lhs = &il[b as usize - 1] * &ml;
            let mut rhs = CMatrix::zeros(k, k);
            for b2 in 1..=kl as isize {
                let coef = ml[(t.pos(b), t.pos(b2))];
                rhs += &ml * &il[b2 as usize - 1] * coef;
            }
            r2 = r2.max(rel_residual(&lhs, &rhs));
        }
    }
    if kr > 0 {
        checks.push(Check::residual("M^l I_R(D_a) = Σ ⟨f_{-a'},M^l f_{-a}⟩ I_R(D_{a'}) M^l", r1, TETRAD_TOL));
    }
    if kl > 0 {
        checks.push(Check::residual("I_L(G_b) M^l = Σ ⟨f_b,M^l f_{b'}⟩ M^l I_L(G_{b'})", r2, TETRAD_TOL));
    }

    // Cross-check: M^{-1} 𝒟 M = 𝒟.
    let basis = t.d_algebra_basis();
    let dspan = span_of_matrices(&basis, RANK_TOL)?;
    let conj_ok = match inverse(&m) {
        Ok(minv) => {
            let moved: Vec<CMatrix> = basis.iter().map(|d| &minv * d * &m).collect();
            let mspan = span_of_matrices(&moved, RANK_TOL)?;
            subspace_distance(&dspan, &mspan)?
        }
        Err(_) => 1.0,
    };
    checks.push(Check::residual("M^{-1} 𝒟 M = 𝒟", conj_ok, SPAN_EQ_TOL));

    let dim_ok = dspan.dim() == (kr + 1) * (kl + 1);
    checks.push(Check::flag("dim 𝒟 = (k_R+1)(k_L+1)", dim_ok));

    for ch in &checks {
        if !ch.pass && ch.name != "Wo ordering" {
            reasons.push(format!("tetrad: {} (residual {:.3e})", ch.name, ch.residual));
        }
    }
    let accepted = checks.iter().all(|c| c.pass);
    Ok(TetradReport { checks, reasons, l_check, accepted })
}

/// A candidate ClassA tuple `𝔹` with its tetrad.
#[derive(Clone, Debug)]
pub struct ClassATuple {
    pub n0: usize,
    pub tetrad: Tetrad,
    pub b: Vec<CMatrix>,
}

impl ClassATuple {
    pub fn new(n0: usize, tetrad: Tetrad, b: Vec<CMatrix>) -> Result<Self> {
        if n0 == 0 {
            return Err(GapError::Parameter("n0 must be positive".into()));
        }
        if b.len() < 2 {
            return Err(GapError::Parameter("n must be at least 2".into()));
        }
        let k = n0 * tetrad.dim();
        if let Some(m) = b.iter().find(|m| m.shape() != (k, k)) {
            return Err(GapError::Shape(format!("B matrix of shape {:?}, expected {}x{}", m.shape(), k, k)));
        }
        Ok(ClassATuple { n0, tetrad, b })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// Bond dimension `n0 (k_R + k_L + 1)`.
    pub fn k(&self) -> usize {
        self.n0 * self.tetrad.dim()
    }

    pub fn kraus(&self) -> KrausTuple {
        KrausTuple::new(self.b.clone()).expect("shapes validated at construction")
    }

    /// `P̂_R = 1 ⊗ P_R`.
    pub fn p_hat_r(&self) -> CMatrix {
        kron(&CMatrix::identity(self.n0, self.n0), &self.tetrad.p_r())
    }

    /// `P̂_L = 1 ⊗ P_L`.
    pub fn p_hat_l(&self) -> CMatrix {
        kron(&CMatrix::identity(self.n0, self.n0), &self.tetrad.p_l())
    }

    /// Basis of `M_{n0} ⊗ 𝒟·M^l`.
    pub fn target_basis(&self, l: u32) -> Vec<CMatrix> {
        let ml = mat_pow(&self.tetrad.m_matrix(), l);
        let dl: Vec<CMatrix> = self.tetrad.d_algebra_basis().iter().map(|d| d * &ml).collect();
        let mut out = Vec::with_capacity(self.n0 * self.n0 * dl.len());
        for a in 0..self.n0 {
            for b in 0..self.n0 {
                let e = unit(self.n0, a, b);
                for d in &dl {
                    out.push(kron(&e, d));
                }
            }
        }
        out
    }

    pub fn target_span(&self, l: u32) -> Subspace {
        span_of_matrices(&self.target_basis(l), RANK_TOL).expect("uniform shapes")
    }

    /// Index in the full bond space of `χ_α ⊗ f_i`.
    pub fn index(&self, alpha: usize, i: isize) -> usize {
        alpha * self.tetrad.dim() + self.tetrad.pos(i)
    }
}

/// `𝒦_l(v)`, grown one site at a time: `span{v_μ · basis(𝒦_{l−1})}`.
pub fn monomial_span(v: &[CMatrix], l: usize) -> Subspace {
    MonomialSpans::new(v).nth_span(l)
}

/// Iterator over `𝒦_1(v), 𝒦_2(v), …`.
pub struct MonomialSpans<'a> {
    v: &'a [CMatrix],
    current: Option<Subspace>,
}

impl<'a> MonomialSpans<'a> {
    pub fn new(v: &'a [CMatrix]) -> Self {
        MonomialSpans { v, current: None }
    }

    fn nth_span(mut self, l: usize) -> Subspace {
        assert!(l >= 1, "monomial degree starts at 1");
        let mut s = None;
        for _ in 0..l {
            s = self.next();
        }
        s.expect("iterator is infinite")
    }
}

impl Iterator for MonomialSpans<'_> {
    type Item = Subspace;

    fn next(&mut self) -> Option<Subspace> {
        let k = self.v.first().map(|m| m.nrows()).unwrap_or(0);
        let next = match &self.current {
            None => span_of_matrices(self.v, RANK_TOL).unwrap_or_else(|_| Subspace::zero(k * k)),
            Some(prev) => {
                let basis: Vec<CMatrix> = (0..prev.dim())
                    .map(|j| CMatrix::from_column_slice(k, k, prev.frame().column(j).as_slice()))
                    .collect();
                let mut prods = Vec::with_capacity(basis.len() * self.v.len());
                for vm in self.v {
                    for b in &basis {
                        prods.push(vm * b);
                    }
                }
                if prods.is_empty() {
                    Subspace::zero(k * k)
                } else {
                    span_of_matrices(&prods, RANK_TOL).expect("uniform shapes")
                }
            }
        };
        self.current = Some(next.clone());
        Some(next)
    }
}

/// Smallest `l ≤ l_max` where `𝒦_{l'}(𝔹) = M_{n0} ⊗ 𝒟·M^{l'}` for
/// `l' = l..=l+persistence`.
pub fn compute_lb(t: &ClassATuple, l_max: usize, persistence: usize) -> Option<usize> {
    let mut run_start: Option<usize> = None;
    for (idx, span) in MonomialSpans::new(&t.b).take(l_max + persistence).enumerate() {
        let l = idx + 1;
        let target = t.target_span(l as u32);
        let equal = subspace_distance(&span, &target).map(|d| d <= SPAN_EQ_TOL).unwrap_or(false);
        if equal {
            let start = *run_start.get_or_insert(l);
            if l - start >= persistence {
                return Some(start);
            }
        } else {
            run_start = None;
            if l > l_max {
                return None;
            }
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub tetrad: TetradReport,
    /// `‖B_μ − proj(B_μ)‖ / ‖B_μ‖` per `μ`.
    pub membership_residuals: Vec<f64>,
    pub l_b: Option<usize>,
    pub transfer_radius: f64,
    pub kn_dim: Option<usize>,
    pub member: bool,
    pub reasons: Vec<String>,
}

/// Full ClassA membership check.
pub fn validate_classa(t: &ClassATuple) -> Result<MembershipReport> {
    let tetrad = validate_tetrad(&t.tetrad)?;
    let mut reasons = tetrad.reasons.clone();
    let kraus = t.kraus();
    let transfer_radius = transfer_matrix_rep(&kraus)?.spectral_radius;
    if !tetrad.accepted {
        return Ok(MembershipReport {
            tetrad,
            membership_residuals: vec![],
            l_b: None,
            transfer_radius,
            kn_dim: None,
            member: false,
            reasons,
        });
    }
    let target = t.target_span(1);
    let membership_residuals: Vec<f64> = t
        .b
        .iter()
        .map(|b| {
            let nb = b.norm();
            if nb == 0.0 {
                0.0
            } else {
                target.residual(&vec_of(b)) / nb
            }
        })
        .collect();
    for (mu, r) in membership_residuals.iter().enumerate() {
        if *r >= MEMBERSHIP_TOL {
            reasons.push(format!("B_{} not in M_n0 ⊗ 𝒟·M (residual {:.3e})", mu + 1, r));
        }
    }
    let l_b = compute_lb(t, LB_MAX, LB_PERSISTENCE);
    if l_b.is_none() {
        reasons.push(format!("l_B not-found up to {}", LB_MAX));
    }
    if (transfer_radius - 1.0).abs() > 1e-8 {
        reasons.push(format!("transfer radius {:.12} ≠ 1", transfer_radius));
    }
    let kn_dim = l_b.map(|l| monomial_span(&t.b, l).dim());
    let member = reasons.is_empty();
    Ok(MembershipReport { tetrad, membership_residuals, l_b, transfer_radius, kn_dim, member, reasons })
}

/// Corner tuple `ω_μ`, with `ω_μ ⊗ E_00 = (1⊗E_00) B_μ (1⊗E_00)`.
#[derive(Clone, Debug)]
pub struct BulkTuple {
    pub omega: Vec<CMatrix>,
    pub primitive: bool,
    pub l_omega: Option<usize>,
    pub transfer_radius: f64,
}

pub fn extract_bulk_tuple(t: &ClassATuple) -> Result<BulkTuple> {
    let rep = validate_classa(t)?;
    if !rep.member {
        return Err(GapError::NotMember(rep.reasons.join("; ")));
    }
    let omega: Vec<CMatrix> = t
        .b
        .iter()
        .map(|b| CMatrix::from_fn(t.n0, t.n0, |a, bb| b[(t.index(a, 0), t.index(bb, 0))]))
        .collect();
    let l_omega = primitivity_index(&omega, LB_MAX, LB_PERSISTENCE);
    let transfer_radius = transfer_matrix_rep(&KrausTuple::new(omega.clone())?)?.spectral_radius;
    Ok(BulkTuple { primitive: l_omega.is_some(), omega, l_omega, transfer_radius })
}

/// Smallest `l` with `𝒦_{l'}(ω) = M_k` for `l' = l..=l+persistence`.
pub fn primitivity_index(omega: &[CMatrix], cap: usize, persistence: usize) -> Option<usize> {
    let k = omega.first()?.nrows();
    let mut run_start: Option<usize> = None;
    for (idx, span) in MonomialSpans::new(omega).take(cap + persistence).enumerate() {
        let l = idx + 1;
        if span.dim() == k * k {
            let start = *run_start.get_or_insert(l);
            if l - start >= persistence {
                return Some(start);
            }
        } else {
            run_start = None;
            if l > cap {
                return None;
            }
        }
    }
    None
}

/// The Example family with parameters `(n0, k_R, k_L, κ, n)`, scaled so
/// that the transfer map has spectral radius 1.
pub fn build_kappa_example(n0: usize, k_r: usize, k_l: usize, kappa: f64, n: usize) -> Result<ClassATuple> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(GapError::Parameter(format!("κ = {} not in (0,1)", kappa)));
    }
    if n < 2 {
        return Err(GapError::Parameter("n must be at least 2".into()));
    }
    if n0 == 0 {
        return Err(GapError::Parameter("n0 must be positive".into()));
    }
    let kdim = k_r + k_l + 1;
    let lambda: Vec<C64> = (-(k_r as isize)..=k_l as isize)
        .map(|j| c(kappa.powi((j.unsigned_abs() * n0) as i32)))
        .collect();
    // V_R = Σ_{j=-k_R}^{-1} E_{j,j+1} on indices -k_R..0; V_L likewise on 0..k_L.
    let v_r = CMatrix::from_fn(k_r + 1, k_r + 1, |i, j| if j == i + 1 { ONE } else { ZERO });
    let v_l = CMatrix::from_fn(k_l + 1, k_l + 1, |i, j| if j == i + 1 { ONE } else { ZERO });
    let d: Vec<CMatrix> = (1..=k_r as u32).map(|a| mat_pow(&v_r, a)).collect();
    let g: Vec<CMatrix> = (1..=k_l as u32).map(|b| mat_pow(&v_l, b)).collect();
    let tetrad = Tetrad {
        wo: WoVector { k_r, k_l, lambda },
        boundary: BoundaryTuples { d, g },
        y: CMatrix::zeros(kdim, kdim),
    };
    let lam = tetrad.wo.matrix();
    let r: Vec<f64> = (0..n0).map(|a| kappa.powi(a as i32)).collect();
    let lam_r = crate::linalg::diag_real(&r);
    let chi1 = CMatrix::from_fn(n0, 1, |i, _| if i == 0 { ONE } else { ZERO });
    let eta = CMatrix::from_fn(n0, 1, |i, _| if i >= 1 { ONE } else { ZERO });
    let flip = &chi1 * eta.adjoint() + &eta * chi1.adjoint();
    let shift = tetrad.embed_r(&v_r) + tetrad.embed_l(&v_l);
    let b1 = kron(&lam_r, &lam);
    let b2 = kron(&flip, &lam) + kron(&lam_r, &(shift * &lam));
    let k = n0 * kdim;
    let mut b = vec![b1, b2];
    // For n0 ≥ 2 the raw tuple has r_T > 1; rescaling keeps every span.
    let r = transfer_matrix_rep(&KrausTuple::new(b.clone())?)?.spectral_radius;
    if (r - 1.0).abs() > 1e-14 {
        let scale = c(1.0 / r.sqrt());
        for m in &mut b {
            *m *= scale;
        }
    }
    b.extend((2..n).map(|_| CMatrix::zeros(k, k)));
    ClassATuple::new(n0, tetrad, b)
}

/// Spin-1 AKLT tuple in the `S^z` basis `(+1, 0, −1)`, normalised so that
/// the transfer map is unital.
pub fn build_aklt() -> ClassATuple {
    let s = |x: f64| c(x);
    let sp = CMatrix::from_row_slice(2, 2, &[s(0.0), s(1.0), s(0.0), s(0.0)]);
    let sm = sp.transpose();
    let sz = CMatrix::from_row_slice(2, 2, &[s(1.0), s(0.0), s(0.0), s(-1.0)]);
    let b = vec![
        sp * c((2.0f64 / 3.0).sqrt()),
        sz * c(-(1.0f64 / 3.0).sqrt()),
        sm * c(-(2.0f64 / 3.0).sqrt()),
    ];
    let tetrad = Tetrad {
        wo: WoVector { k_r: 0, k_l: 0, lambda: vec![ONE] },
        boundary: BoundaryTuples { d: vec![], g: vec![] },
        y: CMatrix::zeros(1, 1),
    };
    ClassATuple::new(2, tetrad, b).expect("AKLT shapes are consistent")
}

/// Product-state tuple `(1, 0)`.
pub fn build_product() -> ClassATuple {
    build_kappa_example(1, 0, 0, 0.5, 2).expect("valid parameters")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &CMatrix, b: &CMatrix) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn e1_matrices_match_hand_values() {
        let t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap();
        let b1 = crate::linalg::diag_real(&[0.5, 1.0, 0.5]);
        let mut b2 = CMatrix::zeros(3, 3);
        b2[(0, 1)] = c(1.0);
        b2[(1, 2)] = c(0.5);
        assert!(close(&t.b[0], &b1));
        assert!(close(&t.b[1], &b2));
    }

    #[test]
    fn trivial_kappa_is_product() {
        let t = build_kappa_example(1, 0, 0, 0.5, 2).unwrap();
        assert!(close(&t.b[0], &CMatrix::identity(1, 1)));
        assert!(close(&t.b[1], &CMatrix::zeros(1, 1)));
    }

    #[test]
    fn kappa_out_of_range() {
        assert!(build_kappa_example(1, 1, 1, 1.0, 2).is_err());
        assert!(build_kappa_example(1, 1, 1, 0.0, 2).is_err());
        assert!(build_kappa_example(1, 1, 1, 0.5, 1).is_err());
    }

    #[test]
    fn wo_violation_reasons() {
        let mut t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap().tetrad;
        t.wo.lambda[1] = c(0.9);
        let rep = validate_tetrad(&t).unwrap();
        assert!(!rep.accepted);
        assert!(rep.reasons.iter().any(|r| r == "Wo: λ_0 ≠ 1"));

        let mut t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap().tetrad;
        t.wo.lambda[2] = c(1.5);
        let rep = validate_tetrad(&t).unwrap();
        assert!(!rep.accepted);
    }

    #[test]
    fn l_check_for_e1() {
        let t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap().tetrad;
        // three sites, Y = 0 (index 1), ratios {1/2, 1, 2}
        assert_eq!(t.l_check(), 3 * 2 * 3);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap().tetrad;
        t.y = CMatrix::zeros(2, 2);
        assert!(matches!(validate_tetrad(&t), Err(GapError::Shape(_))));
    }
}
