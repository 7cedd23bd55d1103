//! Edge maps, boundary-state parametrisations, the bulk state and
//! finite-window diagnostics.
//!
//! Window observables use the chain convention of [`crate::ground`]: the
//! first site of the window is the most significant tensor digit. The
//! finite-chain expectations are evaluated by boundary contraction with the
//! doubled transfer matrix `W = Σ_μ v_μ ⊗ conj(v_μ)`, so no `n^N` vector is
//! formed. For a window at sites `p..p+l` of an `N`-site chain,
//! `⟨Γ_N(X), A Γ_N(Y)⟩ = Tr(W^p 𝔸 W^q (X* ⊗ conj(Y*)))` with `q = N − p − l`
//! and `𝔸 = Σ A_{μν} v̂_μ ⊗ conj(v̂_ν)`.

use rand::Rng;

use crate::error::{GapError, Result};
use crate::ground::{corner_basis, ground_space};
use crate::linalg::{
    c, eig_hermitian, eigvals_hermitian, kron, random_density, support_and_pinv, trace_norm_hermitian, unit, CMatrix, C64, ONE,
    RANK_TOL, ZERO,
};
use crate::model::{compute_lb, extract_bulk_tuple, validate_classa, ClassATuple, LB_MAX, LB_PERSISTENCE};
use crate::transfer::{fixed_point_triple, subleading_modulus, KrausTuple, SpectralTripleII};

/// Tolerance for trace, positivity and state-identity checks.
pub const STATE_TOL: f64 = 1e-10;
/// Overlap threshold of [`EdgeModel::translation_overlap`].
pub const OVERLAP_TOL: f64 = 1e-12;
/// Leading points of a series left out of a fit.
pub const BURN_IN: usize = 2;
/// Series whose largest value is below this are reported as vanishing.
pub const VANISH_TOL: f64 = 1e-13;
/// Largest window Hilbert-space dimension `n^l` handled.
pub const WINDOW_CAP: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn label(&self) -> &'static str {
        match self {
            Side::L => "L",
            Side::R => "R",
        }
    }
}

/// An observable on the sites `start..start+len`.
#[derive(Clone, Debug)]
pub struct WindowObservable {
    pub start: isize,
    pub len: usize,
    pub matrix: CMatrix,
}

impl WindowObservable {
    pub fn new(start: isize, len: usize, matrix: CMatrix, n: usize) -> Result<Self> {
        let d = window_dim(n, len)?;
        if matrix.shape() != (d, d) {
            return Err(GapError::Shape(format!("window of {len} sites needs {d}x{d}, got {:?}", matrix.shape())));
        }
        Ok(WindowObservable { start, len, matrix })
    }

    pub fn identity(start: isize, len: usize, n: usize) -> Result<Self> {
        let d = window_dim(n, len)?;
        Self::new(start, len, CMatrix::identity(d, d), n)
    }

    /// Product of single-site operators on consecutive sites.
    pub fn product(start: isize, ops: &[CMatrix]) -> Result<Self> {
        let n = ops.first().map(|o| o.nrows()).ok_or_else(|| GapError::Parameter("empty product".into()))?;
        let mut m = CMatrix::identity(1, 1);
        for o in ops {
            if o.shape() != (n, n) {
                return Err(GapError::Shape("site operators differ in size".into()));
            }
            m = kron(&m, o);
        }
        Self::new(start, ops.len(), m, n)
    }

    /// Same matrix on sites `start+shift..`.
    pub fn shifted(&self, shift: isize) -> Self {
        WindowObservable { start: self.start + shift, ..self.clone() }
    }

    /// `A ⊗ 1_{pad}` or `1_{pad} ⊗ A`, keeping the expectation in any
    /// translation-invariant state.
    pub fn padded(&self, n: usize, left: usize, right: usize) -> Result<Self> {
        let il = CMatrix::identity(window_dim(n, left)?, window_dim(n, left)?);
        let ir = CMatrix::identity(window_dim(n, right)?, window_dim(n, right)?);
        let m = kron(&kron(&il, &self.matrix), &ir);
        Self::new(self.start - left as isize, self.len + left + right, m, n)
    }
}

fn window_dim(n: usize, len: usize) -> Result<usize> {
    match n.checked_pow(len as u32) {
        Some(d) if d <= WINDOW_CAP => Ok(d),
        Some(d) => Err(GapError::CapExceeded { dim: d, cap: WINDOW_CAP }),
        None => Err(GapError::CapExceeded { dim: usize::MAX, cap: WINDOW_CAP }),
    }
}

/// A density matrix on `M_{n0(k_L+1)}` (side L) or `M_{n0(k_R+1)}` (side R).
#[derive(Clone, Debug)]
pub struct BoundaryState {
    pub side: Side,
    pub density: CMatrix,
}

impl BoundaryState {
    pub fn new(side: Side, density: CMatrix) -> Result<Self> {
        if !density.is_square() {
            return Err(GapError::Shape("density must be square".into()));
        }
        let herm = (&density - density.adjoint()).norm();
        if herm > STATE_TOL {
            return Err(GapError::NotHermitian);
        }
        let tr = density.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return Err(GapError::Parameter(format!("trace {tr} differs from 1")));
        }
        let vals = eigvals_hermitian(&density)?;
        if vals[0] < -STATE_TOL {
            return Err(GapError::NotPsd(vals[0]));
        }
        Ok(BoundaryState { side, density })
    }

    pub fn maximally_mixed(side: Side, dim: usize) -> Self {
        BoundaryState { side, density: CMatrix::identity(dim, dim) * c(1.0 / dim as f64) }
    }

    /// `|ψ⟩⟨ψ|/‖ψ‖²`.
    pub fn pure(side: Side, psi: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        let nrm = v.norm();
        if nrm == 0.0 {
            return Err(GapError::Parameter("zero state vector".into()));
        }
        let u = v / c(nrm);
        Ok(BoundaryState { side, density: &u * u.adjoint() })
    }

    pub fn random<R: Rng + ?Sized>(side: Side, dim: usize, rng: &mut R) -> Self {
        BoundaryState { side, density: random_density(rng, dim) }
    }

    pub fn dim(&self) -> usize {
        self.density.nrows()
    }
}

/// Exponential fit `value ≈ C·s^{index−offset}`.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub series: Vec<(usize, f64)>,
    pub offset: usize,
    pub c: f64,
    pub s: f64,
    /// RMS of the log-residuals of the fitted points.
    pub residual: f64,
    /// Why no fit was made, if so.
    pub skipped: Option<String>,
}

impl DecayFit {
    /// Least squares on `ln value` after [`BURN_IN`] points; `C` is then the
    /// smallest constant with `value ≤ C·s^{index−offset}` on those points.
    pub fn fit(series: Vec<(usize, f64)>, offset: usize) -> Self {
        let max = series.iter().map(|p| p.1).fold(0.0, f64::max);
        let skip = |series, reason: &str| DecayFit {
            series,
            offset,
            c: 0.0,
            s: 0.0,
            residual: 0.0,
            skipped: Some(reason.to_string()),
        };
        if max < VANISH_TOL {
            return skip(series, "series vanishes identically");
        }
        let pts: Vec<(f64, f64)> = series
            .iter()
            .skip(BURN_IN)
            .filter(|p| p.1 > VANISH_TOL)
            .map(|&(i, v)| (i as f64 - offset as f64, v.ln()))
            .collect();
        if pts.len() < 2 {
            return skip(series, "fewer than two nonvanishing points after burn-in");
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let residual = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
        let lc = pts.iter().map(|p| p.1 - slope * p.0).fold(f64::NEG_INFINITY, f64::max);
        DecayFit { series, offset, c: lc.exp(), s: slope.exp(), residual, skipped: None }
    }

    /// `C·s^{index−offset}`.
    pub fn envelope(&self, index: usize) -> f64 {
        self.c * self.s.powf(index as f64 - self.offset as f64)
    }

    /// Whether every point after burn-in lies under the envelope, up to a
    /// relative tolerance.
    pub fn dominated(&self, rel: f64) -> bool {
        if self.skipped.is_some() {
            return self.series.iter().all(|p| p.1 < VANISH_TOL);
        }
        self.series.iter().skip(BURN_IN).all(|&(i, v)| v <= self.envelope(i) * (1.0 + rel) || v <= VANISH_TOL)
    }

    /// `index,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in &self.series {
            s.push_str(&format!("{i},{v:.17e}\n"));
        }
        s
    }
}

/// Length of a bulk segment in a boundary contraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bulk {
    Sites(usize),
    Infinite,
}

/// Window-convergence diagnostics of the finite chains.
#[derive(Clone, Debug)]
pub struct WindowConvergence {
    pub start: usize,
    pub len: usize,
    pub m: usize,
    /// Reduced density at the largest `N`.
    pub density: CMatrix,
    pub limit: CMatrix,
    /// Trace distance to the limit; index `N`, fitted against `N − start − len`.
    pub fit: DecayFit,
    /// Smallest nonzero eigenvalue of the limiting left-edge window density,
    /// for window lengths `1..=l`.
    pub support_profile: Vec<(usize, f64)>,
    pub support_floor: f64,
}

/// A member tuple together with its fixed points and the matrix functions
/// used by every state construction.
#[derive(Clone, Debug)]
pub struct EdgeModel {
    pub tuple: ClassATuple,
    pub kraus: KrausTuple,
    pub triple: SpectralTripleII,
    pub l_b: usize,
    /// Largest modulus of the transfer spectrum below 1.
    pub subleading: f64,
    e_sqrt: CMatrix,
    rho_sqrt: CMatrix,
    x_sqrt: CMatrix,
    y_sqrt: CMatrix,
    /// Isometries onto `P̂_L` and `P̂_R`.
    j_l: CMatrix,
    j_r: CMatrix,
    /// `Σ v ⊗ conj(v)` and its limit `P`.
    w: CMatrix,
    w_inf: CMatrix,
    corner: Vec<CMatrix>,
}

impl EdgeModel {
    /// Fails with `NotMember` for tuples outside the class.
    pub fn new(t: &ClassATuple) -> Result<Self> {
        let rep = validate_classa(t)?;
        if !rep.member {
            return Err(GapError::NotMember(rep.reasons.join("; ")));
        }
        let l_b = rep.l_b.or_else(|| compute_lb(t, LB_MAX, LB_PERSISTENCE)).ok_or_else(|| GapError::NotMember("no l_B".into()))?;
        let kraus = t.kraus();
        let p = t.p_hat_r();
        let q = t.p_hat_l();
        let triple = fixed_point_triple(&kraus, &p, &q)?;
        let pe = support_and_pinv(&triple.e, RANK_TOL)?;
        let pr = support_and_pinv(&triple.rho, RANK_TOL)?;
        let k = t.k();
        let (kr, kl) = (t.tetrad.k_r(), t.tetrad.k_l());
        let j_l = CMatrix::from_fn(k, t.n0 * (kl + 1), |r, col| {
            let (a, i) = (col / (kl + 1), col % (kl + 1));
            if r == t.index(a, i as isize) { ONE } else { ZERO }
        });
        let j_r = CMatrix::from_fn(k, t.n0 * (kr + 1), |r, col| {
            let (a, j) = (col / (kr + 1), col % (kr + 1));
            if r == t.index(a, j as isize - kr as isize) { ONE } else { ZERO }
        });
        let w = kraus.ops().iter().fold(CMatrix::zeros(k * k, k * k), |acc, v| acc + kron(v, &v.map(|z| z.conj())));
        let w_inf = CMatrix::from_fn(k * k, k * k, |r, col| {
            let (i, l) = (r / k, r % k);
            let (j, kk) = (col / k, col % k);
            triple.e[(i, l)] * triple.rho[(kk, j)]
        });
        let corner = corner_basis(&p, &q)?;
        Ok(EdgeModel {
            subleading: subleading_modulus(&kraus)?,
            tuple: t.clone(),
            kraus,
            l_b,
            e_sqrt: pe.sqrt,
            rho_sqrt: pr.sqrt,
            x_sqrt: pe.pinv_sqrt,
            y_sqrt: pr.pinv_sqrt,
            triple,
            j_l,
            j_r,
            w,
            w_inf,
            corner,
        })
    }

    pub fn n(&self) -> usize {
        self.kraus.n()
    }

    pub fn k(&self) -> usize {
        self.kraus.k()
    }

    /// Dimension of the boundary algebra on `side`.
    pub fn boundary_dim(&self, side: Side) -> usize {
        match side {
            Side::L => self.j_l.ncols(),
            Side::R => self.j_r.ncols(),
        }
    }

    /// `σ̂ = J σ J*` inside `M_{n0} ⊗ M`.
    pub fn embed(&self, sigma: &BoundaryState) -> Result<CMatrix> {
        let j = match sigma.side {
            Side::L => &self.j_l,
            Side::R => &self.j_r,
        };
        if sigma.dim() != j.ncols() {
            return Err(GapError::Shape(format!(
                "boundary state of size {} on side {}, expected {}",
                sigma.dim(),
                sigma.side.label(),
                j.ncols()
            )));
        }
        Ok(j * &sigma.density * j.adjoint())
    }

    fn compress(&self, side: Side, full: &CMatrix) -> Result<BoundaryState> {
        let j = match side {
            Side::L => &self.j_l,
            Side::R => &self.j_r,
        };
        let mut d = j.adjoint() * full * j;
        d = (&d + d.adjoint()) * c(0.5);
        let tr = d.trace();
        if tr.re <= 0.0 {
            return Err(GapError::Parameter("X gives a zero boundary state".into()));
        }
        BoundaryState::new(side, d / tr)
    }

    /// `σ_{L,X} = Tr(ρ^{1/2} X* e X ρ^{1/2} ·)/φ(X* e X)`.
    pub fn sigma_lx(&self, x: &CMatrix) -> Result<BoundaryState> {
        let full = &self.rho_sqrt * x.adjoint() * &self.triple.e * x * &self.rho_sqrt;
        self.compress(Side::L, &full)
    }

    /// `σ_{R,X} = φ(X* e^{1/2} · e^{1/2} X)/φ(X* e X)`.
    pub fn sigma_rx(&self, x: &CMatrix) -> Result<BoundaryState> {
        let full = &self.e_sqrt * x * &self.triple.rho * x.adjoint() * &self.e_sqrt;
        self.compress(Side::R, &full)
    }

    /// Products `B_{μ0}⋯B_{μ(l−1)}` in window index order.
    pub fn words(&self, l: usize) -> Result<Vec<CMatrix>> {
        window_dim(self.n(), l)?;
        Ok(words_of(self.kraus.ops(), l, self.k()))
    }

    fn check_window(&self, a: &WindowObservable) -> Result<()> {
        let d = window_dim(self.n(), a.len)?;
        if a.matrix.shape() != (d, d) {
            return Err(GapError::Shape(format!("observable of shape {:?} on {} sites", a.matrix.shape(), a.len)));
        }
        Ok(())
    }

    /// `L_𝔹` on `[−l,−1]` or `R_𝔹` on `[0,l−1]`.
    pub fn edge_map(&self, side: Side, a: &WindowObservable) -> Result<CMatrix> {
        self.check_window(a)?;
        let expected = match side {
            Side::L => -(a.len as isize),
            Side::R => 0,
        };
        if a.start != expected {
            return Err(GapError::Precondition(format!(
                "side {} needs the window to start at {expected}, got {}",
                side.label(),
                a.start
            )));
        }
        Ok(match side {
            Side::L => contract_l(self.kraus.ops(), &self.triple.rho, &a.matrix),
            Side::R => contract_r(self.kraus.ops(), &self.triple.e, &a.matrix),
        })
    }

    /// `Ξ_L(σ)(A) = Tr(σ̂ y^{1/2} L(A) y^{1/2})`, `Ξ_R(σ)(A) = Tr(σ̂ x^{1/2} R(A) x^{1/2})`.
    pub fn xi_state(&self, sigma: &BoundaryState, a: &WindowObservable) -> Result<C64> {
        let s = self.embed(sigma)?;
        let m = self.edge_map(sigma.side, a)?;
        let g = match sigma.side {
            Side::L => &self.y_sqrt,
            Side::R => &self.x_sqrt,
        };
        Ok((s * g * m * g).trace())
    }

    /// `ω_∞(A) = Σ A_{μν} φ(B̂_μ e B̂_ν*)`.
    pub fn omega_infty(&self, a: &WindowObservable) -> Result<C64> {
        self.check_window(a)?;
        Ok(self.triple.phi(&contract_r(self.kraus.ops(), &self.triple.e, &a.matrix)))
    }

    /// The same value through the bulk corner `(ω_μ ⊗ e_00)`.
    pub fn omega_infty_corner(&self, a: &WindowObservable) -> Result<C64> {
        self.check_window(a)?;
        let t = &self.tuple;
        let bulk = extract_bulk_tuple(t)?;
        let kd = t.tetrad.dim();
        let p0 = t.tetrad.pos(0);
        let ops: Vec<CMatrix> = bulk.omega.iter().map(|o| kron(o, &unit(kd, p0, p0))).collect();
        Ok(self.triple.phi(&contract_r(&ops, &self.triple.e, &a.matrix)))
    }

    /// `max(|ω_∞(A) − ω_∞(1⊗A)|, |ω_∞(A) − ω_∞(A⊗1)|)`.
    pub fn translation_defect(&self, a: &WindowObservable) -> Result<f64> {
        let base = self.omega_infty(a)?;
        let left = self.omega_infty(&a.padded(self.n(), 1, 0)?)?;
        let right = self.omega_infty(&a.padded(self.n(), 0, 1)?)?;
        Ok((base - left).norm().max((base - right).norm()))
    }

    /// Density of `Ξ(σ)` restricted to the `l` sites next to the edge.
    pub fn xi_density(&self, sigma: &BoundaryState, l: usize) -> Result<CMatrix> {
        let s = self.embed(sigma)?;
        let words = self.words(l)?;
        Ok(match sigma.side {
            Side::L => {
                let lam = psd_sqrt(&(&self.y_sqrt * s * &self.y_sqrt))?;
                gram_density(words.iter().map(|b| &self.rho_sqrt * b * &lam))
            }
            Side::R => {
                let lam = psd_sqrt(&(&self.x_sqrt * s * &self.x_sqrt))?;
                gram_density(words.iter().map(|b| &lam * b * &self.e_sqrt))
            }
        })
    }

    /// Density of `ω_∞` on `l` consecutive sites.
    pub fn omega_density(&self, l: usize) -> Result<CMatrix> {
        let words = self.words(l)?;
        Ok(gram_density(words.iter().map(|b| &self.rho_sqrt * b * &self.e_sqrt)))
    }

    fn bulk(&self, b: Bulk) -> CMatrix {
        match b {
            Bulk::Infinite => self.w_inf.clone(),
            Bulk::Sites(p) => mat_pow_usize(&self.w, p),
        }
    }

    /// `𝔸 = Σ A_{μν} v̂_μ ⊗ conj(v̂_ν)`.
    fn doubled(&self, a: &CMatrix) -> CMatrix {
        doubled_rec(self.kraus.ops(), a, self.k())
    }

    /// `⟨Γ_N(X), A Γ_N(Y)⟩` for `A` on sites `start..start+len` and
    /// `N = p + len + q`, either bulk possibly infinite.
    pub fn gamma_expectation(&self, x: &CMatrix, y: &CMatrix, p: Bulk, a: &CMatrix, q: Bulk) -> C64 {
        let z = kron(&x.adjoint(), &y.adjoint().map(|z| z.conj()));
        (self.bulk(p) * self.doubled(a) * self.bulk(q) * z).trace()
    }

    /// Reduced density of `G_N/Tr G_N` (or its limit) on a window with `p`
    /// sites to its left and `q` to its right.
    pub fn window_density(&self, p: Bulk, len: usize, q: Bulk) -> Result<CMatrix> {
        if p == Bulk::Infinite && q == Bulk::Infinite {
            return self.omega_density(len);
        }
        let words = self.words(len)?;
        let k = self.k();
        let wp = self.bulk(p);
        let wq = self.bulk(q);
        let wl = mat_pow_usize(&self.w, len);
        let total = &wp * wl * &wq;
        let d = self.corner.len();
        let pairs: Vec<Vec<CMatrix>> = (0..d)
            .map(|j| (0..d).map(|i| kron(&self.corner[j].adjoint(), &self.corner[i].adjoint().map(|z| z.conj()))).collect())
            .collect();
        let gram = CMatrix::from_fn(d, d, |j, i| (&total * &pairs[j][i]).trace());
        let gram = (&gram + gram.adjoint()) * c(0.5);
        let parts = support_and_pinv(&gram, 1e-12)?;
        let rank = (parts.support.trace().re).round();
        if rank < 1.0 {
            return Err(GapError::Numerical("Γ_N vanishes on the corner".into()));
        }
        let mut z = CMatrix::zeros(k * k, k * k);
        for i in 0..d {
            for j in 0..d {
                let g = parts.pinv[(i, j)];
                if g != ZERO {
                    z += &pairs[j][i] * g;
                }
            }
        }
        let env = &wq * z * &wp;
        let dim = words.len();
        let mut out = CMatrix::zeros(dim, dim);
        for (b, vb) in words.iter().enumerate() {
            // F_b[j,i] = Σ_{l,k} conj(v_b)_{lk} E[(j,k),(i,l)]
            let f = CMatrix::from_fn(k, k, |j, i| {
                let mut s = ZERO;
                for l in 0..k {
                    for kk in 0..k {
                        s += vb[(l, kk)].conj() * env[(j * k + kk, i * k + l)];
                    }
                }
                s
            });
            for (a, va) in words.iter().enumerate() {
                out[(b, a)] = (va * &f).trace() / c(rank);
            }
        }
        Ok((&out + out.adjoint()) * c(0.5))
    }

    /// Exact reduced density of the `N`-site ground projection on
    /// `start..start+len`.
    pub fn finite_window_density(&self, sites: usize, start: usize, len: usize) -> Result<CMatrix> {
        if start + len > sites {
            return Err(GapError::Precondition(format!("window {start}+{len} exceeds N = {sites}")));
        }
        self.window_density(Bulk::Sites(start), len, Bulk::Sites(sites - start - len))
    }

    /// Window convergence over `N ∈ sizes` toward the `N → ∞` limit with the
    /// window held at distance `start` from the left edge. `m` is the
    /// interaction length whose kernel the ground projection represents.
    pub fn finite_chain_window(&self, m: usize, sizes: &[usize], start: usize, len: usize, floor_l: usize) -> Result<WindowConvergence> {
        if m == 0 {
            return Err(GapError::Parameter("m must be positive".into()));
        }
        if sizes.is_empty() {
            return Err(GapError::Parameter("no chain sizes".into()));
        }
        let limit = self.window_density(Bulk::Sites(start), len, Bulk::Infinite)?;
        let mut series = Vec::with_capacity(sizes.len());
        let mut density = limit.clone();
        for &n in sizes {
            let d = self.finite_window_density(n, start, len)?;
            series.push((n, 0.5 * trace_norm_hermitian(&(&d - &limit))?));
            density = d;
        }
        let fit = DecayFit::fit(series, start + len);
        let support_profile = self.support_profile(floor_l)?;
        let support_floor = support_profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        Ok(WindowConvergence { start, len, m, density, limit, fit, support_profile, support_floor })
    }

    /// Smallest nonzero eigenvalue of the limiting left-edge window density
    /// for `l = 1..=l_max`.
    pub fn support_profile(&self, l_max: usize) -> Result<Vec<(usize, f64)>> {
        (1..=l_max)
            .map(|l| {
                let d = self.window_density(Bulk::Sites(0), l, Bulk::Infinite)?;
                let vals = eigvals_hermitian(&d)?;
                let top = vals.last().cloned().unwrap_or(0.0);
                let min = vals.iter().cloned().filter(|&v| v > STATE_TOL * top.max(1.0)).fold(f64::INFINITY, f64::min);
                Ok((l, min))
            })
            .collect()
    }

    /// Connected correlator `|ω_∞(A τ_r(C)) − ω_∞(A)ω_∞(C)|` for
    /// `r = len(A)..=r_max`, fitted against `r`.
    pub fn correlation_decay(&self, a: &WindowObservable, cc: &WindowObservable, r_max: usize) -> Result<DecayFit> {
        self.check_window(a)?;
        self.check_window(cc)?;
        let ops = self.kraus.ops();
        let wa = self.omega_infty(a)?;
        let wc = self.omega_infty(cc)?;
        let rc = contract_r(ops, &self.triple.e, &cc.matrix);
        let mut series = Vec::new();
        let mut inner = rc;
        for r in a.len..=r_max {
            if r > a.len {
                inner = self.kraus.apply(&inner);
            }
            let joint = self.triple.phi(&contract_r(ops, &inner, &a.matrix));
            series.push((r, (joint - wa * wc).norm()));
        }
        Ok(DecayFit::fit(series, 0))
    }

    /// First `N ≤ n_max` with `Tr(σ̂ κ̂_N) > OVERLAP_TOL`.
    pub fn translation_overlap(&self, sigma: &BoundaryState, n_max: usize) -> Result<Option<(usize, f64)>> {
        let s = self.embed(sigma)?;
        let (mut cur, outer) = match sigma.side {
            Side::L => (&self.y_sqrt * &s * &self.y_sqrt, &self.rho_sqrt),
            Side::R => (&self.x_sqrt * &s * &self.x_sqrt, &self.e_sqrt),
        };
        for n in 1..=n_max {
            cur = match sigma.side {
                Side::L => self.kraus.apply(&cur),
                Side::R => self.kraus.apply_adjoint(&cur),
            };
            let kappa = outer * &cur * outer;
            let ov = (&s * kappa).trace().re;
            if ov > OVERLAP_TOL {
                return Ok(Some((n, ov)));
            }
        }
        Ok(None)
    }

    /// `‖Ξ(σ1) − Ξ(σ2)‖` on the `l` edge sites (default `l_B`), which is the
    /// best value of `|Ξ(σ1)(A) − Ξ(σ2)(A)|` over `‖A‖ ≤ 1`.
    pub fn edge_distinguishability(&self, s1: &BoundaryState, s2: &BoundaryState, l: Option<usize>) -> Result<f64> {
        if s1.side != s2.side {
            return Err(GapError::Precondition("boundary states on different sides".into()));
        }
        let l = l.unwrap_or(self.l_b);
        let d = self.xi_density(s1, l)? - self.xi_density(s2, l)?;
        trace_norm_hermitian(&((&d + d.adjoint()) * c(0.5)))
    }

    /// `|Ξ(σ)(A at distance N from the edge) − ω_∞(A)|` for `N = 0..=n_max`.
    pub fn boundary_decay(&self, sigma: &BoundaryState, a: &WindowObservable, n_max: usize) -> Result<DecayFit> {
        self.check_window(a)?;
        let s = self.embed(sigma)?;
        let bulk = self.omega_infty(a)?;
        let ops = self.kraus.ops();
        let (mut cur, g) = match sigma.side {
            Side::L => (contract_l(ops, &self.triple.rho, &a.matrix), &self.y_sqrt),
            Side::R => (contract_r(ops, &self.triple.e, &a.matrix), &self.x_sqrt),
        };
        let mut series = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            if n > 0 {
                cur = match sigma.side {
                    Side::L => self.kraus.apply_adjoint(&cur),
                    Side::R => self.kraus.apply(&cur),
                };
            }
            let val = (&s * g * &cur * g).trace();
            series.push((n, (val - bulk).norm()));
        }
        Ok(DecayFit::fit(series, 0))
    }

    /// Largest `|Ξ(σ)((1 − G_m) at x)|` over embeddings in the `l` edge sites.
    pub fn frustration_residual(&self, sigma: &BoundaryState, m: usize, l: usize) -> Result<f64> {
        if m > l || m == 0 {
            return Err(GapError::Parameter(format!("need 1 ≤ m ≤ l, got m = {m}, l = {l}")));
        }
        let d = self.xi_density(sigma, l)?;
        let g = ground_space(&self.kraus, m)?.projector();
        let dim = g.nrows();
        let comp = CMatrix::identity(dim, dim) - g;
        let n = self.n();
        let mut worst: f64 = 0.0;
        for x in 0..=(l - m) {
            let op = crate::linalg::apply_local(&comp, &d, n, l, x);
            worst = worst.max(op.trace().norm());
        }
        Ok(worst)
    }

    /// Choi matrix `Σ |a⟩⟨b| ⊗ E(|a⟩⟨b|)` on `l` sites, with
    /// `E = R_𝔹` or `E(A) = L_𝔹(A)ᵀ`. `L_𝔹` itself is positive but only
    /// its output transpose is completely positive.
    pub fn edge_choi(&self, side: Side, l: usize) -> Result<CMatrix> {
        let d = window_dim(self.n(), l)?;
        let k = self.k();
        let start = match side {
            Side::L => -(l as isize),
            Side::R => 0,
        };
        let mut out = CMatrix::zeros(d * k, d * k);
        for a in 0..d {
            for b in 0..d {
                let obs = WindowObservable { start, len: l, matrix: unit(d, a, b) };
                let mut m = self.edge_map(side, &obs)?;
                if side == Side::L {
                    m = m.transpose();
                }
                out.view_mut((a * k, b * k), (k, k)).copy_from(&m);
            }
        }
        Ok(out)
    }
}

fn words_of(ops: &[CMatrix], l: usize, k: usize) -> Vec<CMatrix> {
    let mut words = vec![CMatrix::identity(k, k)];
    for _ in 0..l {
        words = words.iter().flat_map(|w| ops.iter().map(move |b| w * b)).collect();
    }
    words
}

fn block(a: &CMatrix, i: usize, j: usize, s: usize) -> CMatrix {
    a.view((i * s, j * s), (s, s)).into_owned()
}

/// `Σ A_{μν} B̂_μ S B̂_ν*`, contracting the first site last.
fn contract_r(ops: &[CMatrix], seed: &CMatrix, a: &CMatrix) -> CMatrix {
    let n = ops.len();
    if a.nrows() == 1 {
        return seed * a[(0, 0)];
    }
    let s = a.nrows() / n;
    let mut out = CMatrix::zeros(seed.nrows(), seed.ncols());
    for i in 0..n {
        for j in 0..n {
            let blk = block(a, i, j, s);
            if blk.iter().all(|z| *z == ZERO) {
                continue;
            }
            let inner = contract_r(ops, seed, &blk);
            out += &ops[i] * inner * ops[j].adjoint();
        }
    }
    out
}

/// `Σ A_{μν} B̂_ν* S B̂_μ`, moving the seed through the first site.
fn contract_l(ops: &[CMatrix], seed: &CMatrix, a: &CMatrix) -> CMatrix {
    let n = ops.len();
    if a.nrows() == 1 {
        return seed * a[(0, 0)];
    }
    let s = a.nrows() / n;
    let mut out = CMatrix::zeros(seed.nrows(), seed.ncols());
    for i in 0..n {
        for j in 0..n {
            let blk = block(a, i, j, s);
            if blk.iter().all(|z| *z == ZERO) {
                continue;
            }
            let next = ops[j].adjoint() * seed * &ops[i];
            out += contract_l(ops, &next, &blk);
        }
    }
    out
}

fn doubled_rec(ops: &[CMatrix], a: &CMatrix, k: usize) -> CMatrix {
    let n = ops.len();
    if a.nrows() == 1 {
        return CMatrix::identity(k * k, k * k) * a[(0, 0)];
    }
    let s = a.nrows() / n;
    let mut out = CMatrix::zeros(k * k, k * k);
    for i in 0..n {
        for j in 0..n {
            let blk = block(a, i, j, s);
            if blk.iter().all(|z| *z == ZERO) {
                continue;
            }
            out += kron(&ops[i], &ops[j].map(|z| z.conj())) * doubled_rec(ops, &blk, k);
        }
    }
    out
}

/// `D[b,a] = ⟨W_b, W_a⟩_HS`.
fn gram_density<I: Iterator<Item = CMatrix>>(ws: I) -> CMatrix {
    let cols: Vec<CMatrix> = ws.collect();
    let rows = cols.first().map(|m| m.len()).unwrap_or(0);
    let v = CMatrix::from_fn(rows, cols.len(), |r, col| cols[col].as_slice()[r]);
    let d = v.adjoint() * v;
    (&d + d.adjoint()) * c(0.5)
}

fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let h = (a + a.adjoint()) * c(0.5);
    let (vals, vecs) = eig_hermitian(&h)?;
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| c(v.max(0.0).sqrt()))));
    Ok(&vecs * d * vecs.adjoint())
}

fn mat_pow_usize(a: &CMatrix, mut e: usize) -> CMatrix {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::gamma_matrix;
    use crate::linalg::{op_norm, orthonormal_span, random_hermitian, random_matrix};
    use crate::transfer::decay_constants;
    use crate::model::{build_aklt, build_kappa_example, build_product};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e1() -> EdgeModel {
        EdgeModel::new(&build_kappa_example(1, 1, 1, 0.5, 2).unwrap()).unwrap()
    }

    fn sz() -> CMatrix {
        crate::linalg::diag_real(&[1.0, 0.0, -1.0])
    }

    /// Partial trace of the dense ground projection, as an oracle.
    fn dense_window(v: &KrausTuple, sites: usize, start: usize, len: usize) -> CMatrix {
        let frame = orthonormal_span(&gamma_matrix(v, sites).unwrap(), RANK_TOL);
        let f = frame.frame();
        let n = v.n();
        let (left, mid) = (n.pow(start as u32), n.pow(len as u32));
        let right = n.pow((sites - start - len) as u32);
        let mut out = CMatrix::zeros(mid, mid);
        for col in f.column_iter() {
            for a in 0..left {
                for r in 0..right {
                    for w in 0..mid {
                        for w2 in 0..mid {
                            let base = a * mid * right + r;
                            out[(w, w2)] += col[base + w * right] * col[base + w2 * right].conj();
                        }
                    }
                }
            }
        }
        out / c(f.ncols() as f64)
    }

    #[test]
    fn edge_maps_fix_the_identity() {
        let em = e1();
        let l = em.edge_map(Side::L, &WindowObservable::identity(-3, 3, 2).unwrap()).unwrap();
        assert!((l - &em.triple.rho).norm() < 1e-10);
        let r = em.edge_map(Side::R, &WindowObservable::identity(0, 3, 2).unwrap()).unwrap();
        assert!((r - &em.triple.e).norm() < 1e-10);
    }

    #[test]
    fn single_site_edge_map() {
        let em = e1();
        let a = WindowObservable::new(-1, 1, unit(2, 0, 0), 2).unwrap();
        let b = &em.tuple.b[0];
        let want = b.adjoint() * &em.triple.rho * b;
        assert!((em.edge_map(Side::L, &a).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn wrong_window_side_is_rejected() {
        let em = e1();
        let a = WindowObservable::identity(0, 2, 2).unwrap();
        assert!(matches!(em.edge_map(Side::L, &a), Err(GapError::Precondition(_))));
        assert!(matches!(em.edge_map(Side::R, &a.shifted(-2)), Err(GapError::Precondition(_))));
    }

    #[test]
    fn edge_map_range_fills_the_corner() {
        let em = e1();
        let l = em.l_b;
        let d = 2usize.pow(l as u32);
        for (side, start) in [(Side::L, -(l as isize)), (Side::R, 0)] {
            let mut cols = Vec::new();
            for a in 0..d {
                for b in 0..d {
                    let m = em.edge_map(side, &WindowObservable::new(start, l, unit(d, a, b), 2).unwrap()).unwrap();
                    cols.push(m);
                }
            }
            let k = em.k();
            let stack = CMatrix::from_fn(k * k, cols.len(), |r, col| cols[col].as_slice()[r]);
            let dim = orthonormal_span(&stack, 1e-10).dim();
            assert_eq!(dim, em.boundary_dim(side).pow(2), "side {}", side.label());
        }
    }

    #[test]
    fn choi_matrices_are_psd() {
        for t in [build_kappa_example(1, 1, 1, 0.5, 2).unwrap(), build_aklt()] {
            let em = EdgeModel::new(&t).unwrap();
            for side in [Side::L, Side::R] {
                for l in 1..=2 {
                    let vals = eigvals_hermitian(&em.edge_choi(side, l).unwrap()).unwrap();
                    assert!(vals[0] > -1e-12, "side {} l {l}: {}", side.label(), vals[0]);
                }
            }
        }
    }

    #[test]
    fn xi_states_are_normalised_and_positive() {
        let em = e1();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for side in [Side::L, Side::R] {
            let s = BoundaryState::random(side, em.boundary_dim(side), &mut rng);
            let start = if side == Side::L { -3 } else { 0 };
            let one = em.xi_state(&s, &WindowObservable::identity(start, 3, 2).unwrap()).unwrap();
            assert!((one - ONE).norm() < 1e-10);
            let d = em.xi_density(&s, 3).unwrap();
            assert!((d.trace() - ONE).norm() < 1e-10);
            assert!(eigvals_hermitian(&d).unwrap()[0] > -1e-12);
        }
    }

    #[test]
    fn xi_of_sigma_x_matches_gamma_sandwich() {
        let em = e1();
        let t = &em.tuple;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_matrix(&mut rng, 3, 1);
        let w = random_matrix(&mut rng, 3, 1);
        let x = t.p_hat_r() * u * w.adjoint() * t.p_hat_l();
        let norm = em.triple.phi(&(x.adjoint() * &em.triple.e * &x));
        let sl = em.sigma_lx(&x).unwrap();
        let sr = em.sigma_rx(&x).unwrap();
        let dc = decay_constants(&em.kraus, &em.triple, 200).unwrap();
        let a = random_hermitian(&mut rng, 4);
        let xl = em.xi_state(&sl, &WindowObservable::new(-2, 2, a.clone(), 2).unwrap()).unwrap();
        let xr = em.xi_state(&sr, &WindowObservable::new(0, 2, a.clone(), 2).unwrap()).unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for bulk in [4usize, 8, 16, 32] {
            let gl = em.gamma_expectation(&x, &x, Bulk::Sites(bulk), &a, Bulk::Sites(0)) / norm;
            let gr = em.gamma_expectation(&x, &x, Bulk::Sites(0), &a, Bulk::Sites(bulk)) / norm;
            let tol = dc.e_tilde_at(bulk) * dc.f * op_norm(&x).powi(2) * op_norm(&a) / norm.norm();
            let (dl, dr) = ((gl - xl).norm(), (gr - xr).norm());
            assert!(dl <= prev.0 && dr <= prev.1);
            assert!(dl < tol && dr < tol);
            prev = (dl, dr);
        }
        assert!(prev.0 < 1e-8 && prev.1 < 1e-8, "{prev:?}");
        let wide = em.gamma_expectation(&x, &x, Bulk::Infinite, &a, Bulk::Sites(0)) / norm;
        assert!((wide - xl).norm() < 1e-12);
    }

    #[test]
    fn omega_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [build_kappa_example(1, 1, 1, 0.5, 2).unwrap(), build_kappa_example(2, 1, 0, 0.5, 2).unwrap(), build_aklt()] {
            let em = EdgeModel::new(&t).unwrap();
            let n = em.n();
            for l in 1..=3 {
                let a = WindowObservable::new(7, l, random_hermitian(&mut rng, n.pow(l as u32)), n).unwrap();
                let w = em.omega_infty(&a).unwrap();
                assert!((em.omega_infty_corner(&a).unwrap() - w).norm() < 1e-10);
                assert!(em.translation_defect(&a).unwrap() < 1e-10);
                assert!(((em.omega_density(l).unwrap() * &a.matrix).trace() - w).norm() < 1e-12);
            }
            assert!((em.omega_infty(&WindowObservable::identity(0, 2, n).unwrap()).unwrap() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn product_and_aklt_bulk_values() {
        let p = EdgeModel::new(&build_product()).unwrap();
        let a = WindowObservable::new(0, 1, unit(2, 0, 0), 2).unwrap();
        assert!((p.omega_infty(&a).unwrap() - ONE).norm() < 1e-12);
        let ak = EdgeModel::new(&build_aklt()).unwrap();
        let zz = WindowObservable::product(0, &[sz(), sz()]).unwrap();
        assert!((ak.omega_infty(&zz).unwrap() - c(-4.0 / 9.0)).norm() < 1e-12);
    }

    #[test]
    fn window_density_matches_dense_partial_trace() {
        let em = e1();
        for (sites, start, len) in [(8, 0, 3), (8, 2, 3), (9, 6, 3), (6, 0, 6)] {
            let a = dense_window(&em.kraus, sites, start, len);
            let b = em.finite_window_density(sites, start, len).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
        let ak = EdgeModel::new(&build_aklt()).unwrap();
        let a = dense_window(&ak.kraus, 7, 1, 2);
        assert!((a - ak.finite_window_density(7, 1, 2).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn product_window_is_pure_and_fit_is_skipped() {
        let p = EdgeModel::new(&build_product()).unwrap();
        let sizes: Vec<usize> = (4..=9).collect();
        let wc = p.finite_chain_window(1, &sizes, 0, 3, 3).unwrap();
        let mut want = CMatrix::zeros(8, 8);
        want[(0, 0)] = ONE;
        assert!((&wc.density - &want).norm() < 1e-12);
        assert!(wc.fit.skipped.is_some());
        assert!((wc.support_floor - 1.0).abs() < 1e-12);
    }

    #[test]
    fn e1_window_series_decays() {
        let em = e1();
        let sizes: Vec<usize> = (6..=12).collect();
        let wc = em.finite_chain_window(4, &sizes, 0, 3, 6).unwrap();
        assert!(wc.fit.skipped.is_none());
        assert!(wc.fit.s > 0.0 && wc.fit.s < 1.0);
        assert!(wc.fit.dominated(1e-9));
        let floors: Vec<f64> = wc.support_profile.iter().map(|p| p.1).collect();
        assert!(floors.iter().all(|&f| f > 0.1), "{floors:?}");
    }

    #[test]
    fn correlations() {
        let ak = EdgeModel::new(&build_aklt()).unwrap();
        let o = WindowObservable::new(0, 1, sz(), 3).unwrap();
        let f = ak.correlation_decay(&o, &o, 16).unwrap();
        assert!((f.s - 1.0 / 3.0).abs() < 1e-9);
        assert!(f.dominated(1e-9));
        let id = WindowObservable::identity(0, 1, 3).unwrap();
        assert!(ak.correlation_decay(&id, &o, 10).unwrap().skipped.is_some());
        let em = e1();
        let p2 = WindowObservable::new(0, 1, unit(2, 1, 1), 2).unwrap();
        let f = em.correlation_decay(&p2, &p2, 12).unwrap();
        assert!(f.skipped.is_some() || f.s <= em.subleading + 1e-9);
    }

    #[test]
    fn translation_overlap_examples() {
        let p = EdgeModel::new(&build_product()).unwrap();
        let one = BoundaryState::new(Side::L, CMatrix::identity(1, 1)).unwrap();
        assert_eq!(p.translation_overlap(&one, 5).unwrap().map(|x| x.0), Some(1));
        let em = e1();
        let mm = BoundaryState::maximally_mixed(Side::L, 2);
        assert!(em.translation_overlap(&mm, 10).unwrap().unwrap().0 <= 3);
        let corner = BoundaryState::pure(Side::L, &[ZERO, ONE]).unwrap();
        assert!(em.translation_overlap(&corner, 10).unwrap().is_some());
    }

    #[test]
    fn distinguishability() {
        let em = e1();
        let a = BoundaryState::pure(Side::L, &[ONE, ZERO]).unwrap();
        let b = BoundaryState::pure(Side::L, &[ZERO, ONE]).unwrap();
        assert!(em.edge_distinguishability(&a, &a, None).unwrap() < 1e-12);
        let d: Vec<f64> = (1..=6).map(|l| em.edge_distinguishability(&a, &b, Some(l)).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(d[5] > 1.99 && d[5] <= 2.0 + 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for side in [Side::L, Side::R] {
            let s1 = BoundaryState::random(side, 2, &mut rng);
            let s2 = BoundaryState::random(side, 2, &mut rng);
            assert!(em.edge_distinguishability(&s1, &s2, None).unwrap() > 1e-6);
        }
        let r = BoundaryState::maximally_mixed(Side::R, 2);
        assert!(em.edge_distinguishability(&a, &r, None).is_err());
    }

    #[test]
    fn boundary_effect_decays() {
        let ak = EdgeModel::new(&build_aklt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = WindowObservable::new(0, 1, sz(), 3).unwrap();
        for side in [Side::L, Side::R] {
            let s = BoundaryState::random(side, 2, &mut rng);
            let f = ak.boundary_decay(&s, &o, 20).unwrap();
            assert!(f.skipped.is_none());
            assert!(f.s <= ak.subleading * (1.0 + 1e-6), "{}", f.s);
        }
    }

    #[test]
    fn xi_states_are_frustration_free() {
        let em = e1();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for side in [Side::L, Side::R] {
            let s = BoundaryState::random(side, 2, &mut rng);
            assert!(em.frustration_residual(&s, 3, 5).unwrap() < 1e-10);
        }
    }

    #[test]
    fn decay_fit_envelope() {
        let series: Vec<(usize, f64)> = (0..10).map(|i| (i, 3.0 * 0.4f64.powi(i as i32) * (1.0 + 0.01 * (i % 3) as f64))).collect();
        let f = DecayFit::fit(series, 0);
        assert!((f.s - 0.4).abs() < 0.01);
        assert!(f.dominated(1e-12));
        assert!(f.to_csv().starts_with("index,value\n0,"));
        let zero = DecayFit::fit(vec![(1, 0.0), (2, 0.0), (3, 0.0)], 0);
        assert_eq!(zero.skipped.as_deref(), Some("series vanishes identically"));
    }

    #[test]
    fn non_members_are_rejected() {
        let mut t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap();
        t.tetrad.wo.lambda[1] = c(0.9);
        assert!(EdgeModel::new(&t).is_err());
    }
}
