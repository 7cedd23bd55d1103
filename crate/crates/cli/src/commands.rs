//! Subcommand pipelines.

use gaplab_core::ground::condition4_data;
use gaplab_core::hamiltonian::{gap_certificate, search_certificate, spectrum, Caps, GapCertificate, SpectrumMethod};
use gaplab_core::linalg::{diag_real, eigvals_hermitian, random_hermitian, RANK_TOL};
use gaplab_core::model::{validate_classa, MembershipReport, MEMBERSHIP_TOL};
use gaplab_core::states::{STATE_TOL, WINDOW_CAP};
use gaplab_core::transfer::{check_condition2, decay_constants, fixed_point_triple, transfer_matrix_rep};
use gaplab_core::{BoundaryState, CMatrix, ClassATuple, DecayFit, EdgeModel, GapError, KrausTuple, Side, WindowObservable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::model_io::{LoadedModel, ModelFile};
use crate::report::{csv, exact, float, num, write_file, Outcome};
use crate::{Args, CliError, EXIT_OK};

const CONDITION4_NMAX: usize = 8;
const DECAY_NMAX: usize = 200;
const RADIUS_TOL: f64 = 1e-8;
const TRIPLE_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-9;
const L_SEARCH_MIN: usize = 2;
const L_SEARCH_SPAN: usize = 4;
const L_SEARCH_MAX: usize = 8;

const WINDOW_LEN: usize = 3;
const STATES_NMAX: usize = 12;
const FLOOR_L_MAX: usize = 6;
const CORR_R_MAX: usize = 24;
const BOUNDARY_N_MAX: usize = 24;
const RATE_SLACK: f64 = 0.05;
const SAMPLES: usize = 10;
const OVERLAP_NMAX: usize = 10;
const INV_TOL: f64 = 1e-10;
const DISTINCT_TOL: f64 = 1e-6;

fn tetrad_json(rep: &MembershipReport) -> Value {
    let checks: Vec<Value> = rep
        .tetrad
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "residual": num(c.residual, c.tol), "pass": c.pass }))
        .collect();
    json!({
        "accepted": rep.tetrad.accepted,
        "l_check": exact(rep.tetrad.l_check),
        "checks": checks,
        "reasons": rep.tetrad.reasons,
    })
}

fn membership_json(rep: &MembershipReport) -> Value {
    json!({
        "member": rep.member,
        "residuals": rep.membership_residuals.iter().map(|&r| num(r, MEMBERSHIP_TOL)).collect::<Vec<_>>(),
        "l_b": rep.l_b.map(exact),
        "transfer_radius": num(rep.transfer_radius, RADIUS_TOL),
        "reasons": rep.reasons,
    })
}

/// Runs membership and stores it; returns the report and `l_B` for members.
fn membership(out: &mut Outcome, t: &ClassATuple) -> Result<(MembershipReport, Option<usize>), CliError> {
    let rep = out.timings.time("membership", || validate_classa(t))?;
    out.stages.insert("tetrad".into(), tetrad_json(&rep));
    out.stages.insert("membership".into(), membership_json(&rep));
    if !rep.member {
        for r in &rep.reasons {
            out.reject(r.clone());
        }
        return Ok((rep, None));
    }
    let l_b = rep.l_b;
    Ok((rep, l_b))
}

fn parameters(args: &Args, caps: Caps, extra: Value) -> Value {
    let mut p = json!({ "seed": args.seed, "dense_cap": caps.dense_matrix, "vector_cap": caps.vector });
    if let (Value::Object(p), Value::Object(e)) = (&mut p, extra) {
        p.extend(e);
    }
    p
}

pub fn validate(model: &LoadedModel, args: &Args, caps: Caps) -> Result<Outcome, CliError> {
    let t = &model.tuple;
    let nmax = args.nmax.map_or(CONDITION4_NMAX, |v| v as usize);
    let mut out = Outcome::new("validate", model, parameters(args, caps, json!({ "nmax": nmax })));
    let (rep, l_b) = membership(&mut out, t)?;
    let v = t.kraus();
    if rep.tetrad.accepted {
        let c2 = out.timings.time("condition2", || check_condition2(&v, &t.p_hat_r(), &t.p_hat_l(), args.seed));
        let items: Vec<Value> =
            c2.items.iter().map(|i| json!({ "item": i.item, "status": i.status.label(), "detail": i.detail })).collect();
        out.stages.insert("condition2".into(), json!({ "all_pass": c2.all_pass(), "items": items }));
    }
    let Some(l_b) = l_b else { return Ok(out) };

    let expected = t.n0 * t.n0 * (t.tetrad.k_r() + 1) * (t.tetrad.k_l() + 1);
    let kn = rep.kn_dim.unwrap_or(0);
    out.stages.insert(
        "condition3".into(),
        json!({ "l_b": exact(l_b), "kn_dim": exact(kn), "expected": exact(expected), "holds": kn == expected }),
    );

    let c4 = out.timings.time("condition4", || condition4_data(t, nmax))?;
    out.stages.insert(
        "condition4".into(),
        json!({
            "l_b": exact(c4.l_b),
            "n_max": nmax,
            "min_singular": num(c4.min_singular, RANK_TOL),
            "max_escape": num(c4.max_escape, gaplab_core::ground::SUBSPACE_TOL),
            "holds": c4.holds,
        }),
    );

    match out.timings.time("triple", || fixed_point_triple(&v, &t.p_hat_r(), &t.p_hat_l())) {
        Ok(triple) => {
            let dc = out.timings.time("decay_constants", || decay_constants(&v, &triple, DECAY_NMAX))?;
            out.stages.insert(
                "triple".into(),
                json!({
                    "s": num(triple.s, TRIPLE_TOL),
                    "s_prime": num(triple.s_prime, TRIPLE_TOL),
                    "resolvent_bound": num(triple.resolvent_bound, TRIPLE_TOL),
                    "support_residual_e": num(triple.support_residuals.0, TRIPLE_TOL),
                    "support_residual_rho": num(triple.support_residuals.1, TRIPLE_TOL),
                    "projector_residual": num(triple.projector_residual, TRIPLE_TOL),
                    "a": num(dc.a, TRIPLE_TOL),
                    "c": num(dc.c, TRIPLE_TOL),
                    "f": num(dc.f, TRIPLE_TOL),
                    "l": exact(dc.l),
                }),
            );
        }
        Err(e) => out.reject(e.to_string()),
    }
    Ok(out)
}

fn certificate_json(cert: &GapCertificate) -> Value {
    json!({
        "m": cert.m,
        "l": cert.l,
        "bound": num(cert.bound, GAP_TOL),
        "gamma_lm": num(cert.gamma_lm, GAP_TOL),
        "epsilon_l": num(cert.epsilon_l, GAP_TOL),
        "epsilon_source": if cert.epsilon_numeric { "numeric" } else { "analytic" },
        "epsilon_threshold": num(1.0 / (cert.l as f64).sqrt(), 0.0),
        "valid_from": cert.valid_from,
    })
}

fn method_label(m: SpectrumMethod) -> &'static str {
    match m {
        SpectrumMethod::Dense => "dense",
        SpectrumMethod::Lanczos => "lanczos",
    }
}

pub fn certify(model: &LoadedModel, args: &Args, caps: Caps) -> Result<Outcome, CliError> {
    let t = &model.tuple;
    let mut out = Outcome::new(
        "certify",
        model,
        parameters(args, caps, json!({ "m": args.m, "l": args.l, "nmax": args.nmax })),
    );
    let (_, l_b) = membership(&mut out, t)?;
    let Some(l_b) = l_b else { return Ok(out) };
    let v = t.kraus();
    let m = args.m.map_or(2 * l_b, |x| x as usize);
    let triple = out.timings.time("triple", || fixed_point_triple(&v, &t.p_hat_r(), &t.p_hat_l()))?;
    let dc = out.timings.time("decay_constants", || decay_constants(&v, &triple, DECAY_NMAX))?;
    let found = out.timings.time("certificate", || match args.l {
        Some(l) => gap_certificate(&v, m, l as usize, &dc, caps),
        None => search_certificate(&v, m, m.max(L_SEARCH_MIN), (m + L_SEARCH_SPAN).max(L_SEARCH_MAX), &dc, caps),
    });
    let cert = match found {
        Ok(c) => c,
        Err(e @ (GapError::MartingaleFails(_) | GapError::CapExceeded { .. } | GapError::NotFound(_))) => {
            out.stages.insert("certificate".into(), json!({ "m": m, "found": false, "error": e.to_string() }));
            out.reject(format!("no-certificate: {e}"));
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let mut cj = certificate_json(&cert);
    cj["found"] = json!(true);
    out.stages.insert("certificate".into(), cj);

    let n_max = args.nmax.map_or(cert.valid_from + 1, |x| x as usize);
    let mut rows = Vec::new();
    let mut unsound = Vec::new();
    for big_n in m..=n_max {
        let res = out.timings.time("exact_gaps", || spectrum(&v, m, big_n, caps, big_n as u64));
        let claimed = big_n >= cert.valid_from;
        match res {
            Ok(rep) => {
                let holds = rep.gap.is_none_or(|g| g >= cert.bound - GAP_TOL);
                if claimed && !holds {
                    unsound.push(big_n);
                }
                rows.push(json!({
                    "n": big_n,
                    "method": method_label(rep.method),
                    "gap": rep.gap.map(|g| num(g, GAP_TOL)),
                    "kernel_dim": exact(rep.kernel_dim),
                    "claimed": claimed,
                    "holds": holds,
                }));
            }
            Err(e @ GapError::CapExceeded { .. }) => rows.push(json!({ "n": big_n, "skipped": e.to_string() })),
            Err(e) => return Err(e.into()),
        }
    }
    out.stages.insert("exact_comparison".into(), json!({ "n_max": n_max, "rows": rows }));
    if !unsound.is_empty() {
        out.reject(format!("exact gap below the certificate at N = {unsound:?}"));
    }
    Ok(out)
}

fn fit_json(file: &str, fit: &DecayFit) -> Value {
    json!({
        "file": file,
        "points": fit.series.len(),
        "offset": fit.offset,
        "c": num(fit.c, fit.residual),
        "s": num(fit.s, fit.residual),
        "residual": float(fit.residual),
        "skipped": fit.skipped,
    })
}

struct Suite(Vec<Value>, bool);

impl Suite {
    fn check(&mut self, name: &str, value: f64, tol: f64, pass: bool) {
        self.1 &= pass;
        self.0.push(json!({ "name": name, "value": num(value, tol), "pass": pass }));
    }
}

/// `S^z`-like single-site observable `diag((n−1)/2 − μ)`.
fn spin_z(n: usize) -> CMatrix {
    let half = (n as f64 - 1.0) / 2.0;
    diag_real(&(0..n).map(|mu| half - mu as f64).collect::<Vec<_>>())
}

fn rate_ok(fit: &DecayFit, subleading: f64) -> (f64, bool) {
    match fit.skipped {
        Some(_) => (0.0, true),
        None => (fit.s, fit.s <= subleading * (1.0 + RATE_SLACK) + 1e-12),
    }
}

fn largest_window(n: usize, l_max: usize) -> usize {
    (1..=l_max).take_while(|&l| n.checked_pow(l as u32).is_some_and(|d| d <= WINDOW_CAP)).last().unwrap_or(1)
}

pub fn states(model: &LoadedModel, args: &Args, caps: Caps) -> Result<Outcome, CliError> {
    let t = &model.tuple;
    let len = args.l.map_or(WINDOW_LEN, |x| x as usize);
    let nmax = args.nmax.map_or(STATES_NMAX, |x| x as usize);
    let mut out = Outcome::new("states", model, parameters(args, caps, json!({ "m": args.m, "l": len, "nmax": nmax })));
    out.default_dir = Some("gaplab-out");
    let (_, l_b) = membership(&mut out, t)?;
    let Some(l_b) = l_b else { return Ok(out) };
    let em = out.timings.time("edge_model", || EdgeModel::new(t))?;
    let n = em.n();
    let m = args.m.map_or(l_b, |x| x as usize);
    if n.checked_pow(len as u32).is_none_or(|d| d > WINDOW_CAP) {
        return Err(CliError::input(format!("window length {len} exceeds the window cap for n = {n}")));
    }
    let sizes: Vec<usize> = (len + 3..=nmax).collect();
    if sizes.len() < 2 {
        return Err(CliError::input(format!("--nmax {nmax} leaves fewer than two chain sizes above l + 2 = {}", len + 2)));
    }
    let sub = em.subleading;
    let mut suite = Suite(vec![], true);
    let mut diag = serde_json::Map::new();

    let floor_l = largest_window(n, FLOOR_L_MAX);
    let wc = out.timings.time("window", || em.finite_chain_window(m, &sizes, 0, len, floor_l))?;
    out.files.push(("window_convergence.csv".into(), wc.fit.to_csv()));
    out.files.push(("support_profile.csv".into(), csv(wc.support_profile.iter().cloned())));
    let mut wj = fit_json("window_convergence.csv", &wc.fit);
    wj["window"] = json!([0, len - 1]);
    wj["support_floor"] = num(wc.support_floor, STATE_TOL);
    diag.insert("window_convergence".into(), wj);
    suite.check("window_envelope", wc.fit.c, 1e-9, wc.fit.dominated(1e-9));
    let tail: Vec<f64> = wc.fit.series.iter().skip(gaplab_core::states::BURN_IN).map(|p| p.1).collect();
    let worst_rise = tail.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    suite.check("window_monotone", worst_rise, 1e-12, worst_rise <= 1e-12);
    suite.check("support_floor_positive", wc.support_floor, STATE_TOL, wc.support_floor > STATE_TOL);

    let sz = WindowObservable::new(0, 1, spin_z(n), n)?;
    let corr = out.timings.time("correlation", || em.correlation_decay(&sz, &sz, CORR_R_MAX))?;
    out.files.push(("correlation.csv".into(), corr.to_csv()));
    diag.insert("correlation".into(), fit_json("correlation.csv", &corr));
    let (s, ok) = rate_ok(&corr, sub);
    suite.check("correlation_rate", s, sub * RATE_SLACK, ok);

    let id = WindowObservable::identity(0, 1, n)?;
    let corr_id = out.timings.time("correlation", || em.correlation_decay(&id, &sz, CORR_R_MAX))?;
    out.files.push(("correlation_identity.csv".into(), corr_id.to_csv()));
    diag.insert("correlation_identity".into(), fit_json("correlation_identity.csv", &corr_id));
    let id_max = corr_id.series.iter().map(|p| p.1).fold(0.0, f64::max);
    suite.check("identity_correlation_vanishes", id_max, INV_TOL, corr_id.skipped.is_some());

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for side in [Side::L, Side::R] {
        let dim = em.boundary_dim(side);
        let sigma = BoundaryState::random(side, dim, &mut rng);
        let start = if side == Side::L { -1 } else { 0 };
        let obs = WindowObservable::new(start, 1, spin_z(n), n)?;
        let fit = out.timings.time("boundary_decay", || em.boundary_decay(&sigma, &obs, BOUNDARY_N_MAX))?;
        let file = format!("boundary_decay_{}.csv", side.label());
        out.files.push((file.clone(), fit.to_csv()));
        diag.insert(format!("boundary_decay_{}", side.label()), fit_json(&file, &fit));
        let (s, ok) = rate_ok(&fit, sub);
        suite.check(&format!("boundary_rate_{}", side.label()), s, sub * RATE_SLACK, ok);
    }
    diag.insert("subleading_modulus".into(), num(sub, RANK_TOL));
    out.stages.insert("diagnostics".into(), json!(diag));

    let sampled = out.timings.time("invariants", || sampled_invariants(&em, m, &mut rng));
    for (name, value, tol, pass) in sampled? {
        suite.check(name, value, tol, pass);
    }
    out.stages.insert("invariants".into(), json!({ "all_pass": suite.1, "checks": suite.0 }));
    if !suite.1 {
        out.reject("invariant suite failed");
    }
    Ok(out)
}

type Row = (&'static str, f64, f64, bool);

fn sampled_invariants(em: &EdgeModel, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Row>, CliError> {
    let n = em.n();
    let l = m.min(largest_window(n, FLOOR_L_MAX));
    let ff_l = (m + 1).min(largest_window(n, FLOOR_L_MAX));
    let mut state_err = 0.0f64;
    let mut ff = 0.0f64;
    let mut first_overlap = 0usize;
    let mut missing = 0usize;
    let mut min_dist = f64::INFINITY;
    let mut unit_err = 0.0f64;
    for side in [Side::L, Side::R] {
        let dim = em.boundary_dim(side);
        let start = if side == Side::L { -(l as isize) } else { 0 };
        let one = em.edge_map(side, &WindowObservable::identity(start, l, n)?)?;
        let target = if side == Side::L { &em.triple.rho } else { &em.triple.e };
        unit_err = unit_err.max((one - target).norm());
        for _ in 0..SAMPLES {
            let s1 = BoundaryState::random(side, dim, rng);
            let d = em.xi_density(&s1, l)?;
            let low = eigvals_hermitian(&d)?.first().cloned().unwrap_or(0.0);
            state_err = state_err.max((d.trace().re - 1.0).abs()).max((-low).max(0.0));
            if ff_l >= m {
                ff = ff.max(em.frustration_residual(&s1, m, ff_l)?);
            }
            match em.translation_overlap(&s1, OVERLAP_NMAX)? {
                Some((k, _)) => first_overlap = first_overlap.max(k),
                None => missing += 1,
            }
            if dim > 1 {
                let s2 = BoundaryState::random(side, dim, rng);
                min_dist = min_dist.min(em.edge_distinguishability(&s1, &s2, Some(em.l_b.min(l.max(1))))?);
            }
        }
    }
    let mut omega_err = 0.0f64;
    let mut defect = 0.0f64;
    for _ in 0..SAMPLES {
        let a = WindowObservable::new(3, l, random_hermitian(rng, n.pow(l as u32)), n)?;
        omega_err = omega_err.max((em.omega_infty(&a)? - em.omega_infty_corner(&a)?).norm());
        defect = defect.max(em.translation_defect(&a)?);
    }
    let mut rows = vec![
        ("xi_states_are_states", state_err, STATE_TOL, state_err <= STATE_TOL),
        ("edge_map_units", unit_err, INV_TOL, unit_err <= INV_TOL),
        ("omega_corner_form", omega_err, INV_TOL, omega_err <= INV_TOL),
        ("translation_invariance", defect, INV_TOL, defect <= INV_TOL),
        ("frustration_free", ff, INV_TOL, ff <= INV_TOL),
        ("translation_overlap_found", missing as f64, 0.0, missing == 0),
        ("translation_overlap_max_n", first_overlap as f64, OVERLAP_NMAX as f64, first_overlap <= OVERLAP_NMAX),
    ];
    if min_dist.is_finite() {
        rows.push(("edge_distinguishability", min_dist, DISTINCT_TOL, min_dist > DISTINCT_TOL));
    }
    Ok(rows)
}

fn matrix_json(m: &CMatrix) -> Value {
    json!((0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn export(model: &LoadedModel, args: &Args, caps: Caps) -> Result<Outcome, CliError> {
    let t = &model.tuple;
    let mut out = Outcome::new("export", model, parameters(args, caps, json!({})));
    out.default_dir = Some("gaplab-export");
    let v: KrausTuple = t.kraus();
    let rep = out.timings.time("transfer", || transfer_matrix_rep(&v))?;
    let spectrum_csv = csv(rep.eigenvalues.iter().enumerate().map(|(i, z)| (i, z.norm())));
    out.files.push(("transfer_spectrum.csv".into(), spectrum_csv));
    let eig: Vec<Value> = rep.eigenvalues.iter().map(|z| json!([z.re, z.im])).collect();
    out.stages.insert(
        "transfer".into(),
        json!({
            "file": "transfer_spectrum.csv",
            "spectral_radius": num(rep.spectral_radius, RADIUS_TOL),
            "peripheral_count": exact(rep.peripheral.len()),
            "eigenvalues": { "value": eig, "tol": RANK_TOL },
        }),
    );
    let (_, l_b) = membership(&mut out, t)?;
    if l_b.is_none() {
        return Ok(out);
    }
    let triple = out.timings.time("triple", || fixed_point_triple(&v, &t.p_hat_r(), &t.p_hat_l()))?;
    let fixed = json!({
        "e": { "value": matrix_json(&triple.e), "tol": TRIPLE_TOL },
        "rho": { "value": matrix_json(&triple.rho), "tol": TRIPLE_TOL },
        "s": num(triple.s, TRIPLE_TOL),
        "s_prime": num(triple.s_prime, TRIPLE_TOL),
    });
    out.files.push(("fixed_points.json".into(), serde_json::to_string_pretty(&fixed).expect("serialises") + "\n"));
    out.stages.insert("fixed_points".into(), json!({ "file": "fixed_points.json", "s": num(triple.s, TRIPLE_TOL) }));
    Ok(out)
}

/// Writes the model file form; no report.
pub fn example(model: &LoadedModel, args: &Args) -> Result<u8, CliError> {
    let text = serde_json::to_string_pretty(&ModelFile::from_tuple(&model.tuple)).expect("model serialises") + "\n";
    if let Some(dir) = &args.out {
        write_file(dir, "model.json", &text)?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}
