//! Numbered acceptance checks shared by `slabmom selftest` and the
//! acceptance test binary.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{BasisKind, MomentBasis};
use crate::closure::{dual_gradient, dual_objective, flux_jacobian, full_flux, hessian, moments_of};
use crate::error::Result;
use crate::harness::{l1_distance, run, RunConfig, RunRecord, SchemeKind};
use crate::linalg::HessianMatrix;
use crate::optimizer::{solve_dual, OptimizerConfig};
use crate::problems::ProblemKind;
use crate::standard::{cfl_dt, source_step_analytic};
use crate::transformed::{hf_clip, TransformedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub elapsed_s: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        write!(f, "{tag} [{:>2}] {} ({:.1} s): {}", self.id, self.name, self.elapsed_s, self.detail)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub slow: bool,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            slow: false,
            seed: 20240611,
        }
    }
}

type Check = fn(&SelftestOptions) -> Result<(bool, String)>;

pub const CHECKS: [(u32, &str, Check); 11] = [
    (1, "dual solver round trip", check_round_trip),
    (2, "derivative oracles", check_derivatives),
    (3, "analytic source step", check_source_step),
    (4, "scheme equivalence", check_scheme_equivalence),
    (5, "error table spot check", check_error_table),
    (6, "realizability preservation", check_realizability),
    (7, "entropy stability", check_entropy_stability),
    (8, "controller scaling", check_controller_scaling),
    (9, "masslumping", check_masslumping),
    (10, "time discretization orders", check_time_orders),
    (11, "hat clipping", check_hat_clipping),
];

pub fn run_check(id: u32, opts: &SelftestOptions) -> Outcome {
    let (id, name, check) = CHECKS
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .unwrap_or_else(|| panic!("no check numbered {id}"));
    if id == 5 && !opts.slow {
        return Outcome {
            id,
            name,
            status: Status::Skipped,
            detail: "long run, enable with --slow".into(),
            elapsed_s: 0.0,
        };
    }
    let clock = Instant::now();
    let (status, detail) = match check(opts) {
        Ok((true, d)) => (Status::Pass, d),
        Ok((false, d)) => (Status::Fail, d),
        Err(e) => (Status::Fail, format!("error: {e}")),
    };
    Outcome {
        id,
        name,
        status,
        detail,
        elapsed_s: clock.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &SelftestOptions, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    CHECKS
        .iter()
        .map(|c| {
            let o = run_check(c.0, opts);
            report(&o);
            o
        })
        .collect()
}

const M10: BasisKind = BasisKind::FullMoment { order: 10 };
const HFM10: BasisKind = BasisKind::HatFunction { intervals: 9 };
const PMM10: BasisKind = BasisKind::PartialMoment { intervals: 5 };

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn random_alpha(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn plane_source_config(basis: BasisKind, n_x: usize, tf: f64) -> RunConfig {
    RunConfig {
        problem: ProblemKind::PlaneSource,
        basis,
        n_x,
        tf: Some(tf),
        ..Default::default()
    }
}

fn transformed(mut c: RunConfig, tol: f64) -> RunConfig {
    c.scheme = SchemeKind::Transformed;
    c.transformed.tol = tol;
    c
}

fn standard(mut c: RunConfig, dt: f64) -> RunConfig {
    c.scheme = SchemeKind::Standard;
    c.dt = Some(dt);
    c
}

fn l1(a: &RunRecord, b: &RunRecord) -> f64 {
    l1_distance(a.grid.dx, &a.moments, &b.moments)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn check_round_trip(opts: &SelftestOptions) -> Result<(bool, String)> {
    let clock = Instant::now();
    let config = OptimizerConfig::default();
    let mut worst: f64 = 0.0;
    for (s, kind) in [M10, HFM10, PMM10].into_iter().enumerate() {
        let basis = MomentBasis::new(kind)?;
        let mut r = rng(opts.seed, 100 + s as u64);
        let alphas: Vec<Vec<f64>> = (0..100).map(|_| random_alpha(&mut r, basis.n())).collect();
        for a in &alphas {
            let u = moments_of(&basis, a)?;
            let rep = solve_dual(&basis, &u, &config, None)?;
            let back = moments_of(&basis, &rep.alpha)?;
            worst = worst.max(diff_norm2(&back, &u) / (1.0 + norm2(&u)));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-7 && secs < 10.0,
        format!("max relative moment residual {worst:.2e} (≤ 1e-7), {secs:.2} s (< 10 s)"),
    ))
}

fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    diff_norm2(approx, exact) / norm2(exact).max(f64::MIN_POSITIVE)
}

fn dense(h: &HessianMatrix) -> Vec<f64> {
    h.to_dense()
}

/// Central differences of a vector map; column `j` holds `∂f/∂α_j`, stored
/// row-major as `out[i*n + j]`.
fn fd_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, alpha: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = alpha.len();
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let mut p = alpha.to_vec();
        let mut m = alpha.to_vec();
        p[j] += h;
        m[j] -= h;
        let (fp, fm) = (f(&p)?, f(&m)?);
        for i in 0..n {
            out[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(out)
}

pub fn check_derivatives(opts: &SelftestOptions) -> Result<(bool, String)> {
    let clock = Instant::now();
    let h = 1e-5;
    let (mut e_h, mut e_g, mut e_j): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (s, kind) in [M10, HFM10, PMM10].into_iter().enumerate() {
        let basis = MomentBasis::new(kind)?;
        let n = basis.n();
        let mut r = rng(opts.seed, 200 + s as u64);
        for _ in 0..20 {
            let alpha = random_alpha(&mut r, n);
            let fd = fd_jacobian(|a| moments_of(&basis, a), &alpha, h)?;
            e_h = e_h.max(rel_err(&fd, &dense(&hessian(&basis, &alpha)?)));

            let u = moments_of(&basis, &random_alpha(&mut r, n))?;
            let grad = dual_gradient(&basis, &alpha, &u)?;
            let mut fd_grad = vec![0.0; n];
            for j in 0..n {
                let mut p = alpha.clone();
                let mut m = alpha.clone();
                p[j] += h;
                m[j] -= h;
                fd_grad[j] = (dual_objective(&basis, &p, &u)? - dual_objective(&basis, &m, &u)?) / (2.0 * h);
            }
            e_g = e_g.max(rel_err(&fd_grad, &grad));

            let fd = fd_jacobian(|a| full_flux(&basis, a), &alpha, h)?;
            e_j = e_j.max(rel_err(&fd, &flux_jacobian(&basis, &alpha)?));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    Ok((
        e_h <= 1e-5 && e_g <= 1e-6 && e_j <= 1e-5 && secs < 5.0,
        format!("Hessian {e_h:.2e} (≤ 1e-5), gradient {e_g:.2e} (≤ 1e-6), flux Jacobian {e_j:.2e} (≤ 1e-5), {secs:.2} s (< 5 s)"),
    ))
}

/// Classical RK4 on `u' = σ_s(Gu − u) − σ_a u + ⟨b⟩Q`.
pub fn source_ode_rk4(basis: &MomentBasis, u0: &[f64], ss: f64, sa: f64, q: f64, t: f64, dt: f64) -> Vec<f64> {
    let iso = basis.isotropic_moment();
    let f = |u: &[f64]| -> Vec<f64> {
        let g = basis.iso_projection(u);
        (0..u.len()).map(|l| ss * (g[l] - u[l]) - sa * u[l] + iso[l] * q).collect()
    };
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut u = u0.to_vec();
    let axpy = |u: &[f64], k: &[f64], c: f64| -> Vec<f64> { u.iter().zip(k).map(|(u, k)| u + c * k).collect() };
    for _ in 0..steps {
        let k1 = f(&u);
        let k2 = f(&axpy(&u, &k1, 0.5 * h));
        let k3 = f(&axpy(&u, &k2, 0.5 * h));
        let k4 = f(&axpy(&u, &k3, h));
        for l in 0..u.len() {
            u[l] += h / 6.0 * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l]);
        }
    }
    u
}

pub fn check_source_step(opts: &SelftestOptions) -> Result<(bool, String)> {
    let clock = Instant::now();
    let bases = [MomentBasis::new(M10)?, MomentBasis::new(HFM10)?, MomentBasis::new(PMM10)?];
    let mut r = rng(opts.seed, 300);
    let cases: Vec<(usize, Vec<f64>, f64, f64, f64, f64)> = (0..50)
        .map(|c| {
            let b = c % 3;
            let alpha = random_alpha(&mut r, bases[b].n());
            let ss = r.gen_range(0.0..3.0);
            let sa = if c % 5 == 0 { 0.0 } else { r.gen_range(0.0..3.0) };
            let q = r.gen_range(0.0..1.0);
            let t = r.gen_range(0.0..1.0);
            (b, alpha, ss, sa, q, t)
        })
        .collect();
    let errs: Vec<f64> = cases
        .par_iter()
        .map(|(b, alpha, ss, sa, q, t)| {
            let basis = &bases[*b];
            let u0 = moments_of(basis, alpha)?;
            let exact = source_step_analytic(basis, &u0, *ss, *sa, *q, *t);
            let oracle = source_ode_rk4(basis, &u0, *ss, *sa, *q, *t, 1e-5);
            Ok(rel_err(&exact, &oracle))
        })
        .collect::<Result<_>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let zero_sa = cases.iter().filter(|c| c.3 == 0.0).count();
    let secs = clock.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-8 && secs < 5.0,
        format!("max relative error {worst:.2e} (≤ 1e-8) over 50 cases ({zero_sa} with σ_a = 0), {secs:.2} s (< 5 s)"),
    ))
}

pub fn check_scheme_equivalence(_: &SelftestOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in [M10, HFM10, PMM10] {
        let base = plane_source_config(kind, 240, 0.5);
        let reference = run(&transformed(base.clone(), 1e-6))?;
        let cfl = cfl_dt(reference.grid.dx, base.optimizer.epsilon_gamma);
        let std_errs: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|d| run(&standard(base.clone(), cfl / d)).map(|r| l1(&r, &reference)))
            .collect::<Result<_>>()?;
        let new_errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&tol| run(&transformed(base.clone(), tol)).map(|r| l1(&r, &reference)))
            .collect::<Result<_>>()?;
        let std_ok = std_errs.windows(2).all(|w| w[1] < w[0]) && std_errs[2] <= 1e-3;
        let new_ok = new_errs.windows(2).all(|w| w[1] <= w[0]) && new_errs[2] <= 1e-4;
        ok &= std_ok && new_ok;
        detail.push(format!(
            "{kind}: standard {} {}, transformed {} {}",
            fmt_list(&std_errs),
            if std_ok { "ok" } else { "BAD" },
            fmt_list(&new_errs),
            if new_ok { "ok" } else { "BAD" }
        ));
    }
    Ok((ok, detail.join("; ")))
}

pub fn check_error_table(_: &SelftestOptions) -> Result<(bool, String)> {
    let base = plane_source_config(M10, 1200, 1.0);
    let reference = run(&transformed(base.clone(), 1e-6))?;
    let e_new = l1(&run(&transformed(base.clone(), 1e-3))?, &reference);
    let e_std = l1(&run(&standard(base, 0.0018))?, &reference);
    let within = |e: f64, target: f64| e <= 5.0 * target && e >= target / 5.0;
    Ok((
        within(e_new, 3.00e-5) && within(e_std, 4.61e-3),
        format!("transformed τ=1e-3: {e_new:.3e} (target 3.00e-05 ×/÷ 5), standard dt=0.0018: {e_std:.3e} (target 4.61e-03 ×/÷ 5)"),
    ))
}

pub fn check_realizability(_: &SelftestOptions) -> Result<(bool, String)> {
    let base = plane_source_config(BasisKind::HatFunction { intervals: 49 }, 240, 0.5);
    let cfl = cfl_dt(2.4 / 240.0, base.optimizer.epsilon_gamma);
    let rec = run(&standard(base, cfl))?;
    let stats = rec.standard_stats.expect("standard run");
    Ok((
        stats.min_component > 0.0 && stats.regularizations == 0,
        format!(
            "min component over all stages {:.3e} (> 0), regularizations {} (= 0), {} steps",
            stats.min_component,
            stats.regularizations,
            rec.n_t()
        ),
    ))
}

pub fn check_entropy_stability(_: &SelftestOptions) -> Result<(bool, String)> {
    let base = transformed(plane_source_config(HFM10, 240, 0.5), 1e-3);
    let mut relaxed_cfg = base.clone();
    relaxed_cfg.transformed.relaxed = true;
    let relaxed = run(&relaxed_cfg)?;
    let plain = run(&base)?;
    let d_relaxed = relaxed.entropy_error().unwrap();
    let d_plain = plain.entropy_error().unwrap();
    let mut max_increase = f64::NEG_INFINITY;
    let mut prev = relaxed.initial_entropy.unwrap();
    for e in relaxed.entropy.as_ref().unwrap() {
        max_increase = max_increase.max(e.h - prev);
        prev = e.h;
    }
    let ratio = d_plain / d_relaxed.max(f64::MIN_POSITIVE);
    Ok((
        d_relaxed <= 1e-9 && ratio >= 1e3 && max_increase <= 1e-9,
        format!(
            "relaxed ΔĤ {d_relaxed:.3e} (≤ 1e-9), unrelaxed ΔĤ {d_plain:.3e} (ratio {ratio:.2e} ≥ 1e3), largest per-step increase {max_increase:.3e} (≤ 1e-9), {} fallbacks",
            relaxed.relaxation_fallbacks
        ),
    ))
}

fn late_median_dt(rec: &RunRecord, from: f64, to: f64) -> f64 {
    median(
        rec.steps
            .iter()
            .filter(|s| s.t >= from && s.t <= to && s.t < to)
            .map(|s| s.dt)
            .collect(),
    )
}

pub fn check_controller_scaling(_: &SelftestOptions) -> Result<(bool, String)> {
    let base = plane_source_config(M10, 240, 0.5);
    let coarse = run(&transformed(base.clone(), 1e-4))?;
    let fine = run(&transformed(base, 1e-5))?;
    let (a, b) = (late_median_dt(&coarse, 0.4, 0.5), late_median_dt(&fine, 0.4, 0.5));
    let ratio = a / b;
    Ok((
        (1.7..=2.8).contains(&ratio),
        format!("median dt on [0.4, 0.5]: {a:.4e} (τ=1e-4) / {b:.4e} (τ=1e-5) = {ratio:.3} (∈ [1.7, 2.8])"),
    ))
}

pub fn check_masslumping(_: &SelftestOptions) -> Result<(bool, String)> {
    let ks = [10usize, 20, 40, 80];
    let mut errs = Vec::new();
    let mut times = (0.0, 0.0);
    let mut diagonal = true;
    for &k in &ks {
        let kind = BasisKind::HatFunction { intervals: k };
        diagonal &= matches!(
            hessian(&MomentBasis::masslumped(kind)?, &vec![0.3; k + 1])?,
            HessianMatrix::Diagonal(_)
        );
        let base = transformed(plane_source_config(kind, 240, 0.5), 1e-3);
        let full = run(&base)?;
        let mut lumped_cfg = base;
        lumped_cfg.masslumping = true;
        let lumped = run(&lumped_cfg)?;
        errs.push(l1(&full, &lumped));
        if k == 80 {
            times = (full.wall_s, lumped.wall_s);
        }
    }
    let h: Vec<f64> = ks.iter().map(|&k| 2.0 / k as f64).collect();
    let order = fitted_order(&h, &errs);
    Ok((
        order >= 1.7 && diagonal && times.1 < times.0,
        format!(
            "L1 errors {} for k = {ks:?}, fitted order {order:.2} (≥ 1.7); diagonal Hessians: {diagonal}; k=80 wall time {:.2} s lumped vs {:.2} s full",
            fmt_list(&errs),
            times.1,
            times.0
        ),
    ))
}

pub fn check_time_orders(_: &SelftestOptions) -> Result<(bool, String)> {
    let base = RunConfig {
        problem: ProblemKind::SourceBeam,
        basis: HFM10,
        n_x: 120,
        tf: Some(0.2),
        ..Default::default()
    };
    let cfl = cfl_dt(3.0 / 120.0, base.optimizer.epsilon_gamma);
    let divisors = [4.0, 8.0, 16.0];
    let h: Vec<f64> = divisors.iter().map(|d| cfl / d).collect();

    let new_fixed = |dt: f64| {
        let mut c = base.clone();
        c.scheme = SchemeKind::Transformed;
        c.dt = Some(dt);
        run(&c)
    };
    let mut detail = Vec::new();
    let new_order = match new_fixed(cfl / 64.0) {
        Ok(reference) => {
            let errs: Vec<f64> = h
                .iter()
                .map(|&dt| new_fixed(dt).map(|r| l1(&r, &reference)))
                .collect::<Result<_>>()?;
            let order = fitted_order(&h, &errs);
            detail.push(format!("transformed errors {} order {order:.2} (∈ [2.6, 3.3])", fmt_list(&errs)));
            Some(order)
        }
        Err(e) => {
            detail.push(format!("transformed fixed-step run failed: {e}"));
            None
        }
    };
    let reference = run(&standard(base.clone(), cfl / 64.0))?;
    let errs: Vec<f64> = h
        .iter()
        .map(|&dt| run(&standard(base.clone(), dt)).map(|r| l1(&r, &reference)))
        .collect::<Result<_>>()?;
    let std_order = fitted_order(&h, &errs);
    detail.push(format!("standard errors {} order {std_order:.2} (∈ [1.7, 2.2])", fmt_list(&errs)));
    let ok = new_order.is_some_and(|o| (2.6..=3.3).contains(&o)) && (1.7..=2.2).contains(&std_order);
    Ok((ok, detail.join("; ")))
}

pub fn check_hat_clipping(_: &SelftestOptions) -> Result<(bool, String)> {
    let basis = MomentBasis::new(HFM10)?;
    // vanishing density on the backward half, an ordinary distribution elsewhere
    let alpha = vec![-1500.0, -1200.0, -2000.0, -1100.0, -1000.0, -3.0, -1.0, 0.5, 1.0, 2.0];
    let mut clipped = alpha.clone();
    let changed = hf_clip(&mut clipped, -1000.0);
    let before = moments_of(&basis, &alpha)?;
    let after = moments_of(&basis, &clipped)?;
    let iso = basis.isotropic_moment();
    // compare in logarithms: e^{-1000} is below the smallest double
    let moments_ok = before.iter().zip(&after).zip(&iso).all(|((a, b), phi)| {
        let d = (a - b).abs();
        d == 0.0 || d.ln() <= 2f64.ln() - 1000.0 + phi.ln()
    });
    let max_diff = before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let base = RunConfig {
        problem: ProblemKind::SourceBeam,
        basis: HFM10,
        n_x: 120,
        tf: Some(1.0),
        ..Default::default()
    };
    let plain = run(&base)?;
    let mut c = base;
    c.transformed.hf_clip = true;
    let clipped_run = run(&c)?;
    let dist = l1(&plain, &clipped_run);
    Ok((
        changed && moments_ok && dist <= 1e-4,
        format!(
            "moment change after clipping {max_diff:.3e} (≤ 2e^-1000⟨φ⟩), clipped-vs-plain source-beam L1 {dist:.3e} (≤ 1e-4), {} clipped steps",
            clipped_run.clipped_steps
        ),
    ))
}

/// Regularized-vs-plain distance for the isotropic Hessian regularization
/// study on the source beam.
pub fn hessian_regularization_distance(basis: BasisKind, n_x: usize, tf: f64, eps: f64, tol: f64) -> Result<f64> {
    let base = RunConfig {
        problem: ProblemKind::SourceBeam,
        basis,
        n_x,
        tf: Some(tf),
        scheme: SchemeKind::Transformed,
        transformed: TransformedConfig {
            tol,
            ..Default::default()
        },
        ..Default::default()
    };
    let plain = run(&base)?;
    let mut c = base;
    c.transformed.hessian_reg = eps;
    Ok(l1(&plain, &run(&c)?))
}
