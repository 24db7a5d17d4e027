//! Dual Newton solver for the minimum-entropy problem, with isotropic
//! regularization, the vacuum floor and the solution caches.

use std::borrow::Cow;
use std::collections::VecDeque;

use crate::basis::{BasisKind, EvalTable, MomentBasis};
use crate::closure::{ansatz_values_into, hessian_from_values, integral_from_values, moments_from_values};
use crate::error::{Error, Result};
use crate::linalg::LowerFactor;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Gradient tolerance τ.
    pub tau: f64,
    /// Realizability safety ε_γ.
    pub epsilon_gamma: f64,
    /// Armijo slope factor ξ.
    pub xi: f64,
    pub max_iterations: usize,
    /// Ascending regularization parameters; the last must be 1.
    pub reg_sequence: Vec<f64>,
    pub rho_vac: f64,
    pub cache_capacity: usize,
    pub use_cache: bool,
    /// Smallest line-search step before the iteration is declared failed.
    pub min_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tau: 1e-9,
            epsilon_gamma: 0.1,
            xi: 1e-3,
            max_iterations: 200,
            reg_sequence: vec![1e-8, 1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.5, 1.0],
            rho_vac: 1e-6,
            cache_capacity: 64,
            use_cache: true,
            min_step: 2f64.powi(-30),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon_gamma > 0.0 && self.epsilon_gamma < 1.0) {
            return Err(Error::Config(format!("epsilon_gamma must lie in (0, 1), got {}", self.epsilon_gamma)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        if self.reg_sequence.last() != Some(&1.0) {
            return Err(Error::Config("regularization sequence must end with 1".into()));
        }
        if self.reg_sequence.windows(2).any(|w| w[0] >= w[1]) || self.reg_sequence[0] <= 0.0 {
            return Err(Error::Config("regularization sequence must be positive and ascending".into()));
        }
        if !(self.rho_vac >= 0.0) {
            return Err(Error::Config(format!("rho_vac must be non-negative, got {}", self.rho_vac)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheHit {
    Exact,
    Nearest,
    Miss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// 0 when the input was solved directly.
    pub regularization_r_used: f64,
    pub cache_hit: CacheHit,
    /// The regularized moments `u_r` when `regularization_r_used > 0`.
    pub regularized_moments: Option<Vec<f64>>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn needs_reg(iterations: usize, reason: impl Into<String>) -> Error {
    Error::NeedsRegularization {
        iterations,
        reason: reason.into(),
    }
}

/// Tolerance on the rescaled gradient that guarantees `‖q(α̃)‖ ≤ τ` for the
/// original problem after the density adjustment.
pub fn rescaled_tolerance(kind: BasisKind, n: usize, tau: f64, u_hat_norm: f64, rho: f64) -> f64 {
    match kind {
        BasisKind::FullMoment { .. } => tau / ((1.0 + u_hat_norm) * rho + tau),
        _ => {
            let sn = (n as f64).sqrt();
            tau / ((1.0 + sn * u_hat_norm) * rho + sn * tau)
        }
    }
}

/// Newton iteration on the rescaled dual problem.
///
/// Full-moment and partial-moment bases are preconditioned by a change of
/// basis `b̃ = T b` that is updated with the Cholesky factor of the Hessian
/// after every iteration. Hat functions keep their sparse Hessian.
pub fn solve_dual(basis: &MomentBasis, u: &[f64], config: &OptimizerConfig, guess: Option<&[f64]>) -> Result<SolveReport> {
    solve_dual_traced(basis, u, config, guess, None)
}

/// As [`solve_dual`], recording the rescaled dual objective at every iterate.
pub fn solve_dual_traced(
    basis: &MomentBasis,
    u: &[f64],
    config: &OptimizerConfig,
    guess: Option<&[f64]>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SolveReport> {
    let n = basis.n();
    let kind = basis.kind();
    let rho = basis.density(u);
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(needs_reg(0, format!("density {rho} is not positive")));
    }
    let one = basis.unit_multiplier();
    let log_rho = rho.ln();
    let u_hat: Vec<f64> = u.iter().map(|x| x / rho).collect();
    let tau_bar = rescaled_tolerance(kind, n, config.tau, norm2(&u_hat), rho);

    let mut beta_t: Vec<f64> = match guess {
        Some(g) if g.len() == n && g.iter().all(|x| x.is_finite()) => {
            g.iter().zip(&one).map(|(a, o)| a - o * log_rho).collect()
        }
        _ => basis.isotropic_multipliers(1.0)?,
    };

    let precondition = !kind.is_hat() && !basis.is_masslumped();
    let mut table: Cow<EvalTable> = Cow::Borrowed(basis.table());
    let mut transform = precondition.then(|| LowerFactor::identity(basis.hessian_format(), n));
    let mut u_t = u_hat.clone();
    let mut e = vec![0.0; table.len()];
    let mut trial = vec![0.0; n];
    let safety = 1.0 - config.epsilon_gamma;

    for iter in 0..=config.max_iterations {
        ansatz_values_into(&table, &beta_t, &mut e).map_err(|err| needs_reg(iter, err.to_string()))?;
        let m_t = moments_from_values(&table, &e);
        let h_t = hessian_from_values(&table, &e);
        let rho_m = integral_from_values(&table, &e);
        let p = rho_m - dot(&beta_t, &u_t);
        if let Some(t) = trace.as_deref_mut() {
            t.push(p);
        }
        let mut q_t: Vec<f64> = m_t.iter().zip(&u_t).map(|(m, u)| m - u).collect();

        let q = match &transform {
            Some(t) => {
                let mut q = q_t.clone();
                t.solve(&mut q);
                q
            }
            None => q_t.clone(),
        };
        let beta = match &transform {
            Some(t) => t.mul_transpose(&beta_t),
            None => beta_t.clone(),
        };

        let d_t = match transform.as_mut() {
            Some(t) => {
                let l = h_t.cholesky().map_err(|err| needs_reg(iter, err.to_string()))?;
                t.left_solve_by(&l);
                let tab = table.to_mut();
                for qi in 0..tab.len() {
                    let s = tab.starts[qi];
                    let w = tab.width;
                    l.solve_segment(s, &mut tab.values[qi * w..(qi + 1) * w]);
                }
                beta_t = l.mul_transpose(&beta_t);
                l.solve(&mut u_t);
                l.solve(&mut q_t);
                q_t.iter().map(|x| -x).collect::<Vec<f64>>()
            }
            None => {
                let neg: Vec<f64> = q_t.iter().map(|x| -x).collect();
                h_t.solve(&neg).map_err(|err| needs_reg(iter, err.to_string()))?
            }
        };
        if d_t.iter().any(|x| !x.is_finite()) {
            return Err(needs_reg(iter, "non-finite Newton direction"));
        }

        if norm2(&q) < tau_bar {
            let accept = match kind {
                BasisKind::FullMoment { .. } => {
                    let d = transform.as_ref().map_or_else(|| d_t.clone(), |t| t.mul_transpose(&d_t));
                    let d1: f64 = d.iter().map(|x| x.abs()).sum();
                    safety < (-(d1 + rho_m.ln().abs())).exp()
                }
                _ => {
                    let v: Vec<f64> = q
                        .iter()
                        .zip(&u_hat)
                        .map(|(q, u)| u - safety * (q + u) / rho_m)
                        .collect();
                    basis.is_realizable(&v).is_realizable()
                }
            };
            if accept {
                let shift = log_rho - rho_m.ln();
                let alpha = beta.iter().zip(&one).map(|(b, o)| b + o * shift).collect();
                return Ok(SolveReport {
                    alpha,
                    iterations: iter,
                    regularization_r_used: 0.0,
                    cache_hit: CacheHit::Miss,
                    regularized_moments: None,
                });
            }
        }
        if iter == config.max_iterations {
            break;
        }

        let slope = dot(&q_t, &d_t);
        let p_scale = rho_m + beta_t.iter().zip(&u_t).map(|(b, u)| (b * u).abs()).sum::<f64>();
        let p_noise = 16.0 * f64::EPSILON * p_scale;
        let mut zeta = 1.0;
        loop {
            trial.iter_mut().zip(beta_t.iter().zip(&d_t)).for_each(|(t, (b, d))| *t = b + zeta * d);
            let p_trial = match ansatz_values_into(&table, &trial, &mut e) {
                Ok(()) => integral_from_values(&table, &e) - dot(&trial, &u_t),
                Err(_) => f64::INFINITY,
            };
            // near the optimum the Armijo decrease drops below the rounding
            // level of p; the full Newton step is then kept if p does not
            // visibly increase or the step is tiny in the Hessian norm
            let roundoff_ok = zeta == 1.0 && (p_trial <= p + 4.0 * f64::EPSILON * p_scale || -slope <= p_noise);
            if p_trial < p + config.xi * zeta * slope || roundoff_ok {
                break;
            }
            zeta *= 0.5;
            if zeta < config.min_step {
                return Err(needs_reg(iter, "line search failed"));
            }
        }
        std::mem::swap(&mut beta_t, &mut trial);
    }
    Err(needs_reg(config.max_iterations, "iteration limit reached"))
}

/// `u_r = (1 − r) u + r G u`.
pub fn regularize(basis: &MomentBasis, u: &[f64], r: f64) -> Vec<f64> {
    let g = basis.iso_projection(u);
    u.iter().zip(&g).map(|(u, g)| (1.0 - r) * u + r * g).collect()
}

/// Solves for `u`, retrying with increasingly isotropic regularized moments
/// on failure. Only a non-positive density is an error.
pub fn solve_with_regularization(
    basis: &MomentBasis,
    u: &[f64],
    config: &OptimizerConfig,
    guess: Option<&[f64]>,
) -> Result<SolveReport> {
    let rho = basis.density(u);
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("cannot solve for moments with density {rho}")));
    }
    let mut last_reason = match solve_dual(basis, u, config, guess) {
        Ok(report) => return Ok(report),
        Err(e) => e.to_string(),
    };
    log::debug!("regularizing (ρ = {rho:.3e}): {last_reason}");
    for &r in &config.reg_sequence {
        if r >= 1.0 {
            log::debug!("falling back to isotropic multipliers ({last_reason})");
            return Ok(SolveReport {
                alpha: basis.isotropic_multipliers(rho)?,
                iterations: 0,
                regularization_r_used: r,
                cache_hit: CacheHit::Miss,
                regularized_moments: Some(basis.iso_projection(u)),
            });
        }
        let u_r = regularize(basis, u, r);
        match solve_dual(basis, &u_r, config, guess) {
            Ok(mut report) => {
                report.regularization_r_used = r;
                report.regularized_moments = Some(u_r);
                return Ok(report);
            }
            Err(e) => last_reason = e.to_string(),
        }
    }
    unreachable!("validated regularization sequences end with 1")
}

/// Replaces `u` by the isotropic moment of density `ρ_vac` if `ρ(u) < ρ_vac`.
pub fn apply_vacuum_floor(basis: &MomentBasis, u: &[f64], rho_vac: f64) -> Vec<f64> {
    let mut v = u.to_vec();
    apply_vacuum_floor_in_place(basis, &mut v, rho_vac);
    v
}

/// In-place vacuum floor; returns whether the floor was applied.
pub fn apply_vacuum_floor_in_place(basis: &MomentBasis, u: &mut [f64], rho_vac: f64) -> bool {
    let rho = basis.density(u);
    if rho < rho_vac || rho.is_nan() {
        let half = 0.5 * rho_vac;
        for (u, b) in u.iter_mut().zip(basis.isotropic_moment()) {
            *u = b * half;
        }
        true
    } else {
        false
    }
}

/// Last solve of one grid cell.
#[derive(Debug, Clone, Default)]
pub struct CellCache {
    entry: Option<(Vec<f64>, SolveReport)>,
}

impl CellCache {
    pub fn get(&self, u: &[f64]) -> Option<&SolveReport> {
        match &self.entry {
            Some((key, report)) if key.as_slice() == u => Some(report),
            _ => None,
        }
    }

    pub fn store(&mut self, u: &[f64], report: &SolveReport) {
        self.entry = Some((u.to_vec(), report.clone()));
    }

    pub fn clear(&mut self) {
        self.entry = None;
    }
}

/// Bounded FIFO of recent `(u, α)` pairs of one worker.
#[derive(Debug, Clone)]
pub struct RecentCache {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl RecentCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, u: &[f64], alpha: &[f64]) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((u.to_vec(), alpha.to_vec()));
    }

    /// Multipliers stored for the moment vector closest to `u` in 1-norm.
    pub fn nearest(&self, u: &[f64]) -> Option<&[f64]> {
        self.entries
            .iter()
            .map(|(k, a)| (k.iter().zip(u).map(|(x, y)| (x - y).abs()).sum::<f64>(), a))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, a)| a.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheLookup<'a> {
    Exact(&'a SolveReport),
    Nearest(&'a [f64]),
    Miss,
}

pub fn cache_lookup<'a>(cell: &'a CellCache, recent: &'a RecentCache, u: &[f64]) -> CacheLookup<'a> {
    if let Some(report) = cell.get(u) {
        CacheLookup::Exact(report)
    } else if let Some(alpha) = recent.nearest(u) {
        CacheLookup::Nearest(alpha)
    } else {
        CacheLookup::Miss
    }
}

/// Cache-aware regularized solve. Cold caches fall back to the isotropic
/// multipliers of `ρ(u)` as the initial guess.
pub fn solve_cached(
    basis: &MomentBasis,
    u: &[f64],
    config: &OptimizerConfig,
    cell: &mut CellCache,
    recent: &mut RecentCache,
) -> Result<SolveReport> {
    if !config.use_cache {
        return solve_with_regularization(basis, u, config, None);
    }
    let (guess, hit) = match cache_lookup(cell, recent, u) {
        CacheLookup::Exact(report) => {
            let mut report = report.clone();
            report.iterations = 0;
            report.cache_hit = CacheHit::Exact;
            return Ok(report);
        }
        CacheLookup::Nearest(alpha) => (Some(alpha.to_vec()), CacheHit::Nearest),
        CacheLookup::Miss => (None, CacheHit::Miss),
    };
    let mut report = solve_with_regularization(basis, u, config, guess.as_deref())?;
    report.cache_hit = hit;
    cell.store(u, &report);
    recent.push(u, &report.alpha);
    Ok(report)
}
