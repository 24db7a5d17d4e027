//! Finite-volume scheme evolved directly in the multipliers `α`:
//! `α' = H(α)⁻¹ (s(u(α)) − flux divergence)`, integrated with an adaptive
//! Bogacki-Shampine pair, optional entropy relaxation and hat clipping.

use std::time::Instant;

use rayon::prelude::*;

use crate::basis::MomentBasis;
use crate::closure::{cell_quantities, entropy_from_table, mass_matrix};
use crate::error::{Error, Result};
use crate::linalg::HessianMatrix;
use crate::problems::Discretization;
use crate::standard::flux_divergence;

/// Bogacki-Shampine 3(2): nodes, stage coefficients and both weight sets.
pub const BS_C: [f64; 4] = [0.0, 0.5, 0.75, 1.0];
pub const BS_A: [[f64; 3]; 3] = [[0.5, 0.0, 0.0], [0.0, 0.75, 0.0], [2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0]];
pub const BS_B3: [f64; 4] = [2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0];
pub const BS_B2: [f64; 4] = [7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125];

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedConfig {
    /// Adaptive tolerance, used as both absolute and relative tolerance.
    pub tol: f64,
    /// Multiple of the mass matrix added to every Hessian (0 disables).
    pub hessian_reg: f64,
    pub hf_clip: bool,
    pub hf_clip_dt_min: f64,
    pub hf_clip_alpha_min: f64,
    pub relaxed: bool,
    pub bisection_tol: f64,
    pub relax_bracket: (f64, f64),
    pub dt_initial: f64,
    pub dt_min: f64,
    /// Constant step size; disables adaptivity.
    pub fixed_dt: Option<f64>,
    pub controller: StepController,
}

impl Default for TransformedConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            hessian_reg: 0.0,
            hf_clip: false,
            hf_clip_dt_min: 0.01,
            hf_clip_alpha_min: -1000.0,
            relaxed: false,
            bisection_tol: 1e-12,
            relax_bracket: (0.5, 1.5),
            dt_initial: 1e-15,
            dt_min: 1e-18,
            fixed_dt: None,
            controller: StepController::default(),
        }
    }
}

impl TransformedConfig {
    pub fn validate(&self, basis: &MomentBasis) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.hessian_reg >= 0.0) {
            return Err(Error::Config(format!("Hessian regularization must be ≥ 0, got {}", self.hessian_reg)));
        }
        if self.hf_clip && !basis.kind().is_hat() {
            return Err(Error::Config(format!("hat clipping needs a hat-function basis, got {}", basis.kind())));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("fixed time step must be positive, got {dt}")));
            }
        }
        if !(self.relax_bracket.0 > 0.0 && self.relax_bracket.0 < 1.0 && self.relax_bracket.1 > 1.0) {
            return Err(Error::Config("relaxation bracket must enclose 1 and exclude 0".into()));
        }
        Ok(())
    }
}

/// Step-size controller `dt·min(max(safety·err^{−1/(q+1)}, lo), hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    pub safety: f64,
    pub clamp: (f64, f64),
    /// Order of the embedded method.
    pub q: u32,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            safety: 0.8,
            clamp: (0.2, 5.0),
            q: 2,
        }
    }
}

impl StepController {
    pub fn propose(&self, dt: f64, err: f64) -> f64 {
        let factor = self.safety * err.powf(-1.0 / (self.q as f64 + 1.0));
        dt * factor.max(self.clamp.0).min(self.clamp.1)
    }
}

/// Mixed error `max |a − ã| / (τ + max(a, ã)·τ)` with the denominator
/// floored at `τ`.
pub fn embedded_error(a: &[f64], a_tilde: &[f64], tol: f64) -> f64 {
    a.iter()
        .zip(a_tilde)
        .map(|(&x, &y)| (x - y).abs() / (tol + x.max(y) * tol).max(tol))
        .fold(0.0, f64::max)
}

/// Entries below `alpha_min` are raised to it; returns whether anything changed.
pub fn hf_clip(state: &mut [f64], alpha_min: f64) -> bool {
    let mut changed = false;
    for a in state.iter_mut() {
        if *a < alpha_min {
            *a = alpha_min;
            changed = true;
        }
    }
    changed
}

/// Stage failure with the offending cell, if one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub cell: Option<usize>,
    pub cause: Error,
}

type StageResult<T> = std::result::Result<T, StageFailure>;

/// One right-hand-side evaluation: `α↑` for every cell plus the entropy rate
/// `Σ_i (H(α_i) α_i)·α↑_i`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub k: Vec<f64>,
    pub entropy_rate: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Third-order solution.
    pub a: Vec<f64>,
    pub err: f64,
    /// `dt Σ b̌_ν Σ_i (H α)·α↑` over the stages.
    pub entropy_estimate: f64,
    /// Stage at the third-order solution (first stage of the next step).
    pub last: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub wall_s: f64,
    pub err: f64,
    pub gamma: f64,
    pub retries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyRecord {
    pub t: f64,
    pub h: f64,
    pub h_est: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct TransformedRun {
    pub alpha: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub entropy: Vec<EntropyRecord>,
    pub initial_entropy: f64,
    pub relaxation_fallbacks: usize,
    pub clipped_steps: usize,
}

impl TransformedRun {
    /// `Σ_κ |Ĥ(α^{κ+1}) − Ĥ_est| dt_κ`.
    pub fn entropy_error(&self) -> f64 {
        self.entropy
            .iter()
            .zip(&self.steps)
            .map(|(e, s)| (e.h - e.h_est).abs() * s.dt)
            .sum()
    }
}

pub struct TransformedScheme<'a> {
    basis: &'a MomentBasis,
    disc: &'a Discretization,
    config: TransformedConfig,
    iso: Vec<f64>,
    mass: Option<HessianMatrix>,
}

impl<'a> TransformedScheme<'a> {
    pub fn new(basis: &'a MomentBasis, disc: &'a Discretization, config: TransformedConfig) -> Result<Self> {
        config.validate(basis)?;
        let mass = (config.hessian_reg > 0.0).then(|| mass_matrix(basis));
        Ok(Self {
            basis,
            disc,
            iso: basis.isotropic_moment(),
            mass,
            config,
        })
    }

    pub fn config(&self) -> &TransformedConfig {
        &self.config
    }

    /// `α↑_i = (H(α_i) + εM)⁻¹ R_i` with `R_i` the full moment right-hand side.
    pub fn alpha_update(&self, alpha: &[f64]) -> StageResult<Stage> {
        let n = self.basis.n();
        let n_x = self.disc.grid.n_x;
        let table = self.basis.table();
        let quantities: Vec<_> = alpha
            .par_chunks(n)
            .enumerate()
            .map_init(Vec::new, |scratch, (i, a)| {
                cell_quantities(table, a, scratch).map_err(|cause| StageFailure { cell: Some(i), cause })
            })
            .collect::<StageResult<_>>()?;
        let mut plus = vec![0.0; n_x * n];
        let mut minus = vec![0.0; n_x * n];
        for (i, cq) in quantities.iter().enumerate() {
            plus[i * n..(i + 1) * n].copy_from_slice(&cq.plus);
            minus[i * n..(i + 1) * n].copy_from_slice(&cq.minus);
        }
        let mut rhs = flux_divergence(self.disc, n, &plus, &minus);
        let coeffs = &self.disc.coeffs;
        let mut k = vec![0.0; n_x * n];
        let rates: Vec<f64> = k
            .par_chunks_mut(n)
            .zip(rhs.par_chunks_mut(n))
            .zip(alpha.par_chunks(n))
            .zip(quantities.par_iter())
            .enumerate()
            .map(|(i, (((k, r), a), cq))| {
                let u = &cq.moments;
                let half_rho = 0.5 * self.basis.density(u);
                let (ss, sa, q) = (coeffs.sigma_s[i], coeffs.sigma_a[i], coeffs.q[i]);
                for l in 0..n {
                    r[l] += ss * (self.iso[l] * half_rho - u[l]) - sa * u[l] + self.iso[l] * q;
                }
                let sol = match &self.mass {
                    Some(m) => {
                        let mut h = cq.hessian.clone();
                        h.add_scaled(m, self.config.hessian_reg);
                        h.solve(r)
                    }
                    None => cq.hessian.solve(r),
                }
                .map_err(|e| StageFailure {
                    cell: Some(i),
                    cause: e.into(),
                })?;
                if sol.iter().any(|x| !x.is_finite()) {
                    return Err(StageFailure {
                        cell: Some(i),
                        cause: Error::NonFinite("multiplier update"),
                    });
                }
                k.copy_from_slice(&sol);
                let ha = cq.hessian.mul_vec(a);
                Ok(ha.iter().zip(&sol).map(|(x, y)| x * y).sum::<f64>())
            })
            .collect::<StageResult<_>>()?;
        Ok(Stage {
            k,
            entropy_rate: rates.iter().sum(),
        })
    }

    /// `Ĥ = Σ_i ⟨exp(α_i·b)(α_i·b − 1)⟩`, summed in cell order.
    pub fn total_entropy(&self, alpha: &[f64]) -> Result<f64> {
        let table = self.basis.table();
        let per_cell: Vec<f64> = alpha
            .par_chunks(self.basis.n())
            .map(|a| entropy_from_table(table, a))
            .collect::<Result<_>>()?;
        Ok(per_cell.iter().sum())
    }

    /// One Bogacki-Shampine step from `y` with first stage `k1`.
    pub fn bs_step(&self, y: &[f64], dt: f64, k1: &Stage) -> StageResult<StepOutcome> {
        let combine = |stages: &[&Stage], weights: &[f64]| -> StageResult<Vec<f64>> {
            let mut out = y.to_vec();
            for (s, &w) in stages.iter().zip(weights) {
                if w != 0.0 {
                    out.iter_mut().zip(&s.k).for_each(|(o, k)| *o += dt * w * k);
                }
            }
            if out.iter().all(|x| x.is_finite()) {
                Ok(out)
            } else {
                Err(StageFailure {
                    cell: None,
                    cause: Error::NonFinite("stage state"),
                })
            }
        };
        let y2 = combine(&[k1], &BS_A[0][..1])?;
        let k2 = self.alpha_update(&y2)?;
        let y3 = combine(&[k1, &k2], &BS_A[1][..2])?;
        let k3 = self.alpha_update(&y3)?;
        let a = combine(&[k1, &k2, &k3], &BS_B3[..3])?;
        let k4 = self.alpha_update(&a)?;
        let a_tilde = combine(&[k1, &k2, &k3, &k4], &BS_B2)?;
        let err = embedded_error(&a, &a_tilde, self.config.tol);
        if err.is_nan() {
            return Err(StageFailure {
                cell: None,
                cause: Error::NonFinite("error estimate"),
            });
        }
        let entropy_estimate =
            dt * (BS_B3[0] * k1.entropy_rate + BS_B3[1] * k2.entropy_rate + BS_B3[2] * k3.entropy_rate);
        Ok(StepOutcome {
            a,
            err,
            entropy_estimate,
            last: k4,
        })
    }

    /// `r(γ) = Ĥ(y + γd) − Ĥ(y) − γ E`.
    pub fn relaxation_residual(&self, y: &[f64], d: &[f64], h_old: f64, e_est: f64, gamma: f64) -> Result<f64> {
        let trial: Vec<f64> = y.iter().zip(d).map(|(y, d)| y + gamma * d).collect();
        Ok(self.total_entropy(&trial)? - h_old - gamma * e_est)
    }

    /// Root of `r` in the relaxation bracket by bisection, or `None` when the
    /// bracket holds no sign change.
    pub fn relaxation_gamma(&self, y: &[f64], d: &[f64], h_old: f64, e_est: f64) -> Option<f64> {
        let (mut lo, mut hi) = self.config.relax_bracket;
        let r = |g: f64| self.relaxation_residual(y, d, h_old, e_est, g).ok();
        let (mut r_lo, r_hi) = (r(lo)?, r(hi)?);
        if !(r_lo * r_hi < 0.0) {
            return None;
        }
        let tol = self.config.bisection_tol;
        let mut r_mid = f64::INFINITY;
        // keep halving past `tol` while the residual is still large
        while hi - lo > tol || (r_mid.abs() > tol && hi - lo > 4.0 * f64::EPSILON) {
            let mid = 0.5 * (lo + hi);
            r_mid = r(mid)?;
            if r_mid == 0.0 {
                return Some(mid);
            }
            if (r_mid < 0.0) == (r_lo < 0.0) {
                lo = mid;
                r_lo = r_mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Integrates from `alpha0` at `t = 0` to `tf`.
    pub fn run(&self, alpha0: &[f64], tf: f64) -> Result<TransformedRun> {
        let mut y = alpha0.to_vec();
        let h0 = self.total_entropy(&y)?;
        let mut run = TransformedRun {
            alpha: Vec::new(),
            steps: Vec::new(),
            entropy: Vec::new(),
            initial_entropy: h0,
            relaxation_fallbacks: 0,
            clipped_steps: 0,
        };
        let mut h_old = h0;
        let mut t = 0.0;
        let mut dt = self.config.fixed_dt.unwrap_or(self.config.dt_initial);
        let mut first: Option<Stage> = None;
        let eps_t = 1e-14 * tf.abs().max(1.0);

        while tf - t > eps_t {
            let clock = Instant::now();
            let mut retries = 0;
            let (h, outcome) = loop {
                let h = dt.min(tf - t);
                let attempt = match first.take() {
                    Some(k1) => Ok(k1),
                    None => self.alpha_update(&y),
                }
                .and_then(|k1| self.bs_step(&y, h, &k1));
                match attempt {
                    Ok(out) if self.config.fixed_dt.is_some() || out.err <= 1.0 => break (h, out),
                    Ok(out) => {
                        dt = self.config.controller.propose(h, out.err);
                        retries += 1;
                    }
                    Err(failure) => {
                        if self.config.fixed_dt.is_some() {
                            return Err(Error::DtUnderflow {
                                t,
                                dt: h,
                                cell: failure.cell,
                                cause: format!("fixed-step stage failed: {}", failure.cause),
                            });
                        }
                        dt = 0.5 * h;
                        retries += 1;
                        if dt < self.config.dt_min {
                            return Err(Error::DtUnderflow {
                                t,
                                dt,
                                cell: failure.cell,
                                cause: failure.cause.to_string(),
                            });
                        }
                    }
                }
                if dt < self.config.dt_min {
                    return Err(Error::DtUnderflow {
                        t,
                        dt,
                        cell: None,
                        cause: "error estimate keeps exceeding the tolerance".into(),
                    });
                }
            };

            let mut gamma = 1.0;
            let mut modified = false;
            let mut next = outcome.a;
            if self.config.relaxed {
                let d: Vec<f64> = next.iter().zip(&y).map(|(a, y)| a - y).collect();
                match self.relaxation_gamma(&y, &d, h_old, outcome.entropy_estimate) {
                    Some(g) => gamma = g,
                    None => {
                        log::warn!("relaxation: no root in bracket at t = {t:.6e}, using γ = 1");
                        run.relaxation_fallbacks += 1;
                    }
                }
                if gamma != 1.0 {
                    next = y.iter().zip(&d).map(|(y, d)| y + gamma * d).collect();
                    modified = true;
                }
            }
            if self.config.hf_clip && h < self.config.hf_clip_dt_min && hf_clip(&mut next, self.config.hf_clip_alpha_min) {
                modified = true;
                run.clipped_steps += 1;
            }
            if !modified {
                first = Some(outcome.last);
            }
            y = next;
            t = if tf - (t + h) <= eps_t { tf } else { t + h };
            let h_new = self.total_entropy(&y)?;
            run.entropy.push(EntropyRecord {
                t,
                h: h_new,
                h_est: h_old + gamma * outcome.entropy_estimate,
                gamma,
            });
            h_old = h_new;
            run.steps.push(StepRecord {
                t,
                dt: h,
                wall_s: clock.elapsed().as_secs_f64(),
                err: outcome.err,
                gamma,
                retries,
            });
            dt = match self.config.fixed_dt {
                Some(fixed) => fixed,
                None => self.config.controller.propose(h, outcome.err),
            };
        }
        run.alpha = y;
        Ok(run)
    }
}
