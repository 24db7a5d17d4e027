//! Splitting scheme in moment variables: kinetic-flux finite volumes with
//! Heun's method for transport and the exact solution of the source ODE,
//! combined by Strang splitting.

use rayon::prelude::*;

use crate::basis::MomentBasis;
use crate::closure::{ansatz_values_into, half_fluxes_from_values};
use crate::error::{Error, Result};
use crate::optimizer::{apply_vacuum_floor_in_place, solve_cached, CellCache, OptimizerConfig, RecentCache};
use crate::problems::Discretization;

/// Cells per cache chunk. Recent-solution caches are owned by fixed chunks of
/// cells rather than by threads so results do not depend on the thread count.
pub const CACHE_CHUNK: usize = 16;

/// Below this absorption the factor `(1 − e^{−σ_a t})/σ_a` is replaced by `t`.
const SIGMA_A_LIMIT: f64 = 1e-12;

/// Realizability-preserving time step `(1 − ε_γ) Δx`.
pub fn cfl_dt(dx: f64, epsilon_gamma: f64) -> f64 {
    (1.0 - epsilon_gamma) * dx
}

/// Kinetic flux through an interface with normal `+1` between two ansatz densities.
pub fn kinetic_flux_pair(basis: &MomentBasis, alpha_left: &[f64], alpha_right: &[f64]) -> Result<Vec<f64>> {
    let table = basis.table();
    let mut e = vec![0.0; table.len()];
    ansatz_values_into(table, alpha_left, &mut e)?;
    let (plus, _) = half_fluxes_from_values(table, &e);
    ansatz_values_into(table, alpha_right, &mut e)?;
    let (_, minus) = half_fluxes_from_values(table, &e);
    Ok(plus.iter().zip(&minus).map(|(p, m)| p + m).collect())
}

/// Exact solution of `u' = σ_s(Gu − u) − σ_a u + ⟨b⟩Q` after time `t`.
pub fn source_step_analytic(basis: &MomentBasis, u: &[f64], sigma_s: f64, sigma_a: f64, q: f64, t: f64) -> Vec<f64> {
    let iso = basis.isotropic_moment();
    let mut out = u.to_vec();
    source_step_in_place(basis, &iso, &mut out, sigma_s, sigma_a, q, t);
    out
}

fn source_step_in_place(basis: &MomentBasis, iso: &[f64], u: &mut [f64], sigma_s: f64, sigma_a: f64, q: f64, t: f64) {
    let half_rho = 0.5 * basis.density(u);
    let decay_a = (-sigma_a * t).exp();
    let decay_s = (-sigma_s * t).exp();
    let gain = if sigma_a < SIGMA_A_LIMIT {
        t
    } else {
        -(-sigma_a * t).exp_m1() / sigma_a
    };
    let scatter = -(-sigma_s * t).exp_m1();
    for (u, b) in u.iter_mut().zip(iso) {
        let gu = b * half_rho;
        *u = decay_a * (decay_s * *u + scatter * gu) + gain * b * q;
    }
}

/// Counters collected over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardStats {
    /// Smallest moment component entering any optimizer call (before flooring).
    pub min_component: f64,
    pub regularizations: usize,
    pub vacuum_floors: usize,
    pub newton_iterations: usize,
    pub solves: usize,
}

impl Default for StandardStats {
    fn default() -> Self {
        Self {
            min_component: f64::INFINITY,
            regularizations: 0,
            vacuum_floors: 0,
            newton_iterations: 0,
            solves: 0,
        }
    }
}

impl StandardStats {
    fn merge(&mut self, other: &StandardStats) {
        self.min_component = self.min_component.min(other.min_component);
        self.regularizations += other.regularizations;
        self.vacuum_floors += other.vacuum_floors;
        self.newton_iterations += other.newton_iterations;
        self.solves += other.solves;
    }
}

/// Mutable solver state of the splitting scheme (caches and counters).
pub struct StandardScheme<'a> {
    basis: &'a MomentBasis,
    disc: &'a Discretization,
    config: OptimizerConfig,
    iso: Vec<f64>,
    cell_caches: Vec<CellCache>,
    recent: Vec<RecentCache>,
    pub stats: StandardStats,
}

impl<'a> StandardScheme<'a> {
    pub fn new(basis: &'a MomentBasis, disc: &'a Discretization, config: OptimizerConfig) -> Self {
        let n_x = disc.grid.n_x;
        let chunks = n_x.div_ceil(CACHE_CHUNK);
        Self {
            basis,
            disc,
            iso: basis.isotropic_moment(),
            cell_caches: vec![CellCache::default(); n_x],
            recent: (0..chunks).map(|_| RecentCache::new(config.cache_capacity)).collect(),
            config,
            stats: StandardStats::default(),
        }
    }

    pub fn basis(&self) -> &MomentBasis {
        self.basis
    }

    /// Floors and solves every cell. Regularized moments replace the state.
    /// Returns the multipliers and both half fluxes of every cell.
    pub fn solve_cells(&mut self, u: &mut [f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.basis.n();
        let n_x = self.disc.grid.n_x;
        let mut alpha = vec![0.0; n_x * n];
        let mut plus = vec![0.0; n_x * n];
        let mut minus = vec![0.0; n_x * n];
        let basis = self.basis;
        let config = &self.config;
        let stride = CACHE_CHUNK * n;
        let results: Vec<Result<StandardStats>> = u
            .par_chunks_mut(stride)
            .zip(alpha.par_chunks_mut(stride))
            .zip(plus.par_chunks_mut(stride))
            .zip(minus.par_chunks_mut(stride))
            .zip(self.cell_caches.par_chunks_mut(CACHE_CHUNK))
            .zip(self.recent.par_iter_mut())
            .map(|(((((u, alpha), plus), minus), cells), recent)| {
                let mut stats = StandardStats::default();
                let mut e = vec![0.0; basis.table().len()];
                for (c, cell) in cells.iter_mut().enumerate() {
                    let uc = &mut u[c * n..(c + 1) * n];
                    for &x in uc.iter() {
                        stats.min_component = stats.min_component.min(x);
                    }
                    if apply_vacuum_floor_in_place(basis, uc, config.rho_vac) {
                        stats.vacuum_floors += 1;
                    }
                    let report = solve_cached(basis, uc, config, cell, recent)?;
                    stats.solves += 1;
                    stats.newton_iterations += report.iterations;
                    if report.regularization_r_used > 0.0 {
                        stats.regularizations += 1;
                        if let Some(ur) = &report.regularized_moments {
                            uc.copy_from_slice(ur);
                        }
                    }
                    ansatz_values_into(basis.table(), &report.alpha, &mut e)?;
                    let (p, m) = half_fluxes_from_values(basis.table(), &e);
                    plus[c * n..(c + 1) * n].copy_from_slice(&p);
                    minus[c * n..(c + 1) * n].copy_from_slice(&m);
                    alpha[c * n..(c + 1) * n].copy_from_slice(&report.alpha);
                }
                Ok(stats)
            })
            .collect();
        for r in results {
            self.stats.merge(&r?);
        }
        Ok((alpha, plus, minus))
    }

    /// Flux divergence `L_i = −(g_{i+1/2} − g_{i−1/2})/Δx` from cell half fluxes.
    pub fn flux_divergence(&self, plus: &[f64], minus: &[f64]) -> Vec<f64> {
        flux_divergence(self.disc, self.basis.n(), plus, minus)
    }

    /// Transport right-hand side; floors/regularizes `u` in place first.
    pub fn hyperbolic_rhs(&mut self, u: &mut [f64]) -> Result<Vec<f64>> {
        let (_, plus, minus) = self.solve_cells(u)?;
        Ok(self.flux_divergence(&plus, &minus))
    }

    /// SSP-RK2 (Heun) transport step.
    pub fn heun_step(&mut self, u: &mut Vec<f64>, dt: f64) -> Result<()> {
        let l0 = self.hyperbolic_rhs(u)?;
        let mut stage: Vec<f64> = u.iter().zip(&l0).map(|(u, l)| u + dt * l).collect();
        let l1 = self.hyperbolic_rhs(&mut stage)?;
        for ((u, s), l) in u.iter_mut().zip(&stage).zip(&l1) {
            *u = 0.5 * *u + 0.5 * (s + dt * l);
        }
        check_finite(u)
    }

    pub fn source_step(&self, u: &mut [f64], t: f64) {
        let n = self.basis.n();
        let coeffs = &self.disc.coeffs;
        let basis = self.basis;
        let iso = &self.iso;
        u.par_chunks_mut(n).enumerate().for_each(|(i, cell)| {
            source_step_in_place(basis, iso, cell, coeffs.sigma_s[i], coeffs.sigma_a[i], coeffs.q[i], t);
        });
    }

    /// `S(dt/2) H(dt) S(dt/2)`.
    pub fn strang_step(&mut self, u: &mut Vec<f64>, dt: f64) -> Result<()> {
        self.source_step(u, 0.5 * dt);
        self.heun_step(u, dt)?;
        self.source_step(u, 0.5 * dt);
        for &x in u.iter() {
            self.stats.min_component = self.stats.min_component.min(x);
        }
        Ok(())
    }
}

pub(crate) fn flux_divergence(disc: &Discretization, n: usize, plus: &[f64], minus: &[f64]) -> Vec<f64> {
    let n_x = disc.grid.n_x;
    let inv_dx = 1.0 / disc.grid.dx;
    // g[i] is the flux through the left face of cell i; g[n_x] the right boundary
    let mut g = vec![0.0; (n_x + 1) * n];
    for f in 0..=n_x {
        let left = if f == 0 {
            &disc.ghosts.left_plus[..]
        } else {
            &plus[(f - 1) * n..f * n]
        };
        let right = if f == n_x {
            &disc.ghosts.right_minus[..]
        } else {
            &minus[f * n..(f + 1) * n]
        };
        for k in 0..n {
            g[f * n + k] = left[k] + right[k];
        }
    }
    let mut l = vec![0.0; n_x * n];
    for i in 0..n_x {
        for k in 0..n {
            l[i * n + k] = -(g[(i + 1) * n + k] - g[i * n + k]) * inv_dx;
        }
    }
    l
}

fn check_finite(u: &[f64]) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("moment state"))
    }
}
