//! Benchmark problems and their discretization on a uniform grid.

use std::fmt;
use std::str::FromStr;

use crate::basis::MomentBasis;
use crate::closure::{half_fluxes_from_values, integral_from_values};
use crate::error::{Error, Result};

/// Isotropic density standing in for vacuum.
pub const PSI_VAC: f64 = 5e-7;

const BEAM_SHARPNESS: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    PlaneSource,
    SourceBeam,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::PlaneSource => "planesource",
            ProblemKind::SourceBeam => "sourcebeam",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "planesource" => Ok(ProblemKind::PlaneSource),
            "sourcebeam" => Ok(ProblemKind::SourceBeam),
            _ => Err(Error::Parse(format!("unknown problem {s:?}; expected planesource or sourcebeam"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Vacuum,
    /// Unit Dirac mass at `x = 0` on top of vacuum.
    VacuumPlusDirac,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryDensity {
    Vacuum,
    /// `exp(−10⁵(μ − 1)²)`, normalized to unit density.
    ForwardBeam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub x_left: f64,
    pub x_right: f64,
    pub tf: f64,
    pub initial: InitialCondition,
    pub boundary_left: BoundaryDensity,
    pub boundary_right: BoundaryDensity,
    pub psi_vac: f64,
}

pub fn plane_source() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::PlaneSource,
        x_left: -1.2,
        x_right: 1.2,
        tf: 1.0,
        initial: InitialCondition::VacuumPlusDirac,
        boundary_left: BoundaryDensity::Vacuum,
        boundary_right: BoundaryDensity::Vacuum,
        psi_vac: PSI_VAC,
    }
}

pub fn source_beam() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::SourceBeam,
        x_left: 0.0,
        x_right: 3.0,
        tf: 2.5,
        initial: InitialCondition::Vacuum,
        boundary_left: BoundaryDensity::ForwardBeam,
        boundary_right: BoundaryDensity::Vacuum,
        psi_vac: PSI_VAC,
    }
}

impl ProblemSpec {
    pub fn from_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::PlaneSource => plane_source(),
            ProblemKind::SourceBeam => source_beam(),
        }
    }

    pub fn sigma_s(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::PlaneSource => 1.0,
            ProblemKind::SourceBeam => {
                if x <= 1.0 {
                    0.0
                } else if x <= 2.0 {
                    2.0
                } else {
                    10.0
                }
            }
        }
    }

    pub fn sigma_a(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::PlaneSource => 0.0,
            ProblemKind::SourceBeam => {
                if x <= 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn source(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::PlaneSource => 0.0,
            ProblemKind::SourceBeam => {
                if (1.0..=1.5).contains(&x) {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Boundary density at every quadrature point of `basis`.
    pub fn boundary_values(&self, density: BoundaryDensity, basis: &MomentBasis) -> Vec<f64> {
        let table = basis.table();
        match density {
            BoundaryDensity::Vacuum => vec![self.psi_vac; table.len()],
            BoundaryDensity::ForwardBeam => {
                let raw: Vec<f64> = table
                    .mus
                    .iter()
                    .map(|mu| (-BEAM_SHARPNESS * (mu - 1.0) * (mu - 1.0)).exp())
                    .collect();
                let norm = integral_from_values(table, &raw);
                raw.into_iter().map(|v| v / norm).collect()
            }
        }
    }
}

/// Uniform grid on `[x_left, x_right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_x: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub dx: f64,
}

impl Grid {
    pub fn new(x_left: f64, x_right: f64, n_x: usize) -> Result<Self> {
        if n_x == 0 || !(x_right > x_left) {
            return Err(Error::Config(format!("invalid grid: {n_x} cells on [{x_left}, {x_right}]")));
        }
        Ok(Self {
            n_x,
            x_left,
            x_right,
            dx: (x_right - x_left) / n_x as f64,
        })
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.center(i)).collect()
    }
}

/// Piecewise-constant coefficients sampled at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCoefficients {
    pub sigma_s: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub q: Vec<f64>,
}

impl SourceCoefficients {
    pub fn sample(problem: &ProblemSpec, grid: &Grid) -> Self {
        let xs = grid.centers();
        Self {
            sigma_s: xs.iter().map(|&x| problem.sigma_s(x)).collect(),
            sigma_a: xs.iter().map(|&x| problem.sigma_a(x)).collect(),
            q: xs.iter().map(|&x| problem.source(x)).collect(),
        }
    }
}

/// Half fluxes of the exterior densities entering the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostData {
    /// `⟨μ⁺ ψ_left b⟩`.
    pub left_plus: Vec<f64>,
    /// `⟨μ⁻ ψ_right b⟩`.
    pub right_minus: Vec<f64>,
}

impl GhostData {
    pub fn new(problem: &ProblemSpec, basis: &MomentBasis) -> Self {
        let left = problem.boundary_values(problem.boundary_left, basis);
        let right = problem.boundary_values(problem.boundary_right, basis);
        Self {
            left_plus: half_fluxes_from_values(basis.table(), &left).0,
            right_minus: half_fluxes_from_values(basis.table(), &right).1,
        }
    }
}

/// Everything a scheme needs about the spatial problem.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub coeffs: SourceCoefficients,
    pub ghosts: GhostData,
}

impl Discretization {
    pub fn new(problem: &ProblemSpec, basis: &MomentBasis, n_x: usize) -> Result<Self> {
        let grid = Grid::new(problem.x_left, problem.x_right, n_x)?;
        Ok(Self {
            problem: problem.clone(),
            coeffs: SourceCoefficients::sample(problem, &grid),
            ghosts: GhostData::new(problem, basis),
            grid,
        })
    }
}

/// Initial cell moments, flattened cell-major (`n_x · n` entries).
///
/// Cell densities are isotropic, so the moments are `ψ ⟨b⟩` with `⟨b⟩`
/// evaluated by the basis quadrature.
pub fn project_initial(basis: &MomentBasis, problem: &ProblemSpec, n_x: usize) -> Result<Vec<f64>> {
    let grid = Grid::new(problem.x_left, problem.x_right, n_x)?;
    let ones = vec![1.0; basis.table().len()];
    let iso = crate::closure::moments_from_values(basis.table(), &ones);
    let mut psi = vec![problem.psi_vac; n_x];
    if problem.initial == InitialCondition::VacuumPlusDirac {
        if n_x % 2 != 0 {
            return Err(Error::Config(format!(
                "the Dirac initial condition needs an even cell count, got {n_x}"
            )));
        }
        let extra = 1.0 / (2.0 * grid.dx);
        psi[n_x / 2 - 1] += extra;
        psi[n_x / 2] += extra;
    }
    Ok(psi.iter().flat_map(|&p| iso.iter().map(move |b| p * b)).collect())
}
