//! The three slab-geometry moment bases: full Legendre moments, continuous
//! hat functions and partial (piecewise-linear, discontinuous) moments.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::HessianFormat;
use crate::quadrature::{build_quadrature, nodal_quadrature, uniform_partition, Quadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// Legendre polynomials `P_0..P_order`.
    FullMoment { order: usize },
    /// `intervals + 1` hat functions on a uniform partition.
    HatFunction { intervals: usize },
    /// Local `(1, μ)` on each of `intervals` uniform partition intervals.
    PartialMoment { intervals: usize },
}

impl BasisKind {
    pub fn moment_count(self) -> usize {
        match self {
            BasisKind::FullMoment { order } => order + 1,
            BasisKind::HatFunction { intervals } => intervals + 1,
            BasisKind::PartialMoment { intervals } => 2 * intervals,
        }
    }

    pub fn is_hat(self) -> bool {
        matches!(self, BasisKind::HatFunction { .. })
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BasisKind::FullMoment { order } => write!(f, "m{order}"),
            BasisKind::HatFunction { intervals } => write!(f, "hfm{}", intervals + 1),
            BasisKind::PartialMoment { intervals } => write!(f, "pmm{}", 2 * intervals),
        }
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    /// Accepts `m<N>`, `hfm<n>` and `pmm<n>` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parse = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad basis string {s:?}")))
        };
        if let Some(rest) = lower.strip_prefix("hfm") {
            let n = parse(rest)?;
            if n < 2 {
                return Err(Error::Config(format!("{s}: hat-function basis needs at least 2 moments")));
            }
            Ok(BasisKind::HatFunction { intervals: n - 1 })
        } else if let Some(rest) = lower.strip_prefix("pmm") {
            let n = parse(rest)?;
            if n < 2 || n % 2 != 0 {
                return Err(Error::Config(format!("{s}: partial-moment basis needs an even moment count ≥ 2")));
            }
            Ok(BasisKind::PartialMoment { intervals: n / 2 })
        } else if let Some(rest) = lower.strip_prefix('m') {
            Ok(BasisKind::FullMoment { order: parse(rest)? })
        } else {
            Err(Error::Parse(format!("unknown basis {s:?}; expected m<N>, hfm<n> or pmm<n>")))
        }
    }
}

/// Answer of the realizability predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realizability {
    Realizable,
    NotRealizable,
    /// No exact test is implemented for this basis.
    Unsupported,
}

impl Realizability {
    pub fn is_realizable(self) -> bool {
        self == Realizability::Realizable
    }
}

/// Basis values at every quadrature point, stored compactly: point `q` has
/// `width` consecutive nonzero entries starting at index `starts[q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub width: usize,
    pub n: usize,
    pub starts: Vec<usize>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub mus: Vec<f64>,
    pub format: HessianFormat,
}

impl EvalTable {
    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    #[inline]
    pub fn row(&self, q: usize) -> &[f64] {
        &self.values[q * self.width..(q + 1) * self.width]
    }

    /// `α · b(μ_q)`.
    #[inline]
    pub fn dot(&self, q: usize, alpha: &[f64]) -> f64 {
        let s = self.starts[q];
        self.row(q)
            .iter()
            .zip(&alpha[s..s + self.width])
            .map(|(b, a)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct MomentBasis {
    kind: BasisKind,
    n: usize,
    partition: Vec<f64>,
    quadrature: Quadrature,
    lumped: bool,
    table: EvalTable,
}

impl MomentBasis {
    pub fn new(kind: BasisKind) -> Result<Self> {
        Self::validate(kind)?;
        Ok(Self::assemble(kind, build_quadrature(kind), false))
    }

    /// Hat-function basis with the nodal (masslumping) quadrature.
    pub fn masslumped(kind: BasisKind) -> Result<Self> {
        Self::validate(kind)?;
        let quad = nodal_quadrature(kind)?;
        Ok(Self::assemble(kind, quad, true))
    }

    /// Basis with a caller-supplied quadrature (used for refined-quadrature checks).
    pub fn with_quadrature(kind: BasisKind, quadrature: Quadrature) -> Result<Self> {
        Self::validate(kind)?;
        Ok(Self::assemble(kind, quadrature, false))
    }

    fn validate(kind: BasisKind) -> Result<()> {
        match kind {
            BasisKind::HatFunction { intervals } | BasisKind::PartialMoment { intervals } if intervals == 0 => {
                Err(Error::Config(format!("{kind}: partition needs at least one interval")))
            }
            _ => Ok(()),
        }
    }

    fn assemble(kind: BasisKind, quadrature: Quadrature, lumped: bool) -> Self {
        let n = kind.moment_count();
        let partition = match kind {
            BasisKind::FullMoment { .. } => Vec::new(),
            BasisKind::HatFunction { intervals } | BasisKind::PartialMoment { intervals } => {
                uniform_partition(intervals)
            }
        };
        let mut basis = Self {
            kind,
            n,
            partition,
            quadrature,
            lumped,
            table: EvalTable {
                width: 0,
                n,
                starts: Vec::new(),
                values: Vec::new(),
                weights: Vec::new(),
                mus: Vec::new(),
                format: HessianFormat::Dense,
            },
        };
        basis.table = basis.build_table();
        basis
    }

    fn build_table(&self) -> EvalTable {
        let quad = &self.quadrature;
        let (width, format) = match self.kind {
            BasisKind::FullMoment { .. } => (self.n, HessianFormat::Dense),
            BasisKind::HatFunction { .. } if self.lumped => (1, HessianFormat::Diagonal),
            BasisKind::HatFunction { .. } => (2, HessianFormat::Tridiagonal),
            BasisKind::PartialMoment { .. } => (2, HessianFormat::Blocks2),
        };
        let mut starts = Vec::with_capacity(quad.len());
        let mut values = Vec::with_capacity(quad.len() * width);
        for (q, &mu) in quad.points().iter().enumerate() {
            let j = quad.intervals()[q];
            match self.kind {
                BasisKind::FullMoment { .. } => {
                    starts.push(0);
                    values.extend(legendre_values(self.n, mu));
                }
                BasisKind::HatFunction { .. } if self.lumped => {
                    starts.push(q);
                    values.push(1.0);
                }
                BasisKind::HatFunction { .. } => {
                    starts.push(j);
                    values.extend(self.hat_pair(j, mu));
                }
                BasisKind::PartialMoment { .. } => {
                    starts.push(2 * j);
                    values.extend([1.0, mu]);
                }
            }
        }
        EvalTable {
            width,
            n: self.n,
            starts,
            values,
            weights: quad.weights().to_vec(),
            mus: quad.points().to_vec(),
            format,
        }
    }

    /// `(φ_j, φ_{j+1})` on interval `j`, exact at its endpoints.
    fn hat_pair(&self, j: usize, mu: f64) -> [f64; 2] {
        let (a, b) = (self.partition[j], self.partition[j + 1]);
        if mu == a {
            [1.0, 0.0]
        } else if mu == b {
            [0.0, 1.0]
        } else {
            let right = (mu - a) / (b - a);
            [1.0 - right, right]
        }
    }

    /// Interval containing `μ`; interior nodes belong to the interval on their right.
    fn interval_of(&self, mu: f64) -> usize {
        let k = self.partition.len() - 1;
        let h = 2.0 / k as f64;
        let mut j = (((mu + 1.0) / h).floor() as usize).min(k - 1);
        // guard against rounding near nodes
        while j > 0 && mu < self.partition[j] {
            j -= 1;
        }
        while j + 1 < k && mu >= self.partition[j + 1] {
            j += 1;
        }
        j
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn is_masslumped(&self) -> bool {
        self.lumped
    }

    pub fn table(&self) -> &EvalTable {
        &self.table
    }

    pub fn hessian_format(&self) -> HessianFormat {
        self.table.format
    }

    /// `b(μ)`.
    pub fn evaluate(&self, mu: f64) -> Result<Vec<f64>> {
        if !(-1.0..=1.0).contains(&mu) {
            return Err(Error::Domain(format!("angle {mu} outside [-1, 1]")));
        }
        let mut b = vec![0.0; self.n];
        match self.kind {
            BasisKind::FullMoment { .. } => b = legendre_values(self.n, mu),
            BasisKind::HatFunction { .. } => {
                let j = self.interval_of(mu);
                let [l, r] = self.hat_pair(j, mu);
                b[j] = l;
                b[j + 1] = r;
            }
            BasisKind::PartialMoment { .. } => {
                let j = self.interval_of(mu);
                b[2 * j] = 1.0;
                b[2 * j + 1] = mu;
            }
        }
        Ok(b)
    }

    /// `α¹` with `α¹ · b ≡ 1`.
    pub fn unit_multiplier(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::FullMoment { .. } => {
                let mut a = vec![0.0; self.n];
                a[0] = 1.0;
                a
            }
            BasisKind::HatFunction { .. } => vec![1.0; self.n],
            BasisKind::PartialMoment { .. } => (0..self.n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Exact angular integrals `⟨b⟩`.
    pub fn isotropic_moment(&self) -> Vec<f64> {
        match self.kind {
            BasisKind::FullMoment { .. } => {
                let mut u = vec![0.0; self.n];
                u[0] = 2.0;
                u
            }
            BasisKind::HatFunction { intervals } => {
                let h = 2.0 / intervals as f64;
                (0..self.n)
                    .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
                    .collect()
            }
            BasisKind::PartialMoment { .. } => self
                .partition
                .windows(2)
                .flat_map(|w| [w[1] - w[0], 0.5 * (w[1] * w[1] - w[0] * w[0])])
                .collect(),
        }
    }

    /// Local particle density `α¹ · u`.
    pub fn density(&self, u: &[f64]) -> f64 {
        match self.kind {
            BasisKind::FullMoment { .. } => u[0],
            BasisKind::HatFunction { .. } => u.iter().sum(),
            BasisKind::PartialMoment { .. } => u.iter().step_by(2).sum(),
        }
    }

    /// `G u = ⟨b⟩ ρ(u) / 2`.
    pub fn iso_projection(&self, u: &[f64]) -> Vec<f64> {
        let half_rho = 0.5 * self.density(u);
        self.isotropic_moment().iter().map(|b| b * half_rho).collect()
    }

    pub fn is_realizable(&self, u: &[f64]) -> Realizability {
        let ok = match self.kind {
            BasisKind::FullMoment { .. } => return Realizability::Unsupported,
            BasisKind::HatFunction { .. } => u.iter().all(|&x| x > 0.0),
            BasisKind::PartialMoment { .. } => self.partition.windows(2).zip(u.chunks_exact(2)).all(|(w, u)| {
                u[0] > 0.0 && w[0] * u[0] < u[1] && u[1] < w[1] * u[0]
            }),
        };
        if ok {
            Realizability::Realizable
        } else {
            Realizability::NotRealizable
        }
    }

    /// Multipliers of the isotropic moment with density `ρ`: `log(ρ/2) α¹`.
    pub fn isotropic_multipliers(&self, rho: f64) -> Result<Vec<f64>> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("isotropic multipliers need ρ > 0, got {rho}")));
        }
        let c = (0.5 * rho).ln();
        Ok(self.unit_multiplier().into_iter().map(|a| a * c).collect())
    }
}

/// Unnormalized Legendre values `P_0(μ)..P_{n-1}(μ)`.
pub fn legendre_values(n: usize, mu: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n);
    if n == 0 {
        return p;
    }
    p.push(1.0);
    if n > 1 {
        p.push(mu);
    }
    for l in 1..n.saturating_sub(1) {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * mu * p[l] - lf * p[l - 1]) / (lf + 1.0);
        p.push(next);
    }
    p
}
