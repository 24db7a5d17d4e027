//! Fixtures shared by the benchmarks.

use slabmom::harness::initial_multipliers;
use slabmom::problems::{project_initial, source_beam, Discretization};
use slabmom::{BasisKind, MomentBasis, OptimizerConfig};

pub const BASES: [BasisKind; 3] = [
    BasisKind::FullMoment { order: 10 },
    BasisKind::HatFunction { intervals: 9 },
    BasisKind::PartialMoment { intervals: 5 },
];

/// Source-beam discretization with moments and multipliers of a mildly
/// evolved state (vacuum plus the projected initial condition).
pub struct Fixture {
    pub basis: MomentBasis,
    pub disc: Discretization,
    pub u: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Fixture {
    pub fn new(kind: BasisKind, n_x: usize) -> Self {
        let basis = MomentBasis::new(kind).unwrap();
        let spec = source_beam();
        let disc = Discretization::new(&spec, &basis, n_x).unwrap();
        let u = project_initial(&basis, &spec, n_x).unwrap();
        let alpha = initial_multipliers(&basis, &u, &OptimizerConfig::default()).unwrap();
        Self { basis, disc, u, alpha }
    }

    /// Moments of one forward-peaked cell, `⟨b exp(a + c μ)⟩`.
    pub fn peaked_moments(&self, c: f64) -> Vec<f64> {
        let q = self.basis.quadrature();
        let mut u = vec![0.0; self.basis.n()];
        for (&mu, &w) in q.points().iter().zip(q.weights()) {
            let b = self.basis.evaluate(mu).unwrap();
            let f = (c * (mu - 1.0)).exp();
            for (uj, bj) in u.iter_mut().zip(&b) {
                *uj += w * f * bj;
            }
        }
        u
    }
}
