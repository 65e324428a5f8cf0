//! The Schrödinger operator `-Δ + V` as a stiffness/mass pencil.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::mesh::{DiscreteManifold, HoleSet};
use crate::sparse::CsrMatrix;

/// Vertex samples of a bounded potential with strictly positive minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    values: Vec<f64>,
    min_value: f64,
}

impl Potential {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty potential".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "potential must be finite, found {v}"
            )));
        }
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min_value <= 0.0 {
            return Err(Error::AssumptionViolated { min: min_value });
        }
        Ok(Self { values, min_value })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One term `amplitude · cos(2π (px·x/Lx + py·y/Ly) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub px: i64,
    pub py: i64,
    pub phase: f64,
}

/// Closed-form potential: a constant plus a finite cosine series in the
/// periodic coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub constant: f64,
    pub cosine: Vec<CosineTerm>,
}

impl PotentialSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            cosine: Vec::new(),
        }
    }

    pub fn evaluate(&self, position: [f64; 2], periods: [f64; 2]) -> f64 {
        let phase_of = |p: i64, axis: usize| {
            if periods[axis] > 0.0 {
                p as f64 * position[axis] / periods[axis]
            } else {
                0.0
            }
        };
        self.constant
            + self
                .cosine
                .iter()
                .map(|t| {
                    t.amplitude * (2.0 * PI * (phase_of(t.px, 0) + phase_of(t.py, 1)) + t.phase).cos()
                })
                .sum::<f64>()
    }

    /// Sample at every vertex; fails if the sampled minimum is not positive.
    pub fn sample(&self, m: &DiscreteManifold) -> Result<Potential> {
        let periods = m.periods();
        Potential::new(m.sample(|p| self.evaluate(p, periods)))
    }
}

/// Generalized symmetric-definite pencil `K e = λ M e` with diagonal `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
}

impl Pencil {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }
}

/// `-Δ + V` on a discrete manifold.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator<'m> {
    manifold: &'m DiscreteManifold,
    potential: Potential,
    potential_mass: Vec<f64>,
}

/// Pair the manifold with a potential.
pub fn assemble<'m>(m: &'m DiscreteManifold, v: Potential) -> Result<SchrodingerOperator<'m>> {
    check_len(m.n_vertices(), v.values.len())?;
    if v.min_value <= 0.0 {
        return Err(Error::AssumptionViolated { min: v.min_value });
    }
    let potential_mass = m
        .volume_weights()
        .iter()
        .zip(&v.values)
        .map(|(w, vi)| w * vi)
        .collect();
    Ok(SchrodingerOperator {
        manifold: m,
        potential: v,
        potential_mass,
    })
}

impl<'m> SchrodingerOperator<'m> {
    pub fn manifold(&self) -> &'m DiscreteManifold {
        self.manifold
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn n(&self) -> usize {
        self.manifold.n_vertices()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        self.manifold.stiffness()
    }

    pub fn mass(&self) -> &[f64] {
        self.manifold.volume_weights()
    }

    /// Diagonal of `M·V`.
    pub fn potential_mass(&self) -> &[f64] {
        &self.potential_mass
    }

    /// `Q(u) = uᵀ S u + uᵀ (M V) u`.
    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64> {
        check_len(self.n(), u.len())?;
        let dirichlet = self.stiffness().quadratic(u);
        let potential: f64 = self
            .potential_mass
            .iter()
            .zip(u)
            .map(|(pv, ui)| pv * ui * ui)
            .sum();
        Ok(dirichlet + potential)
    }

    /// Lumped `L²` inner product `Σ m_i u_i v_i`.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.n(), u.len())?;
        check_len(self.n(), v.len())?;
        Ok(self
            .mass()
            .iter()
            .zip(u.iter().zip(v))
            .map(|(m, (a, b))| m * a * b)
            .sum())
    }

    pub fn rayleigh_quotient(&self, u: &[f64]) -> Result<f64> {
        let denom = self.mass_inner(u, u)?;
        if denom == 0.0 {
            return Err(Error::DegenerateDivision);
        }
        Ok(self.quadratic_form(u)? / denom)
    }

    /// `(S + M V) u`, the operator in weak form.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), u.len())?;
        let mut y = self.stiffness().mul_vec(u);
        for (yi, (pv, ui)) in y.iter_mut().zip(self.potential_mass.iter().zip(u)) {
            *yi += pv * ui;
        }
        Ok(y)
    }

    /// Strong-form application `M⁻¹ (S + M V) u`, i.e. the discrete `(-Δ + V) u`.
    pub fn apply_strong(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.apply(u)?;
        for (yi, m) in y.iter_mut().zip(self.mass()) {
            *yi /= m;
        }
        Ok(y)
    }

    /// The full pencil `(S + M V, M)`.
    pub fn pencil(&self) -> Pencil {
        Pencil {
            stiffness: self.stiffness().plus_diagonal(&self.potential_mass),
            mass: self.mass().to_vec(),
        }
    }
}

/// Dirichlet restriction of an operator to the vertices outside a hole set.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedPencil {
    pub pencil: Pencil,
    /// `free[r]` is the full index of restricted coordinate `r`.
    pub free: Vec<usize>,
    pub n_full: usize,
}

impl RestrictedPencil {
    /// Re-embed a restricted vector with exact zeros on the hole.
    pub fn embed(&self, restricted: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full];
        for (&i, &v) in self.free.iter().zip(restricted) {
            full[i] = v;
        }
        full
    }
}

/// Delete the rows and columns indexed by the hole from `S + MV` and `M`.
pub fn restrict_dirichlet(op: &SchrodingerOperator<'_>, hole: &HoleSet) -> Result<RestrictedPencil> {
    let n = op.n();
    if let Some(&bad) = hole.indices().iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let full = op.pencil();
    if hole.is_empty() {
        return Ok(RestrictedPencil {
            pencil: full,
            free: (0..n).collect(),
            n_full: n,
        });
    }
    let free = hole.complement(n);
    if free.is_empty() {
        return Err(Error::EmptyDomain);
    }
    Ok(RestrictedPencil {
        pencil: Pencil {
            stiffness: full.stiffness.principal_submatrix(&free),
            mass: free.iter().map(|&i| full.mass[i]).collect(),
        },
        free,
        n_full: n,
    })
}
