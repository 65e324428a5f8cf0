//! Discrete closed manifolds (periodic ring and flat torus) and vertex hole sets.
//!
//! A manifold carries a lumped volume weight per vertex and a finite-difference
//! stiffness matrix whose quadratic form approximates `∫ |du|² dV`. Stiffness
//! entries are assembled edge by edge, so the matrix is exactly symmetric, has
//! nonpositive off-diagonals and annihilates constants.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::sparse::CsrMatrix;

/// Construction record used for refinement and reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManifoldKind {
    Ring { n: usize, circumference: f64 },
    Torus { nx: usize, ny: usize, lx: f64, ly: f64 },
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ManifoldKind::Ring { n, circumference } => {
                write!(f, "ring(n={n};L={circumference})")
            }
            ManifoldKind::Torus { nx, ny, lx, ly } => {
                write!(f, "torus(nx={nx};ny={ny};lx={lx};ly={ly})")
            }
        }
    }
}

/// Position of a vertex in the periodic coordinate box.
///
/// `lattice` is the `(i, j)` grid index (`j = 0` on the ring) and `position`
/// the corresponding periodic coordinates (arc length on the ring).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexCoord {
    pub lattice: (usize, usize),
    pub position: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct DiscreteManifold {
    dim: usize,
    volume_weights: Vec<f64>,
    stiffness: CsrMatrix,
    coordinates: Vec<VertexCoord>,
    /// Period of each coordinate axis; `0.0` marks an unused axis.
    periods: [f64; 2],
    metadata: Option<ManifoldKind>,
}

/// Periodic ring with `n` equally spaced vertices.
pub fn build_ring(n: usize, circumference: f64) -> Result<DiscreteManifold> {
    if n < 3 {
        return Err(Error::InvalidResolution(format!("ring needs n >= 3, got {n}")));
    }
    if !(circumference.is_finite() && circumference > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "circumference must be positive, got {circumference}"
        )));
    }
    let h = circumference / n as f64;
    let edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0 / h)).collect();
    let coordinates = (0..n)
        .map(|i| VertexCoord {
            lattice: (i, 0),
            position: [i as f64 * h, 0.0],
        })
        .collect();
    Ok(DiscreteManifold {
        dim: 1,
        volume_weights: vec![h; n],
        stiffness: assemble_edges(n, &edges),
        coordinates,
        periods: [circumference, 0.0],
        metadata: Some(ManifoldKind::Ring { n, circumference }),
    })
}

/// Flat `lx × ly` torus sampled on an `nx × ny` grid (vertex `i + nx·j`).
pub fn build_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<DiscreteManifold> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidResolution(format!(
            "torus needs nx, ny >= 3, got {nx}x{ny}"
        )));
    }
    for (name, len) in [("lx", lx), ("ly", ly)] {
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {len}"
            )));
        }
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let n = nx * ny;
    let idx = |i: usize, j: usize| i + nx * j;
    let mut edges = Vec::with_capacity(2 * n);
    for j in 0..ny {
        for i in 0..nx {
            edges.push((idx(i, j), idx((i + 1) % nx, j), hy / hx));
            edges.push((idx(i, j), idx(i, (j + 1) % ny), hx / hy));
        }
    }
    let mut coordinates = Vec::with_capacity(n);
    for j in 0..ny {
        for i in 0..nx {
            coordinates.push(VertexCoord {
                lattice: (i, j),
                position: [i as f64 * hx, j as f64 * hy],
            });
        }
    }
    Ok(DiscreteManifold {
        dim: 2,
        volume_weights: vec![hx * hy; n],
        stiffness: assemble_edges(n, &edges),
        coordinates,
        periods: [lx, ly],
        metadata: Some(ManifoldKind::Torus { nx, ny, lx, ly }),
    })
}

/// Same model with every resolution parameter doubled.
pub fn refine(m: &DiscreteManifold) -> Result<DiscreteManifold> {
    match m.metadata {
        Some(ManifoldKind::Ring { n, circumference }) => build_ring(2 * n, circumference),
        Some(ManifoldKind::Torus { nx, ny, lx, ly }) => build_torus(2 * nx, 2 * ny, lx, ly),
        None => Err(Error::CannotRefine),
    }
}

/// Graph-Laplacian assembly: each edge `(i, j, w)` contributes `w (u_i - u_j)²`.
fn assemble_edges(n: usize, edges: &[(usize, usize, f64)]) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(4 * edges.len());
    for &(i, j, w) in edges {
        triplets.push((i, i, w));
        triplets.push((j, j, w));
        triplets.push((i, j, -w));
        triplets.push((j, i, -w));
    }
    CsrMatrix::from_triplets(n, &triplets)
}

impl DiscreteManifold {
    /// Assemble a manifold from a weighted edge list. Such manifolds carry no
    /// construction metadata and cannot be refined.
    pub fn from_edges(
        dim: usize,
        volume_weights: Vec<f64>,
        edges: &[(usize, usize, f64)],
        coordinates: Vec<VertexCoord>,
        periods: [f64; 2],
    ) -> Result<Self> {
        let n = volume_weights.len();
        check_len(n, coordinates.len())?;
        if n == 0 {
            return Err(Error::InvalidResolution("no vertices".into()));
        }
        if let Some(w) = volume_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "volume weights must be positive, found {w}"
            )));
        }
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), n });
            }
            if i == j || !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) must join distinct vertices with positive weight"
                )));
            }
        }
        Ok(Self {
            dim,
            volume_weights,
            stiffness: assemble_edges(n, edges),
            coordinates,
            periods,
            metadata: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.volume_weights.len()
    }

    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn coordinates(&self) -> &[VertexCoord] {
        &self.coordinates
    }

    pub fn metadata(&self) -> Option<ManifoldKind> {
        self.metadata
    }

    pub fn total_volume(&self) -> f64 {
        self.volume_weights.iter().sum()
    }

    /// Human-readable construction record.
    pub fn descriptor(&self) -> String {
        match self.metadata {
            Some(kind) => kind.to_string(),
            None => format!("custom(n={};dim={})", self.n_vertices(), self.dim),
        }
    }

    /// Geodesic distance in the flat periodic metric on coordinates.
    pub fn periodic_distance(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.coordinates[a].position, self.coordinates[b].position);
        let mut sq = 0.0;
        for axis in 0..2 {
            let mut d = (pa[axis] - pb[axis]).abs();
            let period = self.periods[axis];
            if period > 0.0 {
                d %= period;
                d = d.min(period - d);
            }
            sq += d * d;
        }
        sq.sqrt()
    }

    /// Vertex closest (in the periodic metric) to the given coordinates.
    pub fn nearest_vertex(&self, point: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (v, c) in self.coordinates.iter().enumerate() {
            let mut sq = 0.0;
            for axis in 0..2 {
                let mut d = (c.position[axis] - point[axis]).abs();
                let period = self.periods[axis];
                if period > 0.0 {
                    d = d.rem_euclid(period);
                    d = d.min(period - d);
                }
                sq += d * d;
            }
            if sq < best.0 {
                best = (sq, v);
            }
        }
        best.1
    }

    /// Evaluate a function of the periodic coordinates at every vertex.
    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        self.coordinates.iter().map(|c| f(c.position)).collect()
    }

    pub fn periods(&self) -> [f64; 2] {
        self.periods
    }
}

/// Geometric origin of a hole set built by [`hole_ball`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleDescriptor {
    pub center: usize,
    pub radius: f64,
}

/// Excised vertex set `A`, stored as strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HoleSet {
    indices: Vec<usize>,
    descriptor: Option<HoleDescriptor>,
}

impl HoleSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from arbitrary indices; duplicates are merged, range is checked.
    pub fn new<I: IntoIterator<Item = usize>>(indices: I, n_vertices: usize) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&i| i >= n_vertices) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                n: n_vertices,
            });
        }
        Ok(Self {
            indices: set.into_iter().collect(),
            descriptor: None,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn descriptor(&self) -> Option<HoleDescriptor> {
        self.descriptor
    }

    pub fn is_subset(&self, other: &HoleSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Vertices not in the hole, in increasing order.
    pub fn complement(&self, n_vertices: usize) -> Vec<usize> {
        (0..n_vertices).filter(|&i| !self.contains(i)).collect()
    }
}

/// All vertices within periodic distance `radius` of `center`.
pub fn hole_ball(m: &DiscreteManifold, center: usize, radius: f64) -> Result<HoleSet> {
    let n = m.n_vertices();
    if center >= n {
        return Err(Error::IndexOutOfRange { index: center, n });
    }
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "hole radius must be nonnegative, got {radius}"
        )));
    }
    let indices = (0..n)
        .filter(|&v| v == center || m.periodic_distance(center, v) <= radius)
        .collect();
    Ok(HoleSet {
        indices,
        descriptor: Some(HoleDescriptor { center, radius }),
    })
}

/// Default side length of the model manifolds.
pub const DEFAULT_PERIOD: f64 = 2.0 * PI;
