//! Lowest eigenpairs of `(S + MV) e = λ M e` on the full manifold and on `M - A`.
//!
//! With `M` diagonal the pencil is reduced to the symmetric matrix
//! `A = M^{-1/2} (S + MV) M^{-1/2}`; eigenvectors of `A` map back through
//! `e = M^{-1/2} y` and come out mass-orthonormal.
//!
//! Two backends share this reduction:
//!
//! - `Dense`: full symmetric eigendecomposition of `A`. Used as the oracle.
//! - `Iterative`: restarted block Lanczos on the shift-invert operator `A^{-1}`
//!   (shift 0 is admissible because `min V > 0` makes the pencil definite).
//!   Inner solves use conjugate gradients on the sparse stiffness; every
//!   restart ends with an exact Rayleigh–Ritz projection so the returned
//!   residuals are true residuals.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::HoleSet;
use crate::operator::{Pencil, SchrodingerOperator};
use crate::sparse::{conjugate_gradient, dot, norm};

pub use crate::operator::{restrict_dirichlet, RestrictedPencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub backend: Backend,
    /// Relative residual target, see [`Spectrum::residuals`].
    pub tolerance: f64,
    /// Restart cap of the iterative backend.
    pub max_iterations: usize,
    /// Seed of the iterative start block.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Dense,
            tolerance: 1e-9,
            max_iterations: 200,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn iterative() -> Self {
        Self {
            backend: Backend::Iterative,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainTag {
    Full,
    Holes(HoleSet),
}

/// The `k` lowest eigenpairs of a pencil.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `n × k`, mass-orthonormal columns; exact zeros on the hole when restricted.
    pub eigenvectors: DMatrix<f64>,
    pub domain: DomainTag,
    /// `‖(S+MV)e − λMe‖ / ((‖S+MV‖_∞ + |λ| max m) ‖e‖)` per pair.
    pub residuals: Vec<f64>,
    /// Seed used for the iterative start block.
    pub seed: u64,
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j).iter().copied().collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `max |⟨e_i, e_j⟩_M − δ_ij|`.
    pub fn mass_gram_defect(&self, mass: &[f64]) -> f64 {
        let k = self.k();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let g: f64 = (0..mass.len())
                    .map(|r| mass[r] * self.eigenvectors[(r, i)] * self.eigenvectors[(r, j)])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Smallest `|e_1|` entry and whether all entries share one strict sign.
    pub fn ground_state_sign(&self) -> (f64, bool) {
        let col = self.eigenvectors.column(0);
        let min_abs = col.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        let all_pos = col.iter().all(|&x| x > 0.0);
        let all_neg = col.iter().all(|&x| x < 0.0);
        (min_abs, all_pos || all_neg)
    }
}

/// `k` lowest eigenpairs on the full manifold. `e_1` is normalized to have
/// positive mass-weighted mean.
pub fn solve_spectrum(
    op: &SchrodingerOperator<'_>,
    k: usize,
    opts: &SolverOptions,
) -> Result<Spectrum> {
    let pencil = op.pencil();
    let (values, vectors, residuals) = solve_pencil(&pencil, k, opts)?;
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
        domain: DomainTag::Full,
        residuals,
        seed: opts.seed,
    })
}

/// `k` lowest Dirichlet eigenpairs on `M − A`, re-embedded in length `n`.
pub fn solve_spectrum_holes(
    op: &SchrodingerOperator<'_>,
    hole: &HoleSet,
    k: usize,
    opts: &SolverOptions,
) -> Result<Spectrum> {
    let restricted = restrict_dirichlet(op, hole)?;
    let dim = restricted.pencil.dim();
    if k > dim {
        return Err(Error::Size { requested: k, dim });
    }
    let (values, small, residuals) = solve_pencil(&restricted.pencil, k, opts)?;
    let mut vectors = DMatrix::zeros(restricted.n_full, k);
    for j in 0..k {
        for (r, &full) in restricted.free.iter().enumerate() {
            vectors[(full, j)] = small[(r, j)];
        }
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
        domain: DomainTag::Holes(hole.clone()),
        residuals,
        seed: opts.seed,
    })
}

/// Solve a generalized pencil with the configured backend.
///
/// Returns ascending eigenvalues, mass-orthonormal eigenvectors with
/// positive mass-weighted mean (columns whose mean vanishes are left as the
/// solver produced them) and relative residuals.
pub fn solve_pencil(
    pencil: &Pencil,
    k: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>)> {
    let n = pencil.dim();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k > n {
        return Err(Error::Size { requested: k, dim: n });
    }
    let (values, mut vectors) = match opts.backend {
        Backend::Dense => dense_lowest(pencil, k),
        Backend::Iterative => lanczos_lowest(pencil, k, opts)?,
    };
    for j in 0..k {
        let mean: f64 = (0..n).map(|i| pencil.mass[i] * vectors[(i, j)]).sum();
        let scale: f64 = vectors.column(j).iter().map(|x| x.abs()).sum::<f64>()
            * pencil.mass.iter().copied().fold(0.0, f64::max);
        if mean < -1e-12 * scale {
            vectors.column_mut(j).neg_mut();
        }
    }
    let residuals = relative_residuals(pencil, &values, &vectors);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > opts.tolerance {
        return Err(Error::Convergence {
            iterations: match opts.backend {
                Backend::Dense => 1,
                Backend::Iterative => opts.max_iterations,
            },
            worst_residual: worst,
        });
    }
    Ok((values, vectors, residuals))
}

pub(crate) fn relative_residuals(pencil: &Pencil, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    let k_norm = pencil.stiffness.norm_inf();
    let m_max = pencil.mass.iter().copied().fold(0.0, f64::max);
    (0..values.len())
        .map(|j| {
            let e: Vec<f64> = vectors.column(j).iter().copied().collect();
            let mut r = pencil.stiffness.mul_vec(&e);
            for (i, ri) in r.iter_mut().enumerate() {
                *ri -= values[j] * pencil.mass[i] * e[i];
            }
            norm(&r) / ((k_norm + values[j].abs() * m_max) * norm(&e))
        })
        .collect()
}

/// `M^{-1/2} K M^{-1/2}` as a dense symmetric matrix (exactly symmetric).
fn reduced_dense(pencil: &Pencil) -> DMatrix<f64> {
    let n = pencil.dim();
    let inv_sqrt: Vec<f64> = pencil.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for (i, j, v) in pencil.stiffness.triplets() {
        a[(i, j)] = v * (inv_sqrt[i] * inv_sqrt[j]);
    }
    a
}

/// Ascending eigenpairs of a symmetric matrix.
pub(crate) fn sorted_symmetric_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

fn dense_lowest(pencil: &Pencil, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = pencil.dim();
    let (values, y) = sorted_symmetric_eigen(reduced_dense(pencil));
    let mut vectors = DMatrix::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            vectors[(i, j)] = y[(i, j)] / pencil.mass[i].sqrt();
        }
    }
    (values[..k].to_vec(), vectors)
}

/// Restarted block Lanczos on the shift-invert operator `T = A^{-1}`.
fn lanczos_lowest(pencil: &Pencil, k: usize, opts: &SolverOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = pencil.dim();
    let sqrt_m: Vec<f64> = pencil.mass.iter().map(|m| m.sqrt()).collect();
    let block = (k + 4).min(n);
    let max_basis = n.min((4 * block).max(2 * k + 24));
    let cg_max = 20 * n + 100;

    // y-space: A y = M^{-1/2} K M^{-1/2} y.
    let apply_a = |y: &[f64]| -> Vec<f64> {
        let x: Vec<f64> = y.iter().zip(&sqrt_m).map(|(v, s)| v / s).collect();
        let kx = pencil.stiffness.mul_vec(&x);
        kx.iter().zip(&sqrt_m).map(|(v, s)| v / s).collect()
    };
    let apply_t = |y: &[f64]| -> Vec<f64> {
        let rhs: Vec<f64> = y.iter().zip(&sqrt_m).map(|(v, s)| v * s).collect();
        let (x, _) = conjugate_gradient(&pencil.stiffness, &rhs, 1e-14, cg_max);
        x.iter().zip(&sqrt_m).map(|(v, s)| v * s).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let mut best: Option<(Vec<f64>, DMatrix<f64>)> = None;
    for _restart in 0..opts.max_iterations.max(1) {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
        let mut current = start.clone();
        while basis.len() < max_basis {
            let mut added = Vec::new();
            for mut v in current {
                if basis.len() >= max_basis {
                    break;
                }
                if orthonormalize(&mut v, &basis) {
                    basis.push(v.clone());
                    added.push(v);
                }
            }
            if added.is_empty() {
                break;
            }
            current = added.iter().map(|v| apply_t(v)).collect();
        }
        if basis.len() < k {
            // Krylov space exhausted early: pad with fresh random directions.
            while basis.len() < k.max(block).min(n) {
                let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                if orthonormalize(&mut v, &basis) {
                    basis.push(v);
                }
            }
        }

        // Rayleigh–Ritz with the exact operator.
        let m = basis.len();
        let images: Vec<Vec<f64>> = basis.iter().map(|v| apply_a(v)).collect();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (theta, z) = sorted_symmetric_eigen(h);
        let ritz = |c: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (b, v) in basis.iter().enumerate() {
                let w = z[(b, c)];
                for i in 0..n {
                    y[i] += w * v[i];
                }
            }
            y
        };
        let keep = block.min(m);
        let ritz_vectors: Vec<Vec<f64>> = (0..keep).map(ritz).collect();

        let mut vectors = DMatrix::zeros(n, k);
        for j in 0..k {
            for i in 0..n {
                vectors[(i, j)] = ritz_vectors[j][i] / sqrt_m[i];
            }
        }
        let values = theta[..k].to_vec();
        let residuals = relative_residuals(pencil, &values, &vectors);
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        log::trace!("block lanczos restart: basis {m}, worst residual {worst:e}");
        best = Some((values, vectors));
        // Converge a notch below the caller's tolerance so the final check
        // does not flap on rounding.
        if worst <= 0.1 * opts.tolerance || m == n {
            break;
        }
        start = ritz_vectors;
    }
    best.ok_or(Error::Convergence {
        iterations: opts.max_iterations,
        worst_residual: f64::INFINITY,
    })
}

/// Two passes of classical Gram–Schmidt against `basis`, then normalize.
/// Returns false when `v` is numerically in the span.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let original = norm(v);
    if original == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
    }
    let remaining = norm(v);
    if remaining <= 1e-10 * original {
        return false;
    }
    for vi in v.iter_mut() {
        *vi /= remaining;
    }
    true
}

/// Largest eigenvalue of a small definite pencil `(K, G)`, together with the
/// smallest eigenvalue of `G` (its conditioning).
pub(crate) fn small_pencil_extremes(k: &DMatrix<f64>, g: &DMatrix<f64>) -> Option<(f64, f64)> {
    let (g_vals, _) = sorted_symmetric_eigen(g.clone());
    let min_g = g_vals[0];
    let chol = g.clone().cholesky()?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse()?;
    let c = &l_inv * k * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let (vals, _) = sorted_symmetric_eigen(c);
    Some((*vals.last()?, min_g))
}
