//! Schrödinger capacity of a hole set and the test functions that certify
//! the eigenvalue upper bound.
//!
//! `cap(A)` is the minimum of `Q(u)` over mean-zero `u` that agree with the
//! ground state `e_1` on `A`. Pinned coordinates are substituted into the
//! right-hand side, and the single mean constraint is eliminated through its
//! Schur complement, so the constraints hold exactly.

use nalgebra::{DMatrix, DVector};

use crate::eigen::{small_pencil_extremes, sorted_symmetric_eigen, DomainTag, Spectrum};
use crate::error::{check_len, Error, Result};
use crate::mesh::HoleSet;
use crate::operator::SchrodingerOperator;
use crate::sparse::{conjugate_gradient, dot, norm, CsrMatrix};

/// Free-block systems up to this size are factored densely.
const DENSE_KKT_LIMIT: usize = 800;

/// Threshold on the smallest eigenvalue of the test-function mass Gram.
pub const DIM_THRESHOLD: f64 = 1e-8;

/// How the free-coordinate block of the KKT system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KktSolver {
    #[default]
    Auto,
    DenseCholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    /// `Q(u_A)`.
    pub cap: f64,
    /// `u_A`, length n.
    pub minimizer: Vec<f64>,
    /// `μ` in `(S + MV) u_A + μ m = 0` on the free coordinates.
    pub lagrange_mean: f64,
    /// Norm of the stationarity residual on the free coordinates.
    pub kkt_residual: f64,
    pub hole: HoleSet,
    /// `min |e_1|` over the hole (infinite for an empty hole).
    pub min_abs_e1_on_hole: f64,
}

impl CapacityResult {
    pub fn mass_norm_sq(&self, op: &SchrodingerOperator<'_>) -> f64 {
        op.mass_inner(&self.minimizer, &self.minimizer)
            .expect("minimizer has manifold length")
    }
}

/// Minimize `Q(u)` subject to `u_i = e1_i` on the hole and `Σ m_i u_i = 0`.
pub fn compute_capacity(
    op: &SchrodingerOperator<'_>,
    hole: &HoleSet,
    e1: &[f64],
) -> Result<CapacityResult> {
    compute_capacity_with(op, hole, e1, KktSolver::Auto)
}

pub fn compute_capacity_with(
    op: &SchrodingerOperator<'_>,
    hole: &HoleSet,
    e1: &[f64],
    solver: KktSolver,
) -> Result<CapacityResult> {
    let n = op.n();
    check_len(n, e1.len())?;
    if let Some(&bad) = hole.indices().iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let free = hole.complement(n);
    if free.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mass = op.mass();
    let pencil = op.pencil();

    // Pinned part of u and its contribution to the free rows.
    let mut pinned = vec![0.0; n];
    for &i in hole.indices() {
        pinned[i] = e1[i];
    }
    let k_pinned = pencil.stiffness.mul_vec(&pinned);
    let rhs_pin: Vec<f64> = free.iter().map(|&i| -k_pinned[i]).collect();
    let mass_free: Vec<f64> = free.iter().map(|&i| mass[i]).collect();
    let pinned_mass: f64 = hole.indices().iter().map(|&i| mass[i] * e1[i]).sum();

    let k_ff = pencil.stiffness.principal_submatrix(&free);
    let solver = match solver {
        KktSolver::Auto if free.len() <= DENSE_KKT_LIMIT => KktSolver::DenseCholesky,
        KktSolver::Auto => KktSolver::ConjugateGradient,
        s => s,
    };
    let [y_pin, y_mass] = solve_free_block(&k_ff, [&rhs_pin, &mass_free], solver)?;

    let schur = dot(&mass_free, &y_mass);
    if !(schur > 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "mean-constraint Schur complement {schur:e} is not positive"
        )));
    }
    // m_Fᵀ x = −Σ_A m_i e1_i with x = y_pin − μ y_mass.
    let mu = (dot(&mass_free, &y_pin) + pinned_mass) / schur;
    let mut u = pinned;
    for (r, &i) in free.iter().enumerate() {
        u[i] = y_pin[r] - mu * y_mass[r];
    }

    let ku = pencil.stiffness.mul_vec(&u);
    let stationarity: Vec<f64> = free.iter().map(|&i| ku[i] + mu * mass[i]).collect();
    let kkt_residual = norm(&stationarity);
    let cap = op.quadratic_form(&u)?;
    let min_abs_e1_on_hole = hole
        .indices()
        .iter()
        .map(|&i| e1[i].abs())
        .fold(f64::INFINITY, f64::min);
    Ok(CapacityResult {
        cap,
        minimizer: u,
        lagrange_mean: mu,
        kkt_residual,
        hole: hole.clone(),
        min_abs_e1_on_hole,
    })
}

fn solve_free_block<const R: usize>(
    k_ff: &CsrMatrix,
    rhs: [&[f64]; R],
    solver: KktSolver,
) -> Result<[Vec<f64>; R]> {
    match solver {
        KktSolver::DenseCholesky | KktSolver::Auto => {
            let chol = k_ff.to_dense().cholesky().ok_or_else(|| {
                Error::NumericalDegeneracy("free block of Q is not positive definite".into())
            })?;
            Ok(rhs.map(|b| {
                let mut x = chol.solve(&DVector::from_column_slice(b));
                // One step of iterative refinement against the sparse matrix.
                let xs: Vec<f64> = x.iter().copied().collect();
                let ax = k_ff.mul_vec(&xs);
                let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                x += chol.solve(&DVector::from_vec(r));
                x.iter().copied().collect()
            }))
        }
        KktSolver::ConjugateGradient => {
            let max_iter = 20 * k_ff.n() + 100;
            let mut out = Vec::with_capacity(R);
            for b in rhs {
                let (x, report) = conjugate_gradient(k_ff, b, 1e-15, max_iter);
                if !(report.relative_residual <= 1e-12) {
                    return Err(Error::NumericalDegeneracy(format!(
                        "conjugate gradient stalled at relative residual {:e}",
                        report.relative_residual
                    )));
                }
                out.push(x);
            }
            Ok(out.try_into().expect("one solution per right-hand side"))
        }
    }
}

/// `cap / λ_1 − ‖u_A‖²_M`; nonnegative by the Poincaré inequality.
pub fn poincare_slack(op: &SchrodingerOperator<'_>, lam1: f64, r: &CapacityResult) -> Result<f64> {
    check_len(op.n(), r.minimizer.len())?;
    Ok(r.cap / lam1 - op.mass_inner(&r.minimizer, &r.minimizer)?)
}

/// Test functions `φ_j = e_j (1 − u_A / e_1)` and their Gram data.
#[derive(Debug, Clone)]
pub struct TestFunctionBundle {
    /// `n × k`.
    pub phis: DMatrix<f64>,
    /// `⟨φ_i, φ_j⟩_M`.
    pub gram: DMatrix<f64>,
    /// `Q(φ_i, φ_j)`.
    pub energy: DMatrix<f64>,
    /// `max |gram − I|`.
    pub gram_defect: f64,
    /// Entry `j − 1` is the largest Rayleigh quotient over `span(φ_1..φ_j)`,
    /// absent when that span is numerically degenerate.
    pub rayleigh_values: Vec<Option<f64>>,
    /// `span(φ_1..φ_k)` has full dimension.
    pub dim_ok: bool,
    /// Smallest eigenvalue of the full Gram matrix.
    pub min_gram_eig: f64,
    pub min_abs_e1: f64,
}

impl TestFunctionBundle {
    pub fn k(&self) -> usize {
        self.phis.ncols()
    }

    /// Largest Rayleigh quotient over the first `j` test functions.
    pub fn witness(&self, j: usize) -> Option<f64> {
        self.rayleigh_values.get(j.checked_sub(1)?).copied().flatten()
    }

    /// `max |⟨φ_a, φ_b⟩ − δ_ab|` over `a, b ≤ j`.
    pub fn gram_defect_leading(&self, j: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..j {
            for b in 0..j {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((self.gram[(a, b)] - target).abs());
            }
        }
        worst
    }

    /// `min_{a ≤ j} ‖φ_a‖²_M`.
    pub fn min_column_norm_sq(&self, j: usize) -> f64 {
        (0..j).map(|a| self.gram[(a, a)]).fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue of the leading `j × j` Gram block.
    pub fn min_gram_eig_leading(&self, j: usize) -> f64 {
        let (vals, _) = sorted_symmetric_eigen(self.gram.view((0, 0), (j, j)).into_owned());
        vals[0]
    }
}

/// Build `φ_j = e_j (1 − u_A/e_1)` for `j = 1..k` from a full-manifold spectrum.
pub fn build_test_functions(
    op: &SchrodingerOperator<'_>,
    spec: &Spectrum,
    r: &CapacityResult,
    k: usize,
) -> Result<TestFunctionBundle> {
    let n = op.n();
    if spec.domain != DomainTag::Full {
        return Err(Error::InvalidParameter(
            "test functions need the full-manifold spectrum".into(),
        ));
    }
    if k == 0 || k > spec.k() {
        return Err(Error::Size {
            requested: k,
            dim: spec.k(),
        });
    }
    check_len(n, r.minimizer.len())?;
    check_len(n, spec.eigenvectors.nrows())?;
    let e1 = spec.eigenvector(0);
    let min_abs_e1 = e1.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if !(min_abs_e1 > 0.0) {
        return Err(Error::SignDefiniteness { min_abs: min_abs_e1 });
    }
    let factor: Vec<f64> = (0..n)
        .map(|i| {
            if r.hole.contains(i) {
                0.0
            } else {
                1.0 - r.minimizer[i] / e1[i]
            }
        })
        .collect();
    let phis = DMatrix::from_fn(n, k, |i, j| spec.eigenvectors[(i, j)] * factor[i]);
    let cols: Vec<Vec<f64>> = (0..k).map(|j| phis.column(j).iter().copied().collect()).collect();

    let mut gram = DMatrix::zeros(k, k);
    let mut energy = DMatrix::zeros(k, k);
    let stiffness = op.stiffness();
    let images: Vec<Vec<f64>> = cols.iter().map(|c| stiffness.mul_vec(c)).collect();
    for a in 0..k {
        for b in a..k {
            let g = op.mass_inner(&cols[a], &cols[b])?;
            let pv: f64 = (0..n)
                .map(|i| op.potential_mass()[i] * cols[a][i] * cols[b][i])
                .sum();
            let s = 0.5 * (dot(&cols[a], &images[b]) + dot(&cols[b], &images[a]));
            gram[(a, b)] = g;
            gram[(b, a)] = g;
            energy[(a, b)] = s + pv;
            energy[(b, a)] = s + pv;
        }
    }
    let gram_defect = (&gram - DMatrix::identity(k, k)).abs().max();

    let rayleigh_values = (1..=k)
        .map(|j| {
            let g = gram.view((0, 0), (j, j)).into_owned();
            let e = energy.view((0, 0), (j, j)).into_owned();
            match small_pencil_extremes(&e, &g) {
                Some((top, min_g)) if min_g > DIM_THRESHOLD => Some(top),
                _ => None,
            }
        })
        .collect();
    let (gram_vals, _) = sorted_symmetric_eigen(gram.clone());
    let min_gram_eig = gram_vals[0];
    Ok(TestFunctionBundle {
        phis,
        gram,
        energy,
        gram_defect,
        rayleigh_values,
        dim_ok: min_gram_eig > DIM_THRESHOLD,
        min_gram_eig,
        min_abs_e1,
    })
}

/// Per-k evidence for `λ_k(M) ≤ λ_k(M−A) ≤ max_{span φ} R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCertificate {
    pub k: usize,
    pub lambda_full: f64,
    pub lambda_holes: f64,
    /// `λ_k(M−A) − λ_k(M)`.
    pub gap: f64,
    /// Largest Rayleigh quotient over `span(φ_1..φ_k)`.
    pub witness: f64,
}

impl BoundCertificate {
    pub fn lower_holds(&self) -> bool {
        self.gap >= -1e-10
    }

    pub fn upper_holds(&self) -> bool {
        self.lambda_holes <= self.witness + 1e-9 * (1.0 + self.witness.abs())
    }
}

pub fn bound_certificate(
    spec_full: &Spectrum,
    spec_holes: &Spectrum,
    bundle: &TestFunctionBundle,
    k: usize,
) -> Result<BoundCertificate> {
    let available = spec_full.k().min(spec_holes.k()).min(bundle.k());
    if k == 0 || k > available {
        return Err(Error::Size {
            requested: k,
            dim: available,
        });
    }
    let lambda_full = spec_full.eigenvalues[k - 1];
    let lambda_holes = spec_holes.eigenvalues[k - 1];
    let witness = bundle
        .witness(k)
        .ok_or_else(|| Error::CertificateUnavailable {
            k,
            min_gram_eig: bundle.min_gram_eig_leading(k),
        })?;
    Ok(BoundCertificate {
        k,
        lambda_full,
        lambda_holes,
        gap: lambda_holes - lambda_full,
        witness,
    })
}

/// Largest Rayleigh quotient over `span(e_1..e_k)`; equals `λ_k(M)`.
pub fn eigenspan_max_rayleigh(op: &SchrodingerOperator<'_>, spec: &Spectrum, k: usize) -> Result<f64> {
    if k == 0 || k > spec.k() {
        return Err(Error::Size {
            requested: k,
            dim: spec.k(),
        });
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|j| spec.eigenvector(j)).collect();
    let mut g = DMatrix::zeros(k, k);
    let mut e = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            g[(a, b)] = op.mass_inner(&cols[a], &cols[b])?;
            let applied = op.apply(&cols[b])?;
            e[(a, b)] = dot(&cols[a], &applied);
        }
    }
    let e = (&e + e.transpose()) * 0.5;
    small_pencil_extremes(&e, &g)
        .map(|(top, _)| top)
        .ok_or_else(|| Error::NumericalDegeneracy("eigenvector Gram is singular".into()))
}
