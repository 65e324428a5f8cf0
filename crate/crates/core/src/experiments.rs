//! Hole-radius sweeps that check the eigenvalue perturbation bound row by row
//! and estimate the empirical constants `C_k`, `B` and `J`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::capacity::{bound_certificate, build_test_functions, compute_capacity, poincare_slack};
use crate::eigen::{solve_spectrum, solve_spectrum_holes, SolverOptions, Spectrum};
use crate::error::{Error, Result};
use crate::mesh::{hole_ball, DiscreteManifold, HoleSet};
use crate::operator::{assemble, PotentialSpec, SchrodingerOperator};

/// Sign-contract tolerances shared by every row.
pub const GAP_TOL: f64 = 1e-10;
pub const SLACK_TOL: f64 = 1e-10;
pub const WITNESS_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub manifold: DiscreteManifold,
    pub potential: PotentialSpec,
    pub center: usize,
    /// Hole radii; a negative radius selects the empty hole.
    pub radii: Vec<f64>,
    pub k_min: usize,
    pub k_max: usize,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// `span(φ_1..φ_k)` is degenerate; the hole is too large for the bound.
    CertificateUnavailable,
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::CertificateUnavailable => "certificate-unavailable".into(),
            RowStatus::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

/// One `(radius, k)` point of a sweep. Numeric fields of failed rows are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub manifold: String,
    pub hole_center: usize,
    pub hole_radius: f64,
    pub hole_size: usize,
    pub k: usize,
    pub cap: f64,
    pub lambda_full: f64,
    pub lambda_holes: f64,
    pub gap: f64,
    pub sqrt_cap: f64,
    /// `gap / √cap`; absent when `cap = 0`.
    pub ratio: Option<f64>,
    pub witness: Option<f64>,
    pub gram_defect: f64,
    pub poincare_slack: f64,
    pub residual_max: f64,
    /// `min_{j ≤ k} ‖φ_j‖²_M`.
    pub min_norm_sq: f64,
    pub status: RowStatus,
}

pub const CSV_HEADER: [&str; 17] = [
    "manifold",
    "hole_center",
    "hole_radius",
    "hole_size",
    "k",
    "cap",
    "lambda_full",
    "lambda_holes",
    "gap",
    "sqrt_cap",
    "ratio",
    "witness",
    "gram_defect",
    "poincare_slack",
    "residual_max",
    "min_norm_sq",
    "status",
];

impl SweepRow {
    /// Broken sign contracts, as human-readable descriptions.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let RowStatus::Failed(msg) = &self.status {
            out.push(format!("row failed: {msg}"));
            return out;
        }
        if !(self.gap >= -GAP_TOL) {
            out.push(format!("gap {:e} < -{GAP_TOL:e}", self.gap));
        }
        if !(self.poincare_slack >= -SLACK_TOL) {
            out.push(format!("poincare slack {:e} < -{SLACK_TOL:e}", self.poincare_slack));
        }
        if let Some(w) = self.witness {
            if !(self.lambda_holes <= w + WITNESS_REL_TOL * (1.0 + w.abs())) {
                out.push(format!(
                    "lambda_holes {} exceeds witness {w}",
                    self.lambda_holes
                ));
            }
        }
        out
    }

    fn failed(manifold: &str, center: usize, radius: f64, hole_size: usize, k: usize, err: &Error) -> Self {
        Self {
            manifold: manifold.to_string(),
            hole_center: center,
            hole_radius: radius,
            hole_size,
            k,
            cap: f64::NAN,
            lambda_full: f64::NAN,
            lambda_holes: f64::NAN,
            gap: f64::NAN,
            sqrt_cap: f64::NAN,
            ratio: None,
            witness: None,
            gram_defect: f64::NAN,
            poincare_slack: f64::NAN,
            residual_max: f64::NAN,
            min_norm_sq: f64::NAN,
            status: RowStatus::Failed(err.to_string()),
        }
    }
}

/// Run the full pipeline for every `(radius, k)` pair.
///
/// The full-manifold spectrum is computed once. Errors local to a radius are
/// recorded on that radius' rows and the sweep continues; only a failure of
/// the shared full-manifold solve aborts.
pub fn bound_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(Error::InvalidParameter(format!(
            "k range {}..={} is empty or starts at 0",
            cfg.k_min, cfg.k_max
        )));
    }
    let potential = cfg.potential.sample(&cfg.manifold)?;
    let op = assemble(&cfg.manifold, potential)?;
    let full = solve_spectrum(&op, cfg.k_max, &cfg.solver)?;
    let descriptor = cfg.manifold.descriptor();

    let mut rows: Vec<SweepRow> = cfg
        .radii
        .par_iter()
        .map(|&radius| radius_rows(cfg, &op, &full, &descriptor, radius))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| a.k.cmp(&b.k).then(a.hole_radius.total_cmp(&b.hole_radius)));
    Ok(rows)
}

fn radius_rows(
    cfg: &SweepConfig,
    op: &SchrodingerOperator<'_>,
    full: &Spectrum,
    descriptor: &str,
    radius: f64,
) -> Vec<SweepRow> {
    let ks = cfg.k_min..=cfg.k_max;
    let hole = if radius < 0.0 {
        Ok(HoleSet::empty())
    } else {
        hole_ball(&cfg.manifold, cfg.center, radius)
    };
    let hole = match hole {
        Ok(h) => h,
        Err(e) => {
            return ks
                .map(|k| SweepRow::failed(descriptor, cfg.center, radius, 0, k, &e))
                .collect()
        }
    };
    let size = hole.len();
    let fail_all = |e: Error| -> Vec<SweepRow> {
        ks.clone()
            .map(|k| SweepRow::failed(descriptor, cfg.center, radius, size, k, &e))
            .collect()
    };

    let e1 = full.eigenvector(0);
    let capacity = match compute_capacity(op, &hole, &e1) {
        Ok(c) => c,
        Err(e) => return fail_all(e),
    };
    let slack = match poincare_slack(op, full.eigenvalues[0], &capacity) {
        Ok(s) => s,
        Err(e) => return fail_all(e),
    };
    let bundle = match build_test_functions(op, full, &capacity, cfg.k_max) {
        Ok(b) => b,
        Err(e) => return fail_all(e),
    };
    let free_dim = op.n() - size;
    let holes = match solve_spectrum_holes(op, &hole, cfg.k_max.min(free_dim), &cfg.solver) {
        Ok(s) => s,
        Err(e) => return fail_all(e),
    };
    let sqrt_cap = capacity.cap.sqrt();
    let residual_max = full.max_residual().max(holes.max_residual());

    ks.map(|k| {
        if k > free_dim {
            return SweepRow::failed(
                descriptor,
                cfg.center,
                radius,
                size,
                k,
                &Error::Size {
                    requested: k,
                    dim: free_dim,
                },
            );
        }
        let lambda_full = full.eigenvalues[k - 1];
        let lambda_holes = holes.eigenvalues[k - 1];
        let gap = lambda_holes - lambda_full;
        let (witness, status) = match bound_certificate(full, &holes, &bundle, k) {
            Ok(cert) => (Some(cert.witness), RowStatus::Ok),
            Err(Error::CertificateUnavailable { .. }) => (None, RowStatus::CertificateUnavailable),
            Err(e) => return SweepRow::failed(descriptor, cfg.center, radius, size, k, &e),
        };
        SweepRow {
            manifold: descriptor.to_string(),
            hole_center: cfg.center,
            hole_radius: radius,
            hole_size: size,
            k,
            cap: capacity.cap,
            lambda_full,
            lambda_holes,
            gap,
            sqrt_cap,
            ratio: (capacity.cap > 0.0).then(|| gap / sqrt_cap),
            witness,
            gram_defect: bundle.gram_defect_leading(k),
            poincare_slack: slack,
            residual_max,
            min_norm_sq: bundle.min_column_norm_sq(k),
            status,
        }
    })
    .collect()
}

/// Empirical `C_k`: the largest `gap/√cap` over the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CkEstimate {
    pub k: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// `(radius, ratio)` in row order.
    pub support: Vec<(f64, f64)>,
}

pub fn estimate_ck(rows: &[SweepRow], k: usize) -> Result<CkEstimate> {
    let support: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.k == k && r.cap > 0.0 && !matches!(r.status, RowStatus::Failed(_)))
        .filter_map(|r| r.ratio.map(|q| (r.hole_radius, q)))
        .collect();
    if support.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 positive-capacity rows for k = {k}, found {}",
            support.len()
        )));
    }
    let mut ratios: Vec<f64> = support.iter().map(|&(_, q)| q).collect();
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let median_ratio = if ratios.len() % 2 == 0 {
        0.5 * (ratios[mid - 1] + ratios[mid])
    } else {
        ratios[mid]
    };
    Ok(CkEstimate {
        k,
        max_ratio: *ratios.last().expect("nonempty"),
        median_ratio,
        support,
    })
}

fn usable(rows: &[SweepRow], k: usize) -> impl Iterator<Item = &SweepRow> {
    rows.iter()
        .filter(move |r| r.k == k && r.cap > 0.0 && !matches!(r.status, RowStatus::Failed(_)))
}

/// Smallest `B` with `gram_defect ≤ B (√cap + cap)` on every positive-capacity row.
pub fn fit_gram_constant(rows: &[SweepRow], k: usize) -> Result<f64> {
    let fitted = usable(rows, k)
        .map(|r| r.gram_defect / (r.sqrt_cap + r.cap))
        .fold(f64::NEG_INFINITY, f64::max);
    if fitted.is_finite() {
        Ok(fitted)
    } else {
        Err(Error::InsufficientData(format!("no positive-capacity rows for k = {k}")))
    }
}

/// Smallest `J ≥ 0` with `min ‖φ_j‖² ≥ 1 − J √cap` on every positive-capacity row.
pub fn fit_norm_constant(rows: &[SweepRow], k: usize) -> Result<f64> {
    let mut any = false;
    let fitted = usable(rows, k)
        .inspect(|_| any = true)
        .map(|r| ((1.0 - r.min_norm_sq) / r.sqrt_cap).max(0.0))
        .fold(0.0, f64::max);
    if any {
        Ok(fitted)
    } else {
        Err(Error::InsufficientData(format!("no positive-capacity rows for k = {k}")))
    }
}

/// Smallest capacity at which the test functions degenerated, if any did.
pub fn smallest_degenerate_cap(rows: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .filter(|r| r.status == RowStatus::CertificateUnavailable)
        .map(|r| r.cap)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))))
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Write rows as CSV: header plus one record per row, reals with 17
/// significant digits, absent values as empty fields.
pub fn write_csv<W: Write>(rows: &[SweepRow], writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.manifold.clone(),
            r.hole_center.to_string(),
            real(r.hole_radius),
            r.hole_size.to_string(),
            r.k.to_string(),
            real(r.cap),
            real(r.lambda_full),
            real(r.lambda_holes),
            real(r.gap),
            real(r.sqrt_cap),
            optional(r.ratio),
            optional(r.witness),
            real(r.gram_defect),
            real(r.poincare_slack),
            real(r.residual_max),
            real(r.min_norm_sq),
            r.status.label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let io_err = |message: String| Error::Io {
        path: path.display().to_string(),
        message,
    };
    let file = File::create(path).map_err(|e| io_err(e.to_string()))?;
    write_csv(rows, file).map_err(|e| io_err(e.to_string()))
}
