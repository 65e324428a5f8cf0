use std::fmt::Write as _;
use std::path::PathBuf;

use holes_core::capacity::{compute_capacity, poincare_slack};
use holes_core::eigen::{solve_spectrum, solve_spectrum_holes, Backend, Spectrum};
use holes_core::experiments::{
    bound_sweep, emit_csv, estimate_ck, fit_gram_constant, fit_norm_constant, smallest_degenerate_cap,
    SweepConfig, SweepRow, CSV_HEADER, GAP_TOL, SLACK_TOL,
};
use holes_core::mesh::{hole_ball, DiscreteManifold, HoleSet};
use holes_core::operator::{assemble, Potential};
use holes_core::Error;
use thiserror::Error;

use crate::config::{ConfigError, HoleSpec, RunConfig};

/// Slack allowed below `min V` in the `λ_1 ≥ min V` check.
const LAMBDA1_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compute(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

/// Text printed by a command plus whether every checked inequality held.
#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub success: bool,
}

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

struct Prepared {
    manifold: DiscreteManifold,
    potential: Potential,
    center: usize,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let manifold = cfg.manifold.build()?;
    let potential = cfg.potential.sample(&manifold).map_err(|e| match e {
        Error::AssumptionViolated { min } => ConfigError::new(
            "potential.constant",
            format!("sampled potential has min V = {min}, need min V > 0"),
        ),
        other => ConfigError::new("potential", other.to_string()),
    })?;
    if cfg.k > manifold.n_vertices() {
        let e = Error::Size {
            requested: cfg.k,
            dim: manifold.n_vertices(),
        };
        return Err(ConfigError::new("run.k", e.to_string()).into());
    }
    let center = manifold.nearest_vertex(cfg.center_point());
    Ok(Prepared {
        manifold,
        potential,
        center,
    })
}

fn holes(cfg: &RunConfig, p: &Prepared) -> Result<Vec<(f64, HoleSet)>, CliError> {
    cfg.radii()
        .unwrap_or_default()
        .into_iter()
        .map(|r| {
            let set = if r < 0.0 {
                HoleSet::empty()
            } else {
                hole_ball(&p.manifold, p.center, r)?
            };
            Ok((r, set))
        })
        .collect()
}

fn hole_label(radius: f64, set: &HoleSet, center: usize) -> String {
    if set.is_empty() {
        "hole: none".to_string()
    } else {
        format!("hole: center={center} radius={} |A|={}", real(radius), set.len())
    }
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Dense => "dense",
        Backend::Iterative => "iterative",
    }
}

fn write_spectrum(out: &mut String, s: &Spectrum) {
    for (j, (l, r)) in s.eigenvalues.iter().zip(&s.residuals).enumerate() {
        let _ = writeln!(out, "  lambda[{}] = {}  residual = {:.3e}", j + 1, real(*l), r);
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Eigenvalues of the full manifold and of every configured hole.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = prepare(cfg)?;
    let sets = holes(cfg, &p)?;
    for (_, set) in &sets {
        let dim = p.manifold.n_vertices() - set.len();
        if cfg.k > dim {
            let e = Error::Size {
                requested: cfg.k,
                dim,
            };
            return Err(ConfigError::new("run.k", e.to_string()).into());
        }
    }

    let min_v = p.potential.min_value();
    let max_v = p.potential.max_value();
    let op = assemble(&p.manifold, p.potential)?;
    let full = solve_spectrum(&op, cfg.k, &cfg.solver)?;

    let mut out = String::new();
    let _ = writeln!(out, "manifold: {}", p.manifold.descriptor());
    let _ = writeln!(out, "potential: min V = {}  max V = {}", real(min_v), real(max_v));
    let _ = writeln!(
        out,
        "solver: backend={} tolerance={:e} seed={}",
        backend_name(cfg.solver.backend),
        cfg.solver.tolerance,
        full.seed
    );
    let _ = writeln!(out, "full manifold, k = {}", cfg.k);
    write_spectrum(&mut out, &full);

    let lower = full.eigenvalues[0] - min_v;
    let lower_ok = lower >= -LAMBDA1_TOL;
    let (min_abs, signed) = full.ground_state_sign();
    let _ = writeln!(out, "check lambda_1 >= min V: {} (lambda_1 - min V = {})", pass(lower_ok), real(lower));
    let _ = writeln!(out, "check e_1 single-signed: {} (min |e_1| = {})", pass(signed), real(min_abs));
    let mut success = lower_ok && signed;

    for (radius, set) in &sets {
        let s = solve_spectrum_holes(&op, set, cfg.k, &cfg.solver)?;
        let _ = writeln!(out, "{}", hole_label(*radius, set, p.center));
        write_spectrum(&mut out, &s);
        let worst = s
            .eigenvalues
            .iter()
            .zip(&full.eigenvalues)
            .map(|(h, f)| h - f)
            .fold(f64::INFINITY, f64::min);
        let ok = worst >= -GAP_TOL;
        let _ = writeln!(out, "check lambda_k(M-A) >= lambda_k(M): {} (min gap = {})", pass(ok), real(worst));
        success &= ok;
    }
    Ok(Report { text: out, success })
}

/// Capacity, minimizer norm, Poincaré slack and KKT residual per hole.
pub fn cmd_capacity(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.hole == HoleSpec::Absent {
        return Err(ConfigError::new("hole", "the capacity command needs a [hole] table").into());
    }
    let p = prepare(cfg)?;
    let sets = holes(cfg, &p)?;
    let op = assemble(&p.manifold, p.potential)?;
    let full = solve_spectrum(&op, 1, &cfg.solver)?;
    let e1 = full.eigenvector(0);
    let lam1 = full.eigenvalues[0];

    let mut out = String::new();
    let _ = writeln!(out, "manifold: {}", p.manifold.descriptor());
    let _ = writeln!(out, "lambda_1 = {}", real(lam1));
    let mut success = true;
    for (radius, set) in &sets {
        let c = compute_capacity(&op, set, &e1)?;
        let slack = poincare_slack(&op, lam1, &c)?;
        let ok = slack >= -SLACK_TOL;
        success &= ok;
        let _ = writeln!(out, "{}", hole_label(*radius, set, p.center));
        let _ = writeln!(out, "  cap = {}", real(c.cap));
        let _ = writeln!(out, "  mass_norm_sq(u_A) = {}", real(c.mass_norm_sq(&op)));
        let _ = writeln!(out, "  poincare_slack = {}  {}", real(slack), pass(ok));
        let _ = writeln!(out, "  kkt_residual = {}", real(c.kkt_residual));
        let _ = writeln!(out, "  lagrange_mean = {}", real(c.lagrange_mean));
        let _ = writeln!(out, "  min |e_1| on A = {}", real(c.min_abs_e1_on_hole));
    }
    Ok(Report { text: out, success })
}

pub fn sweep_config(cfg: &RunConfig) -> Result<SweepConfig, CliError> {
    let radii = cfg
        .radii()
        .ok_or_else(|| ConfigError::new("hole", "the sweep command needs a [hole] table"))?;
    let p = prepare(cfg)?;
    Ok(SweepConfig {
        manifold: p.manifold,
        potential: cfg.potential.clone(),
        center: p.center,
        radii,
        k_min: cfg.k_min,
        k_max: cfg.k,
        solver: cfg.solver,
    })
}

fn echo_row(r: &SweepRow) -> String {
    CSV_HEADER
        .iter()
        .zip([
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
            r.ratio.map(real).unwrap_or_default(),
            r.witness.map(real).unwrap_or_default(),
            real(r.gram_defect),
            real(r.poincare_slack),
            real(r.residual_max),
            real(r.min_norm_sq),
            r.status.label(),
        ])
        .map(|(h, v)| format!("{h}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Run the bound sweep, write the CSV and summarize the per-k constants.
///
/// `output` overrides `run.output`.
pub fn cmd_sweep(cfg: &RunConfig, output: Option<PathBuf>) -> Result<(Report, Vec<SweepRow>), CliError> {
    let path = output
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| ConfigError::new("run.output", "the sweep command needs an output path"))?;
    let sweep = sweep_config(cfg)?;
    let rows = bound_sweep(&sweep)?;
    emit_csv(&rows, &path)?;

    let mut out = String::new();
    let _ = writeln!(out, "manifold: {}", sweep.manifold.descriptor());
    let _ = writeln!(out, "rows: {}  csv: {}", rows.len(), path.display());
    for k in cfg.k_min..=cfg.k {
        match estimate_ck(&rows, k) {
            Ok(e) => {
                let _ = write!(
                    out,
                    "k={k} C_k={} median={} support={}",
                    real(e.max_ratio),
                    real(e.median_ratio),
                    e.support.len()
                );
            }
            Err(e) => {
                let _ = write!(out, "k={k} C_k unavailable ({e})");
            }
        }
        if let (Ok(b), Ok(j)) = (fit_gram_constant(&rows, k), fit_norm_constant(&rows, k)) {
            let _ = write!(out, " B={} J={}", real(b), real(j));
        }
        out.push('\n');
    }
    if let Some(c) = smallest_degenerate_cap(&rows) {
        let _ = writeln!(out, "smallest cap with degenerate test functions: {}", real(c));
    }

    let mut success = true;
    for r in &rows {
        let violations = r.violations();
        if !violations.is_empty() {
            success = false;
            let _ = writeln!(out, "row violated ({}): {}", violations.join(", "), echo_row(r));
        }
    }
    Ok((Report { text: out, success }, rows))
}
