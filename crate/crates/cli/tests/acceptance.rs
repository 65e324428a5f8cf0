//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use holes_cli::{cmd_sweep, RunConfig};
use holes_core::capacity::compute_capacity;
use holes_core::eigen::{solve_spectrum, solve_spectrum_holes, SolverOptions};
use holes_core::experiments::{
    bound_sweep, estimate_ck, fit_gram_constant, fit_norm_constant, RowStatus, SweepConfig, SweepRow, GAP_TOL,
    SLACK_TOL, WITNESS_REL_TOL,
};
use holes_core::mesh::{build_ring, build_torus, hole_ball, refine, DiscreteManifold, HoleSet};
use holes_core::operator::{assemble, CosineTerm, Potential, PotentialSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Ok(detail)` on pass, `Err(detail)` on failure.
type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ring_potential(n: usize, v: f64) -> Potential {
    Potential::constant(n, v).unwrap()
}

fn cosine_x() -> PotentialSpec {
    PotentialSpec {
        constant: 1.0,
        cosine: vec![CosineTerm {
            amplitude: 0.5,
            px: 1,
            py: 0,
            phase: 0.0,
        }],
    }
}

/// `1 + (2/h²)(1 − cos(2πm/n))` for the n modes of the periodic second difference.
fn periodic_modes(n: usize, length: f64) -> Vec<f64> {
    let h = length / n as f64;
    (0..n)
        .map(|m| 2.0 / (h * h) * (1.0 - (2.0 * PI * m as f64 / n as f64).cos()))
        .collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let (mut worst, mut agree) = (0.0f64, 0.0f64);
    for n in [4, 16, 64, 256] {
        let m = build_ring(n, 2.0 * PI).map_err(|e| e.to_string())?;
        let op = assemble(&m, ring_potential(n, 1.0)).unwrap();
        let oracle = sorted(periodic_modes(n, 2.0 * PI).into_iter().map(|x| 1.0 + x).collect());
        let dense = solve_spectrum(&op, n, &SolverOptions::dense()).map_err(|e| e.to_string())?;
        worst = worst.max(max_rel(&dense.eigenvalues, &oracle));
        let k = n.min(10);
        let it = solve_spectrum(&op, k, &SolverOptions::iterative()).map_err(|e| e.to_string())?;
        agree = agree.max(max_rel(&it.eigenvalues, &dense.eigenvalues[..k]));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "n in {{4,16,64,256}}: max rel err {worst:.2e} (tol 1e-9), iterative vs dense {agree:.2e} (tol 1e-8), {elapsed:.2?} (limit 5s)"
    );
    ensure(worst <= 1e-9 && agree <= 1e-8 && elapsed < Duration::from_secs(5), || detail.clone())?;
    Ok(detail)
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let n = 16;
    let m = build_torus(n, n, 2.0 * PI, 2.0 * PI).map_err(|e| e.to_string())?;
    let op = assemble(&m, ring_potential(n * n, 1.0)).unwrap();
    let mu = periodic_modes(n, 2.0 * PI);
    let oracle = sorted(mu.iter().flat_map(|a| mu.iter().map(move |b| 1.0 + a + b)).collect());
    let mut worst = 0.0f64;
    for opts in [SolverOptions::dense(), SolverOptions::iterative()] {
        let s = solve_spectrum(&op, 10, &opts).map_err(|e| e.to_string())?;
        worst = worst.max(max_rel(&s.eigenvalues, &oracle[..10]));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "16x16 first 10, dense and iterative: max rel err {worst:.2e} (tol 1e-8), {elapsed:.2?} (limit 5s)"
    );
    ensure(worst <= 1e-8 && elapsed < Duration::from_secs(5), || detail.clone())?;
    Ok(detail)
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let n = 64;
    let m = build_ring(n, 2.0 * PI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut min_margin = f64::INFINITY;
    let mut min_abs_e1 = f64::INFINITY;
    for trial in 0..20 {
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
        let v = Potential::new(values).unwrap();
        let min_v = v.min_value();
        let op = assemble(&m, v).unwrap();
        let s = solve_spectrum(&op, 1, &SolverOptions::dense()).map_err(|e| e.to_string())?;
        let margin = s.eigenvalues[0] - min_v;
        let e1 = s.eigenvector(0);
        let positive = e1.iter().all(|&x| x > 0.0);
        let negative = e1.iter().all(|&x| x < 0.0);
        ensure(margin >= -1e-10, || format!("trial {trial}: lambda_1 - min V = {margin:e}"))?;
        ensure(positive || negative, || format!("trial {trial}: e_1 changes sign"))?;
        min_margin = min_margin.min(margin);
        min_abs_e1 = min_abs_e1.min(e1.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "20 potentials: min(lambda_1 - min V) = {min_margin:.3e}, min |e_1| = {min_abs_e1:.3e}, {elapsed:.2?} (limit 10s)"
    );
    ensure(elapsed < Duration::from_secs(10), || detail.clone())?;
    Ok(detail)
}

fn criterion_4() -> Check {
    let ring = build_ring(64, 2.0 * PI).unwrap();
    let torus = build_torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap();
    let small = build_ring(32, 2.0 * PI).unwrap();
    let cases: Vec<(&DiscreteManifold, PotentialSpec)> = vec![
        (&ring, PotentialSpec::constant(1.0)),
        (&torus, cosine_x()),
        (&small, cosine_x()),
    ];
    let mut nonempty = 0;
    let mut min_cap = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (m, spec) in cases {
        let n = m.n_vertices();
        let op = assemble(m, spec.sample(m).unwrap()).unwrap();
        let opts = SolverOptions::dense();
        let full = solve_spectrum(&op, 6, &opts).map_err(|e| e.to_string())?;
        let e1 = full.eigenvector(0);

        let c = compute_capacity(&op, &HoleSet::empty(), &e1).map_err(|e| e.to_string())?;
        ensure(c.cap == 0.0, || format!("{}: empty hole has cap {:e}", m.descriptor(), c.cap))?;
        ensure(c.minimizer.iter().all(|&x| x == 0.0), || format!("{}: u_A != 0", m.descriptor()))?;
        let same = solve_spectrum_holes(&op, &HoleSet::empty(), 6, &opts).map_err(|e| e.to_string())?;
        let diff = max_abs_diff(&same.eigenvalues, &full.eigenvalues);
        ensure(diff <= 1e-12, || format!("{}: empty-hole spectrum differs by {diff:e}", m.descriptor()))?;

        let mut holes: Vec<HoleSet> = [0.0, 0.3, 0.6, 1.0]
            .iter()
            .map(|&r| hole_ball(m, 0, r).unwrap())
            .collect();
        for _ in 0..10 {
            let size = rng.random_range(1..=n / 4);
            let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
            holes.push(HoleSet::new(idx, n).unwrap());
        }
        for hole in holes {
            let c = compute_capacity(&op, &hole, &e1).map_err(|e| e.to_string())?;
            let s = solve_spectrum_holes(&op, &hole, 1, &opts).map_err(|e| e.to_string())?;
            let gap = s.eigenvalues[0] - full.eigenvalues[0];
            ensure(c.cap > 0.0 && gap > 0.0, || {
                format!("{} |A|={}: cap {:e}, gap {gap:e}", m.descriptor(), hole.len(), c.cap)
            })?;
            nonempty += 1;
            min_cap = min_cap.min(c.cap);
            min_gap = min_gap.min(gap);
        }
    }
    Ok(format!(
        "empty hole: cap = 0, u_A = 0, spectra equal on 3 manifolds; {nonempty} nonempty holes: min cap {min_cap:.3e}, min lambda_1 gap {min_gap:.3e}"
    ))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn quad(k: &[Vec<f64>], u: &[f64]) -> f64 {
    k.iter()
        .zip(u)
        .map(|(row, ui)| ui * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_cap = 0.0f64;
    let mut worst_u = 0.0f64;
    let mut worst_drop = f64::INFINITY;
    for n in [4usize, 8] {
        let length = 2.0 * PI;
        let h = length / n as f64;
        let m = build_ring(n, length).unwrap();
        let spec = cosine_x();
        let op = assemble(&m, spec.sample(&m).unwrap()).unwrap();
        let e1 = solve_spectrum(&op, 1, &SolverOptions::dense())
            .map_err(|e| e.to_string())?
            .eigenvector(0);
        let c = compute_capacity(&op, &HoleSet::new([0], n).unwrap(), &e1).map_err(|e| e.to_string())?;

        // Independent assembly of K = S + h·diag(V) on the ring.
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            let v = spec.evaluate([i as f64 * h, 0.0], [length, 0.0]);
            k[i][i] += 2.0 / h + h * v;
            k[i][(i + 1) % n] -= 1.0 / h;
            k[i][(i + n - 1) % n] -= 1.0 / h;
        }
        // Lagrangian system for min uᵀKu with u_0 = e1_0 and Σ h u_i = 0.
        let dim = n + 2;
        let mut a = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = 2.0 * k[i][j];
            }
            a[i][n + 1] = h;
            a[n + 1][i] = h;
        }
        a[0][n] = 1.0;
        a[n][0] = 1.0;
        let mut rhs = vec![0.0; dim];
        rhs[n] = e1[0];
        let sol = gauss_solve(a, rhs);
        let u = &sol[..n];
        let cap = quad(&k, u);
        worst_cap = worst_cap.max((cap - c.cap).abs());
        worst_u = worst_u.max(max_abs_diff(u, &c.minimizer));

        for _ in 0..100 {
            let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            w[0] = 0.0;
            let mean = w.iter().sum::<f64>() / (n - 1) as f64;
            for x in w.iter_mut().skip(1) {
                *x -= mean;
            }
            for t in [1e-3, -1e-3, 1e-1, -1e-1] {
                let moved: Vec<f64> = c.minimizer.iter().zip(&w).map(|(a, b)| a + t * b).collect();
                worst_drop = worst_drop.min(quad(&k, &moved) - c.cap);
            }
        }
    }
    let detail = format!(
        "n in {{4,8}}, A={{0}}: |cap - oracle| {worst_cap:.2e}, max |u - oracle| {worst_u:.2e} (tol 1e-10); min Q(u+tw) - Q(u) over 800 moves {worst_drop:.3e} (floor -1e-12)"
    );
    ensure(worst_cap <= 1e-10 && worst_u <= 1e-10 && worst_drop >= -1e-12, || detail.clone())?;
    Ok(detail)
}

struct SweepRun {
    label: &'static str,
    radii: Vec<f64>,
    coarse: Vec<SweepRow>,
    fine: Vec<SweepRow>,
}

struct Sweeps {
    runs: Vec<SweepRun>,
    elapsed: Duration,
}

fn sweep_config(m: DiscreteManifold, potential: PotentialSpec, radii: &[f64]) -> SweepConfig {
    SweepConfig {
        manifold: m,
        potential,
        center: 0,
        radii: radii.to_vec(),
        k_min: 1,
        k_max: 4,
        solver: SolverOptions::iterative(),
    }
}

/// 15 ring radii and 15 torus radii, each also run on the refined mesh.
fn run_sweeps() -> Result<Sweeps, String> {
    let start = Instant::now();
    let ring_radii: Vec<f64> = (0..15).map(|i| i as f64 * PI / 64.0).collect();
    let torus_radii: Vec<f64> = (0..15).map(|i| i as f64 * 0.06).collect();
    let ring = build_ring(64, 2.0 * PI).unwrap();
    let torus = build_torus(16, 16, 2.0 * PI, 2.0 * PI).unwrap();
    let mut runs = Vec::new();
    for (label, m, potential, radii) in [
        ("ring 64", ring, PotentialSpec::constant(1.0), ring_radii),
        ("torus 16x16", torus, cosine_x(), torus_radii),
    ] {
        let fine_mesh = refine(&m).map_err(|e| e.to_string())?;
        let coarse = bound_sweep(&sweep_config(m, potential.clone(), &radii)).map_err(|e| e.to_string())?;
        let fine = bound_sweep(&sweep_config(fine_mesh, potential, &radii)).map_err(|e| e.to_string())?;
        runs.push(SweepRun {
            label,
            radii,
            coarse,
            fine,
        });
    }
    Ok(Sweeps {
        runs,
        elapsed: start.elapsed(),
    })
}

fn criterion_6(sweeps: &Result<Sweeps, String>) -> Check {
    let sweeps = sweeps.as_ref().map_err(|e| format!("sweep failed: {e}"))?;
    let mut points = 0;
    let mut min_slack = f64::INFINITY;
    for run in &sweeps.runs {
        points += run.radii.len();
        for r in &run.coarse {
            ensure(!matches!(r.status, RowStatus::Failed(_)), || {
                format!("{} radius {}: {}", run.label, r.hole_radius, r.status.label())
            })?;
            ensure(r.poincare_slack >= -SLACK_TOL, || {
                format!("{} radius {}: slack {:e}", run.label, r.hole_radius, r.poincare_slack)
            })?;
            min_slack = min_slack.min(r.poincare_slack);
        }
    }
    let detail = format!("{points}-point sweep: min slack {min_slack:.3e} (floor -1e-10)");
    ensure(points == 30, || detail.clone())?;
    Ok(detail)
}

fn criterion_7(sweeps: &Result<Sweeps, String>) -> Check {
    let sweeps = sweeps.as_ref().map_err(|e| format!("sweep failed: {e}"))?;
    let mut summary = Vec::new();
    for run in &sweeps.runs {
        for r in run.coarse.iter().chain(&run.fine) {
            let at = || format!("{} {} k={} radius {}", run.label, r.manifold, r.k, r.hole_radius);
            ensure(r.status == RowStatus::Ok, || format!("{}: {}", at(), r.status.label()))?;
            ensure(r.gap >= -GAP_TOL, || format!("{}: gap {:e}", at(), r.gap))?;
            let w = r.witness.expect("ok rows carry a witness");
            let excess = (r.gap) - (w - r.lambda_full);
            ensure(excess <= WITNESS_REL_TOL * (1.0 + w.abs()), || {
                format!("{}: gap exceeds witness bound by {excess:e}", at())
            })?;
        }
        let mut per_k = Vec::new();
        for k in 1..=4 {
            let coarse = estimate_ck(&run.coarse, k).map_err(|e| e.to_string())?;
            let fine = estimate_ck(&run.fine, k).map_err(|e| e.to_string())?;
            let (a, b) = (coarse.max_ratio, fine.max_ratio);
            ensure(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0, || {
                format!("{} k={k}: max ratios {a:e}, {b:e}", run.label)
            })?;
            let factor = a.max(b) / a.min(b);
            ensure(factor <= 2.0, || {
                format!("{} k={k}: C_k {a:.4} vs refined {b:.4} (factor {factor:.3} > 2)", run.label)
            })?;
            per_k.push(format!("{a:.3}/{b:.3}"));
        }
        summary.push(format!("{} C_1..4 coarse/refined {}", run.label, per_k.join(" ")));
    }
    let detail = format!(
        "k=1..4 gap and witness bounds hold on all rows; {}; {:.2?} (limit 2 min)",
        summary.join("; "),
        sweeps.elapsed
    );
    ensure(sweeps.elapsed < Duration::from_secs(120), || detail.clone())?;
    Ok(detail)
}

fn criterion_8(sweeps: &Result<Sweeps, String>) -> Check {
    let sweeps = sweeps.as_ref().map_err(|e| format!("sweep failed: {e}"))?;
    let mut summary = Vec::new();
    for run in &sweeps.runs {
        let split = run.radii[run.radii.len() / 2];
        for (level, rows) in [("coarse", &run.coarse), ("refined", &run.fine)] {
            let (small, large): (Vec<SweepRow>, Vec<SweepRow>) =
                rows.iter().cloned().partition(|r| r.hole_radius < split);
            for k in 1..=4 {
                let b = fit_gram_constant(rows, k).map_err(|e| e.to_string())?;
                let j = fit_norm_constant(rows, k).map_err(|e| e.to_string())?;
                for r in rows.iter().filter(|r| r.k == k && r.cap > 0.0) {
                    let bound = b * (r.sqrt_cap + r.cap);
                    ensure(r.gram_defect <= bound * (1.0 + 1e-12), || {
                        format!("{} k={k} radius {}: gram defect above fitted bound", run.label, r.hole_radius)
                    })?;
                    ensure(r.min_norm_sq >= 1.0 - j * r.sqrt_cap - 1e-12, || {
                        format!("{} k={k} radius {}: norm below fitted bound", run.label, r.hole_radius)
                    })?;
                }
                let (bs, bl) = (
                    fit_gram_constant(&small, k).map_err(|e| e.to_string())?,
                    fit_gram_constant(&large, k).map_err(|e| e.to_string())?,
                );
                let (js, jl) = (
                    fit_norm_constant(&small, k).map_err(|e| e.to_string())?,
                    fit_norm_constant(&large, k).map_err(|e| e.to_string())?,
                );
                ensure(bs <= bl * (1.0 + 1e-12) && js <= jl + 1e-12, || {
                    format!(
                        "{} {level} k={k}: small-hole fit B={bs:.4} J={js:.4} exceeds large-hole fit B={bl:.4} J={jl:.4}",
                        run.label
                    )
                })?;
                if level == "coarse" && k == 1 {
                    summary.push(format!("{} k=1 B small/large {bs:.3}/{bl:.3} J {js:.3}/{jl:.3}", run.label));
                }
            }
        }
    }
    Ok(format!(
        "fitted B, J bound every row; fits over the smaller half of radii never exceed the larger half (k=1..4, both levels); {}",
        summary.join("; ")
    ))
}

const DETERMINISM_CONFIG: &str = r#"
[manifold]
kind = "torus"
nx = 16
ny = 16

[potential]
constant = 1.0
[[potential.cosine]]
amplitude = 0.5
px = 1

[hole]
center = [0.0, 0.0]
radii = [0.0, 0.3, 0.6, 0.9]

[solver]
backend = "iterative"

[run]
k = 3
"#;

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.toml");
    fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let run_binary = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_holes"))
            .arg("sweep")
            .arg(&config)
            .arg("--output")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("holes sweep exited with {}", status.status)
        })?;
        fs::read(out).map_err(|e| e.to_string())
    };
    let first = run_binary(&dir.path().join("a.csv"))?;
    let second = run_binary(&dir.path().join("b.csv"))?;
    let cfg = RunConfig::parse(DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let third_path = dir.path().join("c.csv");
    cmd_sweep(&cfg, Some(third_path.clone())).map_err(|e| e.to_string())?;
    let third = fs::read(&third_path).map_err(|e| e.to_string())?;
    let lines = first.iter().filter(|&&b| b == b'\n').count();
    let detail = format!("two binary runs and one library run: {} bytes, {lines} lines", first.len());
    ensure(lines == 13 && first == second && first == third, || format!("outputs differ or wrong size; {detail}"))?;
    Ok(format!("{detail}, byte-identical"))
}

fn run(id: u8, name: &str, f: impl FnOnce() -> Check) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("criterion {id} [{tag}] {name}: {detail}");
    ok
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= run(1, "ring spectrum oracle", criterion_1);
    ok &= run(2, "torus spectrum oracle", criterion_2);
    ok &= run(3, "lambda_1 >= min V and single-signed e_1", criterion_3);
    ok &= run(4, "capacity zero-equivalence", criterion_4);
    ok &= run(5, "capacity KKT optimality", criterion_5);
    let sweeps = panic::catch_unwind(run_sweeps).unwrap_or_else(|_| Err("sweep panicked".into()));
    ok &= run(6, "Poincare inequality over the sweep", || criterion_6(&sweeps));
    ok &= run(7, "eigenvalue bound and C_k refinement stability", || criterion_7(&sweeps));
    ok &= run(8, "Gram and norm diagnostics", || criterion_8(&sweeps));
    ok &= run(9, "sweep CSV determinism", criterion_9);
    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
