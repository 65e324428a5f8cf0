use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holes_cli::{cmd_capacity, cmd_spectrum, cmd_sweep, CliError, HoleSpec, ManifoldSpec, RunConfig};
use holes_core::eigen::{Backend, SolverOptions};
use holes_core::experiments::CSV_HEADER;
use holes_core::operator::{CosineTerm, PotentialSpec};
use proptest::prelude::*;
use tempfile::TempDir;

fn ring(n: usize, extra: &str) -> String {
    format!("[manifold]\nkind = \"ring\"\nn = {n}\n\n[potential]\nconstant = 1.0\n\n{extra}")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn holes(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holes"))
        .arg(args[0])
        .arg(config)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Values printed as `lambda[j] = x` in order.
fn printed_lambdas(text: &str) -> Vec<f64> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("lambda["))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn spectrum_ring4_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &ring(4, "[run]\nk = 4\n"));
    let out = holes(&["spectrum"], &cfg);
    assert!(out.status.success(), "{}", stderr(&out));
    let got = printed_lambdas(&stdout(&out));
    let c = 8.0 / (PI * PI);
    let want = [1.0, 1.0 + c, 1.0 + c, 1.0 + 2.0 * c];
    assert_eq!(got.len(), 4);
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= 1e-12 * w, "{g} vs {w}");
    }
    assert!(stdout(&out).contains("check lambda_1 >= min V: pass"));
}

#[test]
fn spectrum_with_hole_prints_both_domains() {
    let cfg = RunConfig::parse(&ring(32, "[hole]\nradii = [0.2]\n\n[run]\nk = 3\n")).unwrap();
    let report = cmd_spectrum(&cfg).unwrap();
    assert!(report.success);
    let lambdas = printed_lambdas(&report.text);
    assert_eq!(lambdas.len(), 6);
    for j in 0..3 {
        assert!(lambdas[3 + j] >= lambdas[j] - 1e-10);
    }
}

#[test]
fn zero_potential_is_rejected_by_key() {
    let dir = TempDir::new().unwrap();
    let text = ring(16, "[run]\nk = 2\n").replace("constant = 1.0", "constant = 0.0");
    let out = holes(&["spectrum"], &write(&dir, "c.toml", &text));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("potential.constant"), "{}", stderr(&out));
}

#[test]
fn cosine_potential_touching_zero_is_rejected() {
    let text = ring(16, "[[potential.cosine]]\namplitude = 1.0\npx = 1\n\n[run]\nk = 2\n");
    match cmd_spectrum(&RunConfig::parse(&text).unwrap()) {
        Err(CliError::Config(e)) => assert_eq!(e.key, "potential.constant"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn k_beyond_restricted_dimension_fails_before_solving() {
    // Radius h on ring 4 removes three vertices, leaving one.
    let text = ring(4, "[hole]\nradii = [1.6]\n\n[run]\nk = 2\n");
    match cmd_spectrum(&RunConfig::parse(&text).unwrap()) {
        Err(CliError::Config(e)) => {
            assert_eq!(e.key, "run.k");
            assert!(e.message.contains("dimension 1"), "{}", e.message);
        }
        other => panic!("expected a size error, got {other:?}"),
    }
    let text = ring(4, "[run]\nk = 5\n");
    assert!(matches!(cmd_spectrum(&RunConfig::parse(&text).unwrap()), Err(CliError::Config(_))));
}

#[test]
fn unknown_key_exits_with_its_name() {
    let dir = TempDir::new().unwrap();
    let text = ring(16, "[run]\nk = 2\n\n[solver]\nbackend = \"dense\"\nshift = 0.5\n");
    let out = holes(&["spectrum"], &write(&dir, "c.toml", &text));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("solver.shift"), "{}", stderr(&out));
}

#[test]
fn capacity_empty_hole_prints_zero() {
    let cfg = RunConfig::parse(&ring(64, "[hole]\nnone = true\n\n[run]\nk = 1\n")).unwrap();
    let report = cmd_capacity(&cfg).unwrap();
    assert!(report.success);
    assert!(report.text.contains("cap = 0.0000000000000000e0"), "{}", report.text);
}

#[test]
fn capacity_single_vertex_is_positive_with_slack() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &ring(64, "[hole]\nradii = [0.0]\n\n[run]\nk = 1\n"));
    let out = holes(&["capacity"], &cfg);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let field = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.trim().starts_with(name)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert!(field("cap =") > 0.0);
    assert!(field("poincare_slack =") >= 0.0);
    assert!(text.contains("|A|=1"));
}

#[test]
fn capacity_of_whole_manifold_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &ring(8, "[hole]\nradii = [100.0]\n\n[run]\nk = 1\n"));
    let out = holes(&["capacity"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no free degrees of freedom"), "{}", stderr(&out));
}

#[test]
fn capacity_requires_a_hole_table() {
    let cfg = RunConfig::parse(&ring(8, "[run]\nk = 1\n")).unwrap();
    match cmd_capacity(&cfg) {
        Err(CliError::Config(e)) => assert_eq!(e.key, "hole"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

const SWEEP: &str = "[hole]\nradii = [0.0, 0.09817477042468103, 0.19634954084936207]\n\n[run]\nk = 3\n";

#[test]
fn sweep_writes_nine_rows_and_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &ring(64, SWEEP));
    let csv_path = dir.path().join("rows.csv");
    let out = holes(&["sweep", "--output", csv_path.to_str().unwrap()], &cfg);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 9);
    for r in &records {
        assert_eq!(&r[16], "ok");
        assert!(r[10].parse::<f64>().unwrap().is_finite());
    }
    let text = stdout(&out);
    for k in 1..=3 {
        assert!(text.contains(&format!("k={k} C_k=")), "{text}");
    }
}

#[test]
fn sweep_output_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let configured = dir.path().join("configured.csv");
    let text = ring(64, SWEEP).replace("k = 3\n", &format!("k = 1\noutput = {:?}\n", configured));
    let cfg = RunConfig::parse(&text).unwrap();
    let override_path = dir.path().join("override.csv");
    let (report, rows) = cmd_sweep(&cfg, Some(override_path.clone())).unwrap();
    assert!(report.success);
    assert_eq!(rows.len(), 3);
    assert!(override_path.exists());
    assert!(!configured.exists());
    cmd_sweep(&cfg, None).unwrap();
    assert!(configured.exists());
}

#[test]
fn sweep_without_output_is_rejected() {
    let cfg = RunConfig::parse(&ring(64, SWEEP)).unwrap();
    match cmd_sweep(&cfg, None) {
        Err(CliError::Config(e)) => assert_eq!(e.key, "run.output"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn sweep_empty_radius_list_is_rejected() {
    let err = RunConfig::parse(&ring(64, "[hole]\nradii = []\n\n[run]\nk = 3\n")).unwrap_err();
    assert_eq!(err.key, "hole.radii");
}

#[test]
fn sweep_empty_hole_has_zero_gap_and_no_ratio() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig::parse(&ring(32, "[hole]\nnone = true\n\n[run]\nk = 2\n")).unwrap();
    let (report, rows) = cmd_sweep(&cfg, Some(dir.path().join("e.csv"))).unwrap();
    assert!(report.success, "{}", report.text);
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.cap, 0.0);
        assert!(r.gap.abs() <= 1e-12);
        assert_eq!(r.ratio, None);
    }
}

#[test]
fn sweep_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let text = ring(64, SWEEP).replace("k = 3\n", "k = 3\n\n[solver]\nbackend = \"iterative\"\nseed = 11\n");
    let cfg = write(&dir, "c.toml", &text);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(holes(&["sweep", "--output", a.to_str().unwrap()], &cfg).status.success());
    assert!(holes(&["sweep", "--output", b.to_str().unwrap()], &cfg).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn missing_config_file_fails() {
    let out = holes(&["spectrum"], Path::new("/nonexistent/holes.toml"));
    assert_eq!(out.status.code(), Some(2));
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let manifold = prop_oneof![
        (3usize..200, 0.1f64..20.0).prop_map(|(n, circumference)| ManifoldSpec::Ring { n, circumference }),
        (3usize..40, 3usize..40, 0.1f64..20.0, 0.1f64..20.0)
            .prop_map(|(nx, ny, lx, ly)| ManifoldSpec::Torus { nx, ny, lx, ly }),
    ];
    let term = (-2.0f64..2.0, -3i64..4, -3i64..4, -PI..PI).prop_map(|(amplitude, px, py, phase)| CosineTerm {
        amplitude,
        px,
        py,
        phase,
    });
    let potential = (0.1f64..5.0, prop::collection::vec(term, 0..3))
        .prop_map(|(constant, cosine)| PotentialSpec { constant, cosine });
    let solver = (any::<bool>(), 1e-12f64..1e-6, 1usize..500, 0u64..1000).prop_map(|(it, tolerance, max_iterations, seed)| {
        SolverOptions {
            backend: if it { Backend::Iterative } else { Backend::Dense },
            tolerance,
            max_iterations,
            seed,
        }
    });
    let radii = prop::collection::vec(0.0f64..3.0, 1..5);
    (manifold, potential, solver, radii, 0u8..3, 1usize..6, 0usize..3, any::<bool>()).prop_map(
        |(manifold, potential, solver, radii, hole_kind, k, extra, out)| {
            let dims = match manifold {
                ManifoldSpec::Ring { .. } => 1,
                ManifoldSpec::Torus { .. } => 2,
            };
            let hole = match hole_kind {
                0 => HoleSpec::Absent,
                1 => HoleSpec::Empty,
                _ => HoleSpec::Balls {
                    center: (0..dims).map(|i| 0.25 * i as f64).collect(),
                    radii,
                },
            };
            RunConfig {
                manifold,
                potential,
                hole,
                solver,
                k: k + extra,
                k_min: k,
                output: out.then(|| PathBuf::from("sweep out.csv")),
            }
        },
    )
}

proptest! {
    #[test]
    fn accepted_configs_round_trip(cfg in arb_config()) {
        let text = cfg.to_toml_string();
        let again = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml_string(), text);
    }

    #[test]
    fn unknown_keys_are_always_named(key in "[a-z]{3,8}", section in 0usize..3) {
        let (table, known): (&str, &[&str]) = [
            ("manifold", &["kind", "n", "circumference"][..]),
            ("solver", &["backend", "tolerance", "max_iterations", "seed"][..]),
            ("run", &["k", "k_min", "output"][..]),
        ][section];
        prop_assume!(!known.contains(&key.as_str()));
        let text = ring(8, "[run]\nk = 1\n\n[solver]\n")
            .replace(&format!("[{table}]\n"), &format!("[{table}]\n{key} = 1\n"));
        let err = RunConfig::parse(&text).unwrap_err();
        prop_assert_eq!(err.key, format!("{table}.{key}"));
    }
}
