//! Run configuration: a TOML file with `[manifold]`, `[potential]`, `[hole]`,
//! `[solver]` and `[run]` tables.
//!
//! Parsing is done by hand over a `toml::Table` so every rejection can name
//! the dotted key that caused it.

use std::fs;
use std::path::{Path, PathBuf};

use holes_core::eigen::{Backend, SolverOptions};
use holes_core::mesh::{self, DiscreteManifold, DEFAULT_PERIOD};
use holes_core::operator::{CosineTerm, PotentialSpec};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManifoldSpec {
    Ring { n: usize, circumference: f64 },
    Torus { nx: usize, ny: usize, lx: f64, ly: f64 },
}

impl ManifoldSpec {
    pub fn build(&self) -> ConfigResult<DiscreteManifold> {
        match *self {
            ManifoldSpec::Ring { n, circumference } => mesh::build_ring(n, circumference)
                .map_err(|e| ConfigError::new(if n < 3 { "manifold.n" } else { "manifold.circumference" }, e.to_string())),
            ManifoldSpec::Torus { nx, ny, lx, ly } => mesh::build_torus(nx, ny, lx, ly).map_err(|e| {
                let key = if nx < 3 {
                    "manifold.nx"
                } else if ny < 3 {
                    "manifold.ny"
                } else if !(lx.is_finite() && lx > 0.0) {
                    "manifold.lx"
                } else {
                    "manifold.ly"
                };
                ConfigError::new(key, e.to_string())
            }),
        }
    }

    fn coordinate_count(&self) -> usize {
        match self {
            ManifoldSpec::Ring { .. } => 1,
            ManifoldSpec::Torus { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HoleSpec {
    /// No `[hole]` table.
    Absent,
    /// `hole.none = true`: the empty hole.
    Empty,
    Balls { center: Vec<f64>, radii: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifold: ManifoldSpec,
    pub potential: PotentialSpec,
    pub hole: HoleSpec,
    pub solver: SolverOptions,
    pub k: usize,
    pub k_min: usize,
    pub output: Option<PathBuf>,
}

const TOP_KEYS: &[&str] = &["manifold", "potential", "hole", "solver", "run"];
const RING_KEYS: &[&str] = &["kind", "n", "circumference"];
const TORUS_KEYS: &[&str] = &["kind", "nx", "ny", "lx", "ly"];
const POTENTIAL_KEYS: &[&str] = &["constant", "cosine"];
const COSINE_KEYS: &[&str] = &["amplitude", "px", "py", "phase"];
const HOLE_KEYS: &[&str] = &["none", "center", "radii"];
const SOLVER_KEYS: &[&str] = &["backend", "tolerance", "max_iterations", "seed"];
const RUN_KEYS: &[&str] = &["k", "k_min", "output"];

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn reject_unknown(table: &Table, prefix: &str, allowed: &[&str]) -> ConfigResult<()> {
    match table.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ConfigError::new(join(prefix, k), "unknown key")),
        None => Ok(()),
    }
}

fn table<'a>(parent: &'a Table, prefix: &str, key: &str) -> ConfigResult<Option<&'a Table>> {
    match parent.get(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(ConfigError::new(join(prefix, key), "expected a table")),
    }
}

fn real(t: &Table, prefix: &str, key: &str) -> ConfigResult<Option<f64>> {
    let full = join(prefix, key);
    let x = match t.get(key) {
        None => return Ok(None),
        Some(Value::Float(x)) => *x,
        Some(Value::Integer(i)) => *i as f64,
        Some(_) => return Err(ConfigError::new(full, "expected a number")),
    };
    if !x.is_finite() {
        return Err(ConfigError::new(full, "must be finite"));
    }
    Ok(Some(x))
}

fn integer(t: &Table, prefix: &str, key: &str) -> ConfigResult<Option<i64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) => Ok(Some(*i)),
        Some(_) => Err(ConfigError::new(join(prefix, key), "expected an integer")),
    }
}

fn count(t: &Table, prefix: &str, key: &str) -> ConfigResult<Option<usize>> {
    match integer(t, prefix, key)? {
        None => Ok(None),
        Some(i) if i >= 0 => Ok(Some(i as usize)),
        Some(i) => Err(ConfigError::new(join(prefix, key), format!("must be nonnegative, got {i}"))),
    }
}

fn string<'a>(t: &'a Table, prefix: &str, key: &str) -> ConfigResult<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ConfigError::new(join(prefix, key), "expected a string")),
    }
}

fn boolean(t: &Table, prefix: &str, key: &str) -> ConfigResult<Option<bool>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Boolean(b)) => Ok(Some(*b)),
        Some(_) => Err(ConfigError::new(join(prefix, key), "expected true or false")),
    }
}

fn reals(t: &Table, prefix: &str, key: &str) -> ConfigResult<Option<Vec<f64>>> {
    let full = join(prefix, key);
    let items = match t.get(key) {
        None => return Ok(None),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(ConfigError::new(full, "expected an array of numbers")),
    };
    items
        .iter()
        .map(|v| match v {
            Value::Float(x) if x.is_finite() => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::new(full.clone(), "expected finite numbers")),
        })
        .collect::<ConfigResult<Vec<_>>>()
        .map(Some)
}

fn required<T>(v: Option<T>, key: &str) -> ConfigResult<T> {
    v.ok_or_else(|| ConfigError::new(key, "missing required key"))
}

fn positive(x: f64, key: &str) -> ConfigResult<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::new(key, format!("must be positive, got {x}")))
    }
}

fn resolution(v: Option<usize>, key: &str) -> ConfigResult<usize> {
    let n = required(v, key)?;
    if n < 3 {
        return Err(ConfigError::new(key, format!("resolution must be at least 3, got {n}")));
    }
    Ok(n)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> ConfigResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> ConfigResult<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("<syntax>", e.message().to_string()))?;
        reject_unknown(&root, "", TOP_KEYS)?;

        let manifold = parse_manifold(required(table(&root, "", "manifold")?, "manifold")?)?;
        let potential = parse_potential(required(table(&root, "", "potential")?, "potential")?)?;
        let hole = match table(&root, "", "hole")? {
            None => HoleSpec::Absent,
            Some(t) => parse_hole(t, &manifold)?,
        };
        let solver = match table(&root, "", "solver")? {
            None => SolverOptions::default(),
            Some(t) => parse_solver(t)?,
        };

        let run = required(table(&root, "", "run")?, "run")?;
        reject_unknown(run, "run", RUN_KEYS)?;
        let k = required(count(run, "run", "k")?, "run.k")?;
        if k == 0 {
            return Err(ConfigError::new("run.k", "must be at least 1"));
        }
        let k_min = count(run, "run", "k_min")?.unwrap_or(1);
        if k_min == 0 || k_min > k {
            return Err(ConfigError::new("run.k_min", format!("must lie in 1..={k}, got {k_min}")));
        }
        let output = string(run, "run", "output")?.map(PathBuf::from);

        Ok(Self {
            manifold,
            potential,
            hole,
            solver,
            k,
            k_min,
            output,
        })
    }

    /// Normalized TOML: every default written out, fixed key order.
    pub fn to_toml_string(&self) -> String {
        let mut root = Table::new();

        let mut m = Table::new();
        match self.manifold {
            ManifoldSpec::Ring { n, circumference } => {
                m.insert("kind".into(), "ring".into());
                m.insert("n".into(), Value::Integer(n as i64));
                m.insert("circumference".into(), circumference.into());
            }
            ManifoldSpec::Torus { nx, ny, lx, ly } => {
                m.insert("kind".into(), "torus".into());
                m.insert("nx".into(), Value::Integer(nx as i64));
                m.insert("ny".into(), Value::Integer(ny as i64));
                m.insert("lx".into(), lx.into());
                m.insert("ly".into(), ly.into());
            }
        }
        root.insert("manifold".into(), m.into());

        let mut p = Table::new();
        p.insert("constant".into(), self.potential.constant.into());
        if !self.potential.cosine.is_empty() {
            let terms = self
                .potential
                .cosine
                .iter()
                .map(|t| {
                    let mut c = Table::new();
                    c.insert("amplitude".into(), t.amplitude.into());
                    c.insert("px".into(), Value::Integer(t.px));
                    c.insert("py".into(), Value::Integer(t.py));
                    c.insert("phase".into(), t.phase.into());
                    Value::Table(c)
                })
                .collect::<Vec<_>>();
            p.insert("cosine".into(), terms.into());
        }
        root.insert("potential".into(), p.into());

        match &self.hole {
            HoleSpec::Absent => {}
            HoleSpec::Empty => {
                let mut h = Table::new();
                h.insert("none".into(), true.into());
                root.insert("hole".into(), h.into());
            }
            HoleSpec::Balls { center, radii } => {
                let mut h = Table::new();
                h.insert("none".into(), false.into());
                h.insert("center".into(), center.clone().into());
                h.insert("radii".into(), radii.clone().into());
                root.insert("hole".into(), h.into());
            }
        }

        let mut s = Table::new();
        let backend = match self.solver.backend {
            Backend::Dense => "dense",
            Backend::Iterative => "iterative",
        };
        s.insert("backend".into(), backend.into());
        s.insert("tolerance".into(), self.solver.tolerance.into());
        s.insert("max_iterations".into(), Value::Integer(self.solver.max_iterations as i64));
        s.insert("seed".into(), Value::Integer(self.solver.seed as i64));
        root.insert("solver".into(), s.into());

        let mut r = Table::new();
        r.insert("k".into(), Value::Integer(self.k as i64));
        r.insert("k_min".into(), Value::Integer(self.k_min as i64));
        if let Some(out) = &self.output {
            r.insert("output".into(), out.display().to_string().into());
        }
        root.insert("run".into(), r.into());

        toml::to_string(&root).expect("a toml table always serializes")
    }

    /// Radii for the hole family; a negative radius encodes the empty hole.
    pub fn radii(&self) -> Option<Vec<f64>> {
        match &self.hole {
            HoleSpec::Absent => None,
            HoleSpec::Empty => Some(vec![-1.0]),
            HoleSpec::Balls { radii, .. } => Some(radii.clone()),
        }
    }

    pub fn center_point(&self) -> [f64; 2] {
        match &self.hole {
            HoleSpec::Balls { center, .. } => [center[0], center.get(1).copied().unwrap_or(0.0)],
            _ => [0.0, 0.0],
        }
    }
}

fn parse_manifold(t: &Table) -> ConfigResult<ManifoldSpec> {
    let p = "manifold";
    let kind = required(string(t, p, "kind")?, "manifold.kind")?;
    match kind {
        "ring" => {
            reject_unknown(t, p, RING_KEYS)?;
            let n = resolution(count(t, p, "n")?, "manifold.n")?;
            let circumference = positive(
                real(t, p, "circumference")?.unwrap_or(DEFAULT_PERIOD),
                "manifold.circumference",
            )?;
            Ok(ManifoldSpec::Ring { n, circumference })
        }
        "torus" => {
            reject_unknown(t, p, TORUS_KEYS)?;
            let nx = resolution(count(t, p, "nx")?, "manifold.nx")?;
            let ny = resolution(count(t, p, "ny")?, "manifold.ny")?;
            let lx = positive(real(t, p, "lx")?.unwrap_or(DEFAULT_PERIOD), "manifold.lx")?;
            let ly = positive(real(t, p, "ly")?.unwrap_or(DEFAULT_PERIOD), "manifold.ly")?;
            Ok(ManifoldSpec::Torus { nx, ny, lx, ly })
        }
        other => Err(ConfigError::new(
            "manifold.kind",
            format!("expected \"ring\" or \"torus\", got {other:?}"),
        )),
    }
}

fn parse_potential(t: &Table) -> ConfigResult<PotentialSpec> {
    let p = "potential";
    reject_unknown(t, p, POTENTIAL_KEYS)?;
    let constant = real(t, p, "constant")?.unwrap_or(0.0);
    let mut cosine = Vec::new();
    match t.get("cosine") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let prefix = format!("potential.cosine[{i}]");
                let Value::Table(c) = item else {
                    return Err(ConfigError::new(prefix, "expected a table"));
                };
                reject_unknown(c, &prefix, COSINE_KEYS)?;
                cosine.push(CosineTerm {
                    amplitude: required(real(c, &prefix, "amplitude")?, &join(&prefix, "amplitude"))?,
                    px: integer(c, &prefix, "px")?.unwrap_or(0),
                    py: integer(c, &prefix, "py")?.unwrap_or(0),
                    phase: real(c, &prefix, "phase")?.unwrap_or(0.0),
                });
            }
        }
        Some(_) => return Err(ConfigError::new("potential.cosine", "expected an array of tables")),
    }
    Ok(PotentialSpec { constant, cosine })
}

fn parse_hole(t: &Table, manifold: &ManifoldSpec) -> ConfigResult<HoleSpec> {
    let p = "hole";
    reject_unknown(t, p, HOLE_KEYS)?;
    if boolean(t, p, "none")?.unwrap_or(false) {
        for key in ["center", "radii"] {
            if t.contains_key(key) {
                return Err(ConfigError::new(join(p, key), "not allowed together with hole.none = true"));
            }
        }
        return Ok(HoleSpec::Empty);
    }
    let dims = manifold.coordinate_count();
    let center = reals(t, p, "center")?.unwrap_or_else(|| vec![0.0; dims]);
    if center.len() != dims {
        return Err(ConfigError::new(
            "hole.center",
            format!("expected {dims} coordinate(s), got {}", center.len()),
        ));
    }
    let radii = required(reals(t, p, "radii")?, "hole.radii")?;
    if radii.is_empty() {
        return Err(ConfigError::new("hole.radii", "radius list is empty"));
    }
    if let Some(r) = radii.iter().find(|r| **r < 0.0) {
        return Err(ConfigError::new(
            "hole.radii",
            format!("radii must be nonnegative, got {r}; use hole.none = true for the empty hole"),
        ));
    }
    Ok(HoleSpec::Balls { center, radii })
}

fn parse_solver(t: &Table) -> ConfigResult<SolverOptions> {
    let p = "solver";
    reject_unknown(t, p, SOLVER_KEYS)?;
    let defaults = SolverOptions::default();
    let backend = match string(t, p, "backend")? {
        None => defaults.backend,
        Some("dense") => Backend::Dense,
        Some("iterative") => Backend::Iterative,
        Some(other) => {
            return Err(ConfigError::new(
                "solver.backend",
                format!("expected \"dense\" or \"iterative\", got {other:?}"),
            ))
        }
    };
    let tolerance = positive(
        real(t, p, "tolerance")?.unwrap_or(defaults.tolerance),
        "solver.tolerance",
    )?;
    let max_iterations = count(t, p, "max_iterations")?.unwrap_or(defaults.max_iterations);
    if max_iterations == 0 {
        return Err(ConfigError::new("solver.max_iterations", "must be at least 1"));
    }
    let seed = count(t, p, "seed")?.map(|s| s as u64).unwrap_or(defaults.seed);
    Ok(SolverOptions {
        backend,
        tolerance,
        max_iterations,
        seed,
    })
}
