//! Command-line front end: configuration, dispatch, and report files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::constants::{global_constant, ConstantKind, EntropySpecs, Weights};
use crate::error::{Error, Result};
use crate::exponents::ExponentTuple;
use crate::gallery::{gallery_suite, GalleryConfig, Inputs};
use crate::geometry::{
    cover_cube, enumerate_cubes, format_rational, GridShift, Rational, RationalBox, Window,
};
use crate::measure::{LatticeFunction, StepFunction};
use crate::operators::{
    field_max, frac_integral_dyadic_lat, frac_integral_quadrature, frac_maximal_dyadic_lat,
    frac_maximal_oracle_lat, hl_maximal, sparse_apply, CubeScope, OperatorField,
};
use crate::sparse::{build_sparse, default_ratio, domination_report, verify_sparse};
use crate::verification::{refinement_study, run_suite, HarnessConstants, HarnessId, VerificationReport};
use crate::SCHEMA_VERSION;

/// Environment variable overriding the configured thread count.
pub const THREADS_ENV: &str = "ENTROWEIGHT_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "entroweight", version, about = "Multilinear fractional operators and two-weight entropy bounds")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write JSON reports (both formats when neither flag is given).
    #[arg(long, global = true)]
    pub json: bool,
    /// Write CSV reports and plot data.
    #[arg(long, global = true)]
    pub csv: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate grid cubes or cover a cube.
    Grid {
        #[command(subcommand)]
        query: GridQuery,
    },
    /// Evaluate an operator field to CSV.
    Op {
        /// frac-maximal, frac-maximal-dyadic, frac-integral-dyadic,
        /// frac-integral, sparse, or hl-maximal.
        name: String,
        /// Restrict dyadic operators to one grid (`0` or `1/3`, comma
        /// separated per axis); default is the maximum over all grids.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Build, verify, and report a sparse family.
    Sparse {
        #[arg(long)]
        grid: Option<String>,
    },
    /// Evaluate a global constant to JSON.
    Constants {
        /// apq, apq-ainf, apq-hinf, hinf, rh, ainf-nu, ceil, floor, or
        /// bracket-ijk.
        kind: String,
    },
    /// Run one harness.
    Verify {
        /// thm14, thm15, thm16, carleson, packing, or equiv.
        id: String,
    },
    /// Run every harness over a gallery suite.
    Suite {
        /// smoke or full.
        name: String,
    },
    /// Refinement study of one harness.
    Refine {
        id: String,
        /// Comma separated resolutions; defaults to 6,7,8.
        #[arg(long)]
        resolutions: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GridQuery {
    /// List the cubes of one grid inside the window.
    Enumerate {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        level: u32,
        #[arg(long, default_value = "0")]
        grid: String,
        #[arg(long)]
        scale_min: i32,
        #[arg(long)]
        scale_max: i32,
    },
    /// Grid cube covering `[lo, lo + side)^n`.
    Cover {
        #[arg(long, default_value_t = 1)]
        level: u32,
        /// Corner, comma separated per axis; each entry an integer or a/b.
        #[arg(long, allow_hyphen_values = true)]
        lo: String,
        #[arg(long)]
        side: String,
    },
}

/// Explicit step-function inputs in the mesh CSV layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFiles {
    pub exps: ExponentTuple,
    pub f1: PathBuf,
    pub f2: PathBuf,
    pub w: PathBuf,
    pub sigma1: PathBuf,
    pub sigma2: PathBuf,
}

/// TOML run configuration. Every key is optional except `schema_version`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Gallery suite used when no explicit inputs are given.
    #[serde(default)]
    pub suite: Option<String>,
    /// Explicit gallery configurations; take precedence over `suite`.
    #[serde(default)]
    pub configs: Vec<GalleryConfig>,
    /// Explicit input files; used by `op`, `sparse` and `constants`.
    #[serde(default)]
    pub files: Option<InputFiles>,
    /// Resolutions for harness runs.
    #[serde(default)]
    pub resolutions: Option<Vec<u32>>,
    #[serde(default)]
    pub harness: HarnessConstants,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            suite: None,
            configs: Vec::new(),
            files: None,
            resolutions: None,
            harness: HarnessConstants::default(),
            out: None,
            threads: None,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(js) = &self.resolutions {
            if js.is_empty() || js.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("resolutions must increase, got {js:?}")));
            }
        }
        for c in &self.configs {
            c.exponents()?;
            c.mesh(self.resolutions.as_ref().and_then(|j| j.last().copied()).unwrap_or(0))?;
        }
        if let Some(f) = &self.files {
            f.exps.validate()?;
        }
        let h = &self.harness;
        if !(h.c_harness > 0.0 && h.c_emb > 0.0 && h.refinement_slack >= 0.0) {
            return Err(Error::Config("harness constants must be positive".into()));
        }
        Ok(())
    }
}

/// Default resolutions for harness runs of each suite.
fn default_resolutions(suite: &str) -> Vec<u32> {
    match suite {
        "full" => vec![7, 8],
        _ => vec![6, 7],
    }
}

struct Session {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
    json: bool,
    csv: bool,
}

impl Session {
    fn configs(&self, default_suite: &str) -> Result<Vec<GalleryConfig>> {
        if !self.config.configs.is_empty() {
            return Ok(self.config.configs.clone());
        }
        let name = self.config.suite.as_deref().unwrap_or(default_suite);
        gallery_suite(name, self.seed)
    }

    fn resolutions(&self, suite: &str) -> Vec<u32> {
        self.config
            .resolutions
            .clone()
            .unwrap_or_else(|| default_resolutions(suite))
    }

    /// Input sets at the finest configured resolution.
    fn input_sets(&self) -> Result<Vec<Inputs>> {
        if let Some(files) = &self.config.files {
            return Ok(vec![load_files(files)?]);
        }
        let j = *self.resolutions("smoke").last().expect("nonempty");
        self.configs("smoke")?
            .iter()
            .map(|c| c.instantiate(j))
            .collect()
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.out.join(name), contents.as_bytes())
    }
}

fn load_files(files: &InputFiles) -> Result<Inputs> {
    let f1 = StepFunction::read_csv(&files.f1)?;
    let mesh = *f1.mesh();
    let f2 = StepFunction::read_csv(&files.f2)?;
    let weights = Weights::new(
        StepFunction::read_csv(&files.w)?,
        StepFunction::read_csv(&files.sigma1)?,
        StepFunction::read_csv(&files.sigma2)?,
    )?;
    if *f2.mesh() != mesh || *weights.mesh() != mesh {
        return Err(Error::Mesh("input files use different meshes".into()));
    }
    files.exps.validate()?;
    Ok(Inputs {
        config_id: "files".into(),
        mesh,
        f1,
        f2,
        weights,
        specs: EntropySpecs::standard(&files.exps),
        exps: files.exps.clone(),
    })
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Flat CSV with one row per report at its finest resolution.
pub fn reports_csv(reports: &[VerificationReport]) -> String {
    let mut s = String::from("harness,config_id,J,lhs,rhs,ratio,pass\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.harness, r.config_id, r.resolution, r.lhs, r.rhs, r.ratio, r.pass
        );
    }
    s
}

/// Plot data: the refinement series of every report.
pub fn plot_csv(reports: &[VerificationReport]) -> String {
    let mut s = String::from("harness,config_id,J,ratio\n");
    for r in reports {
        for p in &r.refinement {
            let _ = writeln!(s, "{},{},{},{}", r.harness, r.config_id, p.resolution, p.ratio);
        }
    }
    s
}

#[derive(Serialize)]
struct SuiteDocument<'a> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    resolutions: &'a [u32],
    harness_constants: &'a HarnessConstants,
    reports: &'a [VerificationReport],
}

fn parse_grid(s: &str, dim: usize) -> Result<GridShift> {
    let parts: Vec<&str> = s.split(',').collect();
    let parts = if parts.len() == 1 { vec![parts[0]; dim] } else { parts };
    if parts.len() != dim {
        return Err(Error::Config(format!("grid `{s}` does not have {dim} entries")));
    }
    let thirds = parts
        .iter()
        .map(|p| {
            GridShift::parse_label(p)
                .ok_or_else(|| Error::Config(format!("grid entry `{p}` must be 0 or 1/3")))
        })
        .collect::<Result<_>>()?;
    Ok(GridShift::new(thirds))
}

fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Config(format!("`{s}` is not an integer or a fraction a/b"));
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(bad());
            }
            Ok(Rational::new(a, b))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

fn parse_resolutions(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad resolution `{p}`")))
        })
        .collect()
}

fn grid_command(query: &GridQuery) -> Result<String> {
    let mut s = String::new();
    match query {
        GridQuery::Enumerate {
            dim,
            level,
            grid,
            scale_min,
            scale_max,
        } => {
            if *dim == 0 || *dim > 2 {
                return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
            }
            let g = parse_grid(grid, *dim)?;
            s.push_str("t,k,m,lo,hi\n");
            for c in enumerate_cubes(Window::new(*level), &g, *scale_min, *scale_max) {
                let b = c.cube_box();
                let fmt = |v: &[Rational]| {
                    v.iter().map(|x| format_rational(*x)).collect::<Vec<_>>().join(";")
                };
                let m: Vec<String> = c.index.iter().map(i64::to_string).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    c.shift.labels().join(";"),
                    c.scale,
                    m.join(";"),
                    fmt(&b.lo),
                    fmt(&b.hi)
                );
            }
        }
        GridQuery::Cover { level, lo, side } => {
            let lo: Vec<Rational> = lo.split(',').map(parse_rational).collect::<Result<_>>()?;
            let side = parse_rational(side)?;
            let b = RationalBox::cube(lo, side)?;
            let c = cover_cube(&b, Window::new(*level))?;
            let _ = writeln!(s, "{c}");
        }
    }
    Ok(s)
}

fn op_field(name: &str, grid: Option<&GridShift>, inputs: &Inputs) -> Result<OperatorField> {
    let e = &inputs.exps;
    let (p1, p2) = inputs.products()?;
    let lattice = inputs.mesh.lattice();
    let l1 = LatticeFunction::from_step(&p1, lattice);
    let l2 = LatticeFunction::from_step(&p2, lattice);
    let grids = match grid {
        Some(g) => vec![g.clone()],
        None => GridShift::all(e.dim),
    };
    let over_grids = |f: &dyn Fn(&GridShift) -> OperatorField, tag: &str| {
        let fields: Vec<OperatorField> = grids.iter().map(f).collect();
        if fields.len() == 1 {
            fields.into_iter().next().expect("one field")
        } else {
            field_max(&fields, tag)
        }
    };
    Ok(match name {
        "frac-maximal" => frac_maximal_oracle_lat(&l1, &l2, e.alpha),
        "frac-maximal-dyadic" => over_grids(
            &|g| frac_maximal_dyadic_lat(&l1, &l2, e.alpha, g, CubeScope::Window),
            "frac-maximal-dyadic-max",
        ),
        "frac-integral-dyadic" => {
            if e.alpha <= 0.0 {
                return Err(Error::ExponentDomain(
                    "the dyadic fractional integral needs alpha > 0".into(),
                ));
            }
            over_grids(
                &|g| frac_integral_dyadic_lat(&l1, &l2, e.alpha, g, CubeScope::Window),
                "frac-integral-dyadic-max",
            )
        }
        "frac-integral" => frac_integral_quadrature(&p1, &p2, e)?,
        "sparse" => {
            let g = grids[0].clone();
            let family = build_sparse(&p1, &p2, e, &g, default_ratio(e))?;
            sparse_apply(&family, &p1, &p2, e)?
        }
        "hl-maximal" => {
            let b = Window::new(inputs.mesh.level()).as_box(e.dim);
            hl_maximal(&inputs.weights.w, &b)?
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown operator `{name}`; expected frac-maximal, frac-maximal-dyadic, \
                 frac-integral-dyadic, frac-integral, sparse, or hl-maximal"
            )))
        }
    })
}

fn write_reports(session: &Session, command: &str, js: &[u32], reports: &[VerificationReport]) -> Result<i32> {
    if session.json {
        let doc = SuiteDocument {
            schema_version: SCHEMA_VERSION,
            command,
            seed: session.seed,
            resolutions: js,
            harness_constants: &session.config.harness,
            reports,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        session.write("report.json", &text)?;
    }
    if session.csv {
        session.write("report.csv", &reports_csv(reports))?;
        session.write("plot.csv", &plot_csv(reports))?;
    }
    let failed: Vec<&VerificationReport> = reports.iter().filter(|r| !r.pass).collect();
    println!(
        "{command}: {} reports, {} failed; output in {}",
        reports.len(),
        failed.len(),
        session.out.display()
    );
    for r in &failed {
        println!("  FAIL {} {} ratio {}", r.config_id, r.harness, r.ratio);
    }
    Ok(if failed.is_empty() { EXIT_PASS } else { EXIT_FAIL })
}

fn dispatch(cli: &Cli, session: &Session) -> Result<i32> {
    match &cli.command {
        Command::Grid { query } => {
            let text = grid_command(query)?;
            print!("{text}");
            if session.csv {
                session.write("grid.csv", &text)?;
            }
            Ok(EXIT_PASS)
        }
        Command::Op { name, grid } => {
            let mut written = 0;
            for inputs in session.input_sets()? {
                let g = grid.as_deref().map(|g| parse_grid(g, inputs.exps.dim)).transpose()?;
                let field = op_field(name, g.as_ref(), &inputs)?;
                session.write(&format!("op-{name}-{}.csv", inputs.config_id), &field.to_csv())?;
                written += 1;
            }
            println!("op {name}: {written} field(s) in {}", session.out.display());
            Ok(EXIT_PASS)
        }
        Command::Sparse { grid } => {
            let mut all_pass = true;
            let mut docs = Vec::new();
            for inputs in session.input_sets()? {
                let e = &inputs.exps;
                let g = match grid {
                    Some(g) => parse_grid(g, e.dim)?,
                    None => GridShift::zero(e.dim),
                };
                let (p1, p2) = inputs.products()?;
                let family = build_sparse(&p1, &p2, e, &g, default_ratio(e))?;
                let check = verify_sparse(&family);
                let dom = domination_report(&p1, &p2, e, &g)?;
                all_pass &= check.pass && dom.verified;
                session.write(&format!("sparse-{}.csv", inputs.config_id), &family.to_csv())?;
                session.write(
                    &format!("sparse-{}-cells.csv", inputs.config_id),
                    &family.cells_csv(),
                )?;
                docs.push(serde_json::json!({
                    "config_id": inputs.config_id,
                    "verification": check,
                    "domination": dom,
                }));
            }
            let doc = serde_json::json!({ "schema_version": SCHEMA_VERSION, "families": docs });
            session.write("sparse.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            println!("sparse: output in {}", session.out.display());
            Ok(if all_pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Constants { kind } => {
            let kind: ConstantKind = kind.parse()?;
            for inputs in session.input_sets()? {
                let report = global_constant(kind, &inputs.weights, &inputs.exps, &inputs.specs, None)?;
                session.write(
                    &format!("constant-{kind}-{}.json", inputs.config_id),
                    &(report.to_json()? + "\n"),
                )?;
                println!("{} {kind} = {}", inputs.config_id, report.sup);
            }
            Ok(EXIT_PASS)
        }
        Command::Verify { id } => {
            let h: HarnessId = id.parse()?;
            let js = session.resolutions("smoke");
            let configs = session.configs("smoke")?;
            let reports = run_suite(&configs, &[h], &js, &session.config.harness, session.seed)?;
            write_reports(session, &format!("verify {h}"), &js, &reports)
        }
        Command::Suite { name } => {
            let configs = if session.config.configs.is_empty() {
                gallery_suite(name, session.seed)?
            } else {
                session.config.configs.clone()
            };
            let js = session.resolutions(name);
            let reports = run_suite(&configs, &HarnessId::ALL, &js, &session.config.harness, session.seed)?;
            write_reports(session, &format!("suite {name}"), &js, &reports)
        }
        Command::Refine { id, resolutions } => {
            let h: HarnessId = id.parse()?;
            let js = match resolutions {
                Some(s) => parse_resolutions(s)?,
                None => session
                    .config
                    .resolutions
                    .clone()
                    .unwrap_or_else(|| vec![6, 7, 8]),
            };
            let configs = session.configs("smoke")?;
            let reports = configs
                .iter()
                .enumerate()
                .filter(|(_, c)| h.applies(c))
                .map(|(i, c)| {
                    refinement_study(h, c, &js, &session.config.harness, session.seed.wrapping_add(i as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            write_reports(session, &format!("refine {h}"), &js, &reports)
        }
    }
}

fn thread_count(cli: &Cli, config: &RunConfig) -> Result<Option<usize>> {
    if let Some(t) = cli.threads {
        return Ok(Some(t));
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} = `{v}` is not a thread count")))?;
        return Ok(Some(t));
    }
    Ok(config.threads)
}

fn run(cli: Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    let threads = thread_count(&cli, &config)?;
    let neither = !cli.json && !cli.csv;
    let session = Session {
        out: cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("entroweight-out")),
        seed: cli.seed.or(config.seed).unwrap_or(0),
        json: cli.json || neither,
        csv: cli.csv || neither,
        config,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli, &session))
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit code: 0 when everything passed, 1 when a harness failed its bound,
/// 2 on configuration, precondition, or I/O errors.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers() {
        assert_eq!(reports_csv(&[]), "harness,config_id,J,lhs,rhs,ratio,pass\n");
        assert_eq!(plot_csv(&[]), "harness,config_id,J,ratio\n");
    }

    #[test]
    fn exit_codes_for_bad_invocations() {
        assert_eq!(run_command(["entroweight", "frobnicate"]), EXIT_ERROR);
        assert_eq!(
            run_command(["entroweight", "--config", "/nonexistent/run.toml", "suite", "smoke"]),
            EXIT_ERROR
        );
        assert_eq!(run_command(["entroweight", "verify", "thm99"]), EXIT_ERROR);
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig {
            suite: Some("smoke".into()),
            resolutions: Some(vec![5, 6]),
            configs: gallery_suite("smoke", 0).unwrap()[..1].to_vec(),
            ..RunConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(back.validate().is_ok());
        let bad = RunConfig {
            schema_version: 99,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_queries() {
        let out = grid_command(&GridQuery::Cover {
            level: 1,
            lo: "0".into(),
            side: "1".into(),
        })
        .unwrap();
        assert!(!out.is_empty());
        let out = grid_command(&GridQuery::Enumerate {
            dim: 1,
            level: 1,
            grid: "0".into(),
            scale_min: -1,
            scale_max: 0,
        })
        .unwrap();
        assert_eq!(out.lines().count(), 1 + 2 + 4);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
    }
}
