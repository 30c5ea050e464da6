//! Command-line front end.
//!
//! `run` parses the arguments (after merging an optional key=value config
//! file), dispatches to the library and maps failures to exit codes:
//! 2 usage, 3 solver failure, 4 violated identity or invariant. Every
//! failure also writes one `ERR:` line to stderr.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bandfun::{band_minimize, band_sample, band_surface_min, degennes_constants, BandFamily, BandOptions};
use crate::counting::{bracketing_counts, delta_effective_potential, fd_count, weyl_estimate};
use crate::domains2d::{
    build_lupan, build_magnetic_well, build_magnetic_well_gauge, build_triangle, build_triangle_even,
    lowest_complex, richardson2, MagneticPotential2D, LUPAN_MARGIN, SOLVE_TOL,
};
use crate::eigencore::{
    dense_sym_eigen, hermitian_embed, lanczos, sturm_count, to_dense, tridiag_eigenvalues, ComplexOperator, Filter,
    LanczosOptions, RealOperator, Spectrum, Tridiag, EMBED_DEDUP_REL,
};
use crate::operators1d::{convergence_order, FiberDomain, Model1D};
use crate::semiclassics::{fit_points, h_sweep, AsymptoticFit, HSweep, SweepEntry, SweepOperator};
use crate::specialfn::{delta_oracle, delta_spectrum};
use crate::{csv_writer, fmt17, Error, Result};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// Seed from `MAGSPEC_SEED`, else the crate default.
pub fn seed_from_env() -> Result<u64> {
    match std::env::var("MAGSPEC_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Error::invalid(format!("MAGSPEC_SEED={s} is not an unsigned integer"))),
        Err(_) => Ok(crate::DEFAULT_SEED),
    }
}

#[derive(Parser, Debug)]
#[command(name = "magspec", version, about = "Spectra of semiclassical magnetic model operators")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// key=value file predefining flags; `[name]` sections apply to one subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample a band function (CSV), optionally minimize it.
    Band(BandArgs),
    /// Band constants as key=value lines.
    Constants {
        #[arg(value_enum)]
        which: ConstantSet,
    },
    /// n-th eigenvalue over a list of h (CSV) and an expansion fit.
    Sweep(SweepArgs),
    /// Sturm count, Weyl estimate and optional bracketing.
    Count(CountArgs),
    /// Broken-Montgomery band surface (CSV) and its refined minimum.
    Surface(SurfaceArgs),
    /// δ-well spectrum: closed form against the secular-equation oracle.
    Delta(DeltaArgs),
    /// Run the invariant suite.
    Selftest,
}

#[derive(Args, Debug)]
struct BandArgs {
    /// degennes | montgomery:K | broken:neumann | broken:line
    #[arg(long)]
    model: String,
    /// Parameter range a,b.
    #[arg(long, allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 61)]
    points: usize,
    #[arg(long)]
    minimize: bool,
    /// Fixed x of the broken-Montgomery fiber.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x: f64,
    /// Grid nodes per solve.
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConstantSet {
    Degennes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builder {
    BoTriangle,
    BoGuide,
    DeltaEff,
    Triangle2d,
    Lupan,
    Well,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    builder: Builder,
    /// Decreasing list h1,h2,... (the angle θ for lupan).
    #[arg(long)]
    hs: String,
    /// Eigenvalue index (1-based).
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Exponents of the fit e1,e2,...
    #[arg(long)]
    fit: Option<String>,
    /// Resolution: 1D nodes, triangle M, well nodes per side, lupan nx.
    #[arg(long)]
    nodes: Option<usize>,
    /// Lupan box S,T.
    #[arg(long = "box")]
    lupan_box: Option<String>,
    /// Magnetic well half-width.
    #[arg(long, default_value_t = 1.5)]
    radius: f64,
    /// Combine 2D solves with the half-resolution grid.
    #[arg(long)]
    richardson: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CountArgs {
    /// harmonic | bounded | delta, or a CSV file of x,V samples.
    #[arg(long)]
    potential: String,
    #[arg(long)]
    h: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    e: f64,
    /// Number of bracketing cells.
    #[arg(long)]
    bracket: Option<usize>,
    /// Bounding interval a,b (classically forbidden ends).
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Mesh spacing of the counting grid (default h/8).
    #[arg(long)]
    dx: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SurfaceDomain {
    Neumann,
    Line,
}

#[derive(Args, Debug)]
struct SurfaceArgs {
    #[arg(long, value_enum)]
    domain: SurfaceDomain,
    #[arg(long, allow_hyphen_values = true)]
    xrange: String,
    #[arg(long, allow_hyphen_values = true)]
    xirange: String,
    /// Coarse grid GxG.
    #[arg(long, default_value = "21x21")]
    grid: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1200)]
    nodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DeltaArgs {
    #[arg(long)]
    x: Option<f64>,
    /// a,b,N
    #[arg(long)]
    scan: Option<String>,
}

const SUBCOMMANDS: [&str; 7] = ["band", "constants", "sweep", "count", "surface", "delta", "selftest"];

/// Run with the process stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (out, err) = (std::io::stdout(), std::io::stderr());
    run_with(argv, &mut out.lock(), &mut err.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => return report(err, EXIT_USAGE, "usage", &e.to_string()),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            return report(err, EXIT_USAGE, "usage", &first);
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(Error::invalid("--jobs must be at least 1")),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))
            .and_then(|pool| {
                // The pool runs the command on its own thread; buffer the output.
                let (mut o, mut e) = (Vec::new(), Vec::new());
                let r = pool.install(|| dispatch(&cli.cmd, &mut o, &mut e));
                out.write_all(&o).and_then(|_| err.write_all(&e))?;
                r
            }),
        None => dispatch(&cli.cmd, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let (code, kind) = classify(&e);
            report(err, code, kind, &e.to_string())
        }
    }
}

fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::InvalidInput(_) | Error::OutOfDomain { .. } | Error::Asymmetric { .. } => (EXIT_USAGE, "usage"),
        Error::NotConverged { .. } => (EXIT_SOLVER, "not_converged"),
        Error::ShiftHitsEigenvalue { .. } => (EXIT_SOLVER, "shift"),
        Error::Truncation(_) => (EXIT_SOLVER, "truncation"),
        Error::IllConditioned(_) => (EXIT_SOLVER, "ill_conditioned"),
        Error::NoBracket(_) => (EXIT_SOLVER, "no_bracket"),
        Error::IdentityViolation(_) => (EXIT_INVARIANT, "invariant"),
        Error::Io(_) | Error::Csv(_) => (1, "io"),
    }
}

fn report(err: &mut dyn Write, code: i32, kind: &str, msg: &str) -> i32 {
    let msg = msg.replace('\n', " ");
    let _ = writeln!(err, "ERR: code={code} kind={kind} msg={msg}");
    code
}

/// Insert `--key value` for every config entry whose flag is not already on
/// the command line. Top-level keys go before the subcommand, keys of the
/// section named after the subcommand after it.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if a == "--config" {
            path = argv.get(i + 1).cloned();
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::invalid(format!("config {path}: {e}")))?;
    let table: toml::Table = text.parse().map_err(|e| Error::invalid(format!("config {path}: {e}")))?;
    let sub = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str()));
    let present = |key: &str| argv.iter().any(|a| a == &format!("--{key}") || a.starts_with(&format!("--{key}=")));
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if sub.map(|i| argv[i].as_str()) == Some(key.as_str()) {
                    for (k, v) in section {
                        if !present(k) {
                            local.extend(flag(k, v)?);
                        }
                    }
                }
            }
            v if !present(key) => global.extend(flag(key, v)?),
            _ => {}
        }
    }
    let mut merged = argv;
    if let Some(i) = sub {
        let tail = merged.split_off(i + 1);
        merged.extend(local);
        merged.extend(tail);
        let after_sub = merged.split_off(i);
        merged.extend(global);
        merged.extend(after_sub);
    } else {
        merged.extend(global);
    }
    Ok(merged)
}

fn flag(key: &str, v: &toml::Value) -> Result<Vec<String>> {
    let scalar = |v: &toml::Value| -> Result<String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(Error::invalid(format!("config key {key}: unsupported value {other}"))),
        }
    };
    Ok(match v {
        toml::Value::Boolean(true) => vec![format!("--{key}")],
        toml::Value::Boolean(false) => vec![],
        toml::Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
            vec![format!("--{key}={}", parts.join(","))]
        }
        other => vec![format!("--{key}={}", scalar(other)?)],
    })
}

fn floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("{what}: cannot parse '{p}' as a number"))))
        .collect()
}

fn pair(s: &str, what: &str) -> Result<(f64, f64)> {
    match floats(s, what)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err(Error::invalid(format!("{what}: expected a,b"))),
    }
}

/// Open the CSV sink: a file when `path` is given, else stdout.
fn with_sink(path: &Option<PathBuf>, out: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn dispatch(cmd: &Cmd, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Cmd::Band(a) => band(a, out),
        Cmd::Constants { which: ConstantSet::Degennes } => constants(out),
        Cmd::Sweep(a) => sweep(a, out),
        Cmd::Count(a) => count(a, out),
        Cmd::Surface(a) => surface(a, out, err),
        Cmd::Delta(a) => delta(a, out),
        Cmd::Selftest => selftest(out),
    }
}

fn parse_family(model: &str, x: f64) -> Result<BandFamily> {
    let (name, arg) = model.split_once(':').map_or((model, None), |(a, b)| (a, Some(b)));
    match (name, arg) {
        ("degennes", None) => Ok(BandFamily::DeGennes),
        ("montgomery", Some(k)) => {
            let k = k.parse().map_err(|_| Error::invalid(format!("montgomery order '{k}'")))?;
            Ok(BandFamily::Montgomery { k })
        }
        ("broken", Some("neumann")) => Ok(BandFamily::BrokenFiber { x, domain: FiberDomain::HalfLineNeumann }),
        ("broken", Some("line")) => Ok(BandFamily::BrokenFiber { x, domain: FiberDomain::FullLine }),
        _ => Err(Error::invalid(format!(
            "unknown model '{model}' (degennes | montgomery:K | broken:neumann | broken:line)"
        ))),
    }
}

fn band(a: &BandArgs, out: &mut dyn Write) -> Result<i32> {
    let family = parse_family(&a.model, a.x)?;
    let (lo, hi) = pair(&a.range, "--range")?;
    let opts = BandOptions { n: a.nodes, extrapolate: true };
    let sample = band_sample(&family, lo, hi, a.points, &opts)?;
    with_sink(&a.out, out, |w| sample.write_csv(w))?;
    if a.minimize {
        let m = band_minimize(&family, lo, hi, a.tol, &opts)?;
        if m.flat {
            writeln!(out, "flat band: minimizer not unique")?;
        }
        writeln!(out, "min {} {}", m.arg, m.value)?;
    }
    Ok(0)
}

fn constants(out: &mut dyn Write) -> Result<i32> {
    let c = degennes_constants(&BandOptions::default())?;
    writeln!(out, "theta0={}", fmt17(c.theta0))?;
    writeln!(out, "zeta0={}", fmt17(c.zeta0))?;
    writeln!(out, "u0sq={}", fmt17(c.u0sq))?;
    writeln!(out, "c1={}", fmt17(c.c1))?;
    writeln!(out, "nu2={}", fmt17(c.nu2))?;
    writeln!(out, "bracket={}", fmt17(c.bracket))?;
    // degennes_constants already failed on a violated identity.
    for (name, _, _) in c.identities() {
        writeln!(out, "{name}=pass")?;
    }
    Ok(0)
}

/// Lanczos options of the 2D sweeps.
pub fn sweep_lanczos(seed: u64) -> LanczosOptions {
    LanczosOptions { tol: SOLVE_TOL, max_matvecs: 4_000_000, seed, filter: Filter::Auto, ..Default::default() }
}

/// Box `(S, T)` for the Lu-Pan operator at angle `theta`: `T >= 8`, `S >= 2T`,
/// both large enough for the truncation check.
pub fn lupan_auto_box(theta: f64) -> (f64, f64) {
    let v = (1.0 + LUPAN_MARGIN).sqrt() * 1.01;
    let t = (v / theta.cos()).max(8.0).ceil();
    let s = (v / theta.sin()).max(2.0 * t).ceil();
    (s, t)
}

/// Default nodes per side of the magnetic well grid at `h`: the cell
/// resolves the `sqrt h` length scale with 12 points per unit.
pub fn well_nodes(h: f64, r: f64) -> usize {
    (2.0 * r / (h.sqrt() / 12.0)).ceil() as usize
}

/// Resolution-aware operator factory behind `sweep`.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub builder: Builder,
    pub nodes: Option<usize>,
    pub lupan_box: Option<(f64, f64)>,
    pub radius: f64,
}

impl SweepSpec {
    pub fn new(builder: Builder) -> Self {
        SweepSpec { builder, nodes: None, lupan_box: None, radius: 1.5 }
    }

    pub fn is_2d(&self) -> bool {
        matches!(self.builder, Builder::Triangle2d | Builder::Lupan | Builder::Well)
    }

    /// Operator at `h`; `halve` builds the half-resolution companion used by
    /// Richardson extrapolation.
    pub fn operator(&self, h: f64, level: usize, halve: bool) -> Result<SweepOperator> {
        let div = if halve { 2 } else { 1 };
        let n1d = self.nodes.unwrap_or(4000);
        let model = |m: Model1D| -> Result<SweepOperator> { Ok(SweepOperator::Tri(m.build(&m.default_grid(n1d)?)?)) };
        match self.builder {
            Builder::BoTriangle => model(Model1D::BOTriangle { h }),
            Builder::BoGuide => model(Model1D::BOGuide { h }),
            Builder::DeltaEff => model(Model1D::DeltaEffective { h, branch: 1 }),
            Builder::Triangle2d => {
                let m = self.nodes.unwrap_or(512) / div;
                // The symmetric half carries the even states only.
                let op = if level == 1 { build_triangle_even(h, m)? } else { build_triangle(h, m)? };
                Ok(SweepOperator::Real(Box::new(op)))
            }
            Builder::Lupan => {
                let (s, t) = self.lupan_box.unwrap_or_else(|| lupan_auto_box(h));
                let nx = self.nodes.unwrap_or(480) / div;
                Ok(SweepOperator::Real(Box::new(build_lupan(h, s, t, nx, nx / 2)?)))
            }
            Builder::Well => {
                let n = self.nodes.unwrap_or_else(|| well_nodes(h, self.radius)) / div;
                Ok(SweepOperator::Complex(Box::new(build_magnetic_well(h, self.radius, n)?)))
            }
        }
    }

    /// `n`-th eigenvalue for every `h`, Richardson-combined on request
    /// (2D builders only).
    pub fn sweep(&self, hs: &[f64], n: usize, richardson: bool, seed: u64) -> Result<HSweep> {
        if richardson && !self.is_2d() {
            return Err(Error::invalid("--richardson applies to the 2D builders only"));
        }
        if richardson && self.nodes.is_some_and(|m| m % 2 != 0) {
            return Err(Error::invalid("Richardson needs an even resolution"));
        }
        let opts = sweep_lanczos(seed);
        let fine = h_sweep(&|h| self.operator(h, n, false), hs, n, &opts)?;
        if !richardson {
            return Ok(fine);
        }
        let coarse = h_sweep(&|h| self.operator(h, n, true), hs, n, &opts)?;
        let entries = fine
            .entries
            .iter()
            .zip(&coarse.entries)
            .map(|(f, c)| SweepEntry {
                h: f.h,
                n,
                value: richardson2(c.value, f.value),
                residual: (4.0 * f.residual + c.residual) / 3.0,
            })
            .collect();
        Ok(HSweep { entries })
    }
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let hs = floats(&a.hs, "--hs")?;
    let spec = SweepSpec {
        builder: a.builder,
        nodes: a.nodes,
        lupan_box: a.lupan_box.as_deref().map(|b| pair(b, "--box")).transpose()?,
        radius: a.radius,
    };
    let exps = a.fit.as_deref().map(|f| floats(f, "--fit")).transpose()?;
    if let Some(e) = &exps {
        if hs.len() < e.len() + 1 {
            return Err(Error::invalid(format!("{} values of h cannot fit {} exponents", hs.len(), e.len())));
        }
    }
    let s = spec.sweep(&hs, a.n, a.richardson, seed_from_env()?)?;
    let fit: Option<AsymptoticFit> = exps.map(|e| fit_points(&s.hs(), &s.values(), &e)).transpose()?;
    with_sink(&a.out, out, |w| {
        s.write_csv(&mut *w)?;
        if let Some(f) = &fit {
            writeln!(w)?;
            f.write_csv(&mut *w)?;
        }
        Ok(())
    })?;
    Ok(0)
}

/// Potential read from a two-column CSV `x,V` (header optional), linearly
/// interpolated and continued by the end values.
pub fn tabulated_potential(path: &Path) -> Result<(impl Fn(f64) -> f64 + Sync + Clone, (f64, f64))> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed = (rec.get(0).map(str::parse::<f64>), rec.get(1).map(str::parse::<f64>));
        match parsed {
            (Some(Ok(x)), Some(Ok(v))) => pts.push((x, v)),
            _ if i == 0 => continue,
            _ => return Err(Error::invalid(format!("{}: row {} is not x,V", path.display(), i + 1))),
        }
    }
    if pts.len() < 2 || pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid(format!("{}: need at least 2 rows with increasing x", path.display())));
    }
    let range = (pts[0].0, pts[pts.len() - 1].0);
    let f = move |x: f64| {
        let i = pts.partition_point(|p| p.0 <= x);
        if i == 0 {
            return pts[0].1;
        }
        if i == pts.len() {
            return pts[pts.len() - 1].1;
        }
        let ((x0, v0), (x1, v1)) = (pts[i - 1], pts[i]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    };
    Ok((f, range))
}

fn count(a: &CountArgs, out: &mut dyn Write) -> Result<i32> {
    if !(a.h > 0.0) {
        return Err(Error::invalid("--h must be positive"));
    }
    let bounds = a.bounds.as_deref().map(|b| pair(b, "--bounds")).transpose()?;
    match a.potential.as_str() {
        "harmonic" => {
            let r = a.e.max(0.0).sqrt() + 2.0;
            count_with(&|x: f64| x * x, bounds.unwrap_or((-r, r)), a, out)
        }
        "bounded" => count_with(&|x: f64| x * x / (1.0 + x * x), bounds.unwrap_or((-4.0, 4.0)), a, out),
        "delta" => count_with(&delta_effective_potential, bounds.unwrap_or((-1.0, 80.0)), a, out),
        file => {
            let path = Path::new(file);
            if !path.exists() {
                return Err(Error::invalid(format!("potential '{file}' is neither builtin nor a file")));
            }
            let (v, range) = tabulated_potential(path)?;
            count_with(&v, bounds.unwrap_or(range), a, out)
        }
    }
}

fn count_with(v: &(dyn Fn(f64) -> f64 + Sync), bounds: (f64, f64), a: &CountArgs, out: &mut dyn Write) -> Result<i32> {
    let dx = a.dx.unwrap_or(a.h / 8.0);
    let weyl = weyl_estimate(v, a.e, a.h, bounds, 1e-10)?;
    let exact = fd_count(v, a.h, a.e, bounds, dx)?;
    writeln!(out, "exact={exact}")?;
    writeln!(out, "weyl={}", fmt17(weyl))?;
    if exact > 0 {
        writeln!(out, "rel_err={}", fmt17((weyl - exact as f64) / exact as f64))?;
    }
    if let Some(cells) = a.bracket {
        let cuts: Vec<f64> = (0..=cells).map(|i| bounds.0 + (bounds.1 - bounds.0) * i as f64 / cells as f64).collect();
        let b = bracketing_counts(v, a.h, a.e, &cuts, dx)?;
        writeln!(out, "lower={}", b.lower)?;
        writeln!(out, "upper={}", b.upper)?;
        if !(b.lower <= b.exact && b.exact <= b.upper) {
            return Err(Error::IdentityViolation(format!("bracketing {} <= {} <= {}", b.lower, b.exact, b.upper)));
        }
    }
    Ok(0)
}

fn surface(a: &SurfaceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let domain = match a.domain {
        SurfaceDomain::Neumann => FiberDomain::HalfLineNeumann,
        SurfaceDomain::Line => FiberDomain::FullLine,
    };
    let g = match a.grid.split_once('x').map(|(p, q)| (p.trim().parse::<usize>(), q.trim().parse::<usize>())) {
        Some((Ok(p), Ok(q))) if p == q => p,
        _ => return Err(Error::invalid(format!("--grid '{}': expected GxG", a.grid))),
    };
    let opts = BandOptions { n: a.nodes, extrapolate: true };
    let m = band_surface_min(domain, pair(&a.xrange, "--xrange")?, pair(&a.xirange, "--xirange")?, g, a.tol, &opts)?;
    with_sink(&a.out, out, |w| m.write_csv(w))?;
    if let Some(w) = &m.warning {
        writeln!(err, "WARN: {w}")?;
    }
    writeln!(out, "min {} {} {}", m.arg.0, m.arg.1, m.value)?;
    Ok(0)
}

pub const DELTA_AGREEMENT: f64 = 1e-10;

fn delta(a: &DeltaArgs, out: &mut dyn Write) -> Result<i32> {
    let xs: Vec<f64> = match (&a.x, &a.scan) {
        (Some(x), _) => vec![*x],
        (None, Some(s)) => match floats(s, "--scan")?[..] {
            [lo, hi, n] if n >= 2.0 && n.fract() == 0.0 && hi > lo => {
                let n = n as usize;
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
            _ => return Err(Error::invalid("--scan expects a,b,N with a < b and integer N >= 2")),
        },
        _ => unreachable!("clap requires one of --x, --scan"),
    };
    let mut w = csv_writer(&mut *out);
    w.write_record(["x", "level", "closed_form", "oracle"])?;
    let mut worst: f64 = 0.0;
    for &x in &xs {
        let (c, o) = (delta_spectrum(x)?, delta_oracle(x)?);
        let mut rows = vec![(1, c.mu1, o.mu1)];
        if x > 1.0 {
            rows.push((2, c.mu2, o.mu2));
        }
        for (level, cv, ov) in rows {
            worst = worst.max((cv - ov).abs());
            w.write_record([fmt17(x), level.to_string(), fmt17(cv), fmt17(ov)])?;
        }
    }
    w.flush()?;
    drop(w);
    if worst > DELTA_AGREEMENT {
        return Err(Error::IdentityViolation(format!("closed form and oracle differ by {worst:e}")));
    }
    Ok(0)
}

type Check = (&'static str, fn(u64) -> std::result::Result<(), String>);

/// The invariant suite behind `selftest`.
pub const CHECKS: &[Check] = &[
    ("sturm_count_vs_dense", check_sturm),
    ("lanczos_vs_bisection", check_lanczos),
    ("residual_contract", check_residuals),
    ("hermitian_embedding_dedup", check_embedding),
    ("gauge_invariance", check_gauge),
    ("tail_mass", check_tail),
    ("convergence_order", check_order),
    ("bracketing", check_bracketing),
    ("delta_closed_form", check_delta),
    ("degennes_identities", check_degennes),
];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tridiag(rng: &mut ChaCha8Rng, n: usize) -> Tridiag {
    let d = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let e = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tridiag::new(d, e).expect("finite entries")
}

fn check_sturm(seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let n = rng.gen_range(2..=100);
        let t = random_tridiag(&mut rng, n);
        let e = rng.gen_range(-3.0..3.0);
        let dense = dense_sym_eigen(&t.to_dense_reduced()).map_err(|e| e.to_string())?;
        let want: usize =
            dense.eigenvalues.iter().zip(&dense.multiplicities).filter(|(v, _)| **v < e).map(|(_, m)| m).sum();
        let got = sturm_count(&t, e).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("n = {n}, E = {e}: sturm {got}, dense {want}"))?;
    }
    Ok(())
}

fn lanczos_case(seed: u64) -> std::result::Result<(Tridiag, Spectrum), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_tridiag(&mut rng, 400);
    let s = lanczos(&t, &LanczosOptions { k: 4, tol: 1e-9, max_matvecs: 200_000, seed, ..Default::default() })
        .map_err(|e| e.to_string())?;
    ensure(s.meta.converged, || "lanczos did not converge".into())?;
    Ok((t, s))
}

fn check_lanczos(seed: u64) -> std::result::Result<(), String> {
    let (t, s) = lanczos_case(seed)?;
    let exact = tridiag_eigenvalues(&t, 4, 1e-14).map_err(|e| e.to_string())?;
    for (i, (a, b)) in s.eigenvalues.iter().zip(&exact.eigenvalues).enumerate() {
        let tol = 1e-9f64.max(s.residuals[i]);
        ensure((a - b).abs() <= tol, || format!("level {i}: lanczos {a}, bisection {b}"))?;
    }
    Ok(())
}

fn check_residuals(seed: u64) -> std::result::Result<(), String> {
    let (t, s) = lanczos_case(seed)?;
    for i in 0..s.len() {
        let v = s.vector(i).ok_or("missing eigenvector")?;
        let mut y = vec![0.0; v.len()];
        t.apply(v, &mut y);
        let r = y.iter().zip(v).map(|(a, b)| (a - s.eigenvalues[i] * b).powi(2)).sum::<f64>().sqrt();
        ensure(r <= s.residuals[i] * 1.01 + f64::EPSILON, || format!("level {i}: |Av - λv| = {r:e} > {:e}", s.residuals[i]))?;
    }
    Ok(())
}

struct DenseComplex(DMatrix<Complex64>);

impl ComplexOperator for DenseComplex {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..x.len()).map(|j| self.0[(i, j)] * x[j]).sum();
        }
    }
}

fn check_embedding(_seed: u64) -> std::result::Result<(), String> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    // [[a, z], [conj z, d]]: (a + d)/2 ± sqrt(((a - d)/2)^2 + |z|^2).
    let (a, d, z) = (1.0, -0.5, c(0.3, 0.4));
    let m2 = DMatrix::from_row_slice(2, 2, &[c(a, 0.0), z, z.conj(), c(d, 0.0)]);
    let r = (((a - d) / 2.0f64).powi(2) + z.norm_sqr()).sqrt();
    let two = [(a + d) / 2.0 - r, (a + d) / 2.0 + r];
    // Block diagonal of two rotated copies: spectrum {1, 3} ∪ {0, 2}.
    let u = c(0.6, 0.8);
    let b1 = [c(2.0, 0.0), u, u.conj(), c(2.0, 0.0)];
    let b2 = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)];
    let mut m4 = DMatrix::from_element(4, 4, c(0.0, 0.0));
    for (k, blk) in [b1, b2].iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                m4[(2 * k + i, 2 * k + j)] = blk[2 * i + j];
            }
        }
    }
    for (m, want) in [(m2, two.to_vec()), (m4, vec![0.0, 1.0, 2.0, 3.0])] {
        let emb = hermitian_embed(DenseComplex(m));
        let raw = dense_sym_eigen(&to_dense(&emb)).map_err(|e| e.to_string())?;
        let pairs = raw.eigenvalues.iter().zip(&raw.multiplicities).flat_map(|(v, m)| vec![(*v, 0.0, None); *m]).collect();
        let s = Spectrum::from_pairs(pairs, EMBED_DEDUP_REL, Default::default());
        ensure(s.eigenvalues.len() == want.len(), || format!("{} distinct values, want {}", s.eigenvalues.len(), want.len()))?;
        for ((got, mult), w) in s.eigenvalues.iter().zip(&s.multiplicities).zip(&want) {
            ensure((got - w).abs() < 1e-12 && *mult == 2, || format!("{got} (x{mult}) vs {w}"))?;
        }
    }
    Ok(())
}

fn check_gauge(seed: u64) -> std::result::Result<(), String> {
    let h = 0.2;
    let a = MagneticPotential2D::well();
    let shifted = a.gauge_shift(|x, y| y * (x * y).cos(), |x, y| x * (x * y).cos(), "sin(xy)");
    let lowest = |op: &dyn ComplexOperator| lowest_complex(op, 2, seed).map_err(|e| e.to_string());
    let e0 = lowest(&build_magnetic_well(h, 1.5, 24).map_err(|e| e.to_string())?)?;
    let e1 = lowest(&build_magnetic_well_gauge(h, 1.5, 24, &shifted).map_err(|e| e.to_string())?)?;
    for (p, q) in e0.iter().zip(&e1) {
        ensure((p - q).abs() <= 1e-6, || format!("{p} vs {q}"))?;
    }
    Ok(())
}

fn check_tail(_seed: u64) -> std::result::Result<(), String> {
    for model in [Model1D::Harmonic, Model1D::DeGennes { zeta: 0.77 }, Model1D::Montgomery { k: 1, zeta: 0.35 }] {
        let g = model.default_grid(2000).map_err(|e| e.to_string())?;
        let t = model.build(&g).map_err(|e| e.to_string())?;
        let s = crate::eigencore::tridiag_eigenpairs(&t, 1, 1e-13).map_err(|e| e.to_string())?;
        let tail = g.tail_mass(&t, s.vector(0).ok_or("missing eigenvector")?);
        ensure(tail <= 1e-8, || format!("{model:?}: tail mass {tail:e}"))?;
    }
    Ok(())
}

fn check_order(_seed: u64) -> std::result::Result<(), String> {
    for model in [Model1D::Harmonic, Model1D::DeGennes { zeta: 0.77 }] {
        let g = model.default_grid(400).map_err(|e| e.to_string())?;
        let p = convergence_order(&model, &g, 2).map_err(|e| e.to_string())?;
        ensure((1.8..=2.2).contains(&p), || format!("{model:?}: order {p}"))?;
    }
    Ok(())
}

fn check_bracketing(_seed: u64) -> std::result::Result<(), String> {
    let v = |x: f64| x * x / (1.0 + x * x) + 0.3 * (3.0 * x).sin().powi(2);
    for (h, cells) in [(0.05, 4), (0.02, 8), (0.01, 16)] {
        let cuts: Vec<f64> = (0..=cells).map(|i| -4.0 + 8.0 * i as f64 / cells as f64).collect();
        let b = bracketing_counts(&v, h, 0.6, &cuts, h / 8.0).map_err(|e| e.to_string())?;
        ensure(b.lower <= b.exact && b.exact <= b.upper, || format!("h = {h}: {b:?}"))?;
    }
    Ok(())
}

fn check_delta(_seed: u64) -> std::result::Result<(), String> {
    for i in 1..=80 {
        let x = 0.1 * i as f64;
        let (c, o) = (delta_spectrum(x).map_err(|e| e.to_string())?, delta_oracle(x).map_err(|e| e.to_string())?);
        let d = (c.mu1 - o.mu1).abs().max((c.mu2 - o.mu2).abs());
        ensure(d <= DELTA_AGREEMENT, || format!("x = {x}: defect {d:e}"))?;
    }
    Ok(())
}

fn check_degennes(_seed: u64) -> std::result::Result<(), String> {
    degennes_constants(&BandOptions::default()).map(|_| ()).map_err(|e| e.to_string())
}

/// Run every check; returns `(name, outcome)` in suite order.
pub fn run_checks(seed: u64) -> Vec<(&'static str, std::result::Result<(), String>)> {
    CHECKS.par_iter().map(|(name, f)| (*name, f(seed))).collect()
}

fn selftest(out: &mut dyn Write) -> Result<i32> {
    let results = run_checks(seed_from_env()?);
    let mut failed: HashMap<&str, String> = HashMap::new();
    for (name, r) in &results {
        match r {
            Ok(()) => writeln!(out, "{name}=pass")?,
            Err(msg) => {
                writeln!(out, "{name}=fail {msg}")?;
                failed.insert(name, msg.clone());
            }
        }
    }
    if !failed.is_empty() {
        let mut names: Vec<&str> = failed.keys().copied().collect();
        names.sort_unstable();
        return Err(Error::IdentityViolation(format!("selftest failed: {}", names.join(", "))));
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut argv = vec!["magspec"];
        argv.extend_from_slice(args);
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2_with_err_line() {
        let (code, _, err) = call(&["band", "--model", "nonsense", "--range", "0,1"]);
        assert_eq!(code, 2);
        assert!(err.lines().any(|l| l.starts_with("ERR:")));
        let (code, _, err) = call(&["frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.lines().last().unwrap().starts_with("ERR:"));
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(classify(&Error::NotConverged { solver: "x", detail: String::new() }).0, 3);
        assert_eq!(classify(&Error::IdentityViolation(String::new())).0, 4);
        assert_eq!(classify(&Error::invalid("")).0, 2);
    }

    #[test]
    fn delta_columns_agree() {
        let (code, out, _) = call(&["delta", "--x", "2"]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("x,level,closed_form,oracle"));
        for l in lines {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            assert!((f[2] - f[3]).abs() <= 1e-10);
        }
        assert!(out.ends_with('\n') && !out.contains('\r'));
    }

    #[test]
    fn config_fills_missing_flags_and_flags_win() {
        let dir = std::env::temp_dir().join(format!("magspec-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("campaign.toml");
        std::fs::write(&path, "jobs = 1\n[delta]\nscan = \"0.5,2,4\"\n").unwrap();
        let p = path.to_str().unwrap();
        let merged = merge_config(vec!["magspec".into(), "--config".into(), p.into(), "delta".into()]).unwrap();
        assert!(merged.contains(&"--scan=0.5,2,4".to_string()) && merged.contains(&"--jobs=1".to_string()));
        let (code, out, _) = call(&["--config", p, "delta"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().filter(|l| l.contains(",1,")).count(), 4);
        // Explicit --scan overrides the file.
        let (code, out, _) = call(&["--config", p, "delta", "--scan", "3,4,2"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 1 + 4);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn count_reports_bracketing() {
        let (code, out, _) = call(&["count", "--potential", "harmonic", "--h", "0.05", "--E", "1", "--bracket", "8"]);
        assert_eq!(code, 0, "{out}");
        let kv: HashMap<&str, &str> = out.lines().filter_map(|l| l.split_once('=')).collect();
        assert_eq!(kv["exact"], "10");
        let (lo, hi): (usize, usize) = (kv["lower"].parse().unwrap(), kv["upper"].parse().unwrap());
        assert!(lo <= 10 && hi >= 10);
    }

    #[test]
    fn tabulated_potential_interpolates() {
        let path = std::env::temp_dir().join(format!("magspec-pot-{}.csv", std::process::id()));
        std::fs::write(&path, "x,V\n-1,1\n0,0\n1,1\n").unwrap();
        let (v, range) = tabulated_potential(&path).unwrap();
        assert_eq!(range, (-1.0, 1.0));
        assert_eq!(v(0.5), 0.5);
        assert_eq!(v(3.0), 1.0);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn sweep_is_deterministic_and_fits() {
        let args = ["sweep", "--builder", "bo-triangle", "--hs", "0.04,0.02,0.01,0.005", "--fit", "0,0.6666666666666666,1.3333333333333333"];
        let (code, a, _) = call(&args);
        assert_eq!(code, 0);
        let (_, b, _) = call(&args);
        assert_eq!(a, b);
        assert!(a.contains("\n\nexponent,coefficient\n"));
        assert!(call(&["sweep", "--builder", "bo-triangle", "--hs", "0.01,0.02,0.005"]).0 == 2);
        assert!(call(&["sweep", "--builder", "bo-triangle", "--hs", "0.04,0.02,0.01", "--richardson"]).0 == 2);
    }

    #[test]
    fn lupan_box_satisfies_truncation_check() {
        for theta in [0.05, 0.3, 1.0, 1.4] {
            let (s, t) = lupan_auto_box(theta);
            assert!(build_lupan(theta, s, t, 16, 8).is_ok(), "{theta}");
        }
    }

    #[test]
    fn selftest_checks_pass() {
        for (name, r) in run_checks(42) {
            assert!(r.is_ok(), "{name}: {r:?}");
        }
        let (code, out, _) = call(&["selftest"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), CHECKS.len());
    }
}
