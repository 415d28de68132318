use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use g2kit_core::cycles::{
    closedness_check, count_hslag, flow_run, Configuration, CycleError, FlowOptions, Phi0, PhiA, TangentVector,
};
use g2kit_core::forms::Metric;
use g2kit_core::g2::{structure_checks, G2Structure};
use g2kit_core::gauge::{curvature, sd_split, GaugeError, LatticeConnection};
use g2kit_core::homology::{asd_bundle_count, simplicial_homology, HomologyError};
use g2kit_core::lagr::{boundary_data, load_pair, AlphaMode, LagrError};
use g2kit_core::mesh::{calibration_residuals, load_complex, load_mesh, slice_volume_check, ImmersedMesh, MeshError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser, Debug)]
#[command(name = "g2kit", version, about = "Calibrated cycles, U(1) gauge fields and G2 structures on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Residual and convergence tolerance.
    #[arg(long, global = true, default_value_t = 1e-8, value_parser = positive)]
    tol: f64,
    /// Finite-difference step for closedness checks.
    #[arg(long, global = true, default_value_t = 1e-3, value_parser = positive)]
    h: f64,
    /// Tolerance for clustering flow endpoints.
    #[arg(long, global = true, default_value_t = 1e-4, value_parser = positive)]
    cluster_tol: f64,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report (or, for `flow`, the CSV trace) here as well.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 10_000)]
    max_steps: usize,
    /// Initial flow step.
    #[arg(long, global = true, default_value_t = 0.1, value_parser = positive)]
    dt: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the identities of the standard G2 structure.
    VerifyStructure,
    /// Calibration residuals of a mesh, plus the self-dual split of a connection.
    Residuals { mesh: PathBuf, conn: Option<PathBuf> },
    /// Run the residual-decreasing flow.
    Flow { mesh: PathBuf, conn: Option<PathBuf> },
    /// Flow every seed in a directory and cluster the endpoints.
    Count { seeds: PathBuf },
    /// First homology and the ASD bundle count of a 3-complex.
    Torsion { complex: PathBuf },
    /// Slice inequality for a 4-mesh fibred over the circle.
    Slice { mesh: PathBuf },
    /// Lagrangian check for a pair (C, L) with a boundary map.
    Lagrangian { c: PathBuf, l: PathBuf, bmap: PathBuf },
    /// Finite-difference exterior derivative of Φ₀ (4-meshes) or Φ_A (3-meshes).
    Closedness { mesh: PathBuf, conn: Option<PathBuf> },
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err("must be positive".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Errors split by exit status: bad input is 2, a failed check is 1.
enum Failure {
    Input(String),
    Check(String),
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io { .. } | MeshError::Parse { .. } | MeshError::Invalid(_) => Failure::Input(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<GaugeError> for Failure {
    fn from(e: GaugeError) -> Self {
        match e {
            GaugeError::Parse { .. } | GaugeError::UnknownEdge(..) | GaugeError::DuplicateEdge(..) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<CycleError> for Failure {
    fn from(e: CycleError) -> Self {
        match e {
            CycleError::Mesh(m) => m.into(),
            CycleError::Gauge(g) => g.into(),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<HomologyError> for Failure {
    fn from(e: HomologyError) -> Self {
        Failure::Check(e.to_string())
    }
}

impl From<LagrError> for Failure {
    fn from(e: LagrError) -> Self {
        match e {
            LagrError::Mesh(m) => m.into(),
            LagrError::Io(_) | LagrError::Parse { .. } => Failure::Input(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

struct Report {
    text: String,
    passed: bool,
}

impl Report {
    fn new() -> Self {
        Self { text: String::new(), passed: true }
    }

    fn line(&mut self, fields: &[(&str, String)]) {
        let parts: Vec<String> = fields.iter().map(|(k, v)| if k.is_empty() { v.clone() } else { format!("{k}={v}") }).collect();
        self.text.push_str(&parts.join(" "));
        self.text.push('\n');
    }

    fn require(&mut self, ok: bool) {
        self.passed &= ok;
    }
}

/// `0` for values that are roundoff relative to `scale`, otherwise fixed
/// twelve-digit scientific notation so reports diff cleanly.
fn num(x: f64, scale: f64) -> String {
    if x.abs() <= 1e-12 * scale.abs().max(1.0) {
        "0".into()
    } else {
        format!("{x:.12e}")
    }
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn int(x: impl Display) -> String {
    x.to_string()
}

fn read_configuration(mesh: &Path, conn: Option<&Path>) -> Result<Configuration, Failure> {
    let m = load_mesh(mesh)?;
    let connection = match conn {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            LatticeConnection::parse(&text, m.complex())?
        }
        None => LatticeConnection::zero(m.complex()),
    };
    Ok(Configuration::new(m, connection)?)
}

fn verify_structure() -> Report {
    let mut r = Report::new();
    for c in structure_checks(&G2Structure::standard()) {
        let ok = c.deviation <= 1e-12;
        r.line(&[("check", c.name.to_string()), ("deviation", num(c.deviation, 1.0)), ("pass", flag(ok))]);
        r.require(ok);
    }
    r
}

fn residuals(cli: &Cli, cfg: &Configuration) -> Result<Report, Failure> {
    let s = G2Structure::standard();
    let res = calibration_residuals(&cfg.mesh, &s)?;
    let scale = res.volume;
    let mut r = Report::new();
    let (key, value) = match (res.coassoc, res.assoc) {
        (Some(x), _) => ("coassoc", x),
        (_, Some(x)) => ("assoc", x),
        _ => unreachable!("residuals cover 3- and 4-meshes"),
    };
    r.line(&[(key, num(value, scale)), ("defect", num(res.calibration_defect, scale))]);
    r.line(&[("volume", num(res.volume, 1.0)), ("max_pointwise", num(res.max_pointwise, 1.0))]);
    r.require(value <= cli.tol);
    if cfg.mesh.dim() == 4 {
        let split = sd_split(&curvature(cfg.complex(), &cfg.connection), &cfg.mesh, &s)?;
        r.line(&[("Fplus_norm", num(split.fplus_norm, 1.0)), ("Fminus_norm", num(split.fminus_norm, 1.0))]);
        r.require(split.fplus_norm <= cli.tol);
    }
    Ok(r)
}

fn options(cli: &Cli) -> FlowOptions {
    FlowOptions { dt: cli.dt, max_steps: cli.max_steps, tol: cli.tol, ..FlowOptions::default() }
}

fn flow(cli: &Cli, cfg: &Configuration) -> Result<(Report, String), Failure> {
    let res = flow_run(cfg, &G2Structure::standard(), &options(cli))?;
    let mut r = Report::new();
    let first = res.trace.first().map_or(f64::NAN, |t| t.r);
    r.line(&[
        ("steps", int(res.trace.len() - 1)),
        ("R0", num(first, 1.0)),
        ("R", num(res.final_r(), 1.0)),
        ("converged", flag(res.converged)),
        ("diverged", flag(res.diverged)),
    ]);
    r.require(res.converged);
    Ok((r, res.trace_csv()))
}

fn read_seeds(dir: &Path) -> Result<Vec<(String, Configuration)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    let mut meshes: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mesh"))
        .collect();
    meshes.sort();
    meshes
        .into_iter()
        .map(|p| {
            let conn = p.with_extension("conn");
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, read_configuration(&p, conn.exists().then_some(conn.as_path()))?))
        })
        .collect()
}

fn count(cli: &Cli, dir: &Path) -> Result<Report, Failure> {
    let seeds = read_seeds(dir)?;
    let configs: Vec<Configuration> = seeds.iter().map(|s| s.1.clone()).collect();
    let rep = count_hslag(&configs, &G2Structure::standard(), &options(cli), cli.cluster_tol)?;
    let mut r = Report::new();
    r.line(&[("seeds", int(seeds.len())), ("basins", int(rep.basins.len())), ("not_converged", int(rep.not_converged.len()))]);
    for (i, b) in rep.basins.iter().enumerate() {
        let members: Vec<&str> = b.members.iter().map(|&m| seeds[m].0.as_str()).collect();
        r.line(&[
            ("basin", int(i)),
            ("multiplicity", int(b.multiplicity())),
            ("representative", seeds[b.representative].0.clone()),
            ("members", members.join(",")),
        ]);
    }
    for &i in &rep.not_converged {
        r.line(&[("not_converged", seeds[i].0.clone()), ("R", num(rep.results[i].final_r(), 1.0))]);
    }
    Ok(r)
}

fn torsion(path: &Path) -> Result<Report, Failure> {
    let c = load_complex(path)?;
    let h1 = simplicial_homology(&c, 1)?;
    let mut r = Report::new();
    let count = match asd_bundle_count(&c) {
        Ok(n) => n.to_string(),
        Err(HomologyError::InfiniteFamily { .. }) => "infinite".into(),
        Err(e) => return Err(e.into()),
    };
    r.line(&[("", "H1".into()), ("betti", int(h1.betti)), ("torsion", int(h1.torsion_order())), ("asd_count", count)]);
    if h1.betti > 0 {
        r.line(&[("", "obstruction".into()), ("b1", int(h1.betti)), ("holonomy_constraints", int(h1.betti))]);
    }
    Ok(r)
}

fn slice(cli: &Cli, m: &ImmersedMesh) -> Result<Report, Failure> {
    let rep = slice_volume_check(m, &Metric::euclidean(7), cli.tol)?;
    let margin = rep.vol_c - rep.slice_integral;
    let mut r = Report::new();
    r.line(&[
        ("vol", num(rep.vol_c, 1.0)),
        ("slice_integral", num(rep.slice_integral, 1.0)),
        ("margin", num(margin, rep.vol_c)),
        ("is_product", flag(rep.is_product)),
    ]);
    let levels: Vec<String> = rep.level_volumes.iter().map(|v| num(*v, 1.0)).collect();
    r.line(&[("level_volumes", levels.join(","))]);
    r.require(margin >= -cli.tol * rep.vol_c.max(1.0));
    Ok(r)
}

fn lagrangian(c: &Path, l: &Path, bmap: &Path) -> Result<Report, Failure> {
    let (c, l, map) = load_pair(c, l, bmap)?;
    let data = boundary_data(&c, &l, &map, &AlphaMode::FullImage)?;
    let mut r = Report::new();
    let span = data.image_span();
    let isotropic = span.transpose().mul(data.space.pairing()).mul(&span).is_zero();
    let (lag, exact) = (data.is_lagrangian(), data.sequence_is_exact());
    r.line(&[
        ("m", int(data.space.half_dim())),
        ("rank_alpha", int(data.alpha.rank())),
        ("rank_beta", int(data.beta.rank())),
        ("isotropic", flag(isotropic)),
        ("lagrangian", flag(lag)),
        ("exact", flag(exact)),
    ]);
    for n in &data.nodes {
        r.line(&[
            ("node", n.label.clone()),
            ("dim", int(n.dim)),
            ("rank_in", int(n.rank_in)),
            ("rank_out", int(n.rank_out)),
            ("exact", flag(n.is_exact())),
        ]);
    }
    r.require(lag && exact);
    Ok(r)
}

fn closedness(cli: &Cli, cfg: &Configuration) -> Result<Report, Failure> {
    let s = G2Structure::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let d1 = TangentVector::random(cfg, &mut rng, 1.0, 1.0);
    let d2 = TangentVector::random(cfg, &mut rng, 1.0, 1.0);
    let at = |h: f64| -> Result<f64, CycleError> {
        match cfg.mesh.dim() {
            4 => closedness_check(&Phi0(&s), cfg, &d1, &d2, h),
            _ => closedness_check(&PhiA(&s), cfg, &d1, &d2, h),
        }
    };
    let (coarse, fine) = (at(10.0 * cli.h)?, at(cli.h)?);
    let order = (coarse.abs() / fine.abs()).log10();
    let negligible = fine.abs() <= cli.tol;
    let mut r = Report::new();
    r.line(&[
        ("form", if cfg.mesh.dim() == 4 { "phi0" } else { "phiA" }.into()),
        ("h", format!("{:e}", cli.h)),
        ("d_coarse", num(coarse, 1.0)),
        ("d_fine", num(fine, 1.0)),
        ("order", if order.is_finite() { format!("{order:.3}") } else { "nan".into() }),
    ]);
    r.require(negligible || order >= 1.9);
    Ok(r)
}

fn execute(cli: &Cli) -> Result<Report, Failure> {
    let mut extra: Option<String> = None;
    let report = match &cli.command {
        Command::VerifyStructure => verify_structure(),
        Command::Residuals { mesh, conn } => residuals(cli, &read_configuration(mesh, conn.as_deref())?)?,
        Command::Flow { mesh, conn } => {
            let (r, csv) = flow(cli, &read_configuration(mesh, conn.as_deref())?)?;
            extra = Some(csv);
            r
        }
        Command::Count { seeds } => count(cli, seeds)?,
        Command::Torsion { complex } => torsion(complex)?,
        Command::Slice { mesh } => slice(cli, &load_mesh(mesh)?)?,
        Command::Lagrangian { c, l, bmap } => lagrangian(c, l, bmap)?,
        Command::Closedness { mesh, conn } => closedness(cli, &read_configuration(mesh, conn.as_deref())?)?,
    };
    if let Some(out) = &cli.out {
        let body = extra.as_deref().unwrap_or(&report.text);
        fs::write(out, body).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    }
    Ok(report)
}

fn configure_threads() {
    let Ok(v) = std::env::var("G2KIT_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            // a second initialisation only happens in tests; ignore it
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring G2KIT_THREADS={v}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match execute(&cli) {
        Ok(r) => {
            print!("{}", r.text);
            if r.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
