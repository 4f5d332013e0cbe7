//! Command-line front end: curve framing, mollification, cross-section
//! eigendata, tube admissibility checks, spectra and full radius studies.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use tubelab_core::cross_section::{CrossSection, Shape};
use tubelab_core::curve::{build_from_curvatures, rpaf_from_embedding, table};
use tubelab_core::lab::{self, BuiltSpec, Geometry, RowOutcome, StudyConfig};
use tubelab_core::mollify::{
    sigma, steklov, steklov_derivative, Interpolation, MollifierSchedule, SampledFunction,
};
use tubelab_core::spectral::{
    assemble_3d, assemble_h0, assemble_heff, assemble_strip, flatten, interval_eigendata,
    lowest_eigs, renormalize, AssemblyMode, EffectiveModel, FlatOperator,
};
use tubelab_core::tube::{self, jacobians, strip_jacobians, StripSpec, TubeSpec};

#[derive(Parser)]
#[command(name = "tubelab", version, about = "Thin-tube spectral laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover or integrate a parallel frame and emit its table.
    Frame(FrameArgs),
    /// Window-average a sampled function, or sweep its shift modulus.
    Mollify(MollifyArgs),
    /// Dirichlet eigendata of a cross-section shape.
    Cross(CrossArgs),
    /// Admissibility and twist report for a tube specification.
    Tube(TubeArgs),
    /// Low eigenvalues of one assembled operator.
    Spectrum(SpectrumArgs),
    /// Distances to the effective operator at one radius.
    Gap(GapArgs),
    /// Run a study configuration and write its reports.
    Study(StudyArgs),
    /// List the shipped study presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameMode {
    /// Input rows are `s x y z` positions of a unit-speed curve.
    Embed,
    /// Input rows are `s k1 k2 theta` frame curvatures.
    Curvatures,
}

#[derive(Args)]
struct FrameArgs {
    /// Input table file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: FrameMode,
    /// Output file (stdout when absent).
    #[arg(long = "out")]
    output: Option<PathBuf>,
    /// Chord-length tolerance for the unit-speed check (embed mode).
    #[arg(long)]
    chord_tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitKind {
    /// The window average on the input grid.
    Smooth,
    /// Its exact derivative, the symmetric difference quotient.
    Derivative,
    /// CSV sweep of the shift modulus over halving windows.
    Sigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpKind {
    /// Piecewise-linear samples.
    Linear,
    /// Piecewise-constant samples (left-node convention).
    Step,
}

#[derive(Args)]
struct MollifyArgs {
    /// Input table file with `s value` rows.
    #[arg(long = "in")]
    input: PathBuf,
    /// Window width.
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum)]
    emit: EmitKind,
    #[arg(long, value_enum, default_value = "linear")]
    interp: InterpKind,
}

#[derive(Args)]
struct CrossArgs {
    /// Shape spec, e.g. "rect:1,0.5", "disc:1", "annulus:0.5,1",
    /// "ellipse:2,1", optionally offset with "@x,y".
    #[arg(long)]
    shape: String,
    /// Grid resolution across the bounding box.
    #[arg(long)]
    n: usize,
    /// Also compute at 2n and report Richardson-extrapolated energies.
    #[arg(long)]
    refine: bool,
}

#[derive(Args)]
struct TubeArgs {
    /// Tube specification JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Run the admissibility checks (the only action).
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpectrumMode {
    /// Curvilinear form with raw curvatures, renormalized by E1/eps^2.
    Direct,
    /// Window-averaged form; carries its own renormalization.
    Mollified,
    /// Effective 1D operator.
    Heff,
    /// Tensor comparison operator (tube geometries only).
    H0,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Geometry specification JSON file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    mode: SpectrumMode,
    /// How many low eigenvalues.
    #[arg(long, default_value_t = 5)]
    m: usize,
}

#[derive(Args)]
struct GapArgs {
    /// Geometry specification JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Spectral parameter; must lie below both spectra.
    #[arg(long, allow_hyphen_values = true)]
    lambda: f64,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Report directory (created if missing).
    #[arg(long = "out")]
    out: PathBuf,
}

/// One geometry frozen at one radius: the input of the `tube`, `spectrum`
/// and `gap` subcommands.
#[derive(Serialize, Deserialize)]
struct SpecFile {
    geometry: Geometry,
    eps: f64,
    /// Longitudinal nodes (endpoints included).
    n_s: usize,
    /// Window schedule for mollified assemblies; eps^(2/3) when absent.
    #[serde(default)]
    schedule: Option<MollifierSchedule>,
}

impl SpecFile {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let spec: SpecFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        if spec.n_s < 4 {
            bail!("spec needs n_s >= 4, got {}", spec.n_s);
        }
        Ok(spec)
    }

    fn schedule(&self) -> MollifierSchedule {
        self.schedule.unwrap_or_else(MollifierSchedule::two_thirds)
    }

    fn realize(&self) -> Result<BuiltSpec> {
        let section = self.geometry.section()?;
        Ok(self.geometry.realize(self.eps, self.n_s, section.as_ref())?)
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Frame(args) => cmd_frame(args)?,
        Command::Mollify(args) => cmd_mollify(args)?,
        Command::Cross(args) => cmd_cross(args)?,
        Command::Tube(args) => cmd_tube(args)?,
        Command::Spectrum(args) => cmd_spectrum(args)?,
        Command::Gap(args) => cmd_gap(args)?,
        Command::Study(args) => return cmd_study(args),
        Command::Presets => cmd_presets(),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_frame(args: FrameArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let out = match args.mode {
        FrameMode::Embed => {
            let curve = table::parse_embedding(&text)?;
            let (frame, pair) = rpaf_from_embedding(&curve, args.chord_tol)?;
            table::format_frame(&curve.grid, &frame, &pair)
        }
        FrameMode::Curvatures => {
            // The theta column parametrizes the section attitude, not the
            // frame itself; integration starts from the canonical triad at
            // the origin.
            let (grid, pair, _theta) = table::parse_curvatures(&text)?;
            let (_, frame, pair) = build_from_curvatures(
                &pair.k1,
                &pair.k2,
                grid,
                Vector3::zeros(),
                (Vector3::x(), Vector3::y(), Vector3::z()),
            )?;
            table::format_frame(&grid, &frame, &pair)
        }
    };
    match &args.output {
        Some(path) => fs::write(path, out)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_mollify(args: MollifyArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (grid, values) = table::parse_samples(&text)?;
    let interp = match args.interp {
        InterpKind::Linear => Interpolation::PiecewiseLinear,
        InterpKind::Step => Interpolation::PiecewiseConstant,
    };
    let f = SampledFunction::new(grid, values, interp)?;
    match args.emit {
        EmitKind::Smooth => print_samples(&steklov(&f, args.delta)?),
        EmitKind::Derivative => print_samples(&steklov_derivative(&f, args.delta)?),
        EmitKind::Sigma => {
            println!("delta,sigma");
            for k in 0..=8 {
                let d = args.delta * 0.5f64.powi(k);
                println!("{d},{}", sigma(&f, d)?);
            }
        }
    }
    Ok(())
}

fn print_samples(f: &SampledFunction) {
    for i in 0..f.grid.len() {
        println!("{} {}", f.grid.node(i), f.values[i]);
    }
}

fn cmd_cross(args: CrossArgs) -> Result<()> {
    let shape: Shape = args.shape.parse()?;
    let cs = if args.refine {
        CrossSection::compute_refined(&shape, args.n)?
    } else {
        CrossSection::compute(&shape, args.n)?
    };
    let json = serde_json::json!({
        "E1": cs.e1,
        "E2": cs.e2,
        "C_omega": cs.c_omega,
        "a": cs.radius_bound,
        "circular": cs.shape.is_axisymmetric(),
        "grid": args.n,
        "nodes": cs.lattice.len(),
        "extrapolated": cs.extrapolated.map(|(e1, e2)| vec![e1, e2]),
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn cmd_tube(args: TubeArgs) -> Result<()> {
    if !args.check {
        bail!("nothing to do; pass --check");
    }
    let spec = SpecFile::load(&args.spec)?;
    let built = spec.realize()?;
    let tube_spec = match built {
        BuiltSpec::Tube(t) => t,
        BuiltSpec::Strip(_) => bail!("tube checks need a tube geometry, not a strip"),
    };
    let report = tube::check(&tube_spec, Some(&spec.schedule()))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// A shift strictly below every operator assembled from the spec: the
/// renormalized forms are bounded below by -9 kappa_inf^2.
fn safe_shift(kappa_inf: f64) -> f64 {
    -9.0 * kappa_inf * kappa_inf - 1.0
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    if args.m == 0 {
        bail!("m must be at least 1");
    }
    let spec = SpecFile::load(&args.spec)?;
    let schedule = spec.schedule();
    let built = spec.realize()?;
    let (op, shift) = match &built {
        BuiltSpec::Strip(strip) => strip_operator(strip, &schedule, args.mode)?,
        BuiltSpec::Tube(tube) => tube_operator(tube, &schedule, args.mode)?,
    };
    let (vals, _) = lowest_eigs(&op, args.m, shift)?;
    let json = serde_json::json!({
        "eps": spec.eps,
        "n_s": spec.n_s,
        "shift": shift,
        "renorm": op.renorm,
        "eigenvalues": vals,
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn strip_operator(
    spec: &StripSpec,
    schedule: &MollifierSchedule,
    mode: SpectrumMode,
) -> Result<(FlatOperator, f64)> {
    let shift = safe_shift(spec.kappa_inf());
    let op = match mode {
        SpectrumMode::Direct => {
            let jac = strip_jacobians(spec, Some(schedule))?;
            let (e1d, _) = interval_eigendata(spec.n_t, spec.dt(), 1);
            renormalize(
                flatten(&assemble_strip(spec, &jac, AssemblyMode::Direct)?)?,
                spec.eps,
                e1d[0],
            )?
        }
        SpectrumMode::Mollified => {
            let jac = strip_jacobians(spec, Some(schedule))?;
            flatten(&assemble_strip(spec, &jac, AssemblyMode::Mollified)?)?
        }
        SpectrumMode::Heff => assemble_heff(
            &spec.kappa,
            &vec![0.0; spec.grid.len()],
            0.0,
            spec.grid,
            EffectiveModel::Strip,
        )?,
        SpectrumMode::H0 => bail!("the tensor comparison operator needs a tube geometry"),
    };
    Ok((op, shift))
}

fn tube_operator(
    spec: &TubeSpec,
    schedule: &MollifierSchedule,
    mode: SpectrumMode,
) -> Result<(FlatOperator, f64)> {
    let shift = safe_shift(spec.pair.kappa_inf());
    let op = match mode {
        SpectrumMode::Direct => {
            let jac = jacobians(spec, Some(schedule))?;
            renormalize(
                flatten(&assemble_3d(spec, &jac, AssemblyMode::Direct)?)?,
                spec.eps,
                spec.section.e1,
            )?
        }
        SpectrumMode::Mollified => {
            let jac = jacobians(spec, Some(schedule))?;
            flatten(&assemble_3d(spec, &jac, AssemblyMode::Mollified)?)?
        }
        SpectrumMode::Heff => assemble_heff(
            &spec.pair.kappa,
            &spec.theta_dot,
            spec.section.c_omega,
            spec.grid(),
            EffectiveModel::Tube,
        )?,
        SpectrumMode::H0 => assemble_h0(
            spec.grid(),
            &spec.section,
            spec.eps,
            &spec.pair.kappa,
            &spec.theta_dot,
            spec.section.c_omega,
        )?,
    };
    Ok((op, shift))
}

fn cmd_gap(args: GapArgs) -> Result<()> {
    let spec = SpecFile::load(&args.spec)?;
    let config = StudyConfig {
        name: "gap".into(),
        geometry: spec.geometry.clone(),
        eps_list: vec![spec.eps],
        schedule: spec.schedule(),
        lambda: args.lambda,
        n_s_base: spec.n_s,
        n_s_min: spec.n_s,
        eig_count: 3,
        rate_only: false,
        mode_gap: true,
        perp_floor: false,
        window: None,
        assertions: vec![],
    };
    let report = lab::run_study(&config)?;
    match &report.rows[0].outcome {
        RowOutcome::Ok { gap, .. } => {
            println!("{}", serde_json::to_string_pretty(gap)?);
            Ok(())
        }
        RowOutcome::Failed { error } => bail!("row failed: {error}"),
        RowOutcome::RateOnly { .. } => unreachable!("rate_only is off"),
    }
}

fn cmd_study(args: StudyArgs) -> Result<ExitCode> {
    let config = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<StudyConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(name)) => lab::preset(name)?,
        _ => bail!("pass exactly one of --config or --preset"),
    };
    let report = lab::run_study(&config)?;
    let (csv, json) = lab::write_report(&report, &args.out)?;

    println!("study '{}': {} rows", report.config.name, report.rows.len());
    for row in &report.rows {
        match &row.outcome {
            RowOutcome::Ok { gap, .. } => println!(
                "  eps {:<9} n_s {:<7} resolvent gap {:.4e}  bracket {:.4e}",
                row.eps, row.n_s, gap.resolvent_gap, gap.bound_bracket
            ),
            RowOutcome::RateOnly { components } => println!(
                "  eps {:<9} n_s {:<7} bracket {:.4e} (rate only)",
                row.eps, row.n_s, components.total
            ),
            RowOutcome::Failed { error } => {
                println!("  eps {:<9} failed: {error}", row.eps)
            }
        }
    }
    for a in &report.assertions {
        println!("  [{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_presets() {
    for p in lab::presets() {
        println!("{}", p.name);
    }
}
