//! Command-line front end. Every command writes CSV (and optionally SVG)
//! tables into `--out`, each with a `<file>.manifest.json` beside it.
//!
//! Exit codes: 0 success, 2 usage error, 1 computation error.

pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::beamtrain::{
    propagate, square_aperture_coupling_offset, BeamTrain, InputMode, PackagingGeometry,
};
use crate::designopt::{
    optimize_cavity, optimize_lens_from_catalog, optimize_lens_train, parse_catalog,
    substrate_sweep, CavityDesignProblem, LensDesignProblem,
};
use crate::detector::fit::Param;
use crate::detector::{
    dark_rate, de_vs_dcr_curve, load_observations, system_de, DetectorChannelModel, FitOptions,
    FitReport, ObservationPoint,
};
use crate::error::Error;
use crate::materials::MaterialDb;
use crate::recipes::{self, ACTIVE_SIDE};
use crate::sweep::SweepResult;
use crate::system::{
    channel_report, compare_generations, loss_sweep, LinkParams, OperatingPoint, SystemConfig,
};
use crate::thinfilm::{
    grouped_absorptance, stack_response, stack_response_unpolarized, LayerStack, Polarization,
};

use output::OutputSink;
use plot::PlotSpec;

#[derive(Parser, Debug)]
#[command(
    name = "snspd",
    version,
    about = "Optics, calibration and system modelling for fiber-coupled SNSPDs"
)]
pub struct Cli {
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every stochastic step
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory of material CSV tables (overrides SNSPD_MATERIALS_DIR)
    #[arg(long, global = true)]
    pub materials_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Svg
    }
    fn svg(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// R, T and per-material absorptance of a layer stack over wavelength
    StackSpectrum(StackSpectrumArgs),
    /// Gaussian spot radius along a fiber-lens-substrate train
    BeamProfile(BeamProfileArgs),
    /// Power fraction of a Gaussian spot inside the square active area
    Coupling(CouplingArgs),
    /// Fit channel parameters to observations
    Fit(FitArgs),
    /// DE and DCR versus bias for one channel
    Curve(CurveArgs),
    /// DE at fixed dark rates for every channel of a system
    Channels(ChannelsArgs),
    /// Choose cavity layer thicknesses for band-averaged absorptance
    OptimizeCavity(OptimizeCavityArgs),
    /// Choose GRIN lens parameters for the smallest spot on the meander
    OptimizeLens(OptimizeLensArgs),
    /// BB84 sifted rate and QBER versus channel loss
    Qkd(QkdArgs),
    /// Regenerate the tables of a bundled figure recipe
    Reproduce(ReproduceArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pol {
    Te,
    Tm,
    Unpolarized,
}

#[derive(Args, Debug, Serialize)]
pub struct StackSpectrumArgs {
    /// Stack JSON; the reference cavity device if omitted
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long, default_value_t = 1300.0)]
    pub from_nm: f64,
    #[arg(long, default_value_t = 1600.0)]
    pub to_nm: f64,
    #[arg(long, default_value_t = 10.0)]
    pub step_nm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub angle_deg: f64,
    #[arg(long, value_enum, default_value_t = Pol::Te)]
    pub polarization: Pol,
}

#[derive(Args, Debug, Serialize)]
pub struct BeamProfileArgs {
    /// Beam-train JSON; otherwise a lens train is designed for the substrate
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Bare fiber, no lenses (ignored with --train)
    #[arg(long)]
    pub no_lens: bool,
    #[arg(long)]
    pub wavelength_nm: Option<f64>,
    #[arg(long, default_value_t = 400.0)]
    pub substrate_um: f64,
    /// Sampling step along the train
    #[arg(long, default_value_t = 5.0)]
    pub step_um: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct CouplingArgs {
    /// 1/e² spot radius
    #[arg(long)]
    pub w_um: Option<f64>,
    /// Take the spot from the end of this beam train instead
    #[arg(long, conflicts_with = "w_um")]
    pub train: Option<PathBuf>,
    #[arg(long, default_value_t = 15.0)]
    pub side_um: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dx_um: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dy_um: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Observation CSV (bias_norm,de,dcr_hz,wavelength_nm); the bundled
    /// reference anchors if omitted
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Starting channel JSON; predicted reference optics if omitted
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Free parameters, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = ["registering_midpoint".to_string(), "dark_prefactor".to_string(), "dark_exponent".to_string()])]
    pub free: Vec<String>,
    /// Keep only observations at this wavelength
    #[arg(long)]
    pub wavelength_nm: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct CurveArgs {
    /// Channel JSON
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1550.0)]
    pub wavelength_nm: f64,
    #[arg(long, default_value_t = 0.70)]
    pub bias_from: f64,
    #[arg(long, default_value_t = 0.99)]
    pub bias_to: f64,
    #[arg(long, default_value_t = 0.001)]
    pub bias_step: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ChannelsArgs {
    /// System JSON; the bundled four-channel calibration if omitted
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long, default_value_t = 1550.0)]
    pub wavelength_nm: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeCavityArgs {
    /// Stack JSON; the reference device if omitted
    #[arg(long)]
    pub stack: Option<PathBuf>,
    /// Indices of the layers to vary (one or two)
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 1300.0)]
    pub band_from_nm: f64,
    #[arg(long, default_value_t = 1600.0)]
    pub band_to_nm: f64,
    #[arg(long, default_value_t = 31)]
    pub points: usize,
    #[arg(long, default_value_t = 10.0)]
    pub min_nm: f64,
    #[arg(long, default_value_t = 600.0)]
    pub max_nm: f64,
    #[arg(long, default_value_t = 2.0)]
    pub grid_step_nm: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeLensArgs {
    #[arg(long, default_value_t = 400.0)]
    pub substrate_um: f64,
    #[arg(long, default_value_t = 1550.0)]
    pub wavelength_nm: f64,
    #[arg(long, default_value_t = 32)]
    pub starts: usize,
    #[arg(long, default_value_t = 0.46)]
    pub max_na: f64,
    #[arg(long, default_value_t = 5.0)]
    pub focus_tolerance_um: f64,
    /// Restrict segments to rods from this catalog CSV
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Also re-optimise over these substrate thicknesses
    #[arg(long, value_delimiter = ',')]
    pub sweep_substrate_um: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct QkdArgs {
    /// System JSON; the bundled four-channel calibration if omitted
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Second system to compare against
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Compare against the first system with couplings scaled by this factor
    #[arg(long, conflicts_with = "compare")]
    pub compare_coupling_scale: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub loss_from_db: f64,
    #[arg(long, default_value_t = 50.0)]
    pub loss_to_db: f64,
    #[arg(long, default_value_t = 1.0)]
    pub loss_step_db: f64,
    #[arg(long, default_value_t = 0.0)]
    pub internal_loss_db: f64,
    #[arg(long, default_value_t = 1e9)]
    pub pulse_rate_hz: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub window_ns: f64,
    #[arg(long, default_value_t = 0.01)]
    pub e_det: f64,
    #[arg(long, default_value_t = 1550.0)]
    pub wavelength_nm: f64,
    /// Operate every channel at this normalised bias
    #[arg(long)]
    pub bias: Option<f64>,
    /// Operate every channel at the bias giving this dark rate
    #[arg(long, default_value_t = 100.0, conflicts_with = "bias")]
    pub dcr_hz: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReproduceArgs {
    #[arg(value_parser = figure_names())]
    pub figure: String,
}

fn figure_names() -> clap::builder::PossibleValuesParser {
    let mut names: Vec<&'static str> = recipes::FIGURES.to_vec();
    names.push("all");
    clap::builder::PossibleValuesParser::new(names)
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Outcome<()> {
    let db = MaterialDb::from_env_or(cli.materials_dir.as_deref())?;
    let name = command_name(&cli.command);
    let config = serde_json::json!({
        "args": &cli.command,
        "out": &cli.out,
        "format": cli.format,
        "materials": match db.origin() {
            crate::materials::MaterialSource::Bundled => "bundled".to_string(),
            crate::materials::MaterialSource::Directory(p) => p.display().to_string(),
        },
    });
    let mut sink = OutputSink::new(&cli.out, name, config, cli.seed, &db)?;
    let ctx = Ctx {
        db: &db,
        seed: cli.seed,
        format: cli.format,
    };
    match &cli.command {
        Command::StackSpectrum(a) => stack_spectrum(&ctx, &mut sink, a),
        Command::BeamProfile(a) => beam_profile(&ctx, &mut sink, a),
        Command::Coupling(a) => coupling(&ctx, &mut sink, a),
        Command::Fit(a) => fit(&ctx, &mut sink, a),
        Command::Curve(a) => curve(&ctx, &mut sink, a),
        Command::Channels(a) => channels(&ctx, &mut sink, a),
        Command::OptimizeCavity(a) => optimize_cavity_cmd(&ctx, &mut sink, a),
        Command::OptimizeLens(a) => optimize_lens_cmd(&ctx, &mut sink, a),
        Command::Qkd(a) => qkd(&ctx, &mut sink, a),
        Command::Reproduce(a) => reproduce(&ctx, &mut sink, a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::StackSpectrum(_) => "stack-spectrum",
        Command::BeamProfile(_) => "beam-profile",
        Command::Coupling(_) => "coupling",
        Command::Fit(_) => "fit",
        Command::Curve(_) => "curve",
        Command::Channels(_) => "channels",
        Command::OptimizeCavity(_) => "optimize-cavity",
        Command::OptimizeLens(_) => "optimize-lens",
        Command::Qkd(_) => "qkd",
        Command::Reproduce(_) => "reproduce",
    }
}

struct Ctx<'a> {
    db: &'a MaterialDb,
    seed: u64,
    format: Format,
}

struct Plot<'a> {
    x: &'a str,
    y: &'a [&'a str],
    log_x: bool,
    log_y: bool,
}

fn emit(
    ctx: &Ctx,
    sink: &mut OutputSink,
    name: &str,
    table: &SweepResult,
    plot: Option<Plot>,
) -> Outcome<()> {
    if ctx.format.csv() || plot.is_none() {
        sink.write(&format!("{name}.csv"), table.to_csv().as_bytes())?;
    }
    if let (true, Some(p)) = (ctx.format.svg(), plot) {
        let spec = PlotSpec {
            title: name,
            x: p.x,
            y: p.y.to_vec(),
            log_x: p.log_x,
            log_y: p.log_y,
        };
        sink.write(
            &format!("{name}.svg"),
            plot::render(table, &spec)?.as_bytes(),
        )?;
    }
    Ok(())
}

/// Inclusive grid `from, from+step, ..., to`; the last point is pinned to `to`.
fn stepped_grid(what: &str, from: f64, to: f64, step: f64) -> Outcome<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) || !(step > 0.0) {
        return usage(format!("{what}: step must be > 0 and bounds finite"));
    }
    if to < from {
        return usage(format!("{what}: empty range [{from}, {to}]"));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    let mut grid: Vec<f64> = (0..n).map(|k| from + step * k as f64).collect();
    if let Some(last) = grid.last_mut() {
        if (to - *last).abs() < 1e-9 * step {
            *last = to;
        }
    }
    Ok(grid)
}

fn load_stack(sink: &mut OutputSink, path: Option<&Path>) -> Outcome<Option<LayerStack>> {
    match path {
        Some(p) => {
            sink.add_input(p)?;
            Ok(Some(LayerStack::load(p)?))
        }
        None => Ok(None),
    }
}

fn load_system(ctx: &Ctx, sink: &mut OutputSink, path: Option<&Path>) -> Outcome<SystemConfig> {
    match path {
        Some(p) => {
            sink.add_input(p)?;
            Ok(SystemConfig::load(p)?)
        }
        None => Ok(recipes::calibrate_all(ctx.db, ctx.seed)?.four_channel_system()?),
    }
}

fn stack_spectrum(ctx: &Ctx, sink: &mut OutputSink, a: &StackSpectrumArgs) -> Outcome<()> {
    let stack = load_stack(sink, a.stack.as_deref())?.unwrap_or_else(LayerStack::reference_device);
    let grid = stepped_grid("wavelength", a.from_nm, a.to_nm, a.step_nm)?;
    if !(a.from_nm > 0.0) {
        return usage("wavelengths must be > 0");
    }
    let angle = a.angle_deg.to_radians();
    let mut t = SweepResult::new(crate::thinfilm::SPECTRUM_COLUMNS);
    for nm in grid {
        let wl = nm * 1e-9;
        let resp = match a.polarization {
            Pol::Te => stack_response(&stack, ctx.db, wl, angle, Polarization::TE)?,
            Pol::Tm => stack_response(&stack, ctx.db, wl, angle, Polarization::TM)?,
            Pol::Unpolarized => stack_response_unpolarized(&stack, ctx.db, wl, angle)?,
        };
        let (nbn, au, other) = grouped_absorptance(&stack, &resp);
        t.push(vec![
            nm,
            resp.reflectance,
            resp.transmittance,
            nbn,
            au,
            other,
        ]);
    }
    let mean: f64 = t.column("A_nbn")?.iter().sum::<f64>() / t.len() as f64;
    println!(
        "{} wavelengths, mean meander absorptance {mean:.4}",
        t.len()
    );
    emit(
        ctx,
        sink,
        "stack_spectrum",
        &t,
        Some(Plot {
            x: "wavelength_nm",
            y: &["A_nbn", "R", "T"],
            log_x: false,
            log_y: false,
        }),
    )
}

fn beam_profile(ctx: &Ctx, sink: &mut OutputSink, a: &BeamProfileArgs) -> Outcome<()> {
    if !(a.step_um > 0.0) || !(a.substrate_um > 0.0) {
        return usage("--step-um and --substrate-um must be > 0");
    }
    let wl = a.wavelength_nm.map(|nm| nm * 1e-9);
    let train = if let Some(p) = &a.train {
        sink.add_input(p)?;
        let t = BeamTrain::load(p)?;
        match wl {
            Some(w) => t.with_wavelength(w),
            None => t,
        }
    } else {
        let wl = wl.unwrap_or(1550e-9);
        let geometry = PackagingGeometry::default().with_substrate_thickness(a.substrate_um * 1e-6);
        if a.no_lens {
            BeamTrain::packaged(wl, InputMode::smf(wl), None, &[], &geometry)
        } else {
            let problem = LensDesignProblem {
                seed: ctx.seed,
                wavelength: wl,
                input: InputMode::smf(wl),
                ..LensDesignProblem::reference(a.substrate_um * 1e-6)
            };
            let design = optimize_lens_train(&problem, ctx.db)?;
            println!("{}", design.summary());
            sink.write("beam_train.json", design.train.to_json().as_bytes())?;
            design.train
        }
    };
    let profile = propagate(&train, ctx.db, Some(a.step_um * 1e-6))?;
    let mut t = SweepResult::new(["z_um", "w_um", "radius_um", "medium_index"]);
    for s in &profile.samples {
        t.push(vec![s.z * 1e6, s.w * 1e6, s.radius * 1e6, s.medium_index]);
    }
    for w in &profile.warnings {
        eprintln!("warning: {w}");
    }
    let end = profile.end;
    println!(
        "end spot w = {:.3} um, waist {:.3} um at {:+.2} um, coupling into {:.0} um square {:.4}",
        end.w * 1e6,
        end.waist_radius * 1e6,
        end.waist_offset * 1e6,
        ACTIVE_SIDE * 1e6,
        crate::beamtrain::square_aperture_coupling(end.w, ACTIVE_SIDE / 2.0)
    );
    emit(
        ctx,
        sink,
        "beam_profile",
        &t,
        Some(Plot {
            x: "z_um",
            y: &["w_um"],
            log_x: false,
            log_y: false,
        }),
    )
}

fn coupling(ctx: &Ctx, sink: &mut OutputSink, a: &CouplingArgs) -> Outcome<()> {
    let w = match (a.w_um, &a.train) {
        (Some(w), None) => w * 1e-6,
        (None, Some(p)) => {
            sink.add_input(p)?;
            propagate(&BeamTrain::load(p)?, ctx.db, None)?.end.w
        }
        _ => return usage("give exactly one of --w-um or --train"),
    };
    if !(w > 0.0) || !(a.side_um > 0.0) {
        return usage("spot radius and side must be > 0");
    }
    let c = square_aperture_coupling_offset(w, a.side_um * 0.5e-6, a.dx_um * 1e-6, a.dy_um * 1e-6);
    println!(
        "w = {:.4} um, side {} um: coupling {c:.6}",
        w * 1e6,
        a.side_um
    );
    let mut t = SweepResult::new(["w_um", "side_um", "dx_um", "dy_um", "coupling"]);
    t.push(vec![w * 1e6, a.side_um, a.dx_um, a.dy_um, c]);
    emit(ctx, sink, "coupling", &t, None)
}

fn parse_free(names: &[String]) -> Outcome<FitOptions> {
    let mut params = Vec::new();
    for n in names {
        match Param::ALL.iter().find(|p| p.name() == n.trim()) {
            Some(p) => params.push(*p),
            None => {
                let valid: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
                return usage(format!(
                    "unknown parameter `{n}`; expected one of {}",
                    valid.join(", ")
                ));
            }
        }
    }
    Ok(FitOptions::only(&params))
}

/// Model prediction next to each observation.
fn fit_check(reports: &[&FitReport], obs: &[ObservationPoint]) -> Outcome<SweepResult> {
    let mut t = SweepResult::new([
        "wavelength_nm",
        "bias_norm",
        "de_obs",
        "dcr_obs_hz",
        "de_model",
        "dcr_model_hz",
    ]);
    for r in reports {
        let m = &r.model;
        for o in obs {
            let wl_ok = m.absorptance_at(o.wavelength).is_ok();
            if !wl_ok {
                continue;
            }
            let bias = match (o.bias, o.dcr) {
                (Some(b), _) => b,
                (None, Some(d)) => (d.ln() - m.dark_prefactor.ln()) / m.dark_exponent,
                _ => continue,
            };
            let de = system_de(m, o.wavelength, bias.min(1.0))?;
            let dcr = dark_rate(m, bias.min(1.0))?;
            t.push(vec![
                (o.wavelength * 1e15).round() / 1e6,
                bias,
                o.de.unwrap_or(f64::NAN),
                o.dcr.unwrap_or(f64::NAN),
                de,
                dcr,
            ]);
        }
    }
    Ok(t)
}

fn print_report(r: &FitReport) {
    let m = &r.model;
    println!(
        "{}: coupling {:.4}, midpoint {:.5}, steepness {:.4}, R0 {:.4e} Hz, k {:.3}; residual {:.2e} after {} iterations",
        m.channel_id,
        m.coupling_efficiency,
        m.registering_midpoint,
        m.registering_steepness,
        m.dark_prefactor,
        m.dark_exponent,
        r.residual_norm,
        r.iterations
    );
}

fn fit(ctx: &Ctx, sink: &mut OutputSink, a: &FitArgs) -> Outcome<()> {
    let mut opts = parse_free(&a.free)?;
    opts.max_iterations = a.max_iterations;
    let Some(path) = &a.observations else {
        if a.template.is_some() {
            return usage("--template needs --observations");
        }
        let optics = recipes::reference_optics(ctx.db, ctx.seed)?;
        let anchors =
            crate::detector::parse_observations(recipes::FIG3_ANCHORS, "fig3_anchors.csv")?;
        let (r1550, r1310) = recipes::calibrate_reference(&optics, &anchors)?;
        for r in [&r1550, &r1310] {
            print_report(r);
            sink.write(
                &format!("{}.json", r.model.channel_id),
                r.model.to_json().as_bytes(),
            )?;
        }
        return emit(
            ctx,
            sink,
            "fit_check",
            &own_by_model(&[&r1550, &r1310], &anchors)?,
            None,
        );
    };
    sink.add_input(path)?;
    let mut obs = load_observations(path)?;
    if let Some(nm) = a.wavelength_nm {
        obs.retain(|o| (o.wavelength - nm * 1e-9).abs() < 1e-12);
        if obs.is_empty() {
            return usage(format!("no observations at {nm} nm"));
        }
    }
    let template = match &a.template {
        Some(p) => {
            sink.add_input(p)?;
            DetectorChannelModel::load(p)?
        }
        None => {
            let optics = recipes::reference_optics(ctx.db, ctx.seed)?;
            recipes::template_model("fitted", &optics, optics.lens_coupling_1550)
        }
    };
    let report = crate::detector::fit_channel(&template, &obs, &opts)?;
    print_report(&report);
    sink.write(
        &format!("{}.json", report.model.channel_id),
        report.model.to_json().as_bytes(),
    )?;
    emit(ctx, sink, "fit_check", &fit_check(&[&report], &obs)?, None)
}

/// Check table pairing each reference model with the anchors at its wavelength.
fn own_by_model(reports: &[&FitReport], anchors: &[ObservationPoint]) -> Outcome<SweepResult> {
    let mut out: Option<SweepResult> = None;
    for (r, wl) in reports.iter().zip([1550e-9, 1310e-9]) {
        let obs: Vec<ObservationPoint> = anchors
            .iter()
            .filter(|o| (o.wavelength - wl).abs() < 1e-12)
            .copied()
            .collect();
        let t = fit_check(&[*r], &obs)?;
        match &mut out {
            None => out = Some(t),
            Some(o) => t.rows.into_iter().for_each(|row| o.push(row)),
        }
    }
    Ok(out.expect("two reference models"))
}

fn curve(ctx: &Ctx, sink: &mut OutputSink, a: &CurveArgs) -> Outcome<()> {
    sink.add_input(&a.model)?;
    let model = DetectorChannelModel::load(&a.model)?;
    let grid = stepped_grid("bias", a.bias_from, a.bias_to, a.bias_step)?;
    let c = de_vs_dcr_curve(&model, a.wavelength_nm * 1e-9, &grid)?;
    for target in [100.0, 2000.0] {
        match c.de_at_dcr(target) {
            Ok((de, bias)) => println!("DE at {target:.0} Hz: {de:.4} (bias {bias:.4})"),
            Err(e) => println!("DE at {target:.0} Hz: n/a ({e})"),
        }
    }
    let top = c.max_point();
    println!(
        "max DE {:.4} at bias {:.3} (DCR {:.3e} Hz)",
        top.de, top.bias, top.dcr
    );
    emit(
        ctx,
        sink,
        "curve",
        &c.to_sweep(),
        Some(Plot {
            x: "bias_norm",
            y: &["de"],
            log_x: false,
            log_y: false,
        }),
    )
}

fn channels(ctx: &Ctx, sink: &mut OutputSink, a: &ChannelsArgs) -> Outcome<()> {
    let system = load_system(ctx, sink, a.system.as_deref())?;
    let report = channel_report(&system, a.wavelength_nm * 1e-9, None);
    print!("{}", report.to_aligned_text());
    sink.write("channels.csv", report.to_csv().as_bytes())?;
    Ok(())
}

fn optimize_cavity_cmd(ctx: &Ctx, sink: &mut OutputSink, a: &OptimizeCavityArgs) -> Outcome<()> {
    if a.band_to_nm <= a.band_from_nm || a.points == 0 {
        return usage(format!(
            "empty band [{}, {}] nm",
            a.band_from_nm, a.band_to_nm
        ));
    }
    if !(a.min_nm > 0.0) || a.max_nm <= a.min_nm || !(a.grid_step_nm > 0.0) {
        return usage("thickness bounds must satisfy 0 < min < max and step > 0");
    }
    let stack = load_stack(sink, a.stack.as_deref())?;
    let base = CavityDesignProblem::reference();
    let problem = match (stack, a.layers.is_empty()) {
        (None, true) => base,
        (stack, _) => {
            let stack = stack.unwrap_or(base.stack.clone());
            let layers = if a.layers.is_empty() {
                base.variable_layers.clone()
            } else {
                a.layers.clone()
            };
            CavityDesignProblem::new(stack, layers)
        }
    };
    let problem = CavityDesignProblem {
        band: (a.band_from_nm * 1e-9, a.band_to_nm * 1e-9),
        points: a.points,
        bounds: (a.min_nm * 1e-9, a.max_nm * 1e-9),
        grid_step: a.grid_step_nm * 1e-9,
        ..problem
    };
    let design = optimize_cavity(&problem, ctx.db)?;
    let th: Vec<String> = design
        .thicknesses
        .iter()
        .map(|t| format!("{:.2} nm", t * 1e9))
        .collect();
    println!(
        "optimum {} with band-averaged absorptance {:.4}",
        th.join(", "),
        design.objective
    );
    sink.write("optimized_stack.json", design.stack.to_json().as_bytes())?;
    let y: &[&str] = &["mean_A_nbn"];
    let plot = (design.thicknesses.len() == 1).then_some(Plot {
        x: "thickness_nm",
        y,
        log_x: false,
        log_y: false,
    });
    emit(ctx, sink, "cavity_scan", &design.curve, plot)
}

fn optimize_lens_cmd(ctx: &Ctx, sink: &mut OutputSink, a: &OptimizeLensArgs) -> Outcome<()> {
    if !(a.substrate_um > 0.0)
        || a.starts == 0
        || !(a.max_na > 0.0)
        || !(a.focus_tolerance_um >= 0.0)
    {
        return usage("--substrate-um, --starts and --max-na must be > 0");
    }
    let wl = a.wavelength_nm * 1e-9;
    let problem = LensDesignProblem {
        wavelength: wl,
        input: InputMode::smf(wl),
        starts: a.starts,
        seed: ctx.seed,
        max_numerical_aperture: a.max_na,
        focus_tolerance: a.focus_tolerance_um * 1e-6,
        ..LensDesignProblem::reference(a.substrate_um * 1e-6)
    };
    let design = if let Some(path) = &a.catalog {
        sink.add_input(path)?;
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        let catalog = parse_catalog(&text, &path.display().to_string())?;
        let cd = optimize_lens_from_catalog(&problem, &catalog, ctx.db)?;
        let mut csv = String::from("segments,two_w_um\n");
        for (names, w) in &cd.table {
            csv.push_str(&format!("{},{}\n", names.join("+"), w * 1e6));
        }
        sink.write("catalog_combinations.csv", csv.as_bytes())?;
        println!("catalog choice: {}", cd.names.join(" + "));
        cd.design
    } else {
        optimize_lens_train(&problem, ctx.db)?
    };
    println!("{}", design.summary());
    println!(
        "coupling into {:.0} um square: {:.4}",
        ACTIVE_SIDE * 1e6,
        design.coupling(ACTIVE_SIDE)
    );
    sink.write("lens_design.json", design.train.to_json().as_bytes())?;
    let profile = propagate(&design.train, ctx.db, Some(5e-6))?;
    let mut t = SweepResult::new(["z_um", "w_um"]);
    for s in &profile.samples {
        t.push(vec![s.z * 1e6, s.w * 1e6]);
    }
    emit(
        ctx,
        sink,
        "lens_profile",
        &t,
        Some(Plot {
            x: "z_um",
            y: &["w_um"],
            log_x: false,
            log_y: false,
        }),
    )?;
    if !a.sweep_substrate_um.is_empty() {
        if a.sweep_substrate_um.iter().any(|t| !(*t > 0.0)) {
            return usage("substrate thicknesses must be > 0");
        }
        let grid: Vec<f64> = a.sweep_substrate_um.iter().map(|t| t * 1e-6).collect();
        let warm = LensDesignProblem {
            warm_start: Some(design.lenses.clone()),
            ..problem
        };
        let sweep = substrate_sweep(&warm, &grid, ctx.db)?;
        print!("{}", sweep.to_aligned_text());
        emit(
            ctx,
            sink,
            "substrate_sweep",
            &sweep,
            Some(Plot {
                x: "substrate_thickness_um",
                y: &["two_w_um"],
                log_x: false,
                log_y: false,
            }),
        )?;
    }
    Ok(())
}

fn qkd(ctx: &Ctx, sink: &mut OutputSink, a: &QkdArgs) -> Outcome<()> {
    let losses = stepped_grid("loss", a.loss_from_db, a.loss_to_db, a.loss_step_db)?;
    let link = LinkParams {
        mean_photon_number: a.mu,
        channel_loss_db: losses[0],
        internal_loss_db: a.internal_loss_db,
        pulse_rate: a.pulse_rate_hz,
        gate_fraction: a.gate,
        detection_window: a.window_ns * 1e-9,
        intrinsic_error: a.e_det,
        wavelength: a.wavelength_nm * 1e-9,
        operating_point: match a.bias {
            Some(b) => OperatingPoint::Bias(b),
            None => OperatingPoint::DarkRate(a.dcr_hz),
        },
    };
    if let Err(e) = link.validate() {
        return usage(e.to_string());
    }
    let system = load_system(ctx, sink, a.system.as_deref())?;
    let t = loss_sweep(&system, &link, &losses)?;
    print!("{}", t.to_aligned_text());
    emit(
        ctx,
        sink,
        "qkd",
        &t,
        Some(Plot {
            x: "loss_db",
            y: &["sifted_rate_hz"],
            log_x: false,
            log_y: true,
        }),
    )?;
    let other = match (&a.compare, a.compare_coupling_scale) {
        (Some(p), _) => {
            sink.add_input(p)?;
            Some(SystemConfig::load(p)?)
        }
        (None, Some(f)) => Some(system.with_scaled_coupling(f)?),
        _ => None,
    };
    if let Some(b) = other {
        let cmp = compare_generations(&system, &b, &link, &losses)?;
        emit(
            ctx,
            sink,
            "qkd_compare",
            &cmp,
            Some(Plot {
                x: "loss_db",
                y: &["sifted_a_hz", "sifted_b_hz"],
                log_x: false,
                log_y: true,
            }),
        )?;
    }
    Ok(())
}

fn reproduce(ctx: &Ctx, sink: &mut OutputSink, a: &ReproduceArgs) -> Outcome<()> {
    let figures: Vec<&str> = if a.figure == "all" {
        recipes::FIGURES.to_vec()
    } else {
        vec![a.figure.as_str()]
    };
    for fig in figures {
        let r = recipes::reproduce(fig, ctx.db, ctx.seed)?;
        println!("== {fig}\n{}", r.summary);
        for ft in &r.tables {
            let y: Vec<&str> = ft.y.iter().map(String::as_str).collect();
            let plot = Plot {
                x: &ft.x,
                y: &y,
                log_x: ft.log_x,
                log_y: ft.log_y,
            };
            emit(ctx, sink, &ft.name, &ft.table, Some(plot))?;
        }
        sink.write(
            &format!("{}_summary.txt", fig.replace('-', "_")),
            r.summary.as_bytes(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepped_grid_pins_end_and_rejects_empty() {
        let g = stepped_grid("x", 1300.0, 1600.0, 10.0).unwrap();
        assert_eq!(g.len(), 31);
        assert_eq!(*g.last().unwrap(), 1600.0);
        assert!(matches!(
            stepped_grid("x", 1600.0, 1300.0, 10.0),
            Err(Failure::Usage(_))
        ));
        assert!(matches!(
            stepped_grid("x", 1.0, 2.0, 0.0),
            Err(Failure::Usage(_))
        ));
    }

    #[test]
    fn unknown_free_parameter_is_usage_error() {
        assert!(matches!(
            parse_free(&["nope".into()]),
            Err(Failure::Usage(_))
        ));
        assert!(parse_free(&["coupling_efficiency".into()]).is_ok());
    }

    #[test]
    fn parse_errors_exit_two() {
        assert_eq!(run(["snspd", "reproduce", "fig9"]), 2);
        assert_eq!(run(["snspd", "no-such-command"]), 2);
        assert_eq!(run(["snspd", "--help"]), 0);
    }
}
