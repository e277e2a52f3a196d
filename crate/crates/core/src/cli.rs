//! `noon` command-line front end.
//!
//! Every subcommand is deterministic for a given configuration and seed.
//! Files it writes carry the SHA-256 of the run inputs (`# manifest` line
//! in CSV, `"manifest"` field in JSON), and a `<out>.manifest.json` with
//! output hashes and wall time is written next to the primary output.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hilbert::{BasisState, DensityMatrix, HilbertSpace, QuantumState, Qubit, StateVector};
use crate::io::{fmt_f64, sha256_hex, stamped_json, RunManifest, Table};
use crate::measure::{
    align_phase, find_optimal_duration, fit_phonon_distribution, parity_scan, phase_grid, projective_population,
    simulate_output_fluorescence, FluorescenceModel, FluorescenceSignal, NoonBranch, PhononFitOptions,
    ProjectiveOptions, Shots,
};
use crate::metrology::{
    aligned_fidelity, fit_parity_fringe, noon_overlap, noon_phase, qfi_sld, FringeFit, MetrologyReport,
};
use crate::noise::noisy_generation;
use crate::pulses::{apply_sequence, apply_sequence_logged, noon_sequence, parse_angle, parse_sequence, PulseSequence};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "noon", version, about = "Phonon NOON-state generation and measurement simulator")]
struct Cli {
    /// Configuration file (TOML, or JSON); `NOON_<SECTION>_<FIELD>`
    /// environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile and simulate the N-phonon NOON sequence.
    Generate(GenerateArgs),
    /// Apply a pulse sequence file to |↓,0,0⟩.
    Run(RunArgs),
    /// Output-mode parity versus beam-splitter phase, with fringe fit.
    ParityScan(ParityScanArgs),
    /// Output-mode sideband fluorescence versus drive time.
    Fluorescence(FluorescenceArgs),
    /// Fit a phonon distribution to a fluorescence CSV.
    FitPhonon(FitPhononArgs),
    /// Staged projective measurement of the two NOON populations.
    ProjectPop(ProjectPopArgs),
    /// Optimal output drive duration and recovered NOON phase.
    AlignPhase(AlignPhaseArgs),
    /// Fidelity, QFI and precision bounds for one or more N.
    Report(ReportArgs),
    /// Quick internal consistency checks.
    Selftest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NoiseChoice {
    /// Ideal pulses.
    None,
    /// Quasi-static trap noise from the `[noise]` section.
    Default,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum ShotsArg {
    Exact,
    #[serde(untagged)]
    Count(u64),
}

fn parse_shots(text: &str) -> std::result::Result<ShotsArg, String> {
    if text.eq_ignore_ascii_case("exact") {
        return Ok(ShotsArg::Exact);
    }
    match text.parse::<u64>() {
        Ok(0) | Err(_) => Err(format!("expected `exact` or a positive shot count, found `{text}`")),
        Ok(s) => Ok(ShotsArg::Count(s)),
    }
}

fn parse_angle_arg(text: &str) -> std::result::Result<f64, String> {
    parse_angle(text).ok_or_else(|| format!("invalid angle `{text}` (radians, or e.g. 0.5pi, pi/4)"))
}

fn parse_n(text: &str) -> std::result::Result<usize, String> {
    match text.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("N must be a positive integer, found `{text}`")),
    }
}

#[derive(Debug, Args, Serialize)]
struct StateArgs {
    /// NOON number N.
    #[arg(long, value_parser = parse_n)]
    n: usize,
    #[arg(long, value_enum, default_value = "none")]
    noise: NoiseChoice,
    /// Noise realizations averaged when `--noise default`.
    #[arg(long, default_value_t = 400)]
    realizations: usize,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    state: StateArgs,
    /// State/report JSON.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Also write the compiled sequence in the text format.
    #[arg(long)]
    #[serde(skip)]
    sequence_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RunArgs {
    #[serde(skip)]
    file: PathBuf,
    /// NOON number used for the mode dimensions (N+4) and fidelity.
    #[arg(long, value_parser = parse_n)]
    n: Option<usize>,
    /// Mode dimension when `--n` is not given.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Print the populated basis states after every step.
    #[arg(long)]
    log: bool,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ParityScanArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Number of phases.
    #[arg(long, default_value_t = 64)]
    points: usize,
    /// `exact` or shots per phase.
    #[arg(long, default_value = "exact", value_parser = parse_shots)]
    shots: ShotsArg,
    /// Scanned phase range [0, span).
    #[arg(long, default_value = "2pi", value_parser = parse_angle_arg)]
    span: f64,
    /// Scan CSV; the fit goes to `<out>.fit.json`.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FluorescenceArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Beam-splitter phase of the output mode.
    #[arg(long, default_value = "0", value_parser = parse_angle_arg)]
    phase: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Last drive time (s); defaults to ten periods of the output Rabi frequency.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value = "exact", value_parser = parse_shots)]
    shots: ShotsArg,
    #[arg(long, default_value_t = 0.0597)]
    eta: f64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FitPhononArgs {
    /// CSV with columns `t,value` and optionally `sigma`.
    #[arg(long = "in")]
    #[serde(skip)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    nmax: usize,
    #[arg(long, default_value_t = 0.0597)]
    eta: f64,
    #[arg(long, default_value_t = 0.7)]
    exponent: f64,
    /// Nominal Rabi frequency (rad/s); defaults to the configured output-mode value.
    #[arg(long)]
    rabi: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BranchChoice {
    X,
    Y,
    Both,
}

#[derive(Debug, Args, Serialize)]
struct ProjectPopArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, value_enum, default_value = "both")]
    branch: BranchChoice,
    /// Arithmetic-operation success probability; defaults to 1.
    #[arg(long)]
    op_fidelity: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    detection_flip: f64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AlignPhaseArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Phase added to the generated state before alignment.
    #[arg(long, default_value = "0", value_parser = parse_angle_arg)]
    inject: f64,
    #[arg(long, default_value_t = 48)]
    points: usize,
    /// Output drive rotation `Ω_O t`; defaults to the optimal value.
    #[arg(long, value_parser = parse_angle_arg)]
    theta: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Single NOON number.
    #[arg(long, value_parser = parse_n, conflicts_with_all = ["n_min", "n_max"])]
    n: Option<usize>,
    #[arg(long, value_parser = parse_n, requires = "n_max")]
    n_min: Option<usize>,
    #[arg(long, value_parser = parse_n, requires = "n_min")]
    n_max: Option<usize>,
    #[arg(long, value_enum, default_value = "none")]
    noise: NoiseChoice,
    #[arg(long, default_value_t = 400)]
    realizations: usize,
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[arg(long, default_value = "exact", value_parser = parse_shots)]
    shots: ShotsArg,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(e, Error::Io(_)) {
        EXIT_IO
    } else {
        EXIT_USAGE
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    let started = Instant::now();
    let mut ctx = match &cli.command {
        Command::Generate(a) => Context::new("generate", a, cfg)?,
        Command::Run(a) => Context::new("run", a, cfg)?,
        Command::ParityScan(a) => Context::new("parity-scan", a, cfg)?,
        Command::Fluorescence(a) => Context::new("fluorescence", a, cfg)?,
        Command::FitPhonon(a) => Context::new("fit-phonon", a, cfg)?,
        Command::ProjectPop(a) => Context::new("project-pop", a, cfg)?,
        Command::AlignPhase(a) => Context::new("align-phase", a, cfg)?,
        Command::Report(a) => Context::new("report", a, cfg)?,
        Command::Selftest => Context::new("selftest", &Value::Null, cfg)?,
    };
    let primary = match &cli.command {
        Command::Generate(a) => cmd_generate(&mut ctx, a)?,
        Command::Run(a) => cmd_run(&mut ctx, a)?,
        Command::ParityScan(a) => cmd_parity_scan(&mut ctx, a)?,
        Command::Fluorescence(a) => cmd_fluorescence(&mut ctx, a)?,
        Command::FitPhonon(a) => cmd_fit_phonon(&mut ctx, a)?,
        Command::ProjectPop(a) => cmd_project_pop(&mut ctx, a)?,
        Command::AlignPhase(a) => cmd_align_phase(&mut ctx, a)?,
        Command::Report(a) => cmd_report(&mut ctx, a)?,
        Command::Selftest => cmd_selftest()?,
    };
    if let Some(path) = primary {
        ctx.manifest.wall_time_s = started.elapsed().as_secs_f64();
        let mut name = path.into_os_string();
        name.push(".manifest.json");
        let text = serde_json::to_string_pretty(&ctx.manifest)? + "\n";
        std::fs::write(PathBuf::from(name), text)?;
    }
    Ok(())
}

struct Context {
    cfg: RunConfig,
    manifest: RunManifest,
}

impl Context {
    fn new<A: Serialize>(subcommand: &str, args: &A, cfg: RunConfig) -> Result<Self> {
        let arguments = serde_json::to_value(args)?;
        Ok(Self { cfg, manifest: RunManifest::new(subcommand, arguments, cfg) })
    }

    fn read_input(&mut self, path: &Path) -> Result<String> {
        let text = std::fs::read_to_string(path)?;
        self.manifest.input_hashes.push(sha256_hex(text.as_bytes()));
        Ok(text)
    }

    fn hash(&self) -> Result<String> {
        self.manifest.input_hash()
    }

    fn write(&mut self, path: &Path, text: &str) -> Result<()> {
        std::fs::write(path, text)?;
        self.manifest.record(path, text.as_bytes());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, body: &T) -> Result<()> {
        let text = stamped_json(&self.hash()?, body)?;
        self.write(path, &text)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Generated state: the pure ideal output or the shot-averaged noisy one.
enum Prepared {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl Prepared {
    fn density(&self) -> DensityMatrix {
        match self {
            Prepared::Pure(psi) => psi.to_density(),
            Prepared::Mixed(rho) => rho.clone(),
        }
    }

    fn space(&self) -> HilbertSpace {
        match self {
            Prepared::Pure(psi) => *psi.space(),
            Prepared::Mixed(rho) => *rho.space(),
        }
    }

    /// `φ_S` from `ρ_{N0,0N} = |c| e^{−iNφ_S}`, in `[0, 2π/N)`.
    fn noon_phase(&self, n: usize) -> f64 {
        match self {
            Prepared::Pure(psi) => noon_phase(psi, n),
            Prepared::Mixed(rho) => {
                let c = rho.element(BasisState::new(Qubit::Down, n, 0), BasisState::new(Qubit::Down, 0, n));
                (-c.arg() / n as f64).rem_euclid(2.0 * PI / n as f64)
            }
        }
    }

    fn fidelity(&self, n: usize) -> Result<f64> {
        match self {
            Prepared::Pure(psi) => Ok(aligned_fidelity(psi, n)),
            Prepared::Mixed(rho) => noon_overlap(rho, n, self.noon_phase(n)),
        }
    }

    fn noon_populations(&self, n: usize) -> (f64, f64) {
        let pops = match self {
            Prepared::Pure(psi) => psi.populations(),
            Prepared::Mixed(rho) => rho.populations(),
        };
        let space = self.space();
        (
            pops[space.index(BasisState::new(Qubit::Down, n, 0))],
            pops[space.index(BasisState::new(Qubit::Down, 0, n))],
        )
    }
}

fn prepare(cfg: &RunConfig, n: usize, noise: NoiseChoice, realizations: usize) -> Result<Prepared> {
    match noise {
        NoiseChoice::None => {
            let seq = noon_sequence(n)?;
            let psi = apply_sequence(&StateVector::vacuum(HilbertSpace::for_noon(n)), &seq)?;
            Ok(Prepared::Pure(psi))
        }
        NoiseChoice::Default => {
            Ok(Prepared::Mixed(noisy_generation(n, &cfg.system, &cfg.noise, realizations)?))
        }
    }
}

fn shots_of(arg: ShotsArg, seed: u64) -> Shots {
    match arg {
        ShotsArg::Exact => Shots::Exact,
        ShotsArg::Count(shots) => Shots::Sampled { shots, seed },
    }
}

#[derive(Serialize)]
struct Population {
    qubit: Qubit,
    nx: usize,
    ny: usize,
    p: f64,
}

fn populated(space: HilbertSpace, pops: &[f64], floor: f64) -> Vec<Population> {
    space
        .basis_iter()
        .filter(|(i, _)| pops[*i] > floor)
        .map(|(i, b)| Population { qubit: b.qubit, nx: b.nx, ny: b.ny, p: pops[i] })
        .collect()
}

#[derive(Serialize)]
struct GenerateReport {
    n: usize,
    pulses: usize,
    expected_pulses: usize,
    phase_s: f64,
    fidelity: f64,
    p_n0: f64,
    p_0n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    contrast: Option<f64>,
    populations: Vec<Population>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<StateVector>,
}

fn exact_fringe(rho: &DensityMatrix, n: usize, points: usize) -> Result<FringeFit> {
    let scan = parity_scan(rho, &phase_grid(points, 2.0 * PI), Shots::Exact)?;
    fit_parity_fringe(&scan, n as f64)
}

fn cmd_generate(ctx: &mut Context, a: &GenerateArgs) -> Result<Option<PathBuf>> {
    let n = a.state.n;
    let seq = noon_sequence(n)?;
    let state = prepare(&ctx.cfg, n, a.state.noise, a.state.realizations)?;
    let (p_n0, p_0n) = state.noon_populations(n);
    let contrast = match &state {
        Prepared::Pure(_) => None,
        Prepared::Mixed(rho) => Some(exact_fringe(rho, n, 64)?.contrast),
    };
    let pops = state.density().populations();
    let report = GenerateReport {
        n,
        pulses: seq.primitive_count(),
        expected_pulses: seq.expected_count().unwrap_or(0),
        phase_s: state.noon_phase(n),
        fidelity: state.fidelity(n)?,
        p_n0,
        p_0n,
        contrast,
        populations: populated(state.space(), &pops, 1e-12),
        state: match &state {
            Prepared::Pure(psi) => Some(psi.clone()),
            Prepared::Mixed(_) => None,
        },
    };
    let mut out = String::new();
    let _ = writeln!(out, "N {n}");
    let _ = writeln!(out, "pulses {}", report.pulses);
    let _ = writeln!(out, "phase_s {}", fmt_f64(report.phase_s));
    let _ = writeln!(out, "F={:.6}", report.fidelity);
    if let Some(c) = contrast {
        let _ = writeln!(out, "C_P={c:.6}");
    }
    print!("{out}");
    if let Some(path) = &a.sequence_out {
        let text = format!("# manifest {}\n{}", ctx.hash()?, seq.to_text());
        ctx.write(path, &text)?;
    }
    if let Some(path) = &a.out {
        ctx.write_json(path, &report)?;
    }
    Ok(a.out.clone().or_else(|| a.sequence_out.clone()))
}

#[derive(Serialize)]
struct RunReport {
    pulses: usize,
    norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase_s: Option<f64>,
    populations: Vec<Population>,
    state: StateVector,
}

fn cmd_run(ctx: &mut Context, a: &RunArgs) -> Result<Option<PathBuf>> {
    let text = ctx.read_input(&a.file)?;
    let seq: PulseSequence = parse_sequence(&text)?;
    let space = match a.n {
        Some(n) => HilbertSpace::for_noon(n),
        None => HilbertSpace::new(a.dim, a.dim)?,
    };
    let start = StateVector::vacuum(space);
    let psi = if a.log {
        let (psi, steps) = apply_sequence_logged(&start, &seq)?;
        for (i, s) in steps.iter().enumerate() {
            let terms: Vec<String> = populated(space, &s.populations(), 1e-12)
                .iter()
                .map(|p| format!("{:?}{},{}:{:.6}", p.qubit, p.nx, p.ny, p.p))
                .collect();
            println!("step {i}: {}", terms.join(" "));
        }
        psi
    } else {
        apply_sequence(&start, &seq)?
    };
    let report = RunReport {
        pulses: seq.primitive_count(),
        norm: psi.norm_sqr(),
        fidelity: a.n.map(|n| aligned_fidelity(&psi, n)),
        phase_s: a.n.map(|n| noon_phase(&psi, n)),
        populations: populated(space, &psi.populations(), 1e-12),
        state: psi,
    };
    println!("pulses {}", report.pulses);
    if let Some(f) = report.fidelity {
        println!("F={f:.6}");
    }
    if let Some(path) = &a.out {
        ctx.write_json(path, &report)?;
    }
    Ok(a.out.clone())
}

fn cmd_parity_scan(ctx: &mut Context, a: &ParityScanArgs) -> Result<Option<PathBuf>> {
    if a.points < 8 {
        return Err(Error::invalid(format!("need at least 8 phase points, got {}", a.points)));
    }
    let n = a.state.n;
    let rho = prepare(&ctx.cfg, n, a.state.noise, a.state.realizations)?.density();
    let grid = phase_grid(a.points, a.span);
    let scan = parity_scan(&rho, &grid, shots_of(a.shots, ctx.cfg.noise.seed))?;
    let fit = fit_parity_fringe(&scan, n as f64)?;
    println!("k={:.6} C_P={:.6}", fit.k, fit.contrast);
    if let Some(path) = &a.out {
        let mut table = Table::new(&["phi", "parity", "sigma"]);
        for i in 0..scan.len() {
            let sigma = scan.sigmas.as_ref().map_or(0.0, |s| s[i]);
            table.push(vec![scan.phases[i], scan.values[i], sigma]);
        }
        let text = table.to_csv(&ctx.hash()?);
        ctx.write(path, &text)?;
        ctx.write_json(&sibling(path, ".fit.json"), &fit)?;
    }
    Ok(a.out.clone())
}

fn cmd_fluorescence(ctx: &mut Context, a: &FluorescenceArgs) -> Result<Option<PathBuf>> {
    if a.points < 2 {
        return Err(Error::invalid("need at least two time points"));
    }
    let rabi = ctx.cfg.system.output_rabi()?;
    let t_max = a.t_max.unwrap_or(20.0 * PI / rabi);
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max must be positive"));
    }
    let rho = prepare(&ctx.cfg, a.state.n, a.state.noise, a.state.realizations)?.density();
    let times: Vec<f64> = (0..a.points).map(|i| t_max * i as f64 / (a.points - 1) as f64).collect();
    let model = FluorescenceModel {
        populations: Vec::new(),
        rabi,
        decay: ctx.cfg.noise.decay,
        eta: a.eta,
        offset: 0.5,
        exponent: ctx.cfg.noise.decay_exponent,
    };
    let shots = match a.shots {
        ShotsArg::Exact => None,
        ShotsArg::Count(s) => Some((s, ctx.cfg.noise.seed)),
    };
    let signal = simulate_output_fluorescence(&rho, a.phase, &model, &times, shots)?;
    let mut table = Table::new(&["t", "value", "sigma"]);
    for i in 0..times.len() {
        let sigma = signal.sigmas.as_ref().map_or(0.0, |s| s[i]);
        table.push(vec![times[i], signal.values[i], sigma]);
    }
    let text = table.to_csv(&ctx.hash()?);
    match &a.out {
        Some(path) => ctx.write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(a.out.clone())
}

#[derive(Serialize)]
struct PhononReport {
    #[serde(flatten)]
    fit: crate::measure::PhononFit,
    residuals: Vec<f64>,
}

fn cmd_fit_phonon(ctx: &mut Context, a: &FitPhononArgs) -> Result<Option<PathBuf>> {
    let text = ctx.read_input(&a.input)?;
    let table = Table::from_csv(&text)?;
    let (Some(times), Some(values)) = (table.column("t"), table.column("value")) else {
        return Err(Error::Serialization(format!(
            "expected columns `t,value[,sigma]`, found `{}`",
            table.columns.join(",")
        )));
    };
    let sigmas = table.column("sigma").filter(|s| s.iter().all(|v| *v > 0.0));
    let rabi = match a.rabi {
        Some(r) => r,
        None => ctx.cfg.system.output_rabi()?,
    };
    let signal = FluorescenceSignal { times, values, sigmas, rabi, phase: 0.0, eta: a.eta };
    let opts = PhononFitOptions { eta: a.eta, exponent: a.exponent, ..PhononFitOptions::new(a.nmax) };
    let fit = fit_phonon_distribution(&signal, &opts)?;
    let model = fit.model(a.eta, a.exponent);
    let residuals = signal.times.iter().zip(&signal.values).map(|(t, v)| v - model.evaluate(*t)).collect();
    for (n, p) in fit.populations.iter().enumerate() {
        println!("P_{n}={p:.6}");
    }
    println!("lambda={} rabi={}", fmt_f64(fit.decay), fmt_f64(fit.rabi));
    if let Some(path) = &a.out {
        ctx.write_json(path, &PhononReport { fit, residuals })?;
    }
    Ok(a.out.clone())
}

fn cmd_project_pop(ctx: &mut Context, a: &ProjectPopArgs) -> Result<Option<PathBuf>> {
    let n = a.state.n;
    let rho = prepare(&ctx.cfg, n, a.state.noise, a.state.realizations)?.density();
    let opts = ProjectiveOptions { op_fidelity: a.op_fidelity.unwrap_or(1.0), detection_flip: a.detection_flip };
    let branches: &[NoonBranch] = match a.branch {
        BranchChoice::X => &[NoonBranch::AllX],
        BranchChoice::Y => &[NoonBranch::AllY],
        BranchChoice::Both => &[NoonBranch::AllX, NoonBranch::AllY],
    };
    let results = branches
        .iter()
        .map(|b| projective_population(&rho, *b, n, &opts))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        println!("{:?} P={:.9}", r.branch, r.probability);
    }
    if let Some(path) = &a.out {
        ctx.write_json(path, &serde_json::json!({ "results": results }))?;
    }
    Ok(a.out.clone())
}

#[derive(Serialize)]
struct AlignReport {
    theta: f64,
    time: f64,
    sensitivity: f64,
    injected: f64,
    phase_s: f64,
    contrast: f64,
    mean: f64,
}

fn cmd_align_phase(ctx: &mut Context, a: &AlignPhaseArgs) -> Result<Option<PathBuf>> {
    let n = a.state.n;
    if a.points < 3 {
        return Err(Error::invalid("need at least three phase points"));
    }
    let rabi = ctx.cfg.system.output_rabi()?;
    let optimal = find_optimal_duration(n, rabi)?;
    let theta = a.theta.unwrap_or(optimal.theta);
    let state = prepare(&ctx.cfg, n, a.state.noise, a.state.realizations)?;
    // shift φ_S by `inject`: |0,N⟩ picks up e^{iN·inject}
    let space = state.space();
    let shift = crate::hilbert::Operator::diagonal(space, |b| {
        crate::hilbert::C64::from_polar(1.0, b.ny as f64 * a.inject)
    });
    let rho = state.density().apply_unitary(&shift)?;
    let grid = phase_grid(a.points, 2.0 * PI / n as f64);
    let aligned = align_phase(&rho, n, theta, &grid)?;
    let report = AlignReport {
        theta,
        time: theta / rabi,
        sensitivity: optimal.sensitivity,
        injected: a.inject,
        phase_s: aligned.phase_s,
        contrast: aligned.contrast,
        mean: aligned.mean,
    };
    println!("theta*={} ({:.4}pi)", fmt_f64(theta), theta / PI);
    println!("phase_s={} ({:.4}pi)", fmt_f64(report.phase_s), report.phase_s / PI);
    if let Some(path) = &a.out {
        ctx.write_json(path, &report)?;
    }
    Ok(a.out.clone())
}

#[derive(Serialize)]
struct ReportEntry {
    #[serde(flatten)]
    report: MetrologyReport,
    qfi_sld: f64,
    fidelity_direct: f64,
}

fn cmd_report(ctx: &mut Context, a: &ReportArgs) -> Result<Option<PathBuf>> {
    let range = match (a.n, a.n_min, a.n_max) {
        (Some(n), _, _) => n..=n,
        (None, Some(lo), Some(hi)) if lo <= hi => lo..=hi,
        (None, Some(_), Some(_)) => return Err(Error::invalid("--n-min must not exceed --n-max")),
        _ => return Err(Error::invalid("give --n or both --n-min and --n-max")),
    };
    if a.points < 8 {
        return Err(Error::invalid(format!("need at least 8 phase points, got {}", a.points)));
    }
    let mut entries = Vec::new();
    for n in range {
        let state = prepare(&ctx.cfg, n, a.noise, a.realizations)?;
        let rho = state.density();
        let scan = parity_scan(&rho, &phase_grid(a.points, 2.0 * PI), shots_of(a.shots, ctx.cfg.noise.seed))?;
        let fringe = fit_parity_fringe(&scan, n as f64)?;
        let opts = ProjectiveOptions::default();
        let p_n0 = projective_population(&rho, NoonBranch::AllX, n, &opts)?.probability;
        let p_0n = projective_population(&rho, NoonBranch::AllY, n, &opts)?.probability;
        let report = MetrologyReport::new(n, &fringe, p_n0, p_0n)?;
        entries.push(ReportEntry { report, qfi_sld: qfi_sld(&rho, n)?, fidelity_direct: state.fidelity(n)? });
    }
    let mut out = String::from("N  C_P       F         F_Q        1/sqrt(F_Q) 1/N       1/sqrt(N)\n");
    for e in &entries {
        let r = &e.report;
        let _ = writeln!(
            out,
            "{:<2} {:.6}  {:.6}  {:<9.6}  {:.6}    {:.6}  {:.6}",
            r.n, r.contrast, r.fidelity, r.qfi, r.cramer_rao_bound, r.heisenberg_bound, r.classical_bound
        );
    }
    print!("{out}");
    if let Some(path) = &a.out {
        ctx.write_json(path, &serde_json::json!({ "reports": entries }))?;
    }
    Ok(a.out.clone())
}

fn cmd_selftest() -> Result<Option<PathBuf>> {
    let mut failed = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    for n in 1..=5 {
        let seq = noon_sequence(n)?;
        check(&format!("pulse count N={n}"), seq.primitive_count() == 5 * n - 2);
        let psi = apply_sequence(&StateVector::vacuum(HilbertSpace::for_noon(n)), &seq)?;
        check(&format!("NOON fidelity N={n}"), aligned_fidelity(&psi, n) > 1.0 - 1e-9);
        check(&format!("pure QFI N={n}"), (qfi_sld(&psi.to_density(), n)? - (n * n) as f64).abs() < 1e-8);
    }
    check(
        "round trip F_op=0.9776",
        (crate::measure::arithmetic_round_trip(5, 0.9776)? - 0.797).abs() < 1e-3,
    );
    let _ = std::io::stdout().flush();
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} self-test check(s) failed")));
    }
    Ok(None)
}
