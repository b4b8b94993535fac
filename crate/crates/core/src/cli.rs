//! Command-line front end: `simulate | fit | tune | convert`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (lines were detected but no line fit converged).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::estimate::{self, AnalysisConfig};
use crate::io::config::ScenarioConfig;
use crate::io::csv::{read_trail_csv, write_trail_csv, TrailCsv};
use crate::io::manifest::{self, Node, Provenance};
use crate::spectra;
use crate::stark_model::{self, SPIN_ORBIT_SCALE};
use crate::tuner::{self, LinePolynomial, TuningSolution};
use crate::units::{LocalFieldMode, LocalFieldPolicy, DIAMOND_EPSILON, GHZ, MV_PER_M};

/// Directory searched for relative scenario paths that do not exist locally.
pub const CONFIG_DIR_ENV: &str = "STARKLINE_CONFIG_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "starkline", version, about = "Stark-shift trails of single optical centers: simulate, fit, tune")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a field sweep and write the trail CSV plus a ground-truth file
    Simulate(SimulateArgs),
    /// Detect, fit and link lines in a trail CSV; write a fit manifest
    Fit(FitArgs),
    /// Find bias fields that bring two trails, or a trail and a target, into resonance
    Tune(TuneArgs),
    /// Convert a Stark slope/curvature into Δμ (D) and Δα (Å³)
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file (TOML)
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: trails, nitrogen-rich
    #[arg(long)]
    preset: Option<String>,
    /// Output CSV (defaults to the scenario's output.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth JSON (defaults to <out>.truth.json)
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Lorentz,
    None,
}

impl From<ModeArg> for LocalFieldMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lorentz => LocalFieldMode::Lorentz,
            ModeArg::None => LocalFieldMode::None,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Trail CSV
    input: PathBuf,
    /// Manifest path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DIAMOND_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "lorentz")]
    local_field: ModeArg,
    #[arg(long)]
    min_snr: Option<f64>,
    /// Linking gate, Hz (default 5× median fitted FWHM)
    #[arg(long)]
    gate: Option<f64>,
    /// Minimum spacing between lines in one scan, Hz
    #[arg(long)]
    min_separation: Option<f64>,
    /// Consecutive missing frames tolerated inside a trail
    #[arg(long)]
    max_missing: Option<usize>,
    /// Minimum points for a Stark fit
    #[arg(long)]
    min_points: Option<usize>,
    /// Seconds per point when the CSV does not record it
    #[arg(long)]
    dwell: Option<f64>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    /// Fit manifest
    manifest: PathBuf,
    /// Two trail ids to bring into resonance
    #[arg(long, num_args = 2, value_names = ["ID_A", "ID_B"], conflicts_with = "target", required_unless_present = "target")]
    pair: Option<Vec<usize>>,
    /// Target frequency offset, Hz (same origin as the manifest)
    #[arg(long, allow_hyphen_values = true)]
    target: Option<f64>,
    /// Trail to tune with --target (optional when the manifest has one fitted trail)
    #[arg(long, requires = "target")]
    trail: Option<usize>,
    /// Largest allowed |E|, V/m
    #[arg(long, default_value_t = 10e6)]
    max_field: f64,
    /// Lower end of the field range, V/m (default −max-field)
    #[arg(long, allow_hyphen_values = true)]
    min_field: Option<f64>,
    /// Quench-risk threshold on the per-emitter shift, Hz
    #[arg(long, default_value_t = SPIN_ORBIT_SCALE)]
    threshold: f64,
    /// Machine-readable report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvertMode {
    Lorentz,
    None,
    Both,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Linear coefficient, GHz per MV/m
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    /// Quadratic coefficient, GHz per (MV/m)²
    #[arg(long, allow_hyphen_values = true)]
    curvature: Option<f64>,
    #[arg(long, default_value_t = DIAMOND_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "both")]
    local_field: ConvertMode,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

fn data_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn usage_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Runs the CLI with explicit argument list and output streams.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, stdout, stderr),
        Command::Fit(a) => cmd_fit(a, stdout, stderr),
        Command::Tune(a) => cmd_tune(a, stdout),
        Command::Convert(a) => cmd_convert(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn truth_node(config: &ScenarioConfig, record: &spectra::SweepRecord) -> Result<Node, Failure> {
    let sweep = config.sweep_config()?;
    let models = config.emitter_models()?;
    let mut emitters = Vec::with_capacity(models.len());
    for (i, (spec, model)) in config.emitters.iter().zip(&models).enumerate() {
        let (a, b) = stark_model::coefficients_to_polynomial(&model.coeffs, &config.policy)?;
        emitters.push(
            Node::map()
                .with("index", i)
                .with("nu0_hz", model.nu0)
                .with("delta_mu_debye", spec.delta_mu_debye)
                .with("delta_alpha_angstrom3", spec.delta_alpha_angstrom3)
                .with("a_hz_per_v_per_m", a)
                .with("b_hz_per_v2_per_m2", b)
                .with("gamma_hz", model.gamma)
                .with("peak_rate", model.peak_rate),
        );
    }
    let steps: Vec<Node> = record
        .frames
        .iter()
        .zip(&record.true_centers)
        .zip(&record.visibility)
        .map(|((frame, centers), vis)| {
            Node::map()
                .with("step_index", frame.step_index)
                .with("applied_field_v_per_m", frame.applied_field)
                .with("centers_hz", centers.clone())
                .with("visibility", vis.clone())
        })
        .collect();
    Ok(Node::map()
        .with("format", "starkline-ground-truth")
        .with("seed", sweep.seed)
        .with(
            "policy",
            Node::map()
                .with("local_field", config.policy.mode.as_str())
                .with("epsilon", config.policy.epsilon),
        )
        .with("origin_hz", config.sweep.origin_hz)
        .with("dwell_s", sweep.dwell)
        .with("emitters", Node::List(emitters))
        .with("steps", Node::List(steps)))
}

/// Simulates the scenario; returns the CSV text and the ground-truth JSON.
pub fn simulate_to_strings(config: &ScenarioConfig) -> crate::Result<(String, String)> {
    let sweep = config.sweep_config()?;
    let models = config.emitter_models()?;
    let record = spectra::simulate_sweep_record(&models, &sweep)?;
    let truth = truth_node(config, &record).map_err(|f| Error::InvalidConfig(f.message))?;
    let csv = write_trail_csv(&TrailCsv {
        origin_hz: config.sweep.origin_hz,
        dwell: Some(sweep.dwell),
        seed: Some(sweep.seed),
        frames: record.frames,
    });
    Ok((csv, truth.render()))
}

fn cmd_simulate(args: SimulateArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> Result<i32, Failure> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let path = resolve_config(path);
            let bytes = read_file(&path)?;
            let text = String::from_utf8(bytes).map_err(|_| data_error(format!("{}: not UTF-8", path.display())))?;
            ScenarioConfig::from_toml(&text).map_err(|e| data_error(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => return Err(usage_error("simulate needs --config or --preset")),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .or_else(|| config.output.csv.as_ref().map(PathBuf::from))
        .ok_or_else(|| usage_error("no output path: pass --out or set output.csv"))?;
    let truth_path = args
        .truth
        .or_else(|| config.output.truth.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| {
            let mut p = out.clone().into_os_string();
            p.push(".truth.json");
            PathBuf::from(p)
        });
    let (csv, truth) = simulate_to_strings(&config)?;
    write_file(&out, csv.as_bytes())?;
    write_file(&truth_path, truth.as_bytes())?;
    let sweep = config.sweep_config()?;
    let _ = writeln!(
        stdout,
        "wrote {} frames x {} points for {} emitters to {} (truth: {})",
        sweep.field_steps.len(),
        sweep.freq_grid.len(),
        config.emitters.len(),
        out.display(),
        truth_path.display()
    );
    Ok(EXIT_OK)
}

/// Output of a fit run: manifest text, warnings, and whether every line fit failed.
pub struct FitOutcome {
    pub manifest: String,
    pub warnings: Vec<String>,
    pub all_fits_failed: bool,
    pub analysis: estimate::Analysis,
}

/// Runs the full estimation pipeline on trail-CSV bytes.
pub fn fit_bytes(bytes: &[u8], config: &AnalysisConfig, dwell_override: Option<f64>) -> crate::Result<FitOutcome> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 1,
        message: "input is not UTF-8".into(),
    })?;
    let data = read_trail_csv(text)?;
    let dwell = dwell_override.or(data.dwell).unwrap_or(1.0);
    let analysis = estimate::analyze(&data.frames, dwell, config)?;
    let provenance = Provenance {
        input_sha256: manifest::sha256_hex(bytes),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        policy: config.policy,
        seed: data.seed,
        origin_hz: data.origin_hz,
        dwell,
    };
    let mut warnings = analysis.warnings.clone();
    if data.frames.is_empty() {
        warnings.push("input has no frames".into());
    }
    let manifest = manifest::render_manifest(&analysis, config, &provenance, data.frames.len());
    Ok(FitOutcome {
        manifest,
        warnings,
        all_fits_failed: analysis.peaks_detected > 0 && analysis.peaks_converged == 0,
        analysis,
    })
}

fn cmd_fit(args: FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let mut config = AnalysisConfig {
        policy: LocalFieldPolicy {
            mode: args.local_field.into(),
            epsilon: args.epsilon,
        },
        gate: args.gate,
        ..AnalysisConfig::default()
    };
    if let Some(v) = args.min_snr {
        config.min_snr = v;
    }
    if let Some(v) = args.min_separation {
        config.min_separation = v;
    }
    if let Some(v) = args.max_missing {
        config.max_missing = v;
    }
    if let Some(v) = args.min_points {
        config.min_trail_points = v;
    }
    config.validate().map_err(|e| usage_error(e.to_string()))?;
    let bytes = read_file(&args.input)?;
    let outcome = fit_bytes(&bytes, &config, args.dwell)
        .map_err(|e| data_error(format!("{}: {e}", args.input.display())))?;
    for w in &outcome.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    match &args.out {
        Some(path) => write_file(path, outcome.manifest.as_bytes())?,
        None => {
            let _ = stdout.write_all(outcome.manifest.as_bytes());
        }
    }
    if outcome.all_fits_failed {
        let _ = writeln!(stderr, "error: no line fit converged");
        return Ok(EXIT_NUMERICAL);
    }
    if args.out.is_some() {
        let a = &outcome.analysis;
        let _ = writeln!(
            stdout,
            "{} trails, {} Stark fits, gate {:.3} MHz",
            a.trails.len(),
            a.fits().count(),
            a.gate / 1e6
        );
        for (id, fit) in a.fits() {
            let _ = writeln!(
                stdout,
                "trail {id}: {} points, delta_mu = {:.4} D, delta_alpha = {:.4e} A^3, {}",
                fit.n_points,
                fit.delta_mu,
                fit.delta_alpha,
                fit.regime.as_str()
            );
        }
    }
    Ok(EXIT_OK)
}

fn solution_node(solution: &TuningSolution, threshold: f64, description: Node) -> Node {
    let roots: Vec<Node> = solution
        .roots
        .iter()
        .map(|r| {
            Node::map()
                .with("field_v_per_m", r.field)
                .with("feasible", r.feasible)
                .with("detuning_hz", r.detuning)
                .with("shift_a_hz", r.shift_a)
                .with("shift_b_hz", r.shift_b)
                .with("quench_risk", r.quench_risk)
        })
        .collect();
    Node::map()
        .with("format", "starkline-tuning-report")
        .with("request", description)
        .with("range_v_per_m", vec![solution.range.0, solution.range.1])
        .with("quench_threshold_hz", threshold)
        .with("always_resonant", solution.always_resonant)
        .with("roots", Node::List(roots))
        .with("feasible_roots_v_per_m", solution.feasible_roots())
        .with("min_detuning_hz", solution.min_detuning)
        .with("min_detuning_field_v_per_m", solution.min_detuning_field)
}

fn cmd_tune(args: TuneArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let bytes = read_file(&args.manifest)?;
    let text = String::from_utf8(bytes).map_err(|_| data_error("manifest is not UTF-8"))?;
    let doc = manifest::read_manifest(&text).map_err(|e| data_error(format!("{}: {e}", args.manifest.display())))?;
    let line_of = |id: usize| -> Result<LinePolynomial, Failure> {
        let trail = doc
            .trails
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| data_error(format!("unknown trail id {id}")))?;
        let fit = trail
            .fit
            .as_ref()
            .ok_or_else(|| data_error(format!("trail {id} has no Stark fit")))?;
        Ok(LinePolynomial {
            nu0: fit.nu0_hz,
            a: fit.a_hz_per_v_per_m,
            b: fit.b_hz_per_v2_per_m2,
        })
    };
    if !(args.max_field.is_finite() && args.max_field > 0.0) {
        return Err(usage_error("--max-field must be positive"));
    }
    let range = (args.min_field.unwrap_or(-args.max_field), args.max_field);
    let (line_a, line_b, description) = match (&args.pair, args.target) {
        (Some(ids), _) => {
            let (a, b) = (ids[0], ids[1]);
            (line_of(a)?, line_of(b)?, Node::map().with("pair", vec![a, b]))
        }
        (None, Some(target)) => {
            let id = match args.trail {
                Some(id) => id,
                None => {
                    let ids: Vec<usize> = doc.trails.iter().filter(|t| t.fit.is_some()).map(|t| t.id).collect();
                    let [id] = ids[..] else {
                        return Err(usage_error(format!(
                            "manifest has {} fitted trails; choose one with --trail",
                            ids.len()
                        )));
                    };
                    id
                }
            };
            (
                line_of(id)?,
                LinePolynomial::constant(target),
                Node::map().with("trail", id).with("target_hz", target),
            )
        }
        (None, None) => return Err(usage_error("pass --pair ID_A ID_B or --target HZ")),
    };
    let solution = tuner::resonance_between(&line_a, &line_b, range).map_err(|e| usage_error(e.to_string()))?;
    let solution = tuner::annotate_risk(solution, args.threshold);

    if solution.always_resonant {
        let _ = writeln!(stdout, "always resonant: the two lines coincide at every field");
    }
    for r in &solution.roots {
        let _ = writeln!(
            stdout,
            "root E = {:.6} MV/m  feasible={}  detuning={:.3e} Hz  shift_a={:.4} GHz  shift_b={:.4} GHz  quench_risk={}",
            r.field / MV_PER_M,
            r.feasible,
            r.detuning,
            r.shift_a / GHZ,
            r.shift_b / GHZ,
            r.quench_risk
        );
    }
    if solution.feasible_roots().is_empty() && !solution.always_resonant {
        let _ = writeln!(
            stdout,
            "no feasible root in [{:.6}, {:.6}] MV/m; minimum detuning {:.6} GHz at E = {:.6} MV/m",
            range.0 / MV_PER_M,
            range.1 / MV_PER_M,
            solution.min_detuning / GHZ,
            solution.min_detuning_field / MV_PER_M
        );
    }
    if let Some(path) = &args.report {
        write_file(path, solution_node(&solution, args.threshold, description).render().as_bytes())?;
    }
    Ok(EXIT_OK)
}

/// Δμ (D) and Δα (Å³) for slope in GHz/(MV/m) and curvature in GHz/(MV/m)².
pub fn convert_values(slope: f64, curvature: f64, policy: &LocalFieldPolicy) -> crate::Result<(f64, f64)> {
    let a = slope * GHZ / MV_PER_M;
    let b = curvature * GHZ / (MV_PER_M * MV_PER_M);
    let c = stark_model::polynomial_to_coefficients(a, b, policy)?;
    // adding 0.0 turns a negative zero into +0 for printing
    Ok((c.delta_mu_debye() + 0.0, c.delta_alpha_volume() + 0.0))
}

fn cmd_convert(args: ConvertArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    if args.slope.is_none() && args.curvature.is_none() {
        return Err(usage_error("convert needs --slope and/or --curvature"));
    }
    let slope = args.slope.unwrap_or(0.0);
    let curvature = args.curvature.unwrap_or(0.0);
    let policies = match args.local_field {
        ConvertMode::None => vec![LocalFieldPolicy::none()],
        ConvertMode::Lorentz => vec![LocalFieldPolicy::lorentz(args.epsilon)],
        ConvertMode::Both => vec![LocalFieldPolicy::none(), LocalFieldPolicy::lorentz(args.epsilon)],
    };
    for policy in &policies {
        let (mu, alpha) = convert_values(slope, curvature, policy).map_err(|e| usage_error(e.to_string()))?;
        let _ = writeln!(
            stdout,
            "local_field={} epsilon={} factor={} delta_mu_debye={} delta_alpha_angstrom3={}",
            policy.mode.as_str(),
            policy.epsilon,
            policy.factor(),
            mu,
            alpha
        );
    }
    if policies.iter().any(|p| p.mode == LocalFieldMode::Lorentz) {
        let _ = writeln!(
            stdout,
            "note: published single-center values such as 1.3 D for a -6.3 GHz/(MV/m) slope follow from \
             the applied field directly (local-field factor 1, --local-field none); the Lorentz factor \
             (eps+2)/3 lowers delta_mu by that factor and delta_alpha by its square"
        );
    }
    Ok(EXIT_OK)
}
