//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starkline::cli;
use starkline::estimate::{fit_lorentzian, AnalysisConfig, LineGuess, Regime};
use starkline::io::config::{EmitterSpec, ScenarioConfig, SweepSpec};
use starkline::spectra::{self, EmitterModel, NoiseMode, SweepConfig};
use starkline::stark_model::{
    self, DefectOrientation, FieldVector, SplittingModel, StarkCoefficients,
};
use starkline::tuner::{resonance_between, LinePolynomial, RESONANCE_TOLERANCE};
use starkline::units::{self, LocalFieldPolicy};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(x: f64, reference: f64) -> f64 {
    ((x - reference) / reference).abs()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gamma() -> f64 {
    units::lifetime_to_fwhm(units::NV_LIFETIME).unwrap()
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(args.iter().copied(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn field_value(line: &str, key: &str) -> Option<f64> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

fn unit_chain() -> Outcome {
    let (code_none, out_none, _) = run_cli(&["starkline", "convert", "--slope", "-6.3", "--local-field", "none"]);
    let (code_lz, out_lz, _) = run_cli(&[
        "starkline", "convert", "--slope", "-6.3", "--local-field", "lorentz", "--epsilon", "5.7",
    ]);
    let mu_none = out_none.lines().find_map(|l| field_value(l, "delta_mu_debye"));
    let mu_lz = out_lz.lines().find_map(|l| field_value(l, "delta_mu_debye"));
    let note = out_lz.lines().any(|l| l.starts_with("note:") && l.contains("1.3 D"));
    let (Some(mu_none), Some(mu_lz)) = (mu_none, mu_lz) else {
        return Outcome {
            pass: false,
            detail: "convert output did not contain delta_mu_debye".into(),
        };
    };
    Outcome {
        pass: code_none == 0
            && code_lz == 0
            && rel(mu_none, 1.253) < 0.005
            && rel(mu_none, 1.3) < 0.04
            && rel(mu_lz, 0.488) < 0.005
            && note,
        detail: format!(
            "none: {mu_none:.4} D ({:.2}% from 1.3 D); lorentz: {mu_lz:.4} D; note printed: {note}",
            100.0 * rel(mu_none, 1.3)
        ),
    }
}

fn noiseless_span_scenario(mu_debye: f64, alpha: f64, freq_min: f64, freq_max: f64) -> ScenarioConfig {
    let spacing = 2e6;
    ScenarioConfig {
        seed: 7,
        policy: LocalFieldPolicy::none(),
        sweep: SweepSpec {
            field_start_v_per_m: -2e6,
            field_stop_v_per_m: 2e6,
            field_steps: 81,
            freq_min_hz: freq_min,
            freq_max_hz: freq_max,
            freq_points: ((freq_max - freq_min) / spacing).round() as usize + 1,
            noise: NoiseMode::Expected,
            ..SweepSpec::default()
        },
        emitters: vec![EmitterSpec {
            delta_mu_debye: mu_debye,
            delta_alpha_angstrom3: alpha,
            ..EmitterSpec::default()
        }],
        output: Default::default(),
    }
}

fn closed_loop_span(mu_debye: f64, alpha: f64, regime: Regime, freq_min: f64, freq_max: f64) -> Outcome {
    let scenario = noiseless_span_scenario(mu_debye, alpha, freq_min, freq_max);
    let (csv, _) = cli::simulate_to_strings(&scenario).unwrap();
    let config = AnalysisConfig {
        policy: LocalFieldPolicy::none(),
        gate: Some(2e9),
        ..AnalysisConfig::default()
    };
    let outcome = cli::fit_bytes(csv.as_bytes(), &config, None).unwrap();
    let fits: Vec<_> = outcome.analysis.fits().collect();
    if fits.len() != 1 {
        return Outcome {
            pass: false,
            detail: format!("expected one fitted trail, got {}", fits.len()),
        };
    }
    let fit = fits[0].1;
    let e_mu = rel(fit.delta_mu, mu_debye);
    let e_alpha = rel(fit.delta_alpha, alpha);
    Outcome {
        pass: e_mu < 0.005 && e_alpha < 0.005 && fit.regime == regime,
        detail: format!(
            "delta_mu {:.5} D (err {:.3}%), delta_alpha {:.1} A^3 (err {:.3}%), regime {:?}, {} points",
            fit.delta_mu,
            100.0 * e_mu,
            fit.delta_alpha,
            100.0 * e_alpha,
            fit.regime,
            fit.n_points
        ),
    }
}

fn linewidth_chain() -> Outcome {
    let fwhm = gamma();
    let lifetime_ok = rel(fwhm, 13.84e6) < 1e-4;
    let dwell = 0.1;
    let emitter = EmitterModel::default();
    let config = SweepConfig {
        field_steps: vec![0.0],
        freq_grid: spectra::linspace(-150e6, 150e6, 301),
        dwell,
        ..SweepConfig::default()
    };
    let peak_counts = emitter.peak_rate * dwell;
    let snr = peak_counts / (peak_counts + config.background_rate * dwell).sqrt();
    let mut fitted = Vec::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = spectra::simulate_frame(std::slice::from_ref(&emitter), 0.0, &config, &mut rng).unwrap();
        let guess = LineGuess {
            center: 2e6,
            fwhm: 20e6,
            amplitude: 0.8 * emitter.peak_rate,
            background: config.background_rate,
        };
        let n = frame.freqs.len();
        match fit_lorentzian(&frame, 0..n, guess, dwell) {
            Ok(fit) if fit.converged => fitted.push(fit.fwhm),
            _ => fitted.push(f64::NAN),
        }
    }
    let all_ok = fitted.iter().all(|f| f.is_finite());
    let med = median(fitted.into_iter().filter(|f| f.is_finite()).collect());
    let measured_gap = (fwhm - 13e6).abs() / fwhm;
    Outcome {
        pass: lifetime_ok && snr >= 30.0 && all_ok && rel(med, fwhm) < 0.02 && measured_gap < 0.07,
        detail: format!(
            "lifetime limit {:.4} MHz; SNR {snr:.1}; median fitted FWHM {:.3} MHz (err {:.2}%); 13 MHz is {:.2}% below the limit",
            fwhm / 1e6,
            med / 1e6,
            100.0 * rel(med, fwhm),
            100.0 * measured_gap
        ),
    }
}

fn forward_properties() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let split = SplittingModel::default();
    for _ in 0..2000 {
        let mu = rng.random_range(-1.5..1.5);
        let alpha = rng.random_range(-6e4..0.0);
        let field = rng.random_range(-10e6..10e6);
        let coeffs = StarkCoefficients::from_lab_units(mu, alpha).unwrap();
        let plus = stark_model::stark_shift(&coeffs, field);
        let minus = stark_model::stark_shift(&coeffs, -field);
        let linear = -coeffs.delta_mu * field / units::PLANCK;
        let quadratic = -0.5 * coeffs.delta_alpha * field * field / units::PLANCK;
        let scale = linear.abs() + quadratic.abs();
        worst = worst.max((0.5 * (plus - minus) - linear).abs() / scale);
        worst = worst.max((0.5 * (plus + minus) - quadratic).abs() / scale);

        let pure = StarkCoefficients::from_lab_units(0.0, alpha).unwrap();
        let (p, m) = (
            stark_model::stark_shift(&pure, field),
            stark_model::stark_shift(&pure, -field),
        );
        worst = worst.max((p - m).abs() / p.abs().max(f64::MIN_POSITIVE));

        let orientation = DefectOrientation::body_diagonal(rng.random_range(0..4));
        let axis = orientation.axis();
        let applied = [axis[0] * field, axis[1] * field, axis[2] * field];
        let projected = stark_model::project_field(applied, &orientation, &LocalFieldPolicy::none()).unwrap();
        worst = worst.max(split.splitting(&projected) / (split.g_perp * field.abs()));

        let v = FieldVector::new(
            rng.random_range(-1e6..1e6),
            rng.random_range(-1e6..1e6),
            rng.random_range(-1e6..1e6),
        )
        .unwrap();
        let lambda: f64 = rng.random_range(-100.0..100.0);
        let scaled = FieldVector::new(lambda * v.x, lambda * v.y, lambda * v.z).unwrap();
        worst = worst.max(rel(scaled.transverse(), lambda.abs() * v.transverse()));
    }
    Outcome {
        pass: worst <= TOL,
        detail: format!("2000 samples, worst relative deviation {worst:.2e}"),
    }
}

const POP_SCENARIOS: usize = 25;
const POP_EMITTERS: usize = 4;
const POP_GATE: f64 = 150e6;

struct PopulationRun {
    csv: String,
    manifest: String,
    truth: Vec<(f64, f64, f64)>,
    analysis: starkline::estimate::Analysis,
}

fn population_scenario(index: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + index as u64);
    let fields = spectra::linspace(0.0, 0.32e6, 33);
    let policy = LocalFieldPolicy::none();
    let min_gap = 5.0 * gamma();
    let limit = 4.2e9;
    let coefficients: Vec<(f64, f64)> = (0..POP_EMITTERS)
        .map(|_| (rng.random_range(-1.5..1.5), rng.random_range(-6e4..0.0)))
        .collect();
    let polys: Vec<(f64, f64)> = coefficients
        .iter()
        .map(|&(mu, alpha)| {
            let c = StarkCoefficients::from_lab_units(mu, alpha).unwrap();
            stark_model::coefficients_to_polynomial(&c, &policy).unwrap()
        })
        .collect();
    let nu0 = loop {
        let candidate: Vec<f64> = (0..POP_EMITTERS).map(|_| rng.random_range(-2e9..2e9)).collect();
        let ok = fields.iter().all(|&e| {
            let centers: Vec<f64> = candidate
                .iter()
                .zip(&polys)
                .map(|(n, (a, b))| n + a * e + b * e * e)
                .collect();
            centers.iter().all(|c| c.abs() < limit)
                && centers
                    .iter()
                    .enumerate()
                    .all(|(i, ci)| centers[i + 1..].iter().all(|cj| (ci - cj).abs() >= min_gap))
        });
        if ok {
            break candidate;
        }
    };
    ScenarioConfig {
        seed: 2000 + index as u64,
        policy,
        sweep: SweepSpec {
            freq_min_hz: -4.5e9,
            freq_max_hz: 4.5e9,
            freq_points: 4501,
            ..SweepSpec::default()
        },
        emitters: coefficients
            .iter()
            .zip(&nu0)
            .map(|(&(mu, alpha), &n)| EmitterSpec {
                nu0_hz: n,
                delta_mu_debye: mu,
                delta_alpha_angstrom3: alpha,
                ..EmitterSpec::default()
            })
            .collect(),
        output: Default::default(),
    }
}

fn population_config() -> AnalysisConfig {
    AnalysisConfig {
        policy: LocalFieldPolicy::none(),
        gate: Some(POP_GATE),
        ..AnalysisConfig::default()
    }
}

fn run_population(index: usize) -> PopulationRun {
    let scenario = population_scenario(index);
    let (csv, _) = cli::simulate_to_strings(&scenario).unwrap();
    let outcome = cli::fit_bytes(csv.as_bytes(), &population_config(), None).unwrap();
    let truth = scenario
        .emitters
        .iter()
        .map(|e| {
            let c = StarkCoefficients::from_lab_units(e.delta_mu_debye, e.delta_alpha_angstrom3).unwrap();
            let (a, b) = stark_model::coefficients_to_polynomial(&c, &scenario.policy).unwrap();
            (e.nu0_hz, a, b)
        })
        .collect();
    PopulationRun {
        csv,
        manifest: outcome.manifest,
        truth,
        analysis: outcome.analysis,
    }
}

fn estimation_properties(runs: &[PopulationRun]) -> Outcome {
    let gate = 3.0 * gamma();
    let mut errors = Vec::new();
    let mut labelled = 0usize;
    let mut preserved = 0usize;
    for run in runs {
        let label = |field: f64, center: f64| -> Option<usize> {
            run.truth
                .iter()
                .enumerate()
                .map(|(i, (n, a, b))| (i, (n + a * field + b * field * field - center).abs()))
                .filter(|&(_, d)| d < gate)
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(i, _)| i)
        };
        // (trail index, majority label, matching point count)
        let mut majority: Vec<(usize, Option<usize>, usize)> = Vec::new();
        for (t, result) in run.analysis.trails.iter().enumerate() {
            let mut counts = vec![0usize; run.truth.len()];
            let mut n_labelled = 0;
            for p in &result.trail.points {
                if let Some(l) = label(p.applied_field, p.fit.center) {
                    counts[l] += 1;
                    n_labelled += 1;
                }
            }
            let best = counts.iter().enumerate().max_by_key(|&(i, c)| (*c, usize::MAX - i));
            labelled += n_labelled;
            match best {
                Some((l, &c)) if c > 0 => {
                    preserved += c;
                    majority.push((t, Some(l), c));
                }
                _ => majority.push((t, None, 0)),
            }
        }
        for (i, _) in run.truth.iter().enumerate() {
            let truth_mu = run.analysis_truth_mu(i);
            let best = majority
                .iter()
                .filter(|(t, l, _)| *l == Some(i) && run.analysis.trails[*t].fit.is_some())
                .max_by_key(|(_, _, c)| *c);
            let err = match best {
                Some((t, _, _)) => rel(run.analysis.trails[*t].fit.as_ref().unwrap().delta_mu, truth_mu),
                None => f64::INFINITY,
            };
            errors.push(err);
        }
    }
    let med = median(errors.clone());
    let identity = preserved as f64 / labelled.max(1) as f64;
    Outcome {
        pass: errors.len() == POP_SCENARIOS * POP_EMITTERS && med < 0.10 && identity >= 0.95,
        detail: format!(
            "{} emitters: median delta_mu error {:.2}%; identity preserved for {:.2}% of {labelled} points",
            errors.len(),
            100.0 * med,
            100.0 * identity
        ),
    }
}

impl PopulationRun {
    fn analysis_truth_mu(&self, i: usize) -> f64 {
        let (_, a, b) = self.truth[i];
        stark_model::polynomial_to_coefficients(a, b, &LocalFieldPolicy::none())
            .unwrap()
            .delta_mu_debye()
    }
}

fn tuner_pairs() -> Outcome {
    const RANGE: (f64, f64) = (-10e6, 10e6);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_detuning: f64 = 0.0;
    let mut worst_symmetry: f64 = 0.0;
    let mut roots = 0usize;
    let mut failures = 0usize;
    for _ in 0..10_000 {
        let policy = if rng.random_bool(0.5) {
            LocalFieldPolicy::none()
        } else {
            LocalFieldPolicy::default()
        };
        let line = |rng: &mut ChaCha8Rng| {
            let c = StarkCoefficients::from_lab_units(rng.random_range(-1.5..1.5), rng.random_range(-6e4..0.0)).unwrap();
            let (a, b) = stark_model::coefficients_to_polynomial(&c, &policy).unwrap();
            LinePolynomial {
                nu0: rng.random_range(-50e9..50e9),
                a,
                b,
            }
        };
        let la = line(&mut rng);
        let lb = line(&mut rng);
        let (Ok(ab), Ok(ba)) = (resonance_between(&la, &lb, RANGE), resonance_between(&lb, &la, RANGE)) else {
            failures += 1;
            continue;
        };
        for r in ab.roots.iter().filter(|r| r.field.abs() <= RANGE.1) {
            roots += 1;
            worst_detuning = worst_detuning.max((la.at(r.field) - lb.at(r.field)).abs());
        }
        if ab.roots.len() != ba.roots.len() {
            failures += 1;
            continue;
        }
        for (x, y) in ab.roots.iter().zip(&ba.roots) {
            let scale = x.field.abs().max(y.field.abs()).max(f64::MIN_POSITIVE);
            worst_symmetry = worst_symmetry.max((x.field - y.field).abs() / scale);
        }
    }
    Outcome {
        pass: failures == 0 && worst_detuning < RESONANCE_TOLERANCE && worst_symmetry <= 1e-12,
        detail: format!(
            "{roots} roots checked; worst detuning {worst_detuning:.3e} Hz; worst A/B asymmetry {worst_symmetry:.2e}; failures {failures}"
        ),
    }
}

fn determinism(first: &[PopulationRun]) -> Outcome {
    let mut mismatches = Vec::new();
    for (i, original) in first.iter().enumerate() {
        let again = run_population(i);
        if again.csv != original.csv {
            mismatches.push(format!("csv {i}"));
        }
        if again.manifest != original.manifest {
            mismatches.push(format!("manifest {i}"));
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{} scenario reruns byte-identical", first.len())
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
    }
}

fn report(index: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = outcome.pass && in_time;
    let budget = limit.map(|l| format!(" / {:.0} s", l.as_secs_f64())).unwrap_or_default();
    println!(
        "[{}] criterion {index}: {name}: {} ({:.3} s{budget})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
    );
    pass
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let mut all = true;
    all &= report(1, "unit chain", secs(1), unit_chain);
    all &= report(2, "quadratic trail closed loop", secs(5), || {
        closed_loop_span(-0.037, -3.5e4, Regime::Quadratic, -1e9, 13e9)
    });
    all &= report(3, "mixed trail closed loop", secs(5), || {
        closed_loop_span(1.1, -5.4e4, Regime::Mixed, -3e9, 31e9)
    });
    all &= report(4, "linewidth chain", secs(10), linewidth_chain);
    all &= report(5, "forward-model properties", secs(1), forward_properties);
    let mut runs = Vec::new();
    all &= report(6, "population estimation", secs(60), || {
        runs = (0..POP_SCENARIOS).map(run_population).collect();
        estimation_properties(&runs)
    });
    all &= report(7, "tuner back-substitution and symmetry", secs(10), tuner_pairs);
    all &= report(8, "determinism", None, || determinism(&runs));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
