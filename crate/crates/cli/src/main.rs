//! `reebgap`: action spectra, RS/CZ indices, generalized lcms, certified
//! Diophantine approximants, spectral-gap witnesses, flow simulation,
//! closing searches and the prequantization base example, each as a
//! subcommand with machine-readable output.
//!
//! Exit codes: 0 success, 1 usage or precondition, 2 resolution failure
//! (interval orders or rationality undecidable at the precision budget),
//! 3 search exhaustion, 4 numerical failure.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;

use reebgap_core::certified::{parse_rational, rational_json, Budget, CertifiedError, CertifiedReal};
use reebgap_core::chmodel::{self, ChError};
use reebgap_core::diophantine::{self, DiophantineError};
use reebgap_core::flow::{self, ClosingOutcome, FlowError, Profile};
use reebgap_core::index::{self, IndexError, SymplecticPath};
use reebgap_core::spectrum::{self, Ellipsoid, SpectrumError};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "reebgap", version, about = "Reeb-flow invariants of ellipsoids and torus flows")]
struct Cli {
    /// Interval refinement budget in bits (env REEBGAP_PRECISION).
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Flat key=value config file mirroring the flags.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output format for tabular results.
    #[arg(long, global = true, value_parser = ["json", "csv"])]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merged action sequence M_k with orbit labels.
    Spectrum(SpectrumArgs),
    /// Spectral-gap witness certificate (rational or irrational axes).
    GapWitness(GapWitnessArgs),
    /// Search for a closing time of a perturbed two-frequency flow.
    Close(CloseArgs),
    /// Robbin-Salamon / Conley-Zehnder indices of symplectic paths.
    Index(IndexArgs),
    /// Generalized least common multiple of values.
    Lcm(LcmArgs),
    /// Certified rational approximant of an axis tuple.
    Approx(ApproxArgs),
    /// Integrate the (perturbed) Reeb flow and emit a trajectory CSV.
    Simulate(SimulateArgs),
    /// Randomized spectral-axiom suite over a rational ellipsoid.
    AxiomsCheck(AxiomsArgs),
    /// Prequantization base example: critical values, calibration, periods.
    HamExample(HamArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    /// Comma-separated axes: rationals `p/q` or `sqrt(k)`, `pi`, `e`.
    #[arg(short, long)]
    axes: String,
    /// Number of entries.
    #[arg(short = 'k', long, default_value_t = 10)]
    count: u64,
}

#[derive(Args)]
struct GapWitnessArgs {
    #[arg(short, long)]
    axes: String,
    /// Quality parameter (rational); required for irrational axes.
    #[arg(short, long)]
    epsilon: Option<String>,
    /// Also report witnesses for this comma-separated epsilon sequence.
    #[arg(long)]
    sequence: Option<String>,
}

#[derive(Args)]
struct CloseArgs {
    #[arg(short, long)]
    axes: String,
    /// Perturbation profile, e.g. `linear:0.2` or `constant:0.5`.
    #[arg(long, default_value = "linear:0.2")]
    profile: String,
    /// Period bound for the closed orbit.
    #[arg(long)]
    bound: f64,
    /// Torus coordinates mu (comma-separated, summing to 1).
    #[arg(long, default_value = "0.5,0.5")]
    mu: String,
    /// Lower end of the t range.
    #[arg(long, default_value_t = 0.0)]
    t_lo: f64,
    /// Upper end of the t range.
    #[arg(long, default_value_t = 1.0)]
    t_hi: f64,
}

#[derive(Args)]
struct IndexArgs {
    #[command(subcommand)]
    which: IndexWhich,
}

#[derive(Subcommand)]
enum IndexWhich {
    /// Robbin-Salamon index (half-integer).
    Rs(IndexPathArgs),
    /// Conley-Zehnder index of a nondegenerate identity-based path.
    Cz(IndexPathArgs),
}

#[derive(Args)]
struct IndexPathArgs {
    /// Direct sum of rotation blocks `theta:duration`, angles accepting a
    /// `pi` suffix (e.g. `0.5pi:1,2pi:1`); durations must agree.
    #[arg(long)]
    rotations: Option<String>,
    /// CSV path samples: rows `t,m11,m12,...` (row-major matrix entries).
    #[arg(long)]
    csv: Option<String>,
    #[arg(long, default_value = "path")]
    path_id: String,
}

#[derive(Args)]
struct LcmArgs {
    /// Comma-separated values (tuples beyond pairs must be rational).
    #[arg(short, long)]
    values: String,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(short, long)]
    axes: String,
    /// Quality parameter (rational).
    #[arg(short, long)]
    epsilon: String,
    /// Outer pair approximant (two axes) instead of the inner-outer one.
    #[arg(long)]
    upper: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(short, long)]
    axes: String,
    #[arg(long, default_value = "constant:0")]
    profile: String,
    /// Perturbation scale.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Torus coordinates of the initial point.
    #[arg(long)]
    mu: Option<String>,
    /// Output file for the trajectory CSV ("-" for stdout).
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct AxiomsArgs {
    #[arg(short, long)]
    axes: String,
    #[arg(long, default_value_t = 50)]
    samples: u64,
    /// Seed is mandatory for randomized suites.
    #[arg(long)]
    seed: u64,
    /// Deterministic parallelism degree (ordered reduction over chunks).
    #[arg(long, default_value_t = 1)]
    jobs: u64,
    /// Reduce derivation coefficients mod 2 in the report echo.
    #[arg(long)]
    mod2: bool,
}

#[derive(Args)]
struct HamArgs {
    /// Number of random rational pairs for the period check.
    #[arg(long, default_value_t = 0)]
    pairs: u64,
    /// Seed, required when --pairs > 0.
    #[arg(long)]
    seed: Option<u64>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }
}

impl From<CertifiedError> for CliError {
    fn from(e: CertifiedError) -> Self {
        let code = match &e {
            CertifiedError::UnresolvableOrder { .. } | CertifiedError::UnknownRationality { .. } => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::Order(inner) => inner.into(),
            other => CliError {
                code: 1,
                message: other.to_string(),
            },
        }
    }
}

impl From<DiophantineError> for CliError {
    fn from(e: DiophantineError) -> Self {
        let code = match &e {
            DiophantineError::SearchExhausted { .. } | DiophantineError::NoSolution(_) => 3,
            DiophantineError::UnknownRationality => 2,
            DiophantineError::Certified(inner) => return inner.clone().into(),
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ChError> for CliError {
    fn from(e: ChError) -> Self {
        match e {
            ChError::Spectrum(inner) => inner.into(),
            ChError::Diophantine(inner) => inner.into(),
            ChError::Certified(inner) => inner.into(),
            other => CliError {
                code: 1,
                message: other.to_string(),
            },
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        let code = match &e {
            FlowError::StepFailure { .. } | FlowError::CalibrationFailure(_) => 4,
            FlowError::Spectrum(_) => 1,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        let code = match &e {
            IndexError::NumericalFailure(_)
            | IndexError::DegenerateCrossing { .. }
            | IndexError::UnresolvedCrossing { .. }
            | IndexError::NonSymplectic { .. } => 4,
            IndexError::Certified(inner) => return inner.clone().into(),
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Resolved run configuration, echoed into every output.
struct RunConfig {
    precision_bits: u32,
    format: String,
    seed: Option<u64>,
    jobs: u64,
    tolerance: Option<f64>,
}

impl RunConfig {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "precision_bits": self.precision_bits,
            "format": self.format,
            "seed": self.seed,
            "jobs": self.jobs,
            "tolerance": self.tolerance,
        })
    }

    fn csv_comment(&self) -> String {
        let mut s = format!(
            "# schema_version={SCHEMA_VERSION}\n# precision_bits={}\n# format={}\n",
            self.precision_bits, self.format
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed={seed}\n"));
        }
        s
    }
}

fn read_config_file(path: &str) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("config file {path}: {e}")))?;
    let mut map = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", ln + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_axes(spec: &str, budget: Budget) -> Result<Ellipsoid, CliError> {
    let axes = spec
        .split(',')
        .map(CertifiedReal::parse)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ellipsoid::with_budget(axes, budget)?)
}

fn parse_rat(s: &str) -> Result<BigRational, CliError> {
    Ok(parse_rational(s)?)
}

/// Angle literals: `1.5707`, `pi`, `2pi`, `-0.5pi`.
fn parse_angle(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    if let Some(prefix) = s.strip_suffix("pi") {
        let coeff = if prefix.is_empty() || prefix == "+" {
            1.0
        } else if prefix == "-" {
            -1.0
        } else {
            prefix
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("bad angle {s:?}: {e}")))?
        };
        Ok(coeff * std::f64::consts::PI)
    } else {
        s.parse::<f64>()
            .map_err(|e| CliError::usage(format!("bad angle {s:?}: {e}")))
    }
}

fn emit(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
}

fn wrap(config: &RunConfig, payload: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": config.to_json(),
        "result": payload,
    })
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let file_config = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let precision_bits = cli
        .precision
        .or_else(|| {
            file_config
                .get("precision")
                .and_then(|v| v.parse().ok())
        })
        .or_else(|| {
            std::env::var("REEBGAP_PRECISION")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(256);
    let format = cli
        .format
        .clone()
        .or_else(|| file_config.get("format").cloned())
        .unwrap_or_else(|| "json".to_string());
    let budget = Budget::new(precision_bits);
    let mut config = RunConfig {
        precision_bits,
        format,
        seed: None,
        jobs: 1,
        tolerance: None,
    };

    match cli.command {
        Command::Spectrum(args) => {
            let e = parse_axes(&args.axes, budget)?;
            if args.count == 0 {
                return Err(CliError::usage("count must be >= 1"));
            }
            let s = spectrum::action_spectrum(&e, args.count)?;
            if config.format == "csv" {
                print!("{}{}", config.csv_comment(), s.to_csv());
            } else {
                emit(wrap(&config, s.to_json()));
            }
        }
        Command::GapWitness(args) => {
            let e = parse_axes(&args.axes, budget)?;
            let witness = match (&args.epsilon, e.is_rational()) {
                (None, true) => chmodel::gap_certificate_rational(&e)?,
                (None, false) => {
                    return Err(CliError::usage(
                        "irrational axes need --epsilon for the witness pipeline",
                    ))
                }
                (Some(eps), _) => {
                    let eps = parse_rat(eps)?;
                    chmodel::gap_witness_irrational(&e, &eps)?
                }
            };
            witness.verify()?;
            let mut payload = witness.to_json();
            if let Some(seq) = &args.sequence {
                let mut witnesses = Vec::new();
                for eps_str in seq.split(',') {
                    let eps = parse_rat(eps_str)?;
                    let w = chmodel::gap_witness_irrational(&e, &eps)?;
                    witnesses.push((w, eps));
                }
                let report = chmodel::limit_gap_report(&witnesses)?;
                payload["limit_report"] = report.to_json();
            }
            emit(wrap(&config, payload));
        }
        Command::Close(args) => {
            let e = parse_axes(&args.axes, budget)?;
            let profile = Profile::parse(&args.profile)?;
            let mu: Vec<f64> = args
                .mu
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|err| CliError::usage(format!("bad mu: {err}")))?;
            let out = flow::find_closing_t(&e, &profile, (args.t_lo, args.t_hi), &mu, args.bound)?;
            emit(wrap(&config, flow::closing_report_json(&out)));
            if matches!(out, ClosingOutcome::NotFound { .. }) {
                // NotFound is a value, not an error: still exit 0.
            }
        }
        Command::Index(args) => {
            let (path_args, want_cz) = match &args.which {
                IndexWhich::Rs(p) => (p, false),
                IndexWhich::Cz(p) => (p, true),
            };
            let path = build_path(path_args)?;
            let rs = index::rs_index(&path)?;
            let crossings = index::crossing_report(&path)?;
            let mut payload = index::index_record_json(&path_args.path_id, rs, &crossings);
            if want_cz {
                let cz = index::cz_nondegenerate(&path)?;
                payload["cz"] = serde_json::json!(cz);
            }
            emit(wrap(&config, payload));
        }
        Command::Lcm(args) => {
            let values = args
                .values
                .split(',')
                .map(CertifiedReal::parse)
                .collect::<Result<Vec<_>, _>>()?;
            let payload = match values.len() {
                0 | 1 => return Err(CliError::usage("need at least two values")),
                2 => match diophantine::lcm_pair(&values[0], &values[1], budget)? {
                    Some(l) => serde_json::json!({ "lcm": l.to_json(), "finite": true }),
                    None => serde_json::json!({ "lcm": "infinite", "finite": false }),
                },
                _ => {
                    let rats: Option<Vec<BigRational>> =
                        values.iter().map(|v| v.as_rational().cloned()).collect();
                    let rats = rats.ok_or_else(|| {
                        CliError::usage("tuples beyond pairs must be exact rationals")
                    })?;
                    let l = diophantine::lcm_tuple(&rats)?;
                    serde_json::json!({ "lcm": rational_json(&l), "finite": true })
                }
            };
            emit(wrap(&config, payload));
        }
        Command::Approx(args) => {
            let e = parse_axes(&args.axes, budget)?;
            let eps = parse_rat(&args.epsilon)?;
            let approximant = if args.upper {
                if e.n() != 2 {
                    return Err(CliError::usage("--upper needs exactly two axes"));
                }
                diophantine::approx_pair_upper((e.axis(1), e.axis(2)), &eps)?
            } else {
                diophantine::approx_ellipsoid(&e, &eps)?
            };
            approximant.verify(e.axes(), budget)?;
            emit(wrap(&config, approximant.to_json()));
        }
        Command::Simulate(args) => {
            config.tolerance = Some(args.tol);
            let e = parse_axes(&args.axes, budget)?;
            let profile = Profile::parse(&args.profile)?;
            let perturbation = flow::InvariantPerturbation::new(profile, args.eps)?;
            let mu: Vec<f64> = match &args.mu {
                Some(spec) => spec
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|err| CliError::usage(format!("bad mu: {err}")))?,
                None => vec![1.0 / e.n() as f64; e.n()],
            };
            let phases = vec![0.0; e.n()];
            let z0 = flow::EllipsoidPoint::on_torus(&e, &mu, &phases)?;
            let traj = flow::integrate(&e, &perturbation, &z0, args.t_end, args.tol)?;
            if traj.failed {
                return Err(CliError {
                    code: 4,
                    message: "integration failed (step collapse); sample marked failed".into(),
                });
            }
            let csv = format!("{}{}", config.csv_comment(), traj.to_csv(&e));
            if args.out == "-" {
                print!("{csv}");
            } else {
                std::fs::File::create(&args.out)
                    .and_then(|mut f| f.write_all(csv.as_bytes()))
                    .map_err(|err| CliError::usage(format!("write {}: {err}", args.out)))?;
                emit(wrap(
                    &config,
                    serde_json::json!({
                        "out": args.out,
                        "steps": traj.stats.steps,
                        "rejected": traj.stats.rejected,
                        "max_constraint_drift": traj.stats.max_constraint_drift,
                        "max_mu_drift": traj.stats.max_mu_drift,
                    }),
                ));
            }
        }
        Command::AxiomsCheck(args) => {
            config.seed = Some(args.seed);
            config.jobs = args.jobs.max(1);
            let e = parse_axes(&args.axes, budget)?;
            // Deterministic parallelism: fixed chunking with derived seeds,
            // reports reduced in chunk order.
            let jobs = config.jobs.min(args.samples.max(1));
            let chunk = args.samples.div_ceil(jobs);
            let mut handles = Vec::new();
            for j in 0..jobs {
                let e = e.clone();
                let samples = chunk.min(args.samples.saturating_sub(j * chunk));
                let seed = args.seed.wrapping_add(j);
                handles.push(std::thread::spawn(move || {
                    chmodel::axioms_suite(&e, samples, seed)
                }));
            }
            let mut total_checks = 0;
            let mut total_samples = 0;
            let mut violations = Vec::new();
            for h in handles {
                let report = h
                    .join()
                    .map_err(|_| CliError {
                        code: 4,
                        message: "worker panicked".into(),
                    })??;
                total_checks += report.checks;
                total_samples += report.samples;
                violations.extend(report.violations);
            }
            let passed = violations.is_empty();
            let mut payload = serde_json::json!({
                "samples": total_samples,
                "checks": total_checks,
                "passed": passed,
                "violations": violations,
            });
            if args.mod2 {
                // Echo the canonical derivation image reduced mod 2.
                let alg = chmodel::ChAlgebra::new(&e, 30)?;
                let table = chmodel::DerivationTable::canonical(&alg)?;
                let (k_t, _) = spectrum::k_t_index(&e)?;
                let sigma = k_t + e.n() as u64 - 1;
                payload["canonical_image_mod2"] =
                    serde_json::json!(table.image_of(sigma).reduce_mod2().to_string());
            }
            emit(wrap(&config, payload));
            if !passed {
                return Err(CliError {
                    code: 4,
                    message: "axiom violations detected".into(),
                });
            }
        }
        Command::HamExample(args) => {
            let critical: Vec<serde_json::Value> = flow::base_critical_values()
                .iter()
                .map(|((x, y), v)| serde_json::json!({ "point": [x, y], "value": v }))
                .collect();
            let cal = flow::base_flow_calibrate()?;
            let mut payload = serde_json::json!({
                "critical_values": critical,
                "calibration": {
                    "scale": cal.scale,
                    "period_at_unit_scale": cal.period_at_unit_scale,
                    "return_residual": cal.return_residual,
                    "h_drift": cal.h_drift,
                },
            });
            if args.pairs > 0 {
                let seed = args.seed.ok_or_else(|| {
                    CliError::usage("--seed is required when --pairs > 0")
                })?;
                config.seed = Some(seed);
                let mut demo = Vec::new();
                // Simple deterministic LCG over (p, q) pairs.
                let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                let mut next = |m: u64| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    (state >> 33) % m + 1
                };
                for _ in 0..args.pairs {
                    let a1 = CertifiedReal::parse(&format!("{}/{}", next(9), next(9))).unwrap();
                    let a2 = CertifiedReal::parse(&format!("{}/{}", next(9), next(9))).unwrap();
                    let spec = flow::TorusFlowSpec::new(a1.clone(), a2.clone());
                    let predicted = spec.predicted_period().map(|t| t.to_f64());
                    let t_max = predicted.unwrap_or(100.0) * 1.05;
                    let detected = flow::detect_period_torus(&spec, t_max, 1e-9);
                    demo.push(serde_json::json!({
                        "a": [a1.to_string(), a2.to_string()],
                        "predicted_period": predicted,
                        "detected_period": detected,
                    }));
                }
                payload["period_demo"] = serde_json::json!(demo);
            }
            emit(wrap(&config, payload));
        }
    }
    Ok(())
}

fn build_path(args: &IndexPathArgs) -> Result<SymplecticPath, CliError> {
    match (&args.rotations, &args.csv) {
        (Some(spec), None) => {
            let mut blocks = Vec::new();
            for part in spec.split(',') {
                let (theta, dur) = part
                    .split_once(':')
                    .ok_or_else(|| CliError::usage(format!("rotation {part:?}: expected theta:duration")))?;
                let theta = parse_angle(theta)?;
                let dur: f64 = dur
                    .trim()
                    .parse()
                    .map_err(|e| CliError::usage(format!("bad duration {dur:?}: {e}")))?;
                blocks.push(SymplecticPath::rotation(theta, dur)?);
            }
            let mut path = blocks
                .first()
                .cloned()
                .ok_or_else(|| CliError::usage("no rotation blocks"))?;
            for block in &blocks[1..] {
                path = path.direct_sum(block)?;
            }
            Ok(path)
        }
        (None, Some(file)) => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CliError::usage(format!("read {file}: {e}")))?;
            Ok(SymplecticPath::from_csv_str(&text)?)
        }
        _ => Err(CliError::usage(
            "exactly one of --rotations or --csv is required",
        )),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
