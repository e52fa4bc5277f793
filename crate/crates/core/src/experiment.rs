//! Reproducible experiment runs: configuration, execution and artifacts.
//!
//! Every run is a pure function of its [`ExperimentConfig`]; output files are
//! byte-identical for identical configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{account, classical_cost_bound, EnsembleLedger, LedgerRecord};
use crate::precision::{
    resolution_for_bits, sample_grid_point, GridMode, PrecisionSpec, MAX_GENERAL_BITS,
    MAX_ROTATION_BITS,
};
use crate::protocol::{
    bell_branches, no_signaling_probe, qt_correct, rsp_run, teleport, BellOutcome,
    ClassicalMessage, EprResource,
};
use crate::qmath::{
    fidelity, partial_trace_a, von_neumann_entropy, DensityOp, PureQubit, TwoQubitState,
};
use crate::rng::{SeedStream, RNG_ALGORITHM};
use crate::stats::{
    consistency_test, frequency_cdf, ks_critical_value, ks_statistic, FrequencyEstimate,
    VarianceMode,
};
use crate::verify::{
    truncation_experiment, verify_bound, CellPlacement, VERIFICATION_SIGNIFICANCE,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QTRSP_OUT_DIR";

/// Significance used by the statistical checks inside experiments.
pub const CHECK_SIGNIFICANCE: f64 = 1e-3;

/// Batches drawn by `frequency_check`.
pub const FREQUENCY_BATCHES: u64 = 100;

/// Fidelity shortfall tolerated for an exact protocol.
pub const FIDELITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    TeleportIdentity,
    OutcomeUniformity,
    NoSignaling,
    VerifyBound,
    TruncationSweep,
    RspEquatorial,
    FrequencyCheck,
    LedgerReport,
    ResolutionTable,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::TeleportIdentity,
        Experiment::OutcomeUniformity,
        Experiment::NoSignaling,
        Experiment::VerifyBound,
        Experiment::TruncationSweep,
        Experiment::RspEquatorial,
        Experiment::FrequencyCheck,
        Experiment::LedgerReport,
        Experiment::ResolutionTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::TeleportIdentity => "teleport_identity",
            Experiment::OutcomeUniformity => "outcome_uniformity",
            Experiment::NoSignaling => "no_signaling",
            Experiment::VerifyBound => "verify_bound",
            Experiment::TruncationSweep => "truncation_sweep",
            Experiment::RspEquatorial => "rsp_equatorial",
            Experiment::FrequencyCheck => "frequency_check",
            Experiment::LedgerReport => "ledger_report",
            Experiment::ResolutionTable => "resolution_table",
        }
    }

    /// The chain of library operations the experiment runs.
    pub fn operation_chain(self) -> &'static str {
        match self {
            Experiment::TeleportIdentity => {
                "sample_grid_point -> prepare -> bell_branches -> qt_correct (all 4 outcomes) -> fidelity"
            }
            Experiment::OutcomeUniformity => "sample_grid_point -> teleport -> estimate -> consistency_test vs 1/4",
            Experiment::NoSignaling => {
                "no_signaling_probe (exact and sampled, two Alice bases) -> z-test per axis"
            }
            Experiment::VerifyBound => "worst-case grid offset -> teleport -> measure M(theta) -> binomial test",
            Experiment::TruncationSweep => {
                "truncation_experiment per n (analytic, then sampled) -> failure ratio vs 2^n"
            }
            Experiment::RspEquatorial => "equatorial grid state -> rsp_run -> estimate -> consistency_test vs 1/2",
            Experiment::FrequencyCheck => "batches of teleport -> outcome frequency -> ks_statistic vs frequency_cdf",
            Experiment::LedgerReport => "teleport + rsp_run -> account -> von_neumann_entropy cross-check",
            Experiment::ResolutionTable => "resolution_for_bits per m",
        }
    }

    fn default_trials(self) -> u64 {
        match self {
            Experiment::TeleportIdentity => 1_000,
            Experiment::FrequencyCheck => 10_000,
            Experiment::ResolutionTable | Experiment::LedgerReport => 0,
            _ => 100_000,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::validation(format!(
                "unknown output format `{s}` (csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Precisions to run at; most experiments take a single value.
    pub m: Vec<u32>,
    /// Ignored description bits; `truncation_sweep` accepts a list.
    pub n: Vec<u32>,
    /// Zero selects exact (analytic) results where an experiment has them.
    pub trials: u64,
    pub seed: u64,
    pub mode: GridMode,
    pub output_format: OutputFormat,
    /// Output file; `None` writes to the default directory.
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Where the artifact goes: the explicit path, or
    /// `$QTRSP_OUT_DIR/<experiment>_seed<seed>.<ext>` (current directory if unset).
    pub fn resolved_output_path(&self) -> PathBuf {
        self.output_path.clone().unwrap_or_else(|| {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            dir.join(format!(
                "{}_seed{}.{}",
                self.experiment,
                self.seed,
                self.output_format.extension()
            ))
        })
    }

    fn single_m(&self) -> u32 {
        self.m[0]
    }

    fn single_n(&self) -> u32 {
        self.n[0]
    }
}

pub const CONFIG_KEYS: [&str; 8] = [
    "experiment",
    "m",
    "n",
    "trials",
    "seed",
    "mode",
    "format",
    "out",
];

/// Parses `"4"`, `"8,16,24"` or the inclusive range `"0..12"`.
fn parse_u32_list(key: &str, raw: &str, errors: &mut Vec<String>) -> Option<Vec<u32>> {
    let raw = raw.trim();
    let parse = |s: &str| s.trim().parse::<u32>();
    let out = if let Some((a, b)) = raw.split_once("..") {
        match (parse(a), parse(b.trim_start_matches('='))) {
            (Ok(a), Ok(b)) if a <= b => Some((a..=b).collect()),
            _ => None,
        }
    } else {
        raw.split(',')
            .map(parse)
            .collect::<std::result::Result<Vec<_>, _>>()
            .ok()
    };
    match out {
        Some(v) if !v.is_empty() => Some(v),
        _ => {
            errors.push(format!(
                "{key} = `{raw}`: expected a non-negative integer, a comma list, or a range a..b"
            ));
            None
        }
    }
}

/// Builds a configuration from string key-value pairs, reporting every
/// violation at once.
pub fn validate_config(raw: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    for key in raw.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}`"));
        }
    }

    let experiment = match raw.get("experiment") {
        None => {
            errors.push("experiment is required".into());
            None
        }
        Some(s) => s
            .parse::<Experiment>()
            .map_err(|e| errors.push(strip(e)))
            .ok(),
    };
    let mode = match raw.get("mode") {
        None => Some(GridMode::RealRotation),
        Some(s) => s
            .parse::<GridMode>()
            .map_err(|e| errors.push(strip(e)))
            .ok(),
    };
    let output_format = match raw.get("format") {
        None => Some(OutputFormat::Csv),
        Some(s) => s
            .parse::<OutputFormat>()
            .map_err(|e| errors.push(strip(e)))
            .ok(),
    };
    let m = match raw.get("m") {
        None => Some(vec![16]),
        Some(s) => parse_u32_list("m", s, &mut errors),
    };
    let n = match raw.get("n") {
        None => Some(vec![0]),
        Some(s) => parse_u32_list("n", s, &mut errors),
    };
    let trials = match raw.get("trials").map(|s| s.trim()) {
        None => None,
        Some(s) if s.starts_with('-') => {
            errors.push(format!("trials = {s}: must be non-negative"));
            None
        }
        Some(s) => s
            .parse::<u64>()
            .map_err(|_| errors.push(format!("trials = `{s}`: expected a non-negative integer")))
            .ok(),
    };
    let seed = match raw.get("seed") {
        None => Some(0),
        Some(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| errors.push(format!("seed = `{s}`: expected an unsigned 64-bit integer")))
            .ok(),
    };

    if let (Some(ms), Some(mode)) = (&m, mode) {
        for &mv in ms {
            let max = match mode {
                GridMode::RealRotation => MAX_ROTATION_BITS,
                GridMode::General => MAX_GENERAL_BITS,
            };
            if mv < 2 || mv > max {
                errors.push(format!("m = {mv} outside [2, {max}] for {mode} mode"));
            } else if mode == GridMode::General && mv % 2 == 1 {
                errors.push(format!("m = {mv}: General mode needs even m"));
            }
        }
    }
    if let (Some(ms), Some(ns)) = (&m, &n) {
        for &nv in ns {
            if let Some(&mv) = ms.iter().find(|&&mv| nv >= mv) {
                errors.push(format!(
                    "n = {nv} must be below m = {mv} (truncation exceeds precision)"
                ));
            }
        }
        if let (Some(GridMode::General), Some(e)) = (mode, experiment) {
            if matches!(e, Experiment::VerifyBound | Experiment::TruncationSweep) {
                errors.push(format!("{e} runs on the real_rotation grid only"));
            }
        }
        if let Some(e) = experiment {
            let multi_m = matches!(
                e,
                Experiment::ResolutionTable | Experiment::VerifyBound | Experiment::LedgerReport
            );
            if !multi_m && ms.len() > 1 {
                errors.push(format!("{e} takes a single m"));
            }
            if e != Experiment::TruncationSweep && ns.len() > 1 {
                errors.push(format!("{e} takes a single n"));
            }
        }
    }
    if let (Some(e), Some(t)) = (experiment, trials) {
        let needs_samples = matches!(
            e,
            Experiment::OutcomeUniformity | Experiment::RspEquatorial | Experiment::FrequencyCheck
        );
        if needs_samples && t == 0 {
            errors.push(format!("{e} needs trials >= 1"));
        }
    }

    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let experiment = experiment.expect("validated");
    Ok(ExperimentConfig {
        experiment,
        m: m.expect("validated"),
        n: n.expect("validated"),
        trials: trials.unwrap_or_else(|| experiment.default_trials()),
        seed: seed.expect("validated"),
        mode: mode.expect("validated"),
        output_format: output_format.expect("validated"),
        output_path: raw.get("out").map(PathBuf::from),
    })
}

fn strip(e: Error) -> String {
    match e {
        Error::Validation(s) | Error::Domain(s) => s,
        other => other.to_string(),
    }
}

/// A pass/fail check evaluated inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Rows rendered both as CSV and as JSON objects.
#[derive(Debug, Clone, Default)]
pub struct Table {
    csv: Vec<u8>,
    json: Vec<serde_json::Value>,
}

impl Table {
    fn from_rows<T: Serialize>(rows: &[T]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let csv = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let json = rows
            .iter()
            .map(serde_json::to_value)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { csv, json })
    }

    pub fn csv_bytes(&self) -> &[u8] {
        &self.csv
    }

    pub fn rows(&self) -> &[serde_json::Value] {
        &self.json
    }
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Table,
    pub ledger: Option<EnsembleLedger>,
    pub reports: Vec<serde_json::Value>,
    pub checks: Vec<Check>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Rng<'a> {
            algorithm: &'a str,
            seed: u64,
        }
        #[derive(Serialize)]
        struct RunLog<'a> {
            schema_version: u32,
            config: &'a ExperimentConfig,
            rng: Rng<'a>,
            records: &'a [serde_json::Value],
            ledger: &'a Option<EnsembleLedger>,
            reports: &'a [serde_json::Value],
            checks: &'a [Check],
        }
        let log = RunLog {
            schema_version: SCHEMA_VERSION,
            config: &self.config,
            rng: Rng {
                algorithm: RNG_ALGORITHM,
                seed: self.config.seed,
            },
            records: self.records.rows(),
            ledger: &self.ledger,
            reports: &self.reports,
            checks: &self.checks,
        };
        let mut out = serde_json::to_vec_pretty(&log)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        match self.config.output_format {
            OutputFormat::Csv => Ok(self.records.csv_bytes().to_vec()),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Writes the artifact, creating parent directories as needed.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render()?)?;
        Ok(())
    }
}

/// Runs the experiment and writes its artifact. The returned output says
/// whether every internal check passed.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let out = execute(config)?;
    out.write_to(&config.resolved_output_path())?;
    Ok(out)
}

/// Runs the experiment without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let streams = SeedStream::new(config.seed);
    let mut out = ExperimentOutput {
        config: config.clone(),
        records: Table::default(),
        ledger: None,
        reports: Vec::new(),
        checks: Vec::new(),
    };
    match config.experiment {
        Experiment::TeleportIdentity => teleport_identity(config, &streams, &mut out)?,
        Experiment::OutcomeUniformity => outcome_uniformity(config, &streams, &mut out)?,
        Experiment::NoSignaling => no_signaling(config, &streams, &mut out)?,
        Experiment::VerifyBound => verify_bound_sweep(config, &streams, &mut out)?,
        Experiment::TruncationSweep => truncation_sweep(config, &streams, &mut out)?,
        Experiment::RspEquatorial => rsp_equatorial(config, &streams, &mut out)?,
        Experiment::FrequencyCheck => frequency_check(config, &streams, &mut out)?,
        Experiment::LedgerReport => ledger_report(config, &streams, &mut out)?,
        Experiment::ResolutionTable => resolution_table(config, &mut out)?,
    }
    Ok(out)
}

fn spec_of(config: &ExperimentConfig, m: u32) -> Result<PrecisionSpec> {
    PrecisionSpec::new(m, config.mode)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

#[derive(Serialize)]
struct IdentityRow {
    trial: u64,
    grid_index: u64,
    outcome: u8,
    probability: f64,
    fidelity: f64,
}

fn teleport_identity(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let spec = spec_of(config, config.single_m())?;
    let singlet = TwoQubitState::singlet();
    let rows: Vec<Vec<IdentityRow>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.substream(i);
            let g = sample_grid_point(&spec, &mut rng);
            let input = crate::protocol::prepare(&g);
            bell_branches(&input, &singlet)
                .iter()
                .zip(BellOutcome::ALL)
                .map(|(b, outcome)| {
                    let bob = b.bob.expect("every Bell outcome has probability 1/4");
                    let fixed = qt_correct(&bob, &ClassicalMessage::teleportation(outcome))?;
                    Ok(IdentityRow {
                        trial: i,
                        grid_index: g.linear_index(),
                        outcome: outcome.index() as u8,
                        probability: b.probability,
                        fidelity: fidelity(&input, &fixed),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<IdentityRow> = rows.into_iter().flatten().collect();
    let worst = rows.iter().map(|r| r.fidelity).fold(1.0, f64::min);
    out.checks.push(Check::new(
        "teleport_identity",
        worst >= 1.0 - FIDELITY_TOL,
        format!("min fidelity {worst:.15} over {} branches", rows.len()),
    ));
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

/// `trials` sampled teleportations of random grid states; returns Bell outcome indices.
fn sampled_outcomes(
    spec: &PrecisionSpec,
    trials: u64,
    offset: u64,
    streams: &SeedStream,
) -> Result<(Vec<usize>, EnsembleLedger)> {
    let runs: Vec<(usize, LedgerRecord)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.substream(offset + i);
            let g = sample_grid_point(spec, &mut rng);
            let run = teleport(&g, &mut EprResource::singlet(), &mut rng)?;
            Ok((run.outcome.expect("completed run") as usize, account(&run)?))
        })
        .collect::<Result<_>>()?;
    let mut ledger = EnsembleLedger::default();
    runs.iter().for_each(|(_, l)| ledger.record(l));
    Ok((runs.into_iter().map(|(o, _)| o).collect(), ledger))
}

fn outcome_uniformity(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let spec = spec_of(config, config.single_m())?;
    let (outcomes, ledger) = sampled_outcomes(&spec, config.trials, 0, streams)?;
    let est = crate::stats::estimate(&outcomes, 4)?;
    let test = consistency_test(&est, &[0.25; 4], CHECK_SIGNIFICANCE)?;
    out.checks.push(Check::new(
        "bell_outcomes_uniform",
        test.accepted,
        format!("{:?} p-value {:.6}", test.method, test.p_value),
    ));
    out.reports.push(to_value(&test)?);
    out.records = Table::from_rows(&est.csv_rows())?;
    out.ledger = Some(ledger);
    Ok(())
}

#[derive(Serialize)]
struct NoSignalingRow {
    alice_basis_angle: f64,
    runs: u64,
    x: f64,
    y: f64,
    z: f64,
    se_x: f64,
    se_y: f64,
    se_z: f64,
}

/// Alice's two measurement bases, as rotation angles.
pub const NO_SIGNALING_ANGLES: [f64; 2] = [0.0, std::f64::consts::FRAC_PI_2];

fn no_signaling(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let singlet = TwoQubitState::singlet();
    let mixed = DensityOp::maximally_mixed();
    let mut rows = Vec::new();
    let mut worst_exact: f64 = 0.0;
    let mut sampled = Vec::new();
    for (k, &angle) in NO_SIGNALING_ANGLES.iter().enumerate() {
        let exact = no_signaling_probe(&singlet, angle, 0, streams)?;
        worst_exact = worst_exact.max(exact.rho.max_abs_diff(&mixed));
        let est = if config.trials > 0 {
            no_signaling_probe(&singlet, angle, config.trials, &streams.fork(k as u64))?
        } else {
            exact
        };
        rows.push(NoSignalingRow {
            alice_basis_angle: angle,
            runs: est.runs,
            x: est.bloch[0],
            y: est.bloch[1],
            z: est.bloch[2],
            se_x: est.std_err[0],
            se_y: est.std_err[1],
            se_z: est.std_err[2],
        });
        sampled.push(est);
    }
    out.checks.push(Check::new(
        "marginal_exact",
        worst_exact < 1e-12,
        format!("max deviation from I/2: {worst_exact:e}"),
    ));
    if config.trials > 0 {
        let (a, b) = (&sampled[0], &sampled[1]);
        let z = (0..3)
            .map(|k| {
                let se = (a.std_err[k].powi(2) + b.std_err[k].powi(2)).sqrt();
                ((a.bloch[k] - b.bloch[k]) / se).abs()
            })
            .fold(0.0, f64::max);
        out.checks.push(Check::new(
            "bases_indistinguishable",
            z < 5.0,
            format!("max |z| across axes {z:.3} (threshold 5)"),
        ));
    }
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

fn verify_bound_sweep(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let mut rows = Vec::new();
    for (k, &m) in config.m.iter().enumerate() {
        let spec = spec_of(config, m)?;
        let report = verify_bound(
            &spec,
            config.trials,
            &streams.fork(k as u64),
            VERIFICATION_SIGNIFICANCE,
        )?;
        out.checks.push(Check::new(
            format!("verify_bound_m{m}"),
            report.passed,
            format!(
                "p_hat {:.8} vs bound {:.8}, p-value {:.4}",
                report.p_hat, report.bound, report.p_value
            ),
        ));
        out.reports.push(to_value(&report)?);
        rows.push(report.csv_row());
    }
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    m: u32,
    n: u32,
    trials: u64,
    full_failures: u64,
    truncated_failures: u64,
    failure_ratio: f64,
    ratio_std_err: f64,
    expected_ratio: f64,
    nominal_factor: f64,
    within_3_sigma: bool,
}

/// Failures per arm below which the delta-method interval is not trusted.
pub const SWEEP_MIN_FAILURES: u64 = 30;

fn truncation_sweep(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let spec = spec_of(config, config.single_m())?;
    let mut rows = Vec::new();
    for &n in &config.n {
        let res = truncation_experiment(
            &spec,
            n,
            config.trials,
            CellPlacement::WorstCase,
            &streams.fork(n as u64),
        )?;
        let gated = config.trials > 0
            && res.full.failures() >= SWEEP_MIN_FAILURES
            && res.truncated.failures() >= SWEEP_MIN_FAILURES;
        let within = if config.trials == 0 {
            true
        } else {
            !gated || (res.failure_ratio - res.expected_ratio).abs() <= 3.0 * res.ratio_std_err
        };
        if gated {
            out.checks.push(Check::new(
                format!("ratio_m{}_n{n}", res.m),
                within,
                format!(
                    "ratio {:.4} ± {:.4}, expected {:.4}",
                    res.failure_ratio, res.ratio_std_err, res.expected_ratio
                ),
            ));
        }
        rows.push(SweepRow {
            m: res.m,
            n,
            trials: config.trials,
            full_failures: res.full.failures(),
            truncated_failures: res.truncated.failures(),
            failure_ratio: res.failure_ratio,
            ratio_std_err: res.ratio_std_err,
            expected_ratio: res.expected_ratio,
            nominal_factor: res.nominal_factor,
            within_3_sigma: within,
        });
        out.reports.push(to_value(&res)?);
    }
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

#[derive(Serialize)]
struct RspRow {
    run: u64,
    phase_index: u64,
    outcome: u8,
    bit: u8,
    fidelity: f64,
}

fn rsp_equatorial(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    use rand::Rng;
    let m = config.single_m();
    let levels = 1u64 << m.min(63);
    let runs: Vec<(RspRow, LedgerRecord)> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.substream(i);
            let k = rng.random_range(0..levels);
            let eta = PureQubit::equatorial(std::f64::consts::TAU * k as f64 / levels as f64);
            let run = rsp_run(&eta, m, &mut EprResource::singlet(), &mut rng)?;
            let bob = run.bob_final.expect("completed run");
            let msg = run.message.as_ref().expect("completed run");
            Ok((
                RspRow {
                    run: i,
                    phase_index: k,
                    outcome: run.outcome.expect("completed run"),
                    bit: msg.bits()[0],
                    fidelity: fidelity(&eta, &bob),
                },
                account(&run)?,
            ))
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<usize> = runs.iter().map(|(r, _)| r.outcome as usize).collect();
    let est = crate::stats::estimate(&outcomes, 2)?;
    let test = consistency_test(&est, &[0.5, 0.5], CHECK_SIGNIFICANCE)?;
    let worst = runs.iter().map(|(r, _)| r.fidelity).fold(1.0, f64::min);
    let mut ledger = EnsembleLedger::default();
    runs.iter().for_each(|(_, l)| ledger.record(l));
    let one_bit = runs.iter().all(|(_, l)| l.classical_bits_c == 1);
    out.checks.push(Check::new(
        "rsp_branches_uniform",
        test.accepted,
        format!("{:?} p-value {:.6}", test.method, test.p_value),
    ));
    out.checks.push(Check::new(
        "rsp_fidelity",
        worst >= 1.0 - FIDELITY_TOL,
        format!("min fidelity {worst:.15}"),
    ));
    out.checks
        .push(Check::new("rsp_one_bit", one_bit, "every run sent c = 1"));
    out.reports.push(to_value(&test)?);
    out.ledger = Some(ledger);
    let rows: Vec<RspRow> = runs.into_iter().map(|(r, _)| r).collect();
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

#[derive(Serialize)]
struct FrequencyRow {
    batch: u64,
    n: u64,
    count: u64,
    frequency: f64,
}

#[derive(Serialize)]
pub struct KsReport {
    pub category: usize,
    pub p: f64,
    pub batches: u64,
    pub batch_size: u64,
    pub variance_mode: VarianceMode,
    pub ks_distance: f64,
    pub critical_value: f64,
}

/// Bell outcome tracked by `frequency_check`.
pub const FREQUENCY_CATEGORY: usize = 0;

fn frequency_check(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let spec = spec_of(config, config.single_m())?;
    let n = config.trials;
    let mut rows = Vec::new();
    let mut ledger = EnsembleLedger::default();
    for b in 0..FREQUENCY_BATCHES {
        let (outcomes, l) = sampled_outcomes(&spec, n, b * n, streams)?;
        ledger.merge(&l);
        let est: FrequencyEstimate = crate::stats::estimate(&outcomes, 4)?;
        rows.push(FrequencyRow {
            batch: b,
            n,
            count: est.counts[FREQUENCY_CATEGORY],
            frequency: est.f[FREQUENCY_CATEGORY],
        });
    }
    let freqs: Vec<f64> = rows.iter().map(|r| r.frequency).collect();
    let p = 0.25;
    let mode = VarianceMode::AsPrinted;
    let d = ks_statistic(&freqs, |f| {
        frequency_cdf(f, p, n, mode).expect("valid p and n")
    })?;
    let crit = ks_critical_value(freqs.len(), CHECK_SIGNIFICANCE);
    out.checks.push(Check::new(
        "frequency_ks",
        d < crit,
        format!("KS distance {d:.5} vs critical {crit:.5}"),
    ));
    out.reports.push(to_value(&KsReport {
        category: FREQUENCY_CATEGORY,
        p,
        batches: FREQUENCY_BATCHES,
        batch_size: n,
        variance_mode: mode,
        ks_distance: d,
        critical_value: crit,
    })?);
    out.ledger = Some(ledger);
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

fn ledger_report(
    config: &ExperimentConfig,
    streams: &SeedStream,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let s_bits = von_neumann_entropy(&partial_trace_a(&TwoQubitState::singlet()))?;
    let qt_cost = classical_cost_bound(s_bits);
    let mut rows = Vec::new();
    let mut ledger = EnsembleLedger::default();
    for (k, &m) in config.m.iter().enumerate() {
        let mut rng = streams.substream(k as u64);
        let spec = PrecisionSpec::real_rotation(m)?;
        let g = sample_grid_point(&spec, &mut rng);
        let qt = account(&teleport(&g, &mut EprResource::singlet(), &mut rng)?)?;
        let eta = PureQubit::equatorial(rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU);
        let rsp = account(&rsp_run(&eta, m, &mut EprResource::singlet(), &mut rng)?)?;
        for r in [qt, rsp] {
            let r = if config.single_n() > 0 {
                r.with_truncation(config.single_n())?
            } else {
                r
            };
            ledger.record(&r);
            rows.push(r.csv_row());
        }
        out.checks.push(Check::new(
            format!("qt_bits_m{m}"),
            (qt.classical_bits_c as f64 - qt_cost).abs() < 1e-12,
            format!("c = {} vs 2·S(I/2) = {qt_cost}", qt.classical_bits_c),
        ));
        out.checks.push(Check::new(
            format!("rsp_bits_m{m}"),
            rsp.classical_bits_c == 1,
            format!("c = {}", rsp.classical_bits_c),
        ));
    }
    out.ledger = Some(ledger);
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

fn resolution_table(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let rows: Vec<_> = config.m.iter().map(|&m| resolution_for_bits(m)).collect();
    if let Some(r) = rows.iter().find(|r| r.m == 16) {
        let two_sig = format!("{:.1e}", r.sphere_size);
        out.checks.push(Check::new(
            "sphere_size_m16",
            two_sig == "4.8e-5",
            format!("sphere_size {:e} rounds to {two_sig}", r.sphere_size),
        ));
    }
    out.records = Table::from_rows(&rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> Result<ExperimentConfig> {
        validate_config(
            &pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    #[test]
    fn validation_examples() {
        let c = cfg(&[
            ("experiment", "verify_bound"),
            ("m", "16"),
            ("trials", "100000"),
            ("seed", "1"),
        ])
        .unwrap();
        assert_eq!(
            (c.experiment, c.m.clone(), c.trials, c.seed),
            (Experiment::VerifyBound, vec![16], 100_000, 1)
        );

        match cfg(&[
            ("experiment", "teleport_identity"),
            ("m", "3"),
            ("mode", "general"),
        ]) {
            Err(Error::Config(v)) => assert!(v.iter().any(|e| e.contains("even")), "{v:?}"),
            other => panic!("{other:?}"),
        }
        match cfg(&[
            ("experiment", "teleport_identity"),
            ("n", "20"),
            ("m", "16"),
        ]) {
            Err(Error::Config(v)) => assert!(v.iter().any(|e| e.contains("exceeds")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        match cfg(&[
            ("experiment", "warp"),
            ("m", "16"),
            ("n", "20"),
            ("trials", "-5"),
            ("colour", "red"),
        ]) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn list_and_range_syntax() {
        let c = cfg(&[("experiment", "truncation_sweep"), ("n", "0..12")]).unwrap();
        assert_eq!(c.n, (0..=12).collect::<Vec<_>>());
        let c = cfg(&[("experiment", "resolution_table"), ("m", "8,16,24")]).unwrap();
        assert_eq!(c.m, vec![8, 16, 24]);
        assert!(cfg(&[("experiment", "resolution_table"), ("m", "8,,24")]).is_err());
    }

    #[test]
    fn every_experiment_has_a_chain() {
        for e in Experiment::ALL {
            assert!(!e.operation_chain().is_empty());
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn resolution_table_rows() {
        let c = cfg(&[("experiment", "resolution_table"), ("m", "8,16,24")]).unwrap();
        let out = execute(&c).unwrap();
        assert!(out.passed());
        let csv = String::from_utf8(out.records.csv_bytes().to_vec()).unwrap();
        assert!(
            csv.starts_with("m,phi_min,sphere_size,overlap_bound\n"),
            "{csv}"
        );
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn small_runs_pass_and_repeat() {
        for e in Experiment::ALL {
            let trials = match e {
                Experiment::FrequencyCheck => "200",
                Experiment::ResolutionTable | Experiment::LedgerReport => "0",
                _ => "2000",
            };
            let m = if e == Experiment::VerifyBound {
                "6"
            } else {
                "8"
            };
            let n = if e == Experiment::TruncationSweep {
                "0,2"
            } else {
                "0"
            };
            let c = cfg(&[
                ("experiment", e.name()),
                ("m", m),
                ("n", n),
                ("trials", trials),
                ("format", "json"),
            ])
            .unwrap();
            let a = execute(&c).unwrap();
            assert!(a.passed(), "{e}: {:?}", a.checks);
            assert_eq!(
                a.render().unwrap(),
                execute(&c).unwrap().render().unwrap(),
                "{e}"
            );
        }
    }
}
