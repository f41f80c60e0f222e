//! Command-line interface: `audit`, `synth` and `sweep`.
//!
//! Exit codes: 0 success, 1 data error, 2 configuration error. Errors are
//! printed to stderr as `error[<Class>]: <message>`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::csv_io::{ingest_csv, write_csv, CsvError, CsvLayout, CsvOptions};
use crate::fairness::{FairnessError, FairnessMode};
use crate::groups::{AuditError, Statistic, DEFAULT_MIN_GROUP_SIZE};
use crate::irr::{IccModel, IrrError};
use crate::metrics::{MetricError, MetricSpec};
use crate::report::{build_report, AuditSettings};
use crate::synth::{generate, scenario_sweep, Predictor, RatingScenario, ScenarioFile, SynthError};
use crate::table::{GroupError, PredictionKind, TableError, ValueRange};

#[derive(Debug, Parser)]
#[command(name = "irrfair", version, about = "Inter-rater reliability and individual-fairness audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit a prediction table.
    Audit(AuditConfig),
    /// Generate a synthetic prediction table.
    Synth(SynthArgs),
    /// Sweep noise levels over synthetic tables.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Binary,
    Categorical,
    Continuous,
}

impl From<KindArg> for PredictionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Binary => PredictionKind::Binary,
            KindArg::Categorical => PredictionKind::Categorical,
            KindArg::Continuous => PredictionKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    SameIndividual,
    CrossIndividual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Auto,
    Kappa,
    Icc1,
    IccA1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Threshold,
    Identity,
}

fn parse_range(s: &str) -> Result<ValueRange, String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| "expected LO,HI".to_string())?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    ValueRange::new(lo, hi).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct AuditConfig {
    /// CSV file with one row per individual (or triples with --long).
    #[arg(long)]
    pub input: PathBuf,
    /// Prediction kind; inferred as binary or categorical when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Value range for continuous predictions, as LO,HI.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub range: Option<ValueRange>,
    /// Declared categorical labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Rater columns; default all columns except `individual` and the group column.
    #[arg(long, value_delimiter = ',')]
    pub raters: Option<Vec<String>>,
    /// Column holding group labels for a stratified audit.
    #[arg(long)]
    pub group_column: Option<String>,
    /// Normalized prediction distances at or below this count as equal.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "same-individual")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "auto")]
    pub statistic: StatisticArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
    /// Maximum violation records listed per report.
    #[arg(long, default_value_t = 100)]
    pub max_violations: usize,
    /// Groups smaller than this are reported as skipped.
    #[arg(long, default_value_t = DEFAULT_MIN_GROUP_SIZE)]
    pub min_group_size: usize,
    /// Read `individual,rater,prediction` triples.
    #[arg(long)]
    pub long: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML key = value pairs).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub individuals: Option<usize>,
    #[arg(long)]
    pub raters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Prediction table CSV; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON sidecar with true scores, true predictions and rating flags.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Name of the group column in the CSV.
    #[arg(long, default_value = "group")]
    pub group_column: String,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub noise_levels: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Config,
}

/// An error with a stable class name and exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub class: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            class,
            message: message.into(),
        }
    }

    pub fn data(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            class,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Data => 1,
            ErrorKind::Config => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.class, self.message)
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        let msg = e.to_string();
        match e {
            TableError::MissingRange => CliError::config("MissingRange", msg),
            TableError::InvalidRange { .. } => CliError::config("InvalidRange", msg),
            TableError::InvalidLabels => CliError::config("InvalidLabels", msg),
            TableError::EmptyId(_) => CliError::data("EmptyId", msg),
            TableError::MixedKinds { .. } => CliError::data("MixedKinds", msg),
            TableError::TooFewRaters(_) => CliError::data("TooFewRaters", msg),
            TableError::EmptyTable => CliError::data("EmptyTable", msg),
            TableError::OutOfRange { .. } => CliError::data("OutOfRange", msg),
            TableError::DuplicateRater(_) => CliError::data("DuplicateRater", msg),
            TableError::UnknownRater { .. } => CliError::data("UnknownRater", msg),
            TableError::UnknownLabel { .. } => CliError::data("UnknownLabel", msg),
        }
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        CliError::data("GroupError", e.to_string())
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        let msg = e.to_string();
        match e {
            CsvError::Io { .. } => CliError::data("IoError", msg),
            CsvError::ParseError { .. } => CliError::data("ParseError", msg),
            CsvError::DuplicateIndividual { .. } => CliError::data("DuplicateIndividual", msg),
            CsvError::DuplicateCell { .. } => CliError::data("DuplicateCell", msg),
            CsvError::HeaderMismatch(_) => CliError::data("HeaderMismatch", msg),
            CsvError::Table(t) => t.into(),
            CsvError::Group(g) => g.into(),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let msg = e.to_string();
        match e {
            MetricError::KindMismatch { .. } => CliError::data("KindMismatch", msg),
            MetricError::MissingRange => CliError::config("MissingRange", msg),
            MetricError::InvalidEpsilon(_) => CliError::config("InvalidEpsilon", msg),
            MetricError::IncompatibleSpec { .. } => CliError::config("IncompatibleSpec", msg),
        }
    }
}

impl From<IrrError> for CliError {
    fn from(e: IrrError) -> Self {
        let msg = e.to_string();
        match e {
            IrrError::WrongKind { .. } => CliError::config("WrongKind", msg),
            IrrError::NoCompleteRows(..) => CliError::data("NoCompleteRows", msg),
            IrrError::UnknownRater(_) => CliError::data("UnknownRater", msg),
            IrrError::TooFewSubjects(_) => CliError::data("TooFewSubjects", msg),
            IrrError::ZeroTotalVariance => CliError::data("ZeroTotalVariance", msg),
            IrrError::ZeroDenominator => CliError::data("ZeroDenominator", msg),
            IrrError::Metric(m) => m.into(),
        }
    }
}

impl From<FairnessError> for CliError {
    fn from(e: FairnessError) -> Self {
        match e {
            FairnessError::IncompatibleSpec(m) => m.into(),
            FairnessError::MissingFlags(_) => CliError::data("MissingFlags", e.to_string()),
            FairnessError::UnknownIndividual(_) => CliError::data("UnknownIndividual", e.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let msg = e.to_string();
        match e {
            AuditError::NoLabeledIndividuals => CliError::data("NoLabeledIndividuals", msg),
            AuditError::IncompatibleStatistic { .. } => CliError::config("IncompatibleStatistic", msg),
            AuditError::Group(g) => g.into(),
            AuditError::Fairness(f) => f.into(),
            AuditError::Irr(i) => i.into(),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let msg = e.to_string();
        match e {
            SynthError::InvalidScenario(_) => CliError::config("InvalidScenario", msg),
            SynthError::Config(_) => CliError::config("InvalidScenario", msg),
            SynthError::Table(t) => t.into(),
            SynthError::Fairness(f) => f.into(),
        }
    }
}

fn resolve_statistic(arg: StatisticArg, kind: PredictionKind) -> Result<Statistic, CliError> {
    let stat = match arg {
        StatisticArg::Auto => Statistic::auto(kind),
        StatisticArg::Kappa => Statistic::Kappa,
        StatisticArg::Icc1 => Statistic::Icc(IccModel::OneWayRandom),
        StatisticArg::IccA1 => Statistic::Icc(IccModel::TwoWayAbsoluteAgreement),
    };
    if !stat.supports(kind) {
        return Err(CliError::config(
            "IncompatibleStatistic",
            format!("statistic {} does not apply to {kind} predictions", stat.name()),
        ));
    }
    Ok(stat)
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::data("IoError", format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::data("IoError", e.to_string()))
        }
    }
}

/// Ingest, audit, and render. Returns the rendered report.
pub fn run_audit(config: &AuditConfig) -> Result<String, CliError> {
    if !(config.epsilon.is_finite() && config.epsilon >= 0.0) {
        return Err(CliError::config(
            "InvalidEpsilon",
            format!("epsilon must be finite and >= 0, got {}", config.epsilon),
        ));
    }
    let kind = config.kind.map(PredictionKind::from);
    if config.range.is_some() && kind != Some(PredictionKind::Continuous) {
        return Err(CliError::config("InvalidConfig", "--range requires --kind continuous"));
    }
    if config.labels.is_some() && kind != Some(PredictionKind::Categorical) {
        return Err(CliError::config("InvalidConfig", "--labels requires --kind categorical"));
    }
    if kind == Some(PredictionKind::Continuous) && config.range.is_none() {
        return Err(CliError::config(
            "MissingRange",
            "continuous predictions need --range LO,HI",
        ));
    }
    let opts = CsvOptions {
        kind,
        range: config.range,
        raters: config.raters.clone(),
        group_column: config.group_column.clone(),
        labels: config.labels.clone(),
        layout: if config.long { CsvLayout::Long } else { CsvLayout::Wide },
    };
    let (table, groups) = ingest_csv(&config.input, &opts)?;
    let statistic = resolve_statistic(config.statistic, table.kind())?;
    let settings = AuditSettings {
        spec: MetricSpec::for_kind(table.kind()).with_epsilon(config.epsilon),
        mode: match config.mode {
            ModeArg::SameIndividual => FairnessMode::SameIndividualOnly,
            ModeArg::CrossIndividual => FairnessMode::CrossIndividual,
        },
        statistic,
        min_group_size: config.min_group_size,
        max_violations: Some(config.max_violations),
    };
    let report = build_report(&table, groups.as_ref(), &settings)?;
    Ok(match config.format {
        FormatArg::Json => report.to_json(),
        FormatArg::Text => report.to_text(),
    })
}

fn load_scenario(args: &ScenarioArgs) -> Result<RatingScenario, CliError> {
    let mut scenario = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config("IoError", format!("cannot read {}: {e}", p.display())))?;
            ScenarioFile::parse(&text)?.into_scenario()?
        }
        None => RatingScenario::default(),
    };
    if let Some(n) = args.individuals {
        scenario.individuals = n;
    }
    if let Some(k) = args.raters {
        scenario.raters = k;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    if let Some(s) = args.noise {
        scenario.noise_spread = s;
    }
    match (args.predictor, args.threshold) {
        (Some(PredictorArg::Identity), _) => scenario.predictor = Predictor::Identity,
        (Some(PredictorArg::Threshold), t) => {
            let r = scenario.score_range;
            scenario.predictor = Predictor::Threshold {
                threshold: t.unwrap_or((r.lo + r.hi) / 2.0),
            }
        }
        (None, Some(t)) => scenario.predictor = Predictor::Threshold { threshold: t },
        (None, None) => {}
    }
    scenario.validate()?;
    Ok(scenario)
}

pub fn run_synth(args: &SynthArgs) -> Result<String, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let out = generate(&scenario)?;
    let mut buf = Vec::new();
    let groups = out.groups.as_ref().map(|g| (args.group_column.as_str(), g));
    write_csv(&out.predictions, groups, &mut buf)?;
    if let Some(p) = &args.sidecar {
        fs::write(p, out.sidecar_json() + "\n")
            .map_err(|e| CliError::data("IoError", format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn run_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let points = scenario_sweep(&scenario, &args.noise_levels, args.replicates)?;
    Ok(match args.format {
        FormatArg::Json => {
            let doc = serde_json::json!({
                "schema_version": crate::report::SCHEMA_VERSION,
                "scenario": scenario,
                "points": points,
            });
            serde_json::to_string_pretty(&doc).expect("sweep serializes") + "\n"
        }
        FormatArg::Text => {
            let mut s = String::from("noise\treplicates\tstatistic\tmean\tpair_violation_rate\n");
            for p in &points {
                s += &format!(
                    "{:.6}\t{}\t{}\t{}\t{:.6}\n",
                    p.noise,
                    p.replicates,
                    p.statistic.name(),
                    p.statistic_mean.map_or("undefined".into(), |v| format!("{v:.6}")),
                    p.pair_violation_rate_mean
                );
            }
            s
        }
    })
}

/// Parses arguments, runs the command, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    let result = match &cli.command {
        Command::Audit(c) => run_audit(c).and_then(|s| emit(c.output.as_ref(), &s)),
        Command::Synth(a) => run_synth(a).and_then(|s| emit(a.output.as_ref(), &s)),
        Command::Sweep(a) => run_sweep(a).and_then(|s| emit(a.output.as_ref(), &s)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
