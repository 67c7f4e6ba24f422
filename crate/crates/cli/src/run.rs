//! Execute a configuration and write its artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use effpot::verify::{
    forward_experiment, interaction_independence_experiment, oracle_compare_experiment,
    roundtrip_experiment, self_inversion_experiment, sturm_liouville_diagnostics,
    ExperimentReport,
};

use crate::config::{ConfigError, ExperimentKind, LoadedConfig, OutputFormat, Plan};

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Passed = 0,
    VerdictFailed = 1,
    ConfigError = 2,
    NumericalFailure = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Why a run did not produce a report.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(effpot::Error),
    Output(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Output(e) => write!(f, "cannot write outputs: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl RunError {
    pub fn status(&self) -> Status {
        match self {
            RunError::Config(_) => Status::ConfigError,
            RunError::Numerical(_) | RunError::Output(_) => Status::NumericalFailure,
        }
    }
}

/// Options given on the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Run a plan and stamp the report with the configuration's provenance.
pub fn execute(loaded: &LoadedConfig) -> Result<ExperimentReport, RunError> {
    let plan = loaded.plan().map_err(RunError::Config)?;
    let result = match &plan {
        Plan::Diagnose(setup) => sturm_liouville_diagnostics(setup),
        Plan::Experiment(kind, setup) => match kind {
            ExperimentKind::Forward => forward_experiment(setup),
            ExperimentKind::Invert => self_inversion_experiment(setup),
            ExperimentKind::Roundtrip => roundtrip_experiment(setup),
            ExperimentKind::Independence => interaction_independence_experiment(setup),
            ExperimentKind::OracleCompare => oracle_compare_experiment(setup),
            ExperimentKind::DiagnoseSl => unreachable!("diagnose-sl plans are built separately"),
        },
    };
    let mut report = result.map_err(|e| {
        // configuration problems detected inside a pipeline still exit 2
        match e {
            effpot::Error::Config { field, message } => RunError::Config(loaded.locate(ConfigError {
                field,
                line: None,
                message,
            })),
            e if e.is_config() => RunError::Config(ConfigError {
                field: "config".into(),
                line: None,
                message: e.to_string(),
            }),
            e => RunError::Numerical(e),
        }
    })?;
    let config = &loaded.config;
    report.config_hash = config.hash();
    report.seed = config.seed();
    report.config = config.echo();
    Ok(report)
}

fn metadata(report: &ExperimentReport) -> Vec<String> {
    vec![
        format!("effpot {}", report.version),
        format!("config_hash {}", report.config_hash),
        format!("experiment {}", report.kind),
        format!("seed {}", report.seed),
    ]
}

/// Write `report.json`, one CSV per time series and `summary.txt` into `dir`.
pub fn write_artifacts(
    report: &mut ExperimentReport,
    dir: &Path,
    formats: &[OutputFormat],
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let header = metadata(report);
    report.series_files.clear();
    if formats.contains(&OutputFormat::Csv) {
        for series in &report.series {
            let name = format!("{}.csv", series.name);
            let mut out = BufWriter::new(fs::File::create(dir.join(&name))?);
            series.write_csv(&mut out, &header)?;
            out.flush()?;
            report.series_files.push(name);
        }
    }
    if formats.contains(&OutputFormat::Json) {
        let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
        fs::write(dir.join("report.json"), json + "\n")?;
    }
    fs::write(dir.join("summary.txt"), report.summary())?;
    Ok(())
}

/// Default output directory: `output.directory`, else `effpot-out/<stem>`.
pub fn output_dir(loaded: &LoadedConfig, config_path: &Path, opts: &RunOptions) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    if let Some(dir) = &loaded.config.output.directory {
        return PathBuf::from(dir);
    }
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from("effpot-out").join(stem)
}

/// Load, run and write one configuration.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<(ExperimentReport, PathBuf), RunError> {
    let mut loaded = LoadedConfig::read(path).map_err(RunError::Config)?;
    if let Some(seed) = opts.seed {
        loaded.config.inversion.seed = seed;
    }
    let mut report = execute(&loaded)?;
    let dir = output_dir(&loaded, path, opts);
    write_artifacts(&mut report, &dir, &loaded.config.output.formats).map_err(RunError::Output)?;
    Ok((report, dir))
}

/// Exit status of a finished report.
pub fn status_of(report: &ExperimentReport) -> Status {
    if report.passed() {
        Status::Passed
    } else {
        Status::VerdictFailed
    }
}
