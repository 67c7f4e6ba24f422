//! Report types shared by all experiments, and their CSV form.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sturm::SlDiagnostics;

use super::conservation::ConservationReport;

/// How a verdict's value is judged against its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Comparison {
    /// `value <= threshold`
    AtMost,
    /// `value >= threshold`
    AtLeast,
    /// `|value − target| <= threshold`
    Within { target: f64 },
    /// `lower <= value <= threshold`
    Between { lower: f64 },
}

/// One pass/fail judgement, always carrying the threshold it was judged by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl Verdict {
    fn judged(name: impl Into<String>, value: f64, threshold: f64, comparison: Comparison) -> Self {
        let passed = match comparison {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
            Comparison::Within { target } => (value - target).abs() <= threshold,
            Comparison::Between { lower } => value >= lower && value <= threshold,
        };
        Self {
            name: name.into(),
            value,
            threshold,
            comparison,
            // NaN values never pass
            passed: passed && value.is_finite(),
            detail: None,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::judged(name, value, threshold, Comparison::AtMost)
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::judged(name, value, threshold, Comparison::AtLeast)
    }

    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self::judged(name, value, tol, Comparison::Within { target })
    }

    pub fn between(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Self::judged(name, value, upper, Comparison::Between { lower })
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn describe(&self) -> String {
        let rule = match self.comparison {
            Comparison::AtMost => format!("<= {:.3e}", self.threshold),
            Comparison::AtLeast => format!(">= {:.3e}", self.threshold),
            Comparison::Within { target } => format!("= {target} ± {}", self.threshold),
            Comparison::Between { lower } => format!("in [{lower}, {}]", self.threshold),
        };
        format!(
            "[{}] {}: {:.6e} (required {rule})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value
        )
    }
}

/// One row of a time series. Residual columns are `NaN` where the centred
/// differences are undefined (first and last sample).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub e_l2: f64,
    pub e_linf: f64,
    pub norm_drift: f64,
    pub continuity_res: f64,
    pub forcebalance_res: f64,
}

impl SeriesRow {
    pub fn at(t: f64) -> Self {
        Self {
            t,
            e_l2: f64::NAN,
            e_linf: f64::NAN,
            norm_drift: f64::NAN,
            continuity_res: f64::NAN,
            forcebalance_res: f64::NAN,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    /// File stem of the CSV written for this series.
    pub name: String,
    pub rows: Vec<SeriesRow>,
}

pub const CSV_COLUMNS: [&str; 6] = [
    "t",
    "e_L2",
    "e_Linf",
    "norm_drift",
    "continuity_res",
    "forcebalance_res",
];

impl TimeSeries {
    /// Comma-separated values with `#` metadata lines, a header row and
    /// round-trip exact numbers.
    pub fn write_csv(&self, out: &mut impl Write, metadata: &[String]) -> std::io::Result<()> {
        for line in metadata {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                num(r.t),
                num(r.e_l2),
                num(r.e_linf),
                num(r.norm_drift),
                num(r.continuity_res),
                num(r.forcebalance_res)
            )?;
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.17e}")
    }
}

/// Log-log fit of an error series against elapsed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// The upper end was pulled below the requested window end.
    pub window_shrunk: bool,
    /// Error model subtracted as the discretization floor.
    pub floor: FloorModel,
}

/// Discretization floor below which errors are not attributed to truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FloorModel {
    /// `floor(t) = rate · t`
    Linear { rate: f64 },
    /// `floor(t) = level`
    Constant { level: f64 },
}

impl FloorModel {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            FloorModel::Linear { rate } => rate * t,
            FloorModel::Constant { level } => level,
        }
    }
}

/// Machine-readable outcome of one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    /// Headline fitted slope (roundtrip-type experiments).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slope: Option<f64>,
    pub fits: BTreeMap<String, SlopeFit>,
    pub metrics: BTreeMap<String, f64>,
    pub inversions: BTreeMap<String, Vec<SlDiagnostics>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conservation: Option<ConservationReport>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    /// Names of the CSV files holding the time series.
    pub series_files: Vec<String>,
    #[serde(skip)]
    pub series: Vec<TimeSeries>,
}

impl ExperimentReport {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            version: crate::VERSION.into(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn push(&mut self, verdict: Verdict) {
        self.verdicts.push(verdict);
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    /// Human-readable summary, one verdict per line.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} experiment ({} {}, config {})\n",
            self.kind, "effpot", self.version, self.config_hash
        );
        if let Some(p) = self.slope {
            s += &format!("fitted slope: {p:.4}\n");
        }
        for (name, fit) in &self.fits {
            s += &format!(
                "fit {name}: slope {:.4} over t in [{:.3e}, {:.3e}] ({} points{})\n",
                fit.slope,
                fit.t_min,
                fit.t_max,
                fit.points,
                if fit.window_shrunk { ", window shrunk" } else { "" }
            );
        }
        for (name, value) in &self.metrics {
            s += &format!("{name}: {value:.6e}\n");
        }
        for note in &self.notes {
            s += &format!("note: {note}\n");
        }
        for v in &self.verdicts {
            s += &v.describe();
            s.push('\n');
        }
        s += if self.passed() { "RESULT: PASS\n" } else { "RESULT: FAIL\n" };
        s
    }
}
