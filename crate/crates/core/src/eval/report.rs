use super::{aggregate, EvalError, EvalReport, ScenarioOutcomes, Verdict};
use crate::scalar::Scalar;
use crate::scenarios::Scenario;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

/// Published per-scenario rates, in percent with at most one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRow {
    pub scenario: Scenario,
    pub acc: f64,
    pub r: f64,
    /// Defaults to `100 - acc - r`.
    #[serde(default)]
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTable {
    pub model: String,
    #[serde(default = "reported")]
    pub judge: String,
    pub rows: Vec<RateRow>,
}

fn reported() -> String {
    "reported".into()
}

/// Rates are expanded to verdict lists of this length.
const PER_MILLE: usize = 1000;

fn per_mille(scenario: Scenario, what: &str, pct: f64) -> Result<usize, EvalError> {
    let scaled = pct * 10.0;
    let rounded = scaled.round();
    if !pct.is_finite() || !(0.0..=100.0).contains(&pct) || (scaled - rounded).abs() > 1e-6 {
        return Err(EvalError::BadRate {
            scenario,
            message: format!("{what} = {pct} is not a percentage with one decimal"),
        });
    }
    Ok(rounded as usize)
}

impl RateTable {
    /// Expands each row into 1000 verdicts with the given proportions.
    pub fn to_outcomes<T>(&self) -> Result<Vec<ScenarioOutcomes<T>>, EvalError> {
        self.rows
            .iter()
            .map(|row| {
                let c = per_mille(row.scenario, "acc", row.acc)?;
                let r = per_mille(row.scenario, "r", row.r)?;
                let rest = PER_MILLE.checked_sub(c + r).ok_or_else(|| EvalError::BadRate {
                    scenario: row.scenario,
                    message: format!("acc + r = {} exceeds 100", row.acc + row.r),
                })?;
                let w = match row.w {
                    Some(w) => per_mille(row.scenario, "w", w)?,
                    None => rest,
                };
                if w != rest {
                    return Err(EvalError::BadRate { scenario: row.scenario, message: "w + acc + r != 100".into() });
                }
                let mut verdicts = vec![Verdict::Correct; c];
                verdicts.extend(std::iter::repeat_n(Verdict::Rejected, r));
                verdicts.extend(std::iter::repeat_n(Verdict::Wrong, w));
                Ok(ScenarioOutcomes::new(row.scenario, verdicts))
            })
            .collect()
    }

    pub fn to_report<T: Scalar>(&self) -> Result<EvalReport<T>, EvalError> {
        aggregate(&self.model, &self.judge, &self.to_outcomes()?)
    }
}

fn pct<T: Scalar>(x: &T) -> String {
    format!("{:.1}", x.to_f64_lossy() * 100.0)
}

/// Text table (one row per scenario plus an overall row) or pretty JSON.
pub fn render_report<T: Scalar + Serialize>(report: &EvalReport<T>, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let model = if report.model.trim().is_empty() { "(unnamed)" } else { report.model.as_str() };
            let mut out = String::new();
            writeln!(out, "model: {model}").unwrap();
            writeln!(out, "judge: {}", report.judge).unwrap();
            writeln!(
                out,
                "{:<10} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}",
                "scenario", "n", "ACC", "W", "R", "WSCORE", "RECALL"
            )
            .unwrap();
            for m in &report.scenarios {
                let recall = m.mean_recall.as_ref().map(pct).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{:<10} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}",
                    m.scenario.to_string(),
                    m.n,
                    pct(&m.acc),
                    pct(&m.w),
                    pct(&m.r),
                    pct(&m.wscore),
                    recall
                )
                .unwrap();
            }
            let overall = format!(
                "{:<10} {:>6} {:>6} {:>6} {:>6} {:>7}",
                "overall",
                "",
                pct(&report.overall_acc),
                "",
                "",
                pct(&report.overall_wscore)
            );
            writeln!(out, "{overall}").unwrap();
            out
        }
    }
}
