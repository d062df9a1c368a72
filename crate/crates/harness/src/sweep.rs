//! One evaluation per value of a single configuration axis.

use std::io::Write;
use std::str::FromStr;

use rem_core::Measurement;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::eval::{check_split, monte_carlo_eval, report_for, EvalConfig, EvaluationReport, Method, Mode, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "M")]
    M,
    #[serde(rename = "R")]
    R,
    #[serde(rename = "method")]
    Method,
    #[serde(rename = "altitude_campaign")]
    AltitudeCampaign,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "M",
            SweepAxis::R => "R",
            SweepAxis::Method => "method",
            SweepAxis::AltitudeCampaign => "altitude_campaign",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::M, SweepAxis::R, SweepAxis::Method, SweepAxis::AltitudeCampaign]
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Validation(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    M(usize),
    R(f64),
    Method(Method, Mode),
    /// A named test campaign, typically one flight altitude.
    Campaign { name: String, measurements: Vec<Measurement> },
}

impl SweepValue {
    pub fn axis(&self) -> SweepAxis {
        match self {
            SweepValue::M(_) => SweepAxis::M,
            SweepValue::R(_) => SweepAxis::R,
            SweepValue::Method(..) => SweepAxis::Method,
            SweepValue::Campaign { .. } => SweepAxis::AltitudeCampaign,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepValue::M(m) => m.to_string(),
            SweepValue::R(r) => r.to_string(),
            SweepValue::Method(m, Mode::Baseline) => m.to_string(),
            SweepValue::Method(m, mode) => format!("{m}/{mode}"),
            SweepValue::Campaign { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: String,
    pub report: EvaluationReport,
}

/// Evaluates `base` once per value. Every value shares the base seed, so
/// iteration `k` draws from the same RNG stream across values and the
/// comparison is paired.
pub fn sweep(base: &EvalConfig, train: &[Measurement], test: &[Measurement], values: &[SweepValue]) -> Result<Vec<SweepPoint>> {
    let Some(first) = values.first() else {
        return Ok(Vec::new());
    };
    if values.iter().any(|v| v.axis() != first.axis()) {
        return Err(HarnessError::Validation("sweep values must all belong to one axis".into()));
    }
    let env = base.environment.build()?;
    let warnings = check_split(train, test)?;
    let mut shared: Option<TrainedModel> = None;
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        let report = match v {
            SweepValue::M(m) => {
                cfg.m_samples = *m;
                cfg.validate(test.len())?;
                let trained = match &shared {
                    Some(t) => t,
                    None => shared.insert(TrainedModel::fit(&cfg, &env, train)?),
                };
                with_warnings(report_for(&cfg, &env, trained, test)?, &warnings)
            }
            SweepValue::R(r) => {
                cfg.radius_m = *r;
                cfg.validate(test.len())?;
                let trained = match &shared {
                    Some(t) => t,
                    None => shared.insert(TrainedModel::fit(&cfg, &env, train)?),
                };
                with_warnings(report_for(&cfg, &env, trained, test)?, &warnings)
            }
            SweepValue::Method(m, mode) => {
                cfg.method = *m;
                cfg.mode = *mode;
                monte_carlo_eval(&cfg, train, test)?
            }
            SweepValue::Campaign { name, measurements } => {
                cfg.test_campaign = Some(name.into());
                monte_carlo_eval(&cfg, train, &measurements[..])?
            }
        };
        out.push(SweepPoint { axis: v.axis(), value: v.label(), report });
    }
    Ok(out)
}

fn with_warnings(mut report: EvaluationReport, warnings: &[String]) -> EvaluationReport {
    report.warnings.extend_from_slice(warnings);
    report
}

/// Long-format rows: one `median` row per value, one `iteration` row per
/// iteration and one `elevation` row per non-empty elevation bin.
pub fn write_sweep_csv<W: Write>(writer: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["axis", "value", "method", "mode", "m_samples", "radius_m", "statistic", "index", "rmse_db"])?;
    for p in points {
        let c = &p.report.config;
        let base = [
            p.axis.name().to_string(),
            p.value.clone(),
            c.method.to_string(),
            c.mode.to_string(),
            c.m_samples.to_string(),
            c.radius_m.to_string(),
        ];
        let mut row = |stat: &str, index: String, v: f64| -> Result<()> {
            let mut rec: Vec<String> = base.to_vec();
            rec.extend([stat.to_string(), index, v.to_string()]);
            Ok(w.write_record(&rec)?)
        };
        row("median", String::new(), p.report.median_rmse)?;
        for (k, r) in p.report.rmse.iter().enumerate() {
            row("iteration", k.to_string(), *r)?;
        }
        for b in &p.report.elevation {
            if let Some(m) = b.median_rmse {
                row("elevation", b.center_deg.to_string(), m)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
