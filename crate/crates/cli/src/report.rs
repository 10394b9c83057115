//! Evaluation reports and their on-disk forms.

use std::io::Write;
use std::path::Path;

use abbg_core::metrics::drop_percent;
use abbg_core::runner::SequenceResult;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Column order of `report.csv` after `name`.
pub const METRIC_COLUMNS: [&str; 10] = [
    "ao",
    "sr50",
    "sr75",
    "success_auc",
    "precision20",
    "eao",
    "accuracy",
    "robustness",
    "l1_mean",
    "ssim_percent",
];

/// Formats like C's `%.6g`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig6(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

/// One row of `report.csv`, also used for aggregates. The anchor-protocol
/// fields are absent under one-pass evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    pub success_auc: f64,
    pub precision20: f64,
    pub eao: Option<f64>,
    pub accuracy: Option<f64>,
    pub robustness: Option<f64>,
    pub l1_mean: f64,
    pub ssim_percent: f64,
}

impl Metrics {
    pub fn of(r: &SequenceResult) -> Self {
        Self {
            ao: r.ope.ao,
            sr50: r.ope.sr50,
            sr75: r.ope.sr75,
            success_auc: r.ope.success_auc,
            precision20: r.ope.precision20,
            eao: r.vot.map(|v| v.eao),
            accuracy: r.vot.map(|v| v.accuracy),
            robustness: r.vot.map(|v| v.robustness),
            l1_mean: r.perturbation.l1_mean,
            ssim_percent: r.perturbation.ssim_percent,
        }
    }

    /// Values in [`METRIC_COLUMNS`] order.
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            Some(self.ao),
            Some(self.sr50),
            Some(self.sr75),
            Some(self.success_auc),
            Some(self.precision20),
            self.eao,
            self.accuracy,
            self.robustness,
            Some(self.l1_mean),
            Some(self.ssim_percent),
        ]
    }

    /// Arithmetic mean of each column; an optional column is present only if
    /// every row has it.
    pub fn mean(rows: &[Metrics]) -> Self {
        let n = rows.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: fn(&Metrics) -> Option<f64>| {
            rows.iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / n)
        };
        Self {
            ao: avg(|m| m.ao),
            sr50: avg(|m| m.sr50),
            sr75: avg(|m| m.sr75),
            success_auc: avg(|m| m.success_auc),
            precision20: avg(|m| m.precision20),
            eao: avg_opt(|m| m.eao),
            accuracy: avg_opt(|m| m.accuracy),
            robustness: avg_opt(|m| m.robustness),
            l1_mean: avg(|m| m.l1_mean),
            ssim_percent: avg(|m| m.ssim_percent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub path: String,
    pub attack: String,
    pub aggregate: Metrics,
    /// Per metric, `100 * (baseline - this) / baseline`; empty when the
    /// baseline value is not positive.
    pub drop_percent: [Option<f64>; 10],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub attack: String,
    pub protocol: String,
    pub sequences: Vec<SequenceResult>,
    pub rows: Vec<Metrics>,
    pub aggregate: Metrics,
    pub baseline: Option<BaselineComparison>,
}

impl EvalReport {
    pub fn new(seed: u64, attack: &str, protocol: &str, sequences: Vec<SequenceResult>) -> Self {
        let rows: Vec<Metrics> = sequences.iter().map(Metrics::of).collect();
        let aggregate = Metrics::mean(&rows);
        Self {
            seed,
            attack: attack.into(),
            protocol: protocol.into(),
            sequences,
            rows,
            aggregate,
            baseline: None,
        }
    }

    pub fn compare_to(&mut self, path: &Path, baseline: &EvalReport) {
        let mut drops = [None; 10];
        let ours = self.aggregate.values();
        for (i, (b, a)) in baseline.aggregate.values().iter().zip(ours).enumerate() {
            if let (Some(b), Some(a)) = (*b, a) {
                drops[i] = drop_percent(b, a).ok();
            }
        }
        self.baseline = Some(BaselineComparison {
            path: path.display().to_string(),
            attack: baseline.attack.clone(),
            aggregate: baseline.aggregate,
            drop_percent: drops,
        });
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: not a report: {e}", path.display())))
    }

    /// `report.json` with every float rounded to 6 significant digits.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut v);
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn report_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["name"];
        header.extend(METRIC_COLUMNS);
        out.write_record(&header).expect("in-memory write");
        for (seq, row) in self.sequences.iter().zip(&self.rows) {
            let mut rec = vec![seq.name.clone()];
            rec.extend(row.values().iter().map(cell));
            out.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn summary_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["metric", "mean", "baseline", "drop_percent"])
            .expect("in-memory write");
        let ours = self.aggregate.values();
        for (i, name) in METRIC_COLUMNS.iter().enumerate() {
            let (base, drop) = match &self.baseline {
                Some(b) => (b.aggregate.values()[i], b.drop_percent[i]),
                None => (None, None),
            };
            out.write_record([name.to_string(), cell(&ours[i]), cell(&base), cell(&drop)])
                .expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("flush")).expect("utf-8")
    }
}

fn cell(v: &Option<f64>) -> String {
    v.map(fmt_sig6).unwrap_or_default()
}

fn round_floats(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = round_sig6(n.as_f64().expect("f64 number"));
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_floats),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    let io = |e: std::io::Error| CliError::data(format!("{}: {e}", target.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (0.123456789, "0.123457"),
            (123.4564, "123.456"),
            (999999.5, "1e+06"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (96.3215, "96.3215"),
            (2.0 / 3.0, "0.666667"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn mean_drops_partial_optionals() {
        let a = Metrics {
            ao: 0.5,
            eao: Some(0.2),
            ..Default::default()
        };
        let b = Metrics {
            ao: 1.0,
            ..Default::default()
        };
        let m = Metrics::mean(&[a, b]);
        assert_eq!(m.ao, 0.75);
        assert_eq!(m.eao, None);
        assert_eq!(Metrics::mean(&[a, a]).eao, Some(0.2));
    }

    #[test]
    fn json_floats_are_rounded() {
        let mut v = serde_json::json!({"a": 0.123456789, "b": [1.0, 7], "c": {"d": 2.0 / 3.0}});
        round_floats(&mut v);
        assert_eq!(v.to_string(), r#"{"a":0.123457,"b":[1.0,7],"c":{"d":0.666667}}"#);
    }
}
