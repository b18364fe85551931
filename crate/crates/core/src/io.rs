//! Run artifacts: coefficient tables, manifests and validation reports.
//!
//! Numbers are written with the shortest representation that parses back
//! to the same `f64`, so a table read from disk equals the one written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisSet;
use crate::config::Config;
use crate::engine::{CoefficientTable, StepCoefficients, StepTiming};
use crate::error::{Error, Result};
use crate::ols::Coefficients;
use crate::oracle::OracleEstimate;
use crate::validation::ValidationReport;

pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const REPORT_FILE: &str = "validation_report.csv";
pub const HISTOGRAM_FILE: &str = "histograms.csv";
pub const ORACLE_FILE: &str = "oracle.csv";

/// Column order of the coefficient file: every label in order of first
/// appearance over `t = T-1, .., 1`.
fn label_union(steps: &[StepCoefficients]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for step in steps.iter().rev() {
        for label in &step.labels {
            if !labels.contains(label) {
                labels.push(label.clone());
            }
        }
    }
    labels
}

/// `t,target,<labels>` with one row per `t` and target `R`, `E`, `V`.
/// A cell is empty when the label is not part of the basis at that `t`.
pub fn coefficients_csv(table: &CoefficientTable) -> String {
    let columns = label_union(&table.steps);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "target".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for step in &table.steps {
        for (name, beta) in [("R", &step.beta_r), ("E", &step.beta_e), ("V", &step.beta_v)] {
            let mut row = vec![step.t.to_string(), name.to_string()];
            row.extend(columns.iter().map(|c| match step.labels.iter().position(|l| l == c) {
                Some(j) => beta.0[j].to_string(),
                None => String::new(),
            }));
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 output")
}

/// Reads back the per-time coefficients written by [`coefficients_csv`].
type LabeledRow = (Vec<String>, Vec<f64>);

pub fn parse_coefficients(text: &str) -> Result<Vec<StepCoefficients>> {
    let bad = |line: u64, msg: &str| Error::Config(format!("coefficients line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(1, &e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "t" || &header[1] != "target" {
        return Err(bad(1, "expected header `t,target,...`"));
    }
    let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut rows: BTreeMap<usize, [Option<LabeledRow>; 3]> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, &e.to_string())
        })?;
        let lineno = record.position().map_or(0, |p| p.line());
        let t: usize = record[0].parse().map_err(|_| bad(lineno, "invalid t"))?;
        let slot = match &record[1] {
            "R" => 0,
            "E" => 1,
            "V" => 2,
            _ => return Err(bad(lineno, "target must be R, E or V")),
        };
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (c, cell) in columns.iter().zip(record.iter().skip(2)) {
            if cell.is_empty() {
                continue;
            }
            labels.push(c.clone());
            values.push(cell.parse::<f64>().map_err(|_| bad(lineno, "invalid number"))?);
        }
        let entry = rows.entry(t).or_default();
        if entry[slot].replace((labels, values)).is_some() {
            return Err(bad(lineno, "duplicate row"));
        }
    }
    rows.into_iter()
        .map(|(t, [r, e, v])| {
            let missing = || Error::Config(format!("coefficients for t = {t} are incomplete"));
            let (labels, r) = r.ok_or_else(missing)?;
            let (le, e) = e.ok_or_else(missing)?;
            let (lv, v) = v.ok_or_else(missing)?;
            if le != labels || lv != labels {
                return Err(Error::Config(format!("coefficient rows at t = {t} use different labels")));
            }
            Ok(StepCoefficients {
                t,
                labels,
                beta_r: Coefficients(r),
                beta_e: Coefficients(e),
                beta_v: Coefficients(v),
            })
        })
        .collect()
}

/// Reorders parsed coefficients into the label order of `bases[t]`.
pub fn align_steps(steps: Vec<StepCoefficients>, bases: &[BasisSet]) -> Result<Vec<StepCoefficients>> {
    steps
        .into_iter()
        .map(|step| {
            let target = bases
                .get(step.t)
                .ok_or_else(|| Error::Mismatch(format!("no basis for t = {}", step.t)))?
                .labels();
            if target.len() != step.labels.len() {
                return Err(Error::Mismatch(format!("basis labels differ at t = {}", step.t)));
            }
            let order = target
                .iter()
                .map(|l| step.labels.iter().position(|x| x == l))
                .collect::<Option<Vec<usize>>>()
                .ok_or_else(|| Error::Mismatch(format!("basis labels differ at t = {}", step.t)))?;
            let pick = |c: &Coefficients| Coefficients(order.iter().map(|&j| c.0[j]).collect());
            Ok(StepCoefficients {
                t: step.t,
                labels: target.to_vec(),
                beta_r: pick(&step.beta_r),
                beta_e: pick(&step.beta_e),
                beta_v: pick(&step.beta_v),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct HashInput<'a> {
    config_model: &'a crate::config::ModelSpec,
    horizon: usize,
    alpha: f64,
    eta: f64,
    labels: Vec<&'a [String]>,
}

/// Fingerprint of everything a coefficient table depends on besides the
/// simulation: the model, horizon, risk parameters and basis labels.
pub fn basis_hash(config: &Config, bases: &[BasisSet]) -> String {
    let input = HashInput {
        config_model: &config.model,
        horizon: config.run.horizon,
        alpha: config.run.alpha,
        eta: config.run.eta,
        labels: bases.iter().skip(1).map(|b| b.labels()).collect(),
    };
    let bytes = serde_json::to_vec(&input).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: serde_json::Value,
    /// Strikes used by the life basis, empty for other models.
    pub strikes: Vec<f64>,
    pub basis_hash: String,
    pub horizon: usize,
    pub eta: f64,
    pub seed: u64,
    pub r0: f64,
    pub e0: f64,
    pub v0: f64,
}

impl Manifest {
    pub fn new(config: &Config, bases: &[BasisSet], strikes: &[f64], table: &CoefficientTable) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).expect("serializable"),
            strikes: strikes.to_vec(),
            basis_hash: basis_hash(config, bases),
            horizon: table.horizon,
            eta: table.eta,
            seed: table.seed,
            r0: table.r0,
            e0: table.e0,
            v0: table.v0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Rebuilds the coefficient table from the manifest and the parsed rows.
    pub fn table(&self, steps: Vec<StepCoefficients>) -> Result<CoefficientTable> {
        let expected: Vec<usize> = (1..self.horizon).collect();
        let got: Vec<usize> = steps.iter().map(|s| s.t).collect();
        if expected != got {
            return Err(Error::Mismatch(format!(
                "coefficient file covers t = {got:?}, manifest expects {expected:?}"
            )));
        }
        Ok(CoefficientTable {
            horizon: self.horizon,
            eta: self.eta,
            seed: self.seed,
            steps,
            r0: self.r0,
            e0: self.e0,
            v0: self.v0,
        })
    }
}

#[derive(Serialize)]
struct Timings<'a> {
    steps: &'a [StepTiming],
    total_seconds: f64,
}

pub fn timings_json(timings: &[StepTiming]) -> String {
    let total_seconds = timings.iter().map(|t| t.seconds).sum();
    let mut s = serde_json::to_string_pretty(&Timings {
        steps: timings,
        total_seconds,
    })
    .expect("serializable");
    s.push('\n');
    s
}

/// `t,stat,value_r,value_e,value_v,lo,hi`.
pub fn report_csv(report: &ValidationReport) -> String {
    let mut out = String::from("t,stat,value_r,value_e,value_v,lo,hi\n");
    for r in &report.per_time {
        let t = r.t;
        writeln!(out, "{t},rmse,{},{},{},,", r.rmse.r, r.rmse.e, r.rmse.v).unwrap();
        writeln!(out, "{t},nrmse,{},{},{},,", r.nrmse.r, r.nrmse.e, r.nrmse.v).unwrap();
        writeln!(out, "{t},andp_band,,,,{},{}", r.andp_band.0, r.andp_band.1).unwrap();
        writeln!(out, "{t},one_minus_andp_band,,,,{},{}", r.default_band.0, r.default_band.1).unwrap();
        writeln!(out, "{t},aroc_band,,,,{},{}", r.aroc_band.0, r.aroc_band.1).unwrap();
    }
    out
}

/// `t,series,bin_lower_edge,count` for the `andp` and `aroc` samples.
pub fn histograms_csv(report: &ValidationReport) -> String {
    let mut out = String::from("t,series,bin_lower_edge,count\n");
    for r in &report.per_time {
        for (series, bins) in [("andp", &r.andp_histogram), ("aroc", &r.aroc_histogram)] {
            for (edge, count) in bins {
                writeln!(out, "{},{series},{edge},{count}", r.t).unwrap();
            }
        }
    }
    out
}

pub fn oracle_csv(estimate: &OracleEstimate) -> String {
    format!(
        "value,standard_error,method\n{},{},{}\n",
        estimate.value, estimate.standard_error, estimate.method
    )
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CoefficientTable {
        let step = |t: usize, labels: &[&str], base: f64| {
            let k = labels.len();
            StepCoefficients {
                t,
                labels: labels.iter().map(|s| s.to_string()).collect(),
                beta_r: Coefficients((0..k).map(|j| base + j as f64 / 3.0).collect()),
                beta_e: Coefficients((0..k).map(|j| -base * 1e-17 * j as f64).collect()),
                beta_v: Coefficients((0..k).map(|j| 0.1 * (j as f64 + base)).collect()),
            }
        };
        CoefficientTable {
            horizon: 3,
            eta: 0.06,
            seed: 1,
            steps: vec![step(1, &["1", "L", "L^2"], 1.5), step(2, &["1", "L", "sigma", "L^2"], -2.0)],
            r0: 1.0,
            e0: 0.5,
            v0: 1.0 - 0.5 / 1.06,
        }
    }

    #[test]
    fn coefficients_round_trip_exactly() {
        let t = table();
        let text = coefficients_csv(&t);
        assert!(text.starts_with("t,target,1,L,sigma,L^2\n"), "{text}");
        assert!(text.contains("\n1,R,1.5,1.8333333333333333,,2.1666666666666665\n"), "{text}");
        assert_eq!(text.lines().count(), 7);
        let steps = parse_coefficients(&text).unwrap();
        assert_eq!(steps, t.steps);
    }

    #[test]
    fn alignment_permutes_to_basis_order() {
        let labels = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let bases = vec![
            BasisSet::custom(0, Vec::new(), |_, _| {}),
            BasisSet::custom(1, labels(&["a", "b"]), |_, _| {}),
        ];
        let step = StepCoefficients {
            t: 1,
            labels: labels(&["b", "1", "a"]),
            beta_r: Coefficients(vec![3.0, 1.0, 2.0]),
            beta_e: Coefficients(vec![6.0, 4.0, 5.0]),
            beta_v: Coefficients(vec![9.0, 7.0, 8.0]),
        };
        let aligned = align_steps(vec![step.clone()], &bases).unwrap();
        assert_eq!(aligned[0].labels, labels(&["1", "a", "b"]));
        assert_eq!(aligned[0].beta_r.0, vec![1.0, 2.0, 3.0]);
        assert_eq!(aligned[0].beta_v.0, vec![7.0, 8.0, 9.0]);
        let mut wrong = step;
        wrong.labels = labels(&["b", "1", "c"]);
        assert!(matches!(align_steps(vec![wrong], &bases), Err(Error::Mismatch(_))));
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        let mut t = table();
        t.steps[1].labels[2] = "C(F,S*,T)".to_string();
        let text = coefficients_csv(&t);
        assert!(text.contains("\"C(F,S*,T)\""), "{text}");
        assert_eq!(parse_coefficients(&text).unwrap(), t.steps);
    }

    #[test]
    fn malformed_coefficients() {
        assert!(parse_coefficients("").is_err());
        assert!(parse_coefficients("a,b\n").is_err());
        assert!(parse_coefficients("t,target,1\n1,R,2\n1,E,1\n").is_err());
        assert!(parse_coefficients("t,target,1\n1,Q,2\n").is_err());
        assert!(parse_coefficients("t,target,1\n1,R,x\n").is_err());
        assert!(parse_coefficients("t,target,1\n1,R,1\n1,R,1\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let config = Config::from_toml("[model]\ntype = \"ar-garch\"\n[run]\nT = 3\n").unwrap();
        let model = config.build_model().unwrap();
        let bases = crate::basis::bases_for(&model, &[]).unwrap();
        let t = table();
        let m = Manifest::new(&config, &bases, &[], &t);
        let back = Manifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.table(t.steps.clone()).unwrap(), t);
        assert!(back.table(t.steps[..1].to_vec()).is_err());
        assert!(!m.to_json().contains("threads"));
    }

    #[test]
    fn hash_tracks_model_and_labels() {
        let a = Config::from_toml("[model]\ntype = \"ar-garch\"\n").unwrap();
        let b = Config::from_toml("[model]\ntype = \"ar-garch\"\nalpha1 = 0.9\n").unwrap();
        let bases_a = crate::basis::bases_for(&a.build_model().unwrap(), &[]).unwrap();
        let bases_b = crate::basis::bases_for(&b.build_model().unwrap(), &[]).unwrap();
        assert_eq!(basis_hash(&a, &bases_a), basis_hash(&a, &bases_a));
        assert_ne!(basis_hash(&a, &bases_a), basis_hash(&b, &bases_b));
        assert_eq!(basis_hash(&a, &bases_a).len(), 64);
    }

    #[test]
    fn oracle_row() {
        let e = OracleEstimate {
            value: 0.25,
            standard_error: 0.0,
            method: crate::oracle::OracleMethod::ClosedForm,
        };
        assert_eq!(oracle_csv(&e), "value,standard_error,method\n0.25,0,closed-form\n");
    }
}
