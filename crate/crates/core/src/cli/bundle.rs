//! JSON artifacts written by the command-line front end.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::problem::{rows, to_mat, RowMatrix, SCHEMA_VERSION};
use crate::dar::ScheduledGain;
use crate::numerics::Mat;
use crate::sdp::{SolveStatus, SolverStats};
use crate::simulate::{AuditReport, L2Report};
use crate::synthesis::{BetaOutcome, CertificateVars, Diagnostics, Mode, SynthesisResult};

/// Rounds to 15 significant digits.
pub fn round15(v: f64) -> f64 {
    if v.is_finite() {
        format!("{v:.14e}").parse().expect("formatted float parses")
    } else {
        v
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .and_then(|f| serde_json::Number::from_f64(round15(f)))
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 15 significant digits.
pub fn to_json15(value: &impl Serialize) -> String {
    let mut v = serde_json::to_value(value).expect("artifacts always serialize");
    round_value(&mut v);
    serde_json::to_string_pretty(&v).expect("values always serialize")
}

fn out(m: &Mat) -> RowMatrix {
    rows(m)
        .into_iter()
        .map(|r| r.into_iter().map(round15).collect())
        .collect()
}

fn back(name: &str, m: &RowMatrix) -> Result<Mat, String> {
    to_mat(name, m, (0, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateOut {
    /// Physical state dimension; `P` may be larger (lifted storage).
    pub n: usize,
    #[serde(rename = "P")]
    pub p: RowMatrix,
    #[serde(rename = "R")]
    pub r: RowMatrix,
    #[serde(rename = "L")]
    pub l: RowMatrix,
    #[serde(rename = "H")]
    pub h: Vec<RowMatrix>,
    #[serde(rename = "Q")]
    pub q: Vec<RowMatrix>,
    #[serde(rename = "S")]
    pub s: Vec<RowMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOut {
    pub worst_lmi_eigenvalue: f64,
    pub solver: Value,
    pub beta_search: Vec<BetaOutcome>,
    /// Certificate re-verification, kernel sampling and frozen-parameter
    /// eigenvalue checks.
    pub checks: Value,
}

/// Output of `synth` / `synth-l2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub kind: String,
    pub problem: String,
    pub problem_path: String,
    pub mode: Mode,
    pub status: SolveStatus,
    pub beta: f64,
    pub eps: f64,
    pub gamma: Option<f64>,
    /// Parameter-box vertices in the order of `gains`.
    pub vertices: Vec<Vec<f64>>,
    pub gains: Vec<RowMatrix>,
    pub certificate: CertificateOut,
    pub diagnostics: DiagnosticsOut,
    pub files: Vec<String>,
}

impl ResultBundle {
    pub const KIND: &'static str = "synthesis";

    pub fn new(
        problem: String,
        problem_path: String,
        vertices: Vec<Vec<f64>>,
        result: &SynthesisResult,
        checks: Value,
    ) -> Self {
        let c = &result.certificate;
        let d = &result.diagnostics;
        ResultBundle {
            schema_version: SCHEMA_VERSION,
            kind: Self::KIND.into(),
            problem,
            problem_path,
            mode: result.mode,
            status: d.status,
            beta: d.beta,
            eps: d.eps,
            gamma: result.gamma.map(round15),
            vertices,
            gains: result.gains.gains.iter().map(out).collect(),
            certificate: CertificateOut {
                n: c.n,
                p: out(&c.p),
                r: out(&c.r),
                l: out(&c.l),
                h: c.h.iter().map(out).collect(),
                q: c.q.iter().map(out).collect(),
                s: c.s.iter().map(out).collect(),
            },
            diagnostics: DiagnosticsOut {
                worst_lmi_eigenvalue: round15(d.worst_lmi_eigenvalue),
                solver: serde_json::to_value(&d.solver).unwrap_or(Value::Null),
                beta_search: d.beta_search.clone(),
                checks,
            },
            files: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let bundle: ResultBundle = serde_path_to_error::deserialize(de)
            .map_err(|e| format!("at `{}`: {}", e.path(), e.inner()))?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {}",
                bundle.schema_version
            ));
        }
        if bundle.kind != Self::KIND {
            return Err(format!(
                "expected a synthesis result, found kind `{}`",
                bundle.kind
            ));
        }
        Ok(bundle)
    }

    pub fn to_json(&self) -> String {
        to_json15(self)
    }

    pub fn gains(&self) -> Result<ScheduledGain, String> {
        self.gains
            .iter()
            .enumerate()
            .map(|(i, k)| back(&format!("gains[{i}]"), k))
            .collect::<Result<Vec<_>, _>>()
            .map(ScheduledGain::new)
    }

    /// Rebuilds the synthesis result for re-verification and audits. Solver
    /// statistics are not restored.
    pub fn to_result(&self) -> Result<SynthesisResult, String> {
        let c = &self.certificate;
        let many = |name: &str, ms: &[RowMatrix]| {
            ms.iter()
                .enumerate()
                .map(|(i, m)| back(&format!("{name}[{i}]"), m))
                .collect::<Result<Vec<_>, _>>()
        };
        let certificate = CertificateVars {
            n: c.n,
            p: back("P", &c.p)?,
            h: many("H", &c.h)?,
            q: many("Q", &c.q)?,
            s: many("S", &c.s)?,
            r: back("R", &c.r)?,
            l: back("L", &c.l)?,
            gamma: self.gamma,
        };
        Ok(SynthesisResult {
            mode: self.mode,
            certificate,
            gains: self.gains()?,
            gamma: self.gamma,
            diagnostics: Diagnostics {
                status: self.status,
                beta: self.beta,
                eps: self.eps,
                worst_lmi_eigenvalue: self.diagnostics.worst_lmi_eigenvalue,
                solver: SolverStats::default(),
                beta_search: self.diagnostics.beta_search.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCheck {
    pub v0: f64,
    pub max_increase: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub schema_version: u32,
    pub kind: String,
    pub problem: String,
    pub problem_path: String,
    pub result_path: String,
    pub csv: String,
    pub mode: Mode,
    pub gamma: Option<f64>,
    pub samples: usize,
    pub t_end: f64,
    pub dt: f64,
    pub final_state_norm: f64,
    pub max_algebraic_residual: f64,
    /// Only evaluated when the disturbance is identically zero.
    pub v_non_increasing: Option<MonotonicityCheck>,
    pub dissipation_audit: Option<AuditReport>,
    pub l2: Option<L2Report>,
    pub l2_dissipation_audit: Option<AuditReport>,
    pub passed: bool,
}

impl SimulationSummary {
    pub const KIND: &'static str = "simulation";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub problem: String,
    pub gamma: Option<f64>,
    pub gains: Option<Value>,
    /// Conjunction of every `passed` flag in the merged artifacts.
    pub passed: bool,
    pub synthesis: Vec<Value>,
    pub simulation: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    pub entries: Vec<ReportEntry>,
}

fn all_passed(v: &Value) -> bool {
    match v {
        Value::Object(map) => map.iter().all(|(k, v)| {
            if k == "passed" {
                v.as_bool().unwrap_or(true)
            } else {
                all_passed(v)
            }
        }),
        Value::Array(items) => items.iter().all(all_passed),
        _ => true,
    }
}

/// Groups synthesis and simulation artifacts by problem name, keeping the
/// order in which problems first appear.
pub fn merge(docs: Vec<(String, Value)>) -> Result<Report, String> {
    if docs.is_empty() {
        return Err("no input files".into());
    }
    let mut version = None;
    let mut entries: Vec<ReportEntry> = Vec::new();
    for (source, doc) in docs {
        let v = doc
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| format!("{source}: missing schema_version"))?;
        match version {
            None => version = Some(v),
            Some(prev) if prev != v => {
                return Err(format!(
                    "{source}: schema_version {v} conflicts with {prev}"
                ))
            }
            _ => {}
        }
        if v != u64::from(SCHEMA_VERSION) {
            return Err(format!("{source}: unsupported schema_version {v}"));
        }
        let problem = doc
            .get("problem")
            .and_then(Value::as_str)
            .ok_or_else(|| format!("{source}: missing problem name"))?
            .to_string();
        let kind = doc
            .get("kind")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let idx = match entries.iter().position(|e| e.problem == problem) {
            Some(i) => i,
            None => {
                entries.push(ReportEntry {
                    problem: problem.clone(),
                    gamma: None,
                    gains: None,
                    passed: true,
                    synthesis: Vec::new(),
                    simulation: Vec::new(),
                });
                entries.len() - 1
            }
        };
        let entry = &mut entries[idx];
        entry.passed &= all_passed(&doc);
        match kind.as_str() {
            ResultBundle::KIND => {
                entry.gamma = doc.get("gamma").and_then(Value::as_f64);
                entry.gains = doc.get("gains").cloned();
                entry.synthesis.push(doc);
            }
            SimulationSummary::KIND => entry.simulation.push(doc),
            other => return Err(format!("{source}: unknown artifact kind `{other}`")),
        }
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        kind: "report".into(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding_keeps_fifteen_digits() {
        assert_eq!(round15(1.0 / 3.0), 0.333333333333333);
        assert_eq!(round15(round15(2.0f64.sqrt())), round15(2.0f64.sqrt()));
        assert!(round15(f64::NAN).is_nan());
        let text = to_json15(&json!({"a": [0.1 + 0.2, 3], "b": {"c": 1.0 / 7.0}}));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"][0].as_f64(), Some(0.3));
        assert_eq!(v["a"][1].as_u64(), Some(3));
        assert_eq!(v["b"]["c"].as_f64(), Some(0.142857142857143));
    }

    #[test]
    fn merge_groups_by_problem() {
        let synth = json!({"schema_version": 1, "kind": "synthesis", "problem": "a", "gamma": 1.5, "gains": [[[1.0]]]});
        let sim =
            json!({"schema_version": 1, "kind": "simulation", "problem": "a", "passed": false});
        let other = json!({"schema_version": 1, "kind": "synthesis", "problem": "b", "gamma": 2.0, "gains": []});
        let report = merge(vec![
            ("s".into(), synth),
            ("m".into(), sim),
            ("o".into(), other),
        ])
        .unwrap();
        assert_eq!(report.entries.len(), 2);
        assert_eq!(report.entries[0].gamma, Some(1.5));
        assert!(!report.entries[0].passed);
        assert!(report.entries[1].passed);
    }

    #[test]
    fn merge_rejects_conflicts_and_empty_input() {
        assert!(merge(vec![]).is_err());
        let a = json!({"schema_version": 1, "kind": "synthesis", "problem": "a"});
        let b = json!({"schema_version": 2, "kind": "synthesis", "problem": "a"});
        assert!(merge(vec![("a".into(), a), ("b".into(), b)])
            .unwrap_err()
            .contains("conflicts"));
    }
}
