//! Problem file: one JSON document holding the DAR, the parameter box and
//! optional synthesis and simulation settings.

use serde::{Deserialize, Serialize};

use crate::dar::{AffineParamMatrix, DarDims, DarSystem};
use crate::numerics::Mat;
use crate::param_domain::ParameterBox;
use crate::simulate::{Integrator, Signal, SignalSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Row-major nested array. An empty array stands for the zero matrix of the
/// declared shape.
pub type RowMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dims: DarDims,
    pub parameter_box: BoxSpec,
    pub matrices: Matrices,
    pub upsilon: Upsilon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrices {
    #[serde(rename = "A1")]
    pub a1: RowMatrix,
    #[serde(rename = "A2")]
    pub a2: RowMatrix,
    #[serde(rename = "A3")]
    pub a3: RowMatrix,
    #[serde(rename = "A4")]
    pub a4: RowMatrix,
    #[serde(rename = "B1")]
    pub b1: RowMatrix,
    #[serde(rename = "B2")]
    pub b2: RowMatrix,
    #[serde(rename = "B3")]
    pub b3: RowMatrix,
    #[serde(rename = "B4")]
    pub b4: RowMatrix,
    #[serde(rename = "C1")]
    pub c1: RowMatrix,
    #[serde(rename = "C2")]
    pub c2: RowMatrix,
    #[serde(rename = "C3")]
    pub c3: RowMatrix,
}

/// `const + sum_k rho_k coeffs[k]`; an empty `coeffs` list means no
/// parameter dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    #[serde(rename = "const")]
    pub constant: RowMatrix,
    #[serde(default)]
    pub coeffs: Vec<RowMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Upsilon {
    #[serde(rename = "U1")]
    pub u1: AffineSpec,
    #[serde(rename = "U2")]
    pub u2: AffineSpec,
    #[serde(rename = "U3")]
    pub u3: AffineSpec,
    #[serde(rename = "U4")]
    pub u4: AffineSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeSpec {
    Minimize,
    Fixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_mode: Option<GammaModeSpec>,
    /// Used when `gamma_mode` is `fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// One primitive for every component, or one per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalField {
    Uniform(SignalSpec),
    PerComponent(Vec<SignalSpec>),
}

impl SignalField {
    pub fn specs(&self) -> Vec<&SignalSpec> {
        match self {
            SignalField::Uniform(s) => vec![s],
            SignalField::PerComponent(v) => v.iter().collect(),
        }
    }

    pub fn to_signal(&self, dim: usize) -> Result<Signal, String> {
        for spec in self.specs() {
            spec.validate()?;
        }
        match self {
            SignalField::Uniform(s) => Ok(Signal::from_spec(s, dim)),
            SignalField::PerComponent(v) if v.len() == dim => Ok(Signal::from_components(v)),
            SignalField::PerComponent(v) => Err(format!(
                "signal lists {} components, expected {dim}",
                v.len()
            )),
        }
    }

    /// Replaces the seed of every seeded-noise primitive.
    pub fn reseed(&mut self, seed: u64) {
        let specs: Vec<&mut SignalSpec> = match self {
            SignalField::Uniform(s) => vec![s],
            SignalField::PerComponent(v) => v.iter_mut().collect(),
        };
        for spec in specs {
            if let SignalSpec::SeededNoise { seed: s, .. } = spec {
                *s = seed;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    /// Defaults to the centre of the parameter box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_signal: Option<SignalField>,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_signal: Option<SignalField>,
}

/// Parse failure with the JSON path and position of the offending value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "line {}, column {}, at `{}`: {}",
            self.line, self.column, self.path, self.message
        )
    }
}

impl std::error::Error for ParseError {}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| ParseError {
            path: e.path().to_string(),
            line: e.inner().line(),
            column: e.inner().column(),
            message: e.inner().to_string(),
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ParseError {
                path: "schema_version".into(),
                line: 0,
                column: 0,
                message: format!(
                    "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                    file.schema_version
                ),
            });
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    /// Builds the DAR without checking it against `dims`; ragged arrays and
    /// a malformed parameter box are reported here, everything else by
    /// [`DarSystem::validate`].
    pub fn to_dar(&self) -> Result<DarSystem, Vec<String>> {
        let d = self.dims;
        let mut errors = Vec::new();
        let mx = &self.matrices;
        let mut mat = |name: &str, rows: &RowMatrix, shape: (usize, usize)| {
            to_mat(name, rows, shape).unwrap_or_else(|e| {
                errors.push(e);
                Mat::zeros(shape.0, shape.1)
            })
        };
        let a1 = mat("A1", &mx.a1, (d.n, d.n));
        let a2 = mat("A2", &mx.a2, (d.n, d.n_pi));
        let a3 = mat("A3", &mx.a3, (d.n, d.m));
        let a4 = mat("A4", &mx.a4, (d.n, d.q));
        let b1 = mat("B1", &mx.b1, (d.l, d.n));
        let b2 = mat("B2", &mx.b2, (d.l, d.n_pi));
        let b3 = mat("B3", &mx.b3, (d.l, d.m));
        let b4 = mat("B4", &mx.b4, (d.l, d.q));
        let c1 = mat("C1", &mx.c1, (d.p, d.n));
        let c2 = mat("C2", &mx.c2, (d.p, d.n_pi));
        let c3 = mat("C3", &mx.c3, (d.p, d.q));
        let mut affine = |name: &str, spec: &AffineSpec, cols: usize| {
            let shape = (d.n_pi, cols);
            let constant = mat(name, &spec.constant, shape);
            let coeffs = if spec.coeffs.is_empty() {
                vec![Mat::zeros(shape.0, shape.1); d.r]
            } else {
                spec.coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| mat(&format!("{name}.coeffs[{k}]"), c, shape))
                    .collect()
            };
            AffineParamMatrix::new(constant, coeffs)
        };
        let ups1 = affine("U1", &self.upsilon.u1, d.n);
        let ups2 = affine("U2", &self.upsilon.u2, d.n_pi);
        let ups3 = affine("U3", &self.upsilon.u3, d.m);
        let ups4 = affine("U4", &self.upsilon.u4, d.q);
        let bounds = ParameterBox::new(
            self.parameter_box.lower.clone(),
            self.parameter_box.upper.clone(),
        );
        let bounds = match bounds {
            Ok(b) => Some(b),
            Err(e) => {
                errors.push(format!("parameter_box: {e}"));
                None
            }
        };
        match bounds {
            Some(bounds) if errors.is_empty() => Ok(DarSystem {
                dims: d,
                a1,
                a2,
                a3,
                a4,
                b1,
                b2,
                b3,
                b4,
                c1,
                c2,
                c3,
                ups1,
                ups2,
                ups3,
                ups4,
                bounds,
            }),
            _ => Err(errors),
        }
    }

    /// Serializable form of a DAR; every matrix is written out in full.
    pub fn from_dar(dar: &DarSystem, name: Option<String>) -> Self {
        let affine = |m: &AffineParamMatrix| AffineSpec {
            constant: rows(&m.constant),
            coeffs: m.coeffs.iter().map(rows).collect(),
        };
        ProblemFile {
            schema_version: SCHEMA_VERSION,
            name,
            dims: dar.dims,
            parameter_box: BoxSpec {
                lower: dar.bounds.lower().to_vec(),
                upper: dar.bounds.upper().to_vec(),
            },
            matrices: Matrices {
                a1: rows(&dar.a1),
                a2: rows(&dar.a2),
                a3: rows(&dar.a3),
                a4: rows(&dar.a4),
                b1: rows(&dar.b1),
                b2: rows(&dar.b2),
                b3: rows(&dar.b3),
                b4: rows(&dar.b4),
                c1: rows(&dar.c1),
                c2: rows(&dar.c2),
                c3: rows(&dar.c3),
            },
            upsilon: Upsilon {
                u1: affine(&dar.ups1),
                u2: affine(&dar.ups2),
                u3: affine(&dar.ups3),
                u4: affine(&dar.ups4),
            },
            synthesis: None,
            simulation: None,
        }
    }
}

pub fn rows(m: &Mat) -> RowMatrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Converts a nested array; `[]` yields zeros of `shape`.
pub fn to_mat(name: &str, rows: &RowMatrix, shape: (usize, usize)) -> Result<Mat, String> {
    if rows.is_empty() {
        return Ok(Mat::zeros(shape.0, shape.1));
    }
    let cols = rows[0].len();
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!(
            "{name} is ragged: row {} has {} entries, row 1 has {cols}",
            k + 1,
            r.len()
        ));
    }
    Ok(Mat::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example_1, example_2};

    #[test]
    fn dar_round_trip() {
        for dar in [example_1(), example_2()] {
            let file = ProblemFile::from_dar(&dar, Some("x".into()));
            let parsed = ProblemFile::parse(&file.to_json()).unwrap();
            assert_eq!(parsed, file);
            assert_eq!(parsed.to_dar().unwrap(), dar);
        }
    }

    #[test]
    fn empty_arrays_take_declared_shape() {
        let mut file = ProblemFile::from_dar(&example_1(), None);
        file.matrices.b2 = vec![];
        file.upsilon.u3 = AffineSpec {
            constant: vec![],
            coeffs: vec![],
        };
        let dar = file.to_dar().unwrap();
        assert_eq!(dar, example_1());
    }

    #[test]
    fn ragged_rows_and_bad_box_reported() {
        let mut file = ProblemFile::from_dar(&example_1(), None);
        file.matrices.a1 = vec![vec![1.0, 2.0], vec![3.0]];
        file.parameter_box.upper = vec![-2.0];
        let errors = file.to_dar().unwrap_err();
        assert_eq!(errors.len(), 2);
        assert!(errors[0].contains("A1 is ragged"));
        assert!(errors[1].contains("DegenerateInterval"));
    }

    #[test]
    fn truncated_matrix_fails_validation() {
        let mut file = ProblemFile::from_dar(&example_1(), None);
        for row in &mut file.matrices.a2 {
            row.pop();
        }
        let report = file.to_dar().unwrap().validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("A2 cols") && v.contains("n_pi")));
    }

    #[test]
    fn parse_errors_carry_position() {
        let mut file = ProblemFile::from_dar(&example_1(), None);
        file.matrices.a1[0][0] = 123.5;
        let text = file.to_json().replace("123.5", "\"abc\"");
        let err = ProblemFile::parse(&text).unwrap_err();
        assert!(err.path.starts_with("matrices.A1"), "{err}");
        assert!(err.line > 1);

        let text = file.to_json().replace("123.5", "1.2.3");
        assert!(ProblemFile::parse(&text).is_err());

        let text = file
            .to_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert_eq!(
            ProblemFile::parse(&text).unwrap_err().path,
            "schema_version"
        );
    }

    #[test]
    fn signal_fields() {
        let f: SignalField = serde_json::from_str(r#"{"kind": "constant", "value": 2.0}"#).unwrap();
        assert_eq!(f.to_signal(2).unwrap().sample(0.0), vec![2.0, 2.0]);
        let mut f: SignalField = serde_json::from_str(
            r#"[{"kind": "zero"}, {"kind": "seeded_noise", "band": 3.0, "rms": 1.0}]"#,
        )
        .unwrap();
        assert!(f.to_signal(3).is_err());
        f.reseed(42);
        match &f {
            SignalField::PerComponent(v) => {
                assert!(matches!(v[1], SignalSpec::SeededNoise { seed: 42, .. }))
            }
            _ => unreachable!(),
        }
    }
}
