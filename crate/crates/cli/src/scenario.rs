//! JSON scenario files.
//!
//! Complex numbers are `[re, im]` pairs and matrices are explicit
//! `{rows, cols, entries}` objects with row-major nested entries:
//!
//! ```json
//! {
//!   "kind": "calogero_moser",
//!   "matrices": {
//!     "X": {"rows": 1, "cols": 1, "entries": [[[3.0, 0.0]]]},
//!     "Z": {"rows": 1, "cols": 1, "entries": [[[0.0, 0.0]]]}
//!   },
//!   "times": [[0.0, 0.0]],
//!   "options": {"grids": {"t1": {"start": -5.0, "end": 5.0, "count": 201}}}
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kp_rankone::cases::{self, CalogeroMoserData, IntertwiningData, KdVPairData};
use kp_rankone::tau::{Grid1D, DEFAULT_TRUNCATION};
use kp_rankone::{CMatrix, RankOneTriple, TimeVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    General,
    Intertwining,
    CalogeroMoser,
    KdvPair,
}

impl ScenarioKind {
    /// Matrices a scenario of this kind must provide.
    pub fn required(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::General => &["A", "B", "C"],
            ScenarioKind::Intertwining => &["X", "Y", "Z"],
            ScenarioKind::CalogeroMoser | ScenarioKind::KdvPair => &["X", "Z"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<Complex64>>,
}

impl MatrixPayload {
    pub fn to_matrix(&self, name: &str) -> Result<CMatrix, CliError> {
        if self.entries.len() != self.rows || self.entries.iter().any(|r| r.len() != self.cols) {
            return Err(CliError::Usage(format!(
                "matrix {name}: entries do not match the declared {}x{} shape",
                self.rows, self.cols
            )));
        }
        CMatrix::from_rows(&self.entries).map_err(|e| CliError::Usage(format!("matrix {name}: {e}")))
    }
}

impl From<&CMatrix> for MatrixPayload {
    fn from(m: &CMatrix) -> Self {
        MatrixPayload {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.row_vectors(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<Grid1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<Grid1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<Grid1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Grid1D>,
}

/// Optional knobs. Command-line flags take precedence over these.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOptions {
    /// Pass threshold for verification reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Relative tolerance of the admissibility rank tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "GridOptions::is_empty")]
    pub grids: GridOptions,
    /// Miwa parameters `c₁, c₂, c₃` for lattice checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<[Complex64; 3]>,
    /// `(η, λ₁, λ₂)` for the Bethe check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bethe: Option<[Complex64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bethe_m: Option<Vec<i32>>,
}

impl GridOptions {
    fn is_empty(&self) -> bool {
        self == &GridOptions::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub matrices: BTreeMap<String, MatrixPayload>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<Complex64>,
    #[serde(default)]
    pub options: ScenarioOptions,
}

/// Reduction data kept next to the materialized triple.
#[derive(Clone, Debug)]
pub enum CaseData {
    General,
    Intertwining(IntertwiningData),
    CalogeroMoser(CalogeroMoserData),
    KdvPair(KdVPairData),
}

/// A parsed scenario with its triple built and validated.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub triple: RankOneTriple,
    pub case: CaseData,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("scenario: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn matrix(&self, name: &str) -> Result<CMatrix, CliError> {
        self.matrices
            .get(name)
            .ok_or_else(|| CliError::Usage(format!("scenario of kind {:?} needs matrix {name}", self.kind)))?
            .to_matrix(name)
    }

    pub fn optional_matrix(&self, name: &str) -> Result<Option<CMatrix>, CliError> {
        self.matrices.get(name).map(|m| m.to_matrix(name)).transpose()
    }

    /// Scenario times padded with zeros (or cut) to `truncation` entries.
    pub fn time_vector(&self, truncation: Option<usize>) -> Result<TimeVector, CliError> {
        let k = truncation
            .or(self.options.truncation)
            .unwrap_or(DEFAULT_TRUNCATION.max(self.times.len()));
        if k == 0 {
            return Err(CliError::Usage("truncation K must be at least 1".into()));
        }
        let base = if self.times.is_empty() {
            TimeVector::zeros(k)
        } else {
            TimeVector::new(self.times.clone()).map_err(|e| CliError::Usage(format!("times: {e}")))?
        };
        Ok(base.with_truncation(k))
    }

    /// Builds and validates the triple for this kind.
    pub fn materialize(&self) -> Result<LoadedScenario, CliError> {
        for name in self.kind.required() {
            self.matrix(name)?;
        }
        let rank_tol = self.options.rank_tolerance;
        let (triple, case) = match self.kind {
            ScenarioKind::General => {
                let (a, b, c) = (self.matrix("A")?, self.matrix("B")?, self.matrix("C")?);
                let tr = match rank_tol {
                    Some(tol) => RankOneTriple::with_tolerance(a, b, c, tol),
                    None => RankOneTriple::new(a, b, c),
                };
                (tr?, CaseData::General)
            }
            ScenarioKind::Intertwining => {
                let d = IntertwiningData::new(self.matrix("X")?, self.matrix("Y")?, self.matrix("Z")?)?;
                let c = self.optional_matrix("C")?;
                (cases::from_intertwining(&d, c.as_ref())?, CaseData::Intertwining(d))
            }
            ScenarioKind::CalogeroMoser => {
                let d = CalogeroMoserData::new(self.matrix("X")?, self.matrix("Z")?)?;
                (cases::from_calogero_moser(&d)?, CaseData::CalogeroMoser(d))
            }
            ScenarioKind::KdvPair => {
                let d = KdVPairData::new(self.matrix("X")?, self.matrix("Z")?)?;
                (cases::from_kdv_pair(&d)?, CaseData::KdvPair(d))
            }
        };
        Ok(LoadedScenario {
            scenario: self.clone(),
            triple,
            case,
        })
    }
}

/// Reads, parses and materializes a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Scenario::parse(&text)?.materialize()
}

/// A general scenario wrapping an existing triple.
pub fn general_scenario(tr: &RankOneTriple) -> Scenario {
    let mut matrices = BTreeMap::new();
    matrices.insert("A".to_string(), MatrixPayload::from(tr.a()));
    matrices.insert("B".to_string(), MatrixPayload::from(tr.b()));
    matrices.insert("C".to_string(), MatrixPayload::from(tr.c()));
    Scenario {
        kind: ScenarioKind::General,
        matrices,
        times: Vec::new(),
        options: ScenarioOptions::default(),
    }
}
