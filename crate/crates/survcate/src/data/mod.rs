//! Survival dataset types: covariate schema, observed records, the target
//! time, and the complete-case view shared by every estimator.
//!
//! A cohort holds observed rows `(U, delta, A, x)` where `U = min(T, C)` is
//! the observed time, `delta = I(T < C)` the event indicator, and `A` the
//! binary treatment. All types are immutable after construction and safe to
//! share across parallel workers.

use serde::{Deserialize, Serialize};

use crate::error::SurvError;
use crate::Result;

/// Kind of a baseline covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovariateKind {
    Continuous,
    /// Accepts 0/1 or -1/+1 coding.
    Binary,
    Categorical { levels: Vec<String> },
}

/// Ordered covariate names and kinds; fixed for the lifetime of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    names: Vec<String>,
    kinds: Vec<CovariateKind>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<(String, CovariateKind)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SurvError::Schema("schema must name at least one covariate".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, kind) in &entries {
            if name.is_empty() {
                return Err(SurvError::Schema("covariate names must be nonempty".into()));
            }
            if name.contains(',') || name.contains('"') || name.contains('\n') {
                return Err(SurvError::Schema(format!(
                    "covariate name {name:?} contains a delimiter character"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(SurvError::Schema(format!("duplicate covariate name {name:?}")));
            }
            if let CovariateKind::Categorical { levels } = kind {
                if levels.is_empty() {
                    return Err(SurvError::Schema(format!(
                        "categorical covariate {name:?} declares no levels"
                    )));
                }
                let mut lv = std::collections::HashSet::new();
                for l in levels {
                    if !lv.insert(l) {
                        return Err(SurvError::Schema(format!(
                            "categorical covariate {name:?} has duplicate level {l:?}"
                        )));
                    }
                }
            }
        }
        let (names, kinds) = entries.into_iter().unzip();
        Ok(Self { names, kinds })
    }

    /// All-continuous schema with the given names.
    pub fn continuous(names: &[&str]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| (n.to_string(), CovariateKind::Continuous))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[CovariateKind] {
        &self.kinds
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Validates a stored covariate value for position `j`.
    pub fn validate_value(&self, j: usize, value: f64) -> Result<()> {
        match &self.kinds[j] {
            CovariateKind::Continuous => {
                if !value.is_finite() {
                    return Err(SurvError::SchemaMismatch(format!(
                        "covariate {:?} must be finite, got {value}",
                        self.names[j]
                    )));
                }
            }
            CovariateKind::Binary => {
                if value != 0.0 && value != 1.0 && value != -1.0 {
                    return Err(SurvError::SchemaMismatch(format!(
                        "binary covariate {:?} must be 0/1 or -1/+1, got {value}",
                        self.names[j]
                    )));
                }
            }
            CovariateKind::Categorical { levels } => {
                let idx = value as usize;
                if value.fract() != 0.0 || value < 0.0 || idx >= levels.len() {
                    return Err(SurvError::SchemaMismatch(format!(
                        "categorical covariate {:?} has invalid level index {value}",
                        self.names[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses a raw text token into the stored representation for position `j`.
    pub fn parse_value(&self, j: usize, token: &str) -> std::result::Result<f64, String> {
        match &self.kinds[j] {
            CovariateKind::Continuous => token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("covariate {:?}: invalid number {token:?}", self.names[j])),
            CovariateKind::Binary => match token.parse::<f64>() {
                Ok(v) if v == 0.0 || v == 1.0 || v == -1.0 => Ok(v),
                _ => Err(format!(
                    "covariate {:?}: binary value must be 0/1 or -1/+1, got {token:?}",
                    self.names[j]
                )),
            },
            CovariateKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == token)
                .map(|i| i as f64)
                .ok_or_else(|| {
                    format!(
                        "covariate {:?}: unknown categorical level {token:?}",
                        self.names[j]
                    )
                }),
        }
    }

    /// Renders a stored value back to its text token.
    pub fn format_value(&self, j: usize, value: f64) -> String {
        match &self.kinds[j] {
            CovariateKind::Categorical { levels } => levels[value as usize].clone(),
            _ => format!("{value}"),
        }
    }
}

/// One observed subject: `(U, delta, A, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub observed_time: f64,
    pub event: bool,
    pub treatment: u8,
    pub covariates: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(observed_time: f64, event: bool, treatment: u8, covariates: Vec<f64>) -> Self {
        Self {
            observed_time,
            event,
            treatment,
            covariates,
        }
    }
}

/// A validated survival dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    schema: CovariateSchema,
    records: Vec<SurvivalRecord>,
}

impl Cohort {
    /// Validates every record against the schema. Errors carry the 0-based
    /// row number of the offending record.
    pub fn new(schema: CovariateSchema, records: Vec<SurvivalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(SurvError::EmptyInput("cohort must contain at least one record"));
        }
        for (row, r) in records.iter().enumerate() {
            if !r.observed_time.is_finite() || r.observed_time < 0.0 {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!("observed time must be nonnegative, got {}", r.observed_time),
                });
            }
            if r.treatment > 1 {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!("treatment must be 0 or 1, got {}", r.treatment),
                });
            }
            if r.covariates.len() != schema.len() {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!(
                        "expected {} covariates, got {}",
                        schema.len(),
                        r.covariates.len()
                    ),
                });
            }
            for j in 0..schema.len() {
                schema.validate_value(j, r.covariates[j]).map_err(|e| SurvError::Ingestion {
                    row,
                    reason: e.to_string(),
                })?;
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.observed_time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn treatments(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.treatment).collect()
    }

    pub fn max_observed_time(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.observed_time)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row indices of the given arm.
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.treatment == arm)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_both_arms(&self) -> bool {
        let mut seen = [false; 2];
        for r in &self.records {
            seen[r.treatment as usize] = true;
        }
        seen[0] && seen[1]
    }

    /// Numeric design matrix with categorical covariates one-hot expanded.
    pub fn design_matrix(&self) -> DesignMatrix {
        let info = DesignInfo::for_schema(&self.schema);
        let mut values = vec![0.0; self.n() * info.n_cols];
        for (i, r) in self.records.iter().enumerate() {
            info.expand_into(&r.covariates, &mut values[i * info.n_cols..(i + 1) * info.n_cols]);
        }
        DesignMatrix {
            values,
            n_rows: self.n(),
            info,
        }
    }
}

/// Column layout of the one-hot expanded design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    pub n_cols: usize,
    /// Design column -> original covariate index.
    pub col_to_covariate: Vec<usize>,
    pub col_names: Vec<String>,
}

impl DesignInfo {
    pub fn for_schema(schema: &CovariateSchema) -> Self {
        let mut col_to_covariate = Vec::new();
        let mut col_names = Vec::new();
        for (j, kind) in schema.kinds().iter().enumerate() {
            match kind {
                CovariateKind::Categorical { levels } => {
                    for l in levels {
                        col_to_covariate.push(j);
                        col_names.push(format!("{}={l}", schema.names()[j]));
                    }
                }
                _ => {
                    col_to_covariate.push(j);
                    col_names.push(schema.names()[j].clone());
                }
            }
        }
        Self {
            n_cols: col_to_covariate.len(),
            col_to_covariate,
            col_names,
        }
    }

    /// Expands one original-space covariate vector into `out` (design space).
    pub fn expand_into(&self, covariates: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_cols);
        out.fill(0.0);
        let mut c = 0;
        for (j, &v) in covariates.iter().enumerate() {
            let start = c;
            while c < self.n_cols && self.col_to_covariate[c] == j {
                c += 1;
            }
            let width = c - start;
            if width == 1 {
                out[start] = v;
            } else {
                let idx = v as usize;
                if idx < width {
                    out[start + idx] = 1.0;
                }
            }
        }
    }

    /// Expands a vector, allocating the output.
    pub fn expand(&self, covariates: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.expand_into(covariates, &mut out);
        out
    }
}

/// Row-major numeric matrix over the expanded design space.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: Vec<f64>,
    pub n_rows: usize,
    pub info: DesignInfo,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.info.n_cols..(i + 1) * self.info.n_cols]
    }

    pub fn n_cols(&self) -> usize {
        self.info.n_cols
    }
}

/// The evaluation horizon `t*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTime {
    t_star: f64,
}

impl TargetTime {
    pub fn new(t_star: f64) -> Result<Self> {
        if !(t_star.is_finite() && t_star > 0.0) {
            return Err(SurvError::InvalidArgument(format!(
                "target time must be a positive real, got {t_star}"
            )));
        }
        Ok(Self { t_star })
    }

    /// As [`new`](Self::new), but warns when `t*` exceeds the largest
    /// observed time in the training cohort.
    pub fn validated(t_star: f64, cohort: &Cohort) -> Result<Self> {
        let t = Self::new(t_star)?;
        let max_u = cohort.max_observed_time();
        if t_star > max_u {
            log::warn!(
                "target time {t_star} exceeds the maximum observed time {max_u}; extrapolating"
            );
        }
        Ok(t)
    }

    pub fn value(&self) -> f64 {
        self.t_star
    }
}

/// The subset of rows whose survival indicator `I(T > t*)` is determined.
///
/// A row is included iff `U >= t*` (still at risk or censored after the
/// horizon, so `T > t*`) or the event occurred before `t*`. Rows censored
/// before `t*` are excluded; they re-enter the loss through `w^C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteCaseView {
    pub indices: Vec<usize>,
    pub survival_indicator: Vec<bool>,
    pub n_complete: usize,
    pub t_star: f64,
}

impl CompleteCaseView {
    /// Survival indicators aligned to `indices`, as 0/1 reals.
    pub fn indicators_f64(&self) -> Vec<f64> {
        self.survival_indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Classifies every row as included (with its indicator) or excluded.
///
/// Ties at `U = t*` count as `T > t*`: the CATE definition uses the
/// right-continuous survival function `P(T > t)` evaluated at `t*`.
pub fn complete_case_view(cohort: &Cohort, t: TargetTime) -> CompleteCaseView {
    let t_star = t.value();
    let mut indices = Vec::new();
    let mut survival_indicator = Vec::new();
    for (i, r) in cohort.records().iter().enumerate() {
        let included = r.observed_time >= t_star || r.event;
        if included {
            indices.push(i);
            survival_indicator.push(r.observed_time >= t_star);
        }
    }
    let n_complete = indices.len();
    CompleteCaseView {
        indices,
        survival_indicator,
        n_complete,
        t_star,
    }
}

/// The time at which the censoring survival is evaluated for a complete-case
/// row: `min(U, t*)`.
///
/// Contract: the record must belong to the complete-case view at `t`.
pub fn censoring_min_time(record: &SurvivalRecord, t: TargetTime) -> f64 {
    debug_assert!(
        record.observed_time >= t.value() || record.event,
        "censoring_min_time called on a row censored before t*"
    );
    record.observed_time.min(t.value())
}

/// Ingests tabular rows against a schema.
///
/// Each raw row carries string tokens in the order: `time, event, treatment,
/// <covariates in schema order>`. Errors name the offending 0-based data row.
pub fn ingest_cohort(rows: &[Vec<String>], schema: &CovariateSchema) -> Result<Cohort> {
    let expected = 3 + schema.len();
    let mut records = Vec::with_capacity(rows.len());
    for (row, tokens) in rows.iter().enumerate() {
        if tokens.len() != expected {
            return Err(SurvError::Ingestion {
                row,
                reason: format!("expected {expected} fields, got {}", tokens.len()),
            });
        }
        let time: f64 = tokens[0]
            .parse()
            .map_err(|_| SurvError::Ingestion {
                row,
                reason: format!("invalid time {:?}", tokens[0]),
            })?;
        if !time.is_finite() || time < 0.0 {
            return Err(SurvError::Ingestion {
                row,
                reason: format!("observed time must be nonnegative, got {time}"),
            });
        }
        let event = match tokens[1].as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!("event indicator must be 0 or 1, got {other:?}"),
                })
            }
        };
        let treatment = match tokens[2].as_str() {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!("treatment must be 0 or 1, got {other:?}"),
                })
            }
        };
        let mut covariates = Vec::with_capacity(schema.len());
        for j in 0..schema.len() {
            let tok = tokens[3 + j].trim();
            if tok.is_empty() {
                return Err(SurvError::Ingestion {
                    row,
                    reason: format!("missing value for covariate {:?}", schema.names()[j]),
                });
            }
            let v = schema
                .parse_value(j, tok)
                .map_err(|reason| SurvError::Ingestion { row, reason })?;
            covariates.push(v);
        }
        records.push(SurvivalRecord::new(time, event, treatment, covariates));
    }
    Cohort::new(schema.clone(), records)
}
