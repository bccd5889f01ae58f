//! Tabular data shared across the pipeline: the cohort manifest (one row per
//! subject, one column per target field) and pooled out-of-fold prediction
//! tables. Both serialize to CSV with empty cells for missing values, rows
//! sorted by subject id, and floats in shortest round-trip notation, so
//! rewriting a parsed file reproduces it byte for byte.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate subject id '{0}'")]
    DuplicateSubject(String),
    #[error("duplicate field name '{0}'")]
    DuplicateField(String),
    #[error("invalid field name '{0}'")]
    BadFieldName(String),
    #[error("subject '{subject}' field '{field}': value {value} is not finite")]
    NonFinite {
        subject: String,
        field: String,
        value: f64,
    },
    #[error("record for '{subject}' has {got} values, manifest has {expected} fields")]
    RecordWidth {
        subject: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown field '{0}'")]
    UnknownField(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TableError + '_ {
    move |source| TableError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One manifest row: a subject id plus per-field values aligned with the
/// manifest's field order. `None` round-trips as an empty CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub values: Vec<Option<f64>>,
}

/// Cohort manifest: reference values for every subject and target field.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    field_names: Vec<String>,
    records: Vec<SubjectRecord>,
}

impl CohortManifest {
    /// Validates and sorts records by subject id.
    pub fn new(
        field_names: Vec<String>,
        mut records: Vec<SubjectRecord>,
    ) -> Result<Self, TableError> {
        let mut seen_fields = HashSet::new();
        for name in &field_names {
            if name.is_empty() || name == "subject_id" || name.contains(',') || name.contains('\n')
            {
                return Err(TableError::BadFieldName(name.clone()));
            }
            if !seen_fields.insert(name.clone()) {
                return Err(TableError::DuplicateField(name.clone()));
            }
        }
        records.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let mut seen_ids = HashSet::new();
        for rec in &records {
            if !seen_ids.insert(rec.subject_id.clone()) {
                return Err(TableError::DuplicateSubject(rec.subject_id.clone()));
            }
            if rec.values.len() != field_names.len() {
                return Err(TableError::RecordWidth {
                    subject: rec.subject_id.clone(),
                    expected: field_names.len(),
                    got: rec.values.len(),
                });
            }
            for (name, v) in field_names.iter().zip(&rec.values) {
                if let Some(v) = v {
                    if !v.is_finite() {
                        return Err(TableError::NonFinite {
                            subject: rec.subject_id.clone(),
                            field: name.clone(),
                            value: *v,
                        });
                    }
                }
            }
        }
        Ok(Self {
            field_names,
            records,
        })
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn field_index(&self, field: &str) -> Result<usize, TableError> {
        self.field_names
            .iter()
            .position(|f| f == field)
            .ok_or_else(|| TableError::UnknownField(field.to_string()))
    }

    /// Value for one subject and field; `None` if the subject is unknown or
    /// the cell is empty.
    pub fn value(&self, subject_id: &str, field: &str) -> Option<f64> {
        let fi = self.field_index(field).ok()?;
        let ri = self
            .records
            .binary_search_by(|r| r.subject_id.as_str().cmp(subject_id))
            .ok()?;
        self.records[ri].values[fi]
    }

    /// All `(subject_id, value)` pairs where the field is present, in subject
    /// order.
    pub fn column(&self, field: &str) -> Result<Vec<(&str, f64)>, TableError> {
        let fi = self.field_index(field)?;
        Ok(self
            .records
            .iter()
            .filter_map(|r| r.values[fi].map(|v| (r.subject_id.as_str(), v)))
            .collect())
    }

    /// Subjects with every listed field present, in subject order; each entry
    /// carries the values in the order the fields were requested.
    pub fn complete_cases(&self, fields: &[&str]) -> Result<Vec<(&str, Vec<f64>)>, TableError> {
        let idx: Vec<usize> = fields
            .iter()
            .map(|f| self.field_index(f))
            .collect::<Result<_, _>>()?;
        Ok(self
            .records
            .iter()
            .filter_map(|r| {
                let vals: Option<Vec<f64>> = idx.iter().map(|&i| r.values[i]).collect();
                vals.map(|v| (r.subject_id.as_str(), v))
            })
            .collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("subject_id");
        for f in &self.field_names {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        for rec in &self.records {
            out.push_str(&rec.subject_id);
            for v in &rec.values {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv_string()).map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_csv(&text, path)
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self, TableError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| TableError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty file".into(),
        })?;
        let mut cols = header.split(',');
        if cols.next() != Some("subject_id") {
            return Err(TableError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header must start with 'subject_id'".into(),
            });
        }
        let field_names: Vec<String> = cols.map(str::to_string).collect();
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let subject_id = cells.next().unwrap_or("").to_string();
            if subject_id.is_empty() {
                return Err(TableError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "empty subject id".into(),
                });
            }
            let mut values = Vec::with_capacity(field_names.len());
            for (fi, cell) in cells.enumerate() {
                if cell.is_empty() {
                    values.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|e| TableError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!(
                            "field '{}': {e}",
                            field_names.get(fi).map(String::as_str).unwrap_or("?")
                        ),
                    })?;
                    values.push(Some(v));
                }
            }
            if values.len() != field_names.len() {
                return Err(TableError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!(
                        "expected {} cells, got {}",
                        field_names.len() + 1,
                        values.len() + 1
                    ),
                });
            }
            records.push(SubjectRecord { subject_id, values });
        }
        Self::new(field_names, records)
    }
}

/// One pooled out-of-fold prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub subject_id: String,
    pub reference: f64,
    pub prediction: f64,
    /// Index of the fold whose model produced this prediction (the fold the
    /// subject was held out of).
    pub fold: usize,
}

/// All out-of-fold predictions for one target field.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub field_name: String,
    rows: Vec<PredictionRow>,
}

impl PredictionTable {
    pub fn new(field_name: String, mut rows: Vec<PredictionRow>) -> Result<Self, TableError> {
        rows.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.subject_id.clone()) {
                return Err(TableError::DuplicateSubject(r.subject_id.clone()));
            }
            for (v, what) in [(r.reference, "reference"), (r.prediction, "prediction")] {
                if !v.is_finite() {
                    return Err(TableError::NonFinite {
                        subject: r.subject_id.clone(),
                        field: what.to_string(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { field_name, rows })
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn row_for(&self, subject_id: &str) -> Option<&PredictionRow> {
        let i = self
            .rows
            .binary_search_by(|r| r.subject_id.as_str().cmp(subject_id))
            .ok()?;
        Some(&self.rows[i])
    }

    pub fn references(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.reference).collect()
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.prediction).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("subject_id,field,reference,prediction,fold\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.subject_id, self.field_name, r.reference, r.prediction, r.fold
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv_string()).map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| TableError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty file".into(),
        })?;
        if header != "subject_id,field,reference,prediction,fold" {
            return Err(TableError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unexpected header '{header}'"),
            });
        }
        let mut field_name: Option<String> = None;
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let parse = |msg: String| TableError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: msg,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(parse(format!("expected 5 cells, got {}", cells.len())));
            }
            match &field_name {
                None => field_name = Some(cells[1].to_string()),
                Some(f) if f != cells[1] => {
                    return Err(parse(format!("mixed fields '{f}' and '{}'", cells[1])));
                }
                _ => {}
            }
            rows.push(PredictionRow {
                subject_id: cells[0].to_string(),
                reference: cells[2].parse().map_err(|e| parse(format!("reference: {e}")))?,
                prediction: cells[3]
                    .parse()
                    .map_err(|e| parse(format!("prediction: {e}")))?,
                fold: cells[4].parse().map_err(|e| parse(format!("fold: {e}")))?,
            });
        }
        let field_name = field_name.ok_or_else(|| TableError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no prediction rows".into(),
        })?;
        Self::new(field_name, rows)
    }
}
