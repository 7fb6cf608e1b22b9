//! Datasets and their CSV form.
//!
//! A file has a header row, `d` feature columns and then the label
//! columns: one 1-based class for multiclass, one semicolon-joined list of
//! 1-based indices for multilabel, `q` numbers for regression and one `+1`
//! or `-1` for binary sign labels.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Multiclass { q: usize },
    /// At most `k` of the `q` labels are active per example.
    Multilabel { q: usize, k: usize },
    Regression { q: usize },
    /// Scalar score with a `+1`/`-1` label.
    Binary,
}

impl TaskKind {
    /// Output dimension of a predictor for this task.
    pub fn q(&self) -> usize {
        match *self {
            TaskKind::Multiclass { q } | TaskKind::Multilabel { q, .. } | TaskKind::Regression { q } => q,
            TaskKind::Binary => 1,
        }
    }

    fn label_columns(&self) -> usize {
        match *self {
            TaskKind::Regression { q } => q,
            _ => 1,
        }
    }

    pub fn check_label(&self, y: &Label) -> Result<()> {
        let ok = match (self, y) {
            (TaskKind::Multiclass { q }, Label::ClassIndex(c)) => (1..=*q).contains(c),
            (TaskKind::Multilabel { q, k }, Label::SparseBinary(bits)) => {
                bits.len() == *q && bits.iter().filter(|&&b| b).count() <= *k
            }
            (TaskKind::Regression { q }, Label::RealVector(v)) => v.len() == *q && v.iter().all(|x| x.is_finite()),
            (TaskKind::Binary, Label::BinarySign(s)) => *s == 1 || *s == -1,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("label {y:?} does not fit task {self}")))
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Multiclass { q } => write!(f, "multiclass:{q}"),
            TaskKind::Multilabel { q, k } => write!(f, "multilabel:{q}:{k}"),
            TaskKind::Regression { q } => write!(f, "regression:{q}"),
            TaskKind::Binary => write!(f, "binary"),
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    /// `multiclass:Q`, `multilabel:Q:K`, `regression:Q` or `binary`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised schema `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts.get(i).and_then(|p| p.trim().parse().ok()).filter(|&v| v > 0).ok_or_else(bad)
        };
        let task = match (parts[0].trim(), parts.len()) {
            ("multiclass", 2) => TaskKind::Multiclass { q: num(1)? },
            ("multilabel", 3) => TaskKind::Multilabel { q: num(1)?, k: num(2)? },
            ("regression", 2) => TaskKind::Regression { q: num(1)? },
            ("binary", 1) => TaskKind::Binary,
            _ => return Err(bad()),
        };
        if matches!(task, TaskKind::Multiclass { q } if q < 2) {
            return Err(Error::InvalidParameter("multiclass needs at least 2 classes".into()));
        }
        Ok(task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Label>,
    pub task: TaskKind,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated feature names after validation.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Label>, task: TaskKind) -> Result<Dataset> {
        let d = x.first().map_or(0, Vec::len);
        let names = (0..d).map(|j| format!("x{j}")).collect();
        let data = Dataset { x, y, task, feature_names: names };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn q(&self) -> usize {
        self.task.q()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::EmptyData("no rows".into()));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::Data(format!("{} feature rows but {} labels", self.x.len(), self.y.len())));
        }
        let d = self.feature_names.len();
        for (i, (row, y)) in self.x.iter().zip(&self.y).enumerate() {
            if row.len() != d {
                return Err(Error::Data(format!("row {i} has {} features, expected {d}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} has a non-finite feature")));
            }
            self.task.check_label(y)?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path, task: TaskKind) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, task)
    }

    pub fn read_csv<R: Read>(reader: R, task: TaskKind) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
        let label_cols = task.label_columns();
        if header.len() <= label_cols {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header has {} columns, need at least one feature plus {label_cols} label column(s)", header.len()),
            });
        }
        let d = header.len() - label_cols;
        let feature_names: Vec<String> = header.iter().take(d).map(str::to_string).collect();

        let mut x = Vec::new();
        let mut y = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let perr = |msg: String| Error::Parse { line, msg };
            if record.len() != header.len() {
                return Err(perr(format!("expected {} fields, found {}", header.len(), record.len())));
            }
            let mut row = Vec::with_capacity(d);
            for (j, field) in record.iter().take(d).enumerate() {
                let v: f64 = field.parse().map_err(|_| perr(format!("column {}: `{field}` is not a number", j + 1)))?;
                if !v.is_finite() {
                    return Err(perr(format!("column {}: non-finite feature `{field}`", j + 1)));
                }
                row.push(v);
            }
            let label = parse_label(task, &record.iter().skip(d).collect::<Vec<_>>()).map_err(perr)?;
            task.check_label(&label).map_err(|e| perr(e.to_string()))?;
            x.push(row);
            y.push(label);
        }
        if x.is_empty() {
            return Err(Error::EmptyData("no rows".into()));
        }
        Ok(Dataset { x, y, task, feature_names })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    /// Writes with shortest round-trip float formatting so loading gives
    /// back the identical values.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.feature_names.clone();
        match self.task {
            TaskKind::Regression { q } => header.extend((1..=q).map(|j| format!("y{j}"))),
            _ => header.push("y".into()),
        }
        w.write_record(&header)?;
        for (row, label) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            match label {
                Label::ClassIndex(c) => rec.push(c.to_string()),
                Label::SparseBinary(bits) => rec.push(
                    bits.iter()
                        .enumerate()
                        .filter(|(_, &b)| b)
                        .map(|(j, _)| (j + 1).to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                ),
                Label::RealVector(v) => rec.extend(v.iter().map(|t| t.to_string())),
                Label::BinarySign(s) => rec.push(s.to_string()),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_label(task: TaskKind, fields: &[&str]) -> std::result::Result<Label, String> {
    match task {
        TaskKind::Multiclass { q } => {
            let c: usize = fields[0].parse().map_err(|_| format!("class `{}` is not a positive integer", fields[0]))?;
            if c == 0 || c > q {
                return Err(format!("class {c} outside 1..={q}"));
            }
            Ok(Label::ClassIndex(c))
        }
        TaskKind::Multilabel { q, k } => {
            let mut bits = vec![false; q];
            for part in fields[0].split(';').map(str::trim).filter(|p| !p.is_empty()) {
                let j: usize = part.parse().map_err(|_| format!("label index `{part}` is not a positive integer"))?;
                if j == 0 || j > q {
                    return Err(format!("label index {j} outside 1..={q}"));
                }
                bits[j - 1] = true;
            }
            let count = bits.iter().filter(|&&b| b).count();
            if count > k {
                return Err(format!("{count} active labels exceed k={k}"));
            }
            Ok(Label::SparseBinary(bits))
        }
        TaskKind::Regression { .. } => fields
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("target `{f}` is not a finite number")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Label::RealVector),
        TaskKind::Binary => match fields[0] {
            "1" | "+1" => Ok(Label::BinarySign(1)),
            "-1" => Ok(Label::BinarySign(-1)),
            other => Err(format!("binary label must be +1 or -1, got `{other}`")),
        },
    }
}
