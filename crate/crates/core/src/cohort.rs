//! Cohorts of units with fully observed per-action outcomes, and their CSV form.
//!
//! CSV layout: `id,<feat_1>,...,<feat_m>,y_<label_1>,...,y_<label_K>[,doctor_action]`.
//! Any column that is not `id`, `doctor_action` or a `y_<label>` for a known
//! action is a feature, in file order.

use std::io::{Read, Write};
use std::path::Path;

use crate::actions::ActionSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Feature matrix plus the full table of binary outcomes, one column per action.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    ids: Vec<String>,
    feature_names: Vec<String>,
    action_labels: Vec<String>,
    x: Matrix,
    /// Row-major `n x K` table of `Y_i(a)`.
    y: Vec<u8>,
    doctor_action: Option<Vec<usize>>,
}

/// A parsed cohort plus the ids of rows dropped for missing outcomes.
#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    pub dropped: Vec<String>,
}

impl Cohort {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        action_labels: Vec<String>,
        x: Matrix,
        y: Vec<u8>,
        doctor_action: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = x.rows();
        let k = action_labels.len();
        if ids.len() != n {
            return Err(Error::Schema(format!("{} ids for {} rows", ids.len(), n)));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::Schema(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.cols()
            )));
        }
        if y.len() != n * k {
            return Err(Error::Schema(format!("outcome table has {} entries, expected {}", y.len(), n * k)));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::Parse {
                row: ids[i / k].clone(),
                message: format!("outcome value {v} is not binary"),
            });
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: ids[pos / x.cols().max(1)].clone(),
                message: "non-finite feature value".into(),
            });
        }
        if let Some(d) = &doctor_action {
            if d.len() != n {
                return Err(Error::Schema("doctor_action length does not match row count".into()));
            }
            if let Some(i) = d.iter().position(|&a| a >= k) {
                return Err(Error::Parse {
                    row: ids[i].clone(),
                    message: format!("doctor_action index {} out of range", d[i]),
                });
            }
        }
        Ok(Self {
            ids,
            feature_names,
            action_labels,
            x,
            y,
            doctor_action,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self, i: usize, a: usize) -> u8 {
        self.y[i * self.action_labels.len() + a]
    }

    /// Outcomes of unit `i` across all actions.
    pub fn y_row(&self, i: usize) -> &[u8] {
        let k = self.action_labels.len();
        &self.y[i * k..(i + 1) * k]
    }

    /// Outcome column for one action as `f64` labels.
    pub fn y_column(&self, a: usize) -> Vec<f64> {
        (0..self.n()).map(|i| f64::from(self.y(i, a))).collect()
    }

    pub fn doctor_action(&self) -> Option<&[usize]> {
        self.doctor_action.as_deref()
    }

    pub fn with_doctor_action(mut self, doctor: Vec<usize>) -> Result<Self> {
        let k = self.n_actions();
        if doctor.len() != self.n() {
            return Err(Error::Schema("doctor_action length does not match row count".into()));
        }
        if doctor.iter().any(|&a| a >= k) {
            return Err(Error::Schema("doctor_action index out of range".into()));
        }
        self.doctor_action = Some(doctor);
        Ok(self)
    }

    /// Checks that the cohort's outcome columns line up with `actions`.
    pub fn check_actions(&self, actions: &ActionSet) -> Result<()> {
        if self.action_labels != actions.labels() {
            return Err(Error::Schema(format!(
                "cohort actions {:?} do not match action set {:?}",
                self.action_labels,
                actions.labels()
            )));
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let k = self.n_actions();
        let mut y = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            y.extend_from_slice(self.y_row(i));
        }
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            action_labels: self.action_labels.clone(),
            x: self.x.select_rows(idx),
            y,
            doctor_action: self
                .doctor_action
                .as_ref()
                .map(|d| idx.iter().map(|&i| d[i]).collect()),
        }
    }
}

/// Reads and validates a cohort CSV file.
pub fn load_cohort(path: impl AsRef<Path>, actions: &ActionSet) -> Result<Cohort> {
    let file = std::fs::File::open(path)?;
    Ok(parse_cohort(file, actions)?.cohort)
}

/// Parses cohort CSV from any reader. Rows with an empty outcome cell are dropped.
pub fn parse_cohort<R: Read>(reader: R, actions: &ActionSet) -> Result<LoadedCohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let id_col = position("id").ok_or_else(|| Error::MissingColumn("id".into()))?;
    let mut y_cols = Vec::with_capacity(actions.len());
    for label in actions.labels() {
        let name = format!("y_{label}");
        y_cols.push(position(&name).ok_or(Error::MissingColumn(name))?);
    }
    let doc_col = position("doctor_action");
    let feat_cols: Vec<usize> = (0..headers.len())
        .filter(|c| *c != id_col && Some(*c) != doc_col && !y_cols.contains(c))
        .collect();
    let feature_names: Vec<String> = feat_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut docs = Vec::new();
    let mut dropped = Vec::new();

    for record in rdr.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let parse_err = |message: String| Error::Parse {
            row: id.clone(),
            message,
        };

        let mut y_row = Vec::with_capacity(y_cols.len());
        let mut missing = false;
        for (&c, label) in y_cols.iter().zip(actions.labels()) {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() {
                missing = true;
                break;
            }
            match raw {
                "0" | "0.0" => y_row.push(0u8),
                "1" | "1.0" => y_row.push(1u8),
                other => return Err(parse_err(format!("y_{label}={other} is not binary"))),
            }
        }
        if missing {
            dropped.push(id);
            continue;
        }

        for &c in &feat_cols {
            let raw = record.get(c).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(format!("feature `{}`={raw:?} is not a number", &headers[c])))?;
            if !v.is_finite() {
                return Err(parse_err(format!("feature `{}` is not finite", &headers[c])));
            }
            xs.push(v);
        }

        if let Some(c) = doc_col {
            let raw = record.get(c).unwrap_or("").trim();
            let a = actions
                .index_of(raw)
                .ok_or_else(|| parse_err(format!("unknown doctor_action `{raw}`")))?;
            docs.push(a);
        }
        ys.extend(y_row);
        ids.push(id);
    }

    let n = ids.len();
    let x = Matrix::new(n, feat_cols.len(), xs)?;
    let cohort = Cohort::new(
        ids,
        feature_names,
        actions.labels(),
        x,
        ys,
        doc_col.map(|_| docs),
    )?;
    Ok(LoadedCohort { cohort, dropped })
}

/// Writes a cohort in the CSV layout read by [`parse_cohort`].
pub fn write_cohort<W: Write>(writer: W, cohort: &Cohort) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(cohort.feature_names().iter().cloned());
    header.extend(cohort.action_labels().iter().map(|l| format!("y_{l}")));
    if cohort.doctor_action().is_some() {
        header.push("doctor_action".into());
    }
    w.write_record(&header)?;
    for i in 0..cohort.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(cohort.ids()[i].clone());
        rec.extend(cohort.x().row(i).iter().map(|v| v.to_string()));
        rec.extend(cohort.y_row(i).iter().map(|v| v.to_string()));
        if let Some(d) = cohort.doctor_action() {
            rec.push(cohort.action_labels()[d[i]].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_cohort(path: impl AsRef<Path>, cohort: &Cohort) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cohort(std::io::BufWriter::new(file), cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abx() -> ActionSet {
        ActionSet::from_pairs(&[("NIT", 0.0), ("SXT", 0.0), ("CIP", 1.0), ("LVX", 1.0)]).unwrap()
    }

    const GOOD: &str = "id,age,prior,y_NIT,y_SXT,y_CIP,y_LVX,doctor_action
a,30,1,1,0,1,1,NIT
b,41.5,0,0,0,1,1,CIP
c,22,1,1,1,1,1,SXT
";

    #[test]
    fn loads_well_formed_file() {
        let c = parse_cohort(GOOD.as_bytes(), &abx()).unwrap().cohort;
        assert_eq!(c.n(), 3);
        assert_eq!(c.m(), 2);
        assert_eq!(c.feature_names(), &["age".to_string(), "prior".to_string()]);
        assert_eq!(c.y_row(1), &[0, 0, 1, 1]);
        assert_eq!(c.doctor_action().unwrap(), &[0, 2, 1]);
        assert_eq!(c.x().get(1, 0), 41.5);
    }

    #[test]
    fn missing_outcome_column_names_it() {
        let s = "id,age,y_SXT,y_CIP,y_LVX\na,1,0,1,1\n";
        match parse_cohort(s.as_bytes(), &abx()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "y_NIT"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_binary_outcome_cites_row() {
        let s = "id,age,y_NIT,y_SXT,y_CIP,y_LVX\nrow7,1,0,2,1,1\n";
        match parse_cohort(s.as_bytes(), &abx()) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, "row7");
                assert!(message.contains("y_SXT"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_doctor_label_is_rejected() {
        let s = "id,age,y_NIT,y_SXT,y_CIP,y_LVX,doctor_action\nq,1,0,1,1,1,AMX\n";
        assert!(matches!(parse_cohort(s.as_bytes(), &abx()), Err(Error::Parse { .. })));
    }

    #[test]
    fn rows_missing_outcomes_are_dropped() {
        let s = "id,age,y_NIT,y_SXT,y_CIP,y_LVX\na,1,0,1,1,1\nb,2,,1,1,1\n";
        let loaded = parse_cohort(s.as_bytes(), &abx()).unwrap();
        assert_eq!(loaded.cohort.n(), 1);
        assert_eq!(loaded.dropped, vec!["b".to_string()]);
    }

    #[test]
    fn non_finite_features_rejected() {
        let s = "id,age,y_NIT,y_SXT,y_CIP,y_LVX\na,NaN,0,1,1,1\n";
        assert!(matches!(parse_cohort(s.as_bytes(), &abx()), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let c = parse_cohort(GOOD.as_bytes(), &abx()).unwrap().cohort;
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c).unwrap();
        let back = parse_cohort(buf.as_slice(), &abx()).unwrap().cohort;
        assert_eq!(back, c);
    }
}
