//! Sampled input/output records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

/// Input/output samples at a fixed period. `outputs[k]` is measured at
/// `k * sample_time`, before `inputs[k]` is applied over the following period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoSequence {
    pub sample_time: f64,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: f64,
    u: f64,
    y: f64,
}

impl IoSequence {
    pub fn new(sample_time: f64, inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self {
            sample_time,
            inputs,
            outputs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_time > 0.0) {
            return Err(Error::InvalidArgument("sample time must be positive".into()));
        }
        dim_check(self.inputs.len() == self.outputs.len(), || {
            format!("{} inputs vs {} outputs", self.inputs.len(), self.outputs.len())
        })?;
        let m = self.inputs.first().map_or(0, Vec::len);
        let p = self.outputs.first().map_or(0, Vec::len);
        dim_check(
            self.inputs.iter().all(|u| u.len() == m) && self.outputs.iter().all(|y| y.len() == p),
            || "ragged samples".into(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Samples `start .. start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<IoSequence> {
        if start + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{} exceeds record length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            sample_time: self.sample_time,
            inputs: self.inputs[start..start + len].to_vec(),
            outputs: self.outputs[start..start + len].to_vec(),
        })
    }

    /// Writes the single-input single-output record as CSV `t,u,y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (k, (u, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            if u.len() != 1 || y.len() != 1 {
                return Err(Error::InvalidArgument("CSV records are single-input single-output".into()));
            }
            w.serialize(Row {
                t: k as f64 * self.sample_time,
                u: u[0],
                y: y[0],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows: Vec<Row> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() < 2 {
            return Err(Error::Parse(format!("{}: need at least two samples", path.display())));
        }
        let sample_time = rows[1].t - rows[0].t;
        for (k, row) in rows.iter().enumerate() {
            let expected = rows[0].t + k as f64 * sample_time;
            if (row.t - expected).abs() > 1e-6 * sample_time.abs().max(1.0) {
                return Err(Error::Parse(format!("{}: row {k} breaks the uniform sampling", path.display())));
            }
        }
        Self::new(
            sample_time,
            rows.iter().map(|r| vec![r.u]).collect(),
            rows.iter().map(|r| vec![r.y]).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("io.csv");
        let s = IoSequence::new(120.0, vec![vec![0.1], vec![0.12], vec![0.05]], vec![vec![320.0], vec![320.5], vec![321.0 / 3.0]]).unwrap();
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,u,y\n"));
        assert_eq!(IoSequence::read_csv(&path).unwrap(), s);
    }

    #[test]
    fn window_bounds() {
        let s = IoSequence::new(1.0, vec![vec![0.0]; 5], vec![vec![1.0]; 5]).unwrap();
        assert_eq!(s.window(1, 4).unwrap().len(), 4);
        assert!(s.window(2, 4).is_err());
    }
}
