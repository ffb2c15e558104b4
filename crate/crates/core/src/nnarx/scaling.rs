use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Per-channel affine normalization `(v - mean) / std` of inputs and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

fn moments(samples: &[&[f64]], width: usize, what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!("no {what} samples to normalize")));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; width];
    for s in samples {
        dim_check(s.len() == width, || format!("{what} sample has {} channels, expected {width}", s.len()))?;
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; width];
    for s in samples {
        for ((sd, v), m) in std.iter_mut().zip(s.iter()).zip(&mean) {
            *sd += (v - m) * (v - m) / n;
        }
    }
    for (i, sd) in std.iter_mut().enumerate() {
        *sd = sd.sqrt();
        if !(*sd > 1e-12) {
            return Err(Error::InvalidArgument(format!("{what} channel {i} is constant; cannot normalize")));
        }
    }
    Ok((mean, std))
}

impl Scaling {
    pub fn identity(inputs: usize, outputs: usize) -> Self {
        Self {
            input_mean: vec![0.0; inputs],
            input_std: vec![1.0; inputs],
            output_mean: vec![0.0; outputs],
            output_std: vec![1.0; outputs],
        }
    }

    /// Zero-mean, unit-variance statistics of the given samples.
    pub fn fit(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        let m = inputs.first().map_or(0, Vec::len);
        let p = outputs.first().map_or(0, Vec::len);
        let u: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let y: Vec<&[f64]> = outputs.iter().map(Vec::as_slice).collect();
        let (input_mean, input_std) = moments(&u, m, "input")?;
        let (output_mean, output_std) = moments(&y, p, "output")?;
        Ok(Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    pub fn inputs(&self) -> usize {
        self.input_mean.len()
    }

    pub fn outputs(&self) -> usize {
        self.output_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        dim_check(
            self.input_std.len() == self.inputs() && self.output_std.len() == self.outputs(),
            || "scaling mean and std lengths differ".into(),
        )?;
        if self.input_std.iter().chain(&self.output_std).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("scaling std must be positive and finite".into()));
        }
        Ok(())
    }

    fn apply<T: Real>(v: &[f64], mean: &[f64], std: &[f64]) -> DVector<T> {
        DVector::from_iterator(v.len(), v.iter().zip(mean).zip(std).map(|((v, m), s)| lit((v - m) / s)))
    }

    fn invert<T: Real>(v: &DVector<T>, mean: &[f64], std: &[f64]) -> Vec<f64> {
        v.iter().zip(mean).zip(std).map(|((v, m), s)| to_f64(*v) * s + m).collect()
    }

    pub fn normalize_input<T: Real>(&self, u: &[f64]) -> DVector<T> {
        Self::apply(u, &self.input_mean, &self.input_std)
    }

    pub fn normalize_output<T: Real>(&self, y: &[f64]) -> DVector<T> {
        Self::apply(y, &self.output_mean, &self.output_std)
    }

    pub fn denormalize_input<T: Real>(&self, u: &DVector<T>) -> Vec<f64> {
        Self::invert(u, &self.input_mean, &self.input_std)
    }

    pub fn denormalize_output<T: Real>(&self, y: &DVector<T>) -> Vec<f64> {
        Self::invert(y, &self.output_mean, &self.output_std)
    }

    /// Per-channel input bounds in normalized units.
    pub fn normalize_input_box(&self, lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = lower.iter().zip(&self.input_mean).zip(&self.input_std).map(|((v, m), s)| (v - m) / s);
        let hi = upper.iter().zip(&self.input_mean).zip(&self.input_std).map(|((v, m), s)| (v - m) / s);
        (lo.collect(), hi.collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_gives_zero_mean_unit_variance() {
        let u: Vec<Vec<f64>> = (0..100).map(|k| vec![0.05 + 0.001 * k as f64]).collect();
        let y: Vec<Vec<f64>> = (0..100).map(|k| vec![300.0 + (k % 7) as f64]).collect();
        let s = Scaling::fit(&u, &y).unwrap();
        let nu: Vec<f64> = u.iter().map(|v| s.normalize_input::<f64>(v)[0]).collect();
        let mean = nu.iter().sum::<f64>() / 100.0;
        let var = nu.iter().map(|v| v * v).sum::<f64>() / 100.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let back = s.denormalize_output(&s.normalize_output::<f64>(&y[3]));
        assert!((back[0] - y[3][0]).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_is_rejected() {
        let u = vec![vec![1.0]; 5];
        let y: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
        assert!(Scaling::fit(&u, &y).is_err());
    }
}
