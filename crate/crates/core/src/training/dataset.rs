use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::IoSequence;
use crate::error::{Error, Result};
use crate::nnarx::Scaling;
use crate::scalar::Real;

/// `count` windows of length `len` with uniformly random (possibly
/// overlapping) start offsets.
pub fn extract_subsequences(seq: &IoSequence, len: usize, count: usize, seed: u64) -> Result<Vec<IoSequence>> {
    if len == 0 || len > seq.len() {
        return Err(Error::InvalidArgument(format!(
            "subsequence length {len} does not fit a record of {} samples",
            seq.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| seq.window(rng.gen_range(0..=seq.len() - len), len))
        .collect()
}

/// A normalized subsequence ready for the simulation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsequence<T: Real> {
    pub inputs: Vec<DVector<T>>,
    pub outputs: Vec<DVector<T>>,
}

impl<T: Real> Subsequence<T> {
    pub fn normalized(seq: &IoSequence, scaling: &Scaling) -> Self {
        Self {
            inputs: seq.inputs.iter().map(|u| scaling.normalize_input(u)).collect(),
            outputs: seq.outputs.iter().map(|y| scaling.normalize_output(y)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Training, validation and test windows drawn from distinct experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<IoSequence>,
    pub validation: Vec<IoSequence>,
    pub test: Vec<IoSequence>,
}

impl Dataset {
    /// Normalization statistics of the training partition.
    pub fn scaling(&self) -> Result<Scaling> {
        let inputs: Vec<Vec<f64>> = self.train.iter().flat_map(|s| s.inputs.iter().cloned()).collect();
        let outputs: Vec<Vec<f64>> = self.train.iter().flat_map(|s| s.outputs.iter().cloned()).collect();
        Scaling::fit(&inputs, &outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> IoSequence {
        IoSequence::new(1.0, (0..n).map(|k| vec![k as f64]).collect(), (0..n).map(|k| vec![-(k as f64)]).collect()).unwrap()
    }

    #[test]
    fn shapes_and_determinism() {
        let s = ramp(2500);
        let w = extract_subsequences(&s, 400, 120, 3).unwrap();
        assert_eq!(w.len(), 120);
        assert!(w.iter().all(|x| x.len() == 400));
        assert_eq!(w, extract_subsequences(&s, 400, 120, 3).unwrap());
        for x in &w {
            let start = x.inputs[0][0] as usize;
            assert_eq!(x.inputs[399][0] as usize, start + 399);
        }
    }

    #[test]
    fn full_length_window_is_the_record() {
        let s = ramp(50);
        assert_eq!(extract_subsequences(&s, 50, 1, 0).unwrap()[0], s);
        assert!(extract_subsequences(&s, 51, 1, 0).is_err());
    }
}
