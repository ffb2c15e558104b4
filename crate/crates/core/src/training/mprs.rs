use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::InputBox;
use crate::error::{Error, Result};

/// Multilevel pseudo-random excitation: hold a uniformly drawn level for a
/// uniformly drawn number of steps, repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MprsConfig {
    /// Explicit levels; when empty, `level_count` levels evenly span the box.
    pub levels: Vec<f64>,
    pub level_count: usize,
    pub dwell_min: usize,
    pub dwell_max: usize,
}

impl Default for MprsConfig {
    fn default() -> Self {
        Self {
            levels: Vec::new(),
            level_count: 8,
            dwell_min: 10,
            dwell_max: 50,
        }
    }
}

impl MprsConfig {
    pub fn resolved_levels(&self, input_box: &InputBox) -> Result<Vec<f64>> {
        if !self.levels.is_empty() {
            return Ok(self.levels.clone());
        }
        if input_box.dim() != 1 {
            return Err(Error::InvalidArgument("level generation is single-input".into()));
        }
        Ok(evenly_spaced_levels(input_box.lower[0], input_box.upper[0], self.level_count))
    }
}

/// `count` levels from `lo` to `hi` inclusive.
pub fn evenly_spaced_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn generate_mprs(
    levels: &[f64],
    dwell: (usize, usize),
    length: usize,
    input_box: &InputBox,
    seed: u64,
) -> Result<Vec<f64>> {
    let (dmin, dmax) = dwell;
    if levels.is_empty() {
        return Err(Error::InvalidArgument("MPRS needs at least one level".into()));
    }
    if dmin == 0 || dmax < dmin {
        return Err(Error::InvalidArgument(format!("invalid dwell range [{dmin}, {dmax}]")));
    }
    if let Some(bad) = levels.iter().find(|l| !input_box.contains(&[**l], 0.0)) {
        return Err(Error::InvalidArgument(format!("MPRS level {bad} lies outside the input box")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(length);
    while out.len() < length {
        let level = levels[rng.gen_range(0..levels.len())];
        let hold = rng.gen_range(dmin..=dmax);
        out.extend(std::iter::repeat(level).take(hold.min(length - out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_dwell_gives_fixed_plateaus() {
        let b = InputBox::water_heater();
        let s = generate_mprs(&[0.05, 0.18], (10, 10), 30, &b, 1).unwrap();
        assert_eq!(s.len(), 30);
        for chunk in s.chunks(10) {
            assert!(chunk.iter().all(|v| *v == chunk[0]));
        }
    }

    #[test]
    fn deterministic_and_in_box() {
        let b = InputBox::water_heater();
        let levels = MprsConfig::default().resolved_levels(&b).unwrap();
        assert_eq!(levels.len(), 8);
        assert_eq!((levels[0], levels[7]), (0.05, 0.18));
        let a = generate_mprs(&levels, (10, 50), 2500, &b, 9).unwrap();
        assert_eq!(a, generate_mprs(&levels, (10, 50), 2500, &b, 9).unwrap());
        assert_eq!(a.len(), 2500);
        assert!(a.iter().all(|v| b.contains(&[*v], 0.0)));
        let mut run = 1;
        for w in a.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                assert!(run >= 10);
                run = 1;
            }
        }
    }

    #[test]
    fn rejects_levels_outside_box() {
        let b = InputBox::water_heater();
        assert!(generate_mprs(&[0.2], (10, 50), 10, &b, 0).is_err());
        assert!(generate_mprs(&[0.1], (0, 5), 10, &b, 0).is_err());
    }
}
