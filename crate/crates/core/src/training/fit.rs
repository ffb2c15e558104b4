use crate::error::{dim_check, Error, Result};

/// FIT index in percent: `100 (1 - sum ||y - y_p|| / sum ||y_p - y_avg||)`,
/// with `y_avg` the time average of the plant output `y_p`.
pub fn fit_index(model: &[Vec<f64>], plant: &[Vec<f64>]) -> Result<f64> {
    dim_check(model.len() == plant.len(), || format!("{} model vs {} plant samples", model.len(), plant.len()))?;
    if plant.len() < 2 {
        return Err(Error::InvalidArgument("FIT needs at least two samples".into()));
    }
    let p = plant[0].len();
    let mut avg = vec![0.0; p];
    for y in plant {
        dim_check(y.len() == p, || "ragged plant samples".into())?;
        for (a, v) in avg.iter_mut().zip(y) {
            *a += v / plant.len() as f64;
        }
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let num: f64 = model.iter().zip(plant).map(|(a, b)| dist(a, b)).sum();
    let den: f64 = plant.iter().map(|b| dist(b, &avg)).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("constant plant output: FIT undefined".into()));
    }
    Ok(100.0 * (1.0 - num / den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn perfect_and_mean_models() {
        let y = col(&[1.0, 4.0, 2.0, 8.0]);
        assert_eq!(fit_index(&y, &y).unwrap(), 100.0);
        assert!(fit_index(&col(&[3.75; 4]), &y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_example() {
        let f = fit_index(&col(&[1.0, 2.0, 4.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert!((f - 50.0).abs() < 1e-12);
    }

    #[test]
    fn constant_plant_rejected() {
        assert!(fit_index(&col(&[1.0, 2.0]), &col(&[3.0, 3.0])).is_err());
    }
}
