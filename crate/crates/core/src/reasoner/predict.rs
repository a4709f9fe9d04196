use super::ReasonerError;
use crate::ontology::Direction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least-squares line through `(t, value)` samples.
pub fn fit_line(samples: &[(f64, f64)]) -> Result<LineFit, ReasonerError> {
    if samples.len() < 2 {
        return Err(ReasonerError::InsufficientHistory(samples.len()));
    }
    let n = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_v = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in samples {
        sxy += (t - mean_t) * (v - mean_v);
        sxx += (t - mean_t) * (t - mean_t);
    }
    if sxx == 0.0 {
        return Err(ReasonerError::InsufficientHistory(1));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: mean_v - slope * mean_t,
    })
}

/// Time (on the samples' clock) at which the fitted line reaches `threshold`,
/// or `None` when the trend moves away from it.
pub fn predict_crossing(
    samples: &[(f64, f64)],
    threshold: f64,
    direction: Direction,
) -> Result<Option<f64>, ReasonerError> {
    let fit = fit_line(samples)?;
    let approaching = match direction {
        Direction::Below => fit.slope < 0.0,
        Direction::Above => fit.slope > 0.0,
    };
    if !approaching {
        return Ok(None);
    }
    Ok(Some((threshold - fit.intercept) / fit.slope))
}

/// Projected time at which SoC falls to `fault_soc`, measured on the same
/// clock as the samples (seconds). `None` when SoC is not falling.
pub fn predict_low_battery(
    samples: &[(f64, f64)],
    fault_soc: f64,
) -> Result<Option<f64>, ReasonerError> {
    predict_crossing(samples, fault_soc, Direction::Below)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_point_extrapolation() {
        let t = predict_low_battery(&[(0.0, 100.0), (60.0, 98.0)], 10.0)
            .unwrap()
            .unwrap();
        assert!((t - 2700.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn flat_soc_has_no_crossing() {
        let flat: Vec<_> = (0..10).map(|i| (i as f64, 80.0)).collect();
        assert_eq!(predict_low_battery(&flat, 10.0).unwrap(), None);
        assert_eq!(predict_low_battery(&[(0.0, 50.0), (1.0, 51.0)], 10.0).unwrap(), None);
    }

    #[test]
    fn needs_two_samples() {
        assert_eq!(
            predict_low_battery(&[(0.0, 50.0)], 10.0),
            Err(ReasonerError::InsufficientHistory(1))
        );
        assert_eq!(
            predict_low_battery(&[], 10.0),
            Err(ReasonerError::InsufficientHistory(0))
        );
    }

    #[test]
    fn noisy_ramp_within_ten_percent() {
        // closed form: 100 - 0.05 t = 15  =>  t = 1700 s
        let exact = (100.0 - 15.0) / 0.05;
        let noise = Normal::new(0.0, 0.1).unwrap();
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<_> = (0..60)
                .map(|i| {
                    let t = i as f64;
                    (t, 100.0 - 0.05 * t + noise.sample(&mut rng))
                })
                .collect();
            let t = predict_low_battery(&samples, 15.0).unwrap().unwrap();
            assert!((t - exact).abs() / exact <= 0.10, "seed {seed}: {t}");
        }
    }

    #[test]
    fn rising_temperature_crossing() {
        let s = [(0.0, 60.0), (10.0, 70.0)];
        let t = predict_crossing(&s, 100.0, Direction::Above).unwrap().unwrap();
        assert!((t - 40.0).abs() < 1e-9);
    }
}
