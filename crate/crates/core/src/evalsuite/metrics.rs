//! Calibration and ranking metrics over collected predictions.

use serde::Serialize;

use crate::error::{Error, Result};

/// PIT levels `0.05, 0.10, …, 0.95`.
pub fn pit_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Default number of confidence bins for ECE.
pub const ECE_BINS: usize = 10;

/// Conditional mark distribution at an observed event and the observed mark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkPrediction {
    pub probs: Vec<f64>,
    pub true_mark: usize,
}

impl MarkPrediction {
    /// 1-based rank of the observed mark; ties go to the smaller mark id.
    pub fn rank(&self) -> usize {
        let p = self.probs[self.true_mark];
        1 + self
            .probs
            .iter()
            .enumerate()
            .filter(|&(j, q)| *q > p || (*q == p && j < self.true_mark))
            .count()
    }

    /// Most probable mark (smallest id on ties) and its probability.
    pub fn top(&self) -> (usize, f64) {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, p)| {
                if *p > best.1 {
                    (j, *p)
                } else {
                    best
                }
            })
    }
}

fn fraction_at_or_below(sorted: &[f64], q: f64) -> f64 {
    sorted.partition_point(|z| *z <= q) as f64 / sorted.len() as f64
}

fn sorted(pit: &[f64]) -> Result<Vec<f64>> {
    if pit.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut z = pit.to_vec();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// Mean absolute gap between the empirical PIT CDF and the diagonal over `levels`.
pub fn pce(pit: &[f64], levels: &[f64]) -> Result<f64> {
    let z = sorted(pit)?;
    Ok(levels
        .iter()
        .map(|q| (fraction_at_or_below(&z, *q) - q).abs())
        .sum::<f64>()
        / levels.len() as f64)
}

/// One row of the time reliability table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeReliability {
    pub level: f64,
    pub frequency: f64,
    pub count: usize,
}

/// Empirical frequency of `z ≤ q` for each level.
pub fn time_reliability(pit: &[f64], levels: &[f64]) -> Result<Vec<TimeReliability>> {
    let z = sorted(pit)?;
    Ok(levels
        .iter()
        .map(|q| TimeReliability {
            level: *q,
            frequency: fraction_at_or_below(&z, *q),
            count: z.partition_point(|v| *v <= *q),
        })
        .collect())
}

/// One confidence bin of the mark reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkReliability {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub count: usize,
}

/// Top-label confidence bins; the last bin is closed on the right.
pub fn mark_reliability(preds: &[MarkPrediction], bins: usize) -> Result<Vec<MarkReliability>> {
    if preds.is_empty() {
        return Err(Error::EmptySamples);
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("at least one bin is required".into()));
    }
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut counts = vec![0usize; bins];
    for p in preds {
        let (k, c) = p.top();
        let b = ((c * bins as f64).floor() as usize).min(bins - 1);
        conf[b] += c;
        hits[b] += usize::from(k == p.true_mark);
        counts[b] += 1;
    }
    Ok((0..bins)
        .map(|b| {
            let n = counts[b];
            MarkReliability {
                bin_lo: b as f64 / bins as f64,
                bin_hi: (b + 1) as f64 / bins as f64,
                mean_confidence: (n > 0).then(|| conf[b] / n as f64),
                accuracy: (n > 0).then(|| hits[b] as f64 / n as f64),
                count: n,
            }
        })
        .collect())
}

/// Top-label expected calibration error.
pub fn ece(preds: &[MarkPrediction], bins: usize) -> Result<f64> {
    let n = preds.len() as f64;
    Ok(mark_reliability(preds, bins)?
        .iter()
        .filter(|r| r.count > 0)
        .map(|r| {
            r.count as f64 / n
                * (r.accuracy.unwrap_or(0.0) - r.mean_confidence.unwrap_or(0.0)).abs()
        })
        .sum())
}

/// Fraction of predictions whose observed mark is among the top `n`.
pub fn accuracy_at_n(preds: &[MarkPrediction], n: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptySamples);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    Ok(preds.iter().filter(|p| p.rank() <= n).count() as f64 / preds.len() as f64)
}

/// Mean reciprocal rank of the observed mark.
pub fn mrr(preds: &[MarkPrediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(preds.iter().map(|p| 1.0 / p.rank() as f64).sum::<f64>() / preds.len() as f64)
}

/// Mean absolute difference between point predictions and observations.
pub fn mean_absolute_error(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(pairs.iter().map(|(p, o)| (p - o).abs()).sum::<f64>() / pairs.len() as f64)
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1): returns the
/// statistic and its asymptotic p-value.
pub fn ks_uniform(pit: &[f64]) -> Result<(f64, f64)> {
    let z = sorted(pit)?;
    let n = z.len() as f64;
    let d = z
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok((d, kolmogorov_survival(lambda)))
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(probs: &[f64], true_mark: usize) -> MarkPrediction {
        MarkPrediction {
            probs: probs.to_vec(),
            true_mark,
        }
    }

    #[test]
    fn pce_examples() {
        let grid: Vec<f64> = pit_levels().repeat(20);
        assert!(pce(&grid, &pit_levels()).unwrap() < 0.03);
        let zeros = vec![0.0; 50];
        assert!((pce(&zeros, &pit_levels()).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pce(&[], &pit_levels()).unwrap_err(), Error::EmptySamples);
    }

    #[test]
    fn ece_examples() {
        let confident: Vec<_> = (0..10).map(|_| pred(&[0.0, 1.0, 0.0], 1)).collect();
        assert_eq!(ece(&confident, ECE_BINS).unwrap(), 0.0);
        let coin: Vec<_> = (0..10).map(|i| pred(&[0.5, 0.5], i % 2)).collect();
        assert!(ece(&coin, ECE_BINS).unwrap().abs() < 1e-12);
        let over: Vec<_> = (0..10)
            .map(|i| pred(&[0.9, 0.1], usize::from(i >= 6)))
            .collect();
        assert!((ece(&over, ECE_BINS).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn reliability_examples() {
        let one = mark_reliability(&[pred(&[0.3, 0.7], 1)], ECE_BINS).unwrap();
        assert_eq!(one.iter().filter(|r| r.count > 0).count(), 1);
        assert_eq!(one[7].count, 1);
        let many: Vec<_> = (0..37).map(|i| pred(&[0.2, 0.3, 0.5], i % 3)).collect();
        let rows = mark_reliability(&many, ECE_BINS).unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 37);
        let t = time_reliability(&[0.1, 0.5, 0.9], &[0.5]).unwrap();
        assert_eq!(t[0].count, 2);
    }

    #[test]
    fn perfectly_calibrated_marks_stay_within_binomial_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let preds: Vec<_> = (0..20_000)
            .map(|_| {
                let c: f64 = rng.gen_range(0.5..1.0);
                let hit = rng.gen::<f64>() < c;
                pred(&[c, 1.0 - c], usize::from(!hit))
            })
            .collect();
        for r in mark_reliability(&preds, ECE_BINS)
            .unwrap()
            .iter()
            .filter(|r| r.count > 0)
        {
            let conf = r.mean_confidence.unwrap();
            let sigma = (conf * (1.0 - conf) / r.count as f64).sqrt();
            assert!((r.accuracy.unwrap() - conf).abs() < 3.0 * sigma + 1e-3);
        }
    }

    #[test]
    fn ranking_examples() {
        let second: Vec<_> = (0..5).map(|_| pred(&[0.5, 0.3, 0.2], 1)).collect();
        assert_eq!(accuracy_at_n(&second, 1).unwrap(), 0.0);
        assert_eq!(accuracy_at_n(&second, 3).unwrap(), 1.0);
        assert_eq!(mrr(&second).unwrap(), 0.5);
        let perfect: Vec<_> = (0..5)
            .map(|i| pred(&[0.1, 0.9], usize::from(i < 9)))
            .collect();
        assert_eq!(accuracy_at_n(&perfect, 1).unwrap(), 1.0);
        assert_eq!(mrr(&perfect).unwrap(), 1.0);
        for j in 0..4 {
            assert_eq!(pred(&[0.25; 4], j).rank(), j + 1);
        }
        assert_eq!(pred(&[0.25; 4], 2).top(), (0, 0.25));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mean_absolute_error(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        let obs = [0.5, 1.5, 3.0];
        let pairs: Vec<_> = obs.iter().map(|o| (1.0, *o)).collect();
        assert!((mean_absolute_error(&pairs).unwrap() - 3.0 / 3.0).abs() < 1e-15);
        let mut rev = pairs.clone();
        rev.reverse();
        assert_eq!(
            mean_absolute_error(&rev).unwrap(),
            mean_absolute_error(&pairs).unwrap()
        );
    }

    #[test]
    fn ks_matches_reference_distribution() {
        // p-values of the asymptotic Kolmogorov distribution at λ = 1.0 and 1.36
        assert!((kolmogorov_survival(1.0) - 0.269_999_671_677_355_5).abs() < 1e-9);
        assert!((kolmogorov_survival(1.36) - 0.049_485_876_755_377_9).abs() < 1e-9);
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_uniform(&uniform).unwrap();
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(p > 0.99);
        let skewed: Vec<f64> = uniform.iter().map(|z| z * z).collect();
        assert!(ks_uniform(&skewed).unwrap().1 < 1e-6);
    }

    proptest! {
        #[test]
        fn ranking_invariants(raw in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 5), 1..20), marks in prop::collection::vec(0usize..5, 20)) {
            let preds: Vec<_> = raw.iter().zip(&marks).map(|(r, k)| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                pred(&r.iter().map(|x| x / s).collect::<Vec<_>>(), *k)
            }).collect();
            let acc: Vec<f64> = (1..=5).map(|n| accuracy_at_n(&preds, n).unwrap()).collect();
            prop_assert!(acc.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(acc[4], 1.0);
            let m = mrr(&preds).unwrap();
            prop_assert!(m >= acc[0] && m <= 1.0);
        }
    }
}
