//! Pairwise gradient conflict metrics.

use crate::error::{Error, Result};

/// Norms below this make the angle undefined.
pub const NORM_FLOOR: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Cosine of the angle between the task gradients; `None` when either norm
/// is below [`NORM_FLOOR`].
pub fn cos_angle(time_grad: &[f64], mark_grad: &[f64]) -> Result<Option<f64>> {
    check_lengths(time_grad, mark_grad)?;
    let (nt, nm) = (norm(time_grad), norm(mark_grad));
    if nt < NORM_FLOOR || nm < NORM_FLOOR {
        return Ok(None);
    }
    let dot: f64 = time_grad.iter().zip(mark_grad).map(|(a, b)| a * b).sum();
    Ok(Some((dot / (nt * nm)).clamp(-1.0, 1.0)))
}

/// Gradient magnitude similarity `2‖a‖‖b‖ / (‖a‖² + ‖b‖²)`.
pub fn gms(time_grad: &[f64], mark_grad: &[f64]) -> Result<f64> {
    check_lengths(time_grad, mark_grad)?;
    gms_from_norms(norm(time_grad), norm(mark_grad))
}

pub(crate) fn gms_from_norms(nt: f64, nm: f64) -> Result<f64> {
    let den = nt * nt + nm * nm;
    if den == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(2.0 * nt * nm / den)
}

/// 1 when the time gradient dominates a conflicting pair, 0 when the mark
/// gradient does, `None` when the pair does not conflict.
pub fn tpi(time_grad: &[f64], mark_grad: &[f64]) -> Result<Option<u8>> {
    match cos_angle(time_grad, mark_grad)? {
        Some(c) if c < 0.0 => Ok(Some(u8::from(norm(time_grad) > norm(mark_grad)))),
        _ => Ok(None),
    }
}

/// Fraction of negative cosines.
pub fn cg_ratio(cos_series: &[f64]) -> Result<f64> {
    if cos_series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(cos_series.iter().filter(|c| **c < 0.0).count() as f64 / cos_series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cos_examples() {
        assert_eq!(cos_angle(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), Some(-1.0));
        assert_eq!(cos_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), Some(0.0));
        let c = cos_angle(&[1.0, 1.0], &[1.0, 0.0]).unwrap().unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cos_angle(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), None);
        assert_eq!(
            cos_angle(&[1.0], &[1.0, 0.0]).unwrap_err(),
            Error::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn gms_examples() {
        assert_eq!(gms(&[3.0, 4.0], &[0.0, 5.0]).unwrap(), 1.0);
        assert!((gms(&[1.0], &[2.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((gms(&[1.0], &[100.0]).unwrap() - 200.0 / 10001.0).abs() < 1e-15);
        assert_eq!(gms(&[0.0], &[0.0]).unwrap_err(), Error::BothZero);
    }

    #[test]
    fn tpi_examples() {
        assert_eq!(tpi(&[-2.0], &[1.0]).unwrap(), Some(1));
        assert_eq!(tpi(&[-1.0], &[2.0]).unwrap(), Some(0));
        assert_eq!(tpi(&[1.0], &[2.0]).unwrap(), None);
    }

    #[test]
    fn cg_examples() {
        assert_eq!(cg_ratio(&[-0.5, 0.2, -0.1, 0.4]).unwrap(), 0.5);
        assert_eq!(cg_ratio(&[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(cg_ratio(&[-0.1, -0.9]).unwrap(), 1.0);
        assert_eq!(cg_ratio(&[]).unwrap_err(), Error::EmptySeries);
    }

    fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(-5.0..5.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn cos_is_scale_invariant((a, b) in vecs(), c in 0.01..100.0f64) {
            let base = cos_angle(&a, &b).unwrap();
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let flipped: Vec<f64> = a.iter().map(|x| -x * c).collect();
            if let (Some(x), Some(y), Some(z)) = (base, cos_angle(&scaled, &b).unwrap(), cos_angle(&flipped, &b).unwrap()) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((x + z).abs() < 1e-12);
            }
        }

        #[test]
        fn gms_symmetric_and_bounded((a, b) in vecs()) {
            if let Ok(g) = gms(&a, &b) {
                prop_assert_eq!(g, gms(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&g));
            }
        }

        #[test]
        fn gms_is_one_iff_norms_equal(a in prop::collection::vec(-5.0..5.0f64, 3), s in 0.1..10.0f64) {
            let b: Vec<f64> = a.iter().rev().map(|x| x * s).collect();
            prop_assume!(norm(&a) > 1e-6);
            let g = gms(&a, &b).unwrap();
            prop_assert_eq!((g - 1.0).abs() < 1e-12, (s - 1.0).abs() < 1e-6);
        }
    }
}
