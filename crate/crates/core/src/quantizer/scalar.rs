use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `q[i] = round(x[i] / step)`, halves rounded away from zero.
pub fn scalar_quantize<T: Scalar>(x: &[T], step: T) -> Result<Vec<i64>> {
    if !(step > T::zero()) {
        return Err(Error::NonpositiveStep);
    }
    x.iter()
        .map(|&v| {
            (v / step)
                .round()
                .to_i64()
                .ok_or_else(|| Error::InvalidDimensions(format!("{v} / {step} does not fit an integer level")))
        })
        .collect()
}

pub fn scalar_dequantize<T: Scalar>(q: &[i64], step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::NonpositiveStep);
    }
    Ok(q.iter().map(|&v| T::lit(v as f64) * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_rule() {
        assert_eq!(scalar_quantize(&[2.4f64, -1.5, 1.5, 0.5, -0.49], 1.0).unwrap(), vec![2, -2, 2, 1, 0]);
        assert_eq!(scalar_quantize(&[0.3f32], 0.2).unwrap(), vec![2]);
    }

    #[test]
    fn integers_are_fixed_points() {
        let x = [-3.0f64, 0.0, 7.0, 12.0];
        let q = scalar_quantize(&x, 1.0).unwrap();
        assert_eq!(scalar_dequantize(&q, 1.0).unwrap(), x.to_vec());
    }

    #[test]
    fn step_must_be_positive() {
        assert_eq!(scalar_quantize(&[1.0f64], 0.0), Err(Error::NonpositiveStep));
        assert_eq!(scalar_quantize(&[1.0f64], -1.0), Err(Error::NonpositiveStep));
        assert_eq!(scalar_quantize(&[1.0f64], f64::NAN), Err(Error::NonpositiveStep));
        assert!(scalar_dequantize::<f64>(&[1], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn error_within_half_step(x in prop::collection::vec(-1e3f64..1e3, 1..64), step in 1e-3f64..10.0) {
            let q = scalar_quantize(&x, step).unwrap();
            let y = scalar_dequantize(&q, step).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() <= step / 2.0 * (1.0 + 1e-12));
            }
        }
    }
}
