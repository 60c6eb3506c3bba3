use crate::error::{reject, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean absolute error and its (sub)gradient with respect to `prediction`.
///
/// The subgradient at an exact tie is 0.
pub fn l1_loss<T: Scalar>(prediction: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if prediction.shape() != target.shape() {
        return reject(format!(
            "l1 loss: prediction shape {:?} differs from target shape {:?}",
            prediction.shape(),
            target.shape()
        ));
    }
    let count = T::from_usize(prediction.len()).unwrap();
    let mut total = T::zero();
    let grad = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total = total + d.abs();
            if d > T::zero() {
                T::one() / count
            } else if d < T::zero() {
                -T::one() / count
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((total / count, Tensor::new(prediction.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_tensors_have_zero_loss() {
        let a = Tensor::<f64>::from_fn(vec![3, 2], |i| i as f64 * 0.1);
        let (loss, grad) = l1_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_element_example() {
        let p = Tensor::new(vec![2], vec![1.0f64, -1.0]).unwrap();
        let t = Tensor::zeros(vec![2]);
        let (loss, grad) = l1_loss(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[0.5, -0.5]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Tensor::<f64>::zeros(vec![2]);
        let t = Tensor::<f64>::zeros(vec![3]);
        assert!(l1_loss(&p, &t).is_err());
    }
}
