use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Runs `h_t = W h_{t-1} + U x_t` from `h_0 = 0` and compares every state
/// against the unrolled sum `Σ_{i<=t} W^{t-i} U x_i`. Returns the largest
/// elementwise deviation.
pub fn linear_srn_decomposition_check<T: Scalar>(w: &Tensor<T>, u: &Tensor<T>, inputs: &[Vec<T>]) -> Result<T> {
    let h = w.rows();
    if w.cols() != h {
        return Err(Error::ShapeMismatch { context: "recurrent matrix", left: w.shape().to_vec(), right: vec![h, h] });
    }
    if u.rows() != h {
        return Err(Error::DimensionMismatch { context: "input matrix rows", expected: h, found: u.rows() });
    }
    let column = |v: &[T]| -> Result<Tensor<T>> {
        if v.len() != u.cols() {
            return Err(Error::DimensionMismatch { context: "input vector", expected: u.cols(), found: v.len() });
        }
        Tensor::matrix(v.len(), 1, v.to_vec())
    };
    let ux: Vec<Tensor<T>> = inputs.iter().map(|x| u.matmul(&column(x)?)).collect::<Result<_>>()?;

    // powers[k] = W^k
    let mut powers = vec![Tensor::identity(h)];
    for k in 1..inputs.len() {
        let next = powers[k - 1].matmul(w)?;
        powers.push(next);
    }

    let mut state = Tensor::zeros(&[h, 1]);
    let mut worst = T::zero();
    for t in 0..inputs.len() {
        state = w.matmul(&state)?.add(&ux[t])?;
        let mut unrolled = Tensor::zeros(&[h, 1]);
        for (i, term) in ux.iter().enumerate().take(t + 1) {
            unrolled = unrolled.add(&powers[t - i].matmul(term)?)?;
        }
        worst = worst.max(state.max_abs_diff(&unrolled));
    }
    Ok(worst)
}
