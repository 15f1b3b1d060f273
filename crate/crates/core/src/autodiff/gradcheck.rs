use super::{Tape, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Worst relative discrepancy between the tape gradient of `f` at `x` and
/// central differences with step `h`.
///
/// The relative error of a coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
/// Complex inputs are perturbed component-wise.
pub fn grad_check<T: Scalar>(
    f: impl Fn(&Tape<T>, Var) -> Result<Var>,
    x: &Tensor<T>,
    h: f64,
) -> Result<f64> {
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h, None)
}

/// [`grad_check`] over several inputs at once. With `max_coords = Some(n)`
/// only `n` evenly spaced coordinates per input are probed.
pub fn grad_check_many<T: Scalar>(
    f: impl Fn(&Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<T>],
    h: f64,
    max_coords: Option<usize>,
) -> Result<f64> {
    let eval = |inputs: &[Tensor<T>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        Ok(tape.item(out).to_f64())
    };

    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(&tape, v);
        let n = inputs[i].data().len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < n => (0..k).map(|j| j * n / k).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = inputs[i].data()[c];
            probe[i].data_mut()[c] = orig + T::from_f64(h);
            let plus = eval(&probe)?;
            probe[i].data_mut()[c] = orig - T::from_f64(h);
            let minus = eval(&probe)?;
            probe[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[c].to_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
