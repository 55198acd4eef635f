use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Fully connected layer: `out = W x + b` with `W` of shape `[M, N]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.len();
    let ws = weights.shape();
    if ws.len() != 2 || ws[1] != n || bias.shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "dense: weights {ws:?}, bias {:?}, input length {n}",
            bias.shape()
        )));
    }
    let m = ws[0];
    let mut out = Tensor::zeros(&[m]);
    for i in 0..m {
        let row = weights.row(i);
        let mut acc = bias.data()[i];
        for (w, x) in row.iter().zip(input.data()) {
            acc += w * x;
        }
        out.data_mut()[i] = acc;
    }
    Ok(out)
}

pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if dout.len() != m || input.len() != n {
        return Err(Error::Shape(format!(
            "dense backward: dout {}, input {}, weights [{m}, {n}]",
            dout.len(),
            input.len()
        )));
    }
    let mut dinput = Tensor::zeros(&[n]);
    let mut dweights = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let g = dout.data()[i];
        let wrow = weights.row(i);
        let drow = dweights.row_mut(i);
        let din = dinput.data_mut();
        for j in 0..n {
            drow[j] = g * input.data()[j];
            din[j] += g * wrow[j];
        }
    }
    Ok((dinput, dweights, dout.clone()))
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient mask is 1 where the pre-activation was strictly positive.
pub fn relu_backward(input: &Tensor, dout: &Tensor) -> Result<Tensor> {
    if input.shape() != dout.shape() {
        return Err(Error::Shape("relu backward shape mismatch".to_string()));
    }
    let mut din = dout.clone();
    for (d, &x) in din.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(din)
}

#[derive(Debug, Clone)]
pub struct DropoutMask {
    kept: Vec<bool>,
}

/// Inverted 50% dropout: kept entries are scaled by 2 during training so
/// evaluation applies the identity.
pub fn dropout50<R: Rng>(input: &Tensor, rng: &mut R, training: bool) -> (Tensor, DropoutMask) {
    if !training {
        return (
            input.clone(),
            DropoutMask {
                kept: vec![true; input.len()],
            },
        );
    }
    let mut out = input.clone();
    let mut kept = vec![false; input.len()];
    for (v, k) in out.data_mut().iter_mut().zip(kept.iter_mut()) {
        *k = rng.gen::<f64>() < 0.5;
        *v = if *k { *v * 2.0 } else { 0.0 };
    }
    (out, DropoutMask { kept })
}

pub fn dropout50_backward(mask: &DropoutMask, dout: &Tensor, training: bool) -> Result<Tensor> {
    if mask.kept.len() != dout.len() {
        return Err(Error::Shape("dropout backward shape mismatch".to_string()));
    }
    if !training {
        return Ok(dout.clone());
    }
    let mut din = dout.clone();
    for (d, &k) in din.data_mut().iter_mut().zip(&mask.kept) {
        *d = if k { *d * 2.0 } else { 0.0 };
    }
    Ok(din)
}
