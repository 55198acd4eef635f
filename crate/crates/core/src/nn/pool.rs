use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 max-pooling with stride 2 and ceil-mode output extents:
/// a trailing odd row or column forms a partial window of its own.
/// Returns the pooled tensor and, per output element, the flat index of its
/// source maximum (first occurrence in row-major window order) for the
/// backward pass.
pub fn maxpool2x2_ceil(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let is = input.shape();
    if is.len() != 3 {
        return Err(Error::Shape(format!(
            "maxpool input {is:?}, expected [C, H, W]"
        )));
    }
    let (c, h, w) = (is[0], is[1], is[2]);
    let ho = h.div_ceil(2);
    let wo = w.div_ceil(2);
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let mut argmax = vec![0usize; c * ho * wo];
    for ch in 0..c {
        let plane = &input.data()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for iy in (2 * oy)..((2 * oy + 2).min(h)) {
                    for ix in (2 * ox)..((2 * ox + 2).min(w)) {
                        let idx = iy * w + ix;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.data_mut()[(ch * ho + oy) * wo + ox] = best;
                argmax[(ch * ho + oy) * wo + ox] = ch * h * w + best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient back to its argmax source element.
pub fn maxpool2x2_ceil_backward(
    input_shape: &[usize],
    argmax: &[usize],
    dout: &Tensor,
) -> Result<Tensor> {
    if dout.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool backward: {} gradients for {} argmax entries",
            dout.len(),
            argmax.len()
        )));
    }
    let mut dinput = Tensor::zeros(input_shape);
    for (&src, &g) in argmax.iter().zip(dout.data()) {
        dinput.data_mut()[src] += g;
    }
    Ok(dinput)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_4x4_takes_window_maxima() {
        let input = Tensor::from_vec(
            &[1, 4, 4],
            vec![
                1.0, 2.0, 3.0, 4.0, //
                5.0, 6.0, 7.0, 8.0, //
                9.0, 10.0, 11.0, 12.0, //
                13.0, 14.0, 15.0, 16.0,
            ],
        )
        .unwrap();
        let (out, _) = maxpool2x2_ceil(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn ceil_chain_23_to_3() {
        // height 23 pools to 12, then 6, then 3
        let mut t = Tensor::zeros(&[1, 23, 8]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let (t, _) = maxpool2x2_ceil(&t).unwrap();
        assert_eq!(t.shape()[1], 12);
        let (t, _) = maxpool2x2_ceil(&t).unwrap();
        assert_eq!(t.shape()[1], 6);
        let (t, _) = maxpool2x2_ceil(&t).unwrap();
        assert_eq!(t.shape()[1], 3);
    }

    #[test]
    fn output_dominates_source_window() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "pool", &[]);
        let input = Tensor::from_vec(
            &[3, 5, 7],
            (0..105).map(|_| rng.gen_range(-10.0..10.0)).collect(),
        )
        .unwrap();
        let (out, argmax) = maxpool2x2_ceil(&input).unwrap();
        let (h, w) = (5usize, 7usize);
        let (ho, wo) = (3usize, 4usize);
        for c in 0..3 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let o = out.data()[(c * ho + oy) * wo + ox];
                    let mut found = false;
                    for iy in (2 * oy)..(2 * oy + 2).min(h) {
                        for ix in (2 * ox)..(2 * ox + 2).min(w) {
                            let v = input.data()[(c * h + iy) * w + ix];
                            assert!(o >= v, "pool output below a window element");
                            if o == v {
                                found = true;
                            }
                        }
                    }
                    assert!(found, "pool output not a member of its window");
                    assert_eq!(input.data()[argmax[(c * ho + oy) * wo + ox]], o);
                }
            }
        }
    }

    #[test]
    fn tie_routes_to_first_occurrence() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, argmax) = maxpool2x2_ceil(&input).unwrap();
        assert_eq!(argmax, vec![0]);
        let dout = Tensor::from_vec(&[1, 1, 1], vec![2.5]).unwrap();
        let din = maxpool2x2_ceil_backward(&[1, 2, 2], &argmax, &dout).unwrap();
        assert_eq!(din.data(), &[2.5, 0.0, 0.0, 0.0]);
    }
}
