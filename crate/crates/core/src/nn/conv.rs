use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_shapes(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize)> {
    let is = input.shape();
    let ws = weights.shape();
    if is.len() != 3 {
        return Err(Error::Shape(format!("conv2d input {is:?}, expected [Cin, H, W]")));
    }
    if ws.len() != 4 || ws[2] != 3 || ws[3] != 3 || ws[1] != is[0] {
        return Err(Error::Shape(format!(
            "conv2d weights {ws:?} incompatible with input {is:?}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [ws[0]] {
            return Err(Error::Shape(format!("conv2d bias {:?}", b.shape())));
        }
    }
    Ok((ws[0], is[0], is[1], is[2]))
}

/// 3x3 cross-correlation with stride 1 and zero padding 1, so the spatial
/// extent is preserved. Written as nine shifted row AXPYs per channel pair;
/// the inner loops run over contiguous rows.
pub fn conv2d_3x3(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (cout, cin, h, w) = check_shapes(input, weights, Some(bias))?;
    let mut out = Tensor::zeros(&[cout, h, w]);
    let plane = h * w;
    for co in 0..cout {
        let out_plane = &mut out.data_mut()[co * plane..(co + 1) * plane];
        out_plane.fill(bias.data()[co]);
        for ci in 0..cin {
            let in_plane = &input.data()[ci * plane..(ci + 1) * plane];
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let wv = weights.data()[((co * cin + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize).min(h as isize - dy) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize).min(w as isize - dx) as usize;
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let orow = &mut out_plane[y * w + x0..y * w + x1];
                        let irow = &in_plane
                            [(iy * w as usize) + (x0 as isize + dx) as usize..][..x1 - x0];
                        for (o, &i) in orow.iter_mut().zip(irow) {
                            *o += wv * i;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of the 3x3 convolution with respect to input, weights and bias.
pub fn conv2d_3x3_backward(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (cout, cin, h, w) = check_shapes(input, weights, None)?;
    if dout.shape() != [cout, h, w] {
        return Err(Error::Shape(format!(
            "conv2d backward: dout {:?}, expected [{cout}, {h}, {w}]",
            dout.shape()
        )));
    }
    let mut dinput = Tensor::zeros(input.shape());
    let mut dweights = Tensor::zeros(weights.shape());
    let mut dbias = Tensor::zeros(&[cout]);
    let plane = h * w;
    for co in 0..cout {
        let dout_plane = &dout.data()[co * plane..(co + 1) * plane];
        dbias.data_mut()[co] = dout_plane.iter().sum();
        for ci in 0..cin {
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize).min(h as isize - dy) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize).min(w as isize - dx) as usize;
                    let wv = weights.data()[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let mut wacc = 0.0;
                    {
                        let in_plane = &input.data()[ci * plane..(ci + 1) * plane];
                        let din_plane = &mut dinput.data_mut()[ci * plane..(ci + 1) * plane];
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ibase = iy * w + (x0 as isize + dx) as usize;
                            let grow = &dout_plane[y * w + x0..y * w + x1];
                            let irow = &in_plane[ibase..ibase + (x1 - x0)];
                            for (&g, &i) in grow.iter().zip(irow) {
                                wacc += g * i;
                            }
                            if wv != 0.0 {
                                let drow = &mut din_plane[ibase..ibase + (x1 - x0)];
                                for (d, &g) in drow.iter_mut().zip(grow) {
                                    *d += wv * g;
                                }
                            }
                        }
                    }
                    dweights.data_mut()[((co * cin + ci) * 3 + ky) * 3 + kx] = wacc;
                }
            }
        }
    }
    Ok((dinput, dweights, dbias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = crate::rng::stream(seed, "conv-test", &[]);
        Tensor::from_vec(
            shape,
            (0..shape.iter().product())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn centered_delta_kernel_is_identity() {
        let input = rand_tensor(&[2, 4, 5], 1);
        let mut w = Tensor::zeros(&[2, 2, 3, 3]);
        // kernel co==ci gets a 1 at the center tap
        for co in 0..2 {
            w.data_mut()[((co * 2 + co) * 3 + 1) * 3 + 1] = 1.0;
        }
        let out = conv2d_3x3(&input, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn all_ones_kernel_counts_padding() {
        let c = 3.0;
        let input = Tensor::from_vec(&[1, 4, 4], vec![c; 16]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d_3x3(&input, &w, &Tensor::zeros(&[1])).unwrap();
        assert_abs_diff_eq!(out.data()[5], 9.0 * c, epsilon = 1e-12); // interior
        assert_abs_diff_eq!(out.data()[0], 4.0 * c, epsilon = 1e-12); // corner
        assert_abs_diff_eq!(out.data()[1], 6.0 * c, epsilon = 1e-12); // edge
    }

    /// Naive six-nested-loop oracle straight from the definition.
    fn naive_conv(input: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (cin, h, wid) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let cout = w.shape()[0];
        let mut out = Tensor::zeros(&[cout, h, wid]);
        for co in 0..cout {
            for y in 0..h {
                for x in 0..wid {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = y as isize + ky as isize - 1;
                                let ix = x as isize + kx as isize - 1;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < wid as isize {
                                    acc += w.data()[((co * cin + ci) * 3 + ky) * 3 + kx]
                                        * input.data()
                                            [(ci * h + iy as usize) * wid + ix as usize];
                                }
                            }
                        }
                    }
                    out.data_mut()[(co * h + y) * wid + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_loop_oracle() {
        let input = rand_tensor(&[2, 5, 5], 10);
        let w = rand_tensor(&[3, 2, 3, 3], 11);
        let b = rand_tensor(&[3], 12);
        let out = conv2d_3x3(&input, &w, &b).unwrap();
        let want = naive_conv(&input, &w, &b);
        for (a, e) in out.data().iter().zip(want.data()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_in_input() {
        let w = rand_tensor(&[2, 2, 3, 3], 20);
        let b = Tensor::zeros(&[2]);
        let x = rand_tensor(&[2, 4, 6], 21);
        let y = rand_tensor(&[2, 4, 6], 22);
        let (alpha, beta) = (0.7, -1.9);
        let mut combo = Tensor::zeros(&[2, 4, 6]);
        for ((c, &a), &bb) in combo.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
            *c = alpha * a + beta * bb;
        }
        let fc = conv2d_3x3(&combo, &w, &b).unwrap();
        let fx = conv2d_3x3(&x, &w, &b).unwrap();
        let fy = conv2d_3x3(&y, &w, &b).unwrap();
        for i in 0..fc.len() {
            assert_abs_diff_eq!(
                fc.data()[i],
                alpha * fx.data()[i] + beta * fy.data()[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let input = rand_tensor(&[2, 4, 4], 30);
        let w = rand_tensor(&[3, 1, 3, 3], 31); // cin mismatch
        assert!(conv2d_3x3(&input, &w, &Tensor::zeros(&[3])).is_err());
    }
}
