//! 3×3, stride 1, zero-padded ("same") convolution and its adjoints.
//!
//! Layouts are channel-major: input `c_in×h×w`, weight `c_out×c_in×3×3`.

/// Patch matrix `(c_in·9)×(h·w)`: row `(c, ky, kx)` holds the input plane
/// shifted by `(ky-1, kx-1)`, zero outside.
fn im2col(input: &[f64], c_in: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut cols = vec![0.0; c_in * 9 * plane];
    for c in 0..c_in {
        let in_c = &input[c * plane..(c + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 3 + ky) * 3 + kx) * plane..][..plane];
                let (y0, y1) = valid_range(ky, h);
                let (x0, x1) = valid_range(kx, w);
                for y in y0..y1 {
                    let iy = y + ky - 1;
                    row[y * w + x0..y * w + x1]
                        .copy_from_slice(&in_c[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; c_in * plane];
    for c in 0..c_in {
        let out_c = &mut out[c * plane..(c + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 3 + ky) * 3 + kx) * plane..][..plane];
                let (y0, y1) = valid_range(ky, h);
                let (x0, x1) = valid_range(kx, w);
                for y in y0..y1 {
                    let iy = y + ky - 1;
                    let dst = &mut out_c[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv3x3_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
) -> Vec<f64> {
    let plane = h * w;
    let k = c_in * 9;
    let cols = im2col(input, c_in, h, w);
    let mut out = vec![0.0; c_out * plane];
    for o in 0..c_out {
        let out_o = &mut out[o * plane..(o + 1) * plane];
        out_o.fill(bias[o]);
        for (j, &wv) in weight[o * k..(o + 1) * k].iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            for (d, s) in out_o.iter_mut().zip(&cols[j * plane..(j + 1) * plane]) {
                *d += wv * s;
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let plane = h * w;
    let k = c_in * 9;
    let cols = im2col(input, c_in, h, w);
    let mut grad_cols = if need_input_grad {
        vec![0.0; k * plane]
    } else {
        Vec::new()
    };
    for o in 0..c_out {
        let go = &grad_out[o * plane..(o + 1) * plane];
        grad_bias[o] += go.iter().sum::<f64>();
        for j in 0..k {
            let col = &cols[j * plane..(j + 1) * plane];
            grad_weight[o * k + j] += go.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
            if need_input_grad {
                let wv = weight[o * k + j];
                for (d, g) in grad_cols[j * plane..(j + 1) * plane].iter_mut().zip(go) {
                    *d += wv * g;
                }
            }
        }
    }
    if need_input_grad {
        col2im(&grad_cols, c_in, h, w)
    } else {
        Vec::new()
    }
}

/// Output rows/cols whose tap `k` lands inside an extent of `n`.
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1.min(n), n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}
