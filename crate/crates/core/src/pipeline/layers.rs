//! Convolution, bilinear upsampling and ReLU with explicit backward passes.

/// `C = alpha·op(A)·op(B) + beta·C` for row-major buffers, where `op` is an
/// optional transpose. `A` is `m×k` after `op`, `B` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: A has wrong size");
    assert_eq!(b.len(), k * n, "gemm: B has wrong size");
    assert_eq!(c.len(), m * n, "gemm: C has wrong size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above pin every buffer to exactly the extent the
    // strides address, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel convolution with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    #[cfg(test)]
    fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Unrolls input patches into a `(C_in·k·k) × (H_out·W_out)` matrix.
pub(crate) fn im2col(shape: &ConvShape, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = shape.output_hw(h, w);
    let k = shape.kernel;
    let cols = ho * wo;
    let mut out = vec![0.0; shape.patch_len() * cols];
    for c in 0..shape.in_channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * shape.stride + ky) as isize - shape.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * shape.stride + kx) as isize - shape.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub(crate) fn col2im(shape: &ConvShape, cols_buf: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = shape.output_hw(h, w);
    let k = shape.kernel;
    let cols = ho * wo;
    let mut out = vec![0.0; shape.in_channels * h * w];
    for c in 0..shape.in_channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols_buf[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * shape.stride + ky) as isize - shape.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * shape.stride + kx) as isize - shape.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution; returns the output and the unrolled input for the
/// backward pass.
pub(crate) fn conv_forward(
    shape: &ConvShape,
    weight: &[f64],
    bias: &[f64],
    input: &[f64],
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (ho, wo) = shape.output_hw(h, w);
    let cols = ho * wo;
    let col = if shape.kernel == 1 && shape.stride == 1 && shape.pad == 0 {
        input.to_vec()
    } else {
        im2col(shape, input, h, w)
    };
    let mut out = vec![0.0; shape.out_channels * cols];
    for (o, b) in bias.iter().enumerate() {
        out[o * cols..(o + 1) * cols].fill(*b);
    }
    gemm(
        shape.out_channels,
        shape.patch_len(),
        cols,
        weight,
        false,
        &col,
        false,
        1.0,
        &mut out,
    );
    (out, col)
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    shape: &ConvShape,
    weight: &[f64],
    col: &[f64],
    grad_out: &[f64],
    h: usize,
    w: usize,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let (ho, wo) = shape.output_hw(h, w);
    let cols = ho * wo;
    let p = shape.patch_len();
    gemm(
        shape.out_channels,
        cols,
        p,
        grad_out,
        false,
        col,
        true,
        1.0,
        grad_weight,
    );
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out[o * cols..(o + 1) * cols].iter().sum::<f64>();
    }
    if !need_input_grad {
        return None;
    }
    let mut dcol = vec![0.0; p * cols];
    gemm(
        p,
        shape.out_channels,
        cols,
        weight,
        true,
        grad_out,
        false,
        0.0,
        &mut dcol,
    );
    if shape.kernel == 1 && shape.stride == 1 && shape.pad == 0 {
        Some(dcol)
    } else {
        Some(col2im(shape, &dcol, h, w))
    }
}

/// Per output coordinate: two source indices and their weights
/// (half-pixel centers, edge-clamped).
fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, 1.0 - frac, frac)
        })
        .collect()
}

pub(crate) fn upsample_bilinear(
    input: &[f64],
    channels: usize,
    (h, w): (usize, usize),
    (ho, wo): (usize, usize),
) -> Vec<f64> {
    if (h, w) == (ho, wo) {
        return input.to_vec();
    }
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut out = vec![0.0; channels * ho * wo];
    for c in 0..channels {
        let src = &input[c * h * w..(c + 1) * h * w];
        let dst = &mut out[c * ho * wo..(c + 1) * ho * wo];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                dst[oy * wo + ox] = wy0 * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1])
                    + wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
            }
        }
    }
    out
}

pub(crate) fn upsample_bilinear_backward(
    grad_out: &[f64],
    channels: usize,
    (h, w): (usize, usize),
    (ho, wo): (usize, usize),
) -> Vec<f64> {
    if (h, w) == (ho, wo) {
        return grad_out.to_vec();
    }
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        let g = &grad_out[c * ho * wo..(c + 1) * ho * wo];
        let dst = &mut out[c * h * w..(c + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = g[oy * wo + ox];
                dst[y0 * w + x0] += wy0 * wx0 * v;
                dst[y0 * w + x1] += wy0 * wx1 * v;
                dst[y1 * w + x0] += wy1 * wx0 * v;
                dst[y1 * w + x1] += wy1 * wx1 * v;
            }
        }
    }
    out
}
