//! Dense and strided-convolution kernels with their backward passes.

use crate::resonator::sigmoid;

#[inline]
pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = W x + b` with `W` row-major `[out][in]`.
pub(crate) fn dense_forward(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = b[o] + dot(&w[o * n..(o + 1) * n], x);
    }
}

/// Accumulates `dW += dy x^T`, `db += dy` and, if requested, `dx = W^T dy`.
pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let n = x.len();
    if let Some(dx) = dx.as_deref_mut() {
        dx.iter_mut().for_each(|v| *v = 0.0);
    }
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[o] += g;
        axpy(g, x, &mut dw[o * n..(o + 1) * n]);
        if let Some(dx) = dx.as_deref_mut() {
            axpy(g, &w[o * n..(o + 1) * n], dx);
        }
    }
}

/// Geometry of a 3x3, stride-2, zero-padded convolution on a square input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    /// Input side length; output side is half.
    pub size: usize,
}

impl ConvShape {
    pub fn out_size(&self) -> usize {
        self.size / 2
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * 9
    }

    #[inline]
    fn tap(&self, o: usize, k: usize) -> Option<usize> {
        let i = 2 * o + k;
        (i >= 1 && i <= self.size).then(|| i - 1)
    }
}

/// `out[co][oy][ox] = b[co] + sum w[co][ci][ky][kx] in[ci][2 oy + ky - 1][2 ox + kx - 1]`.
pub(crate) fn conv_forward(s: ConvShape, w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let (n, m) = (s.size, s.out_size());
    for co in 0..s.cout {
        for oy in 0..m {
            for ox in 0..m {
                let mut acc = b[co];
                for ci in 0..s.cin {
                    let wk = &w[(co * s.cin + ci) * 9..(co * s.cin + ci + 1) * 9];
                    let plane = &input[ci * n * n..(ci + 1) * n * n];
                    for ky in 0..3 {
                        let Some(iy) = s.tap(oy, ky) else { continue };
                        for kx in 0..3 {
                            if let Some(ix) = s.tap(ox, kx) {
                                acc += wk[ky * 3 + kx] * plane[iy * n + ix];
                            }
                        }
                    }
                }
                out[(co * m + oy) * m + ox] = acc;
            }
        }
    }
}

/// Backward of [`conv_forward`] given the gradient at its output.
pub(crate) fn conv_backward(
    s: ConvShape,
    w: &[f64],
    input: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let (n, m) = (s.size, s.out_size());
    if let Some(din) = din.as_deref_mut() {
        din.iter_mut().for_each(|v| *v = 0.0);
    }
    for co in 0..s.cout {
        for oy in 0..m {
            for ox in 0..m {
                let g = dout[(co * m + oy) * m + ox];
                if g == 0.0 {
                    continue;
                }
                db[co] += g;
                for ci in 0..s.cin {
                    let base = (co * s.cin + ci) * 9;
                    for ky in 0..3 {
                        let Some(iy) = s.tap(oy, ky) else { continue };
                        for kx in 0..3 {
                            if let Some(ix) = s.tap(ox, kx) {
                                let idx = (ci * n + iy) * n + ix;
                                dw[base + ky * 3 + kx] += g * input[idx];
                                if let Some(din) = din.as_deref_mut() {
                                    din[idx] += g * w[base + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
