//! Layer kernels. Convolutions run as im2col followed by a dense matrix
//! product; large stride-1 kernels go through [`super::fftconv`] instead.

use crate::nn::tensor::Shape;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub input: Shape,
    pub output: Shape,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeometry {
    /// Rows of the unfolded input (`C * Kr * Kc`).
    pub fn patch_len(&self) -> usize {
        self.input.channels * self.kernel.0 * self.kernel.1
    }

    /// Output positions per filter.
    pub fn positions(&self) -> usize {
        self.output.rows * self.output.cols
    }
}

/// `c[m×n] = beta*c + a[m×k] · b[k×n]` with explicit strides, so transposed
/// operands need no copy.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index touched is below the slice lengths, which callers
    // size from the same (m, k, n) and strides.
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

/// Unfolds `input` into a `(C*Kr*Kc) × (Ho*Wo)` matrix.
pub(crate) fn im2col(g: &ConvGeometry, input: &[f64], cols: &mut Vec<f64>) {
    let (kr, kc) = g.kernel;
    let (sr, sc) = g.stride;
    let (pr, pc) = g.padding;
    let (h, w) = (g.input.rows as isize, g.input.cols as isize);
    let (ho, wo) = (g.output.rows, g.output.cols);
    let p = ho * wo;
    cols.clear();
    cols.resize(g.patch_len() * p, 0.0);
    for c in 0..g.input.channels {
        let plane = &input[c * g.input.rows * g.input.cols..(c + 1) * g.input.rows * g.input.cols];
        for ki in 0..kr {
            for kj in 0..kc {
                let row = (c * kr + ki) * kc + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let y = (oy * sr + ki) as isize - pr as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if y < 0 || y >= h {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[(y as usize) * g.input.cols..(y as usize + 1) * g.input.cols];
                    if sc == 1 && pc == 0 {
                        out_row.copy_from_slice(&src[kj..kj + wo]);
                    } else {
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let x = (ox * sc + kj) as isize - pc as isize;
                            *o = if x < 0 || x >= w { 0.0 } else { src[x as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Scatters an unfolded gradient back onto the input plane, accumulating.
pub(crate) fn col2im(g: &ConvGeometry, cols: &[f64], grad_input: &mut [f64]) {
    let (kr, kc) = g.kernel;
    let (sr, sc) = g.stride;
    let (pr, pc) = g.padding;
    let (h, w) = (g.input.rows as isize, g.input.cols as isize);
    let (ho, wo) = (g.output.rows, g.output.cols);
    let p = ho * wo;
    for c in 0..g.input.channels {
        let plane = &mut grad_input[c * g.input.rows * g.input.cols..(c + 1) * g.input.rows * g.input.cols];
        for ki in 0..kr {
            for kj in 0..kc {
                let row = (c * kr + ki) * kc + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let y = (oy * sr + ki) as isize - pr as isize;
                    if y < 0 || y >= h {
                        continue;
                    }
                    let dst = &mut plane[(y as usize) * g.input.cols..(y as usize + 1) * g.input.cols];
                    let in_row = &src[oy * wo..(oy + 1) * wo];
                    if sc == 1 && pc == 0 {
                        for (d, s) in dst[kj..kj + wo].iter_mut().zip(in_row) {
                            *d += s;
                        }
                    } else {
                        for (ox, s) in in_row.iter().enumerate() {
                            let x = (ox * sc + kj) as isize - pc as isize;
                            if x >= 0 && x < w {
                                dst[x as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward: `out[f][p] = bias[f] + Σ_k weights[f][k] * cols[k][p]`.
pub(crate) fn conv_forward(g: &ConvGeometry, weights: &[f64], bias: &[f64], cols: &[f64], out: &mut [f64]) {
    let (f, k, p) = (g.output.channels, g.patch_len(), g.positions());
    for (fi, b) in bias.iter().enumerate() {
        out[fi * p..(fi + 1) * p].fill(*b);
    }
    gemm(f, k, p, weights, (k as isize, 1), cols, (p as isize, 1), 1.0, out);
}

/// Accumulates weight and bias gradients of a convolution.
pub(crate) fn conv_param_grads(g: &ConvGeometry, d_out: &[f64], cols: &[f64], d_weights: &mut [f64], d_bias: &mut [f64]) {
    let (f, k, p) = (g.output.channels, g.patch_len(), g.positions());
    // dW[f×k] += dZ[f×p] · colsᵀ[p×k]
    gemm(f, p, k, d_out, (p as isize, 1), cols, (1, p as isize), 1.0, d_weights);
    conv_bias_grads(g, d_out, d_bias);
}

pub(crate) fn conv_bias_grads(g: &ConvGeometry, d_out: &[f64], d_bias: &mut [f64]) {
    let p = g.positions();
    for (fi, db) in d_bias.iter_mut().enumerate() {
        *db += d_out[fi * p..(fi + 1) * p].iter().sum::<f64>();
    }
}

/// Gradient of a convolution with respect to its input.
pub(crate) fn conv_input_grad(g: &ConvGeometry, d_out: &[f64], weights: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
    let (f, k, p) = (g.output.channels, g.patch_len(), g.positions());
    scratch.clear();
    scratch.resize(k * p, 0.0);
    // dcols[k×p] = Wᵀ[k×f] · dZ[f×p]
    gemm(k, f, p, weights, (1, k as isize), d_out, (p as isize, 1), 0.0, scratch);
    let mut grad = vec![0.0; g.input.len()];
    col2im(g, scratch, &mut grad);
    grad
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeometry {
    pub input: Shape,
    pub output: Shape,
    pub size: (usize, usize),
    pub stride: (usize, usize),
}

/// Max pooling; returns outputs and the flat input index each one came from.
/// Ties go to the first element in row-major window order.
pub(crate) fn maxpool_forward(g: &PoolGeometry, input: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = g.output.len();
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for c in 0..g.input.channels {
        let base = c * g.input.rows * g.input.cols;
        for oy in 0..g.output.rows {
            for ox in 0..g.output.cols {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base;
                for ki in 0..g.size.0 {
                    for kj in 0..g.size.1 {
                        let idx = base + (oy * g.stride.0 + ki) * g.input.cols + ox * g.stride.1 + kj;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(input_len: usize, argmax: &[usize], d_out: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; input_len];
    for (&idx, &d) in argmax.iter().zip(d_out) {
        grad[idx] += d;
    }
    grad
}

/// `out = W·x + b` with `W` stored `[units][inputs]`.
pub(crate) fn dense_forward(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(u, b)| b + dot(&weights[u * n_in..(u + 1) * n_in], x))
        .collect()
}

pub(crate) fn dense_param_grads(d_out: &[f64], x: &[f64], d_weights: &mut [f64], d_bias: &mut [f64]) {
    let n_in = x.len();
    for (u, &d) in d_out.iter().enumerate() {
        d_bias[u] += d;
        if d != 0.0 {
            for (gw, xi) in d_weights[u * n_in..(u + 1) * n_in].iter_mut().zip(x) {
                *gw += d * xi;
            }
        }
    }
}

pub(crate) fn dense_input_grad(weights: &[f64], d_out: &[f64], n_in: usize) -> Vec<f64> {
    let mut grad = vec![0.0; n_in];
    for (u, &d) in d_out.iter().enumerate() {
        if d != 0.0 {
            for (g, w) in grad.iter_mut().zip(&weights[u * n_in..(u + 1) * n_in]) {
                *g += d * w;
            }
        }
    }
    grad
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeometry, input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.output.len()];
        for f in 0..g.output.channels {
            for oy in 0..g.output.rows {
                for ox in 0..g.output.cols {
                    let mut acc = b[f];
                    for c in 0..g.input.channels {
                        for ki in 0..g.kernel.0 {
                            for kj in 0..g.kernel.1 {
                                let y = (oy * g.stride.0 + ki) as isize - g.padding.0 as isize;
                                let x = (ox * g.stride.1 + kj) as isize - g.padding.1 as isize;
                                if y < 0 || x < 0 || y >= g.input.rows as isize || x >= g.input.cols as isize {
                                    continue;
                                }
                                let iv = input[(c * g.input.rows + y as usize) * g.input.cols + x as usize];
                                let wv = w[((f * g.input.channels + c) * g.kernel.0 + ki) * g.kernel.1 + kj];
                                acc += iv * wv;
                            }
                        }
                    }
                    out[(f * g.output.rows + oy) * g.output.cols + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_naive_loops() {
        for &(stride, padding) in &[((1, 1), (0, 0)), ((2, 2), (1, 1)), ((1, 2), (2, 1))] {
            let input = Shape::new(2, 7, 9);
            let kernel = (3, 3);
            let rows = (7 + 2 * padding.0 - 3) / stride.0 + 1;
            let cols_n = (9 + 2 * padding.1 - 3) / stride.1 + 1;
            let g = ConvGeometry {
                input,
                output: Shape::new(3, rows, cols_n),
                kernel,
                stride,
                padding,
            };
            let x: Vec<f64> = (0..input.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
            let w: Vec<f64> = (0..3 * g.patch_len()).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
            let b = [0.1, -0.2, 0.3];
            let mut cols = Vec::new();
            im2col(&g, &x, &mut cols);
            let mut out = vec![0.0; g.output.len()];
            conv_forward(&g, &w, &b, &cols, &mut out);
            let expected = naive_conv(&g, &x, &w, &b);
            for (a, e) in out.iter().zip(&expected) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let g = PoolGeometry {
            input: Shape::new(1, 4, 4),
            output: Shape::new(1, 2, 2),
            size: (2, 2),
            stride: (2, 2),
        };
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let (out, arg) = maxpool_forward(&g, &x);
        assert_eq!(out, vec![5.0, 7.0, 13.0, 15.0]);
        let grad = maxpool_backward(16, &arg, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(grad[5], 1.0);
        assert_eq!(grad[15], 4.0);
        assert_eq!(grad.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
