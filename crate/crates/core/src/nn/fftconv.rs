//! Stride-1 convolutions evaluated as products of 2-D spectra.
//!
//! Inputs are zero-padded into a `P × Q` frame with `P, Q` at least the padded
//! input size, so every valid correlation lag fits without wrap-around. A
//! frame's half-spectrum has `n = P * (Q/2 + 1)` bins.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::nn::layers::ConvGeometry;

pub(crate) type C64 = Complex<f64>;

/// Kernel area from which stride-1 convolutions switch to the spectral path.
const MIN_KERNEL_AREA: usize = 25;

pub(crate) fn applies(g: &ConvGeometry) -> bool {
    g.stride == (1, 1) && g.kernel.0 * g.kernel.1 >= MIN_KERNEL_AREA
}

/// Smallest integer `>= n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("unbounded range")
}

/// Real 2-D transform of a fixed frame. Bin `(k, l)` of a single spectrum
/// lives at `l * P + k`.
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut real = RealFftPlanner::<f64>::new();
        let mut complex = FftPlanner::<f64>::new();
        Fft2 {
            rows,
            cols,
            half: cols / 2 + 1,
            r2c: real.plan_fft_forward(cols),
            c2r: real.plan_fft_inverse(cols),
            col_fwd: complex.plan_fft_forward(rows),
            col_inv: complex.plan_fft_inverse(rows),
        }
    }

    pub fn bins(&self) -> usize {
        self.rows * self.half
    }

    /// Spectrum of a real `rows × cols` frame; `frame` is clobbered.
    pub fn forward(&self, frame: &mut [f64], spectrum: &mut [C64]) {
        let mut row = self.r2c.make_output_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for k in 0..self.rows {
            let line = &mut frame[k * self.cols..(k + 1) * self.cols];
            if line.iter().all(|&v| v == 0.0) {
                for l in 0..self.half {
                    spectrum[l * self.rows + k] = C64::default();
                }
                continue;
            }
            self.r2c
                .process_with_scratch(line, &mut row, &mut scratch)
                .expect("buffer sizes come from the plan");
            for (l, v) in row.iter().enumerate() {
                spectrum[l * self.rows + k] = *v;
            }
        }
        self.col_fwd.process(spectrum);
    }

    /// Rows `first..first + count` of the inverse transform, scaled by
    /// `1 / (rows * cols)`, written row-major into `out` (`count × cols`).
    /// `spectrum` is clobbered.
    pub fn inverse_rows(&self, spectrum: &mut [C64], first: usize, count: usize, out: &mut [f64]) {
        self.col_inv.process(spectrum);
        let mut row = self.c2r.make_input_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for (r, k) in (first..first + count).enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v = spectrum[l * self.rows + k];
            }
            // the row spectrum of a real signal is real at DC and Nyquist
            row[0].im = 0.0;
            if self.cols % 2 == 0 {
                row[self.half - 1].im = 0.0;
            }
            let line = &mut out[r * self.cols..(r + 1) * self.cols];
            self.c2r
                .process_with_scratch(&mut row, line, &mut scratch)
                .expect("buffer sizes come from the plan");
            for v in line.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Bins per tile of the spectral products; plane strides are padded to a
/// multiple of this.
const LANES: usize = 16;

/// A batch of half-spectra with split real and imaginary parts, stored
/// tile-major: tile `t` holds `LANES` consecutive bins of every plane, so the
/// operands of one tile of a product are contiguous. Bins past the spectrum
/// length are zero.
#[derive(Debug, Clone, Default)]
pub(crate) struct Spectra {
    planes: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Spectra {
    fn zeros(planes: usize, stride: usize) -> Self {
        Spectra {
            planes,
            re: vec![0.0; planes * stride],
            im: vec![0.0; planes * stride],
        }
    }

    /// Offset of the first bin of `plane` within tile `tile`.
    #[inline(always)]
    fn at(&self, tile: usize, plane: usize) -> usize {
        (tile * self.planes + plane) * LANES
    }

    fn store(&mut self, plane: usize, spectrum: &[C64]) {
        for (t, chunk) in spectrum.chunks(LANES).enumerate() {
            let at = self.at(t, plane);
            for (l, v) in chunk.iter().enumerate() {
                self.re[at + l] = v.re;
                self.im[at + l] = v.im;
            }
        }
    }

    fn load(&self, plane: usize, spectrum: &mut [C64]) {
        for (t, chunk) in spectrum.chunks_mut(LANES).enumerate() {
            let at = self.at(t, plane);
            for (l, v) in chunk.iter_mut().enumerate() {
                *v = C64::new(self.re[at + l], self.im[at + l]);
            }
        }
    }
}

/// Index maps of one batched product `out[i][j] (+)= Σ_k op(a[i][k]) · b[k][j]`
/// applied bin by bin, where `op` conjugates when `CONJ` is set.
struct Product<FA, FB, FO> {
    dims: (usize, usize, usize),
    a_plane: FA,
    b_plane: FB,
    out_plane: FO,
}

/// Output rows and columns computed together by one tile.
const ROWS: usize = 2;
const COLS: usize = 1;

type Lanes = [f64; LANES];

#[inline(always)]
fn lanes(v: &[f64], at: usize) -> &Lanes {
    v[at..at + LANES].try_into().expect("tile")
}

/// One `R`×`C` block of outputs over a single tile of bins.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn product_block<const CONJ: bool, const R: usize, const C: usize, FA, FB, FO>(
    p: &Product<FA, FB, FO>,
    (i0, j0, t): (usize, usize, usize),
    a: &Spectra,
    b: &Spectra,
    out: &mut Spectra,
    accumulate: bool,
) where
    FA: Fn(usize, usize) -> usize,
    FB: Fn(usize, usize) -> usize,
    FO: Fn(usize, usize) -> usize,
{
    let mut acc_re = [[[0.0; LANES]; C]; R];
    let mut acc_im = [[[0.0; LANES]; C]; R];
    if accumulate {
        for r in 0..R {
            for c in 0..C {
                let o = out.at(t, (p.out_plane)(i0 + r, j0 + c));
                acc_re[r][c] = *lanes(&out.re, o);
                acc_im[r][c] = *lanes(&out.im, o);
            }
        }
    }
    for k in 0..p.dims.2 {
        let mut br = [[0.0; LANES]; C];
        let mut bi = [[0.0; LANES]; C];
        for c in 0..C {
            let pb = b.at(t, (p.b_plane)(k, j0 + c));
            br[c] = *lanes(&b.re, pb);
            bi[c] = *lanes(&b.im, pb);
        }
        for r in 0..R {
            let pa = a.at(t, (p.a_plane)(i0 + r, k));
            let ar = lanes(&a.re, pa);
            let ai = lanes(&a.im, pa);
            for c in 0..C {
                for l in 0..LANES {
                    if CONJ {
                        acc_re[r][c][l] += ar[l] * br[c][l] + ai[l] * bi[c][l];
                        acc_im[r][c][l] += ar[l] * bi[c][l] - ai[l] * br[c][l];
                    } else {
                        acc_re[r][c][l] += ar[l] * br[c][l] - ai[l] * bi[c][l];
                        acc_im[r][c][l] += ar[l] * bi[c][l] + ai[l] * br[c][l];
                    }
                }
            }
        }
    }
    for r in 0..R {
        for c in 0..C {
            let o = out.at(t, (p.out_plane)(i0 + r, j0 + c));
            out.re[o..o + LANES].copy_from_slice(&acc_re[r][c]);
            out.im[o..o + LANES].copy_from_slice(&acc_im[r][c]);
        }
    }
}

#[inline(always)]
fn product_tiles<const CONJ: bool, FA, FB, FO>(p: &Product<FA, FB, FO>, a: &Spectra, b: &Spectra, out: &mut Spectra, stride: usize, accumulate: bool)
where
    FA: Fn(usize, usize) -> usize,
    FB: Fn(usize, usize) -> usize,
    FO: Fn(usize, usize) -> usize,
{
    let (ni, nj, _) = p.dims;
    let (full_i, full_j) = (ni - ni % ROWS, nj - nj % COLS);
    for t in 0..stride / LANES {
        for i in (0..full_i).step_by(ROWS) {
            for j in (0..full_j).step_by(COLS) {
                product_block::<CONJ, ROWS, COLS, _, _, _>(p, (i, j, t), a, b, out, accumulate);
            }
            for j in full_j..nj {
                product_block::<CONJ, ROWS, 1, _, _, _>(p, (i, j, t), a, b, out, accumulate);
            }
        }
        for i in full_i..ni {
            for j in 0..nj {
                product_block::<CONJ, 1, 1, _, _, _>(p, (i, j, t), a, b, out, accumulate);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn product_avx512<const CONJ: bool, FA, FB, FO>(p: &Product<FA, FB, FO>, a: &Spectra, b: &Spectra, out: &mut Spectra, stride: usize, accumulate: bool)
where
    FA: Fn(usize, usize) -> usize,
    FB: Fn(usize, usize) -> usize,
    FO: Fn(usize, usize) -> usize,
{
    product_tiles::<CONJ, _, _, _>(p, a, b, out, stride, accumulate);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn product_avx2<const CONJ: bool, FA, FB, FO>(p: &Product<FA, FB, FO>, a: &Spectra, b: &Spectra, out: &mut Spectra, stride: usize, accumulate: bool)
where
    FA: Fn(usize, usize) -> usize,
    FB: Fn(usize, usize) -> usize,
    FO: Fn(usize, usize) -> usize,
{
    product_tiles::<CONJ, _, _, _>(p, a, b, out, stride, accumulate);
}

/// Runs a batched product, using wider vectors when the CPU has them. Every
/// path performs the same operations in the same order, without fused
/// multiply-adds, so results do not depend on the CPU.
fn product<const CONJ: bool, FA, FB, FO>(p: Product<FA, FB, FO>, a: &Spectra, b: &Spectra, out: &mut Spectra, stride: usize, accumulate: bool)
where
    FA: Fn(usize, usize) -> usize,
    FB: Fn(usize, usize) -> usize,
    FO: Fn(usize, usize) -> usize,
{
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { product_avx512::<CONJ, _, _, _>(&p, a, b, out, stride, accumulate) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { product_avx2::<CONJ, _, _, _>(&p, a, b, out, stride, accumulate) };
            return;
        }
    }
    product_tiles::<CONJ, _, _, _>(&p, a, b, out, stride, accumulate);
}

/// A convolution layer with its kernel spectra.
///
/// Input and output planes of a batch are ordered `[channel][sample]`, kernel
/// planes `[filter][channel]`. Every bin is an independent small complex
/// matrix product across channels and samples.
pub(crate) struct FftConv {
    g: ConvGeometry,
    fft: Fft2,
    /// Plane stride: the spectrum length rounded up to whole tiles.
    stride: usize,
    kernels: Spectra,
}

impl FftConv {
    pub fn new(g: ConvGeometry, weights: &[f64]) -> Self {
        let rows = smooth_size(g.input.rows + 2 * g.padding.0);
        let cols = smooth_size(g.input.cols + 2 * g.padding.1);
        let fft = Fft2::new(rows, cols);
        let stride = fft.bins().div_ceil(LANES) * LANES;
        let (kr, kc) = g.kernel;
        let pairs = g.output.channels * g.input.channels;
        let mut kernels = Spectra::zeros(pairs, stride);
        let mut frame = vec![0.0; rows * cols];
        let mut spec = vec![C64::default(); fft.bins()];
        for idx in 0..pairs {
            frame.fill(0.0);
            let w = &weights[idx * kr * kc..(idx + 1) * kr * kc];
            for i in 0..kr {
                frame[i * cols..i * cols + kc].copy_from_slice(&w[i * kc..(i + 1) * kc]);
            }
            fft.forward(&mut frame, &mut spec);
            kernels.store(idx, &spec);
        }
        FftConv { g, fft, stride, kernels }
    }

    /// Transforms `count` planes of `shape` per sample, each placed into the
    /// frame at `offset`, into `[plane][sample]` spectra.
    fn batch_spectra(&self, samples: &[&[f64]], count: usize, offset: (usize, usize), shape: (usize, usize)) -> Spectra {
        let (h, w) = shape;
        let s_len = samples.len();
        let mut out = Spectra::zeros(count * s_len, self.stride);
        let mut frame = vec![0.0; self.fft.rows * self.fft.cols];
        let mut spec = vec![C64::default(); self.fft.bins()];
        for (s, x) in samples.iter().enumerate() {
            for c in 0..count {
                frame.fill(0.0);
                for y in 0..h {
                    let dst = (y + offset.0) * self.fft.cols + offset.1;
                    frame[dst..dst + w].copy_from_slice(&x[(c * h + y) * w..(c * h + y + 1) * w]);
                }
                self.fft.forward(&mut frame, &mut spec);
                out.store(c * s_len + s, &spec);
            }
        }
        out
    }

    /// Inverse-transforms every plane and hands the selected rows to
    /// `sink(plane, rows)`.
    fn batch_inverse(&self, spectra: &Spectra, planes: usize, first_row: usize, count: usize, mut sink: impl FnMut(usize, &[f64])) {
        let mut spec = vec![C64::default(); self.fft.bins()];
        let mut rows = vec![0.0; count * self.fft.cols];
        for p in 0..planes {
            spectra.load(p, &mut spec);
            self.fft.inverse_rows(&mut spec, first_row, count, &mut rows);
            sink(p, &rows);
        }
    }

    /// Spectra of the padded inputs of a batch.
    pub fn input_spectra(&self, xs: &[&[f64]]) -> Spectra {
        self.batch_spectra(
            xs,
            self.g.input.channels,
            self.g.padding,
            (self.g.input.rows, self.g.input.cols),
        )
    }

    /// Spectra of output-shaped gradients placed at the frame origin.
    pub fn output_spectra(&self, ds: &[&[f64]]) -> Spectra {
        self.batch_spectra(ds, self.g.output.channels, (0, 0), (self.g.output.rows, self.g.output.cols))
    }

    /// Pre-activations of every sample in the batch.
    pub fn forward(&self, xs: &Spectra, samples: usize, bias: &[f64]) -> Vec<Vec<f64>> {
        let (f, c) = (self.g.output.channels, self.g.input.channels);
        let t0 = std::time::Instant::now();
        let mut z = Spectra::zeros(f * samples, self.stride);
        // Z[f][s] = Σ_c conj(K[f][c]) · X[c][s]
        let p = Product {
            dims: (f, samples, c),
            a_plane: |fi, ci| fi * c + ci,
            b_plane: |ci, si| ci * samples + si,
            out_plane: |fi, si| fi * samples + si,
        };
        product::<true, _, _, _>(p, &self.kernels, xs, &mut z, self.stride, false);
        if std::env::var("PROF").is_ok() { eprintln!("  product {:?} f{f} c{c} stride {}", t0.elapsed(), self.stride); }
        let (ho, wo) = (self.g.output.rows, self.g.output.cols);
        let cols = self.fft.cols;
        let mut out = vec![vec![0.0; self.g.output.len()]; samples];
        self.batch_inverse(&z, f * samples, 0, ho, |plane, rows| {
            let (fi, s) = (plane / samples, plane % samples);
            for y in 0..ho {
                let dst = &mut out[s][(fi * ho + y) * wo..(fi * ho + y + 1) * wo];
                for (o, v) in dst.iter_mut().zip(&rows[y * cols..]) {
                    *o = v + bias[fi];
                }
            }
        });
        out
    }

    /// Gradients with respect to the (unpadded) inputs of the batch.
    pub fn input_grad(&self, dzs: &Spectra, samples: usize) -> Vec<Vec<f64>> {
        let (f, c) = (self.g.output.channels, self.g.input.channels);
        let mut dx = Spectra::zeros(c * samples, self.stride);
        // dX[c][s] = Σ_f K[f][c] · dZ[f][s]
        let p = Product {
            dims: (c, samples, f),
            a_plane: |ci, fi| fi * c + ci,
            b_plane: |fi, si| fi * samples + si,
            out_plane: |ci, si| ci * samples + si,
        };
        product::<false, _, _, _>(p, &self.kernels, dzs, &mut dx, self.stride, false);
        let (h, w) = (self.g.input.rows, self.g.input.cols);
        let (pr, pc) = self.g.padding;
        let cols = self.fft.cols;
        let mut out = vec![vec![0.0; self.g.input.len()]; samples];
        self.batch_inverse(&dx, c * samples, pr, h, |plane, rows| {
            let (ci, s) = (plane / samples, plane % samples);
            for y in 0..h {
                out[s][(ci * h + y) * w..(ci * h + y + 1) * w].copy_from_slice(&rows[y * cols + pc..y * cols + pc + w]);
            }
        });
        out
    }

    /// Empty accumulator for [`FftConv::accumulate_weight_spectra`].
    pub fn weight_accumulator(&self) -> Spectra {
        Spectra::zeros(self.g.output.channels * self.g.input.channels, self.stride)
    }

    /// Accumulates the weight-gradient spectra `Σ_s X[c][s] · conj(dZ[f][s])`.
    pub fn accumulate_weight_spectra(&self, xs: &Spectra, dzs: &Spectra, samples: usize, acc: &mut Spectra) {
        let (f, c) = (self.g.output.channels, self.g.input.channels);
        let p = Product {
            dims: (f, c, samples),
            a_plane: |fi, si| fi * samples + si,
            b_plane: |si, ci| ci * samples + si,
            out_plane: |fi, ci| fi * c + ci,
        };
        product::<true, _, _, _>(p, dzs, xs, acc, self.stride, true);
    }

    /// Turns accumulated weight-gradient spectra into kernel gradients added
    /// onto `d_weights`.
    pub fn finish_weight_grads(&self, acc: &Spectra, d_weights: &mut [f64]) {
        let (kr, kc) = self.g.kernel;
        let cols = self.fft.cols;
        let pairs = self.g.output.channels * self.g.input.channels;
        self.batch_inverse(acc, pairs, 0, kr, |idx, rows| {
            let dw = &mut d_weights[idx * kr * kc..(idx + 1) * kr * kc];
            for i in 0..kr {
                for (d, v) in dw[i * kc..(i + 1) * kc].iter_mut().zip(&rows[i * cols..]) {
                    *d += v;
                }
            }
        });
    }
}
