use serde::{Deserialize, Serialize};

use std::ops::Range;

use super::real::{gemm, gemm_strided, MatRef};
use super::{Real, Tensor};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// One stage of a feed-forward network. Parameters live in the owning
/// network's flat parameter vector; the layer only describes shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    /// 3x3 convolution, padding 1.
    Conv { cin: usize, cout: usize, stride: usize },
    Dense { fin: usize, fout: usize },
    /// Nearest-neighbour 2x upsampling.
    Upsample,
    Tanh,
    Sigmoid,
    Relu,
    BatchNorm { channels: usize },
    /// `(C, N, H, W) -> (C*H*W, N, 1, 1)`
    Flatten,
    /// `(C*H*W, N, 1, 1) -> (C, N, H, W)`
    Unflatten { c: usize, h: usize, w: usize },
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv { cin, cout, .. } => cout * cin * 9 + cout,
            Layer::Dense { fin, fout } => fout * fin + fout,
            Layer::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Running-statistics buffers (not trained by gradient).
    pub fn state_count(&self) -> usize {
        match *self {
            Layer::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Output `(C, H, W)` for an input `(C, H, W)`, or `None` if incompatible.
    pub fn output_dims(&self, (c, h, w): (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        match *self {
            Layer::Conv { cin, cout, stride } => {
                if cin != c || h == 0 || w == 0 || stride == 0 {
                    return None;
                }
                Some((cout, (h - 1) / stride + 1, (w - 1) / stride + 1))
            }
            Layer::Dense { fin, fout } => (c * h * w == fin && h == 1 && w == 1).then_some((fout, 1, 1)),
            Layer::Upsample => Some((c, 2 * h, 2 * w)),
            Layer::Tanh | Layer::Sigmoid | Layer::Relu => Some((c, h, w)),
            Layer::BatchNorm { channels } => (channels == c).then_some((c, h, w)),
            Layer::Flatten => Some((c * h * w, 1, 1)),
            Layer::Unflatten { c: oc, h: oh, w: ow } => {
                (h == 1 && w == 1 && c == oc * oh * ow).then_some((oc, oh, ow))
            }
        }
    }

    /// Weight matrix `(rows, cols)` inside this layer's parameter slice, if any.
    pub fn weight_matrix_dims(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Conv { cin, cout, .. } => Some((cout, cin * 9)),
            Layer::Dense { fin, fout } => Some((fout, fin)),
            _ => None,
        }
    }
}

/// Batch statistics recorded by a training-mode batch norm.
#[derive(Debug, Clone)]
pub(crate) struct NormStats<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

fn conv_out(h: usize, stride: usize) -> usize {
    (h - 1) / stride + 1
}

/// Lays out the 3x3 patches (padding 1) of samples `samples` as columns of a
/// `(cin*9, m*Ho*Wo)` matrix, `m = samples.len()`.
fn im2col_into<T: Real>(x: &Tensor<T>, stride: usize, samples: Range<usize>, cols: &mut [T]) {
    let [c, n, h, w] = x.shape;
    let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
    let p = samples.len() * ho * wo;
    assert_eq!(cols.len(), c * 9 * p);
    cols.fill(T::zero());
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for (k, ni) in samples.clone().enumerate() {
                    let src = &x.data[(ci * n + ni) * h * w..(ci * n + ni + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut row[(k * ho + oy) * wo..(k * ho + oy + 1) * wo];
                        if stride == 1 {
                            // ix = ox + kx - 1
                            let (lo, hi) = match kx {
                                0 => (1, wo),
                                1 => (0, wo),
                                _ => (0, wo - 1),
                            };
                            let off = kx as isize - 1;
                            drow[lo..hi].copy_from_slice(
                                &srow[(lo as isize + off) as usize..(hi as isize + off) as usize],
                            );
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    *d = srow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_into`]: scatter-adds columns of samples `samples`
/// onto `out`.
fn col2im_add<T: Real>(cols: &[T], stride: usize, samples: Range<usize>, out: &mut Tensor<T>) {
    let [c, n, h, w] = out.shape;
    let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
    let p = samples.len() * ho * wo;
    assert_eq!(cols.len(), c * 9 * p);
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for (k, ni) in samples.clone().enumerate() {
                    let dst = &mut out.data[(ci * n + ni) * h * w..(ci * n + ni + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let srow = &row[(k * ho + oy) * wo..(k * ho + oy + 1) * wo];
                        if stride == 1 {
                            let (lo, hi) = match kx {
                                0 => (1, wo),
                                1 => (0, wo),
                                _ => (0, wo - 1),
                            };
                            let off = kx as isize - 1;
                            for ox in lo..hi {
                                drow[(ox as isize + off) as usize] += srow[ox];
                            }
                        } else {
                            for (ox, &s) in srow.iter().enumerate() {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    drow[ix as usize] += s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Sample ranges whose column matrix stays cache-sized.
fn conv_chunks(n: usize, rows: usize, plane: usize) -> impl Iterator<Item = Range<usize>> {
    let per = ((1usize << 18) / (rows * plane).max(1)).max(1);
    (0..n).step_by(per).map(move |s| s..(s + per).min(n))
}

fn add_row_bias<T: Real>(out: &mut [T], bias: &[T], row_len: usize) {
    for (row, &b) in out.chunks_exact_mut(row_len).zip(bias) {
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_row_sums<T: Real>(grad: &[T], row_len: usize, into: &mut [T]) {
    for (row, g) in grad.chunks_exact(row_len).zip(into.iter_mut()) {
        *g += row.iter().copied().sum::<T>();
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl Layer {
    /// Forward pass. `state` holds running statistics for batch norm; when
    /// `train` is set batch statistics are used, recorded in `stats` and
    /// folded into `state`.
    pub(crate) fn forward<T: Real>(
        &self,
        x: &Tensor<T>,
        params: &[T],
        state: &mut [T],
        train: bool,
        stats: &mut Option<NormStats<T>>,
    ) -> Tensor<T> {
        let [c, n, h, w] = x.shape;
        match *self {
            Layer::Conv { cin, cout, stride } => {
                assert_eq!(c, cin, "conv input channels");
                let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
                let plane = ho * wo;
                let p = n * plane;
                let k = cin * 9;
                let (wt, bias) = params.split_at(cout * k);
                let mut out = vec![T::zero(); cout * p];
                let mut cols = Vec::new();
                for r in conv_chunks(n, k, plane) {
                    cols.resize(k * r.len() * plane, T::zero());
                    im2col_into(x, stride, r.clone(), &mut cols);
                    gemm_strided(
                        T::one(),
                        MatRef::new(wt, cout, k),
                        MatRef::new(&cols, k, r.len() * plane),
                        T::zero(),
                        &mut out[r.start * plane..],
                        p,
                    );
                }
                add_row_bias(&mut out, bias, p);
                Tensor::from_vec([cout, n, ho, wo], out)
            }
            Layer::Dense { fin, fout } => {
                assert_eq!(c * h * w, fin, "dense input features");
                let (wt, bias) = params.split_at(fout * fin);
                let mut out = vec![T::zero(); fout * n];
                gemm(T::one(), MatRef::new(wt, fout, fin), MatRef::new(&x.data, fin, n), T::zero(), &mut out);
                add_row_bias(&mut out, bias, n);
                Tensor::from_vec([fout, n, 1, 1], out)
            }
            Layer::Upsample => {
                let (h2, w2) = (2 * h, 2 * w);
                let mut out = Tensor::zeros([c, n, h2, w2]);
                for (src, dst) in x.data.chunks_exact(h * w).zip(out.data.chunks_exact_mut(h2 * w2)) {
                    for y in 0..h2 {
                        let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
                        for (xx, d) in dst[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                            *d = srow[xx / 2];
                        }
                    }
                }
                out
            }
            Layer::Tanh => {
                let mut out = x.clone();
                T::tanh_in_place(&mut out.data);
                out
            }
            Layer::Sigmoid => x.map(sigmoid),
            Layer::Relu => x.map(|v| v.max(T::zero())),
            Layer::BatchNorm { channels } => {
                assert_eq!(c, channels);
                let (gamma, beta) = params.split_at(channels);
                let (run_mean, run_var) = state.split_at_mut(channels);
                let m = n * h * w;
                let mut out = Tensor::zeros(x.shape);
                let mut rec = NormStats { mean: vec![T::zero(); c], inv_std: vec![T::zero(); c] };
                let eps = T::from_f64_lossy(BN_EPS);
                for ci in 0..c {
                    let xs = &x.data[ci * m..(ci + 1) * m];
                    let (mean, inv_std) = if train {
                        let mf = T::from_usize(m).unwrap();
                        let mean = xs.iter().copied().sum::<T>() / mf;
                        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mf;
                        let mom = T::from_f64_lossy(BN_MOMENTUM);
                        let unbiased = if m > 1 { var * mf / (mf - T::one()) } else { var };
                        run_mean[ci] = (T::one() - mom) * run_mean[ci] + mom * mean;
                        run_var[ci] = (T::one() - mom) * run_var[ci] + mom * unbiased;
                        (mean, T::one() / (var + eps).sqrt())
                    } else {
                        (run_mean[ci], T::one() / (run_var[ci] + eps).sqrt())
                    };
                    rec.mean[ci] = mean;
                    rec.inv_std[ci] = inv_std;
                    for (o, &v) in out.data[ci * m..(ci + 1) * m].iter_mut().zip(xs) {
                        *o = gamma[ci] * (v - mean) * inv_std + beta[ci];
                    }
                }
                if train {
                    *stats = Some(rec);
                }
                out
            }
            Layer::Flatten => {
                let p = h * w;
                let f = c * p;
                let mut out = vec![T::zero(); f * n];
                for ci in 0..c {
                    for ni in 0..n {
                        for pi in 0..p {
                            out[(ci * p + pi) * n + ni] = x.data[(ci * n + ni) * p + pi];
                        }
                    }
                }
                Tensor::from_vec([f, n, 1, 1], out)
            }
            Layer::Unflatten { c: oc, h: oh, w: ow } => {
                assert_eq!(c, oc * oh * ow, "unflatten features");
                let p = oh * ow;
                let mut out = vec![T::zero(); c * n];
                for ci in 0..oc {
                    for ni in 0..n {
                        for pi in 0..p {
                            out[(ci * n + ni) * p + pi] = x.data[(ci * p + pi) * n + ni];
                        }
                    }
                }
                Tensor::from_vec([oc, n, oh, ow], out)
            }
        }
    }

    /// Backward pass. Accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to the input when requested.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward<T: Real>(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        params: &[T],
        stats: Option<&NormStats<T>>,
        grads: &mut [T],
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let [c, n, h, w] = input.shape;
        match *self {
            Layer::Conv { cin, cout, stride } => {
                let plane = grad_out.plane();
                let p = n * plane;
                let k = cin * 9;
                let (gw, gb) = grads.split_at_mut(cout * k);
                accumulate_row_sums(&grad_out.data, p, gb);
                let wt = &params[..cout * k];
                let mut gx = need_input_grad.then(|| Tensor::zeros(input.shape));
                let (mut cols, mut gcols) = (Vec::new(), Vec::new());
                for r in conv_chunks(n, k, plane) {
                    let q = r.len() * plane;
                    let g_chunk = MatRef { data: &grad_out.data[r.start * plane..], rows: cout, cols: q, row_stride: p, col_stride: 1 };
                    cols.resize(k * q, T::zero());
                    im2col_into(input, stride, r.clone(), &mut cols);
                    gemm(T::one(), g_chunk, MatRef::new(&cols, k, q).t(), T::one(), gw);
                    if let Some(gx) = gx.as_mut() {
                        gcols.resize(k * q, T::zero());
                        gemm(T::one(), MatRef::new(wt, cout, k).t(), g_chunk, T::zero(), &mut gcols);
                        col2im_add(&gcols, stride, r, gx);
                    }
                }
                gx
            }
            Layer::Dense { fin, fout } => {
                let (gw, gb) = grads.split_at_mut(fout * fin);
                gemm(
                    T::one(),
                    MatRef::new(&grad_out.data, fout, n),
                    MatRef::new(&input.data, fin, n).t(),
                    T::one(),
                    gw,
                );
                accumulate_row_sums(&grad_out.data, n, gb);
                if !need_input_grad {
                    return None;
                }
                let mut gx = vec![T::zero(); fin * n];
                gemm(
                    T::one(),
                    MatRef::new(&params[..fout * fin], fout, fin).t(),
                    MatRef::new(&grad_out.data, fout, n),
                    T::zero(),
                    &mut gx,
                );
                Some(Tensor::from_vec(input.shape, gx))
            }
            _ if !need_input_grad && self.param_count() == 0 => None,
            Layer::Upsample => {
                let (h2, w2) = (2 * h, 2 * w);
                let mut gx = Tensor::zeros(input.shape);
                for (dst, src) in gx.data.chunks_exact_mut(h * w).zip(grad_out.data.chunks_exact(h2 * w2)) {
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            dst[(y / 2) * w + xx / 2] += src[y * w2 + xx];
                        }
                    }
                }
                Some(gx)
            }
            Layer::Tanh => Some(Tensor::from_vec(
                input.shape,
                output.data.iter().zip(&grad_out.data).map(|(&y, &g)| g * (T::one() - y * y)).collect(),
            )),
            Layer::Sigmoid => Some(Tensor::from_vec(
                input.shape,
                output.data.iter().zip(&grad_out.data).map(|(&y, &g)| g * y * (T::one() - y)).collect(),
            )),
            Layer::Relu => Some(Tensor::from_vec(
                input.shape,
                input
                    .data
                    .iter()
                    .zip(&grad_out.data)
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect(),
            )),
            Layer::BatchNorm { channels } => {
                let stats = stats.expect("batch norm backward needs training-mode statistics");
                let gamma = &params[..channels];
                let (ggamma, gbeta) = grads.split_at_mut(channels);
                let m = n * h * w;
                let mf = T::from_usize(m).unwrap();
                let mut gx = Tensor::zeros(input.shape);
                for ci in 0..c {
                    let xs = &input.data[ci * m..(ci + 1) * m];
                    let gs = &grad_out.data[ci * m..(ci + 1) * m];
                    let (mean, inv_std) = (stats.mean[ci], stats.inv_std[ci]);
                    let mut sum_g = T::zero();
                    let mut sum_gx = T::zero();
                    for (&x, &g) in xs.iter().zip(gs) {
                        let xhat = (x - mean) * inv_std;
                        sum_g += g;
                        sum_gx += g * xhat;
                    }
                    ggamma[ci] += sum_gx;
                    gbeta[ci] += sum_g;
                    if need_input_grad {
                        let scale = gamma[ci] * inv_std / mf;
                        for ((o, &x), &g) in gx.data[ci * m..(ci + 1) * m].iter_mut().zip(xs).zip(gs) {
                            let xhat = (x - mean) * inv_std;
                            *o = scale * (mf * g - sum_g - xhat * sum_gx);
                        }
                    }
                }
                need_input_grad.then_some(gx)
            }
            Layer::Flatten => {
                let p = h * w;
                let mut gx = vec![T::zero(); input.len()];
                for ci in 0..c {
                    for ni in 0..n {
                        for pi in 0..p {
                            gx[(ci * n + ni) * p + pi] = grad_out.data[(ci * p + pi) * n + ni];
                        }
                    }
                }
                Some(Tensor::from_vec(input.shape, gx))
            }
            Layer::Unflatten { c: oc, h: oh, w: ow } => {
                let p = oh * ow;
                let mut gx = vec![T::zero(); input.len()];
                for ci in 0..oc {
                    for ni in 0..n {
                        for pi in 0..p {
                            gx[(ci * p + pi) * n + ni] = grad_out.data[(ci * n + ni) * p + pi];
                        }
                    }
                }
                Some(Tensor::from_vec(input.shape, gx))
            }
        }
    }
}
