//! Untracked numeric kernels: convolution via im2col + GEMM, 2×2 pooling,
//! nearest-neighbour upsampling and broadcast index maps.

use super::Tensor;
use crate::error::{Error, Result};

/// A 2-D convolution layer (cross-correlation, no kernel flip).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[out_ch, in_ch, kh, kw]`
    pub weights: Tensor,
    /// `[out_ch]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (out_ch, ..) = weights.dims4()?;
        if bias.shape() != [out_ch] {
            return Err(Error::dim("bias", format!("expected [{out_ch}], got {:?}", bias.shape())));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        Ok(ConvLayer { weights, bias, stride, padding })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(input, &self.weights, Some(&self.bias), self.stride, self.padding)
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

struct ConvGeometry {
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor, weights: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (batch, in_ch, h, w) = input.dims4()?;
        let (out_ch, w_in, kh, kw) = weights.dims4()?;
        if in_ch != w_in {
            return Err(Error::dim(
                "channels",
                format!("input has {in_ch} channels but the kernel expects {w_in}"),
            ));
        }
        let oh = conv_out_extent(h, kh, stride, padding)
            .ok_or_else(|| Error::dim("height", format!("kernel {kh} exceeds padded height {h}+2·{padding}")))?;
        let ow = conv_out_extent(w, kw, stride, padding)
            .ok_or_else(|| Error::dim("width", format!("kernel {kw} exceeds padded width {w}+2·{padding}")))?;
        Ok(ConvGeometry { batch, in_ch, h, w, out_ch, kh, kw, oh, ow, stride, padding })
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one image `[in_ch, h, w]` into `[in_ch·kh·kw, oh·ow]`.
    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let plane = self.out_plane();
        for c in 0..self.in_ch {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * plane;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        let dst = &mut cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &image[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            *d = if ix < 0 || ix >= self.w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatters columns back into an image gradient.
    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let plane = self.out_plane();
        for c in 0..self.in_ch {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((c * self.kh + ki) * self.kw + kj) * plane;
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        let dst = &mut image[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, s) in src.iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-major GEMM view: `rows × cols` with the given strides.
#[derive(Clone, Copy)]
struct MatView<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl<'a> MatView<'a> {
    fn rm(data: &'a [f64], cols: usize) -> Self {
        MatView { data, row_stride: cols, col_stride: 1 }
    }

    fn transposed(data: &'a [f64], cols_of_stored: usize) -> Self {
        MatView { data, row_stride: 1, col_stride: cols_of_stored }
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` (row-major).
fn gemm(m: usize, k: usize, n: usize, a: MatView, b: MatView, beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    let span = |v: &MatView, r: usize, cl: usize| (r - 1) * v.row_stride + (cl - 1) * v.col_stride + 1;
    assert!(a.data.len() >= span(&a, m, k) && b.data.len() >= span(&b, k, n));
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `input [B, Cin, H, W]` with `weights [Cout, Cin, kh, kw]`.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let g = ConvGeometry::new(input, weights, stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_ch] {
            return Err(Error::dim("bias", format!("expected [{}], got {:?}", g.out_ch, b.shape())));
        }
    }
    let (k, plane) = (g.patch_len(), g.out_plane());
    let mut out = vec![0.0; g.batch * g.out_ch * plane];
    let mut cols = vec![0.0; k * plane];
    let in_len = g.in_ch * g.h * g.w;
    for b in 0..g.batch {
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        let dst = &mut out[b * g.out_ch * plane..(b + 1) * g.out_ch * plane];
        if let Some(bias) = bias {
            for (o, row) in dst.chunks_mut(plane).enumerate() {
                row.fill(bias.data()[o]);
            }
        }
        gemm(g.out_ch, k, plane, MatView::rm(weights.data(), k), MatView::rm(&cols, plane), 1.0, dst);
    }
    Tensor::new(vec![g.batch, g.out_ch, g.oh, g.ow], out)
}

/// Gradients of `conv2d` w.r.t. input, weights and bias given `grad_out`.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeometry::new(input, weights, stride, padding)?;
    let (k, plane) = (g.patch_len(), g.out_plane());
    if grad_out.shape() != [g.batch, g.out_ch, g.oh, g.ow] {
        return Err(Error::dim("grad", format!("unexpected output gradient shape {:?}", grad_out.shape())));
    }
    let in_len = g.in_ch * g.h * g.w;
    let mut d_input = vec![0.0; input.numel()];
    let mut d_weights = vec![0.0; weights.numel()];
    let mut d_bias = vec![0.0; g.out_ch];
    let mut cols = vec![0.0; k * plane];
    let mut d_cols = vec![0.0; k * plane];
    for b in 0..g.batch {
        let dy = &grad_out.data()[b * g.out_ch * plane..(b + 1) * g.out_ch * plane];
        for (o, row) in dy.chunks(plane).enumerate() {
            d_bias[o] += row.iter().sum::<f64>();
        }
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        // dW += dY · colsᵀ
        gemm(g.out_ch, plane, k, MatView::rm(dy, plane), MatView::transposed(&cols, plane), 1.0, &mut d_weights);
        // dcols = Wᵀ · dY
        gemm(k, g.out_ch, plane, MatView::transposed(weights.data(), k), MatView::rm(dy, plane), 0.0, &mut d_cols);
        g.col2im(&d_cols, &mut d_input[b * in_len..(b + 1) * in_len]);
    }
    Ok((
        Tensor::new(input.shape().to_vec(), d_input)?,
        Tensor::new(weights.shape().to_vec(), d_weights)?,
        Tensor::new(vec![g.out_ch], d_bias)?,
    ))
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, per output
/// cell, the flat input index of the selected maximum (first in row-major
/// order on ties).
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (b, c, h, w) = input.dims4()?;
    if h % 2 != 0 {
        return Err(Error::dim("height", format!("max-pool needs an even extent, got {h}")));
    }
    if w % 2 != 0 {
        return Err(Error::dim("width", format!("max-pool needs an even extent, got {w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, arg))
}

/// Nearest-neighbour 2× spatial upsampling.
pub fn upsample2(input: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4()?;
    let x = input.data();
    let mut out = vec![0.0; b * c * h * w * 4];
    for plane in 0..b * c {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                out[(plane * 2 * h + y) * 2 * w + xx] = x[(plane * h + y / 2) * w + xx / 2];
            }
        }
    }
    Tensor::new(vec![b, c, 2 * h, 2 * w], out)
}

/// Adjoint of `upsample2`: sums each 2×2 block of `grad`.
pub fn upsample2_backward(grad: &Tensor) -> Result<Tensor> {
    let (b, c, h2, w2) = grad.dims4()?;
    let (h, w) = (h2 / 2, w2 / 2);
    let g = grad.data();
    let mut out = vec![0.0; b * c * h * w];
    for plane in 0..b * c {
        for y in 0..h2 {
            for x in 0..w2 {
                out[(plane * h + y / 2) * w + x / 2] += g[(plane * h2 + y) * w2 + x];
            }
        }
    }
    Tensor::new(vec![b, c, h, w], out)
}

/// Numpy-style broadcast of two shapes (shorter shape padded with leading 1s).
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| if i < n - s.len() { 1 } else { s[i - (n - s.len())] };
    (0..n)
        .map(|i| match (pad(a, i), pad(b, i)) {
            (x, y) if x == y || y == 1 => Ok(x),
            (1, y) => Ok(y),
            (x, y) => Err(Error::dim(i.to_string(), format!("cannot broadcast {x} against {y} ({a:?} vs {b:?})"))),
        })
        .collect()
}

/// For every flat index of `out_shape`, the flat index of `src_shape` that
/// broadcasts onto it. `src_shape` must be broadcast-compatible with
/// `out_shape` (extent equal or 1 on every aligned axis).
pub fn broadcast_index_map(src_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n = out_shape.len();
    let offset = n - src_shape.len();
    let mut strides = vec![0usize; n];
    let mut acc = 1;
    for i in (0..src_shape.len()).rev() {
        if src_shape[i] != 1 {
            strides[i + offset] = acc;
        }
        acc *= src_shape[i];
    }
    let numel: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; n];
    let mut flat = 0usize;
    for _ in 0..numel {
        map.push(flat);
        for axis in (0..n).rev() {
            idx[axis] += 1;
            flat += strides[axis];
            if idx[axis] < out_shape[axis] {
                break;
            }
            flat -= strides[axis] * idx[axis];
            idx[axis] = 0;
        }
    }
    map
}

/// Shape after reducing `axes` with kept (size-1) dimensions.
pub fn reduced_shape(shape: &[usize], axes: &[usize]) -> Result<Vec<usize>> {
    let mut out = shape.to_vec();
    for &a in axes {
        if a >= shape.len() {
            return Err(Error::dim(a.to_string(), format!("axis out of range for shape {shape:?}")));
        }
        out[a] = 1;
    }
    Ok(out)
}
