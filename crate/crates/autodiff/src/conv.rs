//! Convolution and spatial rearrangement kernels on raw NCHW buffers.

/// `⌊(size + 2·padding − kernel)/stride⌋ + 1`, or `None` when the kernel
/// does not fit.
pub fn conv2d_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn spatial(&self) -> usize {
        self.oh * self.ow
    }
}

/// `c = a·b + beta·c` with explicit strides on `a` and `b`; `c` is a
/// row-major `m × n` buffer.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every index touched through the
    // strides; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one image `[c, h, w]` into `[c·kh·kw, oh·ow]` patch columns.
fn im2col(g: &ConvGeom, image: &[f64], cols: &mut [f64]) {
    let p = g.spatial();
    for ch in 0..g.c {
        let plane = &image[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((ch * g.kh + ky) * g.kw + kx) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut cols[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `image`.
fn col2im(g: &ConvGeom, cols: &[f64], image: &mut [f64]) {
    let p = g.spatial();
    for ch in 0..g.c {
        let plane = &mut image[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((ch * g.kh + ky) * g.kw + kx) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * g.ow..row + (oy + 1) * g.ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (ckk, p) = (g.ckk(), g.spatial());
    let mut out = vec![0.0; g.n * g.o * p];
    let mut cols = vec![0.0; ckk * p];
    for b in 0..g.n {
        im2col(g, &input[b * g.c * g.h * g.w..(b + 1) * g.c * g.h * g.w], &mut cols);
        let dst = &mut out[b * g.o * p..(b + 1) * g.o * p];
        if let Some(bias) = bias {
            for (o, row) in dst.chunks_exact_mut(p).enumerate() {
                row.fill(bias[o]);
            }
        }
        gemm(g.o, ckk, p, weight, ckk, 1, &cols, p, 1, if bias.is_some() { 1.0 } else { 0.0 }, dst);
    }
    out
}

/// Gradients with respect to input, weight and bias, each only when asked.
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let (ckk, p) = (g.ckk(), g.spatial());
    let mut d_input = want_input.then(|| vec![0.0; input.len()]);
    let mut d_weight = want_weight.then(|| vec![0.0; weight.len()]);
    let mut d_bias = want_bias.then(|| vec![0.0; g.o]);
    let mut cols = vec![0.0; ckk * p];
    for b in 0..g.n {
        let go = &grad_out[b * g.o * p..(b + 1) * g.o * p];
        if let Some(db) = d_bias.as_mut() {
            for (o, row) in go.chunks_exact(p).enumerate() {
                db[o] += row.iter().sum::<f64>();
            }
        }
        let image = b * g.c * g.h * g.w..(b + 1) * g.c * g.h * g.w;
        if let Some(dw) = d_weight.as_mut() {
            im2col(g, &input[image.clone()], &mut cols);
            // dW[o, q] += Σ_p dOut[o, p] · cols[q, p]
            gemm(g.o, p, ckk, go, p, 1, &cols, 1, p, 1.0, dw);
        }
        if let Some(di) = d_input.as_mut() {
            // dCols[q, p] = Σ_o W[o, q] · dOut[o, p]
            gemm(ckk, g.o, p, weight, 1, ckk, go, p, 1, 0.0, &mut cols);
            col2im(g, &cols, &mut di[image]);
        }
    }
    (d_input, d_weight, d_bias)
}

/// `[n, c, h, w] → [n, c·r², h/r, w/r]`; channel `c·r² + a·r + b` holds the
/// pixels at offset `(a, b)` of every `r × r` block.
pub fn pixel_unshuffle_values(input: &[f64], (n, c, h, w): (usize, usize, usize, usize), r: usize) -> Vec<f64> {
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let oc = ch * r * r + (y % r) * r + (x % r);
                    out[((b * c * r * r + oc) * oh + y / r) * ow + x / r] = input[((b * c + ch) * h + y) * w + x];
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_unshuffle_values`]: `[n, c·r², h, w] → [n, c, h·r, w·r]`.
pub fn pixel_shuffle_values(input: &[f64], (n, c, h, w): (usize, usize, usize, usize), r: usize) -> Vec<f64> {
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0; input.len()];
    for b in 0..n {
        for ch in 0..oc {
            for y in 0..oh {
                for x in 0..ow {
                    let ic = ch * r * r + (y % r) * r + (x % r);
                    out[((b * oc + ch) * oh + y) * ow + x] = input[((b * c + ic) * h + y / r) * w + x / r];
                }
            }
        }
    }
    out
}

pub(crate) fn upsample_values(input: &[f64], (n, c, h, w): (usize, usize, usize, usize), s: usize) -> Vec<f64> {
    let (oh, ow) = (h * s, w * s);
    let mut out = vec![0.0; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &input[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                dst[y * ow + x] = src[(y / s) * w + x / s];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(grad: &[f64], (n, c, h, w): (usize, usize, usize, usize), s: usize) -> Vec<f64> {
    let (oh, ow) = (h * s, w * s);
    let mut out = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let src = &grad[plane * oh * ow..(plane + 1) * oh * ow];
        let dst = &mut out[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                dst[(y / s) * w + x / s] += src[y * ow + x];
            }
        }
    }
    out
}
