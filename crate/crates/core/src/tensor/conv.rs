//! Convolution geometry and the im2col / col2im kernels shared by the
//! forward and transposed convolutions.
//!
//! Column layout: one row per output pixel, `k * k * C` columns ordered
//! `(ky, kx, c)`, which matches a row-major `[k, k, C_in, C_out]` kernel
//! viewed as a `(k*k*C_in) x C_out` matrix.

use super::{shape_err, Result, TensorError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`; odd padding goes
    /// bottom/right.
    Same,
    Valid,
}

/// Geometry of a strided 2-D cross-correlation from `(in_h, in_w)` to
/// `(out_h, out_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub channels: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn same_axis(n: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = n.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(n);
    (out, total / 2)
}

impl ConvGeometry {
    pub fn new(in_h: usize, in_w: usize, channels: usize, k: usize, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::Argument { op: "conv2d", detail: "stride must be positive".into() });
        }
        if k == 0 || in_h == 0 || in_w == 0 {
            return shape_err("conv2d", format!("kernel {k} over {in_h}x{in_w}"));
        }
        let (out_h, pad_top, out_w, pad_left) = match padding {
            Padding::Same => {
                let (oh, pt) = same_axis(in_h, k, stride);
                let (ow, pl) = same_axis(in_w, k, stride);
                (oh, pt, ow, pl)
            }
            Padding::Valid => {
                if k > in_h || k > in_w {
                    return shape_err("conv2d", format!("valid {k}x{k} kernel larger than {in_h}x{in_w} input"));
                }
                ((in_h - k) / stride + 1, 0, (in_w - k) / stride + 1, 0)
            }
        };
        Ok(Self { in_h, in_w, channels, k, stride, pad_top, pad_left, out_h, out_w })
    }

    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.channels
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.channels
    }

    /// Input row/col for output `(oy, ox)` and tap `(ky, kx)`, or `None` in
    /// the zero padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }
}

/// Gathers one image `[H, W, C]` into `cols` (`out_pixels x patch_len`).
pub(crate) fn im2col<T: Scalar>(g: &ConvGeometry, img: &[T], cols: &mut [T]) {
    let c = g.channels;
    let plen = g.patch_len();
    debug_assert_eq!(img.len(), g.in_len());
    debug_assert_eq!(cols.len(), g.out_pixels() * plen);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut cols[(oy * g.out_w + ox) * plen..][..plen];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let dst = &mut row[(ky * g.k + kx) * c..][..c];
                    match g.source(oy, ox, ky, kx) {
                        Some((y, x)) => dst.copy_from_slice(&img[(y * g.in_w + x) * c..][..c]),
                        None => dst.fill(T::zero()),
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into one image; the adjoint of [`im2col`].
pub(crate) fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], img: &mut [T]) {
    let c = g.channels;
    let plen = g.patch_len();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &cols[(oy * g.out_w + ox) * plen..][..plen];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                        let src = &row[(ky * g.k + kx) * c..][..c];
                        for (d, &s) in img[(y * g.in_w + x) * c..][..c].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 convolutions skip im2col: the input is zero-padded once and each
/// kernel tap becomes one GEMM over a flat offset into the padded image.
/// Output rows are laid out on the padded width; the trailing `k - 1`
/// columns of each row are scratch.
struct Padded {
    h: usize,
    w: usize,
    /// Output rows covered by one tap GEMM.
    m: usize,
}

impl ConvGeometry {
    /// Few input channels make the per-tap GEMMs too thin to pay off.
    fn use_tapwise(&self) -> bool {
        self.stride == 1 && self.channels >= 8
    }

    fn padded(&self) -> Padded {
        let w = self.out_w + self.k - 1;
        Padded { h: self.out_h + self.k - 1, w, m: (self.out_h - 1) * w + self.out_w }
    }

    fn pad_into<T: Scalar>(&self, p: &Padded, img: &[T], dst: &mut [T]) {
        let c = self.channels;
        for y in 0..self.in_h {
            let py = y + self.pad_top;
            if py >= p.h {
                break;
            }
            let cols = self.in_w.min(p.w - self.pad_left);
            dst[(py * p.w + self.pad_left) * c..][..cols * c].copy_from_slice(&img[y * self.in_w * c..][..cols * c]);
        }
    }

    fn unpad_from<T: Scalar>(&self, p: &Padded, src: &[T], img: &mut [T]) {
        let c = self.channels;
        for y in 0..self.in_h {
            let py = y + self.pad_top;
            if py >= p.h {
                break;
            }
            let cols = self.in_w.min(p.w - self.pad_left);
            img[y * self.in_w * c..][..cols * c].copy_from_slice(&src[(py * p.w + self.pad_left) * c..][..cols * c]);
        }
    }
}

fn conv_forward_s1<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    let c = g.channels;
    let p = g.padded();
    let m = g.out_pixels();
    let mut out = vec![T::zero(); batch * m * c_out];
    let mut xp = vec![T::zero(); p.h * p.w * c];
    let mut yp = vec![T::zero(); p.m * c_out];
    for n in 0..batch {
        g.pad_into(&p, &x[n * g.in_len()..][..g.in_len()], &mut xp);
        for ky in 0..g.k {
            for kx in 0..g.k {
                let tap = ky * g.k + kx;
                let a = &xp[(ky * p.w + kx) * c..];
                let kt = &kernel[tap * c * c_out..][..c * c_out];
                let beta = if tap == 0 { T::zero() } else { T::one() };
                T::gemm(
                    p.m,
                    c,
                    c_out,
                    T::one(),
                    a,
                    c as isize,
                    1,
                    kt,
                    c_out as isize,
                    1,
                    beta,
                    &mut yp,
                    c_out as isize,
                    1,
                );
            }
        }
        let o = &mut out[n * m * c_out..][..m * c_out];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let src = &yp[(oy * p.w + ox) * c_out..][..c_out];
                for ((d, &s), &b) in o[(oy * g.out_w + ox) * c_out..][..c_out].iter_mut().zip(src).zip(bias) {
                    *d = s + b;
                }
            }
        }
    }
    out
}

fn conv_backward_s1<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    c_out: usize,
    dy: &[T],
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let c = g.channels;
    let p = g.padded();
    let m = g.out_pixels();
    let mut dk = vec![T::zero(); g.patch_len() * c_out];
    let mut db = vec![T::zero(); c_out];
    let mut dx = need_dx.then(|| vec![T::zero(); batch * g.in_len()]);
    let mut xp = vec![T::zero(); p.h * p.w * c];
    let mut dxp = vec![T::zero(); if need_dx { p.h * p.w * c } else { 0 }];
    // scratch columns stay zero so they contribute nothing
    let mut dyp = vec![T::zero(); p.m * c_out];
    for n in 0..batch {
        let dyn_ = &dy[n * m * c_out..][..m * c_out];
        for oy in 0..g.out_h {
            dyp[oy * p.w * c_out..][..g.out_w * c_out]
                .copy_from_slice(&dyn_[oy * g.out_w * c_out..][..g.out_w * c_out]);
        }
        for px in dyn_.chunks_exact(c_out) {
            for (d, &v) in db.iter_mut().zip(px) {
                *d += v;
            }
        }
        g.pad_into(&p, &x[n * g.in_len()..][..g.in_len()], &mut xp);
        if need_dx {
            dxp.fill(T::zero());
        }
        for ky in 0..g.k {
            for kx in 0..g.k {
                let tap = ky * g.k + kx;
                let off = (ky * p.w + kx) * c;
                let dkt = &mut dk[tap * c * c_out..][..c * c_out];
                // dK_t += X_t^T dY
                T::gemm(
                    c,
                    p.m,
                    c_out,
                    T::one(),
                    &xp[off..],
                    1,
                    c as isize,
                    &dyp,
                    c_out as isize,
                    1,
                    T::one(),
                    dkt,
                    c_out as isize,
                    1,
                );
                if need_dx {
                    let kt = &kernel[tap * c * c_out..][..c * c_out];
                    // dX_t += dY K_t^T
                    T::gemm(
                        p.m,
                        c_out,
                        c,
                        T::one(),
                        &dyp,
                        c_out as isize,
                        1,
                        kt,
                        1,
                        c_out as isize,
                        T::one(),
                        &mut dxp[off..],
                        c as isize,
                        1,
                    );
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            g.unpad_from(&p, &dxp, &mut dx[n * g.in_len()..][..g.in_len()]);
        }
    }
    (dx, dk, db)
}

/// `out[n] = im2col(x[n]) * K + b`. `x` is `[N, in_h, in_w, C_in]`, output
/// is `[N, out_h, out_w, C_out]`.
pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    if g.use_tapwise() {
        return conv_forward_s1(g, batch, x, kernel, bias, c_out);
    }
    conv_forward_im2col(g, batch, x, kernel, bias, c_out)
}

fn conv_forward_im2col<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    let plen = g.patch_len();
    let m = g.out_pixels();
    let mut out = vec![T::zero(); batch * m * c_out];
    let mut cols = vec![T::zero(); m * plen];
    for n in 0..batch {
        im2col(g, &x[n * g.in_len()..][..g.in_len()], &mut cols);
        let o = &mut out[n * m * c_out..][..m * c_out];
        T::gemm(
            m,
            plen,
            c_out,
            T::one(),
            &cols,
            plen as isize,
            1,
            kernel,
            c_out as isize,
            1,
            T::zero(),
            o,
            c_out as isize,
            1,
        );
        for px in o.chunks_exact_mut(c_out) {
            for (v, &b) in px.iter_mut().zip(bias) {
                *v += b;
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`]. `dx` is skipped when `need_dx` is false.
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    c_out: usize,
    dy: &[T],
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    if g.use_tapwise() {
        return conv_backward_s1(g, batch, x, kernel, c_out, dy, need_dx);
    }
    conv_backward_im2col(g, batch, x, kernel, c_out, dy, need_dx)
}

fn conv_backward_im2col<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    x: &[T],
    kernel: &[T],
    c_out: usize,
    dy: &[T],
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let plen = g.patch_len();
    let m = g.out_pixels();
    let mut dk = vec![T::zero(); plen * c_out];
    let mut db = vec![T::zero(); c_out];
    let mut dx = need_dx.then(|| vec![T::zero(); batch * g.in_len()]);
    let mut cols = vec![T::zero(); m * plen];
    for n in 0..batch {
        let dyn_ = &dy[n * m * c_out..][..m * c_out];
        im2col(g, &x[n * g.in_len()..][..g.in_len()], &mut cols);
        // dK += cols^T dy
        T::gemm(
            plen,
            m,
            c_out,
            T::one(),
            &cols,
            1,
            plen as isize,
            dyn_,
            c_out as isize,
            1,
            T::one(),
            &mut dk,
            c_out as isize,
            1,
        );
        for px in dyn_.chunks_exact(c_out) {
            for (d, &v) in db.iter_mut().zip(px) {
                *d += v;
            }
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = dy K^T, reusing the column buffer
            T::gemm(
                m,
                c_out,
                plen,
                T::one(),
                dyn_,
                c_out as isize,
                1,
                kernel,
                1,
                c_out as isize,
                T::zero(),
                &mut cols,
                plen as isize,
                1,
            );
            col2im(g, &cols, &mut dx[n * g.in_len()..][..g.in_len()]);
        }
    }
    (dx, dk, db)
}

/// Transposed convolution: the adjoint of a `g`-shaped convolution, mapping
/// `[N, out_h, out_w, C_y]` back to `[N, in_h, in_w, C_x]` with `C_x =
/// g.channels`. The kernel is the forward kernel `[k, k, C_x, C_y]`.
pub(crate) fn conv_transpose_forward<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    y: &[T],
    kernel: &[T],
    bias: &[T],
    c_y: usize,
) -> Vec<T> {
    let plen = g.patch_len();
    let m = g.out_pixels();
    let mut out = vec![T::zero(); batch * g.in_len()];
    let mut cols = vec![T::zero(); m * plen];
    for n in 0..batch {
        let yn = &y[n * m * c_y..][..m * c_y];
        T::gemm(
            m,
            c_y,
            plen,
            T::one(),
            yn,
            c_y as isize,
            1,
            kernel,
            1,
            c_y as isize,
            T::zero(),
            &mut cols,
            plen as isize,
            1,
        );
        let o = &mut out[n * g.in_len()..][..g.in_len()];
        col2im(g, &cols, o);
        for px in o.chunks_exact_mut(g.channels) {
            for (v, &b) in px.iter_mut().zip(bias) {
                *v += b;
            }
        }
    }
    out
}

pub(crate) fn conv_transpose_backward<T: Scalar>(
    g: &ConvGeometry,
    batch: usize,
    y: &[T],
    kernel: &[T],
    c_y: usize,
    dout: &[T],
    need_dy: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let plen = g.patch_len();
    let m = g.out_pixels();
    let mut dk = vec![T::zero(); plen * c_y];
    let mut db = vec![T::zero(); g.channels];
    let mut dy = need_dy.then(|| vec![T::zero(); batch * m * c_y]);
    let mut cols = vec![T::zero(); m * plen];
    for n in 0..batch {
        let dn = &dout[n * g.in_len()..][..g.in_len()];
        for px in dn.chunks_exact(g.channels) {
            for (d, &v) in db.iter_mut().zip(px) {
                *d += v;
            }
        }
        im2col(g, dn, &mut cols);
        let yn = &y[n * m * c_y..][..m * c_y];
        // dK += cols^T y
        T::gemm(
            plen,
            m,
            c_y,
            T::one(),
            &cols,
            1,
            plen as isize,
            yn,
            c_y as isize,
            1,
            T::one(),
            &mut dk,
            c_y as isize,
            1,
        );
        if let Some(dy) = dy.as_mut() {
            let d = &mut dy[n * m * c_y..][..m * c_y];
            T::gemm(
                m,
                plen,
                c_y,
                T::one(),
                &cols,
                plen as isize,
                1,
                kernel,
                c_y as isize,
                1,
                T::zero(),
                d,
                c_y as isize,
                1,
            );
        }
    }
    (dy, dk, db)
}

/// Non-overlapping `size x size` max pooling over `[N, H, W, C]`. Returns the
/// pooled values and, per output element, the flat input index of the
/// winning element (first maximum in row-major window order).
pub(crate) fn maxpool_forward<T: Scalar>(shape: &[usize], x: &[T], size: usize) -> (Vec<T>, Vec<usize>) {
    let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best_i = ((b * h + oy * size) * w + ox * size) * c + ch;
                    let mut best = x[best_i];
                    for dy in 0..size {
                        for dx in 0..size {
                            let i = ((b * h + oy * size + dy) * w + ox * size + dx) * c + ch;
                            if x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_geometry() {
        let g = ConvGeometry::new(256, 256, 1, 3, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (256, 1));
        let g = ConvGeometry::new(64, 64, 32, 2, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (64, 0));
        let g = ConvGeometry::new(128, 128, 32, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (64, 0));
        let g = ConvGeometry::new(7, 5, 1, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w), (4, 3));
        let g = ConvGeometry::new(6, 6, 1, 3, 1, Padding::Valid).unwrap();
        assert_eq!((g.out_h, g.pad_top), (4, 0));
        assert!(ConvGeometry::new(6, 6, 1, 3, 0, Padding::Same).is_err());
    }

    #[test]
    fn stride_one_path_matches_im2col() {
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for (h, w, c, co, k, pad) in [
            (5, 4, 2, 3, 3, Padding::Same),
            (6, 6, 3, 1, 2, Padding::Same),
            (7, 5, 2, 2, 3, Padding::Valid),
            (4, 4, 1, 2, 4, Padding::Same),
        ] {
            let g = ConvGeometry::new(h, w, c, k, 1, pad).unwrap();
            let x: Vec<f64> = (0..2 * g.in_len()).map(|_| next()).collect();
            let kern: Vec<f64> = (0..g.patch_len() * co).map(|_| next()).collect();
            let b: Vec<f64> = (0..co).map(|_| next()).collect();
            let dy: Vec<f64> = (0..2 * g.out_pixels() * co).map(|_| next()).collect();
            let a = conv_forward_s1(&g, 2, &x, &kern, &b, co);
            let r = conv_forward_im2col(&g, 2, &x, &kern, &b, co);
            assert!(a.iter().zip(&r).all(|(u, v)| (u - v).abs() < 1e-12));
            let (dxa, dka, dba) = conv_backward_s1(&g, 2, &x, &kern, co, &dy, true);
            let (dxr, dkr, dbr) = conv_backward_im2col(&g, 2, &x, &kern, co, &dy, true);
            let close = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(u, v)| (u - v).abs() < 1e-12);
            assert!(close(&dxa.unwrap(), &dxr.unwrap()) && close(&dka, &dkr) && close(&dba, &dbr));
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry::new(5, 4, 2, 3, 2, Padding::Same).unwrap();
        let img: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let cols_in: Vec<f64> = (0..g.out_pixels() * g.patch_len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut cols = vec![0.0; cols_in.len()];
        im2col(&g, &img, &mut cols);
        let lhs: f64 = cols.iter().zip(&cols_in).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; img.len()];
        col2im(&g, &cols_in, &mut back);
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
