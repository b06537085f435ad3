//! Low-level NCHW layer primitives with hand-written backward passes.
//!
//! All loops accumulate sequentially so results are bit-reproducible on a
//! given platform. Inner loops run over contiguous rows.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[inline]
pub fn dims4<S: Scalar>(t: &Tensor<S>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 4);
    (s[0], s[1], s[2], s[3])
}

/// 3x3 convolution, stride 1, zero padding 1 (same-size output).
pub fn conv3x3<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, cin, h, wd) = dims4(x);
    let (cout, cin_w, kh, kw) = dims4(w);
    debug_assert_eq!((cin_w, kh, kw), (cin, 3, 3));
    debug_assert_eq!(b.len(), cout);
    let mut y = Tensor::zeros(&[n, cout, h, wd]);
    let hw = h * wd;
    let xd = x.data();
    let wdta = w.data();
    let bd = b.data();
    let yd = y.data_mut();
    for ni in 0..n {
        for o in 0..cout {
            let yplane = &mut yd[(ni * cout + o) * hw..(ni * cout + o + 1) * hw];
            yplane.fill(bd[o]);
            for c in 0..cin {
                let xplane = &xd[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                for dy in 0..3usize {
                    let (ilo, ihi) = row_range(dy, h);
                    for dx in 0..3usize {
                        let (jlo, jhi) = row_range(dx, wd);
                        if jlo >= jhi {
                            continue;
                        }
                        let wv = wdta[((o * cin + c) * 3 + dy) * 3 + dx];
                        for i in ilo..ihi {
                            let xi = i + dy - 1;
                            let xrow = &xplane[xi * wd + jlo + dx - 1..xi * wd + jhi + dx - 1];
                            let yrow = &mut yplane[i * wd + jlo..i * wd + jhi];
                            for (yv, &xv) in yrow.iter_mut().zip(xrow) {
                                *yv = *yv + wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Valid output-row range for a kernel offset `d` in {0,1,2} with padding 1.
#[inline]
fn row_range(d: usize, extent: usize) -> (usize, usize) {
    match d {
        0 => (1, extent),
        1 => (0, extent),
        _ => (0, extent - 1),
    }
}

/// Backward of [`conv3x3`]: gradients w.r.t. input, weights, and bias.
pub fn conv3x3_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    gy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, cin, h, wd) = dims4(x);
    let (cout, _, _, _) = dims4(w);
    let hw = h * wd;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[cout]);
    let xd = x.data();
    let wdta = w.data();
    let gyd = gy.data();
    for ni in 0..n {
        for o in 0..cout {
            let gyplane = &gyd[(ni * cout + o) * hw..(ni * cout + o + 1) * hw];
            let mut bacc = S::zero();
            for &g in gyplane {
                bacc += g;
            }
            gb.data_mut()[o] += bacc;
            for c in 0..cin {
                let xplane = &xd[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                for dy in 0..3usize {
                    let (ilo, ihi) = row_range(dy, h);
                    for dx in 0..3usize {
                        let (jlo, jhi) = row_range(dx, wd);
                        if jlo >= jhi {
                            continue;
                        }
                        let widx = ((o * cin + c) * 3 + dy) * 3 + dx;
                        let wv = wdta[widx];
                        let mut wacc = S::zero();
                        {
                            let gxplane =
                                &mut gx.data_mut()[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                            for i in ilo..ihi {
                                let xi = i + dy - 1;
                                let xrow = &xplane[xi * wd + jlo + dx - 1..xi * wd + jhi + dx - 1];
                                let gyrow = &gyplane[i * wd + jlo..i * wd + jhi];
                                let gxrow = &mut gxplane
                                    [xi * wd + jlo + dx - 1..xi * wd + jhi + dx - 1];
                                for ((&g, &xv), gxv) in gyrow.iter().zip(xrow).zip(gxrow) {
                                    wacc += g * xv;
                                    *gxv = *gxv + wv * g;
                                }
                            }
                        }
                        gw.data_mut()[widx] += wacc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

/// 1x1 convolution (per-pixel linear map across channels).
pub fn conv1x1<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, cin, h, wd) = dims4(x);
    let (cout, cin_w, _, _) = dims4(w);
    debug_assert_eq!(cin_w, cin);
    let hw = h * wd;
    let mut y = Tensor::zeros(&[n, cout, h, wd]);
    let xd = x.data();
    let wdta = w.data();
    let bd = b.data();
    let yd = y.data_mut();
    for ni in 0..n {
        for o in 0..cout {
            let yplane = &mut yd[(ni * cout + o) * hw..(ni * cout + o + 1) * hw];
            yplane.fill(bd[o]);
            for c in 0..cin {
                let wv = wdta[o * cin + c];
                let xplane = &xd[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                for (yv, &xv) in yplane.iter_mut().zip(xplane) {
                    *yv = *yv + wv * xv;
                }
            }
        }
    }
    y
}

pub fn conv1x1_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    gy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, cin, h, wd) = dims4(x);
    let (cout, _, _, _) = dims4(w);
    let hw = h * wd;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[cout]);
    let xd = x.data();
    let wdta = w.data();
    let gyd = gy.data();
    for ni in 0..n {
        for o in 0..cout {
            let gyplane = &gyd[(ni * cout + o) * hw..(ni * cout + o + 1) * hw];
            let mut bacc = S::zero();
            for &g in gyplane {
                bacc += g;
            }
            gb.data_mut()[o] += bacc;
            for c in 0..cin {
                let xplane = &xd[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                let wv = wdta[o * cin + c];
                let mut wacc = S::zero();
                {
                    let gxplane =
                        &mut gx.data_mut()[(ni * cin + c) * hw..(ni * cin + c + 1) * hw];
                    for ((&g, &xv), gxv) in gyplane.iter().zip(xplane).zip(gxplane) {
                        wacc += g * xv;
                        *gxv = *gxv + wv * g;
                    }
                }
                gw.data_mut()[o * cin + c] += wacc;
            }
        }
    }
    (gx, gw, gb)
}

/// ReLU. The backward mask uses the pre-activation with a strict `> 0` test.
pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
    y
}

pub fn relu_backward<S: Scalar>(pre: &Tensor<S>, gy: &Tensor<S>) -> Tensor<S> {
    let mut gx = gy.clone();
    for (g, &p) in gx.data_mut().iter_mut().zip(pre.data()) {
        if p <= S::zero() {
            *g = S::zero();
        }
    }
    gx
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and, per output
/// cell, the flat index of the winning input element (first in scan order on
/// ties, which makes the op deterministic).
pub fn maxpool2<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, Vec<u32>) {
    let (n, c, h, wd) = dims4(x);
    debug_assert!(h % 2 == 0 && wd % 2 == 0);
    let (oh, ow) = (h / 2, wd / 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0u32; n * c * oh * ow];
    let xd = x.data();
    let yd = y.data_mut();
    let mut oi = 0usize;
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * wd;
            for i in 0..oh {
                for j in 0..ow {
                    let i0 = base + (2 * i) * wd + 2 * j;
                    let i1 = i0 + 1;
                    let i2 = i0 + wd;
                    let i3 = i2 + 1;
                    let mut best = i0;
                    if xd[i1] > xd[best] {
                        best = i1;
                    }
                    if xd[i2] > xd[best] {
                        best = i2;
                    }
                    if xd[i3] > xd[best] {
                        best = i3;
                    }
                    yd[oi] = xd[best];
                    arg[oi] = best as u32;
                    oi += 1;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<S: Scalar>(
    input_shape: &[usize],
    arg: &[u32],
    gy: &Tensor<S>,
) -> Tensor<S> {
    let mut gx = Tensor::zeros(input_shape);
    let gxd = gx.data_mut();
    for (&a, &g) in arg.iter().zip(gy.data()) {
        gxd[a as usize] += g;
    }
    gx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (n, c, h, wd) = dims4(x);
    let (oh, ow) = (h * 2, wd * 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let xd = x.data();
    let yd = y.data_mut();
    for p in 0..n * c {
        let xplane = &xd[p * h * wd..(p + 1) * h * wd];
        let yplane = &mut yd[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            let xrow = &xplane[(i / 2) * wd..(i / 2 + 1) * wd];
            let yrow = &mut yplane[i * ow..(i + 1) * ow];
            for j in 0..ow {
                yrow[j] = xrow[j / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<S: Scalar>(gy: &Tensor<S>) -> Tensor<S> {
    let (n, c, oh, ow) = dims4(gy);
    let (h, wd) = (oh / 2, ow / 2);
    let mut gx = Tensor::zeros(&[n, c, h, wd]);
    let gyd = gy.data();
    let gxd = gx.data_mut();
    for p in 0..n * c {
        let gyplane = &gyd[p * oh * ow..(p + 1) * oh * ow];
        let gxplane = &mut gxd[p * h * wd..(p + 1) * h * wd];
        for i in 0..oh {
            let gyrow = &gyplane[i * ow..(i + 1) * ow];
            let gxrow = &mut gxplane[(i / 2) * wd..(i / 2 + 1) * wd];
            for j in 0..ow {
                gxrow[j / 2] += gyrow[j];
            }
        }
    }
    gx
}

/// Concatenate along the channel axis; `a` comes first.
pub fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, ca, h, wd) = dims4(a);
    let (nb, cb, hb, wb) = dims4(b);
    debug_assert_eq!((n, h, wd), (nb, hb, wb));
    let hw = h * wd;
    let mut y = Tensor::zeros(&[n, ca + cb, h, wd]);
    let ad = a.data();
    let bd = b.data();
    let yd = y.data_mut();
    for ni in 0..n {
        let ydst = &mut yd[ni * (ca + cb) * hw..(ni + 1) * (ca + cb) * hw];
        ydst[..ca * hw].copy_from_slice(&ad[ni * ca * hw..(ni + 1) * ca * hw]);
        ydst[ca * hw..].copy_from_slice(&bd[ni * cb * hw..(ni + 1) * cb * hw]);
    }
    y
}

/// Split a channel-concatenated gradient back into its two parts.
pub fn split_channels<S: Scalar>(g: &Tensor<S>, ca: usize) -> (Tensor<S>, Tensor<S>) {
    let (n, c, h, wd) = dims4(g);
    let cb = c - ca;
    let hw = h * wd;
    let mut ga = Tensor::zeros(&[n, ca, h, wd]);
    let mut gb = Tensor::zeros(&[n, cb, h, wd]);
    let gd = g.data();
    for ni in 0..n {
        let src = &gd[ni * c * hw..(ni + 1) * c * hw];
        ga.data_mut()[ni * ca * hw..(ni + 1) * ca * hw].copy_from_slice(&src[..ca * hw]);
        gb.data_mut()[ni * cb * hw..(ni + 1) * cb * hw].copy_from_slice(&src[ca * hw..]);
    }
    (ga, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn conv3x3_identity_kernel() {
        let x = t(&[1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // identity kernel: center tap 1
        let mut wv = vec![0.0; 9];
        wv[4] = 1.0;
        let w = t(&[1, 1, 3, 3], wv);
        let b = t(&[1], vec![0.5]);
        let y = conv3x3(&x, &w, &b);
        assert_eq!(y.data(), &[1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
    }

    #[test]
    fn maxpool_routes_to_first_max_on_tie() {
        let x = t(&[1, 1, 2, 2], vec![7.0, 7.0, 1.0, 7.0]);
        let (y, arg) = maxpool2(&x);
        assert_eq!(y.data(), &[7.0]);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let g = t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let gx = upsample2_backward(&g);
        assert_eq!(gx.data(), &[10.0]);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = t(&[1, 1, 1, 2], vec![1.0, 2.0]);
        let b = t(&[1, 2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]);
        let y = concat_channels(&a, &b);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (ga, gb) = split_channels(&y, 1);
        assert_eq!(ga.data(), a.data());
        assert_eq!(gb.data(), b.data());
    }
}
