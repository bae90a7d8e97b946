use rand::Rng;

use super::params::{ParamId, Params};
use crate::scalar::Scalar;

/// 2D convolution geometry plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let weight = params.add_he(
            format!("{name}.weight"),
            &[cout, cin, kernel, kernel],
            fan_in,
            1.0,
            rng,
        );
        let bias = params.add_const(format!("{name}.bias"), &[cout], 0.0);
        Conv2d {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
            dilation,
        }
    }

    /// "Same" padding for odd kernels.
    pub fn pad(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.kernel - 1) + 1;
        let p = 2 * self.pad();
        ((h + p - span) / self.stride + 1, (w + p - span) / self.stride + 1)
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_he(format!("{name}.weight"), &[fan_out, fan_in], fan_in, gain, rng);
        let bias = params.add_const(format!("{name}.bias"), &[fan_out], 0.0);
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }
}

/// Im2col for one sample: rows are `(ci, ky, kx)`, columns output pixels.
pub(crate) fn im2col<T: Scalar>(
    x: &[T],
    h: usize,
    w: usize,
    conv: &Conv2d,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let (k, s, d, pad) = (conv.kernel, conv.stride, conv.dilation, conv.pad() as isize);
    let n = ho * wo;
    for ci in 0..conv.cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let offx = (kx * d) as isize - pad;
                let offy = (ky * d) as isize - pad;
                let (ox_lo, ox_hi) = valid_columns(offx, w, s, wo);
                for oy in 0..ho {
                    let iy = (oy * s) as isize + offy;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize || ox_lo >= ox_hi {
                        drow.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    drow[..ox_lo].iter_mut().for_each(|v| *v = T::zero());
                    drow[ox_hi..].iter_mut().for_each(|v| *v = T::zero());
                    if s == 1 {
                        let start = (ox_lo as isize + offx) as usize;
                        drow[ox_lo..ox_hi].copy_from_slice(&srow[start..start + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox] = srow[((ox * s) as isize + offx) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the input.
pub(crate) fn col2im<T: Scalar>(
    cols: &[T],
    h: usize,
    w: usize,
    conv: &Conv2d,
    ho: usize,
    wo: usize,
    dx: &mut [T],
) {
    let (k, s, d, pad) = (conv.kernel, conv.stride, conv.dilation, conv.pad() as isize);
    let n = ho * wo;
    for ci in 0..conv.cin {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let offx = (kx * d) as isize - pad;
                let offy = (ky * d) as isize - pad;
                let (ox_lo, ox_hi) = valid_columns(offx, w, s, wo);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in 0..ho {
                    let iy = (oy * s) as isize + offy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let prow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * wo + ox_lo..oy * wo + ox_hi];
                    if s == 1 {
                        let start = (ox_lo as isize + offx) as usize;
                        for (p, &v) in prow[start..start + srow.len()].iter_mut().zip(srow) {
                            *p += v;
                        }
                    } else {
                        for (j, &v) in srow.iter().enumerate() {
                            prow[(((ox_lo + j) * s) as isize + offx) as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `[lo, hi)` whose source column `ox*s + off` lies in `[0, w)`.
fn valid_columns(off: isize, w: usize, s: usize, wo: usize) -> (usize, usize) {
    let lo = if off < 0 { ((-off) as usize).div_ceil(s) } else { 0 };
    let lim = w as isize - off;
    let hi = if lim <= 0 { 0 } else { (lim as usize).div_ceil(s).min(wo) };
    (lo.min(wo), hi)
}
