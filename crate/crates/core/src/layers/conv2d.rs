use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{dot, fan_in_uniform, join, sum, Module, Param};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Output channels sharing one pass over an input row.
const BLOCK: usize = 4;

/// 2D convolution, stride 1, symmetric zero padding.
///
/// Weight shape is `[out, in, kh, kw]`, bias `[out]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    padding: (usize, usize),
    cache: Option<Padded>,
}

/// Zero-padded copy of the last input.
#[derive(Debug, Clone)]
struct Padded {
    data: Vec<f64>,
    batch: usize,
    height: usize,
    width: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        padding: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel.0, kernel.1];
        let weight = fan_in_uniform(&shape, in_channels * kernel.0 * kernel.1, rng);
        Self {
            weight: Param::new(weight),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            padding,
            cache: None,
        }
    }

    pub fn from_weights(weight: Tensor, bias: Tensor, padding: (usize, usize)) -> Result<Self> {
        weight.expect_rank(4, "conv2d weight")?;
        bias.expect_shape(&[weight.dim(0)])?;
        Ok(Self { weight: Param::new(weight), bias: Param::new(bias), padding, cache: None })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.value.dim(2), self.weight.value.dim(3))
    }

    pub fn padding(&self) -> (usize, usize) {
        self.padding
    }

    /// Output `(H', W')` for an input of `(H, W)`.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let (ph, pw) = self.padding;
        if height + 2 * ph < kh || width + 2 * pw < kw {
            return Err(invalid!(
                "conv2d kernel {:?} larger than padded input {}x{}",
                (kh, kw),
                height + 2 * ph,
                width + 2 * pw
            ));
        }
        Ok((height + 2 * ph - kh + 1, width + 2 * pw - kw + 1))
    }

    fn pad(&self, input: &Tensor) -> Result<Padded> {
        input.expect_rank(4, "conv2d")?;
        let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
        if c != self.in_channels() {
            return Err(shape_err!(
                "conv2d expects {} input channels, got input shape {:?} (weight {:?})",
                self.in_channels(),
                input.shape(),
                self.weight.value.shape()
            ));
        }
        self.output_size(h, w)?;
        let (ph, pw) = self.padding;
        let (hp, wp) = (h + 2 * ph, w + 2 * pw);
        let mut data = vec![0.0; n * c * hp * wp];
        let src = input.data();
        for plane in 0..n * c {
            for row in 0..h {
                let from = (plane * h + row) * w;
                let to = (plane * hp + row + ph) * wp + pw;
                data[to..to + w].copy_from_slice(&src[from..from + w]);
            }
        }
        Ok(Padded { data, batch: n, height: hp, width: wp })
    }

    fn convolve(&self, padded: &Padded) -> Tensor {
        let (kh, kw) = self.kernel();
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let (hp, wp) = (padded.height, padded.width);
        let (ho, wo) = (hp - kh + 1, wp - kw + 1);
        // Sums run on the padded row pitch so each kernel tap is one contiguous
        // pass; the columns past `wo` in each row are scratch.
        let span = (ho - 1) * wp + wo;
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        let mut out = vec![0.0; padded.batch * cout * ho * wo];
        let mut acc = vec![0.0; BLOCK * span];
        for n in 0..padded.batch {
            for co0 in (0..cout).step_by(BLOCK) {
                let nb = BLOCK.min(cout - co0);
                acc.fill(0.0);
                for ci in 0..cin {
                    let plane = &padded.data[(n * cin + ci) * hp * wp..(n * cin + ci + 1) * hp * wp];
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let src = &plane[ki * wp + kj..ki * wp + kj + span];
                            let tap = |co: usize| w[((co * cin + ci) * kh + ki) * kw + kj];
                            if nb == BLOCK {
                                let ws = [tap(co0), tap(co0 + 1), tap(co0 + 2), tap(co0 + 3)];
                                let (a0, rest) = acc.split_at_mut(span);
                                let (a1, rest) = rest.split_at_mut(span);
                                let (a2, a3) = rest.split_at_mut(span);
                                for ((((&x, d0), d1), d2), d3) in src.iter().zip(a0).zip(a1).zip(a2).zip(a3) {
                                    *d0 += ws[0] * x;
                                    *d1 += ws[1] * x;
                                    *d2 += ws[2] * x;
                                    *d3 += ws[3] * x;
                                }
                            } else {
                                for k in 0..nb {
                                    let wv = tap(co0 + k);
                                    for (d, &x) in acc[k * span..(k + 1) * span].iter_mut().zip(src) {
                                        *d += wv * x;
                                    }
                                }
                            }
                        }
                    }
                }
                for k in 0..nb {
                    let co = co0 + k;
                    let plane = &mut out[(n * cout + co) * ho * wo..(n * cout + co + 1) * ho * wo];
                    for oh in 0..ho {
                        let from = &acc[k * span + oh * wp..k * span + oh * wp + wo];
                        for (d, &v) in plane[oh * wo..(oh + 1) * wo].iter_mut().zip(from) {
                            *d = v + b[co];
                        }
                    }
                }
            }
        }
        Tensor::new(vec![padded.batch, cout, ho, wo], out).expect("conv2d output shape")
    }

    /// Forward pass without caching.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.convolve(&self.pad(input)?))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let padded = self.pad(input)?;
        let out = self.convolve(&padded);
        self.cache = Some(padded);
        Ok(out)
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let padded = self.cache.as_ref().ok_or_else(|| invalid!("conv2d backward before forward"))?;
        let (kh, kw) = (self.weight.value.dim(2), self.weight.value.dim(3));
        let (cin, cout) = (self.weight.value.dim(1), self.weight.value.dim(0));
        let (hp, wp) = (padded.height, padded.width);
        let (ho, wo) = (hp - kh + 1, wp - kw + 1);
        let n_batch = padded.batch;
        grad_out.expect_shape(&[n_batch, cout, ho, wo])?;

        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let go = grad_out.data();
        // upstream gradient on the padded row pitch, zero in the scratch columns
        let span = (ho - 1) * wp + wo;
        let mut gpad = vec![0.0; n_batch * cout * span];
        for plane in 0..n_batch * cout {
            let rows = &go[plane * ho * wo..(plane + 1) * ho * wo];
            gb[plane % cout] += sum(rows);
            for oh in 0..ho {
                let to = plane * span + oh * wp;
                gpad[to..to + wo].copy_from_slice(&rows[oh * wo..(oh + 1) * wo]);
            }
        }
        let mut gin = vec![0.0; n_batch * cin * hp * wp];
        for n in 0..n_batch {
            let gs = |co: usize| &gpad[(n * cout + co) * span..(n * cout + co + 1) * span];
            for ci in 0..cin {
                let base = (n * cin + ci) * hp * wp;
                let src = &padded.data[base..base + hp * wp];
                let dst = &mut gin[base..base + hp * wp];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let off = ki * wp + kj;
                        let x = &src[off..off + span];
                        let gx = &mut dst[off..off + span];
                        let widx = |co: usize| ((co * cin + ci) * kh + ki) * kw + kj;
                        for co0 in (0..cout).step_by(BLOCK) {
                            let nb = BLOCK.min(cout - co0);
                            if nb == BLOCK {
                                let ws = [w[widx(co0)], w[widx(co0 + 1)], w[widx(co0 + 2)], w[widx(co0 + 3)]];
                                let (g0, g1, g2, g3) = (gs(co0), gs(co0 + 1), gs(co0 + 2), gs(co0 + 3));
                                for ((((d, &a), &b), &c), &e) in gx.iter_mut().zip(g0).zip(g1).zip(g2).zip(g3) {
                                    *d += (ws[0] * a + ws[1] * b) + (ws[2] * c + ws[3] * e);
                                }
                            } else {
                                for co in co0..co0 + nb {
                                    let wv = w[widx(co)];
                                    for (d, &g) in gx.iter_mut().zip(gs(co)) {
                                        *d += wv * g;
                                    }
                                }
                            }
                            for co in co0..co0 + nb {
                                gw[widx(co)] += dot(x, gs(co));
                            }
                        }
                    }
                }
            }
        }

        let (ph, pw) = self.padding;
        let (h, wd) = (hp - 2 * ph, wp - 2 * pw);
        let mut grad_in = vec![0.0; n_batch * cin * h * wd];
        for plane in 0..n_batch * cin {
            for row in 0..h {
                let from = (plane * hp + row + ph) * wp + pw;
                let to = (plane * h + row) * wd;
                grad_in[to..to + wd].copy_from_slice(&gin[from..from + wd]);
            }
        }
        Tensor::new(vec![n_batch, cin, h, wd], grad_in)
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight.value);
        f(&join(prefix, "bias"), &self.bias.value);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight.value);
        f(&join(prefix, "bias"), &mut self.bias.value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_padding_keeps_spatial_extent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::new(1, 32, (3, 3), (1, 1), &mut rng);
        let x = Tensor::zeros(&[1, 1, 40, 500]);
        assert_eq!(conv.infer(&x).unwrap().shape(), &[1, 32, 40, 500]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let conv = Conv2d::from_weights(Tensor::full(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]), (0, 0))
            .unwrap();
        let x = Tensor::from_fn(&[2, 1, 3, 4], |i| i as f64 * 0.5 - 2.0);
        assert_eq!(conv.infer(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let conv =
            Conv2d::from_weights(Tensor::zeros(&[3, 2, 3, 3]), Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap(), (1, 1))
                .unwrap();
        let x = Tensor::from_fn(&[1, 2, 4, 5], |i| i as f64);
        let y = conv.infer(&x).unwrap();
        for c in 0..3 {
            for i in 0..20 {
                assert_eq!(y.data()[c * 20 + i], [0.5, -1.0, 2.0][c]);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::new(3, 4, (3, 3), (1, 1), &mut rng);
        let err = conv.infer(&Tensor::zeros(&[1, 2, 5, 5])).unwrap_err();
        assert!(matches!(err, crate::Error::Shape(_)));
    }

    #[test]
    fn full_height_kernel_collapses_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::new(4, 8, (5, 1), (0, 0), &mut rng);
        let y = conv.infer(&Tensor::zeros(&[2, 4, 5, 62])).unwrap();
        assert_eq!(y.shape(), &[2, 8, 1, 62]);
    }
}
