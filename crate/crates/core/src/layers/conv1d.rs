use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{fan_in_uniform, join, Module, Param};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Dilated 1D convolution over `[batch, channels, time]`, stride 1.
///
/// Weight shape is `[out, in, k]`. Tap `q` of the kernel reads input position
/// `t + q * dilation - padding`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    dilation: usize,
    padding: usize,
    cache: Option<(Vec<f64>, usize, usize)>,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 || dilation == 0 {
            return Err(invalid!("conv1d kernel and dilation must be positive"));
        }
        let weight = fan_in_uniform(&[out_channels, in_channels, kernel], in_channels * kernel, rng);
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            dilation,
            padding,
            cache: None,
        })
    }

    /// Length-preserving convolution: padding `dilation * (kernel - 1) / 2`.
    pub fn same<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let padding = same_padding(kernel, dilation)?;
        Self::new(in_channels, out_channels, kernel, dilation, padding, rng)
    }

    pub fn from_weights(weight: Tensor, bias: Tensor, dilation: usize, padding: usize) -> Result<Self> {
        weight.expect_rank(3, "conv1d weight")?;
        bias.expect_shape(&[weight.dim(0)])?;
        if dilation == 0 {
            return Err(invalid!("conv1d dilation must be positive"));
        }
        Ok(Self { weight: Param::new(weight), bias: Param::new(bias), dilation, padding, cache: None })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(2)
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// `T' = T + 2p - r(k - 1)`.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let span = self.dilation * (self.kernel() - 1);
        let padded = len + 2 * self.padding;
        if padded <= span {
            return Err(invalid!("conv1d span {} exceeds padded length {}", span + 1, padded));
        }
        Ok(padded - span)
    }

    fn pad(&self, input: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
        input.expect_rank(3, "conv1d")?;
        let [n, c, t] = [input.dim(0), input.dim(1), input.dim(2)];
        if c != self.in_channels() {
            return Err(shape_err!(
                "conv1d expects {} input channels, got input shape {:?}",
                self.in_channels(),
                input.shape()
            ));
        }
        self.output_len(t)?;
        let p = self.padding;
        let tp = t + 2 * p;
        let mut data = vec![0.0; n * c * tp];
        for (row, src) in input.data().chunks_exact(t).enumerate() {
            data[row * tp + p..row * tp + p + t].copy_from_slice(src);
        }
        Ok((data, n, tp))
    }

    fn convolve(&self, padded: &[f64], batch: usize, tp: usize) -> Tensor {
        let (cin, cout, k, r) = (self.in_channels(), self.out_channels(), self.kernel(), self.dilation);
        let to = tp - r * (k - 1);
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        let mut out = vec![0.0; batch * cout * to];
        for n in 0..batch {
            for co in 0..cout {
                let dst = &mut out[(n * cout + co) * to..(n * cout + co + 1) * to];
                dst.iter_mut().for_each(|v| *v = b[co]);
                for ci in 0..cin {
                    let src = &padded[(n * cin + ci) * tp..(n * cin + ci + 1) * tp];
                    for q in 0..k {
                        let wv = w[(co * cin + ci) * k + q];
                        let x = &src[q * r..q * r + to];
                        for (d, &s) in dst.iter_mut().zip(x) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
        Tensor::new(vec![batch, cout, to], out).expect("conv1d output shape")
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let (padded, n, tp) = self.pad(input)?;
        Ok(self.convolve(&padded, n, tp))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (padded, n, tp) = self.pad(input)?;
        let out = self.convolve(&padded, n, tp);
        self.cache = Some((padded, n, tp));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (padded, batch, tp) = self.cache.as_ref().ok_or_else(|| invalid!("conv1d backward before forward"))?;
        let (batch, tp) = (*batch, *tp);
        let (cin, cout, k, r) = (
            self.weight.value.dim(1),
            self.weight.value.dim(0),
            self.weight.value.dim(2),
            self.dilation,
        );
        let to = tp - r * (k - 1);
        grad_out.expect_shape(&[batch, cout, to])?;
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let go = grad_out.data();
        let mut gin = vec![0.0; batch * cin * tp];
        for n in 0..batch {
            for co in 0..cout {
                let g = &go[(n * cout + co) * to..(n * cout + co + 1) * to];
                gb[co] += g.iter().sum::<f64>();
                for ci in 0..cin {
                    let base = (n * cin + ci) * tp;
                    for q in 0..k {
                        let widx = (co * cin + ci) * k + q;
                        let wv = w[widx];
                        let x = &padded[base + q * r..base + q * r + to];
                        let gx = &mut gin[base + q * r..base + q * r + to];
                        let mut acc = 0.0;
                        for ((gxv, &xv), &gv) in gx.iter_mut().zip(x).zip(g) {
                            acc += xv * gv;
                            *gxv += wv * gv;
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        let p = self.padding;
        let t = tp - 2 * p;
        let mut grad_in = Vec::with_capacity(batch * cin * t);
        for row in gin.chunks_exact(tp) {
            grad_in.extend_from_slice(&row[p..p + t]);
        }
        Tensor::new(vec![batch, cin, t], grad_in)
    }
}

/// Symmetric padding that keeps the time extent fixed.
pub fn same_padding(kernel: usize, dilation: usize) -> Result<usize> {
    let span = dilation * kernel.saturating_sub(1);
    if span % 2 != 0 {
        return Err(invalid!(
            "kernel {} with dilation {} has odd span {}; symmetric same padding is not an integer",
            kernel,
            dilation,
            span
        ));
    }
    Ok(span / 2)
}

impl Module for Conv1d {
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
    fn same_padding_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv1d::same(3, 5, 3, 4, &mut rng).unwrap();
        assert_eq!(conv.padding(), 4);
        let y = conv.infer(&Tensor::zeros(&[2, 3, 62])).unwrap();
        assert_eq!(y.shape(), &[2, 5, 62]);
    }

    #[test]
    fn odd_span_is_rejected() {
        assert!(same_padding(2, 1).is_err());
        assert!(same_padding(4, 3).is_err());
        assert_eq!(same_padding(2, 2).unwrap(), 1);
    }

    #[test]
    fn impulse_response_is_confined_to_dilated_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv1d::same(1, 1, 3, 2, &mut rng).unwrap();
        let mut x = Tensor::zeros(&[1, 1, 21]);
        x.data_mut()[10] = 1.0;
        let y = conv.infer(&x).unwrap();
        for (t, &v) in y.data().iter().enumerate() {
            if (t as isize - 10).abs() > 2 {
                assert_eq!(v, 0.0, "position {t}");
            }
        }
        assert_ne!(y.data()[8], 0.0);
        assert_ne!(y.data()[12], 0.0);
    }

    #[test]
    fn unit_dilation_matches_plain_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv1d::new(2, 3, 3, 1, 1, &mut rng).unwrap();
        let x = Tensor::from_fn(&[1, 2, 7], |i| (i as f64 * 0.37).sin());
        let y = conv.infer(&x).unwrap();
        let w = &conv.weight.value;
        for co in 0..3 {
            for t in 0..7 {
                let mut acc = conv.bias.value.data()[co];
                for ci in 0..2 {
                    for q in 0..3 {
                        let pos = t as isize + q as isize - 1;
                        if (0..7).contains(&pos) {
                            acc += w.get(&[co, ci, q]) * x.get(&[0, ci, pos as usize]);
                        }
                    }
                }
                assert_eq!(y.get(&[0, co, t]), acc);
            }
        }
    }
}
