use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Non-overlapping max pooling over `[batch, channels, H, W]`.
///
/// Stride equals the window. Trailing rows and columns that do not fill a
/// window are dropped. Ties go to the first element in row-major order.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    window: (usize, usize),
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(window: (usize, usize)) -> Self {
        Self { window, cache: None }
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        (height / self.window.0, width / self.window.1)
    }

    fn pool(&self, input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        input.expect_rank(4, "maxpool2d")?;
        let [n, c, h, w] = [input.dim(0), input.dim(1), input.dim(2), input.dim(3)];
        let (wh, ww) = self.window;
        if h < wh || w < ww {
            return Err(invalid!("maxpool2d window {:?} larger than input {}x{}", self.window, h, w));
        }
        let (ho, wo) = self.output_size(h, w);
        let x = input.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut arg = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = base + oh * wh * w + ow * ww;
                    for i in 0..wh {
                        for j in 0..ww {
                            let idx = base + (oh * wh + i) * w + ow * ww + j;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
        Ok((Tensor::new(vec![n, c, ho, wo], out)?, arg))
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.pool(input)?.0)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, arg) = self.pool(input)?;
        self.cache = Some((arg, input.shape().to_vec()));
        Ok(out)
    }

    /// Routes each upstream gradient to its window's argmax.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (arg, shape) = self.cache.as_ref().ok_or_else(|| invalid!("maxpool2d backward before forward"))?;
        if grad_out.len() != arg.len() {
            return Err(invalid!("maxpool2d gradient has {} values, expected {}", grad_out.len(), arg.len()));
        }
        let mut gx = Tensor::zeros(shape);
        let data = gx.data_mut();
        for (&g, &i) in grad_out.data().iter().zip(arg) {
            data[i] += g;
        }
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_semantics() {
        let pool = MaxPool2d::new((2, 2));
        let y = pool.infer(&Tensor::zeros(&[1, 1, 125, 125])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 62, 62]);
    }

    #[test]
    fn picks_window_max() {
        let pool = MaxPool2d::new((2, 2));
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool.infer(&x).unwrap().data(), &[4.0]);
    }

    #[test]
    fn gradient_goes_to_argmax_only() {
        let mut pool = MaxPool2d::new((2, 2));
        let x = Tensor::new(vec![1, 1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 0.0, 2.0, 1.0]).unwrap();
        pool.forward(&x).unwrap();
        let g = pool.backward(&Tensor::new(vec![1, 1, 1, 2], vec![0.5, 2.0]).unwrap()).unwrap();
        // second window is a tie between positions 2 and 3 of row 0 and 2 of row 1
        assert_eq!(g.data(), &[0.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
