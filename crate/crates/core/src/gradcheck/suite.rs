//! Finite-difference checks of every differentiable layer and of a whole
//! network. Each check projects the output onto a fixed random tensor `R`,
//! so the scalar loss is `sum(out * R)` and the upstream gradient is `R`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check_at, grad_check_refined};
use crate::error::Result;
use crate::layers::{BatchNorm, Conv1d, Conv2d, MaxPool2d, Mode, Module, Param};
use crate::model::{aggregate, aggregate_backward, DetectorHead, MilNet, ModelConfig, MultiDetector, SingleDetector};
use crate::model::Mts;
use crate::tensor::Tensor;
use crate::train::{loss, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Maximum over the input gradient and every parameter gradient.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates that needed smaller steps (end-to-end checks only).
    pub refined: usize,
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn nth_param<M: Module>(module: &mut M, index: usize, f: impl FnOnce(&mut Param)) {
    let mut i = 0;
    let mut f = Some(f);
    module.visit_params(&mut |p| {
        if i == index {
            if let Some(f) = f.take() {
                f(p);
            }
        }
        i += 1;
    });
}

fn param_count<M: Module>(module: &mut M) -> usize {
    let mut n = 0;
    module.visit_params(&mut |_| n += 1);
    n
}

/// Evenly spaced coordinates, all of them when `limit` is `None` or large.
fn spread(len: usize, limit: Option<usize>) -> Option<Vec<usize>> {
    match limit {
        Some(k) if k < len => Some((0..k).map(|i| i * len / k).collect()),
        _ => None,
    }
}

/// Checks input and parameter gradients of a module.
///
/// `forward` runs the caching forward pass, `backward` maps the upstream
/// gradient to the input gradient, and `eval` computes the output without
/// side effects for a given module state and input.
fn check_module<M, F, B, E>(
    name: &str,
    module: &M,
    x: &Tensor,
    h: f64,
    limit: Option<usize>,
    rng: &mut ChaCha8Rng,
    mut forward: F,
    mut backward: B,
    eval: E,
) -> Result<Check>
where
    M: Module + Clone,
    F: FnMut(&mut M, &Tensor) -> Result<Tensor>,
    B: FnMut(&mut M, &Tensor) -> Result<Tensor>,
    E: Fn(&mut M, &Tensor) -> Result<Tensor>,
{
    let mut work = module.clone();
    work.zero_grad();
    let out = forward(&mut work, x)?;
    let r = uniform(out.shape(), -1.0, 1.0, rng);
    let gx = backward(&mut work, &r)?;

    let coords = spread(x.len(), limit);
    let mut worst = grad_check_at(
        |p| eval(&mut module.clone(), p)?.dot(&r),
        x,
        &gx,
        h,
        coords.as_deref(),
    )?;
    let mut checked = worst.checked;
    let mut base = module.clone();
    for i in 0..param_count(&mut base) {
        let mut value = None;
        let mut grad = None;
        nth_param(&mut work, i, |p| grad = Some(p.grad.clone()));
        nth_param(&mut base, i, |p| value = Some(p.value.clone()));
        let (value, grad) = (value.expect("param value"), grad.expect("param grad"));
        let coords = spread(value.len(), limit);
        let report = grad_check_at(
            |v| {
                let mut m = module.clone();
                nth_param(&mut m, i, |p| p.value = v.clone());
                eval(&mut m, x)?.dot(&r)
            },
            &value,
            &grad,
            h,
            coords.as_deref(),
        )?;
        checked += report.checked;
        if report.max_relative_error > worst.max_relative_error {
            worst = report;
        }
    }
    Ok(Check { name: String::from(name), max_relative_error: worst.max_relative_error, checked, refined: 0 })
}

/// Per-layer checks at small sizes with randomized inputs and weights.
pub fn layer_suite(seed: u64, h: f64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut conv = Conv2d::new(3, 4, (3, 3), (1, 1), &mut rng);
    conv.bias.value = uniform(&[4], -0.5, 0.5, &mut rng);
    let x = uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut rng);
    out.push(check_module(
        "conv2d",
        &conv,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x),
        |m, g| m.backward(g),
        |m, x| m.infer(x),
    )?);

    let dilation = 1 + rng.random_range(1..4usize);
    let mut conv1 = Conv1d::same(3, 4, 3, dilation, &mut rng)?;
    conv1.bias.value = uniform(&[4], -0.5, 0.5, &mut rng);
    let x = uniform(&[2, 3, 16], -1.0, 1.0, &mut rng);
    out.push(check_module(
        "conv1d_dilated",
        &conv1,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x),
        |m, g| m.backward(g),
        |m, x| m.infer(x),
    )?);

    let mut bn = BatchNorm::new(2);
    bn.gamma.value = uniform(&[2], 0.5, 1.5, &mut rng);
    bn.beta.value = uniform(&[2], -0.5, 0.5, &mut rng);
    let x = uniform(&[4, 2, 5, 5], -2.0, 2.0, &mut rng);
    out.push(check_module(
        "batchnorm_train",
        &bn,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x, Mode::Train),
        |m, g| m.backward(g),
        |m, x| m.forward(x, Mode::Train),
    )?);

    let pool = PoolModule(MaxPool2d::new((2, 2)));
    let x = uniform(&[2, 2, 6, 7], -1.0, 1.0, &mut rng);
    out.push(check_module(
        "maxpool2d",
        &pool,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.0.forward(x),
        |m, g| m.0.backward(g),
        |m, x| m.0.infer(x),
    )?);

    let mut mts = Mts::new(4, &mut rng)?;
    let x = uniform(&[2, 4, 12], -1.0, 1.0, &mut rng);
    // move biases and BN affine parameters off their initial values
    mts.visit_params(&mut |p| {
        if p.value.rank() == 1 {
            p.value = uniform(p.value.shape(), 0.2, 1.0, &mut rng);
        }
    });
    out.push(check_module(
        "mts",
        &mts,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x, Mode::Train),
        |m, g| m.backward(g),
        |m, x| m.forward(x, Mode::Train),
    )?);

    let mut sd = SingleDetector::new(5, 3, &mut rng)?;
    sd.conv.bias.value = uniform(&[3], -0.5, 0.5, &mut rng);
    let sd = DetectorHead::Single(sd);
    let x = uniform(&[2, 5, 6], -1.0, 1.0, &mut rng);
    out.push(check_module(
        "sd_head",
        &sd,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x),
        |m, g| m.backward(g),
        |m, x| m.infer(x),
    )?);

    let mut md = MultiDetector::new(5, 3, 4, &mut rng)?;
    md.conv.bias.value = uniform(&[12], -0.5, 0.5, &mut rng);
    let md = DetectorHead::Multi(md);
    out.push(check_module(
        "md_head",
        &md,
        &x,
        h,
        None,
        &mut rng,
        |m, x| m.forward(x),
        |m, g| m.backward(g),
        |m, x| m.infer(x),
    )?);

    // distinct random scores keep the max away from ties
    let scores = uniform(&[2, 3, 6], 0.05, 0.95, &mut rng);
    let r = uniform(&[2, 3], -1.0, 1.0, &mut rng);
    let agg = aggregate(scores.clone())?;
    let g = aggregate_backward(&r, &agg.argmax, 6)?;
    let report = grad_check_at(|p| aggregate(p.clone())?.bag_scores.dot(&r), &scores, &g, h, None)?;
    out.push(Check { name: "max_aggregator".into(), max_relative_error: report.max_relative_error, checked: report.checked, refined: 0 });

    let bag = uniform(&[4, 10], 0.02, 0.98, &mut rng);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..10)).collect();
    let targets = loss::one_hot(&labels, 10)?;
    let kind = LossKind::balanced(10);
    let l = loss::compute(kind, &bag, &targets)?;
    let report = grad_check_at(|p| Ok(loss::compute(kind, p, &targets)?.loss), &bag, &l.grad, h, None)?;
    out.push(Check { name: "weighted_bce".into(), max_relative_error: report.max_relative_error, checked: report.checked, refined: 0 });

    Ok(out)
}

#[derive(Debug, Clone)]
struct PoolModule(MaxPool2d);

impl Module for PoolModule {
    fn visit_params(&mut self, _: &mut dyn FnMut(&mut Param)) {}
    fn visit_state(&self, _: &str, _: &mut dyn FnMut(&str, &Tensor)) {}
    fn visit_state_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor)) {}
}

#[derive(Debug, Clone)]
struct NetModule(MilNet);

impl Module for NetModule {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.0.visit_params(f)
    }
    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.0.visit_state(prefix, f)
    }
    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.0.visit_state_mut(prefix, f)
    }
}

/// End-to-end check of a train-mode network under its training loss.
/// `limit` caps the coordinates checked per tensor (evenly spaced).
///
/// A whole network holds thousands of ReLU and max switch points, so some
/// probes land within `h` of one; coordinates above `tolerance` are
/// re-estimated with smaller steps (see [`grad_check_refined`]).
pub fn model_check(config: &ModelConfig, batch: usize, h: f64, limit: Option<usize>, tolerance: f64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let net = NetModule(MilNet::new(config.clone())?);
    let x = uniform(&[batch, 1, config.bands, config.frames], -1.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..batch).map(|b| b % config.classes).collect();
    let targets = loss::one_hot(&labels, config.classes)?;
    let kind = LossKind::balanced(config.classes);
    // The projection tensor `R` is not used here: the loss gradient with
    // respect to the bag scores plays its role.
    let name = format!("model_{}", config.variant_name());
    let mut work = net.clone();
    work.zero_grad();
    let out = work.0.forward(&x, Mode::Train)?;
    let l = loss::compute(kind, &out.bag_scores, &targets)?;
    let gx = work.0.backward(&l.grad)?;
    let eval = |m: &mut NetModule, p: &Tensor| -> Result<f64> {
        let out = m.0.forward(p, Mode::Train)?;
        Ok(loss::compute(kind, &out.bag_scores, &targets)?.loss)
    };
    let coords = spread(x.len(), limit);
    let mut worst = grad_check_refined(|p| eval(&mut net.clone(), p), &x, &gx, h, coords.as_deref(), tolerance)?;
    let (mut checked, mut refined) = (worst.checked, worst.refined);
    let mut base = net.clone();
    for i in 0..param_count(&mut base) {
        let (mut value, mut grad) = (None, None);
        nth_param(&mut work, i, |p| grad = Some(p.grad.clone()));
        nth_param(&mut base, i, |p| value = Some(p.value.clone()));
        let (value, grad) = (value.expect("param value"), grad.expect("param grad"));
        let coords = spread(value.len(), limit);
        let report = grad_check_refined(
            |v| {
                let mut m = net.clone();
                nth_param(&mut m, i, |p| p.value = v.clone());
                eval(&mut m, &x)
            },
            &value,
            &grad,
            h,
            coords.as_deref(),
            tolerance,
        )?;
        checked += report.checked;
        refined += report.refined;
        if report.max_relative_error > worst.max_relative_error {
            worst = report;
        }
    }
    Ok(Check { name, max_relative_error: worst.max_relative_error, checked, refined })
}
