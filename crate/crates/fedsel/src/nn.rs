//! Feed-forward networks with analytic gradients.
//!
//! A model is a `Vec<LayerSpec>` plus a `ModelParams` holding one parameter
//! block per layer (empty for layers without parameters). Everything runs on
//! plain f64 loops; batches are `Tensor`s whose leading dimension is the
//! sample index.
//!
//! The parameter flattening order is fixed (per layer: weights row-major,
//! then bias) because aggregation, weight embedding and replay all operate
//! on the flat vector and must agree bit-for-bit.

use crate::error::{Error, Result};
use crate::seeding::SeedStream;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Fully connected: input size is the flattened trailing dimensions of
    /// the incoming batch.
    Dense { input: usize, output: usize },
    /// 3x3 convolution, stride 1, no padding. Input must be shaped
    /// `[k, in_channels, h, w]` with h, w >= 3.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    /// Row-wise softmax over the last dimension.
    Softmax,
    /// Keeps `keep` randomly chosen positions per sample and zeroes the
    /// rest. `keep >= row width` passes the input through unchanged.
    RandomPool { keep: usize },
}

impl LayerSpec {
    /// Shapes of (weights, bias) for this layer; `None` when parameterless.
    fn param_shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Dense { input, output } => Some((vec![input, output], output)),
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => Some((vec![out_channels, in_channels, 3, 3], out_channels)),
            _ => None,
        }
    }
}

/// Total number of scalar parameters a spec requires.
pub fn param_count(spec: &[LayerSpec]) -> usize {
    spec.iter()
        .filter_map(|l| l.param_shapes())
        .map(|(w, b)| w.iter().product::<usize>() + b)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    blocks: Vec<Option<ParamBlock>>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. Fan counts for the conv kernel
    /// include the 3x3 receptive field.
    pub fn init(spec: &[LayerSpec], rng: &mut SeedStream) -> Self {
        let blocks = spec
            .iter()
            .map(|layer| {
                layer.param_shapes().map(|(wshape, blen)| {
                    let (fan_in, fan_out) = match *layer {
                        LayerSpec::Dense { input, output } => (input, output),
                        LayerSpec::Conv3x3 {
                            in_channels,
                            out_channels,
                        } => (in_channels * 9, out_channels * 9),
                        _ => unreachable!(),
                    };
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let n: usize = wshape.iter().product();
                    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                    ParamBlock {
                        weights: Tensor::new(wshape, data).expect("shape matches count"),
                        bias: vec![0.0; blen],
                    }
                })
            })
            .collect();
        ModelParams { blocks }
    }

    pub fn zeros_like(spec: &[LayerSpec]) -> Self {
        let blocks = spec
            .iter()
            .map(|layer| {
                layer.param_shapes().map(|(wshape, blen)| ParamBlock {
                    weights: Tensor::zeros(wshape),
                    bias: vec![0.0; blen],
                })
            })
            .collect();
        ModelParams { blocks }
    }

    pub fn blocks(&self) -> &[Option<ParamBlock>] {
        &self.blocks
    }

    pub fn structure_matches(&self, other: &ModelParams) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(x), Some(y)) => {
                    x.weights.shape() == y.weights.shape() && x.bias.len() == y.bias.len()
                }
                _ => false,
            })
    }

    fn matches_spec(&self, spec: &[LayerSpec]) -> bool {
        self.blocks.len() == spec.len()
            && self
                .blocks
                .iter()
                .zip(spec)
                .all(|(block, layer)| match (block, layer.param_shapes()) {
                    (None, None) => true,
                    (Some(b), Some((wshape, blen))) => {
                        b.weights.shape() == wshape.as_slice() && b.bias.len() == blen
                    }
                    _ => false,
                })
    }

    /// Copies every parameter into one vector: per layer, weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for block in self.blocks.iter().flatten() {
            out.extend_from_slice(block.weights.data());
            out.extend_from_slice(&block.bias);
        }
        out
    }

    /// Inverse of `flatten`, taking shapes from an existing model instead
    /// of a spec.
    pub fn from_flat_like(template: &ModelParams, flat: &[f64]) -> Result<Self> {
        let need: usize = template
            .blocks
            .iter()
            .flatten()
            .map(|b| b.weights.len() + b.bias.len())
            .sum();
        if flat.len() != need {
            return Err(Error::Dimension(format!(
                "flat vector has {} values, template needs {need}",
                flat.len()
            )));
        }
        let mut pos = 0;
        let blocks = template
            .blocks
            .iter()
            .map(|slot| {
                slot.as_ref().map(|b| {
                    let wlen = b.weights.len();
                    let weights = Tensor::new(b.weights.shape().to_vec(), flat[pos..pos + wlen].to_vec())
                        .expect("sized above");
                    pos += wlen;
                    let bias = flat[pos..pos + b.bias.len()].to_vec();
                    pos += b.bias.len();
                    ParamBlock { weights, bias }
                })
            })
            .collect();
        Ok(ModelParams { blocks })
    }

    /// Inverse of `flatten` for the given spec. Round trips are bit exact.
    pub fn from_flat(spec: &[LayerSpec], flat: &[f64]) -> Result<Self> {
        if flat.len() != param_count(spec) {
            return Err(Error::Dimension(format!(
                "flat vector has {} values, spec needs {}",
                flat.len(),
                param_count(spec)
            )));
        }
        let mut pos = 0;
        let blocks = spec
            .iter()
            .map(|layer| {
                layer.param_shapes().map(|(wshape, blen)| {
                    let wlen: usize = wshape.iter().product();
                    let weights =
                        Tensor::new(wshape, flat[pos..pos + wlen].to_vec()).expect("sized above");
                    pos += wlen;
                    let bias = flat[pos..pos + blen].to_vec();
                    pos += blen;
                    ParamBlock { weights, bias }
                })
            })
            .collect();
        Ok(ModelParams { blocks })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Requires a final `Softmax` layer; targets are per-class weights
    /// (usually one-hot rows).
    CrossEntropy,
    /// Squared error `1/(2k) * sum ||y - t||^2`. Passing the input batch as
    /// the target turns this into a reconstruction loss.
    SquaredError,
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Coefficient of the `lambda/2 * sum(W^2)` penalty. Applies to weight
    /// matrices and kernels only, never biases.
    pub reg_lambda: f64,
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        LossConfig {
            kind: LossKind::CrossEntropy,
            reg_lambda: 0.0,
        }
    }

    pub fn squared_error() -> Self {
        LossConfig {
            kind: LossKind::SquaredError,
            reg_lambda: 0.0,
        }
    }
}

/// Per-layer record of a forward pass: activations and random-pool masks.
struct Trace {
    /// `acts[0]` is the batch; `acts[i + 1]` is the output of layer `i`.
    acts: Vec<Tensor>,
    /// Keep-masks for random-pool layers, indexed by layer.
    masks: Vec<Option<Vec<bool>>>,
}

fn run_forward(
    params: &ModelParams,
    spec: &[LayerSpec],
    batch: &Tensor,
    rng: &mut SeedStream,
) -> Result<Trace> {
    if !params.matches_spec(spec) {
        return Err(Error::Dimension(
            "parameters do not match the layer spec".into(),
        ));
    }
    if batch.rows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut acts = Vec::with_capacity(spec.len() + 1);
    let mut masks = vec![None; spec.len()];
    acts.push(batch.clone());
    for (li, layer) in spec.iter().enumerate() {
        let x = &acts[li];
        let y = match *layer {
            LayerSpec::Dense { input, output } => {
                if x.row_len() != input {
                    return Err(Error::Dimension(format!(
                        "layer {li}: dense expects {input} inputs, got {}",
                        x.row_len()
                    )));
                }
                let block = params.blocks[li].as_ref().expect("dense has params");
                dense_forward(x, &block.weights, &block.bias, output)
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let block = params.blocks[li].as_ref().expect("conv has params");
                conv_forward(x, &block.weights, &block.bias, in_channels, out_channels)
                    .map_err(|e| at_layer(li, e))?
            }
            LayerSpec::Relu => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                y
            }
            LayerSpec::Softmax => softmax_rows(x),
            LayerSpec::RandomPool { keep } => {
                let (y, mask) = random_pool_masked(x, keep, rng);
                masks[li] = Some(mask);
                y
            }
        };
        acts.push(y);
    }
    Ok(Trace { acts, masks })
}

/// Runs the network on a batch. The rng only feeds random-pool layers;
/// specs without one ignore it entirely.
pub fn forward(
    params: &ModelParams,
    spec: &[LayerSpec],
    batch: &Tensor,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    let trace = run_forward(params, spec, batch, rng)?;
    Ok(trace.acts.into_iter().next_back().expect("nonempty"))
}

fn at_layer(li: usize, e: Error) -> Error {
    match e {
        Error::Dimension(d) => Error::Dimension(format!("layer {li}: {d}")),
        other => other,
    }
}

fn dense_forward(x: &Tensor, w: &Tensor, bias: &[f64], output: usize) -> Tensor {
    let k = x.rows();
    let input = x.row_len();
    let wd = w.data();
    let mut y = Tensor::zeros(vec![k, output]);
    for r in 0..k {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        yr.copy_from_slice(bias);
        for (i, &xi) in xr.iter().enumerate().take(input) {
            if xi == 0.0 {
                continue;
            }
            let wrow = &wd[i * output..(i + 1) * output];
            for (yv, &wv) in yr.iter_mut().zip(wrow) {
                *yv += xi * wv;
            }
        }
    }
    y
}

fn conv_forward(
    x: &Tensor,
    w: &Tensor,
    bias: &[f64],
    in_channels: usize,
    out_channels: usize,
) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 4 || shape[1] != in_channels {
        return Err(Error::Dimension(format!(
            "conv expects [k, {in_channels}, h, w], got {shape:?}"
        )));
    }
    let (k, h, wid) = (shape[0], shape[2], shape[3]);
    if h < 3 || wid < 3 {
        return Err(Error::Dimension(format!(
            "conv needs at least 3x3 input, got {h}x{wid}"
        )));
    }
    let (oh, ow) = (h - 2, wid - 2);
    let mut y = Tensor::zeros(vec![k, out_channels, oh, ow]);
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for s in 0..k {
        for oc in 0..out_channels {
            let ybase = ((s * out_channels) + oc) * oh * ow;
            yd[ybase..ybase + oh * ow].fill(bias[oc]);
            for ic in 0..in_channels {
                let xbase = ((s * in_channels) + ic) * h * wid;
                let kbase = ((oc * in_channels) + ic) * 9;
                for a in 0..3 {
                    for b in 0..3 {
                        let kv = wd[kbase + a * 3 + b];
                        if kv == 0.0 {
                            continue;
                        }
                        for i in 0..oh {
                            let xrow = xbase + (i + a) * wid + b;
                            let yrow = ybase + i * ow;
                            for j in 0..ow {
                                yd[yrow + j] += kv * xd[xrow + j];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Row-wise softmax with max subtraction; every output row sums to 1.
fn softmax_rows(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    let k = y.rows();
    for r in 0..k {
        let row = y.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

fn random_pool_masked(x: &Tensor, keep: usize, rng: &mut SeedStream) -> (Tensor, Vec<bool>) {
    let k = x.rows();
    let d = x.row_len();
    if keep >= d {
        return (x.clone(), vec![true; k * d]);
    }
    let mut y = Tensor::zeros(x.shape().to_vec());
    let mut mask = vec![false; k * d];
    let mut idx: Vec<usize> = Vec::with_capacity(d);
    for r in 0..k {
        // Partial Fisher-Yates: the first `keep` slots end up a uniform
        // subset of 0..d.
        idx.clear();
        idx.extend(0..d);
        for i in 0..keep {
            let j = rng.random_range(i..d);
            idx.swap(i, j);
        }
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for &c in &idx[..keep] {
            yr[c] = xr[c];
            mask[r * d + c] = true;
        }
    }
    (y, mask)
}

/// Standalone random pooling, exposed for inspection and tests.
pub fn random_pool(x: &Tensor, keep: usize, rng: &mut SeedStream) -> Tensor {
    random_pool_masked(x, keep, rng).0
}

fn l2_penalty(params: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sum: f64 = params
        .blocks
        .iter()
        .flatten()
        .map(|b| b.weights.iter().map(|w| w * w).sum::<f64>())
        .sum();
    0.5 * lambda * sum
}

/// Loss and analytic gradients for one batch.
///
/// Cross entropy pairs with the mandatory final softmax through the fused
/// `(p - t) / k` gradient and a log-sum-exp loss, so extreme logits cannot
/// produce infinities. Gradients of the regularizer are added in place.
pub fn loss_and_grad(
    params: &ModelParams,
    spec: &[LayerSpec],
    batch: &Tensor,
    targets: &Tensor,
    cfg: &LossConfig,
    rng: &mut SeedStream,
) -> Result<(f64, ModelParams)> {
    let fused_ce = match cfg.kind {
        LossKind::CrossEntropy => {
            if !matches!(spec.last(), Some(LayerSpec::Softmax)) {
                return Err(Error::Argument(
                    "cross entropy requires a final softmax layer".into(),
                ));
            }
            true
        }
        LossKind::SquaredError => false,
    };
    let trace = run_forward(params, spec, batch, rng)?;
    let k = batch.rows() as f64;
    let out = trace.acts.last().expect("nonempty");
    if targets.shape() != out.shape() {
        return Err(Error::Dimension(format!(
            "targets shaped {:?}, output shaped {:?}",
            targets.shape(),
            out.shape()
        )));
    }

    let mut grads = ModelParams::zeros_like(spec);
    let mut loss;
    // dy holds the gradient flowing into the layer currently being
    // processed; start_layer is the first layer index handled by the
    // generic backward loop below.
    let mut dy;
    let start_layer;
    match cfg.kind {
        LossKind::CrossEntropy => {
            let logits = &trace.acts[spec.len() - 1];
            loss = 0.0;
            for r in 0..logits.rows() {
                let row = logits.row(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                for (j, &t) in targets.row(r).iter().enumerate() {
                    if t != 0.0 {
                        loss -= t * (row[j] - lse);
                    }
                }
            }
            loss /= k;
            let p = trace.acts.last().expect("nonempty");
            let mut d = Tensor::zeros(p.shape().to_vec());
            for ((dv, pv), tv) in d.data_mut().iter_mut().zip(p.iter()).zip(targets.iter()) {
                *dv = (pv - tv) / k;
            }
            dy = d;
            start_layer = spec.len() - 1;
        }
        LossKind::SquaredError => {
            loss = 0.0;
            let mut d = Tensor::zeros(out.shape().to_vec());
            for ((dv, yv), tv) in d.data_mut().iter_mut().zip(out.iter()).zip(targets.iter()) {
                let diff = yv - tv;
                loss += diff * diff;
                *dv = diff / k;
            }
            loss /= 2.0 * k;
            dy = d;
            start_layer = spec.len();
        }
    }
    loss += l2_penalty(params, cfg.reg_lambda);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }

    for li in (0..start_layer).rev() {
        let x = &trace.acts[li];
        let need_dx = li > 0;
        dy = match spec[li] {
            LayerSpec::Dense { input, output } => {
                let block = params.blocks[li].as_ref().expect("dense has params");
                let gblock = grads.blocks[li].as_mut().expect("same structure");
                dense_backward(x, &dy, block, gblock, input, output, need_dx)
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let block = params.blocks[li].as_ref().expect("conv has params");
                let gblock = grads.blocks[li].as_mut().expect("same structure");
                conv_backward(x, &dy, block, gblock, in_channels, out_channels, need_dx)
            }
            LayerSpec::Relu => {
                let mut dx = dy;
                for (dv, &xv) in dx.data_mut().iter_mut().zip(x.iter()) {
                    if xv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                dx
            }
            LayerSpec::Softmax => {
                // Only reached on the squared-error path; cross entropy
                // starts backprop below the softmax.
                debug_assert!(!fused_ce || li < spec.len() - 1);
                let p = &trace.acts[li + 1];
                let mut dx = Tensor::zeros(p.shape().to_vec());
                for r in 0..p.rows() {
                    let pr = p.row(r);
                    let dr = dy.row(r);
                    let dot: f64 = pr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for (o, (&pv, &dv)) in dx.row_mut(r).iter_mut().zip(pr.iter().zip(dr)) {
                        *o = pv * (dv - dot);
                    }
                }
                dx
            }
            LayerSpec::RandomPool { .. } => {
                let mut dx = dy;
                if let Some(mask) = &trace.masks[li] {
                    for (dv, &keep) in dx.data_mut().iter_mut().zip(mask) {
                        if !keep {
                            *dv = 0.0;
                        }
                    }
                }
                dx
            }
        };
    }

    if cfg.reg_lambda != 0.0 {
        for (gb, pb) in grads.blocks.iter_mut().zip(&params.blocks) {
            if let (Some(g), Some(p)) = (gb, pb) {
                for (gv, pv) in g.weights.data_mut().iter_mut().zip(p.weights.iter()) {
                    *gv += cfg.reg_lambda * pv;
                }
            }
        }
    }
    Ok((loss, grads))
}

fn dense_backward(
    x: &Tensor,
    dy: &Tensor,
    block: &ParamBlock,
    gblock: &mut ParamBlock,
    input: usize,
    output: usize,
    need_dx: bool,
) -> Tensor {
    let k = x.rows();
    let gw = gblock.weights.data_mut();
    for r in 0..k {
        let xr = x.row(r);
        let dr = dy.row(r);
        for (gb, &dv) in gblock.bias.iter_mut().zip(dr) {
            *gb += dv;
        }
        for (i, &xi) in xr.iter().enumerate().take(input) {
            if xi == 0.0 {
                continue;
            }
            let grow = &mut gw[i * output..(i + 1) * output];
            for (gv, &dv) in grow.iter_mut().zip(dr) {
                *gv += xi * dv;
            }
        }
    }
    if !need_dx {
        return Tensor::zeros(vec![0]);
    }
    let wd = block.weights.data();
    let mut dx = Tensor::zeros(x.shape().to_vec());
    for r in 0..k {
        let dr = dy.row(r);
        let dxr = dx.row_mut(r);
        for (i, dxv) in dxr.iter_mut().enumerate().take(input) {
            let wrow = &wd[i * output..(i + 1) * output];
            *dxv = wrow.iter().zip(dr).map(|(a, b)| a * b).sum();
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    dy: &Tensor,
    block: &ParamBlock,
    gblock: &mut ParamBlock,
    in_channels: usize,
    out_channels: usize,
    need_dx: bool,
) -> Tensor {
    let shape = x.shape();
    let (k, h, wid) = (shape[0], shape[2], shape[3]);
    let (oh, ow) = (h - 2, wid - 2);
    let xd = x.data();
    let dyd = dy.data();
    let gw = gblock.weights.data_mut();
    for s in 0..k {
        for oc in 0..out_channels {
            let dybase = ((s * out_channels) + oc) * oh * ow;
            let mut bsum = 0.0;
            for v in &dyd[dybase..dybase + oh * ow] {
                bsum += v;
            }
            gblock.bias[oc] += bsum;
            for ic in 0..in_channels {
                let xbase = ((s * in_channels) + ic) * h * wid;
                let kbase = ((oc * in_channels) + ic) * 9;
                for a in 0..3 {
                    for b in 0..3 {
                        let mut acc = 0.0;
                        for i in 0..oh {
                            let xrow = xbase + (i + a) * wid + b;
                            let dyrow = dybase + i * ow;
                            for j in 0..ow {
                                acc += xd[xrow + j] * dyd[dyrow + j];
                            }
                        }
                        gw[kbase + a * 3 + b] += acc;
                    }
                }
            }
        }
    }
    if !need_dx {
        return Tensor::zeros(vec![0]);
    }
    let wd = block.weights.data();
    let mut dx = Tensor::zeros(x.shape().to_vec());
    let dxd = dx.data_mut();
    for s in 0..k {
        for oc in 0..out_channels {
            let dybase = ((s * out_channels) + oc) * oh * ow;
            for ic in 0..in_channels {
                let xbase = ((s * in_channels) + ic) * h * wid;
                let kbase = ((oc * in_channels) + ic) * 9;
                for a in 0..3 {
                    for b in 0..3 {
                        let kv = wd[kbase + a * 3 + b];
                        if kv == 0.0 {
                            continue;
                        }
                        for i in 0..oh {
                            let dxrow = xbase + (i + a) * wid + b;
                            let dyrow = dybase + i * ow;
                            for j in 0..ow {
                                dxd[dxrow + j] += kv * dyd[dyrow + j];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// One vanilla SGD update: `p - lr * g` for every parameter.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> Result<ModelParams> {
    if !params.structure_matches(grads) {
        return Err(Error::Dimension(
            "gradient structure does not match parameters".into(),
        ));
    }
    let blocks = params
        .blocks
        .iter()
        .zip(&grads.blocks)
        .map(|(p, g)| match (p, g) {
            (Some(pb), Some(gb)) => {
                let wdata: Vec<f64> = pb
                    .weights
                    .iter()
                    .zip(gb.weights.iter())
                    .map(|(pv, gv)| pv - lr * gv)
                    .collect();
                let bias = pb
                    .bias
                    .iter()
                    .zip(&gb.bias)
                    .map(|(pv, gv)| pv - lr * gv)
                    .collect();
                Some(ParamBlock {
                    weights: Tensor::new(pb.weights.shape().to_vec(), wdata)
                        .expect("same shape"),
                    bias,
                })
            }
            _ => None,
        })
        .collect();
    Ok(ModelParams { blocks })
}

/// Central-difference gradient of the full loss, for checking the analytic
/// path. The rng stream is rebuilt from `seed` for every evaluation so any
/// random-pool masks are identical across perturbations.
pub fn numeric_gradient(
    params: &ModelParams,
    spec: &[LayerSpec],
    batch: &Tensor,
    targets: &Tensor,
    cfg: &LossConfig,
    seed: u64,
    step: f64,
) -> Result<Vec<f64>> {
    let flat = params.flatten();
    let mut grad = vec![0.0; flat.len()];
    let mut work = flat.clone();
    for i in 0..flat.len() {
        work[i] = flat[i] + step;
        let plus = loss_at(&work, spec, batch, targets, cfg, seed)?;
        work[i] = flat[i] - step;
        let minus = loss_at(&work, spec, batch, targets, cfg, seed)?;
        work[i] = flat[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

fn loss_at(
    flat: &[f64],
    spec: &[LayerSpec],
    batch: &Tensor,
    targets: &Tensor,
    cfg: &LossConfig,
    seed: u64,
) -> Result<f64> {
    let p = ModelParams::from_flat(spec, flat)?;
    let mut rng = crate::seeding::stream(&[seed]);
    Ok(loss_and_grad(&p, spec, batch, targets, cfg, &mut rng)?.0)
}

/// Dense classifier: `dims` lists layer widths from input to output, with
/// relu between hidden layers and a final softmax.
pub fn dense_net(dims: &[usize]) -> Vec<LayerSpec> {
    assert!(dims.len() >= 2, "need at least input and output widths");
    let mut spec = Vec::new();
    for w in dims.windows(2) {
        spec.push(LayerSpec::Dense {
            input: w[0],
            output: w[1],
        });
        spec.push(LayerSpec::Relu);
    }
    spec.pop();
    spec.push(LayerSpec::Softmax);
    spec
}

/// Convolutional classifier: four 3x3 stages tapering 24, 18, 12, 6
/// channels, a random 5-feature bottleneck, then a 7-wide dense head.
/// The final dense layer is widened to `num_classes`.
pub fn conv_stack(input_hw: (usize, usize), in_channels: usize, num_classes: usize) -> Vec<LayerSpec> {
    let (h, w) = (input_hw.0 - 8, input_hw.1 - 8);
    vec![
        LayerSpec::Conv3x3 {
            in_channels,
            out_channels: 24,
        },
        LayerSpec::Relu,
        LayerSpec::Conv3x3 {
            in_channels: 24,
            out_channels: 18,
        },
        LayerSpec::Relu,
        LayerSpec::Conv3x3 {
            in_channels: 18,
            out_channels: 12,
        },
        LayerSpec::Relu,
        LayerSpec::Conv3x3 {
            in_channels: 12,
            out_channels: 6,
        },
        LayerSpec::Relu,
        LayerSpec::RandomPool { keep: 5 },
        LayerSpec::Dense {
            input: 6 * h * w,
            output: 7,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            input: 7,
            output: num_classes,
        },
        LayerSpec::Softmax,
    ]
}

/// Same trunk as `conv_stack` but with the fixed 7-then-8 dense head kept
/// as a documented default, independent of the task's class count.
pub fn conv_stack_fixed_head(input_hw: (usize, usize), in_channels: usize) -> Vec<LayerSpec> {
    conv_stack(input_hw, in_channels, 8)
}
