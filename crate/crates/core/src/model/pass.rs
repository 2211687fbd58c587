//! Range-restricted forward and backward passes.
//!
//! Any holder of a contiguous layer range can run it: a client runs
//! `1..=s`, a bottleneck user runs `1..=p`, its helper runs `p+1..=s`, and the
//! server runs `s+1..=n`. Chaining ranges gives the same numbers as running
//! the whole network in one call.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::params::{
    ActivationFn, Activation, DenseLayer, EncoderParams, GradientBundle, RawBatch,
    SplitModelParams,
};
use crate::error::{Error, Result};

/// What enters the first layer of a range.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Raw(&'a RawBatch),
    Hidden(&'a Activation),
}

/// Values recorded by a forward pass that the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    from: usize,
    to: usize,
    raw: Option<RawBatch>,
    /// Input to each dense layer of the range, in order.
    dense_inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each dense layer of the range.
    dense_pre: Vec<Array2<f64>>,
}

impl ForwardState {
    pub fn range(&self) -> (usize, usize) {
        (self.from, self.to)
    }
}

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

fn encode(enc: &EncoderParams, raw: &RawBatch) -> Result<Array2<f64>> {
    let batch = raw.numeric.nrows();
    if raw.numeric.ncols() != enc.wide_weights.nrows() {
        return Err(Error::dim(format!(
            "encoder expects {} numeric features, got {}",
            enc.wide_weights.nrows(),
            raw.numeric.ncols()
        )));
    }
    if raw.cat1.len() != batch || raw.cat2.len() != batch {
        return Err(Error::dim("categorical columns do not match batch size"));
    }
    let vocab1 = enc.embed_table1.nrows();
    let vocab2 = enc.embed_table2.nrows();
    if let Some(&bad) = raw.cat1.iter().find(|&&c| c >= vocab1) {
        return Err(Error::dim(format!("cat1 index {bad} >= vocab {vocab1}")));
    }
    if let Some(&bad) = raw.cat2.iter().find(|&&c| c >= vocab2) {
        return Err(Error::dim(format!("cat2 index {bad} >= vocab {vocab2}")));
    }
    check_finite(&raw.numeric, "raw numeric input")?;

    let wide = raw.numeric.dot(&enc.wide_weights) + &enc.wide_bias;
    let deep1 = enc.embed_table1.select(Axis(0), &raw.cat1);
    let deep2 = enc.embed_table2.select(Axis(0), &raw.cat2);
    concatenate(Axis(1), &[wide.view(), deep1.view(), deep2.view()])
        .map_err(|e| Error::dim(e.to_string()))
}

fn apply_activation(pre: &Array2<f64>, act: ActivationFn) -> Array2<f64> {
    match act {
        ActivationFn::Relu => pre.mapv(|v| v.max(0.0)),
        ActivationFn::Identity => pre.clone(),
    }
}

fn dense_forward(layer: &DenseLayer, x: &Array2<f64>, index: usize) -> Result<Array2<f64>> {
    if x.ncols() != layer.weights.nrows() {
        return Err(Error::dim(format!(
            "layer {index} expects width {}, got {}",
            layer.weights.nrows(),
            x.ncols()
        )));
    }
    Ok(x.dot(&layer.weights) + &layer.bias)
}

fn validate_range(params: &SplitModelParams, from: usize, to: usize) -> Result<()> {
    if from > to {
        return Err(Error::contract(format!("empty layer range {from}..={to}")));
    }
    if !params.holds(from, to) {
        return Err(Error::contract(format!(
            "range {from}..={to} not held by parameters {:?}",
            params.layers()
        )));
    }
    Ok(())
}

fn run_forward(
    params: &SplitModelParams,
    from: usize,
    to: usize,
    input: LayerInput<'_>,
    record: bool,
) -> Result<(Activation, Option<ForwardState>)> {
    validate_range(params, from, to)?;

    let mut raw_copy = None;
    let mut current = match (from, input) {
        (1, LayerInput::Raw(raw)) => {
            let enc = params
                .encoder()
                .ok_or_else(|| Error::contract("range starts at 1 but no encoder held"))?;
            if record {
                raw_copy = Some(raw.clone());
            }
            encode(enc, raw)?
        }
        (1, LayerInput::Hidden(_)) => {
            return Err(Error::contract("layer 1 needs a raw feature batch"));
        }
        (_, LayerInput::Raw(_)) => {
            return Err(Error::contract(format!("layer {from} needs an activation input")));
        }
        (_, LayerInput::Hidden(act)) => {
            if act.produced_after_layer + 1 != from {
                return Err(Error::contract(format!(
                    "activation produced after layer {} cannot feed layer {from}",
                    act.produced_after_layer
                )));
            }
            check_finite(&act.values, "input activation")?;
            act.values.clone()
        }
    };

    let mut dense_inputs = Vec::new();
    let mut dense_pre = Vec::new();
    for index in from.max(2)..=to {
        let layer = params.dense_layer(index)?;
        let pre = dense_forward(layer, &current, index)?;
        let out = apply_activation(&pre, layer.activation);
        if record {
            dense_inputs.push(std::mem::replace(&mut current, out));
            dense_pre.push(pre);
        } else {
            current = out;
        }
    }

    let state = record.then(|| ForwardState {
        from,
        to,
        raw: raw_copy,
        dense_inputs,
        dense_pre,
    });
    Ok((Activation::new(current, to), state))
}

/// Runs layers `from..=to` (1-based, inclusive). Pure: `params` is not touched.
pub fn forward_range(
    params: &SplitModelParams,
    from: usize,
    to: usize,
    input: LayerInput<'_>,
) -> Result<Activation> {
    run_forward(params, from, to, input, false).map(|(a, _)| a)
}

/// Like [`forward_range`] but also returns the state needed by [`backward_range`].
pub fn forward_range_cached(
    params: &SplitModelParams,
    from: usize,
    to: usize,
    input: LayerInput<'_>,
) -> Result<(Activation, ForwardState)> {
    run_forward(params, from, to, input, true).map(|(a, s)| (a, s.expect("recorded")))
}

/// Backpropagates `upstream` (dLoss/dOutput of layer `to`) through `from..=to`.
pub fn backward_range(
    params: &SplitModelParams,
    from: usize,
    to: usize,
    state: &ForwardState,
    upstream: &Array2<f64>,
) -> Result<GradientBundle> {
    validate_range(params, from, to)?;
    if state.from != from || state.to != to {
        return Err(Error::contract(format!(
            "forward state covers {}..={}, backward asked for {from}..={to}",
            state.from, state.to
        )));
    }
    let dense_count = to + 1 - from.max(2);
    if state.dense_inputs.len() != dense_count {
        return Err(Error::contract("forward state does not match the layer range"));
    }
    check_finite(upstream, "upstream gradient")?;

    let mut grad = params.slice(from, to)?.zeros_like();
    let mut delta = upstream.clone();

    for (k, index) in (from.max(2)..to + 1).enumerate().rev() {
        let layer = params.dense_layer(index)?;
        let pre = &state.dense_pre[k];
        if delta.dim() != pre.dim() {
            return Err(Error::dim(format!(
                "gradient shape {:?} does not match layer {index} output {:?}",
                delta.dim(),
                pre.dim()
            )));
        }
        if layer.activation == ActivationFn::Relu {
            delta.zip_mut_with(pre, |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let x = &state.dense_inputs[k];
        let g = grad.dense_layer_mut(index)?;
        g.weights = x.t().dot(&delta);
        g.bias = delta.sum_axis(Axis(0));
        delta = delta.dot(&layer.weights.t());
    }

    let input_gradient = if from == 1 {
        let enc = params.encoder().expect("range validated");
        let raw = state
            .raw
            .as_ref()
            .ok_or_else(|| Error::contract("forward state lacks raw batch"))?;
        let wide_w = enc.wide_weights.ncols();
        let e1 = enc.embed_table1.ncols();
        if delta.ncols() != enc.output_width() || delta.nrows() != raw.len() {
            return Err(Error::dim("gradient does not match encoder output"));
        }
        let d_wide = delta.slice(s![.., ..wide_w]);
        let d_e1 = delta.slice(s![.., wide_w..wide_w + e1]);
        let d_e2 = delta.slice(s![.., wide_w + e1..]);
        let g = grad.encoder_mut().expect("slice keeps encoder");
        g.wide_weights = raw.numeric.t().dot(&d_wide);
        g.wide_bias = d_wide.sum_axis(Axis(0));
        for (row, &c) in raw.cat1.iter().enumerate() {
            let mut dst = g.embed_table1.row_mut(c);
            dst += &d_e1.row(row);
        }
        for (row, &c) in raw.cat2.iter().enumerate() {
            let mut dst = g.embed_table2.row_mut(c);
            dst += &d_e2.row(row);
        }
        None
    } else {
        Some(delta)
    };

    Ok(GradientBundle {
        params: grad,
        input_gradient,
    })
}

/// Mean squared error and its gradient `2(pred − target)/batch`.
pub fn mse_loss_and_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dim(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let batch = pred.nrows();
    if batch == 0 {
        return Err(Error::dim("empty batch"));
    }
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
    let grad = diff.mapv(|d| 2.0 * d / batch as f64);
    Ok((loss, grad))
}

/// Mean absolute error over all entries.
pub fn mae(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::dim(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::dim("empty prediction"));
    }
    let total: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Plain SGD: returns `p − lr·g` for every parameter covered by `grads`.
///
/// `grads` may cover a sub-range of `params` (e.g. a helper applying relay
/// gradients for layers `p+1..=s` to its full client copy).
pub fn sgd_step(
    params: &SplitModelParams,
    grads: &GradientBundle,
    lr: f64,
) -> Result<SplitModelParams> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::contract(format!("learning rate must be positive, got {lr}")));
    }
    let g = &grads.params;
    let part = params.slice(g.first_layer(), g.last_layer())?;
    let updated = part.zip_map(g, |p, d| p - lr * d)?;
    let mut out = params.clone();
    out.overwrite(&updated)?;
    Ok(out)
}

/// Column vector helper for scalar regression targets.
pub fn column(values: &[f64]) -> Array2<f64> {
    Array1::from(values.to_vec()).insert_axis(Axis(1))
}
