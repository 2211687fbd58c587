use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use crate::error::{Error, Result};

const EMBED_INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFn {
    Relu,
    Identity,
}

/// Layer 1: wide linear projection of numeric features plus two embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `[num_numeric × wide_out_dim]`
    pub wide_weights: Array2<f64>,
    pub wide_bias: Array1<f64>,
    /// `[vocab1 × embed_dim1]`
    pub embed_table1: Array2<f64>,
    /// `[vocab2 × embed_dim2]`
    pub embed_table2: Array2<f64>,
}

impl EncoderParams {
    pub fn output_width(&self) -> usize {
        self.wide_weights.ncols() + self.embed_table1.ncols() + self.embed_table2.ncols()
    }
}

/// Fully connected layer, `out = act(x · weights + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[in_width × out_width]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: ActivationFn,
}

/// A contiguous run of layers of the split network.
///
/// A full network holds layers `1..=n`; a client copy holds `1..=s` and the
/// server holds `s+1..=n`. The same type is reused for gradients, where every
/// entry is the derivative of the loss with respect to the matching parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitModelParams {
    first_layer: usize,
    encoder: Option<EncoderParams>,
    dense: Vec<DenseLayer>,
}

/// Intermediate (or final) output of a layer range.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub values: Array2<f64>,
    /// Layer whose output this is (1-based).
    pub produced_after_layer: usize,
}

impl Activation {
    pub fn new(values: Array2<f64>, produced_after_layer: usize) -> Self {
        Self {
            values,
            produced_after_layer,
        }
    }

    pub fn batch(&self) -> usize {
        self.values.nrows()
    }

    /// Wire encoding used for smashed data: row-major little-endian f64.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Raw input rows: numeric features plus the two categorical indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBatch {
    pub numeric: Array2<f64>,
    pub cat1: Vec<usize>,
    pub cat2: Vec<usize>,
}

impl RawBatch {
    pub fn len(&self) -> usize {
        self.numeric.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter gradients for a layer range plus the gradient flowing out of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub params: SplitModelParams,
    /// `None` when the range starts at the encoder (raw inputs get no gradient).
    pub input_gradient: Option<Array2<f64>>,
}

impl GradientBundle {
    pub fn flatten(&self) -> Vec<f64> {
        self.params.flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
            && self
                .input_gradient
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.random_range(-bound..=bound);
    }
    m
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Seeded Glorot-uniform initialization of the whole network; biases start at zero.
pub fn init_params(arch: &ArchSpec, seed: u64) -> Result<SplitModelParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let encoder = EncoderParams {
        wide_weights: uniform_matrix(
            &mut rng,
            arch.num_numeric_features,
            arch.wide_out_dim,
            glorot_bound(arch.num_numeric_features, arch.wide_out_dim),
        ),
        wide_bias: Array1::zeros(arch.wide_out_dim),
        embed_table1: uniform_matrix(&mut rng, arch.vocab1, arch.embed_dim1, EMBED_INIT_BOUND),
        embed_table2: uniform_matrix(&mut rng, arch.vocab2, arch.embed_dim2, EMBED_INIT_BOUND),
    };

    let widths = arch.dense_widths();
    let mut dense = Vec::with_capacity(widths.len());
    let mut fan_in = arch.encoder_width();
    for (i, &fan_out) in widths.iter().enumerate() {
        let is_output = i + 1 == widths.len();
        dense.push(DenseLayer {
            weights: uniform_matrix(&mut rng, fan_in, fan_out, glorot_bound(fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
            activation: if is_output {
                ActivationFn::Identity
            } else {
                ActivationFn::Relu
            },
        });
        fan_in = fan_out;
    }

    Ok(SplitModelParams {
        first_layer: 1,
        encoder: Some(encoder),
        dense,
    })
}

impl SplitModelParams {
    /// Builds a parameter range from parts, checking that adjacent widths agree.
    pub fn from_parts(
        first_layer: usize,
        encoder: Option<EncoderParams>,
        dense: Vec<DenseLayer>,
    ) -> Result<Self> {
        if first_layer == 0 {
            return Err(Error::contract("layers are numbered from 1"));
        }
        if encoder.is_some() != (first_layer == 1) {
            return Err(Error::contract(
                "encoder must be present exactly when the range starts at layer 1",
            ));
        }
        if encoder.is_none() && dense.is_empty() {
            return Err(Error::contract("parameter range must hold at least one layer"));
        }
        let mut width = encoder.as_ref().map(EncoderParams::output_width);
        if let Some(enc) = &encoder {
            if enc.wide_bias.len() != enc.wide_weights.ncols() {
                return Err(Error::dim("encoder wide bias does not match wide weights"));
            }
        }
        for (i, layer) in dense.iter().enumerate() {
            if layer.bias.len() != layer.weights.ncols() {
                return Err(Error::dim(format!("dense layer {i}: bias/weights mismatch")));
            }
            if let Some(w) = width {
                if layer.weights.nrows() != w {
                    return Err(Error::dim(format!(
                        "dense layer {i}: input width {} but previous output is {w}",
                        layer.weights.nrows()
                    )));
                }
            }
            width = Some(layer.weights.ncols());
        }
        Ok(Self {
            first_layer,
            encoder,
            dense,
        })
    }

    pub fn first_layer(&self) -> usize {
        self.first_layer
    }

    pub fn last_layer(&self) -> usize {
        if self.encoder.is_some() {
            self.dense.len() + 1
        } else {
            self.first_layer + self.dense.len() - 1
        }
    }

    pub fn layers(&self) -> RangeInclusive<usize> {
        self.first_layer..=self.last_layer()
    }

    pub fn holds(&self, from: usize, to: usize) -> bool {
        from <= to && from >= self.first_layer && to <= self.last_layer()
    }

    pub fn encoder(&self) -> Option<&EncoderParams> {
        self.encoder.as_ref()
    }

    pub fn encoder_mut(&mut self) -> Option<&mut EncoderParams> {
        self.encoder.as_mut()
    }

    fn dense_offset(&self) -> usize {
        self.first_layer.max(2)
    }

    /// Dense layer by global (1-based) index; `layer` must be ≥ 2 and held here.
    pub fn dense_layer(&self, layer: usize) -> Result<&DenseLayer> {
        let off = self.dense_offset();
        if layer < off || layer > self.last_layer() {
            return Err(Error::contract(format!(
                "dense layer {layer} not held by range {:?}",
                self.layers()
            )));
        }
        Ok(&self.dense[layer - off])
    }

    pub fn dense_layer_mut(&mut self, layer: usize) -> Result<&mut DenseLayer> {
        let off = self.dense_offset();
        if layer < off || layer > self.last_layer() {
            return Err(Error::contract(format!("dense layer {layer} not held here")));
        }
        Ok(&mut self.dense[layer - off])
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    /// Output width of the last held layer.
    pub fn output_width(&self) -> usize {
        match self.dense.last() {
            Some(l) => l.weights.ncols(),
            None => self.encoder.as_ref().map_or(0, EncoderParams::output_width),
        }
    }

    /// Copy of layers `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if !self.holds(from, to) {
            return Err(Error::contract(format!(
                "range {from}..={to} not held by {:?}",
                self.layers()
            )));
        }
        let encoder = if from == 1 { self.encoder.clone() } else { None };
        let off = self.dense_offset();
        let lo = from.max(2);
        let dense = if to >= lo {
            self.dense[lo - off..=to - off].to_vec()
        } else {
            Vec::new()
        };
        Self::from_parts(from, encoder, dense)
    }

    /// Splits into the client part `first..=split` and server part `split+1..=last`.
    pub fn split_at(&self, split: usize) -> Result<(Self, Self)> {
        if split < self.first_layer || split >= self.last_layer() {
            return Err(Error::contract(format!("cannot split {:?} after {split}", self.layers())));
        }
        Ok((
            self.slice(self.first_layer, split)?,
            self.slice(split + 1, self.last_layer())?,
        ))
    }

    /// Replaces layers `from..=to` with the layers held by `part`.
    pub fn overwrite(&mut self, part: &SplitModelParams) -> Result<()> {
        if !self.holds(part.first_layer, part.last_layer()) {
            return Err(Error::contract("overwrite range not held"));
        }
        if let Some(enc) = &part.encoder {
            self.encoder = Some(enc.clone());
        }
        let off = self.dense_offset();
        let poff = part.dense_offset();
        for (i, layer) in part.dense.iter().enumerate() {
            let target = &mut self.dense[poff + i - off];
            if target.weights.dim() != layer.weights.dim() {
                return Err(Error::dim("overwrite layer shape mismatch"));
            }
            *target = layer.clone();
        }
        Ok(())
    }

    /// Same structure, all values zero.
    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let encoder = self.encoder.as_ref().map(|e| EncoderParams {
            wide_weights: e.wide_weights.mapv(&f),
            wide_bias: e.wide_bias.mapv(&f),
            embed_table1: e.embed_table1.mapv(&f),
            embed_table2: e.embed_table2.mapv(&f),
        });
        let dense = self
            .dense
            .iter()
            .map(|l| DenseLayer {
                weights: l.weights.mapv(&f),
                bias: l.bias.mapv(&f),
                activation: l.activation,
            })
            .collect();
        Self {
            first_layer: self.first_layer,
            encoder,
            dense,
        }
    }

    pub fn congruent(&self, other: &Self) -> bool {
        if self.first_layer != other.first_layer || self.dense.len() != other.dense.len() {
            return false;
        }
        let enc_ok = match (&self.encoder, &other.encoder) {
            (Some(a), Some(b)) => {
                a.wide_weights.dim() == b.wide_weights.dim()
                    && a.wide_bias.dim() == b.wide_bias.dim()
                    && a.embed_table1.dim() == b.embed_table1.dim()
                    && a.embed_table2.dim() == b.embed_table2.dim()
            }
            (None, None) => true,
            _ => false,
        };
        enc_ok
            && self
                .dense
                .iter()
                .zip(&other.dense)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.bias.dim() == b.bias.dim())
    }

    /// Elementwise combination of two congruent parameter sets.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.congruent(other) {
            return Err(Error::contract("parameter sets are not shape-congruent"));
        }
        let zip1 = |a: &Array1<f64>, b: &Array1<f64>| {
            let mut out = a.clone();
            out.zip_mut_with(b, |x, &y| *x = f(*x, y));
            out
        };
        let zip2 = |a: &Array2<f64>, b: &Array2<f64>| {
            let mut out = a.clone();
            out.zip_mut_with(b, |x, &y| *x = f(*x, y));
            out
        };
        let encoder = match (&self.encoder, &other.encoder) {
            (Some(a), Some(b)) => Some(EncoderParams {
                wide_weights: zip2(&a.wide_weights, &b.wide_weights),
                wide_bias: zip1(&a.wide_bias, &b.wide_bias),
                embed_table1: zip2(&a.embed_table1, &b.embed_table1),
                embed_table2: zip2(&a.embed_table2, &b.embed_table2),
            }),
            _ => None,
        };
        let dense = self
            .dense
            .iter()
            .zip(&other.dense)
            .map(|(a, b)| DenseLayer {
                weights: zip2(&a.weights, &b.weights),
                bias: zip1(&a.bias, &b.bias),
                activation: a.activation,
            })
            .collect();
        Ok(Self {
            first_layer: self.first_layer,
            encoder,
            dense,
        })
    }

    /// Every value in a fixed order: encoder (wide W, wide b, table1, table2), then dense W, b per layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        if let Some(e) = &self.encoder {
            out.extend(e.wide_weights.iter());
            out.extend(e.wide_bias.iter());
            out.extend(e.embed_table1.iter());
            out.extend(e.embed_table2.iter());
        }
        for l in &self.dense {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) for a set with this structure.
    pub fn with_flat(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.num_params() {
            return Err(Error::dim(format!(
                "expected {} values, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut out = self.clone();
        let mut it = values.iter();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = *it.next().expect("length checked");
            }
        };
        if let Some(e) = &mut out.encoder {
            fill(&mut e.wide_weights.iter_mut());
            fill(&mut e.wide_bias.iter_mut());
            fill(&mut e.embed_table1.iter_mut());
            fill(&mut e.embed_table2.iter_mut());
        }
        for l in &mut out.dense {
            fill(&mut l.weights.iter_mut());
            fill(&mut l.bias.iter_mut());
        }
        Ok(out)
    }

    pub fn num_params(&self) -> usize {
        let enc = self.encoder.as_ref().map_or(0, |e| {
            e.wide_weights.len() + e.wide_bias.len() + e.embed_table1.len() + e.embed_table2.len()
        });
        enc + self
            .dense
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    /// Raw little-endian size of the parameters in `from..=to`, used to cost weight shipping.
    pub fn range_bytes(&self, from: usize, to: usize, bytes_per_element: usize) -> Result<usize> {
        Ok(self.slice(from, to)?.num_params() * bytes_per_element)
    }
}
