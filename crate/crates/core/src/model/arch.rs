use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the split Wide&Deep network.
///
/// Layers are numbered from 1. Layer 1 is the encoder (wide linear part plus
/// two embedding tables, concatenated). Layers `2..=1 + client_hidden.len()`
/// are the client dense stack, followed by the server dense stack and a final
/// identity output layer. `split_layer` is the last layer held by clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub num_numeric_features: usize,
    pub vocab1: usize,
    pub vocab2: usize,
    pub wide_out_dim: usize,
    pub embed_dim1: usize,
    pub embed_dim2: usize,
    pub client_hidden: Vec<usize>,
    pub server_hidden: Vec<usize>,
    pub output_dim: usize,
    pub split_layer: usize,
}

impl ArchSpec {
    /// Default arrangement: three client dense layers, split right after them.
    pub fn wide_and_deep(num_numeric_features: usize, vocab1: usize, vocab2: usize) -> Self {
        let client_hidden = vec![32, 32, 32];
        Self {
            num_numeric_features,
            vocab1,
            vocab2,
            wide_out_dim: 8,
            embed_dim1: 4,
            embed_dim2: 4,
            split_layer: 1 + client_hidden.len(),
            client_hidden,
            server_hidden: vec![16],
            output_dim: 1,
        }
    }

    pub fn total_layers(&self) -> usize {
        1 + self.client_hidden.len() + self.server_hidden.len() + 1
    }

    pub fn encoder_width(&self) -> usize {
        self.wide_out_dim + self.embed_dim1 + self.embed_dim2
    }

    /// Widths of every dense layer (layer 2 onwards), including the output layer.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.client_hidden
            .iter()
            .chain(self.server_hidden.iter())
            .copied()
            .chain(std::iter::once(self.output_dim))
            .collect()
    }

    /// Output width of `layer` (1-based).
    pub fn layer_width(&self, layer: usize) -> Result<usize> {
        self.check_layer(layer)?;
        if layer == 1 {
            Ok(self.encoder_width())
        } else {
            Ok(self.dense_widths()[layer - 2])
        }
    }

    /// Input width of a dense layer; for the encoder this is the numeric feature count.
    pub fn layer_input_width(&self, layer: usize) -> Result<usize> {
        self.check_layer(layer)?;
        match layer {
            1 => Ok(self.num_numeric_features),
            2 => Ok(self.encoder_width()),
            _ => self.layer_width(layer - 1),
        }
    }

    /// Number of trainable values in `layer`.
    pub fn layer_param_count(&self, layer: usize) -> Result<usize> {
        self.check_layer(layer)?;
        if layer == 1 {
            Ok(self.num_numeric_features * self.wide_out_dim
                + self.wide_out_dim
                + self.vocab1 * self.embed_dim1
                + self.vocab2 * self.embed_dim2)
        } else {
            let fan_out = self.layer_width(layer)?;
            Ok(self.layer_input_width(layer)? * fan_out + fan_out)
        }
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.total_layers() {
            return Err(Error::contract(format!(
                "layer index {layer} outside 1..={}",
                self.total_layers()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("num_numeric_features", self.num_numeric_features),
            ("vocab1", self.vocab1),
            ("vocab2", self.vocab2),
            ("wide_out_dim", self.wide_out_dim),
            ("embed_dim1", self.embed_dim1),
            ("embed_dim2", self.embed_dim2),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::config(format!("arch.{name} must be >= 1")));
            }
        }
        if let Some(pos) = self.client_hidden.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("arch.client_hidden[{pos}] must be >= 1")));
        }
        if let Some(pos) = self.server_hidden.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("arch.server_hidden[{pos}] must be >= 1")));
        }
        if self.split_layer < 1 || self.split_layer >= self.total_layers() {
            return Err(Error::config(format!(
                "arch.split_layer {} must satisfy 1 <= s < {}",
                self.split_layer,
                self.total_layers()
            )));
        }
        Ok(())
    }
}
