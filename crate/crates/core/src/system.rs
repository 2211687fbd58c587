//! Maps work to simulated seconds: per-layer FLOP counts, device speed, and
//! rate-plus-latency wireless links.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ArchSpec;

/// Resource and channel description of one client device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    /// Effective floating point operations per second.
    pub cpu_rate: f64,
    /// Exogenous data quality score in `[0, 1]`.
    pub data_quality: f64,
    /// Bits per second to and from the server.
    pub uplink_rate: f64,
    /// Bits per second to peers.
    pub d2d_rate: f64,
    /// Seconds added to every message this device sends.
    pub link_latency: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        let id = self.user_id;
        let positive = [
            ("cpu_rate", self.cpu_rate),
            ("uplink_rate", self.uplink_rate),
            ("d2d_rate", self.d2d_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("profile {id}: {name} must be > 0, got {v}")));
            }
        }
        if !(self.link_latency >= 0.0) || !self.link_latency.is_finite() {
            return Err(Error::config(format!("profile {id}: link_latency must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.data_quality) {
            return Err(Error::config(format!("profile {id}: data_quality must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Global cost parameters shared by all devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub bytes_per_element: usize,
    /// Seconds charged once per aggregation event.
    pub aggregation_latency: f64,
    /// Backward FLOPs as a multiple of forward FLOPs.
    pub backward_factor: f64,
    /// Server effective FLOP/s; uploads are processed without queueing.
    pub server_rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            bytes_per_element: 8,
            aggregation_latency: 0.05,
            backward_factor: 2.0,
            server_rate: 1e9,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_element == 0 {
            return Err(Error::config("bytes_per_element must be >= 1"));
        }
        if !(self.aggregation_latency >= 0.0) || !self.aggregation_latency.is_finite() {
            return Err(Error::config("aggregation_latency must be >= 0"));
        }
        if !(self.backward_factor >= 0.0) || !self.backward_factor.is_finite() {
            return Err(Error::config("backward_factor must be >= 0"));
        }
        if !(self.server_rate > 0.0) || !self.server_rate.is_finite() {
            return Err(Error::config("server_rate must be > 0"));
        }
        Ok(())
    }

    /// Server time for one batch: forward plus backward over `s+1..=n`.
    pub fn server_time(&self, arch: &ArchSpec, batch: usize) -> Result<f64> {
        let fwd = range_flops(arch, arch.split_layer + 1, arch.total_layers(), batch)?;
        Ok(fwd as f64 * (1.0 + self.backward_factor) / self.server_rate)
    }
}

/// Forward FLOPs of one layer.
///
/// Dense: `2·batch·in·out`. Encoder: `2·batch·num_numeric·wide_out` for the
/// wide projection plus one FLOP per looked-up embedding element.
pub fn layer_flops(arch: &ArchSpec, layer: usize, batch: usize) -> Result<u64> {
    arch.check_layer(layer)?;
    let b = batch as u64;
    if layer == 1 {
        let wide = 2 * b * (arch.num_numeric_features * arch.wide_out_dim) as u64;
        let lookups = b * (arch.embed_dim1 + arch.embed_dim2) as u64;
        Ok(wide + lookups)
    } else {
        let fan_in = arch.layer_input_width(layer)? as u64;
        let fan_out = arch.layer_width(layer)? as u64;
        Ok(2 * b * fan_in * fan_out)
    }
}

pub fn range_flops(arch: &ArchSpec, from: usize, to: usize, batch: usize) -> Result<u64> {
    if from > to {
        return Err(Error::contract(format!("empty layer range {from}..={to}")));
    }
    (from..=to).map(|l| layer_flops(arch, l, batch)).sum()
}

/// Forward compute seconds for layers `from..=to` on `profile`'s device.
pub fn compute_time(
    profile: &UserProfile,
    arch: &ArchSpec,
    from: usize,
    to: usize,
    batch: usize,
) -> Result<f64> {
    Ok(range_flops(arch, from, to, batch)? as f64 / profile.cpu_rate)
}

/// Seconds to move `bytes` over a link: `latency + 8·bytes / rate`.
pub fn transfer_time(bytes: usize, rate: f64, latency: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::config(format!("link rate must be > 0, got {rate}")));
    }
    Ok(latency + 8.0 * bytes as f64 / rate)
}

/// Size of the activation leaving `layer`: `batch × width × bytes_per_element`.
pub fn activation_bytes(
    arch: &ArchSpec,
    layer: usize,
    batch: usize,
    bytes_per_element: usize,
) -> Result<usize> {
    Ok(batch * arch.layer_width(layer)? * bytes_per_element)
}
