use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ArchSpec;
use crate::system::{compute_time, UserProfile};

/// Two-cluster assignment of users by estimated client-side forward time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classes {
    pub efficient: Vec<usize>,
    pub bottleneck: Vec<usize>,
}

/// Users whose client forward time is at or below the median are efficient.
pub fn classify_users(profiles: &[UserProfile], arch: &ArchSpec, batch: usize) -> Result<Classes> {
    let times = profiles
        .iter()
        .map(|p| compute_time(p, arch, 1, arch.split_layer, batch))
        .collect::<Result<Vec<f64>>>()?;
    if times.is_empty() {
        return Ok(Classes::default());
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mut classes = Classes::default();
    for (p, t) in profiles.iter().zip(&times) {
        if *t <= median {
            classes.efficient.push(p.user_id);
        } else {
            classes.bottleneck.push(p.user_id);
        }
    }
    classes.efficient.sort_unstable();
    classes.bottleneck.sort_unstable();
    Ok(classes)
}
