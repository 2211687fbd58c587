use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{standardize, Dataset, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_numeric: usize,
    pub vocab1: usize,
    pub vocab2: usize,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_numeric: 6,
            vocab1: 2,
            vocab2: 3,
            noise_sigma: 0.1,
        }
    }
}

/// Ground-truth coefficients of the linear-plus-embedding generator.
///
/// `target = weights · numeric + effects1[cat1] + effects2[cat2] + noise`,
/// where `numeric` is the standardized feature row stored in the dataset and
/// category indices are the stored (first-appearance) indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub weights: Vec<f64>,
    pub effects1: Vec<f64>,
    pub effects2: Vec<f64>,
}

impl GeneratorParams {
    pub fn zeros(spec: &SyntheticSpec) -> Self {
        Self {
            weights: vec![0.0; spec.num_numeric],
            effects1: vec![0.0; spec.vocab1],
            effects2: vec![0.0; spec.vocab2],
        }
    }

    /// Noise-free target for one row.
    pub fn clean_target(&self, numeric: &[f64], cat1: usize, cat2: usize) -> f64 {
        let mut acc = 0.0;
        for (w, x) in self.weights.iter().zip(numeric) {
            acc += w * x;
        }
        acc + self.effects1[cat1] + self.effects2[cat2]
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Relabels indices so that categories are numbered in order of first appearance,
/// returning the relabelled column and `old → new` map.
fn first_appearance(column: &[usize], vocab: usize) -> (Vec<usize>, Vec<usize>) {
    let mut map = vec![usize::MAX; vocab];
    let mut next = 0;
    for &c in column {
        if map[c] == usize::MAX {
            map[c] = next;
            next += 1;
        }
    }
    for slot in map.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    (column.iter().map(|&c| map[c]).collect(), map)
}

fn permute(effects: &[f64], map: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; effects.len()];
    for (old, &new) in map.iter().enumerate() {
        out[new] = effects[old];
    }
    out
}

/// Seeded synthetic dataset; generator coefficients are drawn from the same seed.
pub fn generate_synthetic(seed: u64, n: usize, spec: &SyntheticSpec) -> Result<Dataset> {
    generate_with(seed, n, spec, None)
}

/// Like [`generate_synthetic`] but with caller-fixed generator coefficients.
pub fn generate_with(
    seed: u64,
    n: usize,
    spec: &SyntheticSpec,
    fixed: Option<GeneratorParams>,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("synthetic dataset needs n >= 1"));
    }
    if spec.num_numeric == 0 || spec.vocab1 == 0 || spec.vocab2 == 0 {
        return Err(Error::config("synthetic spec widths must be >= 1"));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::config("noise_sigma must be a finite value >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let drawn = GeneratorParams {
        weights: normal_vec(&mut rng, spec.num_numeric),
        effects1: normal_vec(&mut rng, spec.vocab1),
        effects2: normal_vec(&mut rng, spec.vocab2),
    };
    let raw_params = match fixed {
        Some(p) => {
            if p.weights.len() != spec.num_numeric
                || p.effects1.len() != spec.vocab1
                || p.effects2.len() != spec.vocab2
            {
                return Err(Error::config("fixed generator params do not match spec"));
            }
            p
        }
        None => drawn,
    };

    let mut numeric = Array2::zeros((n, spec.num_numeric));
    for v in numeric.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let raw1: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.vocab1)).collect();
    let raw2: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.vocab2)).collect();

    let standardization = standardize(&mut numeric);
    let (cat1, map1) = first_appearance(&raw1, spec.vocab1);
    let (cat2, map2) = first_appearance(&raw2, spec.vocab2);
    let generator = GeneratorParams {
        weights: raw_params.weights,
        effects1: permute(&raw_params.effects1, &map1),
        effects2: permute(&raw_params.effects2, &map2),
    };

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = numeric.row(i).to_vec();
        let clean = generator.clean_target(&row, cat1[i], cat2[i]);
        let eps = if spec.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        target.push(clean + eps);
    }

    let schema = Schema::generic(spec.num_numeric);
    let labels1 = (0..spec.vocab1).map(|i| format!("{}_{i}", schema.categorical[0])).collect();
    let labels2 = (0..spec.vocab2).map(|i| format!("{}_{i}", schema.categorical[1])).collect();
    let ds = Dataset {
        numeric,
        cat1,
        cat2,
        target,
        schema,
        vocab1: spec.vocab1,
        vocab2: spec.vocab2,
        labels1,
        labels2,
        standardization,
        generator: Some(generator),
    };
    ds.validate()?;
    Ok(ds)
}
