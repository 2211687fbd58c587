//! Datasets: a synthetic generator shaped like a small tabular health dataset,
//! a CSV loader/writer, and per-user sharding.

mod csv_io;
mod partition;
mod synthetic;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv};
pub use partition::{holdout_indices, partition, Shard};
pub use synthetic::{generate_synthetic, generate_with, GeneratorParams, SyntheticSpec};

use crate::error::{Error, Result};
use crate::model::RawBatch;

/// Column names of a dataset: numeric inputs, two categorical inputs, one numeric target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub numeric: Vec<String>,
    pub categorical: [String; 2],
    pub target: String,
}

impl Schema {
    /// Eight input features (six numeric, two categorical) plus a score target.
    pub fn dementia_like() -> Self {
        Self {
            numeric: [
                "AlcoholLevel",
                "HeartRate",
                "BloodOxygenLevel",
                "BodyTemperature",
                "Weight",
                "MRI_Delay",
            ]
            .map(String::from)
            .to_vec(),
            categorical: ["Gender".into(), "Smoking_Status".into()],
            target: "Cognitive_Test_Scores".into(),
        }
    }

    /// Generic names for a synthetic dataset with `num_numeric` numeric columns.
    pub fn generic(num_numeric: usize) -> Self {
        if num_numeric == 6 {
            return Self::dementia_like();
        }
        Self {
            numeric: (0..num_numeric).map(|i| format!("x{i}")).collect(),
            categorical: ["cat1".into(), "cat2".into()],
            target: "target".into(),
        }
    }
}

/// Mean and standard deviation removed from each numeric column at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[n × num_numeric]`, standardized per column.
    pub numeric: Array2<f64>,
    pub cat1: Vec<usize>,
    pub cat2: Vec<usize>,
    pub target: Vec<f64>,
    pub schema: Schema,
    pub vocab1: usize,
    pub vocab2: usize,
    /// Category labels by index (first-appearance order for loaded files).
    pub labels1: Vec<String>,
    pub labels2: Vec<String>,
    pub standardization: Standardization,
    /// Present for synthetic data.
    pub generator: Option<GeneratorParams>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn num_numeric(&self) -> usize {
        self.numeric.ncols()
    }

    /// Input rows at `indices` in the layout the encoder consumes.
    pub fn batch(&self, indices: &[usize]) -> RawBatch {
        RawBatch {
            numeric: self.numeric.select(Axis(0), indices),
            cat1: indices.iter().map(|&i| self.cat1[i]).collect(),
            cat2: indices.iter().map(|&i| self.cat2[i]).collect(),
        }
    }

    pub fn targets(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.target[i]).collect()
    }

    /// New dataset holding only `indices`, keeping vocabularies and metadata.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            numeric: self.numeric.select(Axis(0), indices),
            cat1: indices.iter().map(|&i| self.cat1[i]).collect(),
            cat2: indices.iter().map(|&i| self.cat2[i]).collect(),
            target: self.targets(indices),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if self.numeric.nrows() != n || self.cat1.len() != n || self.cat2.len() != n {
            return Err(Error::dim("dataset columns have different lengths"));
        }
        if self.numeric.ncols() != self.schema.numeric.len() {
            return Err(Error::dim("numeric columns do not match schema"));
        }
        if self.cat1.iter().any(|&c| c >= self.vocab1) || self.cat2.iter().any(|&c| c >= self.vocab2)
        {
            return Err(Error::Data("category index outside vocabulary".into()));
        }
        if !self.numeric.iter().chain(&self.target).all(|v| v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Standardizes each column in place to zero mean and unit (population) variance.
/// Constant columns are only centered.
pub(crate) fn standardize(numeric: &mut Array2<f64>) -> Standardization {
    let n = numeric.nrows() as f64;
    let mut mean = Vec::with_capacity(numeric.ncols());
    let mut std = Vec::with_capacity(numeric.ncols());
    for mut col in numeric.columns_mut() {
        let m = col.sum() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - m) / sd);
        mean.push(m);
        std.push(sd);
    }
    Standardization { mean, std }
}

#[cfg(test)]
mod tests;
