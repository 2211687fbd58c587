use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{standardize, Dataset, Schema};
use crate::error::{Error, Result};
use crate::fmt_f64;

/// Reads a comma-separated file with a header row.
///
/// Numeric columns are standardized; categorical strings are numbered in
/// order of first appearance. Columns not named by `schema` are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}` in {}", path.display())))
    };
    let numeric_cols = schema
        .numeric
        .iter()
        .map(|n| position(n))
        .collect::<Result<Vec<_>>>()?;
    let cat_cols = [position(&schema.categorical[0])?, position(&schema.categorical[1])?];
    let target_col = position(&schema.target)?;

    let mut numeric_flat = Vec::new();
    let mut cats: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut labels: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut lookup: [HashMap<String, usize>; 2] = [HashMap::new(), HashMap::new()];
    let mut target = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |col: usize, name: &str| -> Result<f64> {
            let cell = record.get(col).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("column `{name}`: cannot parse `{cell}` as a number"),
            })
        };
        for (&col, name) in numeric_cols.iter().zip(&schema.numeric) {
            numeric_flat.push(parse(col, name)?);
        }
        target.push(parse(target_col, &schema.target)?);
        for k in 0..2 {
            let cell = record.get(cat_cols[k]).unwrap_or("").trim().to_string();
            let next = labels[k].len();
            let idx = *lookup[k].entry(cell.clone()).or_insert_with(|| {
                labels[k].push(cell);
                next
            });
            cats[k].push(idx);
        }
    }

    if target.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    let n = target.len();
    let mut numeric = Array2::from_shape_vec((n, schema.numeric.len()), numeric_flat)
        .map_err(|e| Error::dim(e.to_string()))?;
    let standardization = standardize(&mut numeric);
    let [cat1, cat2] = cats;
    let [labels1, labels2] = labels;

    let ds = Dataset {
        numeric,
        cat1,
        cat2,
        target,
        schema: schema.clone(),
        vocab1: labels1.len(),
        vocab2: labels2.len(),
        labels1,
        labels2,
        standardization,
        generator: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `dataset` in the format [`load_csv`] reads, floats at full precision, LF endings.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let s = &dataset.schema;
    let header: Vec<&str> = s
        .numeric
        .iter()
        .map(String::as_str)
        .chain([s.categorical[0].as_str(), s.categorical[1].as_str(), s.target.as_str()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut cells: Vec<String> = dataset.numeric.row(i).iter().map(|&v| fmt_f64(v)).collect();
        cells.push(dataset.labels1[dataset.cat1[i]].clone());
        cells.push(dataset.labels2[dataset.cat2[i]].clone());
        cells.push(fmt_f64(dataset.target[i]));
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
