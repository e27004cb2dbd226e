//! One CSV file per client: a header row, the feature columns `x0..x{d-1}`,
//! then a target column `y` for supervised data.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::task::ClientDataset;
use crate::{Error, Result, Scalar};

pub fn write_client_csv<T: Scalar>(path: impl AsRef<Path>, data: &ClientDataset<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    if data.targets.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for (i, row) in data.features.rows().into_iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(t) = &data.targets {
            record.push(t[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_client_csv<T: Scalar>(path: impl AsRef<Path>, client_id: usize) -> Result<ClientDataset<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let has_target = header.iter().next_back() == Some("y");
    let dim = header.len() - usize::from(has_target);
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch { what: "csv row", expected: header.len(), found: record.len() });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 =
                field.trim().parse().map_err(|_| Error::invalid(format!("row {rows}: cannot parse {field:?}")))?;
            if j < dim {
                features.push(T::lit(v));
            } else {
                targets.push(T::lit(v));
            }
        }
        rows += 1;
    }
    let features = Array2::from_shape_vec((rows, dim), features).map_err(|e| Error::invalid(e.to_string()))?;
    ClientDataset::new(client_id, features, has_target.then(|| Array1::from(targets)))
}
