//! File formats for datasets, posterior grids and nuisance densities.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use laebvm_core::nuisance::{DensityRecord, NuisanceDensity};
use laebvm_core::{Dataset, PosteriorGrid};

use crate::RunError;

/// One column `x`, one observation per line.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<(), RunError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| RunError::io(path, e))?);
    let mut body = String::from("x\n");
    for x in data.x() {
        body.push_str(&format!("{x}\n"));
    }
    w.write_all(body.as_bytes()).map_err(|e| RunError::io(path, e))?;
    w.flush().map_err(|e| RunError::io(path, e))
}

pub fn read_dataset_csv(path: &Path, seed: u64) -> Result<Dataset, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RunError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let x: Vec<f64> = r
        .deserialize::<(f64,)>()
        .map(|row| {
            row.map(|(v,)| v).map_err(|e| RunError::Csv {
                path: path.to_path_buf(),
                source: e,
            })
        })
        .collect::<Result<_, _>>()?;
    Dataset::new(x, seed).map_err(|e| RunError::Model(e.to_string()))
}

/// Columns `h, theta, density, limit_density`.
pub fn write_posterior_csv(path: &Path, post: &PosteriorGrid) -> Result<(), RunError> {
    let limit = post.limit();
    let mut body = String::from("h,theta,density,limit_density\n");
    for (h, d) in post.h().iter().zip(post.density()) {
        body.push_str(&format!("{h},{},{d},{}\n", post.theta(*h), limit.log_density(*h).exp()));
    }
    std::fs::write(path, body).map_err(|e| RunError::io(path, e))
}

pub fn write_density_json(path: &Path, eta: &NuisanceDensity) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(&eta.to_record()).map_err(|e| RunError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| RunError::io(path, e))
}

/// Rebuilds the density and checks the stored normalizer.
pub fn read_density_json(path: &Path) -> Result<NuisanceDensity, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let record: DensityRecord = serde_json::from_str(&text).map_err(|e| RunError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    NuisanceDensity::from_record(&record).map_err(|e| RunError::Model(e.to_string()))
}
