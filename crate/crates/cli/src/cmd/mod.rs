pub mod analysis;
pub mod compare;
pub mod fit;
pub mod sample;
pub mod sweep;
pub mod synthetic;

use std::path::Path;

use anyhow::{Context, Result};
use gaussdiff::io;
use gaussdiff::{PointCloud, ScoreModel};

pub fn load_model(spec: &str) -> Result<ScoreModel> {
    io::load_model(spec).with_context(|| format!("cannot load model '{spec}'"))
}

pub fn load_cloud(path: &Path, labels: bool) -> Result<PointCloud> {
    Ok(io::read_cloud(path, labels)?)
}
