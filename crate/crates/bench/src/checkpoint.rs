use std::path::Path;

use gnnlab_core::zoo::Model;

use crate::report::write_atomic;
use crate::BenchError;

/// Saves a model, config and weights, as JSON.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), BenchError> {
    let json = serde_json::to_string(model).map_err(|e| BenchError::Data(e.to_string()))?;
    write_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<Model, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let model: Model = serde_json::from_str(&text)
        .map_err(|e| BenchError::Data(format!("bad checkpoint {}: {e}", path.display())))?;
    model.validate().map_err(|e| BenchError::Data(e.to_string()))?;
    Ok(model)
}
