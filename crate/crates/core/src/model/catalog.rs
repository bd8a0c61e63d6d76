//! Bundled models and on-disk model lookup.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

use super::{parse_model, FurnitureModel, ModelError};

pub const MODEL_FILE_EXTENSION: &str = ".furn.json";
/// Colon-separated extra directories searched for `<name>.furn.json`.
pub const MODEL_PATH_ENV: &str = "FLATPACK_MODEL_PATH";

const BUNDLED: &[(&str, &str)] = &[
    ("block", include_str!("../../models/block.furn.json")),
    ("shelf_simple", include_str!("../../models/shelf_simple.furn.json")),
    ("stool", include_str!("../../models/stool.furn.json")),
    ("table_simple", include_str!("../../models/table_simple.furn.json")),
];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ModelError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub parts: usize,
    pub connectors: usize,
}

fn bundled() -> &'static [Arc<FurnitureModel>] {
    static MODELS: OnceLock<Vec<Arc<FurnitureModel>>> = OnceLock::new();
    MODELS.get_or_init(|| {
        BUNDLED
            .iter()
            .map(|(name, src)| {
                let m = parse_model(src.as_bytes())
                    .unwrap_or_else(|e| panic!("bundled model {name} is malformed: {e}"));
                Arc::new(m)
            })
            .collect()
    })
}

/// Raw document text of a bundled model.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled_model(name: &str) -> Option<Arc<FurnitureModel>> {
    bundled().iter().find(|m| m.name == name).cloned()
}

/// Bundled models sorted by name.
pub fn list_bundled_models() -> Vec<ModelSummary> {
    let mut out: Vec<ModelSummary> = bundled()
        .iter()
        .map(|m| ModelSummary {
            name: m.name.clone(),
            parts: m.parts.len(),
            connectors: m.connector_count(),
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

fn load_file(path: &Path) -> Result<Arc<FurnitureModel>, CatalogError> {
    let bytes = std::fs::read(path)
        .map_err(|source| CatalogError::Io { path: path.to_path_buf(), source })?;
    parse_model(&bytes)
        .map(Arc::new)
        .map_err(|source| CatalogError::Parse { path: path.to_path_buf(), source })
}

/// Resolves a model by bundled name, then by `<dir>/<name>.furn.json` in each
/// directory of `FLATPACK_MODEL_PATH`, then as a direct file path.
pub fn resolve_model(name: &str) -> Result<Arc<FurnitureModel>, CatalogError> {
    if let Some(m) = bundled_model(name) {
        return Ok(m);
    }
    if let Ok(dirs) = std::env::var(MODEL_PATH_ENV) {
        for dir in dirs.split(':').filter(|d| !d.is_empty()) {
            let candidate = Path::new(dir).join(format!("{name}{MODEL_FILE_EXTENSION}"));
            if candidate.is_file() {
                return load_file(&candidate);
            }
        }
    }
    let direct = Path::new(name);
    if name.ends_with(MODEL_FILE_EXTENSION) && direct.is_file() {
        return load_file(direct);
    }
    Err(CatalogError::UnknownModel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn bundled_listing() {
        let list = list_bundled_models();
        let names: Vec<&str> = list.iter().map(|s| s.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        let find = |n: &str| list.iter().find(|s| s.name == n).cloned().unwrap();
        assert_eq!(find("block"), ModelSummary { name: "block".into(), parts: 2, connectors: 2 });
        assert_eq!(find("table_simple"), ModelSummary { name: "table_simple".into(), parts: 5, connectors: 8 });
        assert!(find("shelf_simple").parts >= 4);
    }

    #[test]
    fn bundled_models_validate_clean() {
        for s in list_bundled_models() {
            let m = bundled_model(&s.name).unwrap();
            let d = validate_model(&m);
            assert!(d.is_valid(), "{}: {:?}", s.name, d.errors);
            assert!(d.warnings.is_empty(), "{}: {:?}", s.name, d.warnings);
            assert_eq!(m.mate_pairs().len(), m.parts.len() - 1, "{} is not a tree", s.name);
        }
    }

    #[test]
    fn direct_path_and_unknown() {
        assert!(matches!(resolve_model("no_such_model"), Err(CatalogError::UnknownModel(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mine.furn.json");
        std::fs::write(&path, bundled_source("block").unwrap().replace("\"block\"", "\"mine\"")).unwrap();
        let m = resolve_model(path.to_str().unwrap()).unwrap();
        assert_eq!(m.name, "mine");
    }
}
