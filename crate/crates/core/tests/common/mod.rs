#![allow(dead_code)]

use std::path::{Path, PathBuf};

use jsonschema::Registry;
use serde_json::Value;

const COMMON_ID: &str = "https://formopt.invalid/schemas/common.json";

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn load(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Validates `instance` against one of the checked-in schemas and returns
/// the error messages.
pub fn schema_errors(schema_file: &str, instance: &Value) -> Vec<String> {
    let dir = schema_dir();
    let registry = Registry::new()
        .add(COMMON_ID, load(&dir.join("common.json")))
        .expect("common schema")
        .prepare()
        .expect("registry");
    let validator = jsonschema::options()
        .with_registry(&registry)
        .build(&load(&dir.join(schema_file)))
        .expect("schema compiles");
    validator.iter_errors(instance).map(|e| format!("{e} at {}", e.instance_path())).collect()
}

pub fn assert_valid(schema_file: &str, instance: &Value) {
    let errors = schema_errors(schema_file, instance);
    assert!(errors.is_empty(), "{schema_file}: {errors:#?}");
}
