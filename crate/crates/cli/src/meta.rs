//! Run metadata: a JSON object with the command, the crate version and the
//! resolved parameters and results as strings, written next to the outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::json;
use unmix_core::{Error, Result};

pub const FILE_NAME: &str = "run.json";

pub fn render(command: &str, params: &BTreeMap<String, String>, results: &BTreeMap<String, String>) -> String {
    let value = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": params,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("string maps serialize");
    text.push('\n');
    text
}

pub fn write(
    dir: &Path,
    command: &str,
    params: &BTreeMap<String, String>,
    results: &BTreeMap<String, String>,
) -> Result<()> {
    let path = dir.join(FILE_NAME);
    fs::write(&path, render(command, params, results)).map_err(|source| Error::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_a_json_parser() {
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), "x\"y".to_string());
        p.insert("b".to_string(), "1".to_string());
        let text = render("prune", &p, &BTreeMap::new());
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["command"], "prune");
        assert_eq!(back["parameters"]["a"], "x\"y");
        assert_eq!(back["results"], json!({}));
    }
}
