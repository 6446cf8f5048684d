//! Reading model specifications from TOML, with errors located by line.
//!
//! ```toml
//! [model]
//! dimension = 1
//! kappa0 = 2.0
//!
//! [model.family]
//! type = "scalar_two_point"
//! atoms = [2.0, 0.5]
//! weights = [0.3, 0.7]
//!
//! [model.q]
//! type = "constant"
//! value = [1.0]
//! ```

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::spec::ModelSpec;
use crate::error::{Error, Result};

/// 1-based line containing byte `offset`.
pub fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Parses a TOML document, mapping syntax and schema errors to lines.
pub fn parse_toml<T: DeserializeOwned>(source: &str) -> Result<T> {
    toml::from_str(source).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of_offset(source, s.start)),
        message: e.message().trim().to_string(),
    })
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn clean_key(k: &str) -> String {
    k.split('.')
        .map(|p| p.trim().trim_matches('"'))
        .collect::<Vec<_>>()
        .join(".")
}

/// Finds the line defining the dotted key `path` (e.g. `model.family.weights`).
/// Falls back to the longest defined prefix, so a problem inside an inline
/// table is reported at the table's line.
pub fn locate_key(source: &str, path: &str) -> Option<usize> {
    let mut table = String::new();
    let mut best: Option<(usize, usize)> = None; // (matched length, line)
    for (idx, raw) in source.lines().enumerate() {
        let line = strip_comment(raw).trim();
        let full = if let Some(h) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            table = clean_key(h);
            table.clone()
        } else if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = clean_key(h);
            table.clone()
        } else if let Some((k, _)) = line.split_once('=') {
            let k = clean_key(k);
            if table.is_empty() {
                k
            } else {
                format!("{table}.{k}")
            }
        } else {
            continue;
        };
        if full == path {
            return Some(idx + 1);
        }
        let is_prefix = path.starts_with(&full) && path[full.len()..].starts_with('.');
        if is_prefix && best.is_none_or(|(len, _)| full.len() > len) {
            best = Some((full.len(), idx + 1));
        }
    }
    best.map(|(_, line)| line)
}

/// Validates `spec`, reporting the first problem at the line of the offending
/// key; `prefix` is the table holding the spec (usually `model`).
pub fn validate_located(spec: &ModelSpec, source: &str, prefix: &str) -> Result<()> {
    match spec.issues().into_iter().next() {
        None => Ok(()),
        Some(issue) => {
            let path = if prefix.is_empty() {
                issue.path.clone()
            } else {
                format!("{prefix}.{}", issue.path)
            };
            Err(Error::Config {
                line: locate_key(source, &path),
                message: format!("{path}: {}", issue.message),
            })
        }
    }
}

#[derive(Deserialize)]
struct ModelOnly {
    model: ModelSpec,
}

/// Reads the `[model]` table of a configuration document and validates it.
pub fn model_from_toml(source: &str) -> Result<ModelSpec> {
    #[derive(Deserialize)]
    struct Doc {
        model: Option<toml::Value>,
    }
    let doc: Doc = parse_toml(source)?;
    if doc.model.is_none() {
        return Err(Error::Config {
            line: None,
            message: "missing [model] table".into(),
        });
    }
    let ModelOnly { model } = parse_toml(source)?;
    validate_located(&model, source, "model")?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    const TWO_POINT: &str = r#"
[model]
dimension = 1
kappa0 = 2.0

[model.family]
type = "scalar_two_point"
atoms = [2.0, 0.5]
weights = [0.3, 0.7]

[model.q]
type = "constant"
value = [1.0]
"#;

    #[test]
    fn parses_two_point() {
        assert_eq!(model_from_toml(TWO_POINT).unwrap(), presets::two_point());
    }

    #[test]
    fn weight_error_points_at_weights_line() {
        let bad = TWO_POINT.replace("[0.3, 0.7]", "[0.3, 0.6]");
        match model_from_toml(&bad) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, Some(9), "{message}");
                assert!(message.contains("weights"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let bad = TWO_POINT.replace("kappa0 = 2.0", "kappa0 = = 2.0");
        match model_from_toml(&bad) {
            Err(Error::Config { line, .. }) => assert_eq!(line, Some(4)),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_family_has_line() {
        let bad = TWO_POINT.replace("scalar_two_point", "scalar_three_point");
        match model_from_toml(&bad) {
            Err(Error::Config { line: Some(l), .. }) => assert!((6..=9).contains(&l), "line {l}"),
            other => panic!("expected located config error, got {other:?}"),
        }
    }

    #[test]
    fn locate_inline_table_prefix() {
        let src = "[model]\nfamily = { type = \"x\", weights = [1] }\n";
        assert_eq!(locate_key(src, "model.family.weights"), Some(2));
        assert_eq!(locate_key(src, "model.nothing"), Some(1));
    }
}
