//! JSON plumbing shared by the file formats: reading with field-path
//! diagnostics, and writing with a trailing newline.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub(crate) fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::schema(path, "expected an object"))
}

pub(crate) fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(join(path, key), "missing required field"))
}

pub(crate) fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

pub(crate) fn positive_usize(obj: &Map<String, Value>, key: &str, path: &str) -> Result<usize> {
    let p = join(path, key);
    let n = field(obj, key, path)?
        .as_u64()
        .ok_or_else(|| Error::schema(&p, "expected a positive integer"))?;
    if n == 0 {
        return Err(Error::schema(&p, "must be positive"));
    }
    usize::try_from(n).map_err(|_| Error::schema(&p, "too large"))
}

pub(crate) fn array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::schema(path, "expected an array"))
}

pub(crate) fn number(value: &Value, path: &str) -> Result<f64> {
    value.as_f64().ok_or_else(|| Error::schema(path, "expected a number"))
}

/// Parses a nested array of exactly `dims.len()` levels into a row-major
/// buffer. Wrong nesting depth or lengths are dimension errors.
pub(crate) fn tensor(
    value: &Value,
    path: &str,
    dims: &[usize],
    leaf: &dyn Fn(&Value, &str) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dims.iter().product());
    fill(value, path, dims, leaf, &mut out)?;
    Ok(out)
}

fn fill(
    value: &Value,
    path: &str,
    dims: &[usize],
    leaf: &dyn Fn(&Value, &str) -> Result<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    match dims.split_first() {
        None => {
            if value.is_array() {
                return Err(Error::Dimension(format!(
                    "`{path}` nests deeper than the declared rank"
                )));
            }
            out.push(leaf(value, path)?);
            Ok(())
        }
        Some((&len, rest)) => {
            let items = value
                .as_array()
                .ok_or_else(|| Error::Dimension(format!("`{path}` should be an array of length {len}")))?;
            if items.len() != len {
                return Err(Error::Dimension(format!(
                    "`{path}` has length {}, expected {len}",
                    items.len()
                )));
            }
            for (i, item) in items.iter().enumerate() {
                fill(item, &format!("{path}[{i}]"), rest, leaf, out)?;
            }
            Ok(())
        }
    }
}

/// Inverse of [`tensor`].
pub(crate) fn nest(data: &[f64], dims: &[usize], leaf: &dyn Fn(f64) -> Value) -> Value {
    match dims.split_first() {
        None => leaf(data[0]),
        Some((&len, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..len)
                    .map(|i| nest(&data[i * stride..(i + 1) * stride], rest, leaf))
                    .collect(),
            )
        }
    }
}

pub(crate) fn plain_number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}
