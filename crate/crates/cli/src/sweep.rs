//! Sweeps run the cartesian product of config patches. Each `--set` flag
//! contributes one axis: a dot path into the config JSON plus the values to
//! try there, e.g. `--set order=1,2 --set partitions.0.n=8,16`.

use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<Value>,
}

/// Parse `PATH=V1,V2,...`. Values that read as JSON scalars (numbers,
/// booleans, null) are patched with that type; everything else is a string.
pub fn parse_axis(arg: &str) -> Result<SweepAxis, CliError> {
    let (path, values) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects PATH=V1,V2, got {arg:?}")))?;
    if path.is_empty() {
        return Err(CliError::Config(format!("--set has an empty path: {arg:?}")));
    }
    let values: Vec<Value> = values
        .split(',')
        .map(|v| match serde_json::from_str::<Value>(v) {
            Ok(parsed) if !parsed.is_array() && !parsed.is_object() => parsed,
            _ => Value::String(v.to_string()),
        })
        .collect();
    if values.is_empty() || values.iter().any(|v| v == &Value::String(String::new())) {
        return Err(CliError::Config(format!("--set has an empty value: {arg:?}")));
    }
    Ok(SweepAxis {
        path: path.to_string(),
        values,
    })
}

/// Set `path` inside a JSON document. Intermediate segments must exist;
/// the final segment may insert a fresh object key. Array segments are
/// numeric indices.
pub fn patch(doc: &mut Value, path: &str, value: &Value) -> Result<(), CliError> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cur = doc;
    for (si, seg) in segments.iter().enumerate() {
        let last = si + 1 == segments.len();
        if last {
            match cur {
                Value::Object(map) => {
                    map.insert(seg.to_string(), value.clone());
                    return Ok(());
                }
                Value::Array(arr) => {
                    let idx = array_index(path, seg, arr.len())?;
                    arr[idx] = value.clone();
                    return Ok(());
                }
                _ => {
                    return Err(CliError::Config(format!(
                        "path {path}: segment {seg} lands on a scalar"
                    )))
                }
            }
        }
        cur = match cur {
            Value::Object(map) => map.get_mut(*seg).ok_or_else(|| {
                CliError::Config(format!("path {path}: key {seg} not found"))
            })?,
            Value::Array(arr) => {
                let idx = array_index(path, seg, arr.len())?;
                &mut arr[idx]
            }
            _ => {
                return Err(CliError::Config(format!(
                    "path {path}: segment {seg} lands on a scalar"
                )))
            }
        };
    }
    unreachable!("split never yields zero segments")
}

fn array_index(path: &str, seg: &str, len: usize) -> Result<usize, CliError> {
    let idx: usize = seg.parse().map_err(|_| {
        CliError::Config(format!("path {path}: {seg} is not an array index"))
    })?;
    if idx >= len {
        return Err(CliError::Config(format!(
            "path {path}: index {idx} out of bounds for length {len}"
        )));
    }
    Ok(idx)
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// All combinations in odometer order: the last axis varies fastest, like
/// nested loops written in the order the axes were given. Each cell carries
/// a `path=value` label.
pub fn expand(base: &Value, axes: &[SweepAxis]) -> Result<Vec<(String, Value)>, CliError> {
    let counts: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let total: usize = counts.iter().product();
    let mut cells = Vec::with_capacity(total);
    for cell in 0..total {
        let mut rem = cell;
        let mut picks = vec![0usize; axes.len()];
        for ai in (0..axes.len()).rev() {
            picks[ai] = rem % counts[ai];
            rem /= counts[ai];
        }
        let mut doc = base.clone();
        let mut labels = Vec::with_capacity(axes.len());
        for (axis, &pick) in axes.iter().zip(&picks) {
            patch(&mut doc, &axis.path, &axis.values[pick])?;
            labels.push(format!("{}={}", axis.path, value_label(&axis.values[pick])));
        }
        cells.push((labels.join(","), doc));
    }
    Ok(cells)
}
