//! Deterministic JSON output: keys sorted (serde_json's default map is a
//! BTreeMap), floats rounded to six significant digits so reruns are
//! byte-identical and diffs stay readable.

use std::fs;
use std::path::Path;

use qtae_core::error::{Error, Result};
use serde::Serialize;
use serde_json::Value;

/// Round to six significant digits. Exact zero and non-finite values pass
/// through; the caller decides whether non-finite is an error.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let decade = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - decade);
    (x * scale).round() / scale
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                let rounded = sig6(n.as_f64().unwrap());
                if let Some(num) = serde_json::Number::from_f64(rounded) {
                    *v = Value::Number(num);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn to_canonical_string(value: &impl Serialize) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, to_canonical_string(value)?)?;
    Ok(())
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::contract(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::contract(format!("{}: {e}", path.display())))
}
