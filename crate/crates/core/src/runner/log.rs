//! Structured progress lines on standard error.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};

/// Emit `{"ts":..,"event":..,<fields>}` as one JSON line.
pub fn event(name: &str, fields: &[(&str, Value)]) {
    let mut obj = Map::new();
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    obj.insert("ts".into(), ts.into());
    obj.insert("event".into(), name.into());
    for (k, v) in fields {
        obj.insert((*k).into(), v.clone());
    }
    let line = Value::Object(obj).to_string();
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}
