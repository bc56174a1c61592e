//! JSON-stat 2.0 single-dataset documents.
//!
//! Only `"class": "dataset"` is accepted. Dimension order follows the
//! document's `id` member, values keep document order (last dimension
//! fastest), and both sparse value objects and explicit nulls become missing
//! cells.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde_json::{Map, Value};

use crate::cube::{Category, CubeError, DataCube, Dimension, DimensionRole};

/// Parse failure, carrying the path of the offending member (e.g.
/// `dimension.region.category.index`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct JsonStatError {
    pub path: String,
    pub reason: String,
}

impl JsonStatError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

type Result<T> = core::result::Result<T, JsonStatError>;

pub fn parse_jsonstat(payload: &str) -> Result<DataCube> {
    let doc: Value = serde_json::from_str(payload)
        .map_err(|e| JsonStatError::new("$", format!("not valid JSON: {e}")))?;
    from_value(&doc)
}

/// Parse an already decoded JSON document.
pub fn from_value(doc: &Value) -> Result<DataCube> {
    let root = doc
        .as_object()
        .ok_or_else(|| JsonStatError::new("$", "document must be an object"))?;

    match root.get("class") {
        Some(Value::String(c)) if c == "dataset" => {}
        Some(Value::String(c)) => {
            return Err(JsonStatError::new(
                "class",
                format!("unsupported class `{c}`; only `dataset` is accepted"),
            ))
        }
        Some(_) => return Err(JsonStatError::new("class", "must be a string")),
        None => return Err(JsonStatError::new("class", "missing")),
    }
    if let Some(v) = root.get("version") {
        if v.as_str() != Some("2.0") {
            return Err(JsonStatError::new("version", "expected \"2.0\""));
        }
    }

    let ids = string_array(root, "id")?;
    let sizes: Vec<usize> = member(root, "size")?
        .as_array()
        .ok_or_else(|| JsonStatError::new("size", "must be an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64()
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| {
                    JsonStatError::new(format!("size[{i}]"), "must be a non-negative integer")
                })
        })
        .collect::<Result<_>>()?;
    if sizes.len() != ids.len() {
        return Err(JsonStatError::new(
            "size",
            format!("{} sizes for {} dimension ids", sizes.len(), ids.len()),
        ));
    }

    let dims_obj = member(root, "dimension")?
        .as_object()
        .ok_or_else(|| JsonStatError::new("dimension", "must be an object"))?;
    let roles = parse_roles(root)?;

    let mut dimensions = Vec::with_capacity(ids.len());
    let mut unit = None;
    for (id, &size) in ids.iter().zip(&sizes) {
        let path = format!("dimension.{id}");
        let body = dims_obj
            .get(id)
            .ok_or_else(|| JsonStatError::new(path.clone(), "missing"))?;
        let (dim, dim_unit) = parse_dimension(id, body, &path, roles.role_of(id))?;
        if dim.len() != size {
            return Err(JsonStatError::new(
                format!("{path}.category"),
                format!("{} categories but size declares {size}", dim.len()),
            ));
        }
        if unit.is_none() {
            unit = dim_unit;
        }
        dimensions.push(dim);
    }

    let total: usize = sizes.iter().product();
    let values = parse_values(member(root, "value")?, total)?;

    let updated_at =
        match root.get("updated") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(parse_timestamp(s).ok_or_else(|| {
                JsonStatError::new("updated", "not an ISO 8601 date or date-time")
            })?),
            Some(_) => return Err(JsonStatError::new("updated", "must be a string")),
        };

    let cube = DataCube::new(dimensions, values).map_err(|e| match e {
        CubeError::NonFiniteValue(i) => JsonStatError::new(format!("value[{i}]"), "not finite"),
        CubeError::LengthMismatch { .. } => JsonStatError::new("value", e.to_string()),
        other => JsonStatError::new("dimension", other.to_string()),
    })?;
    Ok(cube.with_unit(unit).with_updated_at(updated_at))
}

fn member<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| JsonStatError::new(key, "missing"))
}

fn string_array(obj: &Map<String, Value>, key: &str) -> Result<Vec<String>> {
    let arr = member(obj, key)?
        .as_array()
        .ok_or_else(|| JsonStatError::new(key, "must be an array"))?;
    let mut seen = BTreeSet::new();
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            let s = v
                .as_str()
                .ok_or_else(|| JsonStatError::new(format!("{key}[{i}]"), "must be a string"))?;
            if !seen.insert(s) {
                return Err(JsonStatError::new(
                    format!("{key}[{i}]"),
                    format!("duplicate `{s}`"),
                ));
            }
            Ok(s.to_owned())
        })
        .collect()
}

#[derive(Default)]
struct Roles {
    time: Vec<String>,
    geo: Vec<String>,
    metric: Vec<String>,
}

impl Roles {
    fn role_of(&self, id: &str) -> Option<DimensionRole> {
        let has = |v: &Vec<String>| v.iter().any(|x| x == id);
        if has(&self.time) {
            Some(DimensionRole::Time)
        } else if has(&self.geo) {
            Some(DimensionRole::Geo)
        } else if has(&self.metric) {
            Some(DimensionRole::Metric)
        } else {
            None
        }
    }
}

fn parse_roles(root: &Map<String, Value>) -> Result<Roles> {
    let Some(role) = root.get("role") else {
        return Ok(Roles::default());
    };
    let obj = role
        .as_object()
        .ok_or_else(|| JsonStatError::new("role", "must be an object"))?;
    let list = |key: &str| -> Result<Vec<String>> {
        match obj.get(key) {
            None => Ok(Vec::new()),
            Some(_) => string_array(obj, key)
                .map_err(|e| JsonStatError::new(format!("role.{}", e.path), e.reason)),
        }
    };
    Ok(Roles {
        time: list("time")?,
        geo: list("geo")?,
        metric: list("metric")?,
    })
}

fn parse_dimension(
    id: &str,
    body: &Value,
    path: &str,
    role: Option<DimensionRole>,
) -> Result<(Dimension, Option<String>)> {
    let obj = body
        .as_object()
        .ok_or_else(|| JsonStatError::new(path, "must be an object"))?;
    let label = match obj.get("label") {
        None => id.to_owned(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(JsonStatError::new(
                format!("{path}.label"),
                "must be a string",
            ))
        }
    };
    let cat_path = format!("{path}.category");
    let category = obj
        .get("category")
        .ok_or_else(|| JsonStatError::new(cat_path.clone(), "missing"))?
        .as_object()
        .ok_or_else(|| JsonStatError::new(cat_path.clone(), "must be an object"))?;

    let labels = match category.get("label") {
        None => None,
        Some(Value::Object(m)) => Some(m),
        Some(_) => {
            return Err(JsonStatError::new(
                format!("{cat_path}.label"),
                "must be an object",
            ))
        }
    };

    let index_path = format!("{cat_path}.index");
    let ids: Vec<String> = match category.get("index") {
        Some(Value::Array(arr)) => arr
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str().map(str::to_owned).ok_or_else(|| {
                    JsonStatError::new(format!("{index_path}[{i}]"), "must be a string")
                })
            })
            .collect::<Result<_>>()?,
        Some(Value::Object(map)) => {
            let mut slots: Vec<Option<String>> = vec![None; map.len()];
            for (cat, pos) in map {
                let p = pos
                    .as_u64()
                    .and_then(|p| usize::try_from(p).ok())
                    .filter(|&p| p < slots.len())
                    .ok_or_else(|| {
                        JsonStatError::new(format!("{index_path}.{cat}"), "position out of range")
                    })?;
                if slots[p].replace(cat.clone()).is_some() {
                    return Err(JsonStatError::new(
                        format!("{index_path}.{cat}"),
                        format!("position {p} used twice"),
                    ));
                }
            }
            slots
                .into_iter()
                .map(|s| s.expect("all positions filled"))
                .collect()
        }
        Some(_) => return Err(JsonStatError::new(index_path, "must be an array or object")),
        // a single-category dimension may omit the index
        None => match labels {
            Some(m) if m.len() == 1 => m.keys().cloned().collect(),
            _ => {
                return Err(JsonStatError::new(
                    index_path,
                    "missing (only allowed for single-category dimensions with a label)",
                ))
            }
        },
    };

    let mut categories = Vec::with_capacity(ids.len());
    for cat in ids {
        let label = match labels.and_then(|m| m.get(&cat)) {
            None => cat.clone(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(JsonStatError::new(
                    format!("{cat_path}.label.{cat}"),
                    "must be a string",
                ))
            }
        };
        categories.push(Category::new(cat, label));
    }

    let unit = category
        .get("unit")
        .and_then(Value::as_object)
        .and_then(|units| {
            let mut labels = units
                .values()
                .filter_map(|u| u.get("label").and_then(Value::as_str));
            let first = labels.next()?;
            labels.all(|l| l == first).then(|| first.to_owned())
        });

    let dim = Dimension::new(id, label, categories)
        .map_err(|e| JsonStatError::new(cat_path, e.to_string()))?
        .with_role(role);
    Ok((dim, unit))
}

fn parse_values(value: &Value, total: usize) -> Result<Vec<Option<f64>>> {
    let cell = |v: &Value, path: String| -> Result<Option<f64>> {
        match v {
            Value::Null => Ok(None),
            Value::Number(n) => n
                .as_f64()
                .map(Some)
                .ok_or_else(|| JsonStatError::new(path, "number out of range")),
            _ => Err(JsonStatError::new(path, "must be a number or null")),
        }
    };
    match value {
        Value::Array(arr) => {
            if arr.len() != total {
                return Err(JsonStatError::new(
                    "value",
                    format!("{} values but sizes imply {total}", arr.len()),
                ));
            }
            arr.iter()
                .enumerate()
                .map(|(i, v)| cell(v, format!("value[{i}]")))
                .collect()
        }
        Value::Object(map) => {
            let mut out = vec![None; total];
            for (k, v) in map {
                let i: usize = k.parse().ok().filter(|&i| i < total).ok_or_else(|| {
                    JsonStatError::new(
                        format!("value.{k}"),
                        format!("key is not an index below {total}"),
                    )
                })?;
                out[i] = cell(v, format!("value.{k}"))?;
            }
            Ok(out)
        }
        _ => Err(JsonStatError::new("value", "must be an array or object")),
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some(t.and_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}
