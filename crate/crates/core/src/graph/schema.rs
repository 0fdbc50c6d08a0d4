use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Primitive field types a stream schema may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Int,
    Float,
    Text,
    Bool,
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FieldType::Int => "int",
            FieldType::Float => "float",
            FieldType::Text => "text",
            FieldType::Bool => "bool",
        };
        f.write_str(s)
    }
}

/// A single field value carried by a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn field_type(&self) -> FieldType {
        match self {
            Value::Int(_) => FieldType::Int,
            Value::Float(_) => FieldType::Float,
            Value::Text(_) => FieldType::Text,
            Value::Bool(_) => FieldType::Bool,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric view; ints widen to floats.
    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(*v),
            _ => None,
        }
    }

    /// Converts to a JSON value. Floats keep their float representation.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(v) => serde_json::Value::from(*v),
            Value::Float(v) => serde_json::Value::from(*v),
            Value::Text(v) => serde_json::Value::from(v.clone()),
            Value::Bool(v) => serde_json::Value::from(*v),
        }
    }

    /// Inverse of [`Value::to_json`]. Integer-valued JSON numbers become
    /// `Int`, everything else numeric becomes `Float`.
    pub fn from_json(json: &serde_json::Value) -> Option<Value> {
        match json {
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(Value::Int(i))
                } else {
                    n.as_f64().map(Value::Float)
                }
            }
            serde_json::Value::String(s) => Some(Value::Text(s.clone())),
            _ => None,
        }
    }

    /// Converts a JSON value into the given field type, widening ints to
    /// floats where the schema asks for a float.
    pub fn from_json_typed(json: &serde_json::Value, ty: FieldType) -> Option<Value> {
        match (ty, json) {
            (FieldType::Int, serde_json::Value::Number(n)) => n.as_i64().map(Value::Int),
            (FieldType::Float, serde_json::Value::Number(n)) => n.as_f64().map(Value::Float),
            (FieldType::Text, serde_json::Value::String(s)) => Some(Value::Text(s.clone())),
            (FieldType::Bool, serde_json::Value::Bool(b)) => Some(Value::Bool(*b)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
}

/// Ordered, named set of typed fields. Declaration order is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub fields: Vec<Field>,
}

impl Schema {
    pub fn new(name: impl Into<String>) -> Self {
        Schema {
            name: name.into(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, name: impl Into<String>, ty: FieldType) -> Self {
        self.fields.push(Field {
            name: name.into(),
            ty,
        });
        self
    }

    pub fn index_of(&self, field: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == field)
    }

    pub fn field_type(&self, field: &str) -> Option<FieldType> {
        self.fields.iter().find(|f| f.name == field).map(|f| f.ty)
    }

    /// Problems with the schema itself: empty or duplicate field names.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.fields.is_empty() {
            out.push(format!("schema {} has no fields", self.name));
        }
        let mut seen = BTreeSet::new();
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) {
                out.push(format!("schema {} repeats field {}", self.name, f.name));
            }
        }
        out
    }

    /// Checks that `values` conform to this schema: arity, types and finite floats.
    pub fn check(&self, values: &[Value]) -> Result<(), String> {
        if values.len() != self.fields.len() {
            return Err(format!(
                "schema {} expects {} values, got {}",
                self.name,
                self.fields.len(),
                values.len()
            ));
        }
        for (f, v) in self.fields.iter().zip(values) {
            if v.field_type() != f.ty {
                return Err(format!(
                    "field {}.{} expects {}, got {}",
                    self.name,
                    f.name,
                    f.ty,
                    v.field_type()
                ));
            }
            if let Value::Float(x) = v {
                if !x.is_finite() {
                    return Err(format!("field {}.{} is not finite", self.name, f.name));
                }
            }
        }
        Ok(())
    }

    /// Compact `name:type,...` signature used for fingerprints.
    pub fn signature(&self) -> String {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|f| format!("{}:{}", f.name, f.ty))
            .collect();
        format!("{}({})", self.name, parts.join(","))
    }

    /// Builds a JSON object from values in schema order.
    pub fn to_json(&self, values: &[Value]) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (f, v) in self.fields.iter().zip(values) {
            map.insert(f.name.clone(), v.to_json());
        }
        serde_json::Value::Object(map)
    }

    /// Extracts values in schema order from a JSON object.
    pub fn from_json(&self, doc: &serde_json::Value) -> Result<Vec<Value>, String> {
        self.fields
            .iter()
            .map(|f| {
                let raw = doc
                    .get(&f.name)
                    .ok_or_else(|| format!("missing field {}.{}", self.name, f.name))?;
                Value::from_json_typed(raw, f.ty)
                    .ok_or_else(|| format!("field {}.{} is not a valid {}", self.name, f.name, f.ty))
            })
            .collect()
    }
}
