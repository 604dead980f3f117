//! Structural summaries of observed JSON values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Object,
    Array,
    String,
    Number,
    Boolean,
    Null,
}

impl Kind {
    pub fn of(value: &Value) -> Kind {
        match value {
            Value::Object(_) => Kind::Object,
            Value::Array(_) => Kind::Array,
            Value::String(_) => Kind::String,
            Value::Number(_) => Kind::Number,
            Value::Bool(_) => Kind::Boolean,
            Value::Null => Kind::Null,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Object => "object",
            Kind::Array => "array",
            Kind::String => "string",
            Kind::Number => "number",
            Kind::Boolean => "boolean",
            Kind::Null => "null",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub shape: ShapeDescriptor,
    #[serde(default)]
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Object {
        fields: BTreeMap<String, Field>,
    },
    /// `element: None` is the EMPTY marker: only empty arrays were seen.
    Array {
        element: Option<Box<ShapeDescriptor>>,
    },
    String,
    Number,
    Boolean,
    Null,
}

/// Recursive shape of one or more observed values.
///
/// `nullable` records that `null` was seen where another kind was also seen;
/// a shape whose node is [`Node::Null`] only ever saw `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    #[serde(flatten)]
    pub node: Node,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nullable: bool,
    pub samples_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSegment {
    Field(String),
    Element(usize),
}

impl fmt::Display for PathSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathSegment::Field(name) => f.write_str(name),
            PathSegment::Element(i) => write!(f, "[{i}]"),
        }
    }
}

pub fn display_path(path: &[PathSegment]) -> String {
    if path.is_empty() {
        return "$".into();
    }
    path.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(".")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("samples disagree on root kind: {first} vs {other}")]
    HeterogeneousRoot { first: Kind, other: Kind },
    #[error("kind conflict at {}: {left} vs {right}", display_path(.path))]
    KindConflict {
        path: Vec<PathSegment>,
        left: Kind,
        right: Kind,
    },
    #[error("no samples to infer from")]
    NoSamples,
}

/// Outcome of checking a value against a shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Validation {
    Ok,
    Violation {
        path: Vec<PathSegment>,
        expected: Kind,
        /// `None` when a required field is missing.
        found: Option<Kind>,
    },
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }
}

impl ShapeDescriptor {
    pub fn kind(&self) -> Kind {
        match self.node {
            Node::Object { .. } => Kind::Object,
            Node::Array { .. } => Kind::Array,
            Node::String => Kind::String,
            Node::Number => Kind::Number,
            Node::Boolean => Kind::Boolean,
            Node::Null => Kind::Null,
        }
    }

    /// Shape of a single value.
    pub fn of_value(value: &Value) -> Result<Self, ShapeError> {
        Self::of_value_at(value, &mut Vec::new())
    }

    fn of_value_at(value: &Value, path: &mut Vec<PathSegment>) -> Result<Self, ShapeError> {
        let node = match value {
            Value::Null => Node::Null,
            Value::Bool(_) => Node::Boolean,
            Value::Number(_) => Node::Number,
            Value::String(_) => Node::String,
            Value::Array(items) => {
                let mut element: Option<ShapeDescriptor> = None;
                for (i, item) in items.iter().enumerate() {
                    path.push(PathSegment::Element(i));
                    let s = Self::of_value_at(item, path)?;
                    element = Some(match element {
                        None => s,
                        Some(prev) => merge_at(&prev, &s, path)?,
                    });
                    path.pop();
                }
                // Element shapes count arrays, not elements, so repeated
                // elements of one array contribute a single observation.
                if let Some(e) = element.as_mut() {
                    e.reset_samples(1);
                }
                Node::Array {
                    element: element.map(Box::new),
                }
            }
            Value::Object(map) => {
                let mut fields = BTreeMap::new();
                for (k, v) in map {
                    path.push(PathSegment::Field(k.clone()));
                    let shape = Self::of_value_at(v, path)?;
                    path.pop();
                    fields.insert(
                        k.clone(),
                        Field {
                            shape,
                            optional: false,
                        },
                    );
                }
                Node::Object { fields }
            }
        };
        Ok(ShapeDescriptor {
            node,
            nullable: false,
            samples_seen: 1,
        })
    }

    fn reset_samples(&mut self, n: u64) {
        self.samples_seen = n;
        match &mut self.node {
            Node::Object { fields } => fields.values_mut().for_each(|f| f.shape.reset_samples(n)),
            Node::Array { element: Some(e) } => e.reset_samples(n),
            _ => {}
        }
    }

    /// The same shape with every `samples_seen` zeroed, for structural
    /// comparison.
    pub fn structure(&self) -> ShapeDescriptor {
        let mut copy = self.clone();
        copy.reset_samples(0);
        copy
    }

    /// Checks `value`, reporting the first divergence in depth-first,
    /// field-name order. Fields not present in the shape are ignored.
    pub fn validate(&self, value: &Value) -> Validation {
        let mut path = Vec::new();
        self.validate_at(value, &mut path)
    }

    fn validate_at(&self, value: &Value, path: &mut Vec<PathSegment>) -> Validation {
        let found = Kind::of(value);
        if found == Kind::Null && (self.nullable || self.kind() == Kind::Null) {
            return Validation::Ok;
        }
        let mismatch = |path: &Vec<PathSegment>| Validation::Violation {
            path: path.clone(),
            expected: self.kind(),
            found: Some(found),
        };
        match (&self.node, value) {
            (Node::Object { fields }, Value::Object(map)) => {
                for (name, field) in fields {
                    path.push(PathSegment::Field(name.clone()));
                    let verdict = match map.get(name) {
                        Some(v) => field.shape.validate_at(v, path),
                        None if field.optional => Validation::Ok,
                        None => Validation::Violation {
                            path: path.clone(),
                            expected: field.shape.kind(),
                            found: None,
                        },
                    };
                    path.pop();
                    if !verdict.is_ok() {
                        return verdict;
                    }
                }
                Validation::Ok
            }
            (Node::Array { element }, Value::Array(items)) => {
                let Some(element) = element else {
                    return Validation::Ok;
                };
                for (i, item) in items.iter().enumerate() {
                    path.push(PathSegment::Element(i));
                    let verdict = element.validate_at(item, path);
                    path.pop();
                    if !verdict.is_ok() {
                        return verdict;
                    }
                }
                Validation::Ok
            }
            (Node::String, Value::String(_))
            | (Node::Number, Value::Number(_))
            | (Node::Boolean, Value::Bool(_)) => Validation::Ok,
            _ => mismatch(path),
        }
    }

    /// Field shape at `path` (object fields only).
    pub fn field_at(&self, path: &[String]) -> Option<&ShapeDescriptor> {
        let mut cur = self;
        for name in path {
            match &cur.node {
                Node::Object { fields } => cur = &fields.get(name)?.shape,
                _ => return None,
            }
        }
        Some(cur)
    }
}

/// Infers one descriptor that validates every sample.
pub fn infer_shape(samples: &[Value]) -> Result<ShapeDescriptor, ShapeError> {
    let first = samples.first().ok_or(ShapeError::NoSamples)?;
    let root = Kind::of(first);
    if let Some(other) = samples.iter().map(Kind::of).find(|k| *k != root) {
        return Err(ShapeError::HeterogeneousRoot { first: root, other });
    }
    let mut acc = ShapeDescriptor::of_value(first)?;
    for s in &samples[1..] {
        acc = merge_shapes(&acc, &ShapeDescriptor::of_value(s)?)?;
    }
    Ok(acc)
}

/// Least shape validating everything either side validates.
pub fn merge_shapes(
    left: &ShapeDescriptor,
    right: &ShapeDescriptor,
) -> Result<ShapeDescriptor, ShapeError> {
    merge_at(left, right, &mut Vec::new())
}

fn merge_at(
    left: &ShapeDescriptor,
    right: &ShapeDescriptor,
    path: &mut Vec<PathSegment>,
) -> Result<ShapeDescriptor, ShapeError> {
    let samples_seen = left.samples_seen + right.samples_seen;
    // Null on one side only widens the other side.
    match (&left.node, &right.node) {
        (Node::Null, Node::Null) => {
            return Ok(ShapeDescriptor {
                node: Node::Null,
                nullable: false,
                samples_seen,
            });
        }
        (Node::Null, _) => {
            return Ok(ShapeDescriptor {
                node: right.node.clone(),
                nullable: true,
                samples_seen,
            });
        }
        (_, Node::Null) => {
            return Ok(ShapeDescriptor {
                node: left.node.clone(),
                nullable: true,
                samples_seen,
            });
        }
        _ => {}
    }
    let nullable = left.nullable || right.nullable;
    let node = match (&left.node, &right.node) {
        (Node::Object { fields: a }, Node::Object { fields: b }) => {
            let mut fields = BTreeMap::new();
            for name in a.keys().chain(b.keys()) {
                if fields.contains_key(name) {
                    continue;
                }
                let merged = match (a.get(name), b.get(name)) {
                    (Some(fa), Some(fb)) => {
                        path.push(PathSegment::Field(name.clone()));
                        let shape = merge_at(&fa.shape, &fb.shape, path)?;
                        path.pop();
                        Field {
                            shape,
                            optional: fa.optional || fb.optional,
                        }
                    }
                    (Some(f), None) | (None, Some(f)) => Field {
                        shape: f.shape.clone(),
                        optional: true,
                    },
                    (None, None) => unreachable!(),
                };
                fields.insert(name.clone(), merged);
            }
            Node::Object { fields }
        }
        (Node::Array { element: a }, Node::Array { element: b }) => {
            let element = match (a, b) {
                (Some(ea), Some(eb)) => {
                    path.push(PathSegment::Element(0));
                    let e = merge_at(ea, eb, path)?;
                    path.pop();
                    Some(Box::new(e))
                }
                (Some(e), None) | (None, Some(e)) => Some(e.clone()),
                (None, None) => None,
            };
            Node::Array { element }
        }
        (Node::String, Node::String) => Node::String,
        (Node::Number, Node::Number) => Node::Number,
        (Node::Boolean, Node::Boolean) => Node::Boolean,
        _ => {
            return Err(ShapeError::KindConflict {
                path: path.clone(),
                left: left.kind(),
                right: right.kind(),
            });
        }
    };
    Ok(ShapeDescriptor {
        node,
        nullable,
        samples_seen,
    })
}

/// Priority order for payload fields of an envelope object.
pub const ENVELOPE_FIELDS: &[&str] = &["value", "items", "data", "results", "records"];

/// Path to the payload array of an envelope-shaped response.
///
/// A conventional field name wins in [`ENVELOPE_FIELDS`] order; otherwise the
/// only array-kinded field is used. Root arrays have no envelope.
pub fn detect_envelope(shape: &ShapeDescriptor) -> Option<Vec<String>> {
    let Node::Object { fields } = &shape.node else {
        return None;
    };
    let is_array = |f: &Field| f.shape.kind() == Kind::Array;
    for name in ENVELOPE_FIELDS {
        if fields.get(*name).is_some_and(is_array) {
            return Some(vec![(*name).to_owned()]);
        }
    }
    let mut arrays = fields.iter().filter(|(_, f)| is_array(f));
    match (arrays.next(), arrays.next()) {
        (Some((name, _)), None) => Some(vec![name.clone()]),
        _ => None,
    }
}

/// The payload array of a response value, using the same rules as
/// [`detect_envelope`] but on the value itself.
pub fn payload_of(value: &Value) -> Option<&Vec<Value>> {
    match value {
        Value::Array(items) => Some(items),
        Value::Object(map) => {
            for name in ENVELOPE_FIELDS {
                if let Some(Value::Array(items)) = map.get(*name) {
                    return Some(items);
                }
            }
            let mut arrays = map.values().filter_map(Value::as_array);
            match (arrays.next(), arrays.next()) {
                (Some(items), None) => Some(items),
                _ => None,
            }
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn field<'a>(s: &'a ShapeDescriptor, name: &str) -> &'a Field {
        match &s.node {
            Node::Object { fields } => &fields[name],
            other => panic!("not an object: {other:?}"),
        }
    }

    #[test]
    fn odata_envelope_shape() {
        let s = infer_shape(&[json!({"@odata.context": "ctx", "value": [{"id": "m1"}]})]).unwrap();
        assert_eq!(field(&s, "@odata.context").shape.kind(), Kind::String);
        let value = &field(&s, "value").shape;
        let Node::Array { element: Some(e) } = &value.node else {
            panic!("value should be a non-empty array shape");
        };
        assert_eq!(field(e, "id").shape.kind(), Kind::String);
        assert!(!field(e, "id").optional);
        assert_eq!(detect_envelope(&s), Some(vec!["value".to_owned()]));
    }

    #[test]
    fn stable_field_is_required() {
        let s = infer_shape(&[json!({"a": 1}), json!({"a": 2})]).unwrap();
        assert_eq!(field(&s, "a").shape.kind(), Kind::Number);
        assert!(!field(&s, "a").optional);
        assert_eq!(s.samples_seen, 2);
    }

    #[test]
    fn disjoint_fields_become_optional() {
        let samples = [json!({"a": 1}), json!({"b": "x"})];
        let s = infer_shape(&samples).unwrap();
        assert!(field(&s, "a").optional && field(&s, "b").optional);
        assert_eq!(field(&s, "b").shape.kind(), Kind::String);
        for v in &samples {
            assert!(s.validate(v).is_ok());
        }
    }

    #[test]
    fn heterogeneous_root_is_refused() {
        assert_eq!(
            infer_shape(&[json!({"a": 1}), json!([1])]),
            Err(ShapeError::HeterogeneousRoot {
                first: Kind::Object,
                other: Kind::Array
            })
        );
        assert_eq!(infer_shape(&[]), Err(ShapeError::NoSamples));
    }

    #[test]
    fn merge_marks_missing_fields_optional() {
        let a = ShapeDescriptor::of_value(&json!({"a": 1})).unwrap();
        let ab = ShapeDescriptor::of_value(&json!({"a": 1, "b": true})).unwrap();
        let m = merge_shapes(&a, &ab).unwrap();
        assert!(!field(&m, "a").optional);
        assert!(field(&m, "b").optional);
        assert!(m.validate(&json!({"a": 3})).is_ok());
        assert!(m.validate(&json!({"a": 3, "b": false})).is_ok());
    }

    #[test]
    fn merge_is_idempotent_on_structure() {
        let s = ShapeDescriptor::of_value(&json!({"a": [1, 2], "b": {"c": null}})).unwrap();
        let m = merge_shapes(&s, &s).unwrap();
        assert_eq!(m.structure(), s.structure());
        assert_eq!(m.samples_seen, 2);
    }

    #[test]
    fn merge_kind_conflict() {
        let arr = ShapeDescriptor::of_value(&json!(["x"])).unwrap();
        let obj = ShapeDescriptor::of_value(&json!({"x": 1})).unwrap();
        assert!(matches!(
            merge_shapes(&arr, &obj),
            Err(ShapeError::KindConflict {
                left: Kind::Array,
                right: Kind::Object,
                ..
            })
        ));
    }

    #[test]
    fn null_and_empty_are_degenerate() {
        let n = ShapeDescriptor::of_value(&json!(null)).unwrap();
        let s = ShapeDescriptor::of_value(&json!("x")).unwrap();
        let m = merge_shapes(&n, &s).unwrap();
        assert_eq!(m.kind(), Kind::String);
        assert!(m.nullable);
        let empty = ShapeDescriptor::of_value(&json!([])).unwrap();
        assert!(empty.validate(&json!([1, "a", {}])).is_ok());
        let full = ShapeDescriptor::of_value(&json!([1])).unwrap();
        let m = merge_shapes(&empty, &full).unwrap();
        assert!(m.validate(&json!([])).is_ok());
        assert!(!m.validate(&json!(["s"])).is_ok());
    }

    #[test]
    fn envelope_heuristic_order() {
        let root_array = infer_shape(&[json!([{"id": 1}])]).unwrap();
        assert_eq!(detect_envelope(&root_array), None);
        let two = infer_shape(&[json!({"errors": [], "value": [1]})]).unwrap();
        assert_eq!(detect_envelope(&two), Some(vec!["value".into()]));
        let unique = infer_shape(&[json!({"meta": 1, "entries": []})]).unwrap();
        assert_eq!(detect_envelope(&unique), Some(vec!["entries".into()]));
        let ambiguous = infer_shape(&[json!({"a": [], "b": []})]).unwrap();
        assert_eq!(detect_envelope(&ambiguous), None);
        let none = infer_shape(&[json!({"a": 1})]).unwrap();
        assert_eq!(detect_envelope(&none), None);
    }

    #[test]
    fn violation_reports_first_divergence() {
        let lock = infer_shape(&[json!({"@odata.context": "c", "value": [{"id": "m1"}]})]).unwrap();
        assert_eq!(
            lock.validate(&json!([{"id": "m1"}])),
            Validation::Violation {
                path: vec![],
                expected: Kind::Object,
                found: Some(Kind::Array)
            }
        );
        assert_eq!(
            lock.validate(&json!({"@odata.context": "c", "value": [{"id": "m2"}, "oops"]})),
            Validation::Violation {
                path: vec![PathSegment::Field("value".into()), PathSegment::Element(1)],
                expected: Kind::Object,
                found: Some(Kind::String)
            }
        );
        assert_eq!(
            lock.validate(&json!({"value": []})),
            Validation::Violation {
                path: vec![PathSegment::Field("@odata.context".into())],
                expected: Kind::String,
                found: None
            }
        );
    }
}
