use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use crate::frontend::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ownership {
    Owning,
    NotOwning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpec {
    pub must_call: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub ownership: Ownership,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsuresSpec {
    pub field: String,
    pub methods: Vec<String>,
    pub provenance: Provenance,
}

/// Resource-management specifications for the user classes of one program.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpecSet {
    pub class_mustcall: BTreeMap<String, ClassSpec>,
    /// Keyed by (class, field).
    pub field_ownership: BTreeMap<(String, String), FieldSpec>,
    /// Keyed by (class, method).
    pub method_ensures: BTreeMap<(String, String), Vec<EnsuresSpec>>,
    pub param_owning: BTreeSet<(MethodKey, usize)>,
    pub return_notowning: BTreeSet<MethodKey>,
}

impl SpecSet {
    /// The specifications written in the source.
    pub fn declared(program: &Program) -> Self {
        let mut s = SpecSet::default();
        for c in &program.classes {
            for a in &c.annotations {
                if let AnnotationKind::MustCall(ms) = &a.kind {
                    s.class_mustcall.insert(c.name.clone(), ClassSpec { must_call: ms.clone(), provenance: a.provenance });
                }
            }
            for f in &c.fields {
                for a in &f.annotations {
                    let ownership = match a.kind {
                        AnnotationKind::Owning => Ownership::Owning,
                        AnnotationKind::NotOwning => Ownership::NotOwning,
                        _ => continue,
                    };
                    s.field_ownership.insert((c.name.clone(), f.name.clone()), FieldSpec { ownership, provenance: a.provenance });
                }
            }
            for (key, m) in c.members() {
                for (i, p) in m.params.iter().enumerate() {
                    if p.annotations.iter().any(|a| a.kind == AnnotationKind::Owning) {
                        s.param_owning.insert((key.clone(), i));
                    }
                }
                for a in &m.annotations {
                    match &a.kind {
                        AnnotationKind::NotOwning => {
                            s.return_notowning.insert(key.clone());
                        }
                        AnnotationKind::EnsuresCalledMethods { field, methods } => {
                            s.method_ensures.entry((c.name.clone(), m.name.clone())).or_default().push(EnsuresSpec {
                                field: field.clone(),
                                methods: methods.clone(),
                                provenance: a.provenance,
                            });
                        }
                        _ => {}
                    }
                }
            }
        }
        s
    }

    pub fn class_must_call(&self, class: &str) -> Option<&[String]> {
        self.class_mustcall.get(class).map(|c| c.must_call.as_slice())
    }

    pub fn is_owning_field(&self, class: &str, field: &str) -> bool {
        matches!(self.field_ownership.get(&(class.to_string(), field.to_string())), Some(FieldSpec { ownership: Ownership::Owning, .. }))
    }

    pub fn ensures(&self, class: &str, method: &str) -> &[EnsuresSpec] {
        self.method_ensures.get(&(class.to_string(), method.to_string())).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True if the set holds no entries.
    pub fn is_empty(&self) -> bool {
        self.class_mustcall.is_empty()
            && self.field_ownership.is_empty()
            && self.method_ensures.is_empty()
            && self.param_owning.is_empty()
            && self.return_notowning.is_empty()
    }

    /// Entries that are not declared in the source.
    pub fn inferred_only(&self) -> SpecSet {
        let mut s = SpecSet::default();
        for (k, v) in &self.class_mustcall {
            if v.provenance != Provenance::Declared {
                s.class_mustcall.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in &self.field_ownership {
            if v.provenance != Provenance::Declared {
                s.field_ownership.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in &self.method_ensures {
            let es: Vec<EnsuresSpec> = v.iter().filter(|e| e.provenance != Provenance::Declared).cloned().collect();
            if !es.is_empty() {
                s.method_ensures.insert(k.clone(), es);
            }
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let mut classes = Map::new();
        for (c, spec) in &self.class_mustcall {
            classes.insert(c.clone(), json!({ "mustCall": spec.must_call }));
        }
        let mut fields = Map::new();
        for ((c, f), spec) in &self.field_ownership {
            let o = match spec.ownership {
                Ownership::Owning => "owning",
                Ownership::NotOwning => "notowning",
            };
            fields.insert(format!("{c}.{f}"), json!(o));
        }
        let mut ensures = Map::new();
        for ((c, m), es) in &self.method_ensures {
            let list: Vec<Value> = es.iter().map(|e| json!({ "field": e.field, "methods": e.methods })).collect();
            ensures.insert(format!("{c}.{m}"), Value::Array(list));
        }
        json!({ "classes": classes, "fields": fields, "ensures": ensures })
    }

    /// Reads the JSON written by [`SpecSet::to_json`]. Entries are marked inferred.
    pub fn from_json(v: &Value) -> Result<SpecSet, String> {
        let mut s = SpecSet::default();
        let obj = |v: Option<&Value>, what: &str| -> Result<Map<String, Value>, String> {
            match v {
                None => Ok(Map::new()),
                Some(Value::Object(m)) => Ok(m.clone()),
                Some(_) => Err(format!("`{what}` must be an object")),
            }
        };
        let strings = |v: &Value| -> Result<Vec<String>, String> {
            v.as_array()
                .ok_or("expected an array of strings")?
                .iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(|| "expected a string".to_string()))
                .collect()
        };
        let split =
            |k: &str| -> Result<(String, String), String> { k.split_once('.').map(|(a, b)| (a.to_string(), b.to_string())).ok_or(format!("bad key `{k}`")) };
        for (c, spec) in obj(v.get("classes"), "classes")? {
            let ms = strings(spec.get("mustCall").ok_or(format!("class `{c}` lacks mustCall"))?)?;
            s.class_mustcall.insert(c, ClassSpec { must_call: ms, provenance: Provenance::Inferred });
        }
        for (k, o) in obj(v.get("fields"), "fields")? {
            let ownership = match o.as_str() {
                Some("owning") => Ownership::Owning,
                Some("notowning") => Ownership::NotOwning,
                _ => return Err(format!("bad ownership for `{k}`")),
            };
            s.field_ownership.insert(split(&k)?, FieldSpec { ownership, provenance: Provenance::Inferred });
        }
        for (k, list) in obj(v.get("ensures"), "ensures")? {
            let mut es = Vec::new();
            for e in list.as_array().ok_or(format!("`{k}` must be an array"))? {
                let field = e.get("field").and_then(Value::as_str).ok_or(format!("`{k}` entry lacks field"))?;
                let methods = strings(e.get("methods").ok_or(format!("`{k}` entry lacks methods"))?)?;
                es.push(EnsuresSpec { field: field.to_string(), methods, provenance: Provenance::Inferred });
            }
            s.method_ensures.insert(split(&k)?, es);
        }
        Ok(s)
    }

    /// Adds every entry of `other` that `self` lacks.
    pub fn merge_missing(&mut self, other: &SpecSet) {
        for (k, v) in &other.class_mustcall {
            self.class_mustcall.entry(k.clone()).or_insert_with(|| v.clone());
        }
        for (k, v) in &other.field_ownership {
            self.field_ownership.entry(k.clone()).or_insert_with(|| v.clone());
        }
        for (k, v) in &other.method_ensures {
            let es = self.method_ensures.entry(k.clone()).or_default();
            for e in v {
                if !es.iter().any(|x| x.field == e.field) {
                    es.push(e.clone());
                }
            }
        }
        self.param_owning.extend(other.param_owning.iter().cloned());
        self.return_notowning.extend(other.return_notowning.iter().cloned());
    }
}
