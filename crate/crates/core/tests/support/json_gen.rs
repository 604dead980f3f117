//! Random JSON generators shared by the probe suites.

#![allow(dead_code)]

use proptest::prelude::*;
use serde_json::{Map, Value, json};

/// A type template; values drawn from one template always merge cleanly.
#[derive(Debug, Clone)]
pub enum Tpl {
    Str,
    Num,
    Bool,
    Null,
    Arr(Box<Tpl>),
    Obj(Vec<(String, Tpl, bool)>),
}

pub fn tpl() -> impl Strategy<Value = Tpl> {
    let leaf = prop_oneof![
        Just(Tpl::Str),
        Just(Tpl::Num),
        Just(Tpl::Bool),
        Just(Tpl::Null)
    ];
    leaf.prop_recursive(4, 32, 5, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Tpl::Arr(Box::new(t))),
            prop::collection::btree_map("[a-e]{1,2}", (inner, any::<bool>()), 0..5)
                .prop_map(|m| Tpl::Obj(m.into_iter().map(|(k, (t, o))| (k, t, o)).collect())),
        ]
    })
}

/// A value conforming to `t`. Optional fields may be absent and any non-root
/// position may be null.
pub fn value_of(t: &Tpl, root: bool) -> BoxedStrategy<Value> {
    let base: BoxedStrategy<Value> = match t {
        Tpl::Str => "[a-z]{0,6}".prop_map(Value::String).boxed(),
        Tpl::Num => any::<i32>().prop_map(|n| json!(n)).boxed(),
        Tpl::Bool => any::<bool>().prop_map(Value::Bool).boxed(),
        Tpl::Null => Just(Value::Null).boxed(),
        Tpl::Arr(e) => prop::collection::vec(value_of(e, false), 0..4)
            .prop_map(Value::Array)
            .boxed(),
        Tpl::Obj(fields) => {
            let parts: Vec<BoxedStrategy<Option<(String, Value)>>> = fields
                .iter()
                .map(|(k, ft, optional)| {
                    let k = k.clone();
                    let present = value_of(ft, false).prop_map(move |v| Some((k.clone(), v)));
                    if *optional {
                        prop_oneof![Just(None), present].boxed()
                    } else {
                        present.boxed()
                    }
                })
                .collect();
            parts
                .prop_map(|kvs| Value::Object(kvs.into_iter().flatten().collect::<Map<_, _>>()))
                .boxed()
        }
    };
    if root {
        base
    } else {
        prop_oneof![4 => base, 1 => Just(Value::Null)].boxed()
    }
}

pub fn sample_set() -> impl Strategy<Value = Vec<Value>> {
    tpl().prop_flat_map(|t| prop::collection::vec(value_of(&t, true), 4..12))
}

pub fn arbitrary_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i16>().prop_map(|n| json!(n)),
        "[a-z]{0,4}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-c]", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}
