//! Shared helpers: run the built binary and check JSON against the schemas.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

fn finish(output: Output) -> Run {
    Run {
        code: output.status.code().expect("exit code"),
        stdout: String::from_utf8(output.stdout).unwrap(),
        stderr: String::from_utf8(output.stderr).unwrap(),
    }
}

/// Runs the binary with `UPLIFT_SGT_SEED` cleared.
pub fn run(args: &[&str]) -> Run {
    finish(Command::new(env!("CARGO_BIN_EXE_uplift-sgt")).args(args).env_remove("UPLIFT_SGT_SEED").output().unwrap())
}

pub fn run_with_seed_env(args: &[&str], seed: &str) -> Run {
    finish(Command::new(env!("CARGO_BIN_EXE_uplift-sgt")).args(args).env("UPLIFT_SGT_SEED", seed).output().unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn schema(name: &str) -> Value {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "schemas", &format!("{name}.schema.json")].iter().collect();
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Violations of schema `name` by `doc`.
pub fn violations(name: &str, doc: &Value) -> Vec<String> {
    let root = schema(name);
    let mut errors = vec![];
    check(&root, &root, doc, "$", &mut errors);
    errors
}

/// Panics with every violation when `doc` does not match schema `name`.
pub fn assert_valid(name: &str, doc: &Value) {
    let errors = violations(name, doc);
    assert!(errors.is_empty(), "{name}: {}", errors.join("; "));
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        other => panic!("unsupported type {other}"),
    }
}

fn resolve<'a>(root: &'a Value, reference: &str) -> &'a Value {
    let name = reference.strip_prefix("#/$defs/").unwrap_or_else(|| panic!("unsupported $ref {reference}"));
    &root["$defs"][name]
}

/// Covers the keywords the bundled schemas use.
fn check(root: &Value, schema: &Value, v: &Value, at: &str, errors: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        check(root, resolve(root, r), v, at, errors);
    }
    if let Some(options) = schema.get("anyOf").and_then(Value::as_array) {
        let ok = options.iter().any(|s| {
            let mut sub = vec![];
            check(root, s, v, at, &mut sub);
            sub.is_empty()
        });
        if !ok {
            errors.push(format!("{at}: matches no anyOf branch"));
        }
    }
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, v),
            Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
            _ => panic!("bad type keyword"),
        };
        if !ok {
            errors.push(format!("{at}: expected type {t}, got {v}"));
            return;
        }
    }
    if let Some(c) = schema.get("const") {
        if c != v {
            errors.push(format!("{at}: expected {c}, got {v}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            errors.push(format!("{at}: {v} not in enum"));
        }
    }
    if let Some(x) = v.as_f64() {
        let bound = |k: &str| schema.get(k).and_then(Value::as_f64);
        if bound("minimum").is_some_and(|m| x < m)
            || bound("maximum").is_some_and(|m| x > m)
            || bound("exclusiveMinimum").is_some_and(|m| x <= m)
            || bound("exclusiveMaximum").is_some_and(|m| x >= m)
        {
            errors.push(format!("{at}: {x} out of range"));
        }
    }
    if let Some(items) = v.as_array() {
        let count = |k: &str| schema.get(k).and_then(Value::as_u64).map(|n| n as usize);
        if count("minItems").is_some_and(|m| items.len() < m) || count("maxItems").is_some_and(|m| items.len() > m) {
            errors.push(format!("{at}: {} items out of range", items.len()));
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(root, item_schema, item, &format!("{at}[{i}]"), errors);
            }
        }
    }
    if let Some(object) = v.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !object.contains_key(key.as_str().unwrap()) {
                errors.push(format!("{at}: missing {key}"));
            }
        }
        if let Some(m) = schema.get("minProperties").and_then(Value::as_u64) {
            if (object.len() as u64) < m {
                errors.push(format!("{at}: fewer than {m} properties"));
            }
        }
        for (key, value) in object {
            let path = format!("{at}.{key}");
            match props.and_then(|p| p.get(key)) {
                Some(s) => check(root, s, value, &path, errors),
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => errors.push(format!("{path}: not allowed")),
                    Some(s @ Value::Object(_)) => check(root, s, value, &path, errors),
                    _ => {}
                },
            }
        }
    }
}
