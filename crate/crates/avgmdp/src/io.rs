//! JSON model files.
//!
//! ```json
//! {"name": "...", "states": ["1", "2"],
//!  "actions": {"1": ["a", "b"], "2": ["c"]},
//!  "kernel": {"1,a": [0, 1], ...},
//!  "reward_mean": {"1,a": 0.5, ...},
//!  "kernel_space": {"1,a": "known", ...}}
//! ```
//! Probabilities may be numbers or decimal strings. `kernel_space` is optional
//! and defaults to `known`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{MdpError, Result};
use crate::model::{KernelSpace, MdpBuilder, MdpModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self, what: &str) -> Result<f64> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| MdpError::InvalidModel(format!("{what}: cannot parse {s:?} as a number"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    #[serde(default)]
    name: String,
    states: Vec<String>,
    actions: BTreeMap<String, Vec<String>>,
    kernel: BTreeMap<String, Vec<Number>>,
    reward_mean: BTreeMap<String, Number>,
    #[serde(default)]
    kernel_space: BTreeMap<String, KernelSpace>,
}

#[derive(Debug, Serialize)]
struct ModelFileOut<'a> {
    name: &'a str,
    states: &'a [String],
    actions: Map<String, Value>,
    kernel: Map<String, Value>,
    reward_mean: Map<String, Value>,
    kernel_space: Map<String, Value>,
}

pub fn model_from_json(text: &str) -> Result<MdpModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    let labels: Vec<&str> = file.states.iter().map(|s| s.as_str()).collect();
    for (i, l) in labels.iter().enumerate() {
        if l.contains(',') {
            return Err(MdpError::InvalidModel(format!("state label {l:?} contains a comma")));
        }
        if labels[..i].contains(l) {
            return Err(MdpError::InvalidModel(format!("duplicate state label {l:?}")));
        }
    }
    for key in file.actions.keys() {
        if !labels.contains(&key.as_str()) {
            return Err(MdpError::InvalidModel(format!("actions declared for unknown state {key:?}")));
        }
    }
    let mut builder = MdpBuilder::with_states(file.name.clone(), file.states.clone());
    let mut spaces = Vec::new();
    let mut expected = Vec::new();
    for (s, label) in file.states.iter().enumerate() {
        let actions = file.actions.get(label).cloned().unwrap_or_default();
        for a in actions {
            let key = format!("{label},{a}");
            let row = file
                .kernel
                .get(&key)
                .ok_or_else(|| MdpError::InvalidModel(format!("missing kernel for {key}")))?
                .iter()
                .map(|x| x.value(&key))
                .collect::<Result<Vec<f64>>>()?;
            let r = file
                .reward_mean
                .get(&key)
                .ok_or_else(|| MdpError::InvalidModel(format!("missing reward_mean for {key}")))?
                .value(&key)?;
            spaces.push(file.kernel_space.get(&key).copied().unwrap_or_default());
            builder = builder.action(s, &a, row, r);
            expected.push(key);
        }
    }
    for key in file.kernel.keys().chain(file.reward_mean.keys()).chain(file.kernel_space.keys()) {
        if !expected.contains(key) {
            return Err(MdpError::InvalidModel(format!("entry for undeclared pair {key}")));
        }
    }
    let mut model = builder.build()?;
    for (p, sp) in spaces.into_iter().enumerate() {
        model.set_space_unchecked(p, sp);
    }
    Ok(model)
}

pub fn model_to_json(model: &MdpModel) -> Value {
    let mut actions = Map::new();
    let mut kernel = Map::new();
    let mut reward = Map::new();
    let mut space = Map::new();
    for s in 0..model.n_states() {
        let labels: Vec<Value> = model.pairs_of(s).map(|p| Value::from(model.action_label(p))).collect();
        actions.insert(model.state_label(s).to_string(), Value::Array(labels));
    }
    for p in 0..model.n_pairs() {
        let key = format!("{},{}", model.state_label(model.state_of(p)), model.action_label(p));
        kernel.insert(key.clone(), Value::from(model.kernel(p).to_vec()));
        reward.insert(key.clone(), Value::from(model.reward(p)));
        space.insert(key, serde_json::to_value(model.space(p)).expect("enum serializes"));
    }
    let out = ModelFileOut {
        name: model.name(),
        states: model.state_labels(),
        actions,
        kernel,
        reward_mean: reward,
        kernel_space: space,
    };
    serde_json::to_value(out).expect("model serializes")
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MdpModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

/// Pair-keyed values as a JSON object `{"state,action": value}`.
pub fn pair_map(model: &MdpModel, values: &[f64]) -> Value {
    let mut m = Map::new();
    for (p, v) in values.iter().enumerate() {
        m.insert(model.pair_label(crate::model::PairId(p)), Value::from(*v));
    }
    Value::Object(m)
}

/// Reads a pair-keyed measure; missing pairs get zero.
pub fn pair_values_from_json(model: &MdpModel, value: &Value) -> Result<Vec<f64>> {
    let obj = value
        .as_object()
        .ok_or_else(|| MdpError::InvalidConfig("expected an object keyed by \"state,action\"".into()))?;
    let mut out = vec![0.0; model.n_pairs()];
    for (k, v) in obj {
        let p = model
            .pair_by_label(k)
            .ok_or_else(|| MdpError::InvalidConfig(format!("unknown pair {k}")))?;
        out[p] = v
            .as_f64()
            .ok_or_else(|| MdpError::InvalidConfig(format!("value of {k} is not a number")))?;
    }
    Ok(out)
}

pub fn pair_list(model: &MdpModel, pairs: &[usize]) -> Value {
    Value::from(pairs.iter().map(|&p| model.pair_label(crate::model::PairId(p))).collect::<Vec<_>>())
}
