use std::collections::{BTreeMap, HashMap};

use super::{Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
    pub grad: Option<Tensor>,
}

/// Named parameters with per-tensor trainable flags. Iteration order is by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGroup {
    params: BTreeMap<String, Param>,
}

/// Graph handles for every tensor of a [`ParamGroup`], as bound by [`ParamGroup::bind`].
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    vars: HashMap<String, Var>,
}

impl Bindings {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::State(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl ParamGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::State(format!("duplicate parameter name `{name}`")));
        }
        self.params.insert(
            name,
            Param {
                value,
                trainable,
                grad: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::State(format!("no parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.params.values_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// Put every tensor on `graph`: trainable ones as variables, frozen ones as constants.
    pub fn bind(&self, graph: &mut Graph) -> Result<Bindings> {
        let mut vars = HashMap::with_capacity(self.params.len());
        for (name, p) in &self.params {
            let v = graph.leaf(p.value.clone(), p.trainable)?;
            vars.insert(name.clone(), v);
        }
        Ok(Bindings { vars })
    }

    /// Add the gradients found in `grads` onto each trainable tensor's `grad`.
    pub fn accumulate_grads(&mut self, bindings: &Bindings, grads: &Gradients) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let Some(g) = grads.get(bindings.var(name)?) else {
                continue;
            };
            match &mut p.grad {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, b)| *a += b),
                None => p.grad = Some(Tensor::new(p.value.shape().to_vec(), g.to_vec())?),
            }
        }
        Ok(())
    }

    /// Multiply every stored gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in self.params.values_mut() {
            if let Some(g) = &mut p.grad {
                g.data_mut().iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(|p| p.grad = None);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Holds first/second moments keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of every trainable tensor in `group`. Frozen tensors are not touched.
    pub fn step(&mut self, group: &mut ParamGroup) -> Result<()> {
        if let Some((name, _)) = group.iter().find(|(_, p)| p.trainable && p.grad.is_none()) {
            return Err(Error::State(format!(
                "trainable parameter `{name}` has no gradient"
            )));
        }
        self.steps += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for (name, p) in group.iter_mut() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let n = p.value.numel();
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            for (((x, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of [`Adam::step`].
pub fn adam_step(group: &mut ParamGroup, state: &mut Adam) -> Result<()> {
    state.step(group)
}
