use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensorgrad::{Graph, Real, Tensor, Var};

/// How a parameter is filled at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitKind {
    /// Uniform in `[-bound, bound)`.
    Uniform(f64),
    Const(f64),
}

/// Declared name, shape and initializer of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamSpec {
    pub fn new(name: String, shape: &[usize], init: InitKind) -> Self {
        ParamSpec { name, shape: shape.to_vec(), init }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<R> {
    names: Vec<String>,
    tensors: Vec<Tensor<R>>,
    index: HashMap<String, usize>,
}

impl<R: Real> Default for ParamStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    /// Builds every spec in order from one seeded stream.
    pub fn from_specs(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for spec in specs {
            let t = match spec.init {
                InitKind::Uniform(bound) => {
                    let n = spec.numel();
                    let data = (0..n).map(|_| R::lit(rng.gen_range(-bound..bound))).collect();
                    Tensor::new(&spec.shape, data)?
                }
                InitKind::Const(v) => Tensor::full(&spec.shape, R::lit(v))?,
            };
            store.insert(&spec.name, t)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: &str, t: Tensor<R>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<R>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<R>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn total_numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Checks that names, order and shapes agree with `specs` exactly.
    pub fn validate(&self, specs: &[ParamSpec]) -> Result<()> {
        if specs.len() != self.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.len()
            )));
        }
        for (spec, (name, t)) in specs.iter().zip(self.iter()) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Places every tensor into `g`, trainable or constant.
    pub fn bind(&self, g: &Graph<R>, trainable: bool) -> BoundParams<R> {
        let vars = self.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect();
        BoundParams { vars, index: self.index.clone() }
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Parameters placed in a graph, looked up by name.
pub struct BoundParams<R: Real> {
    vars: Vec<Var<R>>,
    index: HashMap<String, usize>,
}

impl<R: Real> BoundParams<R> {
    /// Pairs `names[i]` with `vars[i]`.
    pub fn from_vars(names: &[String], vars: Vec<Var<R>>) -> Result<Self> {
        if names.len() != vars.len() {
            return Err(Error::dim(format!("{} names for {} vars", names.len(), vars.len())));
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(BoundParams { vars, index })
    }

    pub fn var(&self, name: &str) -> Result<&Var<R>> {
        self.index
            .get(name)
            .map(|&i| &self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var<R>] {
        &self.vars
    }

    /// Accumulated gradients in store order; zeros where none arrived.
    pub fn grads(&self) -> Vec<Tensor<R>> {
        self.vars
            .iter()
            .map(|v| {
                v.grad_tensor()
                    .unwrap_or_else(|| Tensor::zeros(v.shape()).expect("valid shape"))
            })
            .collect()
    }
}
