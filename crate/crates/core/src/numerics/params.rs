use std::collections::HashMap;

use rand::Rng;

use super::{NumericsError, Scalar, Tape, Tensor, Var};

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::Contract(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    /// Inserts a seeded `uniform(-bound, bound)` tensor.
    pub fn insert_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut R) -> Result<(), NumericsError> {
        self.insert(name, Tensor::uniform(shape, bound, rng))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor on the tape as a borrowed trainable leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p, T>) -> Bound<'p> {
        let vars = self.tensors.iter().map(|t| tape.param(t)).collect();
        Bound { index: &self.index, vars }
    }

    /// Wraps handles produced elsewhere (e.g. by [`grad_check`](super::grad_check)) in parameter order.
    pub fn bound_from(&self, vars: &[Var]) -> Result<Bound<'_>, NumericsError> {
        if vars.len() != self.len() {
            return Err(NumericsError::Contract(format!("{} handles for {} parameters", vars.len(), self.len())));
        }
        Ok(Bound { index: &self.index, vars: vars.to_vec() })
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect(), index: self.index.clone() }
    }
}

/// Tape handles of a bound [`ParamSet`], aligned with its order.
#[derive(Debug, Clone)]
pub struct Bound<'a> {
    index: &'a HashMap<String, usize>,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Result<Var, NumericsError> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| NumericsError::Contract(format!("unknown parameter {name}")))
    }

    pub fn opt(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
