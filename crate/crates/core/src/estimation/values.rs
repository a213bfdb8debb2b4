use std::fmt;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::EpisodeKey;
use crate::liegroup::sek3::{self, TangentK};
use crate::liegroup::SEK3;

/// Variable identifier in a factor graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Key {
    /// Base state (R, p, v) of event `n`.
    Nav(u64),
    /// IMU bias `[b_g; b_a]`; one shared key or one per event.
    Bias(u64),
    /// Navigation-frame foothold of one contact episode.
    Landmark(EpisodeKey),
    /// Generic state, e.g. the full filter state in a graph update.
    State(u64),
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Nav(i) => write!(f, "x{i}"),
            Key::Bias(i) => write!(f, "b{i}"),
            Key::Landmark(e) => write!(f, "l{}.{}", e.foot, e.episode),
            Key::State(i) => write!(f, "s{i}"),
        }
    }
}

/// A value on one of the supported manifolds.
#[derive(Debug, Clone, PartialEq)]
pub enum Variable {
    Group(SEK3),
    Vector(DVector<f64>),
}

impl Variable {
    pub fn dim(&self) -> usize {
        match self {
            Variable::Group(x) => x.tangent_dim(),
            Variable::Vector(v) => v.len(),
        }
    }

    pub fn retract(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "retraction of a {}-dim variable by a {}-vector",
                self.dim(),
                delta.len()
            )));
        }
        Ok(match self {
            Variable::Group(x) => Variable::Group(x.retract(&TangentK::from_vector(delta.clone())?)?),
            Variable::Vector(v) => Variable::Vector(v + delta),
        })
    }

    /// Local coordinates of `other` around `self`.
    pub fn local(&self, other: &Self) -> Result<DVector<f64>> {
        match (self, other) {
            (Variable::Group(a), Variable::Group(b)) => Ok(a.local(b)?.into_vector()),
            (Variable::Vector(a), Variable::Vector(b)) if a.len() == b.len() => Ok(b - a),
            _ => Err(Error::Dimension("local coordinates between incompatible variables".into())),
        }
    }

    /// Derivative of `local(self, other ⊕ δ)` with respect to `δ` at zero.
    pub fn local_jacobian(&self, local: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(match self {
            Variable::Group(_) => sek3::right_jacobian_inverse(&TangentK::from_vector(local.clone())?),
            Variable::Vector(v) => DMatrix::identity(v.len(), v.len()),
        })
    }

    pub fn as_group(&self) -> Option<&SEK3> {
        match self {
            Variable::Group(x) => Some(x),
            Variable::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            Variable::Vector(v) => Some(v),
            Variable::Group(_) => None,
        }
    }
}

/// Keyed variable assignment, iterated in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Values {
    map: IndexMap<Key, Variable>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: Key, value: Variable) -> Option<Variable> {
        self.map.insert(key, value)
    }

    pub fn get(&self, key: &Key) -> Result<&Variable> {
        self.map
            .get(key)
            .ok_or_else(|| Error::Structure(format!("no value for key {key}")))
    }

    pub fn group(&self, key: &Key) -> Result<&SEK3> {
        self.get(key)?
            .as_group()
            .ok_or_else(|| Error::Structure(format!("key {key} is not a group variable")))
    }

    pub fn vector(&self, key: &Key) -> Result<&DVector<f64>> {
        self.get(key)?
            .as_vector()
            .ok_or_else(|| Error::Structure(format!("key {key} is not a vector variable")))
    }

    pub fn contains(&self, key: &Key) -> bool {
        self.map.contains_key(key)
    }

    /// Removes `key`, keeping the order of the remaining keys.
    pub fn remove(&mut self, key: &Key) -> Option<Variable> {
        self.map.shift_remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Variable)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
