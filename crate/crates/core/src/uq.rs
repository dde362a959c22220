//! Binding of uncertain parameters to the growth law.
//!
//! A [`ParamModel`] fixes some parameters to constants and draws others from
//! independent laws. Besides the raw fields of [`GrowthParams`], the von
//! Bertalanffy coordinates `a = delta + 1` and `q = -mu/(2 delta)` may be
//! bound, so that e.g. `mu` follows from a random `a` and a fixed `q`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::basis::{ParamDistribution, MAX_DIMS};
use crate::error::{invalid, Result};
use crate::growth::GrowthParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    /// Growth rate; `alpha` in Gompertz fits.
    #[serde(alias = "alpha")]
    Mu,
    Lambda,
    Delta,
    /// von Bertalanffy exponent `a = delta + 1`.
    A,
    /// von Bertalanffy decay `q = -mu / (2 delta)`.
    Q,
    #[serde(rename = "x_l")]
    XL,
    Sigma2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomDim {
    pub name: String,
    pub field: ParamField,
    pub dist: ParamDistribution,
}

/// Independent random dimensions, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVectorSpec {
    pub dims: Vec<RandomDim>,
}

impl RandomVectorSpec {
    pub fn dists(&self) -> Vec<ParamDistribution> {
        self.dims.iter().map(|d| d.dist).collect()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

/// Constants plus random bindings that resolve to [`GrowthParams`] at each `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamModel {
    pub constants: BTreeMap<ParamField, f64>,
    #[serde(default)]
    pub random: RandomVectorSpec,
}

impl ParamModel {
    pub fn deterministic(p: &GrowthParams) -> Self {
        let constants = BTreeMap::from([
            (ParamField::Mu, p.mu),
            (ParamField::Lambda, p.lambda),
            (ParamField::Delta, p.delta),
            (ParamField::XL, p.x_l),
            (ParamField::Sigma2, p.sigma2),
        ]);
        ParamModel { constants, random: RandomVectorSpec::default() }
    }

    pub fn with_random(mut self, name: &str, field: ParamField, dist: ParamDistribution) -> Self {
        self.constants.remove(&field);
        self.random.dims.push(RandomDim { name: name.to_string(), field, dist });
        self
    }

    pub fn with_constant(mut self, field: ParamField, value: f64) -> Self {
        self.constants.insert(field, value);
        self
    }

    pub fn without(mut self, field: ParamField) -> Self {
        self.constants.remove(&field);
        self
    }

    pub fn dim(&self) -> usize {
        self.random.len()
    }

    pub fn is_random(&self, field: ParamField) -> bool {
        self.random.dims.iter().any(|d| d.field == field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.random.len() > MAX_DIMS {
            return invalid(format!("at most {MAX_DIMS} random dimensions are supported"));
        }
        let mut names = HashSet::new();
        for d in &self.random.dims {
            d.dist.validate()?;
            if !names.insert(d.name.as_str()) {
                return invalid(format!("duplicate random dimension name '{}'", d.name));
            }
            if self.constants.contains_key(&d.field) {
                return invalid(format!("field {:?} is both constant and random", d.field));
            }
        }
        let mut fields = HashSet::new();
        if self.random.dims.iter().any(|d| !fields.insert(d.field)) {
            return invalid("a parameter field is bound to more than one random dimension");
        }
        let bound = |f| self.constants.contains_key(&f) || self.is_random(f);
        if bound(ParamField::Delta) && bound(ParamField::A) {
            return invalid("bind either delta or a, not both");
        }
        if bound(ParamField::Mu) == bound(ParamField::Q) {
            return invalid("bind exactly one of mu and q");
        }
        if !bound(ParamField::XL) {
            return invalid("x_l is required");
        }
        if !bound(ParamField::Sigma2) {
            return invalid("sigma2 is required");
        }
        // every corner of the support box must give valid parameters
        let n = self.dim();
        for mask in 0..(1usize << n) {
            let z: Vec<f64> = self
                .random
                .dims
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let (lo, hi) = d.dist.support();
                    if mask >> j & 1 == 1 {
                        hi
                    } else {
                        lo
                    }
                })
                .collect();
            self.resolve(&z)?;
        }
        Ok(())
    }

    fn value(&self, field: ParamField, z: &[f64]) -> Option<f64> {
        self.constants
            .get(&field)
            .copied()
            .or_else(|| self.random.dims.iter().position(|d| d.field == field).map(|j| z[j]))
    }

    /// Growth parameters at the random point `z`.
    pub fn resolve(&self, z: &[f64]) -> Result<GrowthParams> {
        if z.len() != self.dim() {
            return invalid(format!("expected {} random coordinates, got {}", self.dim(), z.len()));
        }
        let delta = match (self.value(ParamField::Delta, z), self.value(ParamField::A, z)) {
            (Some(d), None) => d,
            (None, Some(a)) => a - 1.0,
            (None, None) => 0.0,
            _ => return invalid("bind either delta or a, not both"),
        };
        let mu = match (self.value(ParamField::Mu, z), self.value(ParamField::Q, z)) {
            (Some(m), None) => m,
            (None, Some(q)) => {
                if !(delta < 0.0) {
                    return invalid("q requires delta < 0");
                }
                -2.0 * delta * q
            }
            _ => return invalid("bind exactly one of mu and q"),
        };
        let x_l =
            self.value(ParamField::XL, z).ok_or_else(|| crate::error::Error::InvalidInput("x_l is required".into()))?;
        let sigma2 = self
            .value(ParamField::Sigma2, z)
            .ok_or_else(|| crate::error::Error::InvalidInput("sigma2 is required".into()))?;
        let lambda = self.value(ParamField::Lambda, z).unwrap_or(0.0);
        GrowthParams::new(mu, lambda, delta, x_l, sigma2)
    }
}
