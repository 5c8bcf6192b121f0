//! Brute-force reference computations, looked up by name.
//!
//! Each oracle reads a JSON instance and returns a JSON value:
//!
//! | name         | instance                      | output                 |
//! |--------------|-------------------------------|------------------------|
//! | `lp`         | `{"rho": measure, "mu": measure}` | `{"T", "plan"}`    |
//! | `quantile1d` | `{"rho": measure, "mu": measure}` | `{"T"}`            |
//! | `cmu`        | `{"mu": measure}`             | `{"c_mu"}`             |

use serde::Deserialize;
use serde_json::{json, Value};

use crate::measure::DiscreteMeasure;
use crate::transport::{lp_max_correlation, Quantile};
use crate::verification::c_mu;
use crate::{Error, Result};

pub trait Oracle: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, instance: &Value) -> Result<Value>;
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairInstance {
    rho: DiscreteMeasure,
    mu: DiscreteMeasure,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetInstance {
    mu: DiscreteMeasure,
}

fn parse<T: for<'de> Deserialize<'de>>(instance: &Value) -> Result<T> {
    Ok(T::deserialize(instance)?)
}

pub struct LpOracle;
pub struct Quantile1dOracle;
pub struct CmuOracle;

impl Oracle for LpOracle {
    fn name(&self) -> &'static str {
        "lp"
    }

    fn description(&self) -> &'static str {
        "maximal correlation between two discrete measures by min-cost flow"
    }

    fn run(&self, instance: &Value) -> Result<Value> {
        let PairInstance { rho, mu } = parse(instance)?;
        let (plan, t) = lp_max_correlation(&rho, &mu)?;
        let entries: Vec<Value> = plan.entries.iter().map(|&(i, j, m)| json!([i, j, m])).collect();
        Ok(json!({ "T": t, "plan": entries }))
    }
}

impl Oracle for Quantile1dOracle {
    fn name(&self) -> &'static str {
        "quantile1d"
    }

    fn description(&self) -> &'static str {
        "co-monotone correlation of two measures on the line"
    }

    fn run(&self, instance: &Value) -> Result<Value> {
        let PairInstance { rho, mu } = parse(instance)?;
        if rho.dim() != 1 || mu.dim() != 1 {
            return Err(Error::UnsupportedDimension(rho.dim().max(mu.dim())));
        }
        let t = Quantile::from_atoms(&rho)?.correlation(&Quantile::from_atoms(&mu)?);
        Ok(json!({ "T": t }))
    }
}

impl Oracle for CmuOracle {
    fn name(&self) -> &'static str {
        "cmu"
    }

    fn description(&self) -> &'static str {
        "constant c(mu) in the lower bound T >= c(mu) M1"
    }

    fn run(&self, instance: &Value) -> Result<Value> {
        let TargetInstance { mu } = parse(instance)?;
        Ok(json!({ "c_mu": c_mu(&mu) }))
    }
}

pub fn oracles() -> Vec<Box<dyn Oracle>> {
    vec![Box::new(LpOracle), Box::new(Quantile1dOracle), Box::new(CmuOracle)]
}

pub fn oracle(name: &str) -> Result<Box<dyn Oracle>> {
    oracles()
        .into_iter()
        .find(|o| o.name() == name)
        .ok_or_else(|| Error::Unknown {
            kind: "oracle",
            name: name.into(),
        })
}
