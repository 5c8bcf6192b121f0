//! The local power functional and its bounds.
//!
//! With `alpha = 1 - 1/(n + q)` the integrand is `f(t) = -t^alpha / alpha`,
//! `F(rho) = int f(rho(x)) dx`, and the objective is `J = F + T` with `T`
//! the maximal correlation against the target.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::grid::GridDensity;
use crate::numeric::par_sum;
use crate::quadrature::{sphere_area, UnitRule};
use crate::{Error, Result};

/// Cell values below this are treated as exact zeros.
pub const UNDERFLOW_CUTOFF: f64 = 1e-300;

pub fn alpha(n: usize, q: f64) -> f64 {
    1.0 - 1.0 / (n as f64 + q)
}

pub fn f(t: f64, alpha: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("f is defined for t >= 0, got {t}")));
    }
    Ok(-t.powf(alpha) / alpha)
}

/// `f'(t) = -t^(alpha - 1)`; undefined (minus infinity) at zero.
pub fn f_prime(t: f64, alpha: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("f' is defined for t > 0, got {t}")));
    }
    Ok(-t.powf(alpha - 1.0))
}

/// Legendre transform `f*(h) = sup_{x >= 0} (x h - f(x))`.
pub fn f_star(h: f64, alpha: f64) -> f64 {
    if h >= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / alpha - 1.0) * (-h).powf(alpha / (alpha - 1.0))
}

/// Midpoint quadrature of `f(rho)`.
pub fn eval_f(rho: &GridDensity, alpha: f64) -> f64 {
    let values = rho.values();
    let sum = par_sum(values.len(), |i| {
        let v = values[i];
        if v < UNDERFLOW_CUTOFF {
            0.0
        } else {
            v.powf(alpha)
        }
    });
    -sum * rho.spec().cell_volume() / alpha
}

/// Open interval of admissible exponents `delta` for the lower bound.
pub fn delta_window(n: usize, q: f64) -> (f64, f64) {
    (n as f64 / (n as f64 + q - 1.0), 1.0)
}

fn check_delta(delta: f64, n: usize, q: f64) -> Result<()> {
    let (lo, hi) = delta_window(n, q);
    if !(q > 1.0 && delta > lo && delta < hi) {
        return Err(Error::Domain(format!(
            "delta = {delta} outside the admissible window ({lo}, {hi}) for n = {n}, q = {q}"
        )));
    }
    Ok(())
}

type CacheKey = (usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `C(delta) = 1 + int_{R^n} f*(-(1 + |x|)^delta) dx`, by radial quadrature.
pub fn c_delta(n: usize, q: f64, delta: f64) -> Result<f64> {
    check_delta(delta, n, q)?;
    let key = (n, q.to_bits(), delta.to_bits());
    if let Some(v) = cache().lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let a = alpha(n, q);
    // f*(-(1+r)^delta) = (1/alpha - 1) (1+r)^(-k) with k = delta (n + q - 1).
    let k = delta * (n as f64 + q - 1.0);
    let radial = power_tail_integral(n, k);
    let value = 1.0 + (1.0 / a - 1.0) * sphere_area(n)? * radial;
    cache().lock().unwrap().insert(key, value);
    Ok(value)
}

/// `int_0^inf r^(n-1) (1 + r)^(-k) dr` for `k > n`.
///
/// With `t = 1/(1+r)` this is `int_0^1 (1-t)^(n-1) t^(k-n-1) dt`. On `[0, 1/2]`
/// the substitution `w = t^(k-n)` removes the endpoint singularity.
fn power_tail_integral(n: usize, k: f64) -> f64 {
    let a = k - n as f64;
    let rule = UnitRule::composite(64, 16);
    let nm1 = n as i32 - 1;
    let w_max = 0.5f64.powf(a);
    let near = rule.integrate_on(0.0, w_max, |w| (1.0 - w.powf(1.0 / a)).powi(nm1)) / a;
    let far = rule.integrate_on(0.5, 1.0, |t| (1.0 - t).powi(nm1) * t.powf(a - 1.0));
    near + far
}

/// Lower bound `F(rho) >= -C(delta) - M_1(rho)^delta`.
pub fn lower_bound_f(m1: f64, delta: f64, n: usize, q: f64) -> Result<f64> {
    if !(m1 >= 0.0) {
        return Err(Error::Domain(format!("first moment must be nonnegative, got {m1}")));
    }
    Ok(-c_delta(n, q, delta)? - m1.powf(delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub delta: f64,
    pub c_delta: f64,
    pub value: f64,
}

/// `F`, `T`, their sum `J`, and the first moment of the density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    pub lower_bound: Option<LowerBound>,
}

impl FunctionalValues {
    pub fn new(f: f64, t: f64, m1: f64) -> Self {
        Self {
            f,
            t,
            j: f + t,
            m1,
            lower_bound: None,
        }
    }

    /// Attach the lower bound at the middle of the admissible window (q > 1 only).
    pub fn with_lower_bound(mut self, n: usize, q: f64) -> Self {
        let (lo, hi) = delta_window(n, q);
        let delta = 0.5 * (lo + hi);
        if let (Ok(c), Ok(value)) = (c_delta(n, q, delta), lower_bound_f(self.m1, delta, n, q)) {
            self.lower_bound = Some(LowerBound {
                delta,
                c_delta: c,
                value,
            });
        }
        self
    }
}
