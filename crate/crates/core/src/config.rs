//! Flat JSON run configuration shared by all commands, plus grid and α parsing.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linear_vae::Optimizer;

const MAX_GRID_POINTS: usize = 1_000_000;

/// Sample complexity, finite or the `"inf"` sentinel for the analytic limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alpha(pub f64);

impl Alpha {
    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

pub fn parse_alpha(s: &str) -> Result<Alpha> {
    let t = s.trim();
    let v = match t.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => f64::INFINITY,
        _ => t.parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad alpha `{s}`")))?,
    };
    if !(v > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got `{s}`")));
    }
    Ok(Alpha(v))
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_alpha(s)
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(t) => return parse_alpha(&t).map_err(serde::de::Error::custom),
        };
        if !(v > 0.0) {
            return Err(serde::de::Error::custom(format!("alpha must be positive, got {v}")));
        }
        Ok(Alpha(v))
    }
}

/// A grid given either as an explicit list or as `linspace:a:b:n` / `logspace:a:b:n`
/// (endpoints are values, not exponents) / a comma-separated list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Spec(String),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::List(v) => {
                if v.is_empty() || v.len() > MAX_GRID_POINTS || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidConfig("grid list must be non-empty and finite".into()));
                }
                Ok(v.clone())
            }
            GridSpec::Spec(s) => parse_grid(s),
        }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_grid(s)?;
        Ok(GridSpec::Spec(s.to_string()))
    }
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("bad grid `{s}` (linspace:a:b:n, logspace:a:b:n or v1,v2,...)"));
    let t = s.trim();
    let parts: Vec<&str> = t.split(':').collect();
    let values = if parts.len() == 4 && (parts[0] == "linspace" || parts[0] == "logspace") {
        let a: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[2].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[3].trim().parse().map_err(|_| bad())?;
        if n == 0 || n > MAX_GRID_POINTS || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        let frac = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        if parts[0] == "linspace" {
            (0..n).map(|i| a + (b - a) * frac(i)).collect::<Vec<f64>>()
        } else {
            if !(a > 0.0 && b > 0.0) {
                return Err(bad());
            }
            let (la, lb) = (a.log10(), b.log10());
            (0..n)
                .map(|i| match i {
                    0 => a,
                    _ if i == n - 1 => b,
                    _ => 10f64.powf(la + (lb - la) * frac(i)),
                })
                .collect()
        }
    } else {
        let v = t
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() > MAX_GRID_POINTS {
            return Err(bad());
        }
        v
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

/// Every key any command understands. Unset keys fall back to command defaults;
/// the resolved configuration written next to the outputs has every key the
/// command used filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Alpha>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_tol: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_eps: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_dvar: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_dataset: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cumulative_rate: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Fill every key set in `overrides` into `self`.
    pub fn merge(&mut self, overrides: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if overrides.$f.is_some() { self.$f = overrides.$f; } )* };
        }
        take!(
            alpha, beta, lambda, rho, eta, alpha_grid, beta_grid, beta_min, beta_max, beta_points, m_tol, q_tol,
            damping, tol, max_iter, init, ridge_eps, d, k, k_star, seed, seeds, optimizer, max_steps, grad_tol,
            learning_rate, closed_form_dvar, trace, dump_dataset, collapse_eps, cumulative_rate, threads, strict
        );
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
