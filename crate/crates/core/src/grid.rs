//! Uniform interval meshes, nodal functions and pointwise nonlinearities.
//!
//! A [`GridFunction`] stores the values of a continuous piecewise-linear
//! interpolant at the interior nodes; the function vanishes at both endpoints
//! and outside the interval. Local integrals use mass lumping, so every node
//! carries the same weight `h`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smallest admissible number of interior nodes.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    /// Builds the uniform mesh of `(a, b)` with `n` interior nodes.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Arc<Grid>> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidDomain(format!("need a < b, got ({a}, {b})")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidDomain(format!(
                "need at least {MIN_NODES} interior nodes, got {n}"
            )));
        }
        let h = (b - a) / (n + 1) as f64;
        let nodes = (1..=n).map(|i| a + i as f64 * h).collect();
        Ok(Arc::new(Grid { a, b, n, h, nodes }))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    /// Interpolates `f` at the interior nodes.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> GridFunction {
        let values = self.nodes.iter().map(|&x| f(x)).collect();
        GridFunction {
            grid: Arc::clone(self),
            values,
        }
    }

    pub fn zeros(self: &Arc<Self>) -> GridFunction {
        GridFunction {
            grid: Arc::clone(self),
            values: vec![0.0; self.n],
        }
    }
}

/// Exponents of the porous-medium problem.
///
/// `q = (m + 1) / m` is always derived from `m`, so `q * m = m + 1` holds to
/// rounding.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyParams {
    pub s: f64,
    pub m: f64,
    pub q: f64,
    pub alpha: f64,
}

impl EnergyParams {
    pub fn new(s: f64, m: f64, alpha: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("s must lie in (0, 1), got {s}")));
        }
        if !(m > 1.0 && m.is_finite()) {
            return Err(Error::InvalidParams(format!("m must be > 1, got {m}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            s,
            m,
            q: (m + 1.0) / m,
            alpha,
        })
    }

    /// Uses the self-similar exponent `alpha = 1 / (m - 1)`.
    pub fn with_default_alpha(s: f64, m: f64) -> Result<Self> {
        Self::new(s, m, 1.0 / (m - 1.0))
    }

    /// Checks a record that carries an explicit `q`.
    pub fn validate(&self) -> Result<()> {
        let derived = Self::new(self.s, self.m, self.alpha)?;
        if (derived.q - self.q).abs() > 1e-14 * derived.q {
            return Err(Error::InvalidParams(format!(
                "q = {} is inconsistent with m = {} (expected {})",
                self.q, self.m, derived.q
            )));
        }
        Ok(())
    }

    /// `C0(m) = (m + 1)^-3`, the constant of the entropy-dissipation bound.
    pub fn c0(&self) -> f64 {
        c0(self.m)
    }
}

pub fn c0(m: f64) -> f64 {
    (m + 1.0).powi(-3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite nodal value {v}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn ensure_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise map, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        self.ensure_same_grid(other)?;
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn neg(&self) -> GridFunction {
        self.map(|v| -v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Lumped integral `h * sum f_i`.
    pub fn integral(&self) -> f64 {
        self.grid.h * self.values.iter().sum::<f64>()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt17(*x), fmt17(*v))?;
        }
        Ok(())
    }

    /// Reads an `x,value` table and checks that the abscissae match `grid`.
    pub fn read_csv<R: BufRead>(grid: &Arc<Grid>, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n);
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "x,value" {
                    return Err(Error::Format(format!("line 1: expected header `x,value`, got `{line}`")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (x, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected two columns", lineno + 1)))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            };
            let (x, v) = (parse(x)?, parse(v)?);
            let i = values.len();
            if i >= grid.n || (x - grid.nodes[i]).abs() > 1e-9 * grid.len() {
                return Err(Error::Format(format!(
                    "line {}: abscissa {x} does not match the grid",
                    lineno + 1
                )));
            }
            values.push(v);
        }
        GridFunction::new(grid, values)
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Lumped `L^p` norm `(sum_i h |f_i|^p)^(1/p)`.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let h = f.grid.h;
    let sum: f64 = f.values.iter().map(|v| v.abs().powf(p)).sum();
    (h * sum).powf(1.0 / p)
}

/// Lumped `sum_i h |f_i|^p` without the root.
pub fn lp_power_sum(f: &GridFunction, p: f64) -> f64 {
    f.grid.h * f.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
}

/// `|v|^(p-1) v`, the odd power with the value 0 at the origin.
#[inline]
pub fn signed_pow(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.abs().powf(p - 1.0) * v
    }
}

/// `Phi(v) = |v|^(m-1) v`.
pub fn phi_map(v: &GridFunction, m: f64) -> GridFunction {
    v.map(|x| signed_pow(x, m))
}

/// `Phi^-1(phi) = |phi|^(q-2) phi` with `q = (m + 1) / m`.
pub fn phi_inv(phi: &GridFunction, q: f64) -> GridFunction {
    phi.map(|x| signed_pow(x, q - 1.0))
}

/// `g(v) = |v|^((m-1)/2) v`.
pub fn g_map(v: &GridFunction, m: f64) -> GridFunction {
    v.map(|x| signed_pow(x, (m + 1.0) / 2.0))
}

pub fn pos_part(f: &GridFunction) -> GridFunction {
    f.map(|v| v.max(0.0))
}

pub fn neg_part(f: &GridFunction) -> GridFunction {
    f.map(|v| (-v).max(0.0))
}
