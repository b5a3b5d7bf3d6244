//! Ground states of the sublinear Lane-Emden problem
//! `A phi = alpha h |phi|^(q-2) phi`.
//!
//! The first eigenvalue `lambda1 = min { [u]^2 : sum h |u|^q = 1 }` is computed
//! by the sublinear inverse iteration `u <- A^-1 (h u^(q-1))` followed by
//! renormalization in the positive cone. The ground state is the rescaled
//! minimizer `w = (alpha / lambda1)^(1/(2-q)) u*`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{critical_residual, energy, nehari_residual};
use crate::error::{Error, Result};
use crate::frlap::StiffnessForm;
use crate::grid::{EnergyParams, GridFunction};

pub const MAX_ITER: usize = 10_000;
/// Relative change of `lambda1` at which the iteration stops.
pub const LAMBDA_TOL: f64 = 1e-12;
/// Relative sup-norm change of the iterate at which the iteration stops.
pub const VECTOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FirstEigen {
    pub lambda1: f64,
    /// Nonnegative, `sum h u^q = 1`.
    pub u_star: GridFunction,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub w: GridFunction,
    pub lambda1: f64,
    /// Minimal energy level `F(w) < 0`.
    pub level: f64,
    pub iterations: usize,
    pub residual: f64,
    pub nehari: (f64, f64),
}

impl GroundState {
    /// `w^(q-1)`, the profile that is stationary for the rescaled flow.
    pub fn stationary_profile(&self, q: f64) -> GridFunction {
        self.w.map(|v| v.powf(q - 1.0))
    }
}

/// Default starting guess: the interpolant of `(x - a)(b - x)`.
pub fn default_guess(form: &StiffnessForm) -> GridFunction {
    let g = form.grid();
    let (a, b) = (g.a(), g.b());
    g.sample(|x| (x - a) * (b - x))
}

fn normalize_lq(u: &mut [f64], h: f64, q: f64) {
    let norm = (h * u.iter().map(|v| v.powf(q)).sum::<f64>()).powf(1.0 / q);
    u.iter_mut().for_each(|v| *v /= norm);
}

pub fn lambda1(form: &StiffnessForm, q: f64) -> Result<FirstEigen> {
    lambda1_from(form, q, &default_guess(form))
}

/// Inverse iteration from `init`; absolute values are taken at every step so
/// any nonzero start ends up in the positive cone.
pub fn lambda1_from(form: &StiffnessForm, q: f64, init: &GridFunction) -> Result<FirstEigen> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::InvalidParams(format!("q must lie in (1, 2), got {q}")));
    }
    if init.grid().as_ref() != form.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let h = form.grid().h();
    let mut u: Vec<f64> = init.values().iter().map(|v| v.abs()).collect();
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParams("initial guess is identically zero".into()));
    }
    normalize_lq(&mut u, h, q);
    let mut lambda = form.bilinear_slice(&u, &u);
    for it in 1..=MAX_ITER {
        let rhs: Vec<f64> = u.iter().map(|v| h * v.powf(q - 1.0)).collect();
        let mut next = form.solve_slice(&rhs);
        next.iter_mut().for_each(|v| *v = v.abs());
        normalize_lq(&mut next, h, q);
        let new_lambda = form.bilinear_slice(&next, &next);
        let sup = next.iter().fold(0.0f64, |m, v| m.max(*v));
        let du = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dl = (new_lambda - lambda).abs() / new_lambda;
        u = next;
        lambda = new_lambda;
        if dl <= LAMBDA_TOL && du <= VECTOR_TOL * sup {
            return Ok(FirstEigen {
                lambda1: lambda,
                u_star: GridFunction::new(form.grid(), u)?,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "sublinear inverse iteration",
        iterations: MAX_ITER,
    })
}

/// Closed form of the minimal level along `t u*`:
/// `(1/2 - 1/q) alpha^(2/(2-q)) lambda1^(-q/(2-q))`.
pub fn level_from_lambda1(p: &EnergyParams, lambda1: f64) -> f64 {
    let q = p.q;
    (0.5 - 1.0 / q) * p.alpha.powf(2.0 / (2.0 - q)) * lambda1.powf(-q / (2.0 - q))
}

pub fn ground_state(form: &StiffnessForm, p: &EnergyParams) -> Result<GroundState> {
    ground_state_from(form, p, &default_guess(form))
}

pub fn ground_state_from(form: &StiffnessForm, p: &EnergyParams, init: &GridFunction) -> Result<GroundState> {
    let eig = lambda1_from(form, p.q, init)?;
    let t = (p.alpha / eig.lambda1).powf(1.0 / (2.0 - p.q));
    let w = eig.u_star.scale(t);
    let level = level_from_lambda1(p, eig.lambda1);
    let direct = energy(form, p, &w)?.total;
    if (direct - level).abs() > 1e-10 * level.abs() {
        return Err(Error::CheckFailed(format!(
            "ground-state level {level} disagrees with direct energy {direct}"
        )));
    }
    if w.values().iter().any(|&v| v <= 0.0) {
        return Err(Error::CheckFailed("ground state is not strictly positive".into()));
    }
    let residual = critical_residual(form, p, &w)?;
    let nehari = nehari_residual(form, p, &w)?;
    if residual > 1e-8 || nehari.0 > 1e-8 || nehari.1 > 1e-8 {
        return Err(Error::CheckFailed(format!(
            "criticality residual {residual:e}, Nehari residuals {nehari:?}"
        )));
    }
    Ok(GroundState {
        w,
        lambda1: eig.lambda1,
        level,
        iterations: eig.iterations,
        residual,
        nehari,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UniquenessReport {
    pub trials: usize,
    pub max_distance: f64,
    pub sup_w: f64,
    pub passed: bool,
}

/// Random strictly positive starting vector.
pub fn random_positive_guess(form: &StiffnessForm, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..form.n()).map(|_| rng.random_range(0.05..1.0)).collect();
    GridFunction::new(form.grid(), vals).expect("finite values")
}

pub fn verify_uniqueness(form: &StiffnessForm, p: &EnergyParams, trials: usize, seed: u64) -> Result<UniquenessReport> {
    let seeds: Vec<u64> = (0..trials as u64).map(|k| seed.wrapping_add(k)).collect();
    verify_uniqueness_with_seeds(form, p, &seeds)
}

/// Runs the ground-state pipeline from one random start per seed and reports
/// the largest pairwise sup-norm distance.
pub fn verify_uniqueness_with_seeds(form: &StiffnessForm, p: &EnergyParams, seeds: &[u64]) -> Result<UniquenessReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParams("need at least two trials".into()));
    }
    let states = seeds
        .iter()
        .map(|&s| ground_state_from(form, p, &random_positive_guess(form, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut max_distance = 0.0f64;
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            let d = states[i]
                .w
                .values()
                .iter()
                .zip(states[j].w.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            max_distance = max_distance.max(d);
        }
    }
    let sup_w = states[0].w.sup_norm();
    Ok(UniquenessReport {
        trials: seeds.len(),
        max_distance,
        sup_w,
        passed: max_distance <= 1e-6 * sup_w,
    })
}
