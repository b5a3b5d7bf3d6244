//! Energy along the interpolation paths between the ground state and a datum,
//! and a string-method estimate of the mountain-pass level between `w` and `-w`.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{critical_residual, energy_total_slice, gradient_slice, residual_scale};
use crate::error::{Error, Result};
use crate::frlap::StiffnessForm;
use crate::grid::{neg_part, pos_part, EnergyParams, GridFunction};

pub const DEFAULT_IMAGES: usize = 32;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const MIN_IMAGES: usize = 16;
pub const MIN_SAMPLES: usize = 11;
/// Profile comparisons are made up to this multiple of the energy scale.
pub const PROFILE_TOL: f64 = 1e-10;
/// Stop when no image energy moves more than this (times the scale) in one sweep.
pub const STRING_TOL: f64 = 1e-10;
/// Amplitude, relative to `w`, of the odd component added to the initial string.
pub const ODD_SEED: f64 = 0.5;

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("path parameter {tau} outside [0, 1]")))
    }
}

/// `[(1 - tau) w^q + tau phi_plus^q]^(1/q)` for nonnegative endpoints.
pub fn gamma_path(w: &GridFunction, phi_plus: &GridFunction, tau: f64, q: f64) -> Result<GridFunction> {
    check_tau(tau)?;
    w.ensure_same_grid(phi_plus)?;
    if w.values().iter().chain(phi_plus.values()).any(|&v| v < 0.0) {
        return Err(Error::Negativity("gamma path endpoints must be nonnegative".into()));
    }
    if tau == 0.0 {
        return Ok(w.clone());
    }
    if tau == 1.0 {
        return Ok(phi_plus.clone());
    }
    w.zip_map(phi_plus, |a, b| ((1.0 - tau) * a.powf(q) + tau * b.powf(q)).powf(1.0 / q))
}

/// `phi0^+ - tau phi0^-`.
pub fn sigma_path(phi0: &GridFunction, tau: f64) -> Result<GridFunction> {
    check_tau(tau)?;
    Ok(phi0.map(|v| if v >= 0.0 { v } else { tau * v }))
}

/// `gamma(2t)` on `[0, 1/2]` followed by `sigma(2t - 1)`.
pub fn theta_path(w: &GridFunction, phi0: &GridFunction, t: f64, q: f64) -> Result<GridFunction> {
    check_tau(t)?;
    if t <= 0.5 {
        gamma_path(w, &pos_part(phi0), 2.0 * t, q)
    } else {
        sigma_path(phi0, 2.0 * t - 1.0)
    }
}

/// Coefficients of `F(sigma(tau)) = A tau^2 - B tau^q + C tau + K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    /// Minimizer `(qB / 2A)^(1/(2-q))` of `A tau^2 - B tau^q`; infinite when `phi0 >= 0`.
    pub tau0: f64,
}

impl HCoeffs {
    pub fn eval(&self, tau: f64, q: f64) -> f64 {
        self.a * tau * tau - self.b * tau.powf(q) + self.c * tau + self.k
    }
}

pub fn h_coeffs(form: &StiffnessForm, p: &EnergyParams, phi0: &GridFunction) -> Result<HCoeffs> {
    let h = form.grid().h();
    let plus = pos_part(phi0);
    let minus = neg_part(phi0);
    let a = 0.5 * form.bilinear(&minus, &minus)?;
    let b = p.alpha / p.q * h * minus.values().iter().map(|v| v.powf(p.q)).sum::<f64>();
    let c = if a == 0.0 { 0.0 } else { -form.bilinear(&plus, &minus)? };
    let k = energy_total_slice(form, p, plus.values());
    let tau0 = if a > 0.0 {
        (p.q * b / (2.0 * a)).powf(1.0 / (2.0 - p.q))
    } else {
        f64::INFINITY
    };
    let coeffs = HCoeffs { a, b, c, k, tau0 };
    let scale = residual_scale(energy_total_slice(form, p, phi0.values()), form.seminorm_sq(phi0)?);
    for tau in [0.0, 0.5, 1.0] {
        let direct = energy_total_slice(form, p, sigma_path(phi0, tau)?.values());
        let err = (direct - coeffs.eval(tau, p.q)).abs();
        if err > PROFILE_TOL * scale {
            return Err(Error::CheckFailed(format!(
                "sigma decomposition off by {err:e} at tau = {tau}"
            )));
        }
    }
    Ok(coeffs)
}

/// The three path families and the bound each profile is tested against.
#[derive(Debug, Clone)]
pub enum PathSpec {
    /// Tested against the chord `(1 - tau) F(w) + tau F(phi_plus)`.
    Gamma { w: GridFunction, phi_plus: GridFunction },
    /// Tested against the closed form `A tau^2 - B tau^q + C tau + K`.
    Sigma { phi0: GridFunction },
    /// Tested against a level the whole path must stay strictly below.
    Theta { w: GridFunction, phi0: GridFunction, level: f64 },
}

impl PathSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PathSpec::Gamma { .. } => "gamma",
            PathSpec::Sigma { .. } => "sigma",
            PathSpec::Theta { .. } => "theta",
        }
    }

    pub fn point(&self, tau: f64, q: f64) -> Result<GridFunction> {
        match self {
            PathSpec::Gamma { w, phi_plus } => gamma_path(w, phi_plus, tau, q),
            PathSpec::Sigma { phi0 } => sigma_path(phi0, tau),
            PathSpec::Theta { w, phi0, .. } => theta_path(w, phi0, tau, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathProfile {
    pub kind: &'static str,
    pub taus: Vec<f64>,
    pub energies: Vec<f64>,
    /// Pointwise bound at each sample.
    pub bounds: Vec<f64>,
    pub max_energy: f64,
    /// Largest bound value over the samples.
    pub bound_value: f64,
    pub bound_holds: bool,
}

impl PathProfile {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        use crate::grid::fmt17;
        writeln!(out, "tau,energy,bound")?;
        for i in 0..self.taus.len() {
            writeln!(out, "{},{},{}", fmt17(self.taus[i]), fmt17(self.energies[i]), fmt17(self.bounds[i]))?;
        }
        Ok(())
    }
}

pub fn path_profile(spec: &PathSpec, form: &StiffnessForm, p: &EnergyParams, n_samples: usize) -> Result<PathProfile> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidParams(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let taus: Vec<f64> = (0..n_samples).map(|i| i as f64 / (n_samples - 1) as f64).collect();
    let points = taus.iter().map(|&t| spec.point(t, p.q)).collect::<Result<Vec<_>>>()?;
    let energies: Vec<f64> = points.iter().map(|f| energy_total_slice(form, p, f.values())).collect();
    let scale = points
        .iter()
        .zip(&energies)
        .map(|(f, &e)| residual_scale(e, form.bilinear_slice(f.values(), f.values())))
        .fold(1.0, f64::max);
    let tol = PROFILE_TOL * scale;
    let (bounds, bound_holds) = match spec {
        PathSpec::Gamma { .. } => {
            let (e0, e1) = (energies[0], energies[n_samples - 1]);
            let bounds: Vec<f64> = taus.iter().map(|t| (1.0 - t) * e0 + t * e1).collect();
            let holds = energies.iter().zip(&bounds).all(|(e, b)| *e <= b + tol);
            (bounds, holds)
        }
        PathSpec::Sigma { phi0 } => {
            let c = h_coeffs(form, p, phi0)?;
            let bounds: Vec<f64> = taus.iter().map(|&t| c.eval(t, p.q)).collect();
            let holds = energies.iter().zip(&bounds).all(|(e, b)| (e - b).abs() <= tol);
            (bounds, holds)
        }
        PathSpec::Theta { level, .. } => {
            let holds = energies.iter().all(|e| e < level);
            (vec![*level; n_samples], holds)
        }
    };
    let max_energy = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound_value = bounds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(PathProfile {
        kind: spec.kind(),
        taus,
        energies,
        bounds,
        max_energy,
        bound_value,
        bound_holds,
    })
}

/// Smallest second difference of `tau -> [gamma(tau)]^2` on a uniform grid.
pub fn hidden_convexity_defect(
    form: &StiffnessForm,
    u: &GridFunction,
    v: &GridFunction,
    q: f64,
    n_samples: usize,
) -> Result<f64> {
    let semi = (0..n_samples)
        .map(|i| {
            let g = gamma_path(u, v, i as f64 / (n_samples - 1) as f64, q)?;
            Ok(form.bilinear_slice(g.values(), g.values()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(semi
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleEstimate {
    pub lambda_star: f64,
    pub images: Vec<GridFunction>,
    pub energies: Vec<f64>,
    pub saddle_index: usize,
    pub saddle_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Lumped-`L^2` arc length reparametrization of `images[lo..=hi]`, endpoints fixed.
fn reparametrize(images: &mut [Vec<f64>], lo: usize, hi: usize, h: f64) {
    if hi <= lo + 1 {
        return;
    }
    let seg = &images[lo..=hi];
    let mut arc = vec![0.0; seg.len()];
    for k in 1..seg.len() {
        let d: f64 = seg[k].iter().zip(&seg[k - 1]).map(|(a, b)| (a - b) * (a - b)).sum();
        arc[k] = arc[k - 1] + (h * d).sqrt();
    }
    let total = arc[seg.len() - 1];
    if !(total > 0.0) {
        return;
    }
    let count = seg.len() - 1;
    let mut fresh = Vec::with_capacity(count - 1);
    let mut j = 0;
    for k in 1..count {
        let target = total * k as f64 / count as f64;
        while j + 1 < count && arc[j + 1] < target {
            j += 1;
        }
        let span = arc[j + 1] - arc[j];
        let t = if span > 0.0 { (target - arc[j]) / span } else { 0.0 };
        let (a, b) = (&seg[j], &seg[j + 1]);
        fresh.push(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect::<Vec<f64>>());
    }
    for (k, img) in fresh.into_iter().enumerate() {
        images[lo + 1 + k] = img;
    }
}

/// Minimum-energy path between `w` and `-w`. The initial string is the
/// half great circle `cos(theta) w + sin(theta) psi` with `psi` an odd
/// (about the midpoint) multiple of `w`, which breaks the even symmetry of
/// the straight segment. Once the string has relaxed, the highest image
/// climbs along the tangent to the saddle.
pub fn string_method(
    form: &StiffnessForm,
    p: &EnergyParams,
    w: &GridFunction,
    n_images: usize,
    max_iter: usize,
) -> Result<SaddleEstimate> {
    if n_images < MIN_IMAGES {
        return Err(Error::InvalidParams(format!("need at least {MIN_IMAGES} images, got {n_images}")));
    }
    if w.grid().as_ref() != form.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let grid = form.grid().clone();
    let n = grid.n();
    let h = grid.h();
    let lipschitz = form.spectral_bound()?.bound;
    let step = 1.0 / lipschitz;
    let scale = residual_scale(energy_total_slice(form, p, w.values()), form.seminorm_sq(w)?);

    let psi: Vec<f64> = w
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| ODD_SEED * v * (2.0 * (i + 1) as f64 / (n + 1) as f64 - 1.0))
        .collect();
    let mut images: Vec<Vec<f64>> = (0..n_images)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / (n_images - 1) as f64;
            let (sn, cs) = theta.sin_cos();
            w.values().iter().zip(&psi).map(|(a, b)| cs * a + sn * b).collect()
        })
        .collect();
    images[0] = w.values().to_vec();
    images[n_images - 1] = w.values().iter().map(|v| -v).collect();
    reparametrize(&mut images, 0, n_images - 1, h);

    let energy_of = |x: &[f64]| energy_total_slice(form, p, x);
    let mut energies: Vec<f64> = images.iter().map(|x| energy_of(x)).collect();
    let mut climbing: Option<usize> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let climb = climbing;
        let tangents: Option<Vec<f64>> = climb.map(|c| {
            let t: Vec<f64> = images[c + 1].iter().zip(&images[c - 1]).map(|(a, b)| a - b).collect();
            let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            t.into_iter().map(|x| x / norm).collect()
        });
        let updated: Vec<Vec<f64>> = (1..n_images - 1)
            .into_par_iter()
            .map(|k| {
                let x = &images[k];
                let mut g = vec![0.0; n];
                gradient_slice(form, p, x, &mut g);
                if Some(k) == climb {
                    let t = tangents.as_ref().expect("tangent for climbing image");
                    let proj: f64 = g.iter().zip(t).map(|(a, b)| a * b).sum();
                    for (gi, ti) in g.iter_mut().zip(t) {
                        *gi -= 2.0 * proj * ti;
                    }
                }
                x.iter().zip(&g).map(|(a, b)| a - step * b).collect()
            })
            .collect();
        for (k, img) in updated.into_iter().enumerate() {
            images[k + 1] = img;
        }
        match climb {
            Some(c) => {
                reparametrize(&mut images, 0, c, h);
                reparametrize(&mut images, c, n_images - 1, h);
            }
            None => reparametrize(&mut images, 0, n_images - 1, h),
        }
        let fresh: Vec<f64> = images.iter().map(|x| energy_of(x)).collect();
        let change = fresh
            .iter()
            .zip(&energies)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        energies = fresh;
        if change <= STRING_TOL * scale && climbing.is_some() {
            converged = true;
            break;
        }
        if climbing.is_none() && (change <= 1e3 * STRING_TOL * scale) {
            climbing = Some(argmax_interior(&energies));
        }
    }
    let saddle_index = climbing.unwrap_or_else(|| argmax_interior(&energies));
    let images: Vec<GridFunction> = images
        .into_iter()
        .map(|v| GridFunction::new(&grid, v))
        .collect::<Result<_>>()?;
    let saddle_residual = critical_residual(form, p, &images[saddle_index])?;
    Ok(SaddleEstimate {
        lambda_star: energies[saddle_index],
        images,
        energies,
        saddle_index,
        saddle_residual,
        iterations,
        converged,
    })
}

fn argmax_interior(energies: &[f64]) -> usize {
    let mut best = 1;
    for k in 1..energies.len() - 1 {
        if energies[k] > energies[best] {
            best = k;
        }
    }
    best
}
