//! The Lyapunov functional
//!
//! `F(phi) = 1/2 phi^T A phi - (alpha / q) sum_i h |phi_i|^q`
//!
//! together with its sign decomposition, criticality residuals and the two
//! scalar inequalities that drive the entropy-dissipation estimate.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::frlap::StiffnessForm;
use crate::grid::{lp_power_sum, neg_part, pos_part, signed_pow, EnergyParams, Grid, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EnergyBreakdown {
    /// `1/2 [phi]^2`
    pub seminorm_half: f64,
    /// `(alpha / q) sum h |phi|^q`
    pub potential: f64,
    pub total: f64,
    /// `-(phi+)^T A phi-`
    pub cross: f64,
}

impl EnergyBreakdown {
    /// `max(1, |F|, [phi]^2)`
    pub fn scale(&self) -> f64 {
        residual_scale(self.total, 2.0 * self.seminorm_half)
    }
}

pub fn residual_scale(energy: f64, seminorm_sq: f64) -> f64 {
    1f64.max(energy.abs()).max(seminorm_sq.abs())
}

fn check_params(form: &StiffnessForm, p: &EnergyParams) -> Result<()> {
    if form.s() != p.s {
        return Err(Error::InvalidParams(format!(
            "form assembled for s = {} but parameters carry s = {}",
            form.s(),
            p.s
        )));
    }
    Ok(())
}

/// Energy of raw nodal values (no sign decomposition).
pub fn energy_total_slice(form: &StiffnessForm, p: &EnergyParams, phi: &[f64]) -> f64 {
    let h = form.grid().h();
    let semi = form.bilinear_slice(phi, phi);
    let pot: f64 = phi.iter().map(|v| v.abs().powf(p.q)).sum::<f64>() * h * p.alpha / p.q;
    0.5 * semi - pot
}

pub fn energy(form: &StiffnessForm, p: &EnergyParams, phi: &GridFunction) -> Result<EnergyBreakdown> {
    check_params(form, p)?;
    let semi = form.seminorm_sq(phi)?;
    let potential = p.alpha / p.q * lp_power_sum(phi, p.q);
    let seminorm_half = 0.5 * semi;
    Ok(EnergyBreakdown {
        seminorm_half,
        potential,
        total: seminorm_half - potential,
        cross: cross_term(form, phi)?,
    })
}

/// `-(phi+)^T A (phi-)`, the discrete form of
/// `2 int int phi+(x) phi-(y) |x - y|^(-1-2s) dx dy`.
pub fn cross_term(form: &StiffnessForm, phi: &GridFunction) -> Result<f64> {
    let plus = pos_part(phi);
    let minus = neg_part(phi);
    if minus.values().iter().all(|&v| v == 0.0) || plus.values().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(-form.bilinear(&plus, &minus)?)
}

/// `A phi - alpha h |phi|^(q-2) phi` as a raw vector.
pub fn gradient_slice(form: &StiffnessForm, p: &EnergyParams, phi: &[f64], out: &mut [f64]) {
    form.apply_slice(phi, out);
    let c = p.alpha * form.grid().h();
    for (o, &v) in out.iter_mut().zip(phi) {
        *o -= c * signed_pow(v, p.q - 1.0);
    }
}

/// `||A phi - alpha h |phi|^(q-2) phi||_2 / max(1, ||A phi||_2)`.
pub fn critical_residual(form: &StiffnessForm, p: &EnergyParams, phi: &GridFunction) -> Result<f64> {
    check_params(form, p)?;
    let a_phi = form.apply(phi)?;
    let c = p.alpha * form.grid().h();
    let mut res = 0.0;
    let mut norm = 0.0;
    for (&ap, &v) in a_phi.values().iter().zip(phi.values()) {
        let r = ap - c * signed_pow(v, p.q - 1.0);
        res += r * r;
        norm += ap * ap;
    }
    Ok(res.sqrt() / 1f64.max(norm.sqrt()))
}

/// Nehari residuals `(r1, r2)`: every critical point satisfies
/// `F = (1/2 - 1/q)[phi]^2` and `[phi]^2 = alpha sum h |phi|^q`.
pub fn nehari_residual(form: &StiffnessForm, p: &EnergyParams, phi: &GridFunction) -> Result<(f64, f64)> {
    let e = energy(form, p, phi)?;
    let semi = 2.0 * e.seminorm_half;
    let scale = e.scale();
    let r1 = (e.total - (0.5 - 1.0 / p.q) * semi).abs() / scale;
    let r2 = (semi - p.alpha * lp_power_sum(phi, p.q)).abs() / scale;
    Ok((r1, r2))
}

/// Constant `C` in `F(u) >= 1/4 [u]^2 - C`:
/// `C = (2-q)/(2q) alpha^(2/(2-q)) (lambda1/2)^(-q/(2-q))`.
pub fn coercivity_constant(p: &EnergyParams, lambda1: f64) -> Result<f64> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidParams(format!("lambda1 must be positive, got {lambda1}")));
    }
    let q = p.q;
    Ok((2.0 - q) / (2.0 * q) * p.alpha.powf(2.0 / (2.0 - q)) * (0.5 * lambda1).powf(-q / (2.0 - q)))
}

/// Bregman gap of `f(t) = |t|^(m+1)/(m+1)` against `C0(m) |g(a) - g(b)|^2`.
pub fn bregman_gap(a: f64, b: f64, m: f64) -> (f64, f64) {
    let f = |t: f64| t.abs().powf(m + 1.0) / (m + 1.0);
    let g = |t: f64| signed_pow(t, (m + 1.0) / 2.0);
    let lhs = f(a) - f(b) - signed_pow(b, m) * (a - b);
    let rhs = (m + 1.0).powi(-3) * (g(a) - g(b)).powi(2);
    (lhs, rhs)
}

/// `1/2|a|^(m+1) + 1/2|b|^(m+1)` against
/// `|(a+b)/2|^(m+1) + 1/8 max(|a|^(m-1), |b|^(m-1)) |a-b|^2`.
pub fn midpoint_gap(a: f64, b: f64, m: f64) -> (f64, f64) {
    let p = m + 1.0;
    let lhs = 0.5 * a.abs().powf(p) + 0.5 * b.abs().powf(p);
    let rhs = (0.5 * (a + b)).abs().powf(p) + 0.125 * a.abs().max(b.abs()).powf(m - 1.0) * (a - b).powi(2);
    (lhs, rhs)
}

/// The contract `lhs >= rhs - 1e-12 (1 + |lhs|)` shared by both inequalities.
pub fn gap_holds(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - 1e-12 * (1.0 + lhs.abs())
}

/// `(s, (1 - s) cross_term)` for a fixed profile, re-assembling per `s`.
pub fn s_to_one_diagnostic(
    grid: &Arc<Grid>,
    profile: impl Fn(f64) -> f64,
    s_list: &[f64],
    quad_order: usize,
) -> Result<Vec<(f64, f64)>> {
    let phi = grid.sample(&profile);
    s_list
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidParams(format!("s must lie in (0, 1), got {s}")));
            }
            let form = StiffnessForm::assemble(grid, s, quad_order)?;
            Ok((s, (1.0 - s) * cross_term(&form, &phi)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frlap::DEFAULT_QUAD_ORDER;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (Arc<Grid>, StiffnessForm, EnergyParams) {
        let g = Grid::new(-1.0, 1.0, n).unwrap();
        let form = StiffnessForm::assemble(&g, 0.5, DEFAULT_QUAD_ORDER).unwrap();
        (g, form, EnergyParams::with_default_alpha(0.5, 2.0).unwrap())
    }

    #[test]
    fn zero_even_and_small_negative() {
        let (g, form, p) = setup(48);
        let e0 = energy(&form, &p, &g.zeros()).unwrap();
        assert_eq!(e0.total, 0.0);
        let phi = g.sample(|x| (1.0 - x * x) * (2.0 + x.sin()));
        let e = energy(&form, &p, &phi).unwrap();
        let em = energy(&form, &p, &phi.neg()).unwrap();
        assert_eq!(e.total, em.total);
        assert_eq!(e.seminorm_half, em.seminorm_half);
        assert!((e.total - (e.seminorm_half - e.potential)).abs() <= 1e-12 * e.scale());
        for t in [1e-2, 1e-4] {
            assert!(energy(&form, &p, &phi.scale(t)).unwrap().total < 0.0);
        }
    }

    #[test]
    fn params_mismatch() {
        let (g, form, _) = setup(16);
        let p = EnergyParams::with_default_alpha(0.4, 2.0).unwrap();
        assert!(matches!(energy(&form, &p, &g.zeros()), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn decomposition_identity_and_cross_sign() {
        let (g, form, p) = setup(64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..g.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let phi = GridFunction::new(&g, vals).unwrap();
            let e = energy(&form, &p, &phi).unwrap();
            let ep = energy(&form, &p, &pos_part(&phi)).unwrap();
            let en = energy(&form, &p, &neg_part(&phi)).unwrap();
            let sum = ep.total + en.total + e.cross;
            assert!((e.total - sum).abs() <= 1e-12 * e.scale());
            assert!(e.cross > 0.0);
        }
        let nonneg = g.sample(|x| 1.0 - x * x);
        assert_eq!(cross_term(&form, &nonneg).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_nonnegative_pairs_have_nonpositive_form() {
        let (g, form, _) = setup(40);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let split = rng.random_range(5..35);
            let u = GridFunction::new(
                &g,
                (0..40).map(|i| if i < split { rng.random_range(0.0..1.0) } else { 0.0 }).collect(),
            )
            .unwrap();
            let v = GridFunction::new(
                &g,
                (0..40).map(|i| if i >= split { rng.random_range(0.0..1.0) } else { 0.0 }).collect(),
            )
            .unwrap();
            assert!(form.bilinear(&u, &v).unwrap() <= 0.0);
            let sym = form.bilinear(&v, &u).unwrap();
            assert!((sym - form.bilinear(&u, &v).unwrap()).abs() <= 1e-12 * sym.abs().max(1.0));
        }
    }

    #[test]
    fn residuals_vanish_at_zero_and_detect_noncritical() {
        let (g, form, p) = setup(48);
        assert_eq!(critical_residual(&form, &p, &g.zeros()).unwrap(), 0.0);
        assert_eq!(nehari_residual(&form, &p, &g.zeros()).unwrap(), (0.0, 0.0));
        let phi = g.sample(|x| (1.0 - x * x) * 3.0);
        let (_, r2) = nehari_residual(&form, &p, &phi).unwrap();
        assert!(r2 > 1e-3);
        assert!(critical_residual(&form, &p, &phi).unwrap() > 1e-3);
    }

    #[test]
    fn coercivity_constant_formula() {
        let p = EnergyParams::new(0.5, 2.0, 1.0).unwrap();
        assert!((coercivity_constant(&p, 2.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let p2 = EnergyParams::new(0.5, 2.0, 2.0).unwrap();
        let ratio = coercivity_constant(&p2, 2.0).unwrap() / coercivity_constant(&p, 2.0).unwrap();
        assert!((ratio - 2f64.powf(2.0 / (2.0 - p.q))).abs() < 1e-12 * ratio);
        assert!(coercivity_constant(&p, 0.0).is_err());
        // prefactor (2-q)/(2q) vanishes as q -> 2 (m -> 1)
        let near_one = EnergyParams::new(0.5, 1.0 + 1e-6, 1.0).unwrap();
        assert!(coercivity_constant(&near_one, 2.0).unwrap() < 1e-6);
    }

    #[test]
    fn scalar_inequality_examples() {
        assert_eq!(bregman_gap(0.7, 0.7, 2.5), (0.0, 0.0));
        let (lhs, rhs) = bregman_gap(1.0, 0.0, 2.0);
        assert!((lhs - 1.0 / 3.0).abs() < 1e-15);
        assert!((rhs - 1.0 / 27.0).abs() < 1e-15);
        assert!(gap_holds(lhs, rhs));
        let (_, rhs) = bregman_gap(1.0, 0.0, 3.0);
        // C0(3) = 1/64 and g(1) - g(0) = 1
        assert!((rhs - 1.0 / 64.0).abs() < 1e-15);

        let (lhs, rhs) = midpoint_gap(1.3, 1.3, 2.0);
        assert!((lhs - rhs).abs() < 1e-14);
        assert_eq!(midpoint_gap(1.0, -1.0, 2.0), (1.0, 0.5));
        assert_eq!(midpoint_gap(2.0, 0.0, 3.0), (8.0, 3.0));
    }

    proptest! {
        #[test]
        fn scalar_inequalities_hold(a in -5.0f64..5.0, b in -5.0f64..5.0, m in 1.01f64..6.0) {
            let (l, r) = bregman_gap(a, b, m);
            prop_assert!(gap_holds(l, r));
            let (l, r) = midpoint_gap(a, b, m);
            prop_assert!(gap_holds(l, r));
        }
    }
}
