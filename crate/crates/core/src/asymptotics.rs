//! Long-time behavior of the rescaled flow: stabilization toward `+-w^(q-1)`,
//! the sign-selection criterion, and the Friendly Giant.

use serde::{Serialize, Serializer};

use crate::energy::{cross_term, energy_total_slice};
use crate::error::{Error, Result};
use crate::frlap::StiffnessForm;
use crate::grid::{lp_norm, neg_part, phi_map, pos_part, EnergyParams, GridFunction};
use crate::stepper::RunLedger;

pub const DEFAULT_TOL: f64 = 1e-3;
/// Trailing window as a fraction of the horizon.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.2;
/// Allowed gap between the plateau energy and the ground level, relative to the energy scale.
pub const PLATEAU_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
    Undetermined,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
            Sign::Undetermined => Sign::Undetermined,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sign::Plus => ser.serialize_i8(1),
            Sign::Minus => ser.serialize_i8(-1),
            Sign::Undetermined => ser.serialize_str("undetermined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Assnl1,
    Assnl2,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub converged: bool,
    pub sign: Sign,
    pub final_distance: f64,
    pub plateau_energy: f64,
    /// `|plateau_energy - level| <= PLATEAU_TOL * scale`; vacuous when not converged.
    pub plateau_matches_level: bool,
    /// `Some(Sign::Plus)` when the selection criterion predicts the positive limit.
    pub criterion_prediction: Option<Sign>,
    pub criterion_branch: Branch,
}

/// `(||v - w^(q-1)||, ||v + w^(q-1)||)` in lumped `L^(m+1)`.
pub fn omega_distance(v: &GridFunction, w: &GridFunction, m: f64) -> Result<(f64, f64)> {
    v.ensure_same_grid(w)?;
    if w.values().iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Negativity("ground state must be positive".into()));
    }
    let q = (m + 1.0) / m;
    let target = w.map(|x| x.powf(q - 1.0));
    let plus = v.zip_map(&target, |a, b| a - b)?;
    let minus = v.zip_map(&target, |a, b| a + b)?;
    Ok((lp_norm(&plus, m + 1.0), lp_norm(&minus, m + 1.0)))
}

/// Stabilization over the trailing `window` of the ledger; `level` is the ground level.
pub fn detect_stabilization(ledger: &RunLedger, tol: f64, window: f64, level: f64) -> Result<Verdict> {
    if !ledger.valid {
        return Err(Error::InvalidLedger(
            ledger.failure.clone().unwrap_or_else(|| "run did not complete".into()),
        ));
    }
    if ledger.times.is_empty() || !(window >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidLedger("empty ledger or bad window/tolerance".into()));
    }
    let horizon = ledger.horizon();
    let start = ledger
        .times
        .iter()
        .position(|&t| t >= horizon - window - 1e-12)
        .unwrap_or(ledger.times.len() - 1);
    let last = ledger.times.len() - 1;
    let plateau_energy = ledger.energies[last];
    let window_energies = &ledger.energies[start..];
    let drift = window_energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - window_energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let near_plus = ledger.dist_plus[start..].iter().all(|&d| d <= tol);
    let near_minus = ledger.dist_minus[start..].iter().all(|&d| d <= tol);
    // a run that never left its starting point has no window to speak of
    let has_window = last > 0 && ledger.times[last] - ledger.times[start] >= window - 1e-12;
    let stable = has_window && drift <= tol * ledger.scale;
    let sign = match (stable && near_plus, stable && near_minus) {
        (true, false) => Sign::Plus,
        (false, true) => Sign::Minus,
        _ => Sign::Undetermined,
    };
    let converged = sign != Sign::Undetermined;
    let final_distance = ledger.dist_plus[last].min(ledger.dist_minus[last]);
    let plateau_matches_level = !converged || (plateau_energy - level).abs() <= PLATEAU_TOL * ledger.scale;
    Ok(Verdict {
        converged,
        sign,
        final_distance,
        plateau_energy,
        plateau_matches_level,
        criterion_prediction: None,
        criterion_branch: Branch::NotApplicable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionNumbers {
    /// `F(Phi(u0)^-)`
    pub energy_minus: f64,
    /// `F(Phi(u0))`
    pub energy_total: f64,
    /// `F(Phi(u0)^+)`
    pub energy_plus: f64,
    pub cross: f64,
    pub lambda2_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub prediction: Option<Sign>,
    pub branch: Branch,
    pub numbers: SelectionNumbers,
}

/// Evaluates the two sufficient conditions for the positive limit with the
/// supplied estimate of the first excited level.
pub fn selection_predict(
    form: &StiffnessForm,
    p: &EnergyParams,
    u0: &GridFunction,
    lambda2_est: f64,
) -> Result<Selection> {
    let phi = phi_map(u0, p.m);
    let plus = pos_part(&phi);
    let minus = neg_part(&phi);
    let numbers = SelectionNumbers {
        energy_minus: energy_total_slice(form, p, minus.values()),
        energy_total: energy_total_slice(form, p, phi.values()),
        energy_plus: energy_total_slice(form, p, plus.values()),
        cross: cross_term(form, &phi)?,
        lambda2_est,
    };
    let branch = if numbers.energy_minus > 0.0 && numbers.energy_total < lambda2_est {
        Branch::Assnl1
    } else if numbers.energy_minus <= 0.0 && numbers.energy_plus + numbers.cross < lambda2_est {
        Branch::Assnl2
    } else {
        Branch::NotApplicable
    };
    let prediction = (branch != Branch::NotApplicable).then_some(Sign::Plus);
    Ok(Selection {
        prediction,
        branch,
        numbers,
    })
}

/// `S(x, t) = t^(-alpha) w(x)^(q-1)`.
pub fn friendly_giant(w: &GridFunction, t: f64, p: &EnergyParams) -> Result<GridFunction> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if w.values().iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Negativity("ground state must be positive".into()));
    }
    let c = t.powf(-p.alpha);
    Ok(w.map(|x| c * x.powf(p.q - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frlap::DEFAULT_QUAD_ORDER;
    use crate::grid::Grid;
    use crate::laneemden::ground_state;
    use crate::stepper::{evolve, rescale_to_v};

    fn setup() -> (StiffnessForm, EnergyParams, GridFunction, f64) {
        let g = Grid::new(-1.0, 1.0, 48).unwrap();
        let form = StiffnessForm::assemble(&g, 0.5, DEFAULT_QUAD_ORDER).unwrap();
        let p = EnergyParams::with_default_alpha(0.5, 2.0).unwrap();
        let gs = ground_state(&form, &p).unwrap();
        (form, p, gs.w, gs.level)
    }

    #[test]
    fn distances_at_special_points() {
        let (_, p, w, _) = setup();
        let target = w.map(|x| x.powf(p.q - 1.0));
        let (dp, dm) = omega_distance(&target, &w, p.m).unwrap();
        assert_eq!(dp, 0.0);
        assert!((dm - 2.0 * lp_norm(&target, p.m + 1.0)).abs() < 1e-15);
        let (dp, dm) = omega_distance(&w.grid().zeros(), &w, p.m).unwrap();
        assert_eq!(dp, dm);
        let (_, dm) = omega_distance(&target.neg(), &w, p.m).unwrap();
        assert_eq!(dm, 0.0);
        assert!(omega_distance(&target, &target.neg(), p.m).is_err());
    }

    #[test]
    fn friendly_giant_identities() {
        let (_, p, w, _) = setup();
        let s1 = friendly_giant(&w, 1.0, &p).unwrap();
        let target = w.map(|x| x.powf(p.q - 1.0));
        assert_eq!(s1.values(), target.values());
        let a = friendly_giant(&w, 1.7, &p).unwrap();
        let b = friendly_giant(&w, 3.4, &p).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - 2f64.powf(-p.alpha) * x).abs() <= 1e-15 * x);
        }
        for t in [0.5, 2.0, 30.0] {
            // t^alpha S(t) is the stationary profile; so is the rescaled version at tau = ln t
            let st = friendly_giant(&w, t, &p).unwrap();
            let (v, _) = rescale_to_v(&st, t - 1.0, p.alpha);
            for (x, y) in v.values().iter().zip(target.values()) {
                assert!((x - y).abs() <= 1e-14 * y);
            }
        }
        assert!(matches!(friendly_giant(&w, 0.0, &p), Err(Error::NonPositiveTime(_))));
        assert!(matches!(friendly_giant(&w, -1.0, &p), Err(Error::NonPositiveTime(_))));
    }

    #[test]
    fn selection_trivial_cases() {
        let (form, p, w, level) = setup();
        let target = w.map(|x| x.powf(p.q - 1.0));
        let est = 0.1 * level;
        let sel = selection_predict(&form, &p, &target, est).unwrap();
        assert_eq!(sel.branch, Branch::Assnl2);
        assert_eq!(sel.prediction, Some(Sign::Plus));
        assert_eq!(sel.numbers.cross, 0.0);
        let mirror = selection_predict(&form, &p, &target.neg(), est).unwrap();
        assert_eq!(mirror.prediction, None);
        assert!((mirror.numbers.energy_minus - level).abs() < 1e-12);
        // a negative bump far from the bulk of w with positive energy of its own
        let grid = w.grid().clone();
        let mut amp = 1e-3;
        loop {
            let bump = grid.sample(|x| amp * (-(x - 0.8f64).powi(2) / 0.005).exp());
            let u0 = target.zip_map(&bump, |a, b| a - b).unwrap();
            let sel = selection_predict(&form, &p, &u0, est).unwrap();
            if sel.numbers.energy_minus > 0.0 {
                assert_eq!(sel.branch, Branch::Assnl1);
                break;
            }
            amp *= 1.5;
            assert!(amp < 10.0);
        }
    }

    #[test]
    fn stabilization_verdicts() {
        let (form, p, w, level) = setup();
        let target = w.map(|x| x.powf(p.q - 1.0));
        let ledger = evolve(&form, &p, &target, 0.05, 3.0, &[], &target).unwrap();
        let v = detect_stabilization(&ledger, DEFAULT_TOL, 0.6, level).unwrap();
        assert!(v.converged && v.sign == Sign::Plus && v.plateau_matches_level);
        let ledger = evolve(&form, &p, &target.neg(), 0.05, 3.0, &[], &target).unwrap();
        let v = detect_stabilization(&ledger, DEFAULT_TOL, 0.6, level).unwrap();
        assert_eq!(v.sign, Sign::Minus);

        let zero = w.grid().zeros();
        let ledger = evolve(&form, &p, &zero, 0.05, 1.0, &[], &target).unwrap();
        let v = detect_stabilization(&ledger, DEFAULT_TOL, 0.2, level).unwrap();
        assert!(!v.converged && v.sign == Sign::Undetermined && v.plateau_energy == 0.0);

        let u0 = target.zip_map(&w.grid().sample(|x| 0.1 * (3.0 * x).sin()), |a, b| a + b).unwrap();
        let ledger = evolve(&form, &p, &u0, 0.05, 0.5, &[], &target).unwrap();
        let v = detect_stabilization(&ledger, DEFAULT_TOL, 0.1, level).unwrap();
        assert!(!v.converged);

        let mut broken = ledger.clone();
        broken.valid = false;
        assert!(matches!(
            detect_stabilization(&broken, DEFAULT_TOL, 0.1, level),
            Err(Error::InvalidLedger(_))
        ));
    }
}
