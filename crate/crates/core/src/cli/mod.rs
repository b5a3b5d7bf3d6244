//! Command-line workflows: each command writes CSV artifacts and a JSON
//! manifest into the output directory and maps its outcome to an exit code.

pub mod config;
pub mod plot;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{detect_stabilization, selection_predict, Sign};
use crate::energy::{bregman_gap, critical_residual, gap_holds, midpoint_gap};
use crate::error::{Error, Result};
use crate::frlap::{read_matrix_binary, symmetry_defect, write_matrix_binary, StiffnessForm};
use crate::grid::{fmt17, phi_map, pos_part, EnergyParams, Grid, GridFunction};
use crate::landscape::{h_coeffs, hidden_convexity_defect, path_profile, string_method, PathSpec};
use crate::laneemden::{ground_state, level_from_lambda1, verify_uniqueness, GroundState};
use crate::stepper::{euler_lagrange_residual, evolve, RunLedger, Stepper};

pub use config::{DatumSpec, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

/// `Lambda2_est = LAMBDA2_MARGIN * lambda_star`, i.e. 10% below the string level.
pub const LAMBDA2_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GroundState,
    Evolve,
    Selection,
    Landscape,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Evolve => "evolve",
            Command::Selection => "selection",
            Command::Landscape => "landscape",
            Command::Check => "check",
        }
    }

    /// Invariants every manifest of this command must report.
    pub fn registry(self) -> &'static [&'static str] {
        match self {
            Command::GroundState => &[
                "m_structure",
                "ground_state_positive",
                "critical_residual",
                "nehari_energy",
                "nehari_potential",
                "level_lambda1_relation",
                "uniqueness",
            ],
            Command::Evolve => &[
                "m_structure",
                "ledger_valid",
                "lyapunov_monotone",
                "entropy_dissipation",
                "terminal_critical_residual",
                "plateau_level",
            ],
            Command::Selection => &[
                "m_structure",
                "ledger_valid",
                "lyapunov_monotone",
                "entropy_dissipation",
                "terminal_critical_residual",
                "plateau_level",
                "selection_consistent",
            ],
            Command::Landscape => &[
                "m_structure",
                "string_converged",
                "saddle_level_bracket",
                "saddle_residual",
                "gamma_chord_bound",
                "hidden_convexity",
                "sigma_identity",
                "theta_below_lambda2",
            ],
            Command::Check => &[
                "bregman_gap",
                "midpoint_gap",
                "symmetry",
                "positive_definite",
                "m_structure",
                "ground_state_positive",
                "critical_residual",
                "nehari_energy",
                "nehari_potential",
                "level_lambda1_relation",
                "uniqueness",
                "sigma_identity",
                "hidden_convexity",
                "gamma_chord_bound",
                "step_inequalities",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantEntry {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
    /// Advisory entries are reported but do not change the exit code.
    pub required: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub wall_clock_seconds: f64,
    pub invariants: Vec<InvariantEntry>,
    pub headline: Value,
    pub all_passed: bool,
    pub exit_code: i32,
}

#[derive(Debug, Default)]
struct Invariants(Vec<InvariantEntry>);

impl Invariants {
    /// Passes when `worst <= tolerance`.
    fn at_most(&mut self, name: &str, worst: f64, tolerance: f64) {
        self.push(name, worst <= tolerance, worst, tolerance, true);
    }

    fn push(&mut self, name: &str, passed: bool, worst: f64, tolerance: f64, required: bool) {
        self.0.push(InvariantEntry {
            name: name.to_string(),
            passed,
            worst,
            tolerance,
            required,
        });
    }

    fn all_required_pass(&self) -> bool {
        self.0.iter().all(|e| e.passed || !e.required)
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

struct Setup {
    grid: Arc<Grid>,
    form: StiffnessForm,
    params: EnergyParams,
}

fn assemble(cfg: &RunConfig) -> Result<Setup> {
    let grid = Grid::new(cfg.a, cfg.b, cfg.n)?;
    let params = cfg.params()?;
    let form = match &cfg.cache_dir {
        Some(dir) => {
            let path = dir.join(format!(
                "A_s{}_n{}_a{}_b{}_q{}.bin",
                cfg.s, cfg.n, cfg.a, cfg.b, cfg.quad_order
            ));
            if path.exists() {
                let matrix = read_matrix_binary(BufReader::new(File::open(&path)?))?;
                StiffnessForm::from_cached(&grid, cfg.s, matrix, cfg.quad_order)?
            } else {
                let form = StiffnessForm::assemble(&grid, cfg.s, cfg.quad_order)?;
                std::fs::create_dir_all(dir)?;
                let mut buf = Vec::new();
                write_matrix_binary(form.matrix(), &mut buf)?;
                write_atomic(&path, &buf)?;
                form
            }
        }
        None => StiffnessForm::assemble(&grid, cfg.s, cfg.quad_order)?,
    };
    Ok(Setup { grid, form, params })
}

/// Builds the initial datum named by the config; `profile` is `w^(q-1)`.
pub fn build_datum(spec: &DatumSpec, grid: &Arc<Grid>, profile: &GridFunction) -> Result<GridFunction> {
    match spec {
        DatumSpec::Ground => Ok(profile.clone()),
        DatumSpec::MinusGround => Ok(profile.neg()),
        DatumSpec::BumpMix {
            amplitude,
            center,
            width,
        } => {
            let bump = grid.sample(|x| amplitude * (-((x - center) / width).powi(2)).exp());
            profile.zip_map(&bump, |a, b| a + b)
        }
        DatumSpec::Random { seed, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let vals = (0..grid.n()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
            GridFunction::new(grid, vals)
        }
        DatumSpec::File(path) => {
            if !path.exists() {
                return Err(Error::MissingFile(path.clone()));
            }
            GridFunction::read_csv(grid, BufReader::new(File::open(path)?))
        }
    }
}

fn m_structure_entry(inv: &mut Invariants, form: &StiffnessForm, required: bool) {
    let r = form.m_structure();
    let worst = r.max_offdiag.max(-r.min_row_sum);
    inv.push("m_structure", r.passed(), worst, r.tolerance, required);
}

fn ground_state_entries(inv: &mut Invariants, setup: &Setup, gs: &GroundState, cfg: &RunConfig) -> Result<Value> {
    let (form, p) = (&setup.form, &setup.params);
    let min_w = gs.w.values().iter().cloned().fold(f64::INFINITY, f64::min);
    inv.push("ground_state_positive", min_w > 0.0, -min_w, 0.0, true);
    inv.at_most("critical_residual", gs.residual, 1e-8);
    inv.at_most("nehari_energy", gs.nehari.0, 1e-8);
    inv.at_most("nehari_potential", gs.nehari.1, 1e-8);
    let closed = level_from_lambda1(p, gs.lambda1);
    inv.at_most("level_lambda1_relation", (gs.level - closed).abs() / closed.abs(), 1e-10);
    let uniq = verify_uniqueness(form, p, cfg.trials, cfg.seed)?;
    inv.push("uniqueness", uniq.passed, uniq.max_distance, 1e-6 * uniq.sup_w, true);
    Ok(json!({
        "lambda1": gs.lambda1,
        "level": gs.level,
        "iterations": gs.iterations,
        "uniqueness_max_distance": uniq.max_distance,
    }))
}

fn ledger_entries(inv: &mut Invariants, ledger: &RunLedger) {
    inv.push(
        "ledger_valid",
        ledger.valid,
        if ledger.valid { 0.0 } else { 1.0 },
        0.0,
        true,
    );
    for c in &ledger.invariants {
        inv.push(&c.name, c.passed, c.worst, c.tolerance, true);
    }
}

fn write_ledger(out: &mut Output, ledger: &RunLedger) -> Result<()> {
    out.csv("ledger.csv", |b| ledger.write_csv(b))?;
    for (key, snap) in &ledger.snapshots {
        let t = *key as f64 * 1e-9;
        out.csv(&format!("snap_t{t}.csv"), |b| snap.write_csv(b))?;
    }
    out.csv("terminal.csv", |b| ledger.terminal.write_csv(b))
}

struct Report {
    invariants: Invariants,
    headline: Value,
    /// Set when a solver failed after partial results were written.
    solver_failure: Option<String>,
}

/// Runs the evolution and stabilization verdict, recording their invariants.
fn run_evolution(
    out: &mut Output,
    inv: &mut Invariants,
    setup: &Setup,
    cfg: &RunConfig,
    gs: &GroundState,
    u0: &GridFunction,
) -> Result<(RunLedger, Option<crate::asymptotics::Verdict>)> {
    let (form, p) = (&setup.form, &setup.params);
    let target = gs.stationary_profile(p.q);
    let ledger = evolve(form, p, u0, cfg.h, cfg.horizon, &cfg.snapshots, &target)?;
    write_ledger(out, &ledger)?;
    ledger_entries(inv, &ledger);
    let verdict = if ledger.valid {
        Some(detect_stabilization(&ledger, cfg.tol, cfg.window, gs.level)?)
    } else {
        None
    };
    let converged = verdict.as_ref().is_some_and(|v| v.converged);
    let terminal_res = critical_residual(form, p, &phi_map(&ledger.terminal, p.m))?;
    // both only bind once the run has settled
    inv.push(
        "terminal_critical_residual",
        !converged || terminal_res <= 1e-4,
        terminal_res,
        1e-4,
        converged,
    );
    let plateau_gap = (ledger.energies[ledger.energies.len() - 1] - gs.level).abs();
    inv.push(
        "plateau_level",
        verdict.as_ref().is_none_or(|v| v.plateau_matches_level),
        plateau_gap,
        crate::asymptotics::PLATEAU_TOL * ledger.scale,
        converged,
    );
    Ok((ledger, verdict))
}

fn lambda2_estimate(cfg: &RunConfig, setup: &Setup, gs: &GroundState) -> Result<(f64, Option<f64>)> {
    match cfg.lambda2_est {
        Some(v) => Ok((v, None)),
        None => {
            let est = string_method(&setup.form, &setup.params, &gs.w, cfg.n_images, cfg.max_iter)?;
            Ok((LAMBDA2_MARGIN * est.lambda_star, Some(est.lambda_star)))
        }
    }
}

fn cmd_ground_state(cfg: &RunConfig, out: &mut Output) -> Result<Report> {
    let setup = assemble(cfg)?;
    let mut inv = Invariants::default();
    m_structure_entry(&mut inv, &setup.form, false);
    let gs = ground_state(&setup.form, &setup.params)?;
    let headline = ground_state_entries(&mut inv, &setup, &gs, cfg)?;
    out.csv("ground_state.csv", |b| gs.w.write_csv(b))?;
    let profile = gs.stationary_profile(setup.params.q);
    out.csv("stationary_profile.csv", |b| profile.write_csv(b))?;
    Ok(Report {
        invariants: inv,
        headline,
        solver_failure: None,
    })
}

fn cmd_evolve(cfg: &RunConfig, out: &mut Output) -> Result<Report> {
    let setup = assemble(cfg)?;
    let mut inv = Invariants::default();
    m_structure_entry(&mut inv, &setup.form, false);
    let gs = ground_state(&setup.form, &setup.params)?;
    let u0 = build_datum(&cfg.datum, &setup.grid, &gs.stationary_profile(setup.params.q))?;
    let (ledger, verdict) = run_evolution(out, &mut inv, &setup, cfg, &gs, &u0)?;
    let solver_failure = ledger.failure.clone().filter(|_| !ledger.failed_check);
    Ok(Report {
        invariants: inv,
        headline: json!({
            "lambda1": gs.lambda1,
            "level": gs.level,
            "initial_energy": ledger.energies[0],
            "final_energy": ledger.energies[ledger.energies.len() - 1],
            "verdict": verdict,
            "failure": ledger.failure,
        }),
        solver_failure,
    })
}

fn cmd_selection(cfg: &RunConfig, out: &mut Output) -> Result<Report> {
    let setup = assemble(cfg)?;
    let mut inv = Invariants::default();
    m_structure_entry(&mut inv, &setup.form, false);
    let gs = ground_state(&setup.form, &setup.params)?;
    let u0 = build_datum(&cfg.datum, &setup.grid, &gs.stationary_profile(setup.params.q))?;
    let (lambda2_est, lambda_star) = lambda2_estimate(cfg, &setup, &gs)?;
    let selection = selection_predict(&setup.form, &setup.params, &u0, lambda2_est)?;
    let (ledger, verdict) = run_evolution(out, &mut inv, &setup, cfg, &gs, &u0)?;
    let verdict = verdict.map(|mut v| {
        v.criterion_prediction = selection.prediction;
        v.criterion_branch = selection.branch;
        v
    });
    let contradicted = selection.prediction == Some(Sign::Plus)
        && verdict.as_ref().is_some_and(|v| v.converged && v.sign != Sign::Plus);
    inv.push("selection_consistent", !contradicted, if contradicted { 1.0 } else { 0.0 }, 0.0, true);
    let body = json!({
        "prediction": selection.prediction,
        "branch": selection.branch,
        "verdict": verdict,
        "numbers": selection.numbers,
        "lambda_star": lambda_star,
        "heuristic": true,
    });
    out.json("selection.json", &body)?;
    let solver_failure = ledger.failure.clone().filter(|_| !ledger.failed_check);
    Ok(Report {
        invariants: inv,
        headline: json!({
            "lambda1": gs.lambda1,
            "level": gs.level,
            "lambda2_est": lambda2_est,
            "lambda_star": lambda_star,
            "prediction": selection.prediction,
            "branch": selection.branch,
            "verdict": verdict,
        }),
        solver_failure,
    })
}

fn cmd_landscape(cfg: &RunConfig, out: &mut Output) -> Result<Report> {
    let setup = assemble(cfg)?;
    let (form, p) = (&setup.form, &setup.params);
    let mut inv = Invariants::default();
    m_structure_entry(&mut inv, form, false);
    let gs = ground_state(form, p)?;
    let est = string_method(form, p, &gs.w, cfg.n_images, cfg.max_iter)?;
    let lambda2_est = cfg.lambda2_est.unwrap_or(LAMBDA2_MARGIN * est.lambda_star);
    inv.push("string_converged", est.converged, est.iterations as f64, cfg.max_iter as f64, true);
    let bracket = est.lambda_star > gs.level && est.lambda_star <= 1e-8;
    inv.push("saddle_level_bracket", bracket, est.lambda_star, 1e-8, true);
    inv.at_most("saddle_residual", est.saddle_residual, 1e-4);
    for (k, img) in est.images.iter().enumerate() {
        out.csv(&format!("image_{k:02}.csv"), |b| img.write_csv(b))?;
    }
    out.csv("string.csv", |b| {
        writeln!(b, "image,energy")?;
        for (k, e) in est.energies.iter().enumerate() {
            writeln!(b, "{k},{}", fmt17(*e))?;
        }
        Ok(())
    })?;

    let u0 = build_datum(&cfg.datum, &setup.grid, &gs.stationary_profile(p.q))?;
    let phi0 = phi_map(&u0, p.m);
    let gamma = PathSpec::Gamma {
        w: gs.w.clone(),
        phi_plus: pos_part(&phi0),
    };
    let gamma_prof = path_profile(&gamma, form, p, cfg.n_samples)?;
    let worst_chord = gamma_prof
        .energies
        .iter()
        .zip(&gamma_prof.bounds)
        .map(|(e, b)| e - b)
        .fold(f64::NEG_INFINITY, f64::max);
    inv.push("gamma_chord_bound", gamma_prof.bound_holds, worst_chord, 0.0, true);
    let defect = hidden_convexity_defect(form, &gs.w, &pos_part(&phi0), p.q, cfg.n_samples)?;
    inv.push("hidden_convexity", defect >= -1e-10, -defect, 1e-10, true);
    let sigma_prof = path_profile(&PathSpec::Sigma { phi0: phi0.clone() }, form, p, cfg.n_samples)?;
    let worst_sigma = sigma_prof
        .energies
        .iter()
        .zip(&sigma_prof.bounds)
        .map(|(e, b)| (e - b).abs())
        .fold(0.0, f64::max);
    inv.push("sigma_identity", sigma_prof.bound_holds, worst_sigma, 1e-10, true);
    let theta = PathSpec::Theta {
        w: gs.w.clone(),
        phi0: phi0.clone(),
        level: lambda2_est,
    };
    let theta_prof = path_profile(&theta, form, p, cfg.n_samples)?;
    let selection = selection_predict(form, p, &u0, lambda2_est)?;
    // the bound is only claimed for data satisfying the second selection condition
    let applies = selection.branch == crate::asymptotics::Branch::Assnl2;
    inv.push("theta_below_lambda2", theta_prof.bound_holds, theta_prof.max_energy, lambda2_est, applies);
    out.csv("profile.csv", |b| theta_prof.write_csv(b))?;
    out.csv("gamma_profile.csv", |b| gamma_prof.write_csv(b))?;
    out.csv("sigma_profile.csv", |b| sigma_prof.write_csv(b))?;
    let coeffs = h_coeffs(form, p, &phi0)?;
    let body = json!({
        "lambda_star": est.lambda_star,
        "saddle_index": est.saddle_index,
        "saddle_residual": est.saddle_residual,
        "iterations": est.iterations,
        "converged": est.converged,
        "lambda2_est": lambda2_est,
        "level": gs.level,
        "h_coeffs": coeffs,
        "theta_max_energy": theta_prof.max_energy,
    });
    out.json("landscape.json", &body)?;
    Ok(Report {
        invariants: inv,
        headline: body,
        solver_failure: (!est.converged).then(|| "string method hit max_iter".to_string()),
    })
}

fn cmd_check(cfg: &RunConfig, out: &mut Output) -> Result<Report> {
    let mut inv = Invariants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut breg_bad, mut mid_bad) = (0usize, 0usize);
    let (mut breg_worst, mut mid_worst) = (0.0f64, 0.0f64);
    for &m in &[1.5, 2.0, 3.0, 5.0] {
        for _ in 0..cfg.check_samples {
            let a = rng.random_range(-5.0..5.0);
            let b = rng.random_range(-5.0..5.0);
            let (l, r) = bregman_gap(a, b, m);
            breg_worst = breg_worst.max(r - l);
            breg_bad += usize::from(!gap_holds(l, r));
            let (l, r) = midpoint_gap(a, b, m);
            mid_worst = mid_worst.max(r - l);
            mid_bad += usize::from(!gap_holds(l, r));
        }
    }
    inv.push("bregman_gap", breg_bad == 0, breg_worst, 1e-12, true);
    inv.push("midpoint_gap", mid_bad == 0, mid_worst, 1e-12, true);

    let setup = assemble(cfg)?;
    let (form, p, grid) = (&setup.form, &setup.params, &setup.grid);
    let amax = form.matrix().amax();
    inv.at_most("symmetry", symmetry_defect(form.matrix()), 1e-12 * amax);
    // assembly rejects indefinite matrices, so reaching here means the factorization exists
    let min_diag = form.cholesky().l().diagonal().min();
    inv.push("positive_definite", min_diag > 0.0, -min_diag, 0.0, true);
    m_structure_entry(&mut inv, form, true);

    let gs = ground_state(form, p)?;
    let headline = ground_state_entries(&mut inv, &setup, &gs, cfg)?;

    let mut sigma_worst = 0.0f64;
    let mut sigma_ok = true;
    for _ in 0..5 {
        let vals = (0..grid.n()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let phi0 = GridFunction::new(grid, vals)?;
        let prof = path_profile(&PathSpec::Sigma { phi0 }, form, p, cfg.n_samples)?;
        sigma_ok &= prof.bound_holds;
        for (e, b) in prof.energies.iter().zip(&prof.bounds) {
            sigma_worst = sigma_worst.max((e - b).abs());
        }
    }
    inv.push("sigma_identity", sigma_ok, sigma_worst, 1e-10, true);

    let mut convex_worst = f64::INFINITY;
    let mut chord_ok = true;
    let mut chord_worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let u = GridFunction::new(grid, (0..grid.n()).map(|_| rng.random_range(0.0..0.3)).collect())?;
        let v = GridFunction::new(grid, (0..grid.n()).map(|_| rng.random_range(0.0..0.3)).collect())?;
        convex_worst = convex_worst.min(hidden_convexity_defect(form, &u, &v, p.q, cfg.n_samples)?);
        let prof = path_profile(&PathSpec::Gamma { w: u, phi_plus: v }, form, p, cfg.n_samples)?;
        chord_ok &= prof.bound_holds;
        for (e, b) in prof.energies.iter().zip(&prof.bounds) {
            chord_worst = chord_worst.max(e - b);
        }
    }
    inv.push("hidden_convexity", convex_worst >= -1e-10, -convex_worst, 1e-10, true);
    inv.push("gamma_chord_bound", chord_ok, chord_worst, 0.0, true);

    let stepper = Stepper::new(form, *p, cfg.h)?;
    let mut el_worst = 0.0f64;
    for _ in 0..3 {
        let prev = GridFunction::new(grid, (0..grid.n()).map(|_| rng.random_range(-0.5..0.5)).collect())?;
        // step() checks the energy and dissipation inequalities itself
        let r = stepper.step(&prev)?;
        el_worst = el_worst.max(euler_lagrange_residual(form, p, cfg.h, &prev, &r.v_new)?);
    }
    inv.at_most("step_inequalities", el_worst, 1e-8);

    out.csv("check.csv", |b| {
        writeln!(b, "invariant,passed,worst,tolerance")?;
        for e in &inv.0 {
            writeln!(b, "{},{},{},{}", e.name, e.passed, fmt17(e.worst), fmt17(e.tolerance))?;
        }
        Ok(())
    })?;
    Ok(Report {
        invariants: inv,
        headline,
        solver_failure: None,
    })
}

/// Exit code for an error raised before or during a command.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::InvalidDomain(_)
        | Error::StepTooLarge(_)
        | Error::MissingFile(_)
        | Error::GridMismatch
        | Error::Format(_) => EXIT_CONFIG,
        Error::CheckFailed(_) | Error::Negativity(_) => EXIT_INVARIANT,
        _ => EXIT_SOLVER,
    }
}

/// Runs one command, writing artifacts and `manifest.json`; returns the exit code.
pub fn run(command: Command, cfg: &RunConfig) -> Result<i32> {
    let started = Instant::now();
    let mut out = Output::new(&cfg.output_dir)?;
    let result = match command {
        Command::GroundState => cmd_ground_state(cfg, &mut out),
        Command::Evolve => cmd_evolve(cfg, &mut out),
        Command::Selection => cmd_selection(cfg, &mut out),
        Command::Landscape => cmd_landscape(cfg, &mut out),
        Command::Check => cmd_check(cfg, &mut out),
    };
    let (report, err) = match result {
        Ok(r) => (r, None),
        Err(e) => (
            Report {
                invariants: Invariants::default(),
                headline: json!({ "error": e.to_string() }),
                solver_failure: None,
            },
            Some(e),
        ),
    };
    let all_passed = err.is_none() && report.invariants.all_required_pass();
    let exit_code = match (&err, &report.solver_failure) {
        (Some(e), _) => exit_code_for(e),
        (None, Some(_)) => EXIT_SOLVER,
        (None, None) if !all_passed => EXIT_INVARIANT,
        _ => EXIT_OK,
    };
    if err.is_none() {
        for name in command.registry() {
            debug_assert!(
                report.invariants.0.iter().any(|e| e.name == *name),
                "manifest is missing `{name}`"
            );
        }
    }
    let mut headline = report.headline;
    if let (Some(msg), Value::Object(map)) = (&report.solver_failure, &mut headline) {
        map.insert("solver_failure".into(), Value::String(msg.clone()));
    }
    if cfg.plot && err.is_none() {
        let csvs: Vec<PathBuf> = out
            .written
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .cloned()
            .collect();
        if !csvs.is_empty() {
            let script = plot::emit_plot_script(&csvs)?;
            out.write("plot.py", script.as_bytes())?;
        }
    }
    let manifest = RunManifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        invariants: report.invariants.0,
        headline,
        all_passed,
        exit_code,
    };
    out.json("manifest.json", &manifest)?;
    if let Some(e) = err {
        eprintln!("fpme {}: {e}", command.name());
    }
    Ok(exit_code)
}
