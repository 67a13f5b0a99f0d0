//! One function per subcommand. Each writes its artifacts before reporting a
//! numerical failure, so partial results stay inspectable.

use serde::Serialize;
use weakkam_core::characteristics::{self, CharacteristicState};
use weakkam_core::critical::{self, Classification, CriticalError, DriftReport};
use weakkam_core::longtime;
use weakkam_core::oracle;
use weakkam_core::propagator::{self, PropagatorError, StepStats};
use weakkam_core::{HamiltonianModel, PeriodicGrid, Potential, Scheme, SpaceTimeField, TimeGrid, ValueField, BIG};

use crate::config::Resolved;
use crate::output::{field_csv, slice_csv, trajectory_csv, Artifacts};
use crate::{CliError, Command};

pub fn execute(
    command: Command,
    r: &Resolved,
    art: &mut Artifacts,
    warnings: &mut Vec<String>,
) -> Result<(), CliError> {
    match command {
        Command::Evolve => evolve(r, art, warnings),
        Command::Fundamental => fundamental(r, art, warnings),
        Command::Picard => picard(r, art, warnings),
        Command::Characteristics => characteristics(r, art, warnings),
        Command::MinChar => min_char(r, art, warnings),
        Command::CriticalValue => critical_value(r, art),
        Command::Stationary => stationary(r, art),
        Command::Aubry => aubry(r, art, warnings),
        Command::Barrier => barrier(r, art),
        Command::OracleCheck => oracle_check(r, art),
    }
}

fn stats_warnings(stats: &StepStats, warnings: &mut Vec<String>) {
    if stats.binding_nodes > 0 {
        warnings.push(format!(
            "velocity cap binding at {} node-steps; increase scheme.window_radius",
            stats.binding_nodes
        ));
    }
}

#[derive(Serialize)]
struct FieldReport {
    steps: usize,
    dt: f64,
    horizon: f64,
    velocity_cap: f64,
    bellman_residual: f64,
    binding_nodes: usize,
    unreached_nodes: usize,
    disconnected_nodes: usize,
    final_min: f64,
    final_max: f64,
    final_mean: f64,
}

fn field_report(r: &Resolved, field: &SpaceTimeField) -> Result<FieldReport, CliError> {
    let last = field.final_field();
    let live: Vec<f64> = last.values.iter().copied().filter(|v| *v < BIG / 2.0).collect();
    let mean = if live.is_empty() { f64::NAN } else { live.iter().sum::<f64>() / live.len() as f64 };
    Ok(FieldReport {
        steps: field.steps(),
        dt: field.tgrid.dt(),
        horizon: field.tgrid.horizon(),
        velocity_cap: r.scheme.velocity_cap(&r.grid, r.tgrid.dt()),
        bellman_residual: field.bellman_residual(&r.model)?,
        binding_nodes: field.stats.binding_nodes,
        unreached_nodes: field.stats.unreached_nodes,
        disconnected_nodes: field.disconnected_nodes,
        final_min: live.iter().copied().fold(f64::INFINITY, f64::min),
        final_max: live.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_mean: mean,
    })
}

fn write_field(
    r: &Resolved,
    field: &SpaceTimeField,
    art: &mut Artifacts,
    warnings: &mut Vec<String>,
) -> Result<(), CliError> {
    stats_warnings(&field.stats, warnings);
    let out = &r.config.output;
    if out.csv() {
        art.write_text("field.csv", &field_csv(field, out.stride))?;
    }
    if out.json() {
        art.write_json("report.json", &field_report(r, field)?)?;
    }
    Ok(())
}

fn evolve(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let field = propagator::evolve(&r.model, &r.phi, r.tgrid, r.scheme)?;
    write_field(r, &field, art, warnings)
}

fn fundamental(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let src = &r.config.source;
    let field = propagator::fundamental_solution(&r.model, r.grid, src.node, src.u0, r.tgrid, r.scheme)?;
    write_field(r, &field, art, warnings)
}

#[derive(Serialize)]
struct PicardReport {
    converged: bool,
    iterations: usize,
    gaps: Vec<f64>,
    /// `g_{n+1} / g_n`.
    ratios: Vec<f64>,
    burn_in: usize,
    /// Sup-norm distance to the step-mode fundamental solution over entries live in both.
    step_agreement: Option<f64>,
}

fn gap_ratios(gaps: &[f64]) -> Vec<f64> {
    gaps.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
}

fn picard(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let src = &r.config.source;
    let burn_in = propagator::PicardTrace::burn_in(r.model.lipschitz_constant(), r.tgrid.horizon());
    let solved = propagator::picard_solve(&r.model, r.grid, src.node, src.u0, r.tgrid, r.scheme, r.config.picard_params());
    match solved {
        Ok((field, trace)) => {
            let step = propagator::fundamental_solution(&r.model, r.grid, src.node, src.u0, r.tgrid, r.scheme)?;
            let agreement = field
                .values
                .iter()
                .zip(&step.values)
                .filter(|(a, b)| **a < BIG / 2.0 && **b < BIG / 2.0)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if r.config.output.csv() {
                stats_warnings(&field.stats, warnings);
                art.write_text("field.csv", &field_csv(&field, r.config.output.stride))?;
            }
            let report = PicardReport {
                converged: true,
                iterations: trace.iterations,
                ratios: gap_ratios(&trace.gaps),
                gaps: trace.gaps,
                burn_in,
                step_agreement: Some(agreement),
            };
            art.write_json("picard.json", &report)?;
            Ok(())
        }
        Err(PropagatorError::NonConvergence { trace }) => {
            let report = PicardReport {
                converged: false,
                iterations: trace.iterations,
                ratios: gap_ratios(&trace.gaps),
                gaps: trace.gaps.clone(),
                burn_in,
                step_agreement: None,
            };
            art.write_json("picard.json", &report)?;
            Err(PropagatorError::NonConvergence { trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ShootRow {
    target: f64,
    p0: f64,
    winding: i32,
    u_final: f64,
    hit_error: f64,
}

#[derive(Serialize)]
struct TrajectoryReport {
    initial: CharacteristicState,
    final_state: CharacteristicState,
    t: f64,
    n_steps: usize,
    truncated: bool,
}

fn characteristics(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let c = &r.config.characteristics;
    // continuous time: no alignment with the DP time grid needed here
    let t = r.config.time.horizon;
    let init = CharacteristicState::new(c.x0, c.u0, c.p0);
    let traj = characteristics::integrate(&r.model, init, t, c.n_steps)?;
    if traj.truncated {
        warnings.push("trajectory truncated at the overflow guard".into());
    }
    if r.config.output.csv() {
        art.write_text("trajectory.csv", &trajectory_csv(&traj))?;
    }
    if r.config.output.json() {
        let report = TrajectoryReport { initial: init, final_state: traj.last(), t, n_steps: c.n_steps, truncated: traj.truncated };
        art.write_json("trajectory.json", &report)?;
    }
    if !c.targets.is_empty() {
        let mut rows = Vec::new();
        for &target in &c.targets {
            let hits = characteristics::shoot(&r.model, r.grid.length(), c.x0, c.u0, target, t, &c.shoot)?;
            if hits.is_empty() {
                warnings.push(format!("no characteristic from x0 = {} reaches {target}", c.x0));
            }
            rows.extend(hits.into_iter().map(|h| ShootRow {
                target,
                p0: h.p0,
                winding: h.winding,
                u_final: h.final_state.u,
                hit_error: h.hit_error,
            }));
        }
        art.write_json("shoot.json", &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MinCharReport {
    t: f64,
    targets: Vec<f64>,
    characteristics: Vec<f64>,
    /// Nearest grid node of each target and the evolve value there.
    evolve_nodes: Vec<usize>,
    evolve: Vec<f64>,
    max_abs_difference: f64,
}

fn min_char(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let c = &r.config.characteristics;
    if c.targets.is_empty() {
        return Err(CliError::Config("min-char needs characteristics.targets".into()));
    }
    let t = r.tgrid.horizon();
    let values = characteristics::min_over_characteristics_many(&r.model, &r.phi, &c.targets, t, &c.shoot)?;
    let field = propagator::evolve(&r.model, &r.phi, r.tgrid, r.scheme)?;
    stats_warnings(&field.stats, warnings);
    let last = field.final_field();
    let nodes: Vec<usize> = c.targets.iter().map(|&x| r.grid.nearest_node(x)).collect();
    let evolved: Vec<f64> = nodes.iter().map(|&i| last.values[i]).collect();
    let diff = values.iter().zip(&evolved).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let report = MinCharReport {
        t,
        targets: c.targets.clone(),
        characteristics: values,
        evolve_nodes: nodes,
        evolve: evolved,
        max_abs_difference: diff,
    };
    art.write_json("min_char.json", &report)
}

#[derive(Serialize)]
struct CriticalReport {
    status: &'static str,
    message: String,
    c_star: Option<f64>,
    mane_value: Option<f64>,
    entries: Vec<DriftReport>,
}

fn critical_value(r: &Resolved, art: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &r.config.critical;
    if cfg.bracket.is_none() && cfg.shifts.is_empty() {
        return Err(CliError::Config("critical-value needs critical.bracket or critical.shifts".into()));
    }
    let params = r.config.drift_params();
    let mut entries = Vec::new();
    let mut c_star = None;
    let mut status = "classified";
    let mut message = String::new();
    if !cfg.shifts.is_empty() {
        let rep = critical::classify_shifts(&r.model, &r.phi, &cfg.shifts, &params)?;
        c_star = rep.c_star;
        entries.extend(rep.entries);
        message = match c_star {
            Some(c) => format!("bounded at c = {c}"),
            None => "no tested shift is bounded".into(),
        };
    }
    if let Some([lo, hi]) = cfg.bracket {
        match critical::critical_search(&r.model, &r.phi, lo, hi, &params, cfg.max_bisect) {
            Ok(rep) => {
                status = "bracketed";
                c_star = rep.c_star;
                message = format!("critical value bracketed in [{lo}, {hi}]");
                entries.extend(rep.entries);
            }
            Err(CriticalError::NoBracket { lo, hi }) => {
                status = "no_bracket";
                c_star = None;
                message = if lo.classification == Classification::Bounded && hi.classification == Classification::Bounded {
                    "no bracket: bounded at both ends".into()
                } else if lo.classification == Classification::Bounded || hi.classification == Classification::Bounded {
                    "no bracket".into()
                } else {
                    "no bracket: diverges for all tested c".into()
                };
                entries.push(lo);
                entries.push(hi);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mane_value = critical::mane_value_frozen(&r.model, cfg.mane_a, cfg.mane_n_fine, r.grid.length()).ok();
    let report = CriticalReport { status, message, c_star, mane_value, entries };
    art.write_json("critical.json", &report)
}

#[derive(Serialize)]
struct StationaryReport {
    mode: longtime::StationaryMode,
    converged: bool,
    iterations: usize,
    fixed_point_residual: f64,
    u_star: Vec<f64>,
}

fn solve_stationary(r: &Resolved, art: &mut Artifacts) -> Result<longtime::StationaryResult, CliError> {
    let st = longtime::stationary_solve(&r.model, &r.phi, &r.config.longtime_params())?;
    if r.config.output.csv() {
        art.write_text("u_star.csv", &slice_csv(st.iterations as f64 * r.tgrid.dt(), &r.grid, &st.u_star.values))?;
    }
    Ok(st)
}

fn stationary(r: &Resolved, art: &mut Artifacts) -> Result<(), CliError> {
    let st = solve_stationary(r, art)?;
    let report = StationaryReport {
        mode: st.mode,
        converged: st.converged,
        iterations: st.iterations,
        fixed_point_residual: st.fixed_point_residual,
        u_star: st.u_star.values.clone(),
    };
    art.write_json("stationary.json", &report)?;
    if !st.converged {
        return Err(CliError::Numerical(format!(
            "stationary iteration did not converge (residual {:e} after {} steps)",
            st.fixed_point_residual, st.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct Residuals {
    fixed_point: f64,
    representation: Option<f64>,
}

#[derive(Serialize)]
struct AubryJson {
    u_star: Vec<f64>,
    barrier_diag: Vec<f64>,
    aubry_nodes: Vec<usize>,
    u_on_aubry: Vec<f64>,
    aubry_tol: f64,
    escalations: u32,
    flagged: bool,
    residuals: Residuals,
}

fn aubry(r: &Resolved, art: &mut Artifacts, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let st = solve_stationary(r, art)?;
    if !st.converged {
        return Err(CliError::Numerical(format!(
            "stationary solution not converged (residual {:e})",
            st.fixed_point_residual
        )));
    }
    let params = r.config.longtime_params();
    let (rep, deviation) = longtime::aubry_with_representation(&r.model, &st.u_star, &params)?;
    if rep.escalations > 0 {
        warnings.push(format!("Aubry tolerance escalated {} times to {}", rep.escalations, rep.aubry_tol));
    }
    let flagged = rep.flagged;
    let report = AubryJson {
        u_star: st.u_star.values,
        barrier_diag: rep.barrier_diag,
        aubry_nodes: rep.aubry_nodes,
        u_on_aubry: rep.u_on_aubry,
        aubry_tol: rep.aubry_tol,
        escalations: rep.escalations,
        flagged,
        residuals: Residuals { fixed_point: st.fixed_point_residual, representation: deviation },
    };
    art.write_json("aubry.json", &report)?;
    if flagged {
        return Err(CliError::Numerical(format!("empty Aubry set at tolerance {}", report.aubry_tol)));
    }
    Ok(())
}

#[derive(Serialize)]
struct BarrierReport {
    x_node: usize,
    u_value: f64,
    horizon: f64,
    window: f64,
    values: Vec<f64>,
}

fn barrier(r: &Resolved, art: &mut Artifacts) -> Result<(), CliError> {
    let src = &r.config.source;
    let params = r.config.longtime_params();
    let b = longtime::barrier(&r.model, r.grid, src.node, src.u0, &params)?;
    if r.config.output.csv() {
        art.write_text("barrier.csv", &slice_csv(params.horizon, &r.grid, &b.values))?;
    }
    let report = BarrierReport { x_node: src.node, u_value: src.u0, horizon: params.horizon, window: params.window, values: b.values };
    art.write_json("barrier.json", &report)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub delta: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct OracleReport {
    all_passed: bool,
    checks: Vec<OracleCheck>,
}

fn check(name: impl Into<String>, delta: f64, tol: f64) -> OracleCheck {
    OracleCheck { name: name.into(), delta, tol, pass: delta <= tol }
}

fn quad(beta: f64) -> Result<HamiltonianModel, CliError> {
    Ok(HamiltonianModel::quadratic(1.0, beta, Potential::zero())?)
}

/// The fixed oracle suite; resolution comes from the `oracle` section and the grid size.
pub fn oracle_suite(r: &Resolved) -> Result<Vec<OracleCheck>, CliError> {
    let o = &r.config.oracle;
    let mut checks = Vec::new();

    let coarse = PeriodicGrid::unit(o.n_coarse).map_err(|e| CliError::Config(e.to_string()))?;
    let ktg = TimeGrid::new(o.coarse_dt, o.k_steps).map_err(|e| CliError::Config(e.to_string()))?;
    let scheme = Scheme::explicit(o.coarse_window);
    for beta in [-1.0, 0.0, 1.0] {
        let m = quad(beta)?;
        let field = propagator::fundamental_solution(&m, coarse, 0, 1.0, ktg, scheme)?;
        let mut delta = 0.0f64;
        for target in 0..coarse.len() {
            let dp = field.value(target, o.k_steps);
            match oracle::brute_force_value(&m, &coarse, 0, 1.0, target, o.k_steps, o.coarse_dt, o.coarse_window) {
                Ok(v) => delta = delta.max((v - dp).abs()),
                Err(oracle::OracleError::Unreachable) if dp >= BIG / 2.0 => {}
                Err(oracle::OracleError::Unreachable) => delta = f64::INFINITY,
                Err(e) => return Err(e.into()),
            }
        }
        checks.push(check(format!("brute_force beta={beta}"), delta, o.exact_tol));
    }

    let flat = PeriodicGrid::unit(16).map_err(|e| CliError::Config(e.to_string()))?;
    let ode_cases = [(1.0, 1.0, 0.0, core::f64::consts::LN_2), (-1.0, 1.0, 0.0, 1.0), (1.0, 3.0, 3.0, 1.0)];
    for (beta, a, c, t) in ode_cases {
        let m = quad(beta)?.with_shift(c);
        let tg = TimeGrid::with_horizon(t, o.ode_dt).map_err(|e| CliError::Config(e.to_string()))?;
        let field = propagator::evolve(&m, &ValueField::constant(flat, a), tg, Scheme::explicit(1))?;
        let exact = oracle::constant_data_ode(beta, 0.0, a, c, tg.horizon());
        let delta = field.final_field().values.iter().fold(0.0f64, |d, v| d.max((v - exact).abs()));
        checks.push(check(format!("constant_data_ode beta={beta} a={a} c={c}"), delta, o.ode_tol));
    }

    let phi = |x: f64| 1.0 - (std::f64::consts::TAU * x).cos();
    let tg = TimeGrid::with_horizon(0.5, o.hopf_lax_dt).map_err(|e| CliError::Config(e.to_string()))?;
    let scheme = Scheme::for_lipschitz_bound(&r.grid, o.hopf_lax_dt, std::f64::consts::TAU);
    let field = propagator::evolve(&quad(0.0)?, &ValueField::from_fn(r.grid, phi), tg, scheme)?;
    let exact = oracle::hopf_lax_field(1.0, 0.0, phi, &r.grid, tg.horizon(), 20 * r.grid.len())?;
    let delta = field.final_field().values.iter().zip(&exact).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
    checks.push(check("hopf_lax kinetic t=0.5", delta, o.hopf_lax_tol));

    let traj = characteristics::integrate(&quad(-1.0)?, CharacteristicState::new(0.0, 0.0, 1.0), core::f64::consts::LN_2, 1000)?;
    let s = traj.last();
    let delta = (s.x - 1.0).abs().max((s.u - 1.0).abs()).max((s.p - 2.0).abs());
    checks.push(check("characteristic closed form", delta, o.characteristic_tol));
    Ok(checks)
}

fn oracle_check(r: &Resolved, art: &mut Artifacts) -> Result<(), CliError> {
    let checks = oracle_suite(r)?;
    let all_passed = checks.iter().all(|c| c.pass);
    println!("{:<44} {:>12} {:>10}  result", "check", "delta", "tol");
    for c in &checks {
        println!("{:<44} {:>12.3e} {:>10.1e}  {}", c.name, c.delta, c.tol, if c.pass { "pass" } else { "FAIL" });
    }
    art.write_json("oracle.json", &OracleReport { all_passed, checks: checks.clone() })?;
    if all_passed {
        Ok(())
    } else {
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Numerical(format!("oracle checks failed: {}", failed.join(", "))))
    }
}
