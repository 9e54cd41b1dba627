//! One function per subcommand, each turning resolved parameters into a report.

use ratchet_core::closed_form::{compute_coeffs, stationary_density, velocity_report};
use ratchet_core::grid::l1_distance;
use ratchet_core::inequality::{run_suite, Suite};
use ratchet_core::multistate::{classify_sign, ms_stationary, ms_velocity, stationary_residual, zero_diffusion_case3, SignCase};
use ratchet_core::potentials::Squeeze;
use ratchet_core::regimes::{adiabatic_scan, homotopy_study, semiadiabatic_scan, stokes_drift_check, ScanResult};
use ratchet_core::small_diffusion::{conjecture_table, poincare_displacement_scan_with};
use ratchet_core::solver::find_periodic_solution;
use ratchet_core::{ForceField, ForceProtocol, RatchetError};

use crate::config::Params;
use crate::report::{Out, Report, Table};
use crate::CliError;

pub const COMMANDS: [&str; 12] = [
    "coeffs",
    "stationary",
    "velocity",
    "periodic",
    "rotation",
    "conjecture",
    "multistate",
    "inequality",
    "adiabatic-scan",
    "semiadiabatic-scan",
    "stokes",
    "homotopy",
];

/// Periods integrated by the rotation estimate.
const ROTATION_PERIODS: usize = 32;

/// Whether the command's natural output is a JSON object.
pub fn prefers_json(command: &str) -> bool {
    matches!(command, "coeffs" | "velocity" | "rotation" | "multistate" | "stokes")
}

pub fn run(command: &str, p: &Params) -> Result<Report, CliError> {
    match command {
        "coeffs" => coeffs(p),
        "stationary" => stationary(p),
        "velocity" => velocity(p),
        "periodic" => periodic(p),
        "rotation" => rotation(p),
        "conjecture" => conjecture(p),
        "multistate" => multistate(p),
        "inequality" => inequality(p),
        "adiabatic-scan" => scan_report(adiabatic_scan(&p.potential, p.omega, &p.periods, p.sigma, p.solver())?),
        "semiadiabatic-scan" => scan_report(semiadiabatic_scan(&p.potential, p.omega, &p.periods, &p.tau_fracs, p.sigma, p.solver())?),
        "stokes" => stokes(p),
        "homotopy" => homotopy(p),
        other => Err(CliError::config(format!("unknown command '{other}'"))),
    }
}

fn coeffs(p: &Params) -> Result<Report, CliError> {
    let c = compute_coeffs(p.omega, &p.potential, p.sigma)?;
    let v = velocity_report(p.omega, &p.potential, p.sigma)?;
    Ok(Report::default()
        .scalar("omega", c.omega)
        .scalar("sigma", c.sigma)
        .scalar("alpha", c.alpha)
        .scalar("beta_plus", c.beta_plus)
        .scalar("beta_minus", c.beta_minus)
        .scalar("beta", c.beta)
        .scalar("A", c.a)
        .scalar("B", c.b)
        .scalar("v_tilted", v.v_tilted)
        .scalar("v_adiabatic", v.v_adiabatic)
        .scalar("v_semiadiabatic", v.v_semiadiabatic)
        .scalar("J", v.j))
}

fn stationary(p: &Params) -> Result<Report, CliError> {
    let cfg = p.solver();
    let exact = stationary_density(p.omega, &p.potential, p.sigma, cfg.n)?;
    let proto = ForceProtocol::stationary(ForceField::tilted(p.potential.clone(), p.omega));
    let orbit = find_periodic_solution(&proto, p.sigma, cfg)?;
    let measured = orbit.first();
    let mut t = Table::new(&["x", "g_closed_form", "g_measured"]);
    for ((x, a), b) in exact.centers().zip(exact.values()).zip(measured.values()) {
        t.push(vec![x.into(), (*a).into(), (*b).into()]);
    }
    Ok(Report::default()
        .scalar("omega", p.omega)
        .scalar("sigma", p.sigma)
        .scalar("v_closed_form", ratchet_core::closed_form::tilted_velocity(p.omega, &p.potential, p.sigma)?)
        .scalar("v_measured", orbit.velocity)
        .scalar("l1_error", l1_distance(&exact, measured)?)
        .with_table(t))
}

fn velocity(p: &Params) -> Result<Report, CliError> {
    let (proto, exact) = p.force_protocol()?;
    let orbit = find_periodic_solution(&proto, p.sigma, p.solver())?;
    let v = orbit.velocity;
    Ok(Report::default()
        .scalar("v_measured", v)
        .scalar("v_closed_form", exact)
        .scalar("abs_error", exact.map(|e| (v - e).abs()))
        .scalar("iterations", orbit.iterations)
        .scalar("closure_residual", orbit.closure_residual)
        .scalar("v_reduced", orbit.reduced_velocity))
}

fn periodic(p: &Params) -> Result<Report, CliError> {
    let (proto, _) = p.force_protocol()?;
    let orbit = find_periodic_solution(&proto, p.sigma, p.solver())?;
    let mut t = Table::new(&["t", "x", "value"]);
    for (time, g) in &orbit.snapshots {
        for (x, v) in g.centers().zip(g.values()) {
            t.push(vec![(*time).into(), x.into(), (*v).into()]);
        }
    }
    Ok(Report::default()
        .scalar("period", orbit.period())
        .scalar("v_measured", orbit.velocity)
        .scalar("iterations", orbit.iterations)
        .scalar("closure_residual", orbit.closure_residual)
        .with_table(t))
}

fn floats(v: &[f64]) -> Out {
    Out::Arr(v.iter().map(|x| Out::Num(*x)).collect())
}

fn rotation(p: &Params) -> Result<Report, CliError> {
    let (proto, _) = p.force_protocol()?;
    let r = poincare_displacement_scan_with(&proto, p.initial_conditions, ROTATION_PERIODS)?;
    Ok(Report::default()
        .scalar("classification", format!("{:?}", r.classification))
        .scalar("rotation_estimate", r.rotation_estimate)
        .scalar("r_over_T", r.rotation_estimate / proto.period())
        .scalar("periods", r.periods)
        .scalar("min_displacement", r.min_displacement)
        .scalar("max_displacement", r.max_displacement)
        .scalar("initial_conditions", floats(&r.initial_conditions))
        .scalar("displacements", floats(&r.displacements)))
}

fn conjecture(p: &Params) -> Result<Report, CliError> {
    let (proto, _) = p.force_protocol()?;
    let rows = conjecture_table(&proto, &p.sigmas, p.solver())?;
    let mut t = Table::new(&["sigma", "v_pde", "r_over_T", "gap"]);
    for r in rows {
        t.push(vec![r.sigma.into(), r.v_pde.into(), r.r_over_t.into(), r.gap.into()]);
    }
    Ok(Report::default().with_table(t))
}

fn multistate(p: &Params) -> Result<Report, CliError> {
    let sys = p.multistate_system()?;
    let (v_measured, residual) = if sys.sigma() > 0.0 {
        let d = ms_stationary(&sys, p.solver())?;
        (Some(ms_velocity(&d, &sys)), Some(stationary_residual(&d, &sys)?))
    } else {
        (None, None)
    };
    let mut report = Report::default().scalar("states", sys.states()).scalar("sigma", sys.sigma()).scalar("v_measured", v_measured);
    let mut zero_diffusion = None;
    let (mut sign, mut case, mut note) = (Out::Null, Out::Null, Out::Null);
    if sys.states() == 2 {
        let (f1, f2) = (&sys.forces()[0], &sys.forces()[1]);
        match classify_sign(f1, f2, sys.rate(0, 1), sys.rate(1, 0)) {
            Ok(c) => {
                sign = format!("{:?}", c.sign).into();
                case = format!("{:?}", c.case).into();
                if c.case == SignCase::III {
                    zero_diffusion = Some(zero_diffusion_case3(f1, f2, sys.rate(0, 1), sys.rate(1, 0))?.velocity);
                }
            }
            Err(e @ RatchetError::CommonZero { .. }) => note = e.to_string().into(),
            Err(e) => return Err(e.into()),
        }
    } else {
        note = "sign classification covers two states only".into();
    }
    report = report
        .scalar("classification", sign)
        .scalar("case", case)
        .scalar("v_zero_diffusion", zero_diffusion)
        .scalar("stationary_residual", residual)
        .scalar("note", note);
    Ok(report)
}

fn inequality(p: &Params) -> Result<Report, CliError> {
    let suite: Suite = p.suite.parse()?;
    let rows = run_suite(suite, p.seed, p.cases, p.omega)?;
    let functional = suite == Suite::Functional;
    let mut t = if functional { Table::new(&["case_id", "slack", "distance"]) } else { Table::new(&["case_id", "slack"]) };
    for r in &rows {
        let mut row = vec![r.case_id.into(), r.slack.into()];
        if functional {
            row.push(r.distance.into());
        }
        t.push(row);
    }
    let min = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(Report::default().scalar("suite", p.suite.as_str()).scalar("cases", rows.len()).scalar("min_slack", min).with_table(t))
}

fn scan_report(s: ScanResult) -> Result<Report, CliError> {
    let with_tau = s.rows.iter().any(|r| r.tau.is_some());
    let mut t = if with_tau {
        Table::new(&["T", "tau", "v_measured", "v_limit", "gap", "iterations"])
    } else {
        Table::new(&["T", "v_measured", "v_limit", "gap", "iterations"])
    };
    for r in &s.rows {
        let mut row = vec![r.period.into()];
        if with_tau {
            row.push(r.tau.into());
        }
        row.extend([r.v_measured.into(), r.v_limit.into(), r.gap.into(), r.iterations.into()]);
        t.push(row);
    }
    Ok(Report::default().scalar("v_limit", s.limit).scalar("order", s.order).with_table(t))
}

fn stokes(p: &Params) -> Result<Report, CliError> {
    let r = stokes_drift_check(&p.potential, p.omega, p.sigma, p.solver())?;
    Ok(Report::default()
        .scalar("omega", r.omega)
        .scalar("v_measured", r.v_measured)
        .scalar("v_limit", r.v_limit)
        .scalar("gap", r.v_measured - r.v_limit)
        .scalar("orbit_error", r.orbit_error)
        .scalar("strictly_inside", r.strictly_inside))
}

fn homotopy(p: &Params) -> Result<Report, CliError> {
    let (alpha, beta) = match p.arc {
        Some(arc) => arc,
        None => {
            let sq = Squeeze::auto(p.potential.clone(), 0.0)?;
            (sq.alpha, sq.beta)
        }
    };
    let h = homotopy_study(&p.potential, alpha, beta, p.omega, &p.lambdas, p.sigma)?;
    let mut t = Table::new(&["lambda", "v_measured", "v_limit", "gap"]);
    for r in &h.rows {
        t.push(vec![r.lambda.into(), r.v_adiabatic.into(), h.limit.into(), (r.v_adiabatic - h.limit).into()]);
    }
    Ok(Report::default().scalar("alpha", alpha).scalar("beta", beta).scalar("v_limit", h.limit).scalar("positive_at_max", h.positive_at_max).with_table(t))
}
