//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! `PASS`/`FAIL` line with the measured quantities before asserting.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ratchet_core::closed_form::{adiabatic_velocity, compute_coeffs, j_functional, semiadiabatic_velocity, tilted_velocity};
use ratchet_core::grid::{check_csiszar_kullback, GridFunction};
use ratchet_core::inequality::{alpha, discrete_window_inequality, evaluate_v, run_suite, Suite};
use ratchet_core::multistate::{
    classify_sign, ms_stationary, ms_velocity, random_tilt_velocity, zero_diffusion_case3, MultiStateSystem, RateField, SignCase, TransportSign,
};
use ratchet_core::potentials::{ForceSegment, TiltProtocol};
use ratchet_core::regimes::{adiabatic_scan, semiadiabatic_scan, stokes_drift_check};
use ratchet_core::small_diffusion::{integrate_characteristic, poincare_displacement_scan, Classification};
use ratchet_core::solver::{entropy_decay_trace, find_periodic_solution, find_periodic_solution_from};
use ratchet_core::spline::PeriodicSpline;
use ratchet_core::{BasePotential, ForceField, ForceProtocol, SolverConfig};

fn report(id: u32, ok: bool, detail: String) {
    println!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn cfg(n: usize) -> SolverConfig {
    SolverConfig { n, ..SolverConfig::default() }
}

fn asym() -> BasePotential {
    BasePotential::asym(1.0, 0.3)
}

/// `c + s·cos 2πx`.
fn cos_force(c: f64, s: f64) -> ForceField {
    ForceField { potential: BasePotential::Sine { k: 1, a: s / TAU }, scale: -1.0, offset: c }
}

/// `c + s·sin 2πx`.
fn sin_force(c: f64, s: f64) -> ForceField {
    ForceField { potential: BasePotential::Cosine { k: 1, a: s / TAU }, scale: 1.0, offset: c }
}

#[test]
fn criterion_01_tilted_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for psi in [BasePotential::Zero, BasePotential::cosine(), asym()] {
        for omega in [0.5, 1.0] {
            let p = ForceProtocol::stationary(ForceField::tilted(psi.clone(), omega));
            let v = find_periodic_solution(&p, 1.0, cfg(256)).unwrap().velocity;
            worst = worst.max((v - tilted_velocity(omega, &psi, 1.0).unwrap()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(1, worst <= 5e-4, format!("max |v - (-sigma A)| = {worst:.3e} ({secs:.1} s)"));
}

#[test]
fn criterion_02_stokes_drift() {
    let mut ok = true;
    let mut detail = String::new();
    for omega in [0.5, 1.0] {
        let r = stokes_drift_check(&BasePotential::cosine(), omega, 1.0, cfg(256)).unwrap();
        ok &= r.v_measured > 0.0 && r.velocity_error <= 5e-4 && r.orbit_error <= 5e-4 && r.strictly_inside;
        detail += &format!("[omega {omega}: v {:.6}, |v - limit| {:.2e}, orbit L1 {:.2e}] ", r.v_measured, r.velocity_error, r.orbit_error);
    }
    report(2, ok, detail);
}

#[test]
fn criterion_03_adiabatic_limit() {
    let s = adiabatic_scan(&asym(), 1.0, &[10.0, 20.0, 40.0], 1.0, cfg(256)).unwrap();
    let gaps: Vec<f64> = s.rows.iter().map(|r| r.gap.abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let order = s.order.unwrap_or(f64::NAN);
    report(3, monotone && order >= 0.8, format!("gaps {:?}, order {order:.3}", gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()));
}

#[test]
fn criterion_04_sign_functional() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut sign_ok, mut decisive) = (0.0f64, true, 0);
    for _ in 0..50 {
        let knots: Vec<f64> = (0..rng.gen_range(4..12)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let psi = BasePotential::Sampled(PeriodicSpline::new(knots).unwrap());
        let (ap, am) = (compute_coeffs(1.0, &psi, 1.0).unwrap().a, compute_coeffs(-1.0, &psi, 1.0).unwrap().a);
        let j = j_functional(1.0, &psi).unwrap();
        worst = worst.max((1.0 / ap + 1.0 / am - j).abs() / j.abs().max(1e-300));
        if j.abs() > 1e-7 {
            decisive += 1;
            sign_ok &= (-(ap + am) / 2.0).signum() == j.signum();
        }
    }
    report(4, sign_ok && worst <= 1e-7, format!("{decisive} decisive, max relative identity error {worst:.2e}"));
}

#[test]
fn criterion_05_symmetry_nulls() {
    let presets =
        [BasePotential::cosine(), BasePotential::Cosine { k: 2, a: 0.7 }, BasePotential::Sine { k: 1, a: 1.0 }, "fourier 0 1 0 0 0.5 0".parse().unwrap()];
    let mut worst = 0.0f64;
    for psi in &presets {
        for omega in [0.5, 1.0] {
            worst = worst.max(j_functional(omega, psi).unwrap().abs()).max(adiabatic_velocity(omega, psi).unwrap().abs());
        }
    }
    report(5, worst <= 1e-9, format!("max(|J|, |v_adiabatic|) = {worst:.2e}"));
}

#[test]
fn criterion_06_semiadiabatic_limit() {
    let psi = BasePotential::cosine();
    let s = semiadiabatic_scan(&psi, 1.0, &[40.0], &[0.02], 1.0, cfg(256)).unwrap();
    let v = s.rows[0].v_measured;
    let limit = semiadiabatic_velocity(1.0, &psi).unwrap();
    report(6, v > 0.0 && (v - limit).abs() <= 0.05, format!("v {v:.5}, limit {limit:.5}"));
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> GridFunction {
    let modes: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU))).collect();
    let raw: Vec<f64> = (0..n)
        .map(|j| {
            let x = (j as f64 + 0.5) / n as f64;
            modes.iter().enumerate().map(|(k, (a, ph))| a * ((k + 1) as f64 * TAU * x + ph).sin()).sum::<f64>().exp()
        })
        .collect();
    let mass = raw.iter().sum::<f64>() / n as f64;
    GridFunction::probability(raw.iter().map(|v| v / mass).collect()).unwrap()
}

#[test]
fn criterion_07_entropy_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ck = (0..100).map(|_| check_csiszar_kullback(&random_density(&mut rng, 128), &random_density(&mut rng, 128)).unwrap()).fold(f64::INFINITY, f64::min);

    let n = 128;
    let c = SolverConfig { n, dt: 2e-3, ..SolverConfig::default() };
    let p = TiltProtocol::square_wave(asym(), 1.5, 2.0).unwrap().to_force();
    let orbit = find_periodic_solution(&p, 0.5, c).unwrap();
    let trace = entropy_decay_trace(&random_density(&mut rng, n), &p, 0.5, &orbit, c, 6.0).unwrap();
    let rise = trace.max_increase_within(p.period(), &p.segment_starts());

    let flat = ForceProtocol::stationary(ForceField::constant(0.0));
    let uniform = find_periodic_solution(&flat, 0.2, c).unwrap();
    let g0 = GridFunction::cell_averages(n, |x| 1.0 + 0.5 * (TAU * x).cos()).unwrap();
    let decay = entropy_decay_trace(&g0, &flat, 0.2, &uniform, c, 2.0).unwrap().decay_rate_estimate;
    let bound = 0.9 * 4.0 * PI * PI * 0.2;
    report(7, ck >= -1e-9 && rise <= 1e-9 && decay >= bound, format!("CK slack min {ck:.2e}, max rise {rise:.2e}, decay {decay:.3} vs {bound:.3}"));
}

fn small_sigma_protocols() -> Vec<(&'static str, ForceProtocol)> {
    let seg = |d: f64, field: ForceField| ForceSegment { duration: d, field };
    let a = ForceProtocol::stationary(sin_force(2.0, -1.0));
    // Reflections x -> -x carry F(x, t) to -F(-x, t).
    let a_ref = ForceProtocol::stationary(sin_force(-2.0, -1.0));
    let b = ForceProtocol::Piecewise(vec![seg(0.5, cos_force(2.0, 1.5)), seg(0.5, sin_force(-0.5, 0.4))]);
    let b_ref = ForceProtocol::Piecewise(vec![seg(0.5, cos_force(-2.0, -1.5)), seg(0.5, sin_force(0.5, 0.4))]);
    vec![("2 - sin", a), ("-2 - sin", a_ref), ("switching", b), ("switching reflected", b_ref)]
}

#[test]
fn criterion_08_small_diffusion_sign() {
    let c = SolverConfig { n: 1024, tolerance: 1e-8, ..SolverConfig::default() };
    let mut ok = true;
    let mut detail = String::new();
    for (name, p) in small_sigma_protocols() {
        let scan = poincare_displacement_scan(&p, 8).unwrap();
        let expected = match scan.classification {
            Classification::Positive => 1.0,
            Classification::Negative => -1.0,
            Classification::ZeroOrUndetermined => f64::NAN,
        };
        let a = integrate_characteristic(&p, 0.37, 6).unwrap();
        let b = integrate_characteristic(&p, 1.37, 6).unwrap();
        let lift = a.iter().zip(&b).map(|(x, y)| (y - x - 1.0).abs()).fold(0.0, f64::max);
        let k = 32;
        let est: Vec<f64> = (0..8)
            .map(|i| {
                let tr = integrate_characteristic(&p, i as f64 / 8.0, k).unwrap();
                (tr[k] - tr[0]) / k as f64
            })
            .collect();
        let spread = est.iter().copied().fold(f64::NEG_INFINITY, f64::max) - est.iter().copied().fold(f64::INFINITY, f64::min);
        let v = find_periodic_solution(&p, 1e-3, c).unwrap().velocity;
        let agree = v.signum() == expected && scan.rotation_estimate.signum() == expected;
        ok &= agree && lift <= 1e-9 && spread <= 2.0 / k as f64 + 1e-6;
        detail += &format!("[{name}: {:?}, v {v:.4}, lift {lift:.1e}, spread {spread:.1e}] ", scan.classification);
    }
    report(8, ok, detail);
}

fn multistate_suite() -> Vec<(ForceField, ForceField, RateField, RateField)> {
    let r = RateField::constant;
    let c = ForceField::constant;
    vec![
        (cos_force(1.0, -1.0), cos_force(1.0, 1.0), r(1.0), r(1.0)),
        (cos_force(-1.0, 1.0), cos_force(-1.0, -1.0), r(1.0), r(2.0)),
        (sin_force(1.0, 2.0), cos_force(1.0, -1.0), r(1.0), r(1.0)),
        (c(0.5), cos_force(0.0, -1.0), r(1.0), r(1.0)),
        (c(-0.5), cos_force(0.0, -1.0), r(1.0), r(1.0)),
        (c(1.0), sin_force(0.0, 2.0), r(2.0), r(0.5)),
        (c(1.0), c(2.0), r(1.0), r(1.0)),
        (c(-1.0), c(-2.0), r(1.0), r(1.0)),
        (c(1.0), c(-2.0), r(1.0), r(1.0)),
        (cos_force(1.5, 0.7), sin_force(-2.0, 0.5), RateField { offset: 1.0, profile: BasePotential::Cosine { k: 2, a: 0.4 } }, r(0.6)),
        (sin_force(1.0, 0.5), cos_force(-1.0, 0.5), r(3.0), r(1.0)),
    ]
}

#[test]
fn criterion_09_multistate() {
    let r = RateField::constant;
    let sys = MultiStateSystem::two_state(ForceField::constant(1.0), ForceField::constant(2.0), r(1.0), r(1.0), 1.0).unwrap();
    let d = ms_stationary(&sys, cfg(64)).unwrap();
    let v_const = ms_velocity(&d, &sys);
    let pair_err = d.components().iter().flat_map(|g| g.values().iter().map(|v| (v - 0.5).abs())).fold(0.0, f64::max);

    let (mut agree, mut total, mut worst_identity) = (0, 0, 0.0f64);
    let mut cases = std::collections::BTreeSet::new();
    for (f1, f2, a, b) in multistate_suite() {
        let cls = classify_sign(&f1, &f2, &a, &b).unwrap();
        if cls.sign == TransportSign::Undetermined {
            continue;
        }
        total += 1;
        cases.insert(format!("{:?}", cls.case));
        let sys = MultiStateSystem::two_state(f1.clone(), f2.clone(), a.clone(), b.clone(), 1e-3).unwrap();
        let v = ms_velocity(&ms_stationary(&sys, cfg(256)).unwrap(), &sys);
        if v.signum() == cls.sign.as_i32() as f64 {
            agree += 1;
        }
        if cls.case == SignCase::III {
            worst_identity = worst_identity.max(zero_diffusion_case3(&f1, &f2, &a, &b).unwrap().identity_residual);
        }
    }
    let ok = (v_const - 1.5).abs() <= 1e-6 && pair_err <= 1e-6 && agree == total && total >= 10 && cases.len() == 3 && worst_identity <= 1e-8;
    report(
        9,
        ok,
        format!(
            "constants v {v_const:.9}, pair error {pair_err:.1e}, sign agreement {agree}/{total} over cases {cases:?}, identity residual {worst_identity:.1e}"
        ),
    );
}

#[test]
fn criterion_10_random_tilt_limits() {
    let psi = asym();
    let adiabatic = adiabatic_velocity(1.0, &psi).unwrap();
    let gaps: Vec<f64> = [0.1, 0.01].iter().map(|&nu| (random_tilt_velocity(1.0, &psi, nu, nu, cfg(256)).unwrap() - adiabatic).abs()).collect();
    let v_semi = random_tilt_velocity(1.0, &psi, 1.0, 0.01, cfg(256)).unwrap();
    let semi = semiadiabatic_velocity(1.0, &psi).unwrap();
    let ok = gaps[1] < gaps[0] && (v_semi - semi).abs() <= 5e-2;
    report(10, ok, format!("adiabatic gaps {:.3e} then {:.3e}, semiadiabatic |v - limit| {:.3e}", gaps[0], gaps[1], (v_semi - semi).abs()));
}

#[test]
fn criterion_11_inequality_lab() {
    let mut exact_err = 0.0f64;
    for omega in [0.5, 1.0, 2.0] {
        let v = evaluate_v(|x| (omega * x).exp(), omega, 512).unwrap();
        exact_err = exact_err.max((v - alpha(omega) / omega).abs());
    }
    let functional = run_suite(Suite::Functional, 11, 100, 1.0).unwrap().iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let sinineq = run_suite(Suite::DoubleIntegral, 13, 50, 1.0).unwrap().iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let mut window = f64::INFINITY;
    for i in 0..=40 {
        for j in 0..=40 {
            window = window.min(discrete_window_inequality(&[i as f64 * 0.05, j as f64 * 0.05], f64::sinh).unwrap());
        }
    }
    let ok = exact_err <= 1e-8 && functional >= -1e-8 && sinineq >= -1e-8 && window >= -1e-12;
    report(
        11,
        ok,
        format!("|V(exp) - alpha/omega| {exact_err:.1e}, functional min slack {functional:.2e}, sinineq min slack {sinineq:.2e}, window min {window:.2e}"),
    );
}

#[test]
fn orbit_is_unique_from_distinct_starts() {
    let p = TiltProtocol::square_wave(asym(), 1.0, 2.0).unwrap().to_force();
    let c = SolverConfig { n: 64, dt: 2e-3, ..SolverConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let orbits: Vec<GridFunction> = (0..5).map(|_| find_periodic_solution_from(&random_density(&mut rng, 64), &p, 1.0, c).unwrap().first().clone()).collect();
    for a in &orbits {
        for b in &orbits {
            assert!(ratchet_core::grid::l1_distance(a, b).unwrap() <= 10.0 * c.tolerance);
        }
    }
}
