//! Characteristics `y' = F(y, t)` of the drift field, the displacement map
//! over one period, rotation estimates and the small-σ transport-sign
//! prediction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{RatchetError, Result};
use crate::potentials::ForceProtocol;
use crate::solver::{average_velocity, find_periodic_solution, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step, relative to the interval length, before giving up.
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-13, min_step: 1e-14 }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Integrates the scalar ODE `y' = f(t, y)` from `t0` to `t1` with adaptive
/// Dormand–Prince steps, landing exactly on `t1`.
pub fn dopri5(f: impl Fn(f64, f64) -> f64, t0: f64, y0: f64, t1: f64, opts: OdeOptions) -> Result<f64> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let (mut t, mut y) = (t0, y0);
    let mut h = dir * (span.abs() / 16.0).min(0.01 * span.abs().max(1.0));
    let h_min = opts.min_step * span.abs();
    let mut k = [0.0; 7];
    k[0] = f(t, y);
    loop {
        let remaining = t1 - t;
        if remaining * dir <= 0.0 {
            return Ok(y);
        }
        let last = (h * dir) >= remaining * dir;
        let step = if last { remaining } else { h };
        for s in 1..7 {
            let incr: f64 = (0..s).map(|j| A[s][j] * k[j]).sum();
            k[s] = f(t + C[s] * step, y + step * incr);
        }
        let y_new = y + step * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err_abs = (step * (0..7).map(|j| E[j] * k[j]).sum::<f64>()).abs();
        let scale = opts.atol + opts.rtol * y.abs().max(y_new.abs());
        let err = err_abs / scale;
        if !err.is_finite() {
            return Err(RatchetError::StepUnderflow { t });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            y = y_new;
            k[0] = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
        if h.abs() < h_min && t != t1 {
            return Err(RatchetError::StepUnderflow { t });
        }
    }
}

/// Advances the characteristic through one period starting at phase 0.
fn one_period(p: &ForceProtocol, y0: f64, opts: OdeOptions) -> Result<f64> {
    let period = p.period();
    let mut knots = p.segment_starts();
    knots.push(period);
    let mut y = y0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        y = match p {
            // The field is fixed on the segment; evaluate it there, not at the jumps.
            ForceProtocol::Piecewise(_) => {
                let field = p.field_at(mid);
                dopri5(|_, y| field.eval(y.rem_euclid(1.0)), a, y, b, opts)?
            }
            ForceProtocol::Traveling { .. } => dopri5(|t, y| p.force_at(y, t), a, y, b, opts)?,
        };
    }
    Ok(y)
}

/// Lift of the characteristic through `y0`, sampled at `t = kT` for `k = 0..=periods`.
pub fn integrate_characteristic(p: &ForceProtocol, y0: f64, periods: usize) -> Result<Vec<f64>> {
    integrate_characteristic_with(p, y0, periods, OdeOptions::default())
}

pub fn integrate_characteristic_with(p: &ForceProtocol, y0: f64, periods: usize, opts: OdeOptions) -> Result<Vec<f64>> {
    if periods == 0 {
        return Err(RatchetError::InvalidParameter("need at least one period".into()));
    }
    p.validate()?;
    let mut out = Vec::with_capacity(periods + 1);
    out.push(y0);
    let mut y = y0;
    for _ in 0..periods {
        y = one_period(p, y, opts)?;
        out.push(y);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Positive,
    Negative,
    ZeroOrUndetermined,
}

/// Displacement threshold separating a decisive sign from zero.
pub const DISPLACEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationReport {
    pub initial_conditions: Vec<f64>,
    /// `y(T) − y(0)` for each scanned initial condition.
    pub displacements: Vec<f64>,
    /// `(y(KT) − y(0))/K` from `y0 = 0`.
    pub rotation_estimate: f64,
    pub periods: usize,
    pub classification: Classification,
    pub min_displacement: f64,
    pub max_displacement: f64,
}

pub fn poincare_displacement_scan(p: &ForceProtocol, m: usize) -> Result<RotationReport> {
    poincare_displacement_scan_with(p, m, 32)
}

/// Scans `m` initial conditions and estimates the rotation over `k` periods.
pub fn poincare_displacement_scan_with(p: &ForceProtocol, m: usize, k: usize) -> Result<RotationReport> {
    if m < 8 {
        return Err(RatchetError::InvalidParameter(format!("need at least 8 initial conditions, got {m}")));
    }
    let ys: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let displacements = ys.par_iter().map(|&y0| Ok(one_period(p, y0, OdeOptions::default())? - y0)).collect::<Result<Vec<f64>>>()?;
    let min_displacement = displacements.iter().copied().fold(f64::INFINITY, f64::min);
    let max_displacement = displacements.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let classification = if min_displacement > DISPLACEMENT_TOL {
        Classification::Positive
    } else if max_displacement < -DISPLACEMENT_TOL {
        Classification::Negative
    } else {
        Classification::ZeroOrUndetermined
    };
    let traj = integrate_characteristic(p, 0.0, k)?;
    let rotation_estimate = (traj[k] - traj[0]) / k as f64;
    Ok(RotationReport { initial_conditions: ys, displacements, rotation_estimate, periods: k, classification, min_displacement, max_displacement })
}

/// Sign of `v∞` for sufficiently small σ, when the displacement scan decides it.
pub fn predict_transport_sign(p: &ForceProtocol) -> Classification {
    match poincare_displacement_scan(p, 8) {
        Ok(r) => r.classification,
        Err(e) => {
            log::warn!("displacement scan failed: {e}");
            Classification::ZeroOrUndetermined
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureRow {
    pub sigma: f64,
    pub v_pde: f64,
    pub r_over_t: f64,
    pub gap: f64,
}

/// Measured `v∞(σ)` against the rotation estimate per unit time. Exploratory.
pub fn conjecture_table(p: &ForceProtocol, sigmas: &[f64], cfg: SolverConfig) -> Result<Vec<ConjectureRow>> {
    if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(RatchetError::InvalidParameter("sigmas must be strictly decreasing".into()));
    }
    let report = poincare_displacement_scan(p, 8)?;
    let r_over_t = report.rotation_estimate / p.period();
    sigmas
        .par_iter()
        .map(|&sigma| {
            let orbit = find_periodic_solution(p, sigma, cfg)?;
            let v = average_velocity(&orbit);
            Ok(ConjectureRow { sigma, v_pde: v, r_over_t, gap: (v - r_over_t).abs() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{BasePotential, ForceField, TiltProtocol};

    fn autonomous(field: ForceField) -> ForceProtocol {
        ForceProtocol::stationary(field)
    }

    /// `F(y) = c − s·sin(2πy)`.
    fn wavy(c: f64, s: f64) -> ForceProtocol {
        autonomous(ForceField { potential: BasePotential::Cosine { k: 1, a: -s / (2.0 * std::f64::consts::PI) }, scale: 1.0, offset: c })
    }

    #[test]
    fn wavy_field_is_what_it_claims() {
        let p = wavy(2.0, 1.0);
        for y in [0.0, 0.1, 0.25, 0.6] {
            let expect = 2.0 - (2.0 * std::f64::consts::PI * y).sin();
            assert!((p.force_at(y, 0.3) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn characteristic_examples() {
        let c = autonomous(ForceField::constant(0.7));
        let traj = integrate_characteristic(&c, 0.2, 5).unwrap();
        for (k, y) in traj.iter().enumerate() {
            assert!((y - (0.2 + 0.7 * k as f64)).abs() < 1e-10);
        }
        let eq = wavy(0.0, 1.0);
        assert!(integrate_characteristic(&eq, 0.0, 4).unwrap().iter().all(|y| y.abs() < 1e-12));
        let fast = wavy(2.0, 1.0);
        let traj = integrate_characteristic(&fast, 0.0, 10).unwrap();
        assert!(traj.windows(2).all(|w| w[1] - w[0] >= 1.0));
    }

    #[test]
    fn characteristic_matches_closed_form_period() {
        // For F = c + sin(2πy) with c > 1 the passage time over one cell is 1/√(c² − 1).
        let c: f64 = 2.0;
        let passage = 1.0 / (c * c - 1.0).sqrt();
        let p = ForceProtocol::Piecewise(vec![crate::potentials::ForceSegment {
            duration: passage,
            field: ForceField { potential: BasePotential::Cosine { k: 1, a: 1.0 / (2.0 * std::f64::consts::PI) }, scale: 1.0, offset: c },
        }]);
        let traj = integrate_characteristic(&p, 0.0, 3).unwrap();
        for (k, y) in traj.iter().enumerate() {
            assert!((y - k as f64).abs() < 1e-10, "{k}: {y}");
        }
    }

    #[test]
    fn scan_examples() {
        let r = poincare_displacement_scan(&autonomous(ForceField::constant(0.3)), 8).unwrap();
        assert_eq!(r.classification, Classification::Positive);
        assert!((r.rotation_estimate - 0.3).abs() < 1e-10);
        assert_eq!(poincare_displacement_scan(&wavy(0.0, 1.0), 8).unwrap().classification, Classification::ZeroOrUndetermined);
        assert_eq!(poincare_displacement_scan(&wavy(2.0, 1.0), 8).unwrap().classification, Classification::Positive);
        assert_eq!(poincare_displacement_scan(&wavy(-2.0, 1.0), 8).unwrap().classification, Classification::Negative);
    }

    #[test]
    fn prediction_examples() {
        assert_eq!(predict_transport_sign(&autonomous(ForceField::constant(0.3))), Classification::Positive);
        let sq = TiltProtocol::square_wave(BasePotential::Zero, 1.0, 1.0).unwrap().to_force();
        assert_eq!(predict_transport_sign(&sq), Classification::ZeroOrUndetermined);
    }

    #[test]
    fn lift_equivariance_and_rotation_uniqueness() {
        let tilt = TiltProtocol::square_wave(BasePotential::cosine(), 8.0, 1.0).unwrap().to_force();
        for p in [wavy(2.0, 1.0), tilt] {
            let a = integrate_characteristic(&p, 0.37, 6).unwrap();
            let b = integrate_characteristic(&p, 1.37, 6).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((y - x - 1.0).abs() < 1e-9);
            }
            let k = 32;
            let est: Vec<f64> = (0..8)
                .map(|i| {
                    let tr = integrate_characteristic(&p, i as f64 / 8.0, k).unwrap();
                    (tr[k] - tr[0]) / k as f64
                })
                .collect();
            let spread = est.iter().copied().fold(f64::NEG_INFINITY, f64::max) - est.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(spread <= 2.0 / k as f64 + 1e-6);
            let r = poincare_displacement_scan(&p, 8).unwrap();
            match r.classification {
                Classification::Positive => assert!(r.rotation_estimate > 0.0),
                Classification::Negative => assert!(r.rotation_estimate < 0.0),
                Classification::ZeroOrUndetermined => {}
            }
        }
    }

    #[test]
    fn conjecture_for_constant_field() {
        let p = autonomous(ForceField::constant(0.4));
        let cfg = SolverConfig { n: 64, dt: 0.5, ..SolverConfig::default() };
        let rows = conjecture_table(&p, &[0.1, 0.01], cfg).unwrap();
        for r in rows {
            assert!((r.v_pde - 0.4).abs() < 1e-10 && r.gap < 1e-9);
        }
        assert!(conjecture_table(&p, &[0.01, 0.1], cfg).is_err());
    }
}
