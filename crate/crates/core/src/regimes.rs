//! Limit studies: slow square-wave tilting, short strong pulses, travelling
//! potentials and the squeeze homotopy towards a monotone potential.

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{adiabatic_velocity_sigma, semiadiabatic_velocity_sigma, stationary_density};
use crate::error::{RatchetError, Result};
use crate::grid::{l1_distance, least_squares_slope, GridFunction};
use crate::potentials::{BasePotential, ForceProtocol, Squeeze, TiltProtocol};
use crate::solver::{find_periodic_solution_from, spectral_shift, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub period: f64,
    pub tau: Option<f64>,
    pub v_measured: f64,
    pub v_limit: f64,
    pub gap: f64,
    /// Orbit period-map iterations.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub limit: f64,
    /// `p` in `|gap| ~ C·T^{−p}`, fitted on the three largest periods.
    pub order: Option<f64>,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,tau,v_measured,v_limit,gap\n");
        for r in &self.rows {
            let tau = r.tau.map(|t| format!("{t:.16e}")).unwrap_or_default();
            s.push_str(&format!("{:.16e},{tau},{:.16e},{:.16e},{:.16e}\n", r.period, r.v_measured, r.v_limit, r.gap));
        }
        s
    }
}

fn check_increasing_grid(ts: &[f64], what: &str) -> Result<()> {
    if ts.is_empty() {
        return Err(RatchetError::InvalidParameter(format!("empty {what} grid")));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RatchetError::InvalidParameter(format!("{what} grid must be positive and strictly increasing")));
    }
    Ok(())
}

/// Least-squares order over the three largest periods; `None` if any gap vanishes.
pub fn fit_order(periods: &[f64], gaps: &[f64]) -> Option<f64> {
    if periods.len() < 2 {
        return None;
    }
    let k = periods.len().min(3);
    let pts: Vec<(f64, f64)> = periods[periods.len() - k..].iter().zip(&gaps[gaps.len() - k..]).map(|(t, g)| (t.ln(), g.abs().ln())).collect();
    if pts.iter().any(|(_, g)| !g.is_finite() || *g < -30.0) {
        return None;
    }
    Some(-least_squares_slope(&pts))
}

/// Measured velocity of the orbit of `protocol`, started from `warm`.
fn measure(protocol: &ForceProtocol, warm: &GridFunction, sigma: f64, cfg: SolverConfig) -> Result<(f64, usize)> {
    let orbit = find_periodic_solution_from(warm, protocol, sigma, cfg)?;
    Ok((orbit.velocity, orbit.iterations))
}

/// Square-wave tilting `±ω` with half-periods `T/2` for every `T` in `ts`.
///
/// Each point starts from the quasi-static density of the last half-period,
/// so points are independent and run concurrently.
pub fn adiabatic_scan(psi: &BasePotential, omega: f64, ts: &[f64], sigma: f64, cfg: SolverConfig) -> Result<ScanResult> {
    check_increasing_grid(ts, "period")?;
    let limit = adiabatic_velocity_sigma(omega, psi, sigma)?;
    let warm = stationary_density(-omega, psi, sigma, cfg.n)?;
    let rows: Vec<ScanRow> = ts
        .par_iter()
        .map(|&t| {
            let p = TiltProtocol::square_wave(psi.clone(), omega, t)?.to_force();
            let (v, iterations) = measure(&p, &warm, sigma, cfg)?;
            Ok(ScanRow { period: t, tau: None, v_measured: v, v_limit: limit, gap: v - limit, iterations })
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(ScanResult { order: fit_order(ts, &gaps), rows, limit })
}

/// Protocol `[(τ, Ω), (T − τ, ω)]` with `τ = frac·T` on the grid `ts × tau_fracs`.
/// The order is fitted over `T` at the first fraction.
pub fn semiadiabatic_scan(psi: &BasePotential, omega: f64, ts: &[f64], tau_fracs: &[f64], sigma: f64, cfg: SolverConfig) -> Result<ScanResult> {
    check_increasing_grid(ts, "period")?;
    check_increasing_grid(tau_fracs, "tau fraction")?;
    if tau_fracs.iter().any(|f| *f >= 1.0) {
        return Err(RatchetError::InvalidParameter("tau fractions must lie in (0, 1)".into()));
    }
    let limit = semiadiabatic_velocity_sigma(omega, psi, sigma)?;
    let warm = stationary_density(omega, psi, sigma, cfg.n)?;
    let jobs: Vec<(f64, f64)> = ts.iter().flat_map(|&t| tau_fracs.iter().map(move |&f| (t, f))).collect();
    let rows: Vec<ScanRow> = jobs
        .par_iter()
        .map(|&(t, f)| {
            let tau = f * t;
            let p = TiltProtocol::semiadiabatic(psi.clone(), omega, t, tau)?.to_force();
            let (v, iterations) = measure(&p, &warm, sigma, cfg)?;
            Ok(ScanRow { period: t, tau: Some(tau), v_measured: v, v_limit: limit, gap: v - limit, iterations })
        })
        .collect::<Result<_>>()?;
    let first: Vec<&ScanRow> = rows.iter().step_by(tau_fracs.len()).collect();
    let gaps: Vec<f64> = first.iter().map(|r| r.gap).collect();
    Ok(ScanResult { order: fit_order(ts, &gaps), rows, limit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StokesReport {
    pub omega: f64,
    pub v_measured: f64,
    /// `ω − σA(ω)`.
    pub v_limit: f64,
    /// Largest L¹ distance between the orbit and `g*(x − ωt)` over the snapshots.
    pub orbit_error: f64,
    pub velocity_error: f64,
    /// `v` strictly between `0` and `ω`; always true for constant `ψ`.
    pub strictly_inside: bool,
}

/// Travelling potential `ψ(x − ωt)` checked against the moving-frame
/// stationary density and its velocity.
pub fn stokes_drift_check(psi: &BasePotential, omega: f64, sigma: f64, cfg: SolverConfig) -> Result<StokesReport> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(RatchetError::InvalidParameter("travelling wave needs a nonzero omega".into()));
    }
    let p = ForceProtocol::Traveling { base: psi.clone(), omega };
    let gstar = stationary_density(omega, psi, sigma, cfg.n)?;
    let orbit = find_periodic_solution_from(&gstar, &p, sigma, cfg)?;
    let mut orbit_error = 0.0f64;
    for (t, g) in &orbit.snapshots {
        let shifted = GridFunction::new(spectral_shift(gstar.values(), omega * t, false))?;
        orbit_error = orbit_error.max(l1_distance(g, &shifted)?);
    }
    let v_limit = omega + crate::closed_form::tilted_velocity(omega, psi, sigma)?;
    let v = orbit.velocity;
    let strictly_inside = if psi.is_constant() {
        true
    } else if omega > 0.0 {
        v > 0.0 && v < omega
    } else {
        v < 0.0 && v > omega
    };
    Ok(StokesReport { omega, v_measured: v, v_limit, orbit_error, velocity_error: (v - v_limit).abs(), strictly_inside })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopyRow {
    pub lambda: f64,
    pub v_adiabatic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyTable {
    pub rows: Vec<HomotopyRow>,
    /// Adiabatic velocity of the arc stretched over the circle.
    pub limit: f64,
    /// Sign verdict at the largest `λ` when it is at least 0.9.
    pub positive_at_max: Option<bool>,
}

impl HomotopyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,v_adiabatic,v_limit\n");
        for r in &self.rows {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.lambda, r.v_adiabatic, self.limit));
        }
        s
    }
}

/// Closed-form adiabatic velocity along the squeeze family of `ψ` on the
/// arc `[α, β]`, where `ψ` must increase strictly.
pub fn homotopy_study(psi: &BasePotential, alpha: f64, beta: f64, omega: f64, lambdas: &[f64], sigma: f64) -> Result<HomotopyTable> {
    if !psi.increases_on_arc(alpha, beta, 4096) {
        return Err(RatchetError::Precondition(format!("potential does not increase strictly on the arc ({alpha}, {beta})")));
    }
    if lambdas.iter().any(|l| !(0.0..1.0).contains(l)) {
        return Err(RatchetError::InvalidParameter("lambdas must lie in [0, 1)".into()));
    }
    let rows: Vec<HomotopyRow> = lambdas
        .par_iter()
        .map(|&lambda| {
            let sq = BasePotential::Squeeze(Box::new(Squeeze::new(psi.clone(), alpha, beta, lambda)?));
            Ok(HomotopyRow { lambda, v_adiabatic: adiabatic_velocity_sigma(omega, &sq, sigma)? })
        })
        .collect::<Result<_>>()?;
    let stretched = BasePotential::ArcStretch { base: Box::new(psi.clone()), alpha, beta };
    let limit = adiabatic_velocity_sigma(omega, &stretched, sigma)?;
    let positive_at_max = rows.iter().max_by(|a, b| a.lambda.total_cmp(&b.lambda)).filter(|r| r.lambda >= 0.9).map(|r| r.v_adiabatic > 0.0);
    Ok(HomotopyTable { rows, limit, positive_at_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::adiabatic_velocity;

    fn quick() -> SolverConfig {
        SolverConfig { n: 64, dt: 1e-2, tolerance: 1e-10, ..SolverConfig::default() }
    }

    #[test]
    fn order_fit_recovers_power() {
        let ts = [5.0, 10.0, 20.0, 40.0];
        let gaps: Vec<f64> = ts.iter().map(|t: &f64| 3.0 / t.powf(1.3)).collect();
        assert!((fit_order(&ts, &gaps).unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(fit_order(&ts, &[0.0, 0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn flat_potential_scans_are_zero() {
        let z = BasePotential::Zero;
        let s = adiabatic_scan(&z, 1.0, &[2.0, 4.0], 1.0, quick()).unwrap();
        assert_eq!(s.limit, 0.0);
        assert!(s.rows.iter().all(|r| r.v_measured.abs() <= 1e-6));
        let s = semiadiabatic_scan(&BasePotential::Constant(0.4), 1.0, &[4.0], &[0.1, 0.2], 1.0, quick()).unwrap();
        assert!(s.limit.abs() < 1e-12);
        assert!(s.rows.iter().all(|r| r.v_measured.abs() <= 1e-6));
        assert!(adiabatic_scan(&z, 1.0, &[4.0, 2.0], 1.0, quick()).is_err());
    }

    #[test]
    fn orbit_velocity_independent_of_start() {
        let psi = BasePotential::asym(1.0, 0.3);
        let p = TiltProtocol::square_wave(psi.clone(), 1.0, 4.0).unwrap().to_force();
        let c = quick();
        let a = find_periodic_solution_from(&GridFunction::uniform(c.n), &p, 1.0, c).unwrap().velocity;
        let warm = stationary_density(-1.0, &psi, 1.0, c.n).unwrap();
        let b = measure(&p, &warm, 1.0, c).unwrap().0;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn stokes_flat_and_cosine() {
        let c = SolverConfig { n: 128, dt: 2e-3, ..SolverConfig::default() };
        let r = stokes_drift_check(&BasePotential::Zero, 1.0, 1.0, c).unwrap();
        assert!(r.v_measured.abs() < 1e-8 && r.strictly_inside);
        let r = stokes_drift_check(&BasePotential::cosine(), 1.0, 1.0, c).unwrap();
        assert!(r.strictly_inside, "{r:?}");
        assert!(r.velocity_error < 5e-3 && r.orbit_error < 5e-3, "{r:?}");
        let m = stokes_drift_check(&BasePotential::cosine().reflected(), -1.0, 1.0, c).unwrap();
        assert!((m.v_measured + r.v_measured).abs() < 1e-6, "{} {}", m.v_measured, r.v_measured);
    }

    #[test]
    fn homotopy_endpoints() {
        let psi = BasePotential::Sine { k: 1, a: 1.0 };
        let t = homotopy_study(&psi, 0.75, 0.25, 1.0, &[0.0, 0.5, 0.9, 0.99], 1.0).unwrap();
        assert!((t.rows[0].v_adiabatic - adiabatic_velocity(1.0, &psi).unwrap()).abs() < 1e-12);
        assert_eq!(t.positive_at_max, Some(true));
        assert!(t.rows[2].v_adiabatic > 0.0);
        assert!((t.rows[3].v_adiabatic - t.limit).abs() < 1e-2, "{t:?}");
        assert!(homotopy_study(&psi, 0.25, 0.75, 1.0, &[0.5], 1.0).is_err());
    }
}
