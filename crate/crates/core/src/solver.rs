//! Conservative drift-diffusion integrator for `g_t = σg_xx − (Fg)_x` on the
//! circle, the period-map orbit finder and the measured drift velocity.
//!
//! Space: exponentially fitted two-point fluxes between cell centres,
//! `J_{j+½} = (σ/h)[B(−P_j)g_j − B(P_j)g_{j+1}]` with `B(z) = z/(eᶻ − 1)` and
//! `P_j = σ⁻¹∫F` over `[x_j, x_{j+1}]`. Time: the θ-method. Each step solves
//! one cyclic tridiagonal system; for piecewise protocols the factorisation
//! is cached per segment and step size.

use std::collections::HashMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{RatchetError, Result};
use crate::grid::{cell_center, entropy_production, fit_decay_rate, l1_distance, relative_entropy, EntropyTrace, GridFunction, INPUT_MASS_TOL};
use crate::linalg::CyclicTridiagonal;
use crate::potentials::{ForceProtocol, SpatialForce};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub n: usize,
    pub dt: f64,
    pub theta: f64,
    /// L¹ closure tolerance of the period map.
    pub tolerance: f64,
    pub max_period_iterations: usize,
    /// Uniformly spaced snapshot times per period, besides segment boundaries.
    pub interior_snapshots: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { n: 256, dt: 1e-3, theta: 1.0, tolerance: 1e-9, max_period_iterations: 2000, interior_snapshots: 64 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RatchetError::InvalidParameter(m));
        if self.n < 16 {
            return bad(format!("grid needs n >= 16 cells, got {}", self.n));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [1/2, 1], got {}", self.theta));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_period_iterations == 0 {
            return bad("max_period_iterations must be positive".into());
        }
        Ok(())
    }
}

/// `B(z) = z/(eᶻ − 1)`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 - z / 2.0 + z * z / 12.0
    } else if z > 700.0 {
        z * (-z).exp()
    } else {
        z / z.exp_m1()
    }
}

const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Bands of the semi-discrete operator `dg/dt = L g`, and `F` at the cell centres.
#[derive(Debug, Clone)]
pub(crate) struct Operator {
    pub(crate) lower: Vec<f64>,
    pub(crate) diag: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) force: Vec<f64>,
}

impl Operator {
    pub(crate) fn build(field: &SpatialForce<'_>, sigma: f64, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let k = sigma / (h * h);
        let peclet: Vec<f64> = (0..n)
            .map(|j| {
                let mid = (j + 1) as f64 * h;
                let s: f64 = GAUSS3.iter().map(|(x, w)| w * field.eval(mid + 0.5 * h * x)).sum();
                0.5 * h * s / sigma
            })
            .collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            let p_prev = peclet[(j + n - 1) % n];
            let p = peclet[j];
            lower[j] = k * bernoulli(-p_prev);
            upper[j] = k * bernoulli(p);
            diag[j] = -k * (bernoulli(-p) + bernoulli(p_prev));
        }
        let force = (0..n).map(|j| field.eval(cell_center(j, n))).collect();
        Self { lower, diag, upper, force }
    }

    pub(crate) fn apply(&self, g: &[f64], out: &mut [f64]) {
        let n = g.len();
        for j in 0..n {
            out[j] = self.lower[j] * g[(j + n - 1) % n] + self.diag[j] * g[j] + self.upper[j] * g[(j + 1) % n];
        }
    }

    /// `∫F g` by cell sums.
    pub(crate) fn drift_moment(&self, g: &[f64]) -> f64 {
        self.force.iter().zip(g).map(|(f, v)| f * v).sum::<f64>() / g.len() as f64
    }
}

/// One θ-step `(I − θ dt L_new) g' = (I + (1 − θ) dt L_old) g`, solved for
/// the increment `g' − g` so that near-stationary states lose no precision.
pub(crate) struct StepKernel {
    implicit: CyclicTridiagonal,
    old: Option<Operator>,
    new: Operator,
    dt: f64,
    theta: f64,
}

impl StepKernel {
    pub(crate) fn new(old: &Operator, new: &Operator, dt: f64, theta: f64) -> Result<Self> {
        let lower: Vec<f64> = new.lower.iter().map(|v| -theta * dt * v).collect();
        let upper: Vec<f64> = new.upper.iter().map(|v| -theta * dt * v).collect();
        let diag: Vec<f64> = new.diag.iter().map(|v| 1.0 - theta * dt * v).collect();
        let implicit = CyclicTridiagonal::new(lower, diag, upper)?;
        let old = (theta < 1.0 && !std::ptr::eq(old, new)).then(|| old.clone());
        Ok(Self { implicit, old, new: new.clone(), dt, theta })
    }

    pub(crate) fn apply(&self, g: &mut [f64], scratch: &mut [f64]) {
        let mass: f64 = g.iter().sum();
        match &self.old {
            Some(old) => {
                let mut tmp = vec![0.0; g.len()];
                old.apply(g, &mut tmp);
                self.new.apply(g, scratch);
                for (s, t) in scratch.iter_mut().zip(&tmp) {
                    *s = self.dt * (self.theta * *s + (1.0 - self.theta) * t);
                }
            }
            None => {
                self.new.apply(g, scratch);
                for s in scratch.iter_mut() {
                    *s *= self.dt;
                }
            }
        }
        self.implicit.solve_in_place(scratch);
        for (v, d) in g.iter_mut().zip(scratch.iter()) {
            *v += d;
        }
        // The fluxes telescope, so any mass change is rounding; remove it.
        let out: f64 = g.iter().sum();
        if out > 0.0 && out != mass {
            let r = mass / out;
            for v in g.iter_mut() {
                *v *= r;
            }
        }
    }
}

fn check_density(g: &GridFunction) -> Result<()> {
    if let Some(j) = g.values().iter().position(|&v| v < 0.0) {
        return Err(RatchetError::InvalidGrid(format!("negative value {} at cell {j}", g.values()[j])));
    }
    let m = g.mass();
    if (m - 1.0).abs() > INPUT_MASS_TOL {
        return Err(RatchetError::MassMismatch { mass: m, tol: INPUT_MASS_TOL });
    }
    Ok(())
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(RatchetError::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// One step with a time-independent field.
pub fn step(g: &GridFunction, field: &SpatialForce<'_>, sigma: f64, dt: f64, theta: f64) -> Result<GridFunction> {
    check_sigma(sigma)?;
    check_density(g)?;
    if !(dt > 0.0) || !(0.5..=1.0).contains(&theta) {
        return Err(RatchetError::InvalidParameter(format!("need dt > 0 and theta in [1/2, 1], got {dt}, {theta}")));
    }
    let op = Operator::build(field, sigma, g.n());
    let kernel = StepKernel::new(&op, &op, dt, theta)?;
    let mut v = g.values().to_vec();
    let mut scratch = vec![0.0; v.len()];
    kernel.apply(&mut v, &mut scratch);
    GridFunction::new(v)
}

/// What an observer sees after each step.
struct StepView<'a> {
    t0: f64,
    t1: f64,
    new: &'a [Vec<f64>],
    moment_old: f64,
    moment_new: f64,
}

/// Marches several densities through the same protocol.
struct Marcher<'p> {
    protocol: &'p ForceProtocol,
    sigma: f64,
    cfg: SolverConfig,
    period: f64,
    starts: Vec<f64>,
    cache: HashMap<(usize, u64), (Operator, StepKernel)>,
}

impl<'p> Marcher<'p> {
    fn new(protocol: &'p ForceProtocol, sigma: f64, cfg: SolverConfig) -> Result<Self> {
        check_sigma(sigma)?;
        cfg.validate()?;
        protocol.validate()?;
        Ok(Self { protocol, sigma, cfg, period: protocol.period(), starts: protocol.segment_starts(), cache: HashMap::new() })
    }

    /// Absolute time of the next segment boundary strictly after `t`.
    fn next_boundary(&self, t: f64) -> f64 {
        let k = (t / self.period).floor();
        let base = k * self.period;
        for &s in self.starts.iter().skip(1) {
            if base + s > t + 1e-12 * self.period {
                return base + s;
            }
        }
        base + self.period
    }

    fn segment_at(&self, t: f64) -> usize {
        let phase = (t - 1e-12 * self.period).rem_euclid(self.period);
        self.starts.iter().rposition(|&s| s <= phase + 1e-12 * self.period).unwrap_or(0)
    }

    /// Marches `states` from `t0` to `t1`, stopping exactly at every segment
    /// boundary and every time in `stops`.
    fn advance(&mut self, states: &mut [Vec<f64>], t0: f64, t1: f64, stops: &[f64], mut observe: impl FnMut(StepView<'_>)) -> Result<()> {
        let n = self.cfg.n;
        let mut scratch = vec![0.0; n];
        let mut old: Vec<Vec<f64>> = states.to_vec();
        let mut t = t0;
        let eps = 1e-12 * self.period.max(t1.abs());
        while t < t1 - eps {
            let mut end = self.next_boundary(t).min(t1);
            if let Some(&s) = stops.iter().find(|&&s| s > t + eps && s < end - eps) {
                end = s;
            }
            let steps = (((end - t) / self.cfg.dt) - 1e-9).ceil().max(1.0) as usize;
            let dt = (end - t) / steps as f64;
            match self.protocol {
                ForceProtocol::Piecewise(_) => {
                    let seg = self.segment_at(t + 0.5 * (end - t));
                    let key = (seg, dt.to_bits());
                    if !self.cache.contains_key(&key) {
                        let op = Operator::build(&self.protocol.field_at(t + 0.5 * (end - t)), self.sigma, n);
                        let kernel = StepKernel::new(&op, &op, dt, self.cfg.theta)?;
                        self.cache.insert(key, (op, kernel));
                    }
                    let (op, kernel) = &self.cache[&key];
                    for k in 0..steps {
                        let (a, b) = (t + k as f64 * dt, if k + 1 == steps { end } else { t + (k + 1) as f64 * dt });
                        for (o, s) in old.iter_mut().zip(states.iter()) {
                            o.copy_from_slice(s);
                        }
                        for s in states.iter_mut() {
                            kernel.apply(s, &mut scratch);
                        }
                        let m_old = op.drift_moment(&old[0]);
                        let m_new = op.drift_moment(&states[0]);
                        observe(StepView { t0: a, t1: b, new: states, moment_old: m_old, moment_new: m_new });
                    }
                }
                ForceProtocol::Traveling { .. } => {
                    let mut op_old = Operator::build(&self.protocol.field_at(t), self.sigma, n);
                    for k in 0..steps {
                        let (a, b) = (t + k as f64 * dt, if k + 1 == steps { end } else { t + (k + 1) as f64 * dt });
                        let op_new = Operator::build(&self.protocol.field_at(b), self.sigma, n);
                        let kernel = StepKernel::new(&op_old, &op_new, dt, self.cfg.theta)?;
                        for (o, s) in old.iter_mut().zip(states.iter()) {
                            o.copy_from_slice(s);
                        }
                        for s in states.iter_mut() {
                            kernel.apply(s, &mut scratch);
                        }
                        let m_old = op_old.drift_moment(&old[0]);
                        let m_new = op_new.drift_moment(&states[0]);
                        observe(StepView { t0: a, t1: b, new: states, moment_old: m_old, moment_new: m_new });
                        op_old = op_new;
                    }
                }
            }
            t = end;
        }
        Ok(())
    }
}

/// Evolves `g0` from `t0` to `t1`, hitting every segment boundary exactly.
pub fn evolve(g0: &GridFunction, p: &ForceProtocol, sigma: f64, t0: f64, t1: f64, cfg: SolverConfig) -> Result<GridFunction> {
    if t1 < t0 {
        return Err(RatchetError::InvalidParameter(format!("need t1 >= t0, got {t0} > {t1}")));
    }
    check_density(g0)?;
    if g0.n() != cfg.n {
        return Err(RatchetError::GridMismatch { left: g0.n(), right: cfg.n });
    }
    if t1 == t0 {
        return Ok(g0.clone());
    }
    let mut m = Marcher::new(p, sigma, cfg)?;
    let mut states = vec![g0.values().to_vec()];
    m.advance(&mut states, t0, t1, &[], |_| {})?;
    GridFunction::new(states.pop().unwrap_or_default())
}

/// Attracting time-periodic solution sampled over one period.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub protocol: ForceProtocol,
    pub sigma: f64,
    pub snapshots: Vec<(f64, GridFunction)>,
    pub closure_residual: f64,
    pub iterations: usize,
    /// `(1/T)∫₀ᵀ∫₀¹ F g dx dt`, trapezoidal over every time step.
    pub velocity: f64,
    /// `−(1/T)∫₀ᵀ∫₀¹ ψ_x g dx dt` for tilting protocols.
    pub reduced_velocity: Option<f64>,
}

impl PeriodicOrbit {
    pub fn period(&self) -> f64 {
        self.protocol.period()
    }

    pub fn first(&self) -> &GridFunction {
        &self.snapshots[0].1
    }

    /// Snapshot whose time is closest to `t mod T`.
    pub fn nearest(&self, t: f64) -> &(f64, GridFunction) {
        let phase = t.rem_euclid(self.period());
        self.snapshots.iter().min_by(|a, b| (a.0 - phase).abs().total_cmp(&(b.0 - phase).abs())).unwrap_or(&self.snapshots[0])
    }

    /// `t,x,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,value\n");
        for (t, g) in &self.snapshots {
            for (x, v) in g.centers().zip(g.values()) {
                s.push_str(&format!("{},{},{}\n", crate::grid::fmt17(*t), crate::grid::fmt17(x), crate::grid::fmt17(*v)));
            }
        }
        s
    }
}

fn snapshot_stops(p: &ForceProtocol, interior: usize) -> Vec<f64> {
    let period = p.period();
    let mut stops: Vec<f64> = (1..=interior).map(|k| period * k as f64 / (interior + 1) as f64).collect();
    stops.extend(p.segment_starts().into_iter().skip(1));
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * period);
    stops
}

/// Period-map iteration from the uniform density.
pub fn find_periodic_solution(p: &ForceProtocol, sigma: f64, cfg: SolverConfig) -> Result<PeriodicOrbit> {
    find_periodic_solution_from(&GridFunction::uniform(cfg.n), p, sigma, cfg)
}

/// Period-map iteration from `g0`.
pub fn find_periodic_solution_from(g0: &GridFunction, p: &ForceProtocol, sigma: f64, cfg: SolverConfig) -> Result<PeriodicOrbit> {
    check_density(g0)?;
    if g0.n() != cfg.n {
        return Err(RatchetError::GridMismatch { left: g0.n(), right: cfg.n });
    }
    let mut m = Marcher::new(p, sigma, cfg)?;
    let period = m.period;
    let stops = snapshot_stops(p, cfg.interior_snapshots);
    let mut state = vec![g0.values().to_vec()];
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_period_iterations {
        let before = state[0].clone();
        m.advance(&mut state, 0.0, period, &stops, |_| {})?;
        residual = state[0].iter().zip(&before).map(|(a, b)| (a - b).abs()).sum::<f64>() / cfg.n as f64;
        if !residual.is_finite() {
            return Err(RatchetError::NoConvergence { iterations: it, residual });
        }
        if residual <= cfg.tolerance {
            return record_period(m, state, p, sigma, &stops, it);
        }
    }
    Err(RatchetError::NoConvergence { iterations: cfg.max_period_iterations, residual })
}

fn record_period(mut m: Marcher<'_>, mut state: Vec<Vec<f64>>, p: &ForceProtocol, sigma: f64, stops: &[f64], iterations: usize) -> Result<PeriodicOrbit> {
    let period = m.period;
    let reduced_base = p.tilting_base().cloned();
    let n = state[0].len();
    let reduced_moment = |g: &[f64]| -> f64 {
        match &reduced_base {
            Some(b) => -g.iter().enumerate().map(|(j, v)| b.derivative(cell_center(j, n)) * v).sum::<f64>() / n as f64,
            None => 0.0,
        }
    };
    let mut snapshots = vec![(0.0, GridFunction::new(state[0].clone())?)];
    let mut drift = 0.0;
    let mut reduced = 0.0;
    let mut last_reduced = reduced_moment(&state[0]);
    let mut pending: Vec<(f64, Vec<f64>)> = Vec::new();
    let stop_tol = 1e-12 * period;
    m.advance(&mut state, 0.0, period, stops, |v| {
        let dt = v.t1 - v.t0;
        drift += 0.5 * dt * (v.moment_old + v.moment_new);
        if reduced_base.is_some() {
            let r = reduced_moment(&v.new[0]);
            reduced += 0.5 * dt * (last_reduced + r);
            last_reduced = r;
        }
        if stops.iter().any(|s| (s - v.t1).abs() <= stop_tol) || (v.t1 - period).abs() <= stop_tol {
            pending.push((v.t1, v.new[0].clone()));
        }
    })?;
    for (t, g) in pending {
        snapshots.push((t, GridFunction::new(g)?));
    }
    let closure = l1_distance(&snapshots[0].1, &snapshots[snapshots.len() - 1].1)?;
    Ok(PeriodicOrbit {
        protocol: p.clone(),
        sigma,
        snapshots,
        closure_residual: closure,
        iterations,
        velocity: drift / period,
        reduced_velocity: reduced_base.map(|_| reduced / period),
    })
}

/// Measured average drift velocity of the orbit.
pub fn average_velocity(orbit: &PeriodicOrbit) -> f64 {
    orbit.velocity
}

/// Reduced form `−(1/T)∫∫ψ_x g∞` for tilting protocols.
pub fn average_velocity_reduced(orbit: &PeriodicOrbit) -> Option<f64> {
    orbit.reduced_velocity
}

/// Velocity from the stored snapshots only, by the trapezoidal rule in `t`
/// within each segment.
pub fn snapshot_velocity(orbit: &PeriodicOrbit) -> f64 {
    let p = &orbit.protocol;
    let mut total = 0.0;
    for w in orbit.snapshots.windows(2) {
        let (t0, g0) = (&w[0].0, &w[0].1);
        let (t1, g1) = (&w[1].0, &w[1].1);
        let mid = 0.5 * (t0 + t1);
        let moment = |g: &GridFunction, t: f64| {
            let field = match p {
                ForceProtocol::Piecewise(_) => p.field_at(mid),
                ForceProtocol::Traveling { .. } => p.field_at(t),
            };
            g.centers().zip(g.values()).map(|(x, v)| field.eval(x) * v).sum::<f64>() / g.n() as f64
        };
        total += 0.5 * (t1 - t0) * (moment(g0, *t0) + moment(g1, *t1));
    }
    total / orbit.period()
}

/// Relative entropy of a trajectory from `g0` with respect to the orbit,
/// both evolved with the same discrete steps over `horizon`.
pub fn entropy_decay_trace(
    g0: &GridFunction,
    p: &ForceProtocol,
    sigma: f64,
    reference: &PeriodicOrbit,
    cfg: SolverConfig,
    horizon: f64,
) -> Result<EntropyTrace> {
    check_density(g0)?;
    if g0.n() != cfg.n || reference.first().n() != cfg.n {
        return Err(RatchetError::GridMismatch { left: g0.n(), right: reference.first().n() });
    }
    if !(horizon > 0.0) {
        return Err(RatchetError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut m = Marcher::new(p, sigma, cfg)?;
    let mut states = vec![g0.values().to_vec(), reference.first().values().to_vec()];
    let total_steps = (horizon / cfg.dt).ceil() as usize + m.starts.len() * ((horizon / m.period).ceil() as usize + 1);
    let stride = (total_steps / 4096).max(1);

    let sample = |g: &[f64], h: &[f64]| -> Result<(f64, f64)> {
        let g = GridFunction::new(g.to_vec())?;
        let h = GridFunction::new(h.to_vec())?;
        Ok((relative_entropy(&g, &h)?, entropy_production(&g, &h)?))
    };
    let (e0, p0) = sample(&states[0], &states[1])?;
    let mut times = vec![0.0];
    let mut entropy = vec![e0];
    let mut production = vec![p0];
    let mut count = 0usize;
    let mut err = None;
    let boundaries: Vec<f64> = {
        let mut b = Vec::new();
        let mut k = 0.0;
        while k * m.period <= horizon {
            for s in &m.starts {
                b.push(k * m.period + s);
            }
            k += 1.0;
        }
        b
    };
    m.advance(&mut states, 0.0, horizon, &[], |v| {
        count += 1;
        let at_boundary = boundaries.iter().any(|b| (b - v.t1).abs() <= 1e-9 * m_period_guard(v.t1));
        if count.is_multiple_of(stride) || at_boundary || (v.t1 - horizon).abs() < 1e-12 * horizon {
            match sample(&v.new[0], &v.new[1]) {
                Ok((e, pr)) => {
                    times.push(v.t1);
                    entropy.push(e);
                    production.push(pr);
                }
                Err(e) => err = Some(e),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let decay_rate_estimate = fit_decay_rate(&times, &entropy, 1e-12);
    Ok(EntropyTrace { times, entropy, production, decay_rate_estimate })
}

fn m_period_guard(t: f64) -> f64 {
    t.abs().max(1.0)
}

/// Wraps a line density given by piecewise-linear samples onto the circle:
/// `Σ_k ρ(x + k)` averaged over `n` cells.
pub fn wrap_line_density(samples: &[(f64, f64)], n: usize) -> Result<GridFunction> {
    if samples.len() < 2 || n == 0 {
        return Err(RatchetError::InvalidParameter("need at least two samples and one cell".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(RatchetError::InvalidParameter("sample abscissae must increase".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.1 < 0.0 || !s.1.is_finite() || !s.0.is_finite()) {
        return Err(RatchetError::InvalidParameter(format!("invalid sample ({}, {})", s.0, s.1)));
    }
    let total: f64 = samples.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(RatchetError::MassMismatch { mass: total, tol: 1e-6 });
    }
    let nf = n as f64;
    let mut cells = vec![0.0; n];
    for w in samples.windows(2) {
        let ((xa, va), (xb, vb)) = (w[0], w[1]);
        let slope = (vb - va) / (xb - xa);
        let value = |x: f64| va + slope * (x - xa);
        let mut lo = xa;
        while lo < xb {
            let k = (lo * nf + 1e-12).floor();
            let hi = ((k + 1.0) / nf).min(xb);
            let piece = 0.5 * (hi - lo) * (value(lo) + value(hi));
            cells[(k as i64).rem_euclid(n as i64) as usize] += piece * nf;
            lo = hi;
        }
    }
    GridFunction::new(cells)
}

/// Translates cell values by `shift` (in units of the circle) with
/// trigonometric interpolation. With `average` the point samples are also
/// mapped to cell averages of the interpolant.
pub fn spectral_shift(values: &[f64], shift: f64, average: bool) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if n.is_multiple_of(2) && k == n / 2 {
            // The Nyquist mode has no consistent sign under shifting.
            *c = Complex::new(c.re * (2.0 * std::f64::consts::PI * freq * shift).cos(), 0.0);
            continue;
        }
        let phase = -2.0 * std::f64::consts::PI * freq * shift;
        *c *= Complex::new(phase.cos(), phase.sin());
        if average && freq != 0.0 {
            let z = std::f64::consts::PI * freq / n as f64;
            *c *= z.sin() / z;
        }
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use crate::potentials::{BasePotential, ForceField, TiltProtocol};
    use std::f64::consts::PI;

    fn cfg(n: usize) -> SolverConfig {
        SolverConfig { n, ..SolverConfig::default() }
    }

    #[test]
    fn bernoulli_identity() {
        for z in [-30.0, -1.0, -1e-7, 0.0, 3e-6, 0.5, 40.0, 800.0] {
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12 * z.abs().max(1.0), "{z}");
        }
    }

    #[test]
    fn step_examples() {
        let g = GridFunction::uniform(64);
        let zero = ForceField::constant(0.0);
        let out = step(&g, &SpatialForce::Field(&zero), 1.0, 1e-2, 1.0).unwrap();
        assert!(out.values().iter().all(|v| (*v - 1.0).abs() < 1e-14));

        let tilt = ForceField::constant(-1.0);
        let out = step(&g, &SpatialForce::Field(&tilt), 1.0, 1e-2, 0.5).unwrap();
        assert!(out.values().iter().all(|v| (*v - 1.0).abs() < 1e-13));

        let f = ForceField::tilted(BasePotential::cosine(), 1.0);
        let g = GridFunction::cell_averages(64, |x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
        let out = step(&g, &SpatialForce::Field(&f), 0.3, 5e-2, 1.0).unwrap();
        assert!((out.mass() - g.mass()).abs() < 1e-13);
        assert!(out.min() > 0.0);
    }

    #[test]
    fn evolve_examples() {
        let p = ForceProtocol::stationary(ForceField::constant(0.0));
        let g0 = GridFunction::cell_averages(64, |x| 1.0 + 0.9 * (2.0 * PI * x).cos()).unwrap();
        assert_eq!(evolve(&g0, &p, 1.0, 0.3, 0.3, cfg(64)).unwrap(), g0);
        let g = evolve(&g0, &p, 1.0, 0.0, 0.5, cfg(64)).unwrap();
        assert!(l1_distance(&g, &GridFunction::uniform(64)).unwrap() <= 1e-6);

        let tilt = ForceProtocol::stationary(ForceField::tilted(BasePotential::Zero, 1.0));
        let g = evolve(&GridFunction::uniform(64), &tilt, 1.0, 0.0, 2.0, cfg(64)).unwrap();
        assert!(g.values().iter().all(|v| (*v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn constant_protocol_matches_closed_form() {
        let psi = BasePotential::asym(1.0, 0.3);
        let p = ForceProtocol::stationary(ForceField::tilted(psi.clone(), 0.8));
        let orbit = find_periodic_solution(&p, 1.0, cfg(256)).unwrap();
        let g_star = closed_form::stationary_density(0.8, &psi, 1.0, 256).unwrap();
        for (_, g) in &orbit.snapshots {
            assert!(l1_distance(g, &g_star).unwrap() <= 5e-4);
        }
        let v_exact = closed_form::tilted_velocity(0.8, &psi, 1.0).unwrap();
        assert!((average_velocity(&orbit) - v_exact).abs() <= 5e-4, "{} vs {v_exact}", average_velocity(&orbit));
    }

    #[test]
    fn velocity_examples() {
        let flat = ForceProtocol::stationary(ForceField::tilted(BasePotential::Zero, 1.0));
        let orbit = find_periodic_solution(&flat, 1.0, cfg(64)).unwrap();
        assert!((average_velocity(&orbit) + 1.0).abs() < 1e-6);

        let diff = ForceProtocol::stationary(ForceField::constant(0.0));
        let orbit = find_periodic_solution(&diff, 1.0, cfg(64)).unwrap();
        assert!(average_velocity(&orbit).abs() < 1e-12);
        assert!(orbit.closure_residual <= 1e-12);
    }

    #[test]
    fn full_and_reduced_velocity_agree() {
        let tp = TiltProtocol::square_wave(BasePotential::asym(1.0, 0.3), 1.0, 2.0).unwrap();
        let orbit = find_periodic_solution(&tp.to_force(), 1.0, cfg(64)).unwrap();
        let r = average_velocity_reduced(&orbit).unwrap();
        assert!((r - average_velocity(&orbit)).abs() < 1e-8);
        assert!((snapshot_velocity(&orbit) - average_velocity(&orbit)).abs() < 5e-2);
        assert!(orbit.snapshots.len() >= 66);
        for (_, g) in &orbit.snapshots {
            assert!((g.mass() - 1.0).abs() < 1e-10 && g.min() > 0.0);
        }
    }

    #[test]
    fn wrap_examples() {
        let inside = [(0.2, 0.0), (0.3, 5.0), (0.4, 5.0), (0.5, 0.0)];
        let g = wrap_line_density(&inside, 10).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
        assert!(g.values()[0].abs() < 1e-12 && g.values()[9].abs() < 1e-12);

        let uniform = [(-1.0, 0.5), (0.0, 0.5), (1.0, 0.5)];
        let g = wrap_line_density(&uniform, 16).unwrap();
        assert!(g.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let bump = |c: f64| [(c - 0.05, 0.0), (c, 20.0), (c + 0.05, 0.0)];
        let a = wrap_line_density(&bump(2.3), 32).unwrap();
        let b = wrap_line_density(&bump(0.3), 32).unwrap();
        assert!(l1_distance(&a, &b).unwrap() < 1e-12);
        assert!(wrap_line_density(&[(0.0, 1.0), (0.5, 1.0)], 8).is_err());
    }

    #[test]
    fn spectral_shift_translates_trig_polynomials() {
        let n = 64;
        let f = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).cos() + 0.2 * (6.0 * PI * x).sin();
        let vals: Vec<f64> = (0..n).map(|j| f(cell_center(j, n))).collect();
        let s = 0.1234;
        let shifted = spectral_shift(&vals, s, false);
        for (j, v) in shifted.iter().enumerate() {
            assert!((v - f(cell_center(j, n) - s)).abs() < 1e-13);
        }
        let avg = spectral_shift(&vals, 0.0, true);
        let exact = GridFunction::cell_averages(n, f).unwrap();
        for (a, b) in avg.iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn step_conserves_mass_and_positivity(
                a in -2.0f64..2.0, b in -1.0f64..1.0, om in -3.0f64..3.0,
                sigma in 0.01f64..2.0, dt in 1e-4f64..0.5, amp in 0.0f64..0.95, n in 16usize..200,
            ) {
                let field = ForceField::tilted(BasePotential::Asym { a, b }, om);
                let g = GridFunction::cell_averages(n, |x| 1.0 + amp * (2.0 * PI * x).cos()).unwrap();
                let g = g.normalized().unwrap().0;
                let out = step(&g, &SpatialForce::Field(&field), sigma, dt, 1.0).unwrap();
                prop_assert!((out.mass() - g.mass()).abs() <= 1e-13);
                prop_assert!(out.min() > 0.0);
            }

            #[test]
            fn uniform_is_fixed_for_constant_force(c in -5.0f64..5.0, sigma in 0.01f64..2.0, dt in 1e-4f64..1.0, theta in 0.5f64..1.0) {
                let g = GridFunction::uniform(32);
                let f = ForceField::constant(c);
                let out = step(&g, &SpatialForce::Field(&f), sigma, dt, theta).unwrap();
                prop_assert!(out.values().iter().all(|v| (*v - 1.0).abs() <= 1e-13));
            }
        }
    }
}
