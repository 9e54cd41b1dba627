//! Coupled `N`-state drift-diffusion with rate exchange,
//!
//! `(gᵢ)_t = σ(gᵢ)_xx − (Fᵢgᵢ)_x − Σⱼ νⱼᵢgᵢ + Σⱼ νᵢⱼgⱼ`,
//!
//! its stationary vector and velocity, the small-diffusion sign rules for two
//! states and the explicit zero-diffusion solution when neither force vanishes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{RatchetError, Result};
use crate::grid::{cell_center, GridFunction};
use crate::linalg::BlockCyclicTridiagonal;
use crate::potentials::{BasePotential, ForceField, SpatialForce};
use crate::quadrature::{integrate_split, QuadOptions};
use crate::solver::{check_sigma, Operator, SolverConfig, StepKernel};

/// Total-mass tolerance of a [`MultiStateDensity`].
pub const TOTAL_MASS_TOL: f64 = 1e-10;
/// Samples used to locate force zeros.
pub const ZERO_SCAN: usize = 4096;
/// `|F|` below this at a local minimum counts as a touching zero.
pub const TOUCH_TOL: f64 = 1e-7;
/// Zeros of the two forces closer than this are common zeros.
pub const COMMON_ZERO_TOL: f64 = 1e-8;
/// Band around zero in which the case III integral gives no verdict.
pub const INTEGRAL_TOL: f64 = 1e-8;

/// A nonnegative 1-periodic rate `ν(x) = offset + profile(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateField {
    pub offset: f64,
    pub profile: BasePotential,
}

impl RateField {
    pub fn constant(c: f64) -> Self {
        Self { offset: c, profile: BasePotential::Zero }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.profile {
            BasePotential::Zero => self.offset,
            _ => self.offset + self.profile.value(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.profile == BasePotential::Zero
    }

    fn scan_min(&self) -> f64 {
        (0..ZERO_SCAN).map(|k| self.eval(k as f64 / ZERO_SCAN as f64)).fold(f64::INFINITY, f64::min)
    }
}

/// `"<offset>"` or `"<offset> <potential>"`, e.g. `"1 cosine 1 0.5"`.
impl FromStr for RateField {
    type Err = RatchetError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let offset: f64 = head.parse().map_err(|_| RatchetError::Parse(format!("bad rate offset {head:?}")))?;
        let profile = if rest.trim().is_empty() { BasePotential::Zero } else { rest.parse()? };
        Ok(Self { offset, profile })
    }
}

impl fmt::Display for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.profile {
            BasePotential::Zero => write!(f, "{}", self.offset),
            _ => write!(f, "{} {}", self.offset, self.profile),
        }
    }
}

/// Forces, rates and diffusion of an `N`-state model.
///
/// `rates[i][j]` is the rate from state `j` to state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStateSystem {
    forces: Vec<ForceField>,
    rates: Vec<Vec<RateField>>,
    sigma: f64,
}

impl MultiStateSystem {
    pub fn new(forces: Vec<ForceField>, rates: Vec<Vec<RateField>>, sigma: f64) -> Result<Self> {
        let n = forces.len();
        if n < 2 {
            return Err(RatchetError::InvalidParameter(format!("need at least two states, got {n}")));
        }
        if rates.len() != n || rates.iter().any(|r| r.len() != n) {
            return Err(RatchetError::InvalidParameter(format!("rate matrix must be {n}x{n}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(RatchetError::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
        }
        for (i, row) in rates.iter().enumerate() {
            if !row[i].is_zero() {
                return Err(RatchetError::InvalidParameter(format!("diagonal rate {i} must be zero")));
            }
            for (j, r) in row.iter().enumerate() {
                let m = r.scan_min();
                if !(m >= 0.0) {
                    return Err(RatchetError::InvalidParameter(format!("rate {i}<-{j} is negative somewhere (min {m})")));
                }
            }
        }
        Ok(Self { forces, rates, sigma })
    }

    /// Two states with `ν₁₂` (from 2 to 1) and `ν₂₁` (from 1 to 2).
    pub fn two_state(f1: ForceField, f2: ForceField, nu12: RateField, nu21: RateField, sigma: f64) -> Result<Self> {
        let z = RateField::constant(0.0);
        Self::new(vec![f1, f2], vec![vec![z.clone(), nu12], vec![nu21, z]], sigma)
    }

    pub fn states(&self) -> usize {
        self.forces.len()
    }

    pub fn forces(&self) -> &[ForceField] {
        &self.forces
    }

    pub fn rate(&self, i: usize, j: usize) -> &RateField {
        &self.rates[i][j]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `Q(x)` with `Q_ij = ν_ij`, `Q_ii = −Σⱼ ν_ji`; columns sum to zero.
    pub fn exchange_matrix(&self, x: f64) -> DMatrix<f64> {
        let n = self.states();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = self.rates[i][j].eval(x);
                    q[(i, j)] = r;
                    q[(j, j)] -= r;
                }
            }
        }
        q
    }

    fn operators(&self, n: usize) -> Vec<Operator> {
        self.forces.iter().map(|f| Operator::build(&SpatialForce::Field(f), self.sigma, n)).collect()
    }
}

/// One density per state on a common grid; total mass one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStateDensity {
    components: Vec<GridFunction>,
}

impl MultiStateDensity {
    pub fn new(components: Vec<GridFunction>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(RatchetError::InvalidParameter("no components".into()));
        };
        let n = first.n();
        for c in &components {
            if c.n() != n {
                return Err(RatchetError::GridMismatch { left: n, right: c.n() });
            }
            if let Some(j) = c.values().iter().position(|&v| v < 0.0) {
                return Err(RatchetError::NonPositive { index: j, value: c.values()[j] });
            }
        }
        let d = Self { components };
        let m = d.total_mass();
        if (m - 1.0).abs() > TOTAL_MASS_TOL {
            return Err(RatchetError::MassMismatch { mass: m, tol: TOTAL_MASS_TOL });
        }
        Ok(d)
    }

    /// Every state flat with mass `1/N`.
    pub fn uniform(states: usize, n: usize) -> Self {
        Self { components: (0..states).map(|_| GridFunction::constant(n, 1.0 / states as f64)).collect() }
    }

    pub fn components(&self) -> &[GridFunction] {
        &self.components
    }

    pub fn states(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(GridFunction::mass).sum()
    }

    /// `Σᵢ gᵢ`.
    pub fn total(&self) -> GridFunction {
        let n = self.n();
        let v = (0..n).map(|j| self.components.iter().map(|c| c.values()[j]).sum()).collect();
        GridFunction::new(v).expect("sums of finite values are finite")
    }

    /// `Σᵢ ‖gᵢ − hᵢ‖₁`.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.states() != other.states() || self.n() != other.n() {
            return Err(RatchetError::GridMismatch { left: self.n(), right: other.n() });
        }
        let n = self.n() as f64;
        Ok(self.components.iter().zip(&other.components).map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n).sum())
    }

    fn from_raw(raw: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Self { components: raw.into_iter().map(GridFunction::new).collect::<Result<_>>()? })
    }

    fn raw(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.values().to_vec()).collect()
    }
}

fn check_system(d: &MultiStateDensity, sys: &MultiStateSystem) -> Result<()> {
    check_sigma(sys.sigma)?;
    if d.states() != sys.states() {
        return Err(RatchetError::InvalidParameter(format!("density has {} states, system {}", d.states(), sys.states())));
    }
    Ok(())
}

fn rescale(raw: &mut [Vec<f64>], target: f64) {
    let n = raw[0].len() as f64;
    let m: f64 = raw.iter().map(|c| c.iter().sum::<f64>()).sum::<f64>() / n;
    if m > 0.0 && m != target {
        let r = target / m;
        raw.iter_mut().flatten().for_each(|v| *v *= r);
    }
}

/// Lie splitting: one drift-diffusion θ-step per state, then the exact
/// per-cell exchange `g ← exp(dt·Q(x_j)) g`.
pub fn ms_evolve(d0: &MultiStateDensity, sys: &MultiStateSystem, t0: f64, t1: f64, cfg: SolverConfig) -> Result<MultiStateDensity> {
    check_system(d0, sys)?;
    cfg.validate()?;
    if t1 < t0 {
        return Err(RatchetError::InvalidParameter(format!("need t1 >= t0, got {t0} > {t1}")));
    }
    if t1 == t0 {
        return Ok(d0.clone());
    }
    let n = d0.n();
    let steps = (((t1 - t0) / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = (t1 - t0) / steps as f64;
    let ops = sys.operators(n);
    let kernels: Vec<StepKernel> = ops.iter().map(|op| StepKernel::new(op, op, dt, cfg.theta)).collect::<Result<_>>()?;
    let coupled = sys.rates.iter().flatten().any(|r| !r.is_zero());
    let exchange: Vec<DMatrix<f64>> = if coupled {
        (0..n)
            .map(|j| {
                let mut e = (sys.exchange_matrix(cell_center(j, n)) * dt).exp();
                e.iter_mut().for_each(|v| *v = v.max(0.0));
                e
            })
            .collect()
    } else {
        Vec::new()
    };
    let target = d0.total_mass();
    let mut raw = d0.raw();
    let mut scratch = vec![0.0; n];
    let mut cell = DVector::zeros(sys.states());
    for _ in 0..steps {
        for (g, k) in raw.iter_mut().zip(&kernels) {
            k.apply(g, &mut scratch);
        }
        if coupled {
            for (j, e) in exchange.iter().enumerate() {
                for (i, g) in raw.iter().enumerate() {
                    cell[i] = g[j];
                }
                let out = e * &cell;
                for (i, g) in raw.iter_mut().enumerate() {
                    g[j] = out[i];
                }
            }
        }
        rescale(&mut raw, target);
    }
    MultiStateDensity::from_raw(raw)
}

/// The coupled semi-discrete operator as `n` blocks of size `N`.
fn block_operator(sys: &MultiStateSystem, n: usize) -> BlockCyclicTridiagonal {
    let ops = sys.operators(n);
    let k = sys.states();
    let band = |f: &dyn Fn(&Operator) -> f64| DMatrix::from_diagonal(&DVector::from_iterator(k, ops.iter().map(f)));
    let mut lower = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for j in 0..n {
        lower.push(band(&|o: &Operator| o.lower[j]));
        upper.push(band(&|o: &Operator| o.upper[j]));
        diag.push(band(&|o: &Operator| o.diag[j]) + sys.exchange_matrix(cell_center(j, n)));
    }
    BlockCyclicTridiagonal { lower, diag, upper }
}

fn to_blocks(raw: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let n = raw[0].len();
    (0..n).map(|j| DVector::from_iterator(raw.len(), raw.iter().map(|g| g[j]))).collect()
}

/// Discrete `‖L g‖₁` of the coupled stationary operator.
pub fn stationary_residual(d: &MultiStateDensity, sys: &MultiStateSystem) -> Result<f64> {
    check_system(d, sys)?;
    let n = d.n();
    let l = block_operator(sys, n);
    let r = l.matvec(&to_blocks(&d.raw()));
    Ok(r.iter().map(|b| b.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>() / n as f64)
}

/// Stationary vector by implicit Euler on the coupled operator from the
/// uniform pair, with the step growing geometrically.
/// Cap on the implicit step of the stationary solve.
const MAX_IMPLICIT_DT: f64 = 1e6;

pub fn ms_stationary(sys: &MultiStateSystem, cfg: SolverConfig) -> Result<MultiStateDensity> {
    ms_stationary_from(&MultiStateDensity::uniform(sys.states(), cfg.n), sys, cfg)
}

pub fn ms_stationary_from(d0: &MultiStateDensity, sys: &MultiStateSystem, cfg: SolverConfig) -> Result<MultiStateDensity> {
    check_system(d0, sys)?;
    cfg.validate()?;
    if sys.states() == 2 && (sys.rates[0][1].scan_min() <= 0.0 || sys.rates[1][0].scan_min() <= 0.0) {
        return Err(RatchetError::Precondition("stationary solve needs strictly positive rates".into()));
    }
    let n = d0.n();
    let k = sys.states();
    let l = block_operator(sys, n);
    let mut g = d0.raw();
    let mut dt = cfg.dt;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_period_iterations {
        let lg = l.matvec(&to_blocks(&g));
        let shift = |m: &DMatrix<f64>, unit: bool| {
            let mut s = m * (-dt);
            if unit {
                for i in 0..k {
                    s[(i, i)] += 1.0;
                }
            }
            s
        };
        let implicit = BlockCyclicTridiagonal {
            lower: l.lower.iter().map(|m| shift(m, false)).collect(),
            diag: l.diag.iter().map(|m| shift(m, true)).collect(),
            upper: l.upper.iter().map(|m| shift(m, false)).collect(),
        };
        let rhs: Vec<DVector<f64>> = lg.into_iter().map(|b| b * dt).collect();
        let inc = implicit.solve(&rhs)?;
        let before = g.clone();
        for (j, b) in inc.iter().enumerate() {
            for i in 0..k {
                g[i][j] += b[i];
            }
        }
        // Measured after the rescale: round-off along the conserved mass
        // direction grows with dt but is removed by the rescale.
        rescale(&mut g, 1.0);
        change = g.iter().flatten().zip(before.iter().flatten()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        if change <= cfg.tolerance {
            break;
        }
        dt = (dt * 4.0).min(MAX_IMPLICIT_DT);
    }
    if change > cfg.tolerance {
        return Err(RatchetError::NoConvergence { iterations: cfg.max_period_iterations, residual: change });
    }
    let peak = g.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
    for (i, c) in g.iter_mut().enumerate() {
        for (j, v) in c.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -1e-10 * peak {
                    return Err(RatchetError::NonPositive { index: i * n + j, value: *v });
                }
                *v = 0.0;
            }
        }
    }
    let d = MultiStateDensity::from_raw(g)?;
    let res = stationary_residual(&d, sys)?;
    if res > 10.0 * cfg.tolerance {
        return Err(RatchetError::NoConvergence { iterations: cfg.max_period_iterations, residual: res });
    }
    Ok(d)
}

/// `Σᵢ ∫ Fᵢ gᵢ` by cell sums.
pub fn ms_velocity(d: &MultiStateDensity, sys: &MultiStateSystem) -> f64 {
    let n = d.n();
    d.components.iter().zip(&sys.forces).map(|(g, f)| g.values().iter().enumerate().map(|(j, v)| f.eval(cell_center(j, n)) * v).sum::<f64>()).sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TransportSign {
    Positive,
    Negative,
    Undetermined,
}

impl TransportSign {
    fn of(x: f64) -> Self {
        if x > 0.0 {
            Self::Positive
        } else if x < 0.0 {
            Self::Negative
        } else {
            Self::Undetermined
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Self::Positive => 1,
            Self::Negative => -1,
            Self::Undetermined => 0,
        }
    }
}

/// Which forces vanish: `I` both, `II` exactly one, `III` neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SignCase {
    I,
    II,
    III,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SignClassification {
    pub sign: TransportSign,
    pub case: SignCase,
    pub zeros1: Vec<f64>,
    pub zeros2: Vec<f64>,
    /// `∫(ν₁₂/F₂ + ν₂₁/F₁)` in case III.
    pub integral: Option<f64>,
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Minimiser of `|f|` on `[a, b]` by golden sections.
fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c).abs(), f(d).abs());
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d).abs();
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x).abs())
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Zeros of a 1-periodic `f` in `[0, 1)`: sign changes refined by bisection
/// and touching zeros found as small local minima of `|f|`.
pub fn find_zeros(f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let m = ZERO_SCAN;
    let h = 1.0 / m as f64;
    let s: Vec<f64> = (0..m).map(|k| f(k as f64 * h)).collect();
    if s.iter().all(|v| v.abs() < TOUCH_TOL) {
        return Err(RatchetError::Precondition("force vanishes on the whole scan".into()));
    }
    let at = |k: isize| s[k.rem_euclid(m as isize) as usize];
    let mut zeros = Vec::new();
    for k in 0..m as isize {
        let (a, b) = (at(k), at(k + 1));
        let x = k as f64 * h;
        if a == 0.0 {
            zeros.push(x);
        } else if a * b < 0.0 {
            zeros.push(bisect(&f, x, x + h));
        } else {
            let prev = at(k - 1);
            let changes = prev * a < 0.0 || a * b < 0.0 || b == 0.0 || prev == 0.0;
            if !changes && a.abs() < prev.abs() && a.abs() <= b.abs() {
                let (z, v) = golden_min(&f, x - h, x + h);
                if v < TOUCH_TOL {
                    zeros.push(z);
                }
            }
        }
    }
    let mut out: Vec<f64> = Vec::new();
    for z in zeros.into_iter().map(|z| z.rem_euclid(1.0)) {
        if out.iter().all(|&o| circ_dist(o, z) > 1e-7) {
            out.push(z);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn force_breaks(fields: &[&ForceField]) -> Vec<f64> {
    fields.iter().flat_map(|f| f.potential.breakpoints()).collect()
}

/// Transport direction of the two-state model for small diffusion.
pub fn classify_sign(f1: &ForceField, f2: &ForceField, nu12: &RateField, nu21: &RateField) -> Result<SignClassification> {
    if !(nu12.scan_min() > 0.0 && nu21.scan_min() > 0.0) {
        return Err(RatchetError::Precondition("rates must be strictly positive".into()));
    }
    let z1 = find_zeros(|x| f1.eval(x))?;
    let z2 = find_zeros(|x| f2.eval(x))?;
    for &z in &z1 {
        if f2.eval(z).abs() <= COMMON_ZERO_TOL || z2.iter().any(|&w| circ_dist(z, w) <= COMMON_ZERO_TOL) {
            return Err(RatchetError::CommonZero { x: z });
        }
    }
    for &z in &z2 {
        if f1.eval(z).abs() <= COMMON_ZERO_TOL {
            return Err(RatchetError::CommonZero { x: z });
        }
    }
    let (sign, case, integral) = match (z1.is_empty(), z2.is_empty()) {
        (false, false) => {
            let signs: Vec<TransportSign> =
                z2.iter().map(|&z| TransportSign::of(f1.eval(z))).chain(z1.iter().map(|&z| TransportSign::of(f2.eval(z)))).collect();
            let s = if signs.iter().all(|&s| s == signs[0]) { signs[0] } else { TransportSign::Undetermined };
            (s, SignCase::I, None)
        }
        (true, false) => (TransportSign::of(f1.eval(0.0)), SignCase::II, None),
        (false, true) => (TransportSign::of(f2.eval(0.0)), SignCase::II, None),
        (true, true) => {
            let q = |x: f64| nu12.eval(x) / f2.eval(x) + nu21.eval(x) / f1.eval(x);
            let i = integrate_split(q, 0.0, 1.0, &force_breaks(&[f1, f2]), QuadOptions::default())?;
            let s = if i.abs() <= INTEGRAL_TOL { TransportSign::Undetermined } else { TransportSign::of((f1.eval(0.0) * f2.eval(0.0)).signum() * i) };
            (s, SignCase::III, Some(i))
        }
    };
    Ok(SignClassification { sign, case, zeros1: z1, zeros2: z2, integral })
}

/// Nodes of the zero-diffusion integrals.
const ZD_NODES: usize = 4096;

/// The zero-diffusion stationary pair when neither force vanishes:
/// `ζ₁ = u/F₁`, `ζ₂ = (v − u)/F₂` with `u = e^{−Q}(M + v·I)`,
/// `Q = ∫₀ˣ (ν₁₂/F₂ + ν₂₁/F₁)`, `I = ∫₀ˣ e^{Q} ν₁₂/F₂`.
#[derive(Debug, Clone)]
pub struct ZeroDiffusionSolution {
    pub m: f64,
    pub velocity: f64,
    /// `max |F₁ζ₁ + F₂ζ₂ − v|` on the check grid.
    pub identity_residual: f64,
    /// Relative finite-difference residual of `(F₁ζ₁)' = ν₁₂ζ₂ − ν₂₁ζ₁`.
    pub ode_residual: f64,
    pub min_component: f64,
    f1: ForceField,
    f2: ForceField,
    nu12: RateField,
    nu21: RateField,
    /// `(Q, I)` at `k/ZD_NODES`.
    nodes: Vec<[f64; 2]>,
}

impl ZeroDiffusionSolution {
    fn rhs(&self, x: f64, y: [f64; 2]) -> [f64; 2] {
        rhs_qi(&self.f1, &self.f2, &self.nu12, &self.nu21, x, y)
    }

    fn qi(&self, x: f64) -> [f64; 2] {
        let x = x.rem_euclid(1.0);
        let h = 1.0 / ZD_NODES as f64;
        let k = ((x / h).floor() as usize).min(ZD_NODES - 1);
        let x0 = k as f64 * h;
        let y0 = self.nodes[k];
        if x == x0 {
            return y0;
        }
        rk4(&|s, y| self.rhs(s, y), x0, y0, x - x0)
    }

    /// `u = F₁ζ₁`.
    pub fn u(&self, x: f64) -> f64 {
        let [q, i] = self.qi(x);
        (-q).exp() * (self.m + self.velocity * i)
    }

    pub fn zeta1(&self, x: f64) -> f64 {
        self.u(x) / self.f1.eval(x)
    }

    pub fn zeta2(&self, x: f64) -> f64 {
        (self.velocity - self.u(x)) / self.f2.eval(x)
    }
}

fn rhs_qi(f1: &ForceField, f2: &ForceField, nu12: &RateField, nu21: &RateField, x: f64, y: [f64; 2]) -> [f64; 2] {
    let r = nu12.eval(x) / f2.eval(x);
    [r + nu21.eval(x) / f1.eval(x), y[0].exp() * r]
}

fn rk4(f: &impl Fn(f64, [f64; 2]) -> [f64; 2], x: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, add(y, k1, 0.5 * h));
    let k3 = f(x + 0.5 * h, add(y, k2, 0.5 * h));
    let k4 = f(x + h, add(y, k3, h));
    [y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]), y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])]
}

/// Solves the zero-diffusion system for zero-free forces.
pub fn zero_diffusion_case3(f1: &ForceField, f2: &ForceField, nu12: &RateField, nu21: &RateField) -> Result<ZeroDiffusionSolution> {
    if !(nu12.scan_min() > 0.0 && nu21.scan_min() > 0.0) {
        return Err(RatchetError::Precondition("rates must be strictly positive".into()));
    }
    for (name, f) in [("F1", f1), ("F2", f2)] {
        if !find_zeros(|x| f.eval(x))?.is_empty() {
            return Err(RatchetError::Precondition(format!("{name} has zeros")));
        }
    }
    let h = 1.0 / ZD_NODES as f64;
    let rhs = |x: f64, y: [f64; 2]| rhs_qi(f1, f2, nu12, nu21, x, y);
    let mut nodes = Vec::with_capacity(ZD_NODES + 1);
    let mut y = [0.0, 0.0];
    nodes.push(y);
    for k in 0..ZD_NODES {
        y = rk4(&rhs, k as f64 * h, y, h);
        if !(y[0].abs() < 600.0 && y[1].is_finite()) {
            return Err(RatchetError::InvalidParameter(format!("exchange exponent {} too large", y[0])));
        }
        nodes.push(y);
    }
    let [q1, i1] = nodes[ZD_NODES];
    // Normalisation integrals by Simpson on the node grid.
    let (mut na, mut nb) = (0.0, 0.0);
    for (k, &[q, i]) in nodes.iter().enumerate() {
        let x = k as f64 * h;
        let w = if k == 0 || k == ZD_NODES {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (a, b) = ((-q).exp(), (-q).exp() * i);
        let (g1, g2) = (1.0 / f1.eval(x), 1.0 / f2.eval(x));
        na += w * a * (g1 - g2);
        nb += w * (b * g1 + (1.0 - b) * g2);
    }
    na *= h / 3.0;
    nb *= h / 3.0;
    let e = (-q1).exp();
    let sys = Matrix2::new(e - 1.0, e * i1, na, nb);
    let rhs_v = Vector2::new(0.0, 1.0);
    let det = sys.determinant();
    if !(det.abs() > 1e-14 * sys.norm().powi(2)) {
        return Err(RatchetError::SingularSystem(format!("periodicity/normalisation determinant {det}")));
    }
    let sol = sys.lu().solve(&rhs_v).ok_or_else(|| RatchetError::SingularSystem("2x2 solve failed".into()))?;
    nodes.pop();
    let mut out = ZeroDiffusionSolution {
        m: sol[0],
        velocity: sol[1],
        identity_residual: 0.0,
        ode_residual: 0.0,
        min_component: f64::INFINITY,
        f1: f1.clone(),
        f2: f2.clone(),
        nu12: nu12.clone(),
        nu21: nu21.clone(),
        nodes,
    };
    let checks = 2000;
    let dx = 1e-5;
    let mut scale = 0.0f64;
    let mut ode = 0.0f64;
    for c in 0..checks {
        let x = (c as f64 + 0.5) / checks as f64;
        let (z1, z2) = (out.zeta1(x), out.zeta2(x));
        out.identity_residual = out.identity_residual.max((f1.eval(x) * z1 + f2.eval(x) * z2 - out.velocity).abs());
        out.min_component = out.min_component.min(z1).min(z2);
        let du = (out.u(x + dx) - out.u(x - dx)) / (2.0 * dx);
        let exch = nu12.eval(x) * z2 - nu21.eval(x) * z1;
        ode = ode.max((du - exch).abs());
        scale = scale.max(exch.abs()).max(du.abs()).max(z1.abs());
    }
    out.ode_residual = ode / scale.max(f64::MIN_POSITIVE);
    if out.identity_residual > 1e-8 {
        return Err(RatchetError::NoConvergence { iterations: checks, residual: out.identity_residual });
    }
    Ok(out)
}

/// Velocity of the randomly tilting two-state ratchet at `σ = 1`:
/// `F₁ = −(ψ_x + ω)`, `F₂ = −(ψ_x + Ω)` with `Ω = −ων₁₂/ν₂₁`.
pub fn random_tilt_velocity(omega: f64, psi: &BasePotential, nu12: f64, nu21: f64, cfg: SolverConfig) -> Result<f64> {
    if !(nu12 > 0.0 && nu21 > 0.0) {
        return Err(RatchetError::InvalidParameter(format!("rates must be positive, got {nu12}, {nu21}")));
    }
    let big = -omega * nu12 / nu21;
    let sys = MultiStateSystem::two_state(
        ForceField::tilted(psi.clone(), omega),
        ForceField::tilted(psi.clone(), big),
        RateField::constant(nu12),
        RateField::constant(nu21),
        1.0,
    )?;
    let d = ms_stationary(&sys, cfg)?;
    Ok(ms_velocity(&d, &sys))
}
