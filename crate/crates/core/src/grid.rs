//! Cell-averaged densities on the unit circle and the entropy functionals
//! built on them.
//!
//! A [`GridFunction`] with `n` cells stores one value per cell of width `1/n`,
//! centred at `(j + 1/2)/n`. Indexing is circular.

use std::fmt::Write as _;

use crate::error::{RatchetError, Result};

/// Tolerance on the mass of user-supplied densities.
pub const INPUT_MASS_TOL: f64 = 1e-8;
/// Tolerance on the mass of densities built by this crate.
pub const CONSTRUCTION_MASS_TOL: f64 = 1e-12;

/// Nonnegative cell averages of a density on the circle of circumference 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps raw cell values. Every value must be finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RatchetError::InvalidGrid("zero cells".into()));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(RatchetError::InvalidGrid(format!("non-finite value {} at cell {j}", values[j])));
        }
        Ok(Self { values })
    }

    /// A probability density: nonnegative with unit mass within [`CONSTRUCTION_MASS_TOL`].
    pub fn probability(values: Vec<f64>) -> Result<Self> {
        let g = Self::new(values)?;
        if let Some(j) = g.values.iter().position(|&v| v < 0.0) {
            return Err(RatchetError::InvalidGrid(format!("negative value {} at cell {j}", g.values[j])));
        }
        let m = g.mass();
        if (m - 1.0).abs() > CONSTRUCTION_MASS_TOL {
            return Err(RatchetError::MassMismatch { mass: m, tol: CONSTRUCTION_MASS_TOL });
        }
        Ok(g)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        assert!(n > 0, "grid needs at least one cell");
        Self { values: vec![value; n] }
    }

    pub fn uniform(n: usize) -> Self {
        Self::constant(n, 1.0)
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|j| f(cell_center(j, n))).collect())
    }

    /// Cell averages of `f` by three-point Gauss–Legendre on every cell.
    pub fn cell_averages(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / n as f64;
        let r = (0.6f64).sqrt() * 0.5;
        let values = (0..n)
            .map(|j| {
                let c = cell_center(j, n);
                (5.0 * f(c - r * h) + 8.0 * f(c) + 5.0 * f(c + r * h)) / 18.0
            })
            .collect();
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at circular index `j mod n`.
    pub fn at(&self, j: isize) -> f64 {
        let n = self.values.len() as isize;
        self.values[j.rem_euclid(n) as usize]
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n();
        (0..n).map(move |j| cell_center(j, n))
    }

    /// Total mass `(Σ values)/n`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { values: self.values.iter().map(|v| a * v).collect() }
    }

    /// Rescales to unit mass, returning the density and the factor applied.
    pub fn normalized(&self) -> Result<(Self, f64)> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(RatchetError::InvalidGrid(format!("cannot normalise mass {m}")));
        }
        Ok((self.scaled(1.0 / m), 1.0 / m))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest cell value.
    pub fn argmax(&self) -> usize {
        self.values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc }).0
    }

    /// `x,value` rows at the cell centres with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.centers().zip(&self.values) {
            let _ = writeln!(out, "{},{}", fmt17(x), fmt17(*v));
        }
        out
    }
}

/// Centre of cell `j` on a grid of `n` cells.
pub fn cell_center(j: usize, n: usize) -> f64 {
    (j as f64 + 0.5) / n as f64
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn same_n(g: &GridFunction, h: &GridFunction) -> Result<()> {
    if g.n() != h.n() {
        return Err(RatchetError::GridMismatch { left: g.n(), right: h.n() });
    }
    Ok(())
}

fn unit_mass(g: &GridFunction) -> Result<()> {
    let m = g.mass();
    if (m - 1.0).abs() > INPUT_MASS_TOL {
        return Err(RatchetError::MassMismatch { mass: m, tol: INPUT_MASS_TOL });
    }
    Ok(())
}

fn positive(g: &GridFunction) -> Result<()> {
    match g.values.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(RatchetError::NonPositive { index, value: g.values[index] }),
        None => Ok(()),
    }
}

pub fn mass(g: &GridFunction) -> f64 {
    g.mass()
}

/// `‖g − h‖₁ = (Σ |g_j − h_j|)/n`.
pub fn l1_distance(g: &GridFunction, h: &GridFunction) -> Result<f64> {
    same_n(g, h)?;
    let s: f64 = g.values.iter().zip(&h.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / g.n() as f64)
}

/// Relative entropy `E[g|h] = (Σ g_j ln(g_j/h_j))/n` with `0·ln 0 = 0`.
///
/// Summed as `Σ h(r ln r − r + 1)` plus the mass difference so that nearby
/// densities keep full relative accuracy.
pub fn relative_entropy(g: &GridFunction, h: &GridFunction) -> Result<f64> {
    same_n(g, h)?;
    positive(h)?;
    if let Some(j) = g.values.iter().position(|&v| v < 0.0) {
        return Err(RatchetError::InvalidGrid(format!("negative value {} at cell {j}", g.values[j])));
    }
    unit_mass(g)?;
    unit_mass(h)?;
    let mut bregman = 0.0;
    let mut dmass = 0.0;
    for (&a, &b) in g.values.iter().zip(&h.values) {
        let term = if a == 0.0 { b } else { a * (a / b).ln() - a + b };
        bregman += term;
        dmass += a - b;
    }
    Ok((bregman + dmass) / g.n() as f64)
}

/// Entropy production `∫ g |(ln(g/h))_x|²` with centred differences of `ln(g/h)`.
pub fn entropy_production(g: &GridFunction, h: &GridFunction) -> Result<f64> {
    same_n(g, h)?;
    positive(g)?;
    positive(h)?;
    let n = g.n();
    let hx = 1.0 / n as f64;
    let u: Vec<f64> = g.values.iter().zip(&h.values).map(|(a, b)| (a / b).ln()).collect();
    let mut s = 0.0;
    for j in 0..n {
        let d = (u[(j + 1) % n] - u[(j + n - 1) % n]) / (2.0 * hx);
        s += g.values[j] * d * d;
    }
    Ok(s * hx)
}

/// Slack `2·E[g|h] − ‖g − h‖₁²` of the Csiszár–Kullback inequality.
pub fn check_csiszar_kullback(g: &GridFunction, h: &GridFunction) -> Result<f64> {
    let e = relative_entropy(g, h)?;
    let d = l1_distance(g, h)?;
    Ok(2.0 * e - d * d)
}

/// Relative entropy sampled along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub production: Vec<f64>,
    /// Fitted exponential decay rate of the entropy over the tail half.
    pub decay_rate_estimate: f64,
}

impl EntropyTrace {
    /// Largest increase between consecutive samples whose times both lie in
    /// one of the half-open windows given by `boundaries`.
    pub fn max_increase_within(&self, period: f64, boundaries: &[f64]) -> f64 {
        let window = |t: f64| {
            let phase = t.rem_euclid(period);
            let k = (t / period).floor() as i64;
            let seg = boundaries.iter().filter(|&&b| b <= phase + 1e-12).count();
            (k, seg)
        };
        self.times
            .windows(2)
            .zip(self.entropy.windows(2))
            .filter(|(t, _)| window(t[0] + 1e-12) == window(t[1] - 1e-12))
            .map(|(_, e)| e[1] - e[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Least-squares slope of `−ln E` against time over the tail half of the
/// samples with entropy above `floor`.
pub fn fit_decay_rate(times: &[f64], entropy: &[f64], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = times.iter().zip(entropy).filter(|(_, &e)| e > floor).map(|(&t, &e)| (t, e.ln())).collect();
    let tail = &pts[pts.len() / 2..];
    if tail.len() < 2 {
        return f64::NAN;
    }
    -least_squares_slope(tail)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}
