//! Exact formulas for tilted potentials: the coefficients `α, β₊, β₋, β, A, B`,
//! the stationary density `g*`, and the tilted, adiabatic and semiadiabatic
//! velocities together with the sign functional `J`.
//!
//! Everything is evaluated at the scaled arguments `(ω/σ, ψ/σ)`. The
//! exponential integrals are computed with their maxima factored out, so
//! large `|ω/σ|` does not overflow `A` and `B`.

use serde::Serialize;

use crate::error::{RatchetError, Result};
use crate::grid::{cell_center, GridFunction};
use crate::potentials::BasePotential;
use crate::quadrature::{integrate_split, QuadOptions};

/// Sign of a transport velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    /// Sign of `x`, with `|x| ≤ tol` counted as zero.
    pub fn of(x: f64, tol: f64) -> Self {
        if x > tol {
            Self::Positive
        } else if x < -tol {
            Self::Negative
        } else {
            Self::Zero
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Self::Negative => -1,
            Self::Zero => 0,
            Self::Positive => 1,
        }
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 4000, initial_pieces: 4 }
}

const PROBE: usize = 2048;

/// `Φ(x) = (ωx + ψ(x))/σ` and the data needed to integrate `e^{±Φ}`.
struct Phase<'a> {
    w: f64,
    sigma: f64,
    psi: &'a BasePotential,
    breaks: Vec<f64>,
}

impl Phase<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.w * x + self.psi.value(x) / self.sigma
    }

    fn samples(&self) -> Vec<f64> {
        (0..=PROBE).map(|k| self.eval(k as f64 / PROBE as f64)).collect()
    }

    /// `ln ∫ₐᵇ e^{s·Φ(y) + c} dy`.
    fn ln_integral_exp(&self, s: f64, c: f64, a: f64, b: f64) -> Result<f64> {
        let m = (0..=32).map(|k| s * self.eval(a + (b - a) * k as f64 / 32.0) + c).fold(f64::NEG_INFINITY, f64::max);
        let v = integrate_split(|y| (s * self.eval(y) + c - m).exp(), a, b, &self.breaks, quad_opts())?;
        Ok(m + v.ln())
    }
}

/// `ln|e^w − 1|`.
fn ln_abs_expm1(w: f64) -> f64 {
    if w > 30.0 {
        w + (-(-w).exp()).ln_1p()
    } else {
        w.exp_m1().abs().ln()
    }
}

/// Coefficients of the tilted potential `ψ(x) + ωx` at diffusion `σ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormCoeffs {
    pub omega: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub beta: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(skip)]
    ln_b: f64,
}

impl ClosedFormCoeffs {
    pub fn ln_b(&self) -> f64 {
        self.ln_b
    }

    /// `αβ + β₊β₋`, possibly overflowing for large `|ω/σ|`.
    pub fn denominator(&self) -> f64 {
        self.alpha * self.beta + self.beta_plus * self.beta_minus
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(RatchetError::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// `(ln β₊, ln β₋, ln β)` at scaled tilt `w`.
fn log_parts(w: f64, psi: &BasePotential, sigma: f64) -> Result<(f64, f64, f64)> {
    let phase = Phase { w, sigma, psi, breaks: psi.breakpoints() };
    let samples = phase.samples();

    let m_plus = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m_minus = samples.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let ln_bp = phase.ln_integral_exp(1.0, -m_plus, 0.0, 1.0)? + m_plus;
    let ln_bm = phase.ln_integral_exp(-1.0, -m_minus, 0.0, 1.0)? + m_minus;

    // max over y ≤ x of Φ(y) − Φ(x), for shifting the double integral.
    let mut running = f64::NEG_INFINITY;
    let mut m_beta: f64 = 0.0;
    for &v in &samples {
        running = running.max(v);
        m_beta = m_beta.max(running - v);
    }
    let mut inner_err = None;
    let beta_scaled = integrate_split(
        |x| {
            let fx = phase.eval(x);
            let inner = integrate_split(|y| (phase.eval(y) - fx - m_beta).exp(), 0.0, x, &phase.breaks, QuadOptions { initial_pieces: 1, ..quad_opts() });
            inner.unwrap_or_else(|e| {
                inner_err = Some(e);
                0.0
            })
        },
        0.0,
        1.0,
        &phase.breaks,
        quad_opts(),
    )?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok((ln_bp, ln_bm, beta_scaled.ln() + m_beta))
}

/// `(A, ln B)` for `w > 0`, where both terms of the denominator are positive.
fn positive_tilt_ab(w: f64, ln_bp: f64, ln_bm: f64, ln_beta: f64) -> (f64, f64) {
    let ln_alpha = ln_abs_expm1(w);
    let ln_d = log_add(ln_alpha + ln_beta, ln_bp + ln_bm);
    ((ln_alpha - ln_d).exp(), ln_bp - ln_d)
}

pub fn compute_coeffs(omega: f64, psi: &BasePotential, sigma: f64) -> Result<ClosedFormCoeffs> {
    check_sigma(sigma)?;
    if !omega.is_finite() {
        return Err(RatchetError::InvalidParameter(format!("omega must be finite, got {omega}")));
    }
    let w = omega / sigma;
    let (ln_bp, ln_bm, ln_beta) = log_parts(w, psi, sigma)?;

    let (a, ln_b) = if w == 0.0 {
        (0.0, ln_bp - (ln_bp + ln_bm))
    } else if w > 0.0 {
        positive_tilt_ab(w, ln_bp, ln_bm, ln_beta)
    } else {
        // For w < 0 the denominator cancels; x ↦ 1 − x maps it to a positive
        // tilt with A ↦ −A and B unchanged.
        let refl = psi.clone().reflected();
        let (rp, rm, rb) = log_parts(-w, &refl, sigma)?;
        let (ar, ln_br) = positive_tilt_ab(-w, rp, rm, rb);
        (-ar, ln_br)
    };

    Ok(ClosedFormCoeffs { omega, sigma, alpha: w.exp_m1(), beta_plus: ln_bp.exp(), beta_minus: ln_bm.exp(), beta: ln_beta.exp(), a, b: ln_b.exp(), ln_b })
}

/// `g*` sampled at the centres of `n` cells, before renormalisation.
pub fn stationary_samples(omega: f64, psi: &BasePotential, sigma: f64, n: usize) -> Result<(Vec<f64>, ClosedFormCoeffs)> {
    if n < 8 {
        return Err(RatchetError::InvalidParameter(format!("need n >= 8 cells, got {n}")));
    }
    let c = compute_coeffs(omega, psi, sigma)?;
    let phase = Phase { w: omega / sigma, sigma, psi, breaks: psi.breakpoints() };
    let xs: Vec<f64> = (0..n).map(|j| cell_center(j, n)).collect();
    let phi: Vec<f64> = xs.iter().map(|&x| phase.eval(x)).collect();

    // ln K(x) with K(x) = ∫ e^{Φ(y) − Φ(x)} dy over [0, x] (ω ≥ 0) or [x, 1] (ω < 0),
    // accumulated cell by cell.
    let mut ln_k = vec![f64::NEG_INFINITY; n];
    if omega >= 0.0 {
        let (mut prev_x, mut prev_phi, mut prev_k) = (0.0, phase.eval(0.0), f64::NEG_INFINITY);
        for j in 0..n {
            let piece = phase.ln_integral_exp(1.0, -phi[j], prev_x, xs[j])?;
            ln_k[j] = log_add(prev_k + prev_phi - phi[j], piece);
            (prev_x, prev_phi, prev_k) = (xs[j], phi[j], ln_k[j]);
        }
    } else {
        let (mut prev_x, mut prev_phi, mut prev_k) = (1.0, phase.eval(1.0), f64::NEG_INFINITY);
        for j in (0..n).rev() {
            let piece = phase.ln_integral_exp(1.0, -phi[j], xs[j], prev_x)?;
            ln_k[j] = log_add(prev_k + prev_phi - phi[j], piece);
            (prev_x, prev_phi, prev_k) = (xs[j], phi[j], ln_k[j]);
        }
    }

    let w = omega / sigma;
    let values = (0..n)
        .map(|j| {
            if omega >= 0.0 {
                let lead = c.ln_b - phi[j];
                if c.a == 0.0 {
                    lead.exp()
                } else {
                    log_add(lead, c.a.ln() + ln_k[j]).exp()
                }
            } else {
                // Periodicity gives B + A∫₀ˣ e^Φ = B·e^w − A∫ₓ¹ e^Φ.
                log_add(c.ln_b + w - phi[j], (-c.a).ln() + ln_k[j]).exp()
            }
        })
        .collect();
    Ok((values, c))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Stationary density of the tilted potential on `n` cells and the factor
/// that renormalised its samples to unit mass.
pub fn stationary_density_with_factor(omega: f64, psi: &BasePotential, sigma: f64, n: usize) -> Result<(GridFunction, f64)> {
    let (values, _) = stationary_samples(omega, psi, sigma, n)?;
    let g = GridFunction::new(values)?;
    g.normalized()
}

pub fn stationary_density(omega: f64, psi: &BasePotential, sigma: f64, n: usize) -> Result<GridFunction> {
    Ok(stationary_density_with_factor(omega, psi, sigma, n)?.0)
}

/// Asymptotic velocity `−σ·A(ω/σ, ψ/σ)` of the tilted potential.
pub fn tilted_velocity(omega: f64, psi: &BasePotential, sigma: f64) -> Result<f64> {
    if omega == 0.0 {
        check_sigma(sigma)?;
        return Ok(0.0);
    }
    Ok(-sigma * compute_coeffs(omega, psi, sigma)?.a)
}

/// Adiabatic-limit velocity `−(A(ω) + A(−ω))/2` at `σ = 1`.
pub fn adiabatic_velocity(omega: f64, psi: &BasePotential) -> Result<f64> {
    adiabatic_velocity_sigma(omega, psi, 1.0)
}

/// Adiabatic-limit velocity at diffusion `σ`: the mean of the two tilted velocities.
pub fn adiabatic_velocity_sigma(omega: f64, psi: &BasePotential, sigma: f64) -> Result<f64> {
    if omega == 0.0 {
        check_sigma(sigma)?;
        return Ok(0.0);
    }
    let ap = compute_coeffs(omega, psi, sigma)?.a;
    let am = compute_coeffs(-omega, psi, sigma)?.a;
    Ok(-sigma * (ap + am) / 2.0)
}

/// Semiadiabatic-limit velocity `ω − A(ω)` at `σ = 1`.
pub fn semiadiabatic_velocity(omega: f64, psi: &BasePotential) -> Result<f64> {
    semiadiabatic_velocity_sigma(omega, psi, 1.0)
}

pub fn semiadiabatic_velocity_sigma(omega: f64, psi: &BasePotential, sigma: f64) -> Result<f64> {
    if omega == 0.0 {
        check_sigma(sigma)?;
        return Ok(0.0);
    }
    Ok(omega - sigma * compute_coeffs(omega, psi, sigma)?.a)
}

/// `sinh(a)/sinh(b)` for `|a| ≤ |b|`, without overflow.
fn sinh_ratio(a: f64, b: f64) -> f64 {
    if b.abs() < 20.0 {
        return a.sinh() / b.sinh();
    }
    let sign = a.signum() * b.signum();
    let (a, b) = (a.abs(), b.abs());
    sign * (a - b).exp() * (-(-2.0 * a).exp()).ln_1p().exp() / (-(-2.0 * b).exp()).ln_1p().exp()
}

/// The sign functional
/// `J = 2∬_{0≤y≤x≤1} sinh(ψ(x) − ψ(y))·sinh(ω(x − y − ½)) dy dx / sinh(ω/2)`.
pub fn j_functional(omega: f64, psi: &BasePotential) -> Result<f64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(RatchetError::InvalidParameter("J needs a nonzero finite omega".into()));
    }
    let breaks = psi.breakpoints();
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 4000, initial_pieces: 2 };
    let mut inner_err = None;
    let outer = integrate_split(
        |x| {
            let px = psi.value(x);
            integrate_split(
                |y| (px - psi.value(y)).sinh() * sinh_ratio(omega * (x - y - 0.5), omega / 2.0),
                0.0,
                x,
                &breaks,
                QuadOptions { abs_tol: 1e-14, initial_pieces: 1, ..opts },
            )
            .unwrap_or_else(|e| {
                inner_err = Some(e);
                0.0
            })
        },
        0.0,
        1.0,
        &breaks,
        opts,
    )?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok(2.0 * outer)
}

/// All closed-form velocities for one `(ω, ψ, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityReport {
    pub v_tilted: f64,
    pub v_adiabatic: f64,
    pub v_semiadiabatic: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub predicted_sign: Sign,
}

/// Threshold below which `J` is reported as zero.
pub const J_ZERO_TOL: f64 = 1e-9;

pub fn velocity_report(omega: f64, psi: &BasePotential, sigma: f64) -> Result<VelocityReport> {
    let j = if omega == 0.0 { 0.0 } else { j_functional(omega, psi)? };
    Ok(VelocityReport {
        v_tilted: tilted_velocity(omega, psi, sigma)?,
        v_adiabatic: adiabatic_velocity_sigma(omega, psi, sigma)?,
        v_semiadiabatic: semiadiabatic_velocity_sigma(omega, psi, sigma)?,
        j,
        predicted_sign: Sign::of(j, J_ZERO_TOL),
    })
}
