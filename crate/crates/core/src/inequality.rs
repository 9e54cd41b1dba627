//! Numerical checks of the functional inequalities behind the sign results.
//!
//! Every checker returns the signed slack (left side minus right side), so
//! a valid input should never give a value below the stated tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{RatchetError, Result};
use crate::quadrature::{integrate, QuadOptions};

/// `φ(0)` may exceed zero by at most this much.
pub const PHI_ZERO_TOL: f64 = 1e-12;

fn precondition(msg: String) -> RatchetError {
    RatchetError::Precondition(msg)
}

fn check_increasing(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Result<()> {
    let mut prev = f(a);
    for i in 1..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let v = f(x);
        if v < prev - 1e-14 * (1.0 + prev.abs()) {
            return Err(precondition(format!("f decreases near x = {x}")));
        }
        prev = v;
    }
    Ok(())
}

fn check_convex(phi: &impl Fn(f64) -> f64, hi: f64, n: usize) -> Result<()> {
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let h = hi / n as f64;
    let v: Vec<f64> = (0..=n).map(|i| phi(i as f64 * h)).collect();
    let scale = v.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    for i in 1..n {
        let d2 = v[i - 1] - 2.0 * v[i] + v[i + 1];
        if d2 < -1e-10 * scale {
            return Err(precondition(format!("phi is not convex near {}", i as f64 * h)));
        }
    }
    Ok(())
}

fn check_phi_zero(phi: &impl Fn(f64) -> f64) -> Result<()> {
    let p0 = phi(0.0);
    if p0 > PHI_ZERO_TOL {
        return Err(precondition(format!("phi(0) = {p0} must be <= 0")));
    }
    Ok(())
}

fn check_odd_positive(big_phi: &impl Fn(f64) -> f64, n: usize) -> Result<()> {
    for i in 1..=n {
        let t = 0.5 * i as f64 / n as f64;
        let (p, m) = (big_phi(t), big_phi(-t));
        if !(p > 0.0) {
            return Err(precondition(format!("Phi({t}) = {p} must be positive")));
        }
        if (p + m).abs() > 1e-12 * (1.0 + p.abs()) {
            return Err(precondition(format!("Phi is not odd at {t}")));
        }
    }
    Ok(())
}

/// Product trapezoid over `{0 ≤ y ≤ x ≤ 1}` of node values `v(i, j)`, `j ≤ i`,
/// on the grid with `n` cells and node stride `s`.
fn triangle_trapezoid(v: &impl Fn(usize, usize) -> f64, n: usize, s: usize) -> f64 {
    let m = n / s;
    let h = 1.0 / m as f64;
    let mut sum = 0.0;
    for i in 0..m {
        let (a, b) = (i * s, (i + 1) * s);
        for j in 0..i {
            let (c, d) = (j * s, (j + 1) * s);
            sum += 0.25 * (v(a, c) + v(b, c) + v(a, d) + v(b, d));
        }
        sum += 0.5 * (v(a, a) + v(b, a) + v(b, b)) / 3.0;
    }
    sum * h * h
}

/// `∫₀¹∫₀ˣ φ(f(x) − f(y))·Φ(x − y − ½) dy dx` by the product trapezoid rule
/// at `n` and `n/2` cells with one Richardson step.
pub fn double_integral_inequality(f: impl Fn(f64) -> f64, phi: impl Fn(f64) -> f64, big_phi: impl Fn(f64) -> f64, n: usize) -> Result<f64> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(RatchetError::InvalidParameter(format!("n must be even and >= 4, got {n}")));
    }
    check_increasing(&f, 0.0, 1.0, n)?;
    let fv: Vec<f64> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
    check_convex(&phi, fv[n] - fv[0], 4 * n)?;
    check_phi_zero(&phi)?;
    check_odd_positive(&big_phi, n)?;
    let h = 1.0 / n as f64;
    let v = |i: usize, j: usize| phi(fv[i] - fv[j]) * big_phi((i as f64 - j as f64) * h - 0.5);
    let fine = triangle_trapezoid(&v, n, 1);
    let coarse = triangle_trapezoid(&v, n, 2);
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `Σᵢ₌₁ᵐ φ(x_i + … + x_{i+m}) − Σᵢ₌₁ᵐ⁺¹ φ(x_i + … + x_{i+m−1})` for `2m`
/// nonnegative numbers.
pub fn discrete_window_inequality(x: &[f64], phi: impl Fn(f64) -> f64) -> Result<f64> {
    if x.is_empty() || !x.len().is_multiple_of(2) {
        return Err(RatchetError::InvalidParameter(format!("need 2m > 0 numbers, got {}", x.len())));
    }
    if let Some(j) = x.iter().position(|v| !(*v >= 0.0)) {
        return Err(RatchetError::NonPositive { index: j, value: x[j] });
    }
    check_phi_zero(&phi)?;
    let m = x.len() / 2;
    let window = |i: usize, len: usize| x[i..i + len].iter().sum::<f64>();
    let lhs: f64 = (0..m).map(|i| phi(window(i, m + 1))).sum();
    let rhs: f64 = (0..=m).map(|i| phi(window(i, m))).sum();
    Ok(lhs - rhs)
}

/// `∫₀ᵃ φ(f(x+b) − f(x)) dx − ∫₀ᵇ φ(f(x+a) − f(x)) dx` for `0 < a < b`.
pub fn rearranged_interval_inequality(f: impl Fn(f64) -> f64, phi: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Result<f64> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(RatchetError::InvalidParameter(format!("need 0 < a < b, got a = {a}, b = {b}")));
    }
    check_increasing(&f, 0.0, a + b, n.max(16))?;
    check_convex(&phi, f(a + b) - f(0.0), 4 * n.max(16))?;
    check_phi_zero(&phi)?;
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_intervals: 4000, initial_pieces: n.clamp(1, 64) };
    let left = integrate(|x| phi(f(x + b) - f(x)), 0.0, a, opts)?;
    let right = integrate(|x| phi(f(x + a) - f(x)), 0.0, b, opts)?;
    Ok(left - right)
}

/// `α(ω) = e^ω − 1`.
pub fn alpha(omega: f64) -> f64 {
    omega.exp_m1()
}

/// `V_ω(F) = α(ω)∬_{y≤x} F(y)/F(x) + ∬_{[0,1]²} F(y)/F(x)`; trapezoid at
/// `n` and `n/2` cells with one Richardson step.
pub fn evaluate_v(f: impl Fn(f64) -> f64, omega: f64, n: usize) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(RatchetError::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    if n < 4 || !n.is_multiple_of(2) {
        return Err(RatchetError::InvalidParameter(format!("n must be even and >= 4, got {n}")));
    }
    let fv: Vec<f64> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
    if let Some(j) = fv.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(RatchetError::NonPositive { index: j, value: fv[j] });
    }
    let at_stride = |s: usize| {
        let m = n / s;
        let h = 1.0 / m as f64;
        let node = |i: usize| fv[i * s];
        let trap = |g: &dyn Fn(usize) -> f64| h * (0.5 * (g(0) + g(m)) + (1..m).map(g).sum::<f64>());
        let mut cum = vec![0.0; m + 1];
        for i in 1..=m {
            cum[i] = cum[i - 1] + 0.5 * h * (node(i - 1) + node(i));
        }
        let tri = trap(&|i| cum[i] / node(i));
        let square = trap(&node) * trap(&|i| 1.0 / node(i));
        alpha(omega) * tri + square
    };
    Ok((4.0 * at_stride(1) - at_stride(2)) / 3.0)
}

/// `V_ω(F) − α(ω)/ω`.
pub fn functional_slack(f: impl Fn(f64) -> f64, omega: f64, n: usize) -> Result<f64> {
    Ok(evaluate_v(f, omega, n)? - alpha(omega) / omega)
}

/// Piecewise-linear function on `[0, len]` through equally spaced knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    len: f64,
    knots: Vec<f64>,
}

impl PiecewiseLinear {
    /// Knot values are the running sums of `increments`, starting at `start`.
    pub fn from_increments(start: f64, increments: &[f64], len: f64) -> Self {
        let mut knots = vec![start];
        for d in increments {
            knots.push(knots.last().copied().unwrap_or(start) + d);
        }
        Self { len, knots }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = self.knots.len() - 1;
        if m == 0 {
            return self.knots[0];
        }
        let s = (x / self.len * m as f64).clamp(0.0, m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let t = s - k as f64;
        self.knots[k] * (1.0 - t) + self.knots[k + 1] * t
    }
}

/// Smooth strictly increasing `x + Σ aₖ sin(2πkx/L)·L/(2πk)` with `Σ|aₖ| < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavyIncreasing {
    len: f64,
    amps: Vec<f64>,
}

impl WavyIncreasing {
    pub fn random(rng: &mut impl Rng, len: f64, modes: usize) -> Self {
        let raw: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total: f64 = raw.iter().map(|a| a.abs()).sum::<f64>().max(1e-12);
        let cap = rng.gen_range(0.1..0.9);
        Self { len, amps: raw.iter().map(|a| a * cap / total).collect() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / self.len;
        x + self
            .amps
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let kw = w * (k + 1) as f64;
                a * (kw * x).sin() / kw
            })
            .sum::<f64>()
    }
}

fn case_rng(master: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(case as u64);
    rng
}

fn random_increments(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.8) }).collect()
}

/// Which family a randomized suite draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Double integral with random increasing piecewise-linear `f`, `φ = Φ = sinh`.
    DoubleIntegral,
    /// Window sums of `2m` random nonnegative numbers, `φ = sinh`.
    Window,
    /// Interval rearrangement with random smooth increasing `f`, `φ = sinh`.
    Interval,
    /// `V_ω` on random positive `F`.
    Functional,
}

impl std::str::FromStr for Suite {
    type Err = RatchetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinineq" => Ok(Self::DoubleIntegral),
            "window" => Ok(Self::Window),
            "interval" => Ok(Self::Interval),
            "functional" => Ok(Self::Functional),
            _ => Err(RatchetError::Parse(format!("unknown inequality suite {s:?}"))),
        }
    }
}

/// One randomized case: its slack and, for the functional suite, the
/// distance `‖F/F(0) − e^{ωx}‖∞` from the minimisers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SuiteRow {
    pub case_id: usize,
    pub slack: f64,
    pub distance: Option<f64>,
}

fn run_case(suite: Suite, master: u64, case: usize, omega: f64) -> Result<SuiteRow> {
    let mut rng = case_rng(master, case);
    let row = |slack, distance| SuiteRow { case_id: case, slack, distance };
    match suite {
        Suite::DoubleIntegral => {
            let k = rng.gen_range(2..12);
            let pl = PiecewiseLinear::from_increments(rng.gen_range(-1.0..1.0), &random_increments(&mut rng, k), 1.0);
            Ok(row(double_integral_inequality(|x| pl.eval(x), f64::sinh, f64::sinh, 256)?, None))
        }
        Suite::Window => {
            let m = rng.gen_range(1..6);
            let x: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(0.0..1.5)).collect();
            Ok(row(discrete_window_inequality(&x, f64::sinh)?, None))
        }
        Suite::Interval => {
            let b = rng.gen_range(0.2..1.0);
            let a = b * rng.gen_range(0.05..0.95);
            let f = WavyIncreasing::random(&mut rng, a + b, 4);
            Ok(row(rearranged_interval_inequality(|x| f.eval(x), f64::sinh, a, b, 64)?, None))
        }
        Suite::Functional => {
            let f: Box<dyn Fn(f64) -> f64> = if rng.gen_bool(0.5) {
                let amps: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let scale = rng.gen_range(0.05..1.0) / amps.iter().map(|a: &f64| a.abs()).sum::<f64>().max(1e-12);
                let phases: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                Box::new(move |x: f64| {
                    let p: f64 = amps.iter().zip(&phases).enumerate().map(|(k, (a, ph))| a * ((k + 1) as f64 * std::f64::consts::PI * x + ph).sin()).sum();
                    (omega * x + scale * p).exp()
                })
            } else {
                let k = rng.gen_range(2..8);
                let incs: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.5..1.0)).collect();
                let pl = PiecewiseLinear::from_increments(0.0, &incs, 1.0);
                let lo = (0..=200).map(|i| pl.eval(i as f64 / 200.0)).fold(f64::INFINITY, f64::min);
                let shift = rng.gen_range(0.05..1.0) - lo;
                Box::new(move |x: f64| pl.eval(x) + shift)
            };
            let f0 = f(0.0);
            let dist = (0..=1000).map(|i| i as f64 / 1000.0).map(|x| (f(x) / f0 - (omega * x).exp()).abs()).fold(0.0, f64::max);
            Ok(row(functional_slack(&f, omega, 512)?, Some(dist)))
        }
    }
}

/// Runs `cases` seeded cases concurrently; rows come back in case order.
pub fn run_suite(suite: Suite, master_seed: u64, cases: usize, omega: f64) -> Result<Vec<SuiteRow>> {
    (0..cases).into_par_iter().map(|c| run_case(suite, master_seed, c, omega)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::j_functional;
    use crate::potentials::BasePotential;
    use proptest::prelude::*;

    #[test]
    fn double_integral_examples() {
        let c = double_integral_inequality(|_| 0.7, f64::sinh, f64::sinh, 128).unwrap();
        assert_eq!(c, 0.0);
        let v = double_integral_inequality(|x| x, f64::sinh, f64::sinh, 512).unwrap();
        assert!(v > 1e-4, "{v}");
        // Affine shift of f.
        let w = double_integral_inequality(|x| x + 3.0, f64::sinh, f64::sinh, 512).unwrap();
        assert!((v - w).abs() < 1e-10);
        assert!(double_integral_inequality(|x| -x, f64::sinh, f64::sinh, 64).is_err());
        assert!(double_integral_inequality(|x| x, |z: f64| (-z * z).exp() - 1.0, f64::sinh, 64).is_err());
        assert!(double_integral_inequality(|x| x, |z: f64| z.cosh(), f64::sinh, 64).is_err());
        assert!(double_integral_inequality(|x| x, f64::sinh, f64::cosh, 64).is_err());
    }

    #[test]
    fn double_integral_matches_quadrature() {
        // f(x) = x, φ(z) = z², Φ(t) = t: ∫₀¹∫₀ˣ (x−y)²(x−y−½) = ∫₀¹ (1−s) s² (s−½) ds = 1/120.
        let v = double_integral_inequality(|x| x, |z| z * z, |t| t, 1024).unwrap();
        assert!((v - 1.0 / 120.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn window_examples() {
        assert_eq!(discrete_window_inequality(&[0.0; 6], f64::sinh).unwrap(), 0.0);
        assert!((discrete_window_inequality(&[1.0, 1.0], |z| z * z).unwrap() - 2.0).abs() < 1e-15);
        assert!(discrete_window_inequality(&[1.0, -1.0], f64::sinh).is_err());
        assert!(discrete_window_inequality(&[1.0, 1.0], |z| z * z + 1.0).is_err());
        let rows = run_suite(Suite::Window, 7, 40, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.slack > 0.0));
    }

    #[test]
    fn superadditivity_grid() {
        for phi in [f64::sinh as fn(f64) -> f64, |z: f64| z * z - 0.3, |z: f64| z.exp() - 1.5] {
            for i in 0..50 {
                for j in 0..50 {
                    let (a, b) = (i as f64 * 0.06, j as f64 * 0.06);
                    let s = discrete_window_inequality(&[a, b], phi).unwrap();
                    let direct = phi(a + b) - phi(a) - phi(b);
                    assert!((s - direct).abs() < 1e-12 && s >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn interval_examples() {
        let (a, b, c) = (0.3, 0.8, 1.7);
        let v = rearranged_interval_inequality(|x| c * x, |z| z * z, a, b, 32).unwrap();
        assert!((v - c * c * a * b * (b - a)).abs() < 1e-12);
        assert!(rearranged_interval_inequality(|_| 2.0, f64::sinh, a, b, 32).unwrap().abs() < 1e-15);
        assert!(rearranged_interval_inequality(|x| x, f64::sinh, b, a, 32).is_err());
        let mut rng = case_rng(11, 0);
        for _ in 0..10 {
            let f = WavyIncreasing::random(&mut rng, 1.5, 5);
            assert!(rearranged_interval_inequality(|x| f.eval(x), f64::sinh, 0.5, 1.0, 64).unwrap() > 1e-6);
        }
    }

    #[test]
    fn functional_examples() {
        let e = std::f64::consts::E;
        assert!((evaluate_v(f64::exp, 1.0, 512).unwrap() - (e - 1.0)).abs() < 1e-8);
        assert!((evaluate_v(|_| 1.0, 1.0, 512).unwrap() - ((e - 1.0) / 2.0 + 1.0)).abs() < 1e-8);
        let f = |x: f64| 1.0 + 0.5 * (3.0 * x).sin();
        let v = evaluate_v(f, 1.0, 512).unwrap();
        for c in [0.1, 10.0] {
            assert!((evaluate_v(|x| c * f(x), 1.0, 512).unwrap() - v).abs() < 1e-12);
        }
        assert!(evaluate_v(|x| x - 0.5, 1.0, 64).is_err());
    }

    #[test]
    fn randomized_suites() {
        let rows = run_suite(Suite::DoubleIntegral, 3, 50, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.slack >= -1e-8), "{rows:?}");
        let rows = run_suite(Suite::Interval, 5, 30, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.slack >= -1e-8));
        for omega in [0.5, 2.0] {
            let rows = run_suite(Suite::Functional, 9, 100, omega).unwrap();
            for r in rows {
                assert!(r.slack >= -1e-7);
                if r.slack <= 1e-6 {
                    assert!(r.distance.unwrap() <= 1e-4, "{r:?}");
                }
            }
        }
        let again = run_suite(Suite::DoubleIntegral, 3, 50, 1.0).unwrap();
        assert_eq!(again, run_suite(Suite::DoubleIntegral, 3, 50, 1.0).unwrap());
    }

    #[test]
    fn increasing_potential_gives_positive_j() {
        let psi = BasePotential::ArcStretch { base: Box::new(BasePotential::Sine { k: 1, a: 1.0 }), alpha: 0.75, beta: 0.25 };
        for omega in [0.5, 1.0, 3.0] {
            assert!(j_functional(omega, &psi).unwrap() > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn window_nonnegative(x in proptest::collection::vec(0.0f64..2.0, 1..5), c in 0.0f64..1.0) {
            let mut xs = x.clone();
            xs.extend(x.iter().rev());
            let s = discrete_window_inequality(&xs, |z| z * z - c).unwrap();
            prop_assert!(s >= -1e-12);
        }

        #[test]
        fn double_integral_shift_invariant(k in 0.1f64..3.0, c in -5.0f64..5.0) {
            let a = double_integral_inequality(|x| k * x * x, f64::sinh, f64::sinh, 128).unwrap();
            let b = double_integral_inequality(|x| k * x * x + c, f64::sinh, f64::sinh, 128).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a > 0.0);
        }
    }
}
