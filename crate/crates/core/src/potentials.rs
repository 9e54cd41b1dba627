//! Base potentials, tilt protocols and the time-periodic drift force
//! `F(x, t) = −Ψ_x(x, t)` consumed by the solvers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::spline::PeriodicSpline;

const TWO_PI: f64 = 2.0 * PI;

/// A 1-periodic base potential `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub enum BasePotential {
    Zero,
    Constant(f64),
    /// `a·cos(2πkx)`.
    Cosine {
        k: u32,
        a: f64,
    },
    /// `a·sin(2πkx)`.
    Sine {
        k: u32,
        a: f64,
    },
    /// `a·cos(2πx) + b·sin(4πx)`.
    Asym {
        a: f64,
        b: f64,
    },
    /// `Σ_k cos[k]·cos(2π(k+1)x) + sin[k]·sin(2π(k+1)x)`.
    Fourier {
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Periodic cubic spline through equally spaced knots.
    Sampled(PeriodicSpline),
    /// `ψ(1 − x)`.
    Reflected(Box<BasePotential>),
    /// `ψ(h(x, λ))` for the squeeze reparametrisation of the circle.
    Squeeze(Box<Squeeze>),
    /// The `λ → 1` limit of the squeeze family: the arc `[α, β]` stretched
    /// over the whole circle. Discontinuous at `x = α`.
    ArcStretch {
        base: Box<BasePotential>,
        alpha: f64,
        beta: f64,
    },
}

impl BasePotential {
    pub fn cosine() -> Self {
        Self::Cosine { k: 1, a: 1.0 }
    }

    pub fn asym(a: f64, b: f64) -> Self {
        Self::Asym { a, b }
    }

    pub fn reflected(self) -> Self {
        Self::Reflected(Box::new(self))
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Cosine { k, a } => a * (TWO_PI * *k as f64 * x).cos(),
            Self::Sine { k, a } => a * (TWO_PI * *k as f64 * x).sin(),
            Self::Asym { a, b } => a * (TWO_PI * x).cos() + b * (2.0 * TWO_PI * x).sin(),
            Self::Fourier { cos, sin } => fourier_sum(cos, sin, x, false),
            Self::Sampled(s) => s.value(x),
            Self::Reflected(p) => p.value(1.0 - x),
            Self::Squeeze(sq) => sq.value(x),
            Self::ArcStretch { base, alpha, beta } => {
                let len = arc_length(*alpha, *beta);
                base.value(alpha + len * (x - alpha).rem_euclid(1.0))
            }
        }
    }

    /// `ψ_x(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Zero | Self::Constant(_) => 0.0,
            Self::Cosine { k, a } => {
                let w = TWO_PI * *k as f64;
                -a * w * (w * x).sin()
            }
            Self::Sine { k, a } => {
                let w = TWO_PI * *k as f64;
                a * w * (w * x).cos()
            }
            Self::Asym { a, b } => -a * TWO_PI * (TWO_PI * x).sin() + b * 2.0 * TWO_PI * (2.0 * TWO_PI * x).cos(),
            Self::Fourier { cos, sin } => fourier_sum(cos, sin, x, true),
            Self::Sampled(s) => s.derivative(x),
            Self::Reflected(p) => -p.derivative(1.0 - x),
            Self::Squeeze(sq) => sq.derivative(x),
            Self::ArcStretch { base, alpha, beta } => {
                let len = arc_length(*alpha, *beta);
                len * base.derivative(alpha + len * (x - alpha).rem_euclid(1.0))
            }
        }
    }

    /// True for the presets that are constant by construction.
    pub fn is_constant(&self) -> bool {
        match self {
            Self::Zero | Self::Constant(_) => true,
            Self::Cosine { a, .. } | Self::Sine { a, .. } => *a == 0.0,
            Self::Asym { a, b } => *a == 0.0 && *b == 0.0,
            Self::Fourier { cos, sin } => cos.iter().chain(sin).all(|c| *c == 0.0),
            Self::Sampled(s) => s.knots().windows(2).all(|w| w[0] == w[1]),
            Self::Reflected(p) => p.is_constant(),
            Self::Squeeze(sq) => sq.base.is_constant(),
            Self::ArcStretch { base, .. } => base.is_constant(),
        }
    }

    /// Points where the potential may fail to be smooth; quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::ArcStretch { alpha, .. } => vec![alpha.rem_euclid(1.0)],
            Self::Reflected(p) => p.breakpoints().into_iter().map(|b| (1.0 - b).rem_euclid(1.0)).collect(),
            _ => Vec::new(),
        }
    }

    /// Checks that `ψ` strictly increases along the arc from `alpha` to `beta`
    /// on `samples` points.
    pub fn increases_on_arc(&self, alpha: f64, beta: f64, samples: usize) -> bool {
        let len = arc_length(alpha, beta);
        (0..samples).all(|i| {
            let x0 = alpha + len * i as f64 / samples as f64;
            let x1 = alpha + len * (i + 1) as f64 / samples as f64;
            self.value(x1) > self.value(x0)
        })
    }
}

fn fourier_sum(cos: &[f64], sin: &[f64], x: f64, derivative: bool) -> f64 {
    let mut s = 0.0;
    for (k, c) in cos.iter().enumerate() {
        let w = TWO_PI * (k + 1) as f64;
        s += if derivative { -c * w * (w * x).sin() } else { c * (w * x).cos() };
    }
    for (k, c) in sin.iter().enumerate() {
        let w = TWO_PI * (k + 1) as f64;
        s += if derivative { c * w * (w * x).cos() } else { c * (w * x).sin() };
    }
    s
}

/// Length of the oriented arc from `alpha` to `beta`, in `(0, 1]`.
pub fn arc_length(alpha: f64, beta: f64) -> f64 {
    let l = (beta - alpha).rem_euclid(1.0);
    if l == 0.0 {
        1.0
    } else {
        l
    }
}

// C⁴ smoothstep on [0, 1] and its antiderivative.
fn smoothstep9(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(5) * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + t * 70.0))))
}

fn smoothstep9_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 0.5 + (t - 1.0);
    }
    t.powi(6) * (21.0 + t * (-60.0 + t * (67.5 + t * (-35.0 + t * 7.0))))
}

// Smoothed unit step from 0 at s = −1 to 1 at s = 1, and its integral from −1.
fn step(s: f64) -> f64 {
    smoothstep9(0.5 * (s + 1.0))
}

fn step_integral(s: f64) -> f64 {
    2.0 * smoothstep9_integral(0.5 * (s + 1.0))
}

/// Smooth monotone circle map that squeezes the complement of an arc into
/// a window of width `w = (1 − λ)(1 − L)`, where `L` is the arc length.
///
/// In the coordinate `u = (x − α) mod 1` the map is linear with slope
/// `L/(1 − w)` on `[0, 1 − w]`. Inside the window the slope rises by a C⁴
/// bump supported in `[1 − w, 1]`, scaled so that the map closes at `u = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Squeeze {
    pub base: BasePotential,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    window: f64,
    slope_arc: f64,
    bump: f64,
    delta: f64,
}

impl Squeeze {
    pub fn new(base: BasePotential, alpha: f64, beta: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(RatchetError::InvalidParameter(format!("squeeze lambda {lambda} not in [0, 1)")));
        }
        let len = arc_length(alpha, beta);
        if len >= 1.0 {
            return Err(RatchetError::InvalidParameter("squeeze arc must be a proper arc".into()));
        }
        let window = (1.0 - lambda) * (1.0 - len);
        let slope_arc = len / (1.0 - window);
        let delta = window / 8.0;
        Ok(Self { base, alpha, beta, lambda, window, slope_arc, bump: (1.0 - len - slope_arc * window) / (window - 2.0 * delta), delta })
    }

    fn is_identity(&self) -> bool {
        self.lambda == 0.0
    }

    fn window_weight(&self, u: f64) -> f64 {
        let (e, d) = (1.0 - self.window, self.delta);
        step((u - e - d) / d) - step((u - 1.0 + d) / d)
    }

    fn window_integral(&self, u: f64) -> f64 {
        let (e, d) = (1.0 - self.window, self.delta);
        d * (step_integral((u - e - d) / d) - step_integral((u - 1.0 + d) / d))
    }

    /// The map `u ↦ φ(u)` on `[0, 1]` with `φ(0) = 0`, `φ(1) = 1`.
    /// Squeeze onto the arc from the global minimum of `base` to its global
    /// maximum; `base` must increase strictly along that arc.
    pub fn auto(base: BasePotential, lambda: f64) -> Result<Self> {
        let m = 4096;
        let xs: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        let pick = |better: fn(f64, f64) -> bool| xs.iter().copied().fold(0.0, |best, x| if better(base.value(x), base.value(best)) { x } else { best });
        let alpha = pick(|a, b| a < b);
        let beta = pick(|a, b| a > b);
        if alpha == beta || !base.increases_on_arc(alpha, beta, m) {
            return Err(RatchetError::InvalidParameter(format!("{base} has no increasing arc from its minimum to its maximum")));
        }
        Self::new(base, alpha, beta, lambda)
    }

    pub fn map(&self, u: f64) -> f64 {
        if self.is_identity() {
            return u;
        }
        self.slope_arc * u + self.bump * self.window_integral(u)
    }

    pub fn map_derivative(&self, u: f64) -> f64 {
        if self.is_identity() {
            return 1.0;
        }
        self.slope_arc + self.bump * self.window_weight(u)
    }

    pub fn value(&self, x: f64) -> f64 {
        if self.is_identity() {
            return self.base.value(x);
        }
        let u = (x - self.alpha).rem_euclid(1.0);
        self.base.value(self.alpha + self.map(u))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if self.is_identity() {
            return self.base.derivative(x);
        }
        let u = (x - self.alpha).rem_euclid(1.0);
        self.base.derivative(self.alpha + self.map(u)) * self.map_derivative(u)
    }
}

fn parse_num(tok: Option<&str>, default: Option<f64>, what: &str) -> Result<f64> {
    match tok {
        Some(t) => t.parse::<f64>().map_err(|_| RatchetError::Parse(format!("bad number '{t}' for {what}"))),
        None => default.ok_or_else(|| RatchetError::Parse(format!("missing {what}"))),
    }
}

fn parse_tokens(tokens: &[&str]) -> Result<BasePotential> {
    let (head, rest) = tokens.split_first().ok_or_else(|| RatchetError::Parse("empty potential".into()))?;
    let mut it = rest.iter().copied();
    let pot = match *head {
        "zero" => BasePotential::Zero,
        "constant" => BasePotential::Constant(parse_num(it.next(), Some(1.0), "constant value")?),
        "cosine" | "sine" => {
            let k = parse_num(it.next(), Some(1.0), "wave number")?;
            if k < 1.0 || k.fract() != 0.0 {
                return Err(RatchetError::Parse(format!("wave number {k} must be a positive integer")));
            }
            let a = parse_num(it.next(), Some(1.0), "amplitude")?;
            if *head == "cosine" {
                BasePotential::Cosine { k: k as u32, a }
            } else {
                BasePotential::Sine { k: k as u32, a }
            }
        }
        "asym" => BasePotential::Asym { a: parse_num(it.next(), Some(1.0), "asym a")?, b: parse_num(it.next(), Some(0.3), "asym b")? },
        "fourier" => {
            let coeffs: Vec<f64> = it.by_ref().map(|t| parse_num(Some(t), None, "fourier coefficient")).collect::<Result<_>>()?;
            if coeffs.is_empty() || !coeffs.len().is_multiple_of(2) {
                return Err(RatchetError::Parse("fourier needs pairs 'a1 b1 a2 b2 ...'".into()));
            }
            BasePotential::Fourier { cos: coeffs.iter().step_by(2).copied().collect(), sin: coeffs.iter().skip(1).step_by(2).copied().collect() }
        }
        "sampled" => {
            let knots: Vec<f64> = it.by_ref().map(|t| parse_num(Some(t), None, "knot")).collect::<Result<_>>()?;
            BasePotential::Sampled(PeriodicSpline::new(knots)?)
        }
        "reflect" => return Ok(parse_tokens(rest)?.reflected()),
        "squeeze" => {
            let lambda = parse_num(rest.first().copied(), None, "squeeze lambda")?;
            if rest.get(1).is_some_and(|t| t.parse::<f64>().is_err()) {
                let base = parse_tokens(&rest[1..])?;
                return Ok(BasePotential::Squeeze(Box::new(Squeeze::auto(base, lambda)?)));
            }
            let alpha = parse_num(rest.get(1).copied(), None, "squeeze alpha")?;
            let beta = parse_num(rest.get(2).copied(), None, "squeeze beta")?;
            let base = parse_tokens(rest.get(3..).unwrap_or(&[]))?;
            return Ok(BasePotential::Squeeze(Box::new(Squeeze::new(base, alpha, beta, lambda)?)));
        }
        "arc" => {
            let alpha = parse_num(rest.first().copied(), None, "arc alpha")?;
            let beta = parse_num(rest.get(1).copied(), None, "arc beta")?;
            let base = parse_tokens(rest.get(2..).unwrap_or(&[]))?;
            return Ok(BasePotential::ArcStretch { base: Box::new(base), alpha, beta });
        }
        other => return Err(RatchetError::Parse(format!("unknown potential preset '{other}'"))),
    };
    if let Some(extra) = it.next() {
        return Err(RatchetError::Parse(format!("unexpected token '{extra}' after '{head}'")));
    }
    Ok(pot)
}

impl FromStr for BasePotential {
    type Err = RatchetError;

    /// Parses `zero`, `constant c`, `cosine k a`, `sine k a`, `asym a b`,
    /// `fourier a1 b1 ...`, `sampled v0 v1 ...`, `reflect <p>`,
    /// `squeeze λ α β <p>`, `squeeze λ <p>` (arc from the minimum to the
    /// maximum of `p`) and `arc α β <p>`.
    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        parse_tokens(&tokens)
    }
}

impl fmt::Display for BasePotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Constant(c) => write!(f, "constant {c}"),
            Self::Cosine { k, a } => write!(f, "cosine {k} {a}"),
            Self::Sine { k, a } => write!(f, "sine {k} {a}"),
            Self::Asym { a, b } => write!(f, "asym {a} {b}"),
            Self::Fourier { cos, sin } => {
                write!(f, "fourier")?;
                for (c, s) in cos.iter().zip(sin) {
                    write!(f, " {c} {s}")?;
                }
                Ok(())
            }
            Self::Sampled(s) => {
                write!(f, "sampled")?;
                for v in s.knots() {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            Self::Reflected(p) => write!(f, "reflect {p}"),
            Self::Squeeze(sq) => write!(f, "squeeze {} {} {} {}", sq.lambda, sq.alpha, sq.beta, sq.base),
            Self::ArcStretch { base, alpha, beta } => write!(f, "arc {alpha} {beta} {base}"),
        }
    }
}

/// A spatial force field `F(x) = offset − scale·ψ_x(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub potential: BasePotential,
    pub scale: f64,
    pub offset: f64,
}

impl ForceField {
    pub fn constant(c: f64) -> Self {
        Self { potential: BasePotential::Zero, scale: 0.0, offset: c }
    }

    /// Force of the tilted potential `ψ(x) + tilt·x`.
    pub fn tilted(potential: BasePotential, tilt: f64) -> Self {
        Self { potential, scale: 1.0, offset: -tilt }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            self.offset
        } else {
            self.offset - self.scale * self.potential.derivative(x)
        }
    }

    /// Exact `∫₀¹ F dx`: `ψ_x` integrates to zero for continuous periodic `ψ`.
    pub fn mean(&self) -> f64 {
        self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceSegment {
    pub duration: f64,
    pub field: ForceField,
}

/// Time-periodic force `F(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceProtocol {
    /// Piecewise constant in time, one field per segment.
    Piecewise(Vec<ForceSegment>),
    /// `Ψ(x, t) = ψ(x − ωt)`, period `1/|ω|`.
    Traveling { base: BasePotential, omega: f64 },
}

/// The spatial field active at one instant.
#[derive(Debug, Clone, Copy)]
pub enum SpatialForce<'a> {
    Field(&'a ForceField),
    Shifted { base: &'a BasePotential, shift: f64 },
}

impl SpatialForce<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Field(f) => f.eval(x),
            Self::Shifted { base, shift } => -base.derivative(x - shift),
        }
    }
}

impl ForceProtocol {
    pub fn stationary(field: ForceField) -> Self {
        Self::Piecewise(vec![ForceSegment { duration: 1.0, field }])
    }

    pub fn period(&self) -> f64 {
        match self {
            Self::Piecewise(segs) => segs.iter().map(|s| s.duration).sum(),
            Self::Traveling { omega, .. } => {
                if *omega == 0.0 {
                    1.0
                } else {
                    1.0 / omega.abs()
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Piecewise(segs) => {
                if segs.is_empty() {
                    return Err(RatchetError::InvalidParameter("protocol has no segments".into()));
                }
                if let Some(s) = segs.iter().find(|s| !(s.duration > 0.0) || !s.duration.is_finite()) {
                    return Err(RatchetError::InvalidParameter(format!("segment duration {} must be positive", s.duration)));
                }
                Ok(())
            }
            Self::Traveling { omega, .. } => {
                if omega.is_finite() {
                    Ok(())
                } else {
                    Err(RatchetError::InvalidParameter("traveling speed must be finite".into()))
                }
            }
        }
    }

    /// Segment start times within one period (always starting with 0).
    pub fn segment_starts(&self) -> Vec<f64> {
        match self {
            Self::Piecewise(segs) => {
                let mut t = 0.0;
                segs.iter()
                    .map(|s| {
                        let start = t;
                        t += s.duration;
                        start
                    })
                    .collect()
            }
            Self::Traveling { .. } => vec![0.0],
        }
    }

    /// Index of the segment active at phase `tau ∈ [0, T)`, right-continuous.
    fn segment_index(segs: &[ForceSegment], tau: f64) -> usize {
        let mut acc = 0.0;
        for (i, s) in segs.iter().enumerate() {
            acc += s.duration;
            if tau < acc {
                return i;
            }
        }
        segs.len() - 1
    }

    /// Spatial field at time `t`.
    pub fn field_at(&self, t: f64) -> SpatialForce<'_> {
        match self {
            Self::Piecewise(segs) => {
                let tau = t.rem_euclid(self.period());
                SpatialForce::Field(&segs[Self::segment_index(segs, tau)].field)
            }
            Self::Traveling { base, omega } => SpatialForce::Shifted { base, shift: omega * t },
        }
    }

    /// `F(x, t mod T)` with `x` taken mod 1.
    pub fn force_at(&self, x: f64, t: f64) -> f64 {
        self.field_at(t).eval(x.rem_euclid(1.0))
    }

    /// Base potential shared by every segment with unit scale, if any: the
    /// protocol is then a tilting ratchet `ψ(x) + H(t)x`.
    pub fn tilting_base(&self) -> Option<&BasePotential> {
        match self {
            Self::Piecewise(segs) => {
                let first = &segs.first()?.field.potential;
                segs.iter().all(|s| s.field.scale == 1.0 && &s.field.potential == first).then_some(first)
            }
            Self::Traveling { .. } => None,
        }
    }

    /// `(1/T)∫₀ᵀ∫₀¹ F dx dt` by per-segment quadrature.
    pub fn unbiasedness_defect(&self) -> Result<f64> {
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, ..QuadOptions::default() };
        match self {
            Self::Piecewise(segs) => {
                let mut total = 0.0;
                for s in segs {
                    let space = integrate(|x| s.field.eval(x), 0.0, 1.0, opts)?;
                    total += s.duration * space;
                }
                Ok(total / self.period())
            }
            Self::Traveling { .. } => {
                let period = self.period();
                let inner = |t: f64| integrate(|x| self.force_at(x, t), 0.0, 1.0, opts);
                let mut err = None;
                let v = integrate(
                    |t| {
                        inner(t).unwrap_or_else(|e| {
                            err = Some(e);
                            0.0
                        })
                    },
                    0.0,
                    period,
                    opts,
                )?;
                if let Some(e) = err {
                    return Err(e);
                }
                Ok(v / period)
            }
        }
    }
}

/// Tilting ratchet `Ψ(x, t) = ψ(x) + H(t)x` with piecewise constant `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSegment {
    pub duration: f64,
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltProtocol {
    pub base: BasePotential,
    pub segments: Vec<TiltSegment>,
}

impl TiltProtocol {
    pub fn new(base: BasePotential, segments: Vec<TiltSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(RatchetError::InvalidParameter("tilt protocol has no segments".into()));
        }
        if let Some(s) = segments.iter().find(|s| !(s.duration > 0.0)) {
            return Err(RatchetError::InvalidParameter(format!("segment duration {} must be positive", s.duration)));
        }
        Ok(Self { base, segments })
    }

    /// Square wave `H = ±ω` on the two halves of the period.
    pub fn square_wave(base: BasePotential, omega: f64, period: f64) -> Result<Self> {
        Self::new(base, vec![TiltSegment { duration: period / 2.0, tilt: omega }, TiltSegment { duration: period / 2.0, tilt: -omega }])
    }

    /// Two-segment protocol `[(τ, Ω), (T − τ, ω)]` with `Ωτ + ω(T − τ) = 0`.
    pub fn semiadiabatic(base: BasePotential, omega: f64, period: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < period) {
            return Err(RatchetError::InvalidParameter(format!("need 0 < tau < T, got tau={tau}, T={period}")));
        }
        let big = -omega * (period - tau) / tau;
        Self::new(base, vec![TiltSegment { duration: tau, tilt: big }, TiltSegment { duration: period - tau, tilt: omega }])
    }

    pub fn period(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `Σ tilt·duration`.
    pub fn tilt_impulse(&self) -> f64 {
        self.segments.iter().map(|s| s.tilt * s.duration).sum()
    }

    pub fn is_unbiased(&self) -> bool {
        self.tilt_impulse().abs() <= 1e-12 * self.period().max(1.0)
    }

    /// Segment `i` carries `F = −ψ_x − tiltᵢ`.
    pub fn to_force(&self) -> ForceProtocol {
        ForceProtocol::Piecewise(
            self.segments.iter().map(|s| ForceSegment { duration: s.duration, field: ForceField::tilted(self.base.clone(), s.tilt) }).collect(),
        )
    }
}

pub fn tilt_to_force(tp: &TiltProtocol) -> ForceProtocol {
    tp.to_force()
}

pub fn force_at(p: &ForceProtocol, x: f64, t: f64) -> f64 {
    p.force_at(x, t)
}

pub fn unbiasedness_defect(p: &ForceProtocol) -> Result<f64> {
    p.unbiasedness_defect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_examples() {
        let zero = ForceProtocol::stationary(ForceField::tilted(BasePotential::Zero, 0.0));
        assert_eq!(zero.force_at(0.3, 7.1), 0.0);

        let sq = TiltProtocol::square_wave(BasePotential::Zero, 1.5, 2.0).unwrap().to_force();
        assert_eq!(sq.force_at(0.4, 0.5), -1.5);
        assert_eq!(sq.force_at(0.4, 1.5), 1.5);
        // Right-continuous at the switch.
        assert_eq!(sq.force_at(0.4, 1.0), 1.5);

        let trav = ForceProtocol::Traveling { base: BasePotential::cosine(), omega: 1.0 };
        assert!(trav.force_at(0.25, 0.25).abs() < 1e-12);
        let expect = -BasePotential::cosine().derivative(0.1 - 0.3);
        assert!((trav.force_at(0.1, 0.3) - expect).abs() < 1e-14);
    }

    #[test]
    fn tilt_conversion_examples() {
        let single = TiltProtocol::new(BasePotential::Zero, vec![TiltSegment { duration: 3.0, tilt: 0.7 }]).unwrap();
        let f = single.to_force();
        assert_eq!(f.force_at(0.9, 1.0), -0.7);
        assert!(!single.is_unbiased());
        assert!((f.unbiasedness_defect().unwrap() + 0.7).abs() < 1e-14);

        let sq = TiltProtocol::square_wave(BasePotential::cosine(), 1.0, 10.0).unwrap();
        assert!(sq.is_unbiased());
        let forces: Vec<f64> = sq.segments.iter().map(|s| s.tilt).collect();
        assert_eq!(forces, vec![1.0, -1.0]);

        let semi = TiltProtocol::semiadiabatic(BasePotential::cosine(), 1.0, 40.0, 0.8).unwrap();
        assert!(semi.is_unbiased());
        assert!((semi.segments[0].tilt + 49.0).abs() < 1e-12);
    }

    #[test]
    fn unbiasedness_examples() {
        let p = TiltProtocol::square_wave(BasePotential::asym(1.0, 0.3), 2.0, 4.0).unwrap().to_force();
        assert!(p.unbiasedness_defect().unwrap().abs() < 1e-12);
        let trav = ForceProtocol::Traveling { base: BasePotential::cosine(), omega: 2.0 };
        assert!(trav.unbiasedness_defect().unwrap().abs() < 1e-12);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "zero",
            "cosine 1 1",
            "sine 2 0.5",
            "asym 1 0.3",
            "fourier 1 0 0 0.3",
            "reflect asym 1 0.3",
            "squeeze 0.9 0.75 0.25 sine 1 1",
            "arc 0.75 0.25 sine 1 1",
            "sampled 0 1 0.5 -0.2",
        ] {
            let p: BasePotential = s.parse().unwrap();
            let again: BasePotential = p.to_string().parse().unwrap();
            assert_eq!(p, again, "{s}");
        }
        assert!("cosine 1.5".parse::<BasePotential>().is_err());
        assert!("nonsense".parse::<BasePotential>().is_err());
        assert!("asym 1 2 3".parse::<BasePotential>().is_err());
        let p: BasePotential = "cosine".parse().unwrap();
        assert_eq!(p, BasePotential::cosine());
        let auto: BasePotential = "squeeze 0.9 sine 1 1".parse().unwrap();
        assert_eq!(auto, "squeeze 0.9 0.75 0.25 sine 1 1".parse().unwrap());
        assert!("squeeze 0.9 sine 2 1".parse::<BasePotential>().is_err());
    }

    #[test]
    fn asym_equals_fourier_form() {
        let a = BasePotential::asym(1.0, 0.3);
        let f: BasePotential = "fourier 1 0 0 0.3".parse().unwrap();
        for x in [0.0, 0.17, 0.5, 0.83] {
            assert!((a.value(x) - f.value(x)).abs() < 1e-14);
            assert!((a.derivative(x) - f.derivative(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn squeeze_is_identity_at_zero_and_a_circle_map() {
        let base = BasePotential::Sine { k: 1, a: 1.0 };
        let sq0 = Squeeze::new(base.clone(), 0.75, 0.25, 0.0).unwrap();
        for x in [0.0, 0.1, 0.33, 0.75, 0.99] {
            assert_eq!(sq0.value(x), base.value(x));
        }
        for lambda in [0.3, 0.9, 0.99] {
            let sq = Squeeze::new(base.clone(), 0.75, 0.25, lambda).unwrap();
            assert!(sq.map(0.0).abs() < 1e-14);
            assert!((sq.map(1.0) - 1.0).abs() < 1e-12, "{}", sq.map(1.0));
            let mut prev = 0.0;
            for i in 1..=2000 {
                let u = i as f64 / 2000.0;
                let v = sq.map(u);
                assert!(v > prev);
                prev = v;
                let fd = (sq.map(u.min(1.0 - 1e-7) + 1e-7) - sq.map(u.min(1.0 - 1e-7) - 1e-7)) / 2e-7;
                assert!((fd - sq.map_derivative(u.min(1.0 - 1e-7))).abs() < 1e-4 * fd.abs().max(1.0));
            }
            // Periodic smoothness of the induced potential across x = α.
            let p = BasePotential::Squeeze(Box::new(sq));
            assert!((p.value(0.75 - 1e-9) - p.value(0.75 + 1e-9)).abs() < 1e-6);
            assert!((p.derivative(0.75 - 1e-9) - p.derivative(0.75 + 1e-9)).abs() < 1e-5);
        }
    }

    #[test]
    fn squeeze_approaches_arc_stretch() {
        let base = BasePotential::Sine { k: 1, a: 1.0 };
        let arc = BasePotential::ArcStretch { base: Box::new(base.clone()), alpha: 0.75, beta: 0.25 };
        let sq = BasePotential::Squeeze(Box::new(Squeeze::new(base, 0.75, 0.25, 0.999).unwrap()));
        for x in [0.8, 0.0, 0.3, 0.6, 0.7] {
            assert!((sq.value(x) - arc.value(x)).abs() < 5e-3, "{x} {} {}", sq.value(x), arc.value(x));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn force_is_periodic(x in -3.0f64..3.0, t in 0.0f64..50.0, omega in 0.2f64..3.0) {
                let p = TiltProtocol::square_wave(BasePotential::asym(1.0, 0.3), omega, 2.5).unwrap().to_force();
                let base = p.force_at(x, t);
                prop_assert!((p.force_at(x + 1.0, t) - base).abs() < 1e-9);
                let tr = ForceProtocol::Traveling { base: BasePotential::asym(1.0, 0.3), omega };
                let period = tr.period();
                prop_assert!((tr.force_at(x, t + period) - tr.force_at(x, t)).abs() < 1e-8);
            }

            #[test]
            fn defect_is_mean_tilt(d1 in 0.1f64..3.0, d2 in 0.1f64..3.0, h1 in -2.0f64..2.0, h2 in -2.0f64..2.0) {
                let tp = TiltProtocol::new(BasePotential::asym(0.7, 0.2), vec![
                    TiltSegment { duration: d1, tilt: h1 },
                    TiltSegment { duration: d2, tilt: h2 },
                ]).unwrap();
                let defect = tp.to_force().unbiasedness_defect().unwrap();
                prop_assert!((defect + tp.tilt_impulse() / tp.period()).abs() < 1e-11);
            }
        }
    }
}
