//! Run parameters: defaults, the TOML config file and per-key setters shared
//! by command-line flags and sweep axes.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use ratchet_core::closed_form::tilted_velocity;
use ratchet_core::potentials::{ForceSegment, TiltProtocol};
use ratchet_core::{BasePotential, ForceField, ForceProtocol, MultiStateSystem, RateField, SolverConfig};
use serde::Deserialize;
use toml::{Spanned, Value};

use crate::CliError;

/// 1-based line and column of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// A parsed force expression. `tilt h` without a potential takes the active one.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceSpec {
    Const(f64),
    Tilt { h: f64, potential: Option<BasePotential> },
    Cos { c: f64, s: f64 },
    Sin { c: f64, s: f64 },
    Field { offset: f64, scale: f64, potential: BasePotential },
}

impl ForceSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut toks = s.split_whitespace();
        let head = toks.next().ok_or("empty force expression")?;
        let mut num = |what: &str| -> Result<f64, String> {
            let t = toks.next().ok_or(format!("force '{head}' is missing {what}"))?;
            t.parse().map_err(|_| format!("force '{head}': {what} must be a number, got {t:?}"))
        };
        let spec = match head {
            "const" => Self::Const(num("the constant")?),
            "tilt" => {
                let h = num("the tilt")?;
                let rest: Vec<&str> = toks.collect();
                let potential = if rest.is_empty() { None } else { Some(parse_potential(&rest.join(" "))?) };
                return Ok(Self::Tilt { h, potential });
            }
            "cos" => Self::Cos { c: num("the offset")?, s: num("the amplitude")? },
            "sin" => Self::Sin { c: num("the offset")?, s: num("the amplitude")? },
            "field" => {
                let offset = num("the offset")?;
                let scale = num("the scale")?;
                let rest: Vec<&str> = toks.collect();
                return Ok(Self::Field { offset, scale, potential: parse_potential(&rest.join(" "))? });
            }
            other => return Err(format!("unknown force '{other}' (expected const, tilt, cos, sin or field)")),
        };
        if let Some(extra) = toks.next() {
            return Err(format!("unexpected token {extra:?} in force expression"));
        }
        Ok(spec)
    }

    pub fn build(&self, active: &BasePotential) -> ForceField {
        match self {
            Self::Const(c) => ForceField::constant(*c),
            Self::Tilt { h, potential } => ForceField::tilted(potential.clone().unwrap_or_else(|| active.clone()), *h),
            Self::Cos { c, s } => ForceField { potential: BasePotential::Sine { k: 1, a: s / TAU }, scale: -1.0, offset: *c },
            Self::Sin { c, s } => ForceField { potential: BasePotential::Cosine { k: 1, a: s / TAU }, scale: 1.0, offset: *c },
            Self::Field { offset, scale, potential } => ForceField { potential: potential.clone(), scale: *scale, offset: *offset },
        }
    }
}

fn parse_potential(s: &str) -> Result<BasePotential, String> {
    s.parse().map_err(|e: ratchet_core::RatchetError| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSpec {
    Tilt { duration: f64, tilt: f64 },
    Force { duration: f64, force: ForceSpec },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CustomProtocol {
    Segments(Vec<SegmentSpec>),
    Traveling { omega: f64 },
}

pub const PROTOCOLS: [&str; 4] = ["constant", "square", "semiadiabatic", "traveling"];

/// Two-state or N-state exchange model from the `[multistate]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSpec {
    pub forces: Vec<ForceSpec>,
    pub rates: Vec<Vec<RateField>>,
    pub sigma: Option<f64>,
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub potential: BasePotential,
    pub omega: f64,
    pub sigma: f64,
    pub grid_n: usize,
    pub dt: f64,
    pub tol: f64,
    pub period: f64,
    pub tau: Option<f64>,
    pub seed: u64,
    pub protocol: String,
    pub custom: Option<CustomProtocol>,
    pub periods: Vec<f64>,
    pub tau_fracs: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub arc: Option<(f64, f64)>,
    pub suite: String,
    pub cases: usize,
    pub initial_conditions: usize,
    pub multistate: Option<MultiSpec>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            potential: BasePotential::cosine(),
            omega: 1.0,
            sigma: 1.0,
            grid_n: 256,
            dt: 1e-3,
            tol: 1e-9,
            period: 10.0,
            tau: None,
            seed: 0,
            protocol: "constant".into(),
            custom: None,
            periods: vec![10.0, 20.0, 40.0],
            tau_fracs: vec![0.02],
            sigmas: vec![1.0, 0.3, 0.1, 0.03],
            lambdas: vec![0.0, 0.5, 0.9, 0.99],
            arc: None,
            suite: "sinineq".into(),
            cases: 50,
            initial_conditions: 64,
            multistate: None,
        }
    }
}

/// Parameter names accepted in `[params]`, by flags and as sweep axes.
pub const PARAM_NAMES: [&str; 19] = [
    "potential",
    "omega",
    "sigma",
    "grid_n",
    "dt",
    "tol",
    "period",
    "tau",
    "seed",
    "protocol",
    "periods",
    "tau_fracs",
    "sigmas",
    "lambdas",
    "arc",
    "suite",
    "cases",
    "initial_conditions",
    "workers",
];

fn as_f64(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => s.trim().parse().map_err(|_| format!("expected a number, got {s:?}")),
        other => Err(format!("expected a number, got {}", other.type_str())),
    }
}

fn as_count(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(format!("expected a nonnegative integer, got {other}")),
    }
}

fn as_list(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Array(items) => items.iter().map(as_f64).collect(),
        other => Ok(vec![as_f64(other)?]),
    }
}

fn as_str(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, got {}", v.type_str()))
}

impl Params {
    /// Sets one named parameter from a config or axis value.
    pub fn set(&mut self, name: &str, v: &Value) -> Result<(), String> {
        match name {
            "potential" => self.potential = parse_potential(as_str(v)?)?,
            "omega" => self.omega = as_f64(v)?,
            "sigma" => self.sigma = as_f64(v)?,
            "grid_n" => self.grid_n = as_count(v)?,
            "dt" => self.dt = as_f64(v)?,
            "tol" => self.tol = as_f64(v)?,
            "period" => self.period = as_f64(v)?,
            "tau" => self.tau = Some(as_f64(v)?),
            "seed" => self.seed = as_count(v)? as u64,
            "protocol" => self.set_protocol(as_str(v)?)?,
            "periods" => self.periods = as_list(v)?,
            "tau_fracs" => self.tau_fracs = as_list(v)?,
            "sigmas" => self.sigmas = as_list(v)?,
            "lambdas" => self.lambdas = as_list(v)?,
            "arc" => self.arc = Some(arc_pair(&as_list(v)?)?),
            "suite" => self.set_suite(as_str(v)?)?,
            "cases" => self.cases = as_count(v)?,
            "initial_conditions" => self.initial_conditions = as_count(v)?,
            "workers" => {
                as_count(v)?;
            }
            other => return Err(format!("unknown parameter '{other}' (known: {})", PARAM_NAMES.join(", "))),
        }
        Ok(())
    }

    pub fn set_protocol(&mut self, p: &str) -> Result<(), String> {
        if !PROTOCOLS.contains(&p) {
            return Err(format!("unknown protocol '{p}' (expected {})", PROTOCOLS.join(", ")));
        }
        self.protocol = p.to_string();
        self.custom = None;
        Ok(())
    }

    pub fn set_suite(&mut self, s: &str) -> Result<(), String> {
        s.parse::<ratchet_core::inequality::Suite>().map_err(|e| e.to_string())?;
        self.suite = s.to_string();
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { n: self.grid_n, dt: self.dt, tolerance: self.tol, ..SolverConfig::default() }
    }

    /// The time-periodic protocol of this run and, where one exists, its
    /// exact velocity.
    pub fn force_protocol(&self) -> Result<(ForceProtocol, Option<f64>), CliError> {
        let psi = &self.potential;
        let (w, s) = (self.omega, self.sigma);
        if let Some(custom) = &self.custom {
            return Ok(match custom {
                CustomProtocol::Traveling { omega } => {
                    (ForceProtocol::Traveling { base: psi.clone(), omega: *omega }, Some(omega + tilted_velocity(*omega, psi, s)?))
                }
                CustomProtocol::Segments(segs) => {
                    let mut tilts = Vec::new();
                    let fp = ForceProtocol::Piecewise(
                        segs.iter()
                            .map(|seg| match seg {
                                SegmentSpec::Tilt { duration, tilt } => {
                                    tilts.push(Some(*tilt));
                                    ForceSegment { duration: *duration, field: ForceField::tilted(psi.clone(), *tilt) }
                                }
                                SegmentSpec::Force { duration, force } => {
                                    tilts.push(None);
                                    ForceSegment { duration: *duration, field: force.build(psi) }
                                }
                            })
                            .collect(),
                    );
                    fp.validate()?;
                    let exact = match tilts.first() {
                        Some(Some(h)) if tilts.iter().all(|t| *t == Some(*h)) => Some(tilted_velocity(*h, psi, s)?),
                        _ => None,
                    };
                    (fp, exact)
                }
            });
        }
        Ok(match self.protocol.as_str() {
            "constant" => (
                TiltProtocol::new(psi.clone(), vec![ratchet_core::TiltSegment { duration: self.period, tilt: w }])?.to_force(),
                Some(tilted_velocity(w, psi, s)?),
            ),
            "square" => (TiltProtocol::square_wave(psi.clone(), w, self.period)?.to_force(), None),
            "semiadiabatic" => {
                let tau = self.tau.ok_or_else(|| CliError::config("the semiadiabatic protocol needs --tau".to_string()))?;
                (TiltProtocol::semiadiabatic(psi.clone(), w, self.period, tau)?.to_force(), None)
            }
            "traveling" => (ForceProtocol::Traveling { base: psi.clone(), omega: w }, Some(w + tilted_velocity(w, psi, s)?)),
            other => return Err(CliError::config(format!("unknown protocol '{other}'"))),
        })
    }

    pub fn multistate_system(&self) -> Result<MultiStateSystem, CliError> {
        let spec = self.multistate.as_ref().ok_or_else(|| CliError::config("the multistate command needs a [multistate] table in --config".to_string()))?;
        let forces = spec.forces.iter().map(|f| f.build(&self.potential)).collect();
        Ok(MultiStateSystem::new(forces, spec.rates.clone(), spec.sigma.unwrap_or(self.sigma))?)
    }
}

fn arc_pair(v: &[f64]) -> Result<(f64, f64), String> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("arc needs exactly two numbers, got {}", v.len())),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    duration: f64,
    tilt: Option<f64>,
    force: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraveling {
    omega: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    potential: Option<Spanned<String>>,
    sigma: Option<f64>,
    segments: Option<Vec<Spanned<RawSegment>>>,
    traveling: Option<RawTraveling>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMulti {
    forces: Vec<Spanned<String>>,
    nu12: Option<Spanned<Value>>,
    nu21: Option<Spanned<Value>>,
    rates: Option<Spanned<Vec<Vec<Value>>>>,
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAxis {
    pub name: Spanned<String>,
    pub values: Spanned<Vec<Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    command: Spanned<String>,
    #[serde(default)]
    axis: Vec<RawAxis>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    params: BTreeMap<Spanned<String>, Spanned<Value>>,
    protocol: Option<RawProtocol>,
    multistate: Option<RawMulti>,
    sweep: Option<RawSweep>,
}

/// One sweep axis after validation.
#[derive(Debug, Clone)]
pub struct Axis {
    pub name: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub command: String,
    pub axes: Vec<Axis>,
}

/// A loaded config: parameters from the file plus an optional sweep.
#[derive(Debug, Clone, Default)]
pub struct Config {
    pub params: Params,
    pub sweep: Option<SweepSpec>,
    /// `workers` from `[params]`.
    pub workers: Option<usize>,
}

fn rate_value(v: &Value) -> Result<RateField, String> {
    match v {
        Value::String(s) => s.parse().map_err(|e: ratchet_core::RatchetError| e.to_string()),
        other => Ok(RateField::constant(as_f64(other)?)),
    }
}

struct Located<'a> {
    src: &'a str,
    path: String,
}

impl Located<'_> {
    fn err(&self, span: std::ops::Range<usize>, msg: impl Into<String>) -> CliError {
        let (line, col) = line_col(self.src, span.start);
        CliError::Config { message: format!("{}:{line}:{col}: {}", self.path, msg.into()) }
    }
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    parse(&src, &path.display().to_string())
}

/// Parses config text; `origin` names the source in diagnostics.
pub fn parse(src: &str, origin: &str) -> Result<Config, CliError> {
    let at = Located { src, path: origin.to_string() };
    let raw: RawConfig = toml::from_str(src).map_err(|e| match e.span() {
        Some(span) => at.err(span, e.message().trim().to_string()),
        None => CliError::config(format!("{origin}: {}", e.message().trim())),
    })?;
    let mut params = Params::default();
    let mut workers = None;
    for (k, v) in &raw.params {
        if k.get_ref() == "workers" {
            workers = Some(as_count(v.get_ref()).map_err(|m| at.err(v.span(), m))?);
        }
        if !PARAM_NAMES.contains(&k.get_ref().as_str()) {
            return Err(at.err(k.span(), format!("unknown parameter '{}' (known: {})", k.get_ref(), PARAM_NAMES.join(", "))));
        }
        params.set(k.get_ref(), v.get_ref()).map_err(|m| at.err(v.span(), format!("{}: {m}", k.get_ref())))?;
    }
    if let Some(p) = raw.protocol {
        if let Some(pot) = &p.potential {
            params.potential = parse_potential(pot.get_ref()).map_err(|m| at.err(pot.span(), m))?;
        }
        if let Some(s) = p.sigma {
            params.sigma = s;
        }
        params.custom = Some(match (p.segments, p.traveling) {
            (Some(segs), None) => {
                if segs.is_empty() {
                    return Err(CliError::config(format!("{origin}: [protocol] segments is empty")));
                }
                let mut out = Vec::new();
                for seg in segs {
                    let span = seg.span();
                    let seg = seg.into_inner();
                    out.push(match (seg.tilt, seg.force) {
                        (Some(tilt), None) => SegmentSpec::Tilt { duration: seg.duration, tilt },
                        (None, Some(f)) => SegmentSpec::Force { duration: seg.duration, force: ForceSpec::parse(&f).map_err(|m| at.err(span.clone(), m))? },
                        _ => return Err(at.err(span, "a segment needs exactly one of 'tilt' or 'force'")),
                    });
                }
                CustomProtocol::Segments(out)
            }
            (None, Some(t)) => CustomProtocol::Traveling { omega: t.omega },
            _ => return Err(CliError::config(format!("{origin}: [protocol] needs exactly one of 'segments' or 'traveling'"))),
        });
    }
    if let Some(m) = raw.multistate {
        let forces = m.forces.iter().map(|f| ForceSpec::parse(f.get_ref()).map_err(|e| at.err(f.span(), e))).collect::<Result<Vec<_>, _>>()?;
        let n = forces.len();
        let rates = match (m.rates, m.nu12, m.nu21) {
            (Some(r), None, None) => {
                let span = r.span();
                let rows = r.into_inner();
                if rows.len() != n || rows.iter().any(|row| row.len() != n) {
                    return Err(at.err(span, format!("rates must be a {n}x{n} matrix")));
                }
                rows.iter().map(|row| row.iter().map(rate_value).collect::<Result<Vec<_>, _>>()).collect::<Result<Vec<_>, _>>().map_err(|e| at.err(span, e))?
            }
            (None, Some(a), Some(b)) => {
                if n != 2 {
                    return Err(at.err(a.span(), "nu12/nu21 describe two states; use 'rates' for more"));
                }
                let nu12 = rate_value(a.get_ref()).map_err(|e| at.err(a.span(), e))?;
                let nu21 = rate_value(b.get_ref()).map_err(|e| at.err(b.span(), e))?;
                vec![vec![RateField::constant(0.0), nu12], vec![nu21, RateField::constant(0.0)]]
            }
            _ => return Err(CliError::config(format!("{origin}: [multistate] needs either 'rates' or both 'nu12' and 'nu21'"))),
        };
        params.multistate = Some(MultiSpec { forces, rates, sigma: m.sigma });
    }
    let sweep = match raw.sweep {
        None => None,
        Some(s) => {
            let command = s.command.get_ref().clone();
            if command == "sweep" || !crate::commands::COMMANDS.contains(&command.as_str()) {
                return Err(at.err(s.command.span(), format!("'{command}' is not a sweepable command")));
            }
            let mut axes = Vec::new();
            for a in s.axis {
                let name = a.name.get_ref().clone();
                if !PARAM_NAMES.contains(&name.as_str()) || name == "workers" {
                    return Err(at.err(a.name.span(), format!("unknown sweep parameter '{name}'")));
                }
                if axes.iter().any(|x: &Axis| x.name == name) {
                    return Err(at.err(a.name.span(), format!("parameter '{name}' swept twice")));
                }
                if a.values.get_ref().is_empty() {
                    return Err(at.err(a.values.span(), format!("axis '{name}' has no values")));
                }
                let mut probe = params.clone();
                for v in a.values.get_ref() {
                    probe.set(&name, v).map_err(|m| at.err(a.values.span(), format!("{name}: {m}")))?;
                }
                axes.push(Axis { name, values: a.values.into_inner() });
            }
            Some(SweepSpec { command, axes })
        }
    };
    Ok(Config { params, sweep, workers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_params() {
        let c = parse("[params]\nomega = -2\npotential = \"asym 1 0.3\"\nperiods = [5, 10]\n", "t").unwrap();
        assert_eq!(c.params.omega, -2.0);
        assert_eq!(c.params.potential, BasePotential::asym(1.0, 0.3));
        assert_eq!(c.params.periods, vec![5.0, 10.0]);
        assert_eq!(c.params.sigma, 1.0);
    }

    #[test]
    fn diagnostics_carry_line_and_column() {
        let e = parse("[params]\nomega = 1\npotential = \"wiggle\"\n", "cfg.toml").unwrap_err();
        assert!(e.to_string().starts_with("cfg.toml:3:13:"), "{e}");
        let e = parse("[params]\nbogus = 1\n", "c").unwrap_err();
        assert!(e.to_string().starts_with("c:2:1:"), "{e}");
        let e = parse("[params]\nomega = \n", "c").unwrap_err();
        assert!(e.to_string().starts_with("c:2:"), "{e}");
    }

    #[test]
    fn custom_protocol_and_forces() {
        let src = "[protocol]\npotential = \"zero\"\nsegments = [{duration = 1, tilt = 2}, {duration = 1, tilt = 2}]\n";
        let c = parse(src, "t").unwrap();
        let (_, exact) = c.params.force_protocol().unwrap();
        assert!((exact.unwrap() + 2.0).abs() < 1e-12);
        let f = ForceSpec::parse("cos 1 0.5").unwrap().build(&BasePotential::Zero);
        assert!((f.eval(0.0) - 1.5).abs() < 1e-12);
        let f = ForceSpec::parse("sin 0 2").unwrap().build(&BasePotential::Zero);
        assert!((f.eval(0.25) - 2.0).abs() < 1e-12);
        assert!(ForceSpec::parse("tilt").is_err());
        let bad = parse("[protocol]\nsegments = [{duration = 1, tilt = 1, force = \"const 1\"}]\n", "t");
        assert!(bad.is_err());
    }

    #[test]
    fn multistate_table() {
        let c = parse("[multistate]\nforces = [\"const 1\", \"const 2\"]\nnu12 = 1\nnu21 = \"0.5\"\nsigma = 0.1\n", "t").unwrap();
        let sys = c.params.multistate_system().unwrap();
        assert_eq!(sys.states(), 2);
        assert_eq!(sys.sigma(), 0.1);
        assert_eq!(sys.rate(1, 0).eval(0.3), 0.5);
    }

    #[test]
    fn sweep_axes_are_validated() {
        let ok = parse("[sweep]\ncommand = \"coeffs\"\n[[sweep.axis]]\nname = \"omega\"\nvalues = [-1, 0, 1]\n", "t").unwrap();
        assert_eq!(ok.sweep.unwrap().axes[0].values.len(), 3);
        let e = parse("[sweep]\ncommand = \"coeffs\"\n[[sweep.axis]]\nname = \"potential\"\nvalues = [\"cosine\", \"nope\"]\n", "t").unwrap_err();
        assert!(e.to_string().starts_with("t:5:"), "{e}");
    }
}
