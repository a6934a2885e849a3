//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use num::BigRational;
use serde::Serialize;
use toml::{Spanned, Value};

use crate::error::{Error, Result};
use crate::geometry::{pi_map, SurfaceParams, TraceParams};
use crate::policy::NumericPolicy;
use crate::scalar::{parse_rational, rational_from_f64, rational_to_f64, rational_to_string};
use crate::symplectic::SamplerKind;
use crate::walk::StepDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Walk,
    Lyapunov,
    Symplectic,
    Orbit,
    InfinityVerify,
    Boundary,
    CatalogCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Walk => "walk",
            Experiment::Lyapunov => "lyapunov",
            Experiment::Symplectic => "symplectic",
            Experiment::Orbit => "orbit",
            Experiment::InfinityVerify => "infinity-verify",
            Experiment::Boundary => "boundary",
            Experiment::CatalogCheck => "catalog-check",
        }
    }

    fn default_n(self) -> usize {
        match self {
            Experiment::Walk | Experiment::Boundary => 1000,
            Experiment::Lyapunov | Experiment::Symplectic => 100_000,
            Experiment::Orbit => 10_000,
            Experiment::InfinityVerify | Experiment::CatalogCheck => 0,
        }
    }
}

/// A number given as an integer, a float or a rational string like `"1/3"`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactNumber {
    pub value: f64,
    pub exact: BigRational,
}

impl Serialize for ExactNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if rational_from_f64(self.value).as_ref() == Some(&self.exact) {
            self.value.serialize(s)
        } else {
            rational_to_string(&self.exact).serialize(s)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: [ExactNumber; 4],
    pub traces: Option<[f64; 4]>,
    /// Either `"params"` or `"traces"`.
    pub params_from: &'static str,
    pub start: Vec<ExactNumber>,
    /// Index into the ascending roots when `start` gives only `(x, y)`.
    pub root: usize,
    pub mu: StepDistribution,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub thin: usize,
    pub cadence: usize,
    pub sampler: SamplerKind,
    pub expected_area: Option<f64>,
    pub sum_tol: f64,
    pub exact: bool,
    pub tol: f64,
    pub expect_size: Option<usize>,
    pub max_len: usize,
    pub trials: usize,
    pub grid: [f64; 3],
    pub calibration_samples: usize,
    pub certify: bool,
    pub every: usize,
    pub subdivision_depth: u32,
    pub defect_max: f64,
    pub out: Option<PathBuf>,
    pub policy: NumericPolicy,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let policy = NumericPolicy::default();
        let one = ExactNumber { value: 1.0, exact: BigRational::from_integer(1.into()) };
        let zero = ExactNumber { value: 0.0, exact: BigRational::from_integer(0.into()) };
        ExperimentConfig {
            experiment,
            params: [one.clone(), one.clone(), one, zero],
            traces: None,
            params_from: "params",
            start: Vec::new(),
            root: 0,
            mu: StepDistribution::uniform(),
            n: experiment.default_n(),
            seeds: vec![0],
            thin: 1,
            cadence: policy.lyapunov_cadence,
            sampler: SamplerKind::default(),
            expected_area: None,
            sum_tol: 2e-3,
            exact: false,
            tol: policy.orbit_tol,
            expect_size: None,
            max_len: 12,
            trials: 1000,
            grid: [0.0, 5.0, 0.25],
            calibration_samples: policy.shadow_calibration_samples,
            certify: false,
            every: 10,
            subdivision_depth: 5,
            defect_max: 1e-6,
            out: None,
            policy,
        }
    }

    pub fn params(&self) -> SurfaceParams<f64> {
        let [a, b, c, d] = &self.params;
        SurfaceParams::new(a.value, b.value, c.value, d.value)
    }

    pub fn params_exact(&self) -> SurfaceParams<BigRational> {
        let [a, b, c, d] = &self.params;
        SurfaceParams::new(a.exact.clone(), b.exact.clone(), c.exact.clone(), d.exact.clone())
    }
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&self, key: &Spanned<String>, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("line {}: `{}`: {msg}", self.line(key.span().start), key.get_ref()))
    }
}

fn number(v: &Value) -> std::result::Result<ExactNumber, String> {
    match v {
        Value::Integer(i) => Ok(ExactNumber { value: *i as f64, exact: BigRational::from_integer((*i).into()) }),
        Value::Float(f) => {
            let exact = rational_from_f64(*f).ok_or_else(|| format!("{f} is not finite"))?;
            Ok(ExactNumber { value: *f, exact })
        }
        Value::String(s) => {
            let exact = parse_rational(s)?;
            Ok(ExactNumber { value: rational_to_f64(&exact), exact })
        }
        other => Err(format!("expected a number, found {}", other.type_str())),
    }
}

fn numbers(v: &Value, len: Option<usize>) -> std::result::Result<Vec<ExactNumber>, String> {
    let Value::Array(items) = v else { return Err(format!("expected an array, found {}", v.type_str())) };
    if let Some(len) = len {
        if items.len() != len {
            return Err(format!("expected {len} entries, found {}", items.len()));
        }
    }
    items.iter().map(number).collect()
}

fn float(v: &Value) -> std::result::Result<f64, String> {
    number(v).map(|n| n.value)
}

fn count(v: &Value) -> std::result::Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(format!("expected a non-negative integer, found {other}")),
    }
}

fn boolean(v: &Value) -> std::result::Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected true or false, found {v}"))
}

fn policy_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Integer(i) => serde_json::json!(i),
        Value::Float(f) => serde_json::json!(f),
        Value::Boolean(b) => serde_json::json!(b),
        other => serde_json::json!(other.to_string()),
    }
}

/// Parses a configuration for `experiment`. An `experiment` key, when present,
/// must agree with it. Policy fields may appear as top-level keys and take
/// precedence over `policy`.
pub fn parse_config(text: &str, experiment: Experiment, policy: NumericPolicy) -> Result<ExperimentConfig> {
    let table: BTreeMap<Spanned<String>, Spanned<Value>> =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let ctx = Ctx { text };
    let mut cfg = ExperimentConfig::defaults(experiment);
    cfg.policy = policy;
    cfg.tol = cfg.policy.orbit_tol;
    cfg.cadence = cfg.policy.lyapunov_cadence;
    cfg.calibration_samples = cfg.policy.shadow_calibration_samples;
    let policy_fields = NumericPolicy::field_names();
    let mut traces: Option<([f64; 4], [BigRational; 4])> = None;
    let mut explicit = std::collections::HashSet::new();

    let mut entries: Vec<_> = table.iter().collect();
    entries.sort_by_key(|(k, _)| k.span().start);
    for (key, value) in entries {
        let v = value.get_ref();
        let name = key.get_ref().as_str();
        let wrap = |r: std::result::Result<(), String>| r.map_err(|m| ctx.err(key, m));
        explicit.insert(name.to_string());
        match name {
            "experiment" => wrap(match v.as_str() {
                Some(s) if s == experiment.name() => Ok(()),
                Some(s) => Err(format!("config is for `{s}`, but `{}` was requested", experiment.name())),
                None => Err("expected a string".into()),
            })?,
            "params" => wrap(numbers(v, Some(4)).map(|p| cfg.params = p.try_into().expect("length checked")))?,
            "traces" => wrap(numbers(v, Some(4)).map(|t| {
                traces = Some((t.iter().map(|n| n.value).collect::<Vec<_>>().try_into().expect("length checked"), t.into_iter().map(|n| n.exact).collect::<Vec<_>>().try_into().expect("length checked")));
            }))?,
            "start" => wrap(numbers(v, None).and_then(|s| {
                if s.len() == 2 || s.len() == 3 {
                    cfg.start = s;
                    Ok(())
                } else {
                    Err(format!("expected [x, y] or [x, y, z], found {} entries", s.len()))
                }
            }))?,
            "root" => wrap(count(v).and_then(|r| if r < 2 { cfg.root = r; Ok(()) } else { Err("expected 0 or 1".into()) }))?,
            "mu" => wrap(numbers(v, Some(3)).and_then(|m| {
                for (n, w) in ["p_x", "p_y", "p_z"].iter().zip(&m) {
                    if !(w.value > 0.0) {
                        return Err(format!("weight {n} = {} must be positive", w.value));
                    }
                }
                let total: f64 = m.iter().map(|w| w.value).sum();
                cfg.mu = StepDistribution::new(m[0].value / total, m[1].value / total, m[2].value / total).map_err(|e| e.to_string())?;
                Ok(())
            }))?,
            "n" => wrap(count(v).map(|n| cfg.n = n))?,
            "seed" => wrap(count(v).map(|s| cfg.seeds = vec![s as u64]))?,
            "seeds" => wrap(match v {
                Value::Array(items) if !items.is_empty() => items.iter().map(|s| count(s).map(|s| s as u64)).collect::<std::result::Result<Vec<_>, _>>().map(|s| cfg.seeds = s),
                Value::Array(_) => Err("seed list must be nonempty".into()),
                // `seeds = 100` means seeds 0..100.
                other => count(other).and_then(|k| if k > 0 { cfg.seeds = (0..k as u64).collect(); Ok(()) } else { Err("seed count must be positive".into()) }),
            })?,
            "thin" => wrap(count(v).and_then(|t| if t > 0 { cfg.thin = t; Ok(()) } else { Err("must be positive".into()) }))?,
            "cadence" => wrap(count(v).and_then(|t| if t > 0 { cfg.cadence = t; Ok(()) } else { Err("must be positive".into()) }))?,
            "sampler" => wrap(match v.as_str() {
                Some("slice") => Ok(cfg.sampler = SamplerKind::Slice),
                Some("chart_rejection") => Ok(cfg.sampler = SamplerKind::ChartRejection),
                _ => Err("expected \"slice\" or \"chart_rejection\"".into()),
            })?,
            "expected_area" => wrap(float(v).map(|a| cfg.expected_area = Some(a)))?,
            "sum_tol" => wrap(float(v).map(|a| cfg.sum_tol = a))?,
            "exact" => wrap(boolean(v).map(|b| cfg.exact = b))?,
            "tol" => wrap(float(v).and_then(|t| if t > 0.0 { cfg.tol = t; Ok(()) } else { Err("must be positive".into()) }))?,
            "expect_size" => wrap(count(v).map(|s| cfg.expect_size = Some(s)))?,
            "max_len" => wrap(count(v).map(|m| cfg.max_len = m))?,
            "trials" => wrap(count(v).map(|t| cfg.trials = t))?,
            "grid" => wrap(numbers(v, Some(3)).map(|g| cfg.grid = [g[0].value, g[1].value, g[2].value]))?,
            "calibration_samples" => wrap(count(v).map(|s| cfg.calibration_samples = s))?,
            "certify" => wrap(boolean(v).map(|b| cfg.certify = b))?,
            "every" => wrap(count(v).and_then(|t| if t > 0 { cfg.every = t; Ok(()) } else { Err("must be positive".into()) }))?,
            "subdivision_depth" => wrap(count(v).and_then(|m| if m <= 20 { cfg.subdivision_depth = m as u32; Ok(()) } else { Err("at most 20".into()) }))?,
            "defect_max" => wrap(float(v).map(|d| cfg.defect_max = d))?,
            "out" => wrap(v.as_str().map(|s| cfg.out = Some(PathBuf::from(s))).ok_or_else(|| "expected a path string".to_string()))?,
            _ if policy_fields.iter().any(|f| f == name) => {
                cfg.policy.set_field(name, policy_value(v)).map_err(|e| ctx.err(key, e))?;
            }
            _ => return Err(ctx.err(key, "unknown key")),
        }
    }
    // Policy-derived defaults follow top-level overrides unless set directly.
    if !explicit.contains("tol") {
        cfg.tol = cfg.policy.orbit_tol;
    }
    if !explicit.contains("cadence") {
        cfg.cadence = cfg.policy.lyapunov_cadence;
    }
    if !explicit.contains("calibration_samples") {
        cfg.calibration_samples = cfg.policy.shadow_calibration_samples;
    }
    if let Some((t, exact)) = traces {
        let p = pi_map(&TraceParams::new(exact[0].clone(), exact[1].clone(), exact[2].clone(), exact[3].clone()));
        let pf = pi_map(&TraceParams::new(t[0], t[1], t[2], t[3]));
        cfg.params = [(pf.a, p.a), (pf.b, p.b), (pf.c, p.c), (pf.d, p.d)].map(|(value, exact)| ExactNumber { value, exact });
        cfg.traces = Some(t);
        cfg.params_from = "traces";
    }
    let needs_start = matches!(experiment, Experiment::Walk | Experiment::Lyapunov | Experiment::Orbit);
    if needs_start && cfg.start.is_empty() {
        return Err(Error::Config(format!("`start` is required for {}", experiment.name())));
    }
    if needs_start && cfg.n == 0 {
        return Err(Error::Config("`n` must be positive".into()));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config(text, Experiment::Walk, NumericPolicy::default())
    }

    #[test]
    fn minimal_walk_fills_defaults() {
        let c = parse("params = [1, 1, 1, 0]\nstart = [0, 0, 0]\nn = 1000\n").unwrap();
        assert_eq!(c.mu, StepDistribution::uniform());
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.thin, 1);
        assert_eq!(c.params_from, "params");
    }

    #[test]
    fn negative_weight_names_field() {
        let e = parse("start = [0, 0, 0]\nmu = [0.5, -0.2, 0.7]\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("mu") && e.contains("p_y"), "{e}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse("start = [0, 0, 0]\n\nstpes = 10\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("stpes"), "{e}");
    }

    #[test]
    fn traces_win() {
        let c = parse("params = [9, 9, 9, 9]\ntraces = [0, 0, 0, 0]\nstart = [0, 0, 0]\n").unwrap();
        assert_eq!(c.params_from, "traces");
        assert_eq!(c.params(), SurfaceParams::new(0.0, 0.0, 0.0, 4.0));
    }

    #[test]
    fn policy_overrides_and_rationals() {
        let c = parse("start = [\"1/3\", 0, 0]\nescape_radius = 1e6\norbit_tol = 1e-10\n").unwrap();
        assert_eq!(c.policy.escape_radius, 1e6);
        assert_eq!(c.tol, 1e-10);
        assert_eq!(rational_to_string(&c.start[0].exact), "1/3");
        assert!(parse("start = [0, 0, 0]\nescape_radius = \"big\"\n").is_err());
    }

    #[test]
    fn mismatched_experiment_and_syntax_errors() {
        assert!(parse("experiment = \"orbit\"\nstart = [0, 0, 0]\n").is_err());
        let e = parse("start = [0, 0, 0\n").unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
        assert!(parse("n = 5\n").is_err());
    }
}
