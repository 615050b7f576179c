//! Flat `key = value` experiment configs.
//!
//! Keys are the `ModelParams` field names plus `kind`, `phi_t_list` and
//! `output_path`; sweeps use their own grid keys. Blank lines and `#`
//! comments are ignored. Real values accept multiples of `pi`
//! (`pi/2`, `0.5*pi`, `-pi`), lists are comma separated and `truncation` is
//! `epsilon` or `epsilon:max_bond`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use franson_core::detection::SweepSpec;
use franson_core::{ModelParams, TruncationPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Benchmark,
    Dynamics,
    G2,
    Visibility,
    Sweep,
    Oracle,
}

impl Kind {
    pub const ALL: [Kind; 6] = [Kind::Benchmark, Kind::Dynamics, Kind::G2, Kind::Visibility, Kind::Sweep, Kind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Benchmark => "benchmark",
            Kind::Dynamics => "dynamics",
            Kind::G2 => "g2",
            Kind::Visibility => "visibility",
            Kind::Sweep => "sweep",
            Kind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kind `{s}` (expected one of benchmark, dynamics, g2, visibility, sweep, oracle)"))
    }
}

const MODEL_KEYS: [&str; 11] = [
    "gamma_a",
    "gamma_b",
    "dt",
    "n_steps",
    "m",
    "phi_fb",
    "n_t",
    "phi_t",
    "feedback_enabled",
    "truncation",
    "photon_cutoff",
];
const MODEL_REQUIRED: [&str; 5] = ["gamma_a", "gamma_b", "dt", "n_steps", "n_t"];
const SWEEP_KEYS: [&str; 9] = [
    "gamma_a_t_list",
    "gamma_b_t_list",
    "fb_delay",
    "dt",
    "phi_fb",
    "residual_tol",
    "max_steps",
    "truncation",
    "photon_cutoff",
];
const SWEEP_REQUIRED: [&str; 2] = ["gamma_a_t_list", "gamma_b_t_list"];

/// Parsed but uninterpreted config: key -> (line, raw value).
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut entries = BTreeMap::new();
        let mut errs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errs.push(format!("line {line_no}: expected `key = value`"));
                continue;
            };
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
                errs.push(format!("line {line_no}: duplicate key `{key}`"));
            }
        }
        if errs.is_empty() {
            Ok(Self { entries })
        } else {
            Err(errs)
        }
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }
}

/// Command-line overrides applied after the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub feedback: bool,
    pub phi_fb: Option<f64>,
    pub truncation: Option<TruncationPolicy>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub params: ModelParams,
    pub phi_t_list: Vec<f64>,
    pub sweep: SweepSpec,
    pub output_path: PathBuf,
}

pub fn parse_real(s: &str) -> Result<f64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("`{s}` is not a number");
    let Some(idx) = t.find("pi") else {
        return t.parse::<f64>().map_err(|_| bad());
    };
    let (before, after) = (&t[..idx], &t[idx + 2..]);
    let coef = match before.trim_end_matches('*') {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let div = match after {
        "" => 1.0,
        d => d.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(coef * PI / div)
}

pub fn parse_truncation(s: &str) -> Result<TruncationPolicy, String> {
    let (eps, cap) = match s.split_once(':') {
        Some((e, c)) => (e, Some(c)),
        None => (s, None),
    };
    let epsilon = eps.trim().parse::<f64>().map_err(|_| format!("`{s}` is not `epsilon[:max_bond]`"))?;
    let max_bond = cap
        .map(|c| c.trim().parse::<usize>().map_err(|_| format!("`{s}` is not `epsilon[:max_bond]`")))
        .transpose()?;
    let policy = TruncationPolicy { epsilon, max_bond };
    policy.validate().map_err(|e| e.to_string())?;
    Ok(policy)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| parse_real(v.trim())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not true/false")),
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn format_phase_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

fn preset(kind: Kind) -> (ModelParams, Vec<f64>) {
    match kind {
        Kind::Benchmark | Kind::Oracle => (ModelParams::benchmark(), vec![0.0, FRAC_PI_4, FRAC_PI_2]),
        Kind::Dynamics => (ModelParams::dynamics(), Vec::new()),
        Kind::G2 | Kind::Visibility | Kind::Sweep => {
            (ModelParams { feedback_enabled: false, ..ModelParams::feedback_visibility() }, Vec::new())
        }
    }
}

/// Resolves the experiment from an optional positional kind, an optional
/// config and the command-line overrides. Every problem is reported, one
/// line per field.
pub fn resolve(kind_arg: Option<Kind>, config: Option<&RawConfig>, ov: &Overrides) -> Result<ExperimentSpec, Vec<String>> {
    let mut errs = Vec::new();
    let kind_cfg = config.and_then(|c| c.get("kind")).map(|(line, v)| (line, v.parse::<Kind>()));
    let kind = match (kind_arg, kind_cfg) {
        (Some(k), None) => Some(k),
        (None, Some((_, Ok(k)))) => Some(k),
        (Some(k), Some((_, Ok(c)))) if k == c => Some(k),
        (Some(k), Some((line, Ok(c)))) => {
            errs.push(format!("kind (line {line}): config says `{c}` but `{k}` was requested"));
            None
        }
        (_, Some((line, Err(e)))) => {
            errs.push(format!("kind (line {line}): {e}"));
            None
        }
        (None, None) => {
            errs.push("kind: missing (one of benchmark, dynamics, g2, visibility, sweep, oracle)".into());
            None
        }
    };
    let Some(kind) = kind else {
        return Err(errs);
    };

    let (mut params, mut phi_t_list) = preset(kind);
    let mut sweep = SweepSpec::default();
    let mut output_path = PathBuf::from(format!("{kind}.csv"));

    if let Some(cfg) = config {
        let (allowed, required): (&[&str], &[&str]) = if kind == Kind::Sweep {
            (&SWEEP_KEYS, &SWEEP_REQUIRED)
        } else {
            (&MODEL_KEYS, &MODEL_REQUIRED)
        };
        for key in required {
            if cfg.get(key).is_none() {
                errs.push(format!("{key}: missing (required for kind {kind})"));
            }
        }
        for (key, (line, value)) in &cfg.entries {
            let key = key.as_str();
            let at = |e: String| format!("{key} (line {line}): {e}");
            match key {
                "kind" => {}
                "output_path" => output_path = PathBuf::from(value),
                "phi_t_list" if kind == Kind::Benchmark => match parse_list(value) {
                    Ok(v) if !v.is_empty() => phi_t_list = v,
                    Ok(_) => errs.push(at("empty list".into())),
                    Err(e) => errs.push(at(e)),
                },
                "phi_t_list" => errs.push(at(format!("only used by kind benchmark, not {kind}"))),
                _ if !allowed.contains(&key) => errs.push(at(format!("unknown key for kind {kind}"))),
                _ if kind == Kind::Sweep => {
                    let r = match key {
                        "gamma_a_t_list" => parse_list(value).map(|v| sweep.gamma_a_t = v),
                        "gamma_b_t_list" => parse_list(value).map(|v| sweep.gamma_b_t = v),
                        "fb_delay" => parse_real(value).map(|v| sweep.fb_delay = v),
                        "dt" => parse_real(value).map(|v| sweep.dt = v),
                        "phi_fb" => parse_real(value).map(|v| sweep.phi_fb = v),
                        "residual_tol" => parse_real(value).map(|v| sweep.residual_tol = v),
                        "max_steps" => parse_usize(value).map(|v| sweep.max_steps = v),
                        "truncation" => parse_truncation(value).map(|v| sweep.truncation = v),
                        _ => parse_usize(value).map(|v| sweep.photon_cutoff = v),
                    };
                    if let Err(e) = r {
                        errs.push(at(e));
                    }
                }
                _ => {
                    let r = match key {
                        "gamma_a" => parse_real(value).map(|v| params.gamma_a = v),
                        "gamma_b" => parse_real(value).map(|v| params.gamma_b = v),
                        "dt" => parse_real(value).map(|v| params.dt = v),
                        "n_steps" => parse_usize(value).map(|v| params.n_steps = v),
                        "m" => parse_usize(value).map(|v| params.m = v),
                        "phi_fb" => parse_real(value).map(|v| params.phi_fb = v),
                        "n_t" => parse_usize(value).map(|v| params.n_t = v),
                        "phi_t" => parse_real(value).map(|v| params.phi_t = v),
                        "feedback_enabled" => parse_bool(value).map(|v| params.feedback_enabled = v),
                        "truncation" => parse_truncation(value).map(|v| params.truncation = v),
                        _ => parse_usize(value).map(|v| params.photon_cutoff = v),
                    };
                    if let Err(e) = r {
                        errs.push(at(e));
                    }
                }
            }
        }
        let fb_on = ov.feedback || params.feedback_enabled;
        if kind != Kind::Sweep && fb_on && cfg.get("m").is_none() {
            errs.push(format!("m: missing (required when feedback is enabled for kind {kind})"));
        }
    }

    if ov.feedback {
        params.feedback_enabled = true;
    }
    if let Some(phi) = ov.phi_fb {
        params.phi_fb = phi;
        sweep.phi_fb = phi;
    }
    if let Some(t) = ov.truncation {
        params.truncation = t;
        sweep.truncation = t;
    }
    if let Some(out) = &ov.output {
        output_path = out.clone();
    }
    if matches!(kind, Kind::Benchmark | Kind::Oracle) && params.feedback_enabled {
        errs.push(format!("feedback_enabled: kind {kind} compares against the no-feedback closed form"));
    }

    if errs.is_empty() {
        if kind == Kind::Sweep {
            if sweep.gamma_a_t.is_empty() || sweep.gamma_b_t.is_empty() {
                errs.push("sweep grid: both gamma lists need at least one value".into());
            }
            for &a in &sweep.gamma_a_t {
                for &b in &sweep.gamma_b_t {
                    for fb in [false, true] {
                        if let Err(e) = sweep.point(a, b, fb) {
                            errs.extend(diagnostics(e).into_iter().map(|d| format!("sweep point ({a}, {b}): {d}")));
                        }
                    }
                }
            }
            errs.sort();
        } else {
            match params.validate() {
                Ok(p) => params = p,
                Err(e) => errs.extend(diagnostics(e)),
            }
        }
    }
    if !errs.is_empty() {
        errs.dedup();
        return Err(errs);
    }
    Ok(ExperimentSpec { kind, params, phi_t_list, sweep, output_path })
}

fn diagnostics(e: franson_core::Error) -> Vec<String> {
    match e {
        franson_core::Error::InvalidParams(list) => list,
        other => vec![other.to_string()],
    }
}

/// The resolved spec in config syntax, for file headers.
pub fn render(spec: &ExperimentSpec) -> Vec<(String, String)> {
    let mut out = vec![("kind".to_string(), spec.kind.to_string())];
    let trunc = |t: &TruncationPolicy| match t.max_bond {
        Some(b) => format!("{}:{b}", t.epsilon),
        None => format!("{}", t.epsilon),
    };
    if spec.kind == Kind::Sweep {
        let s = &spec.sweep;
        out.extend([
            ("gamma_a_t_list".into(), format_phase_list(&s.gamma_a_t)),
            ("gamma_b_t_list".into(), format_phase_list(&s.gamma_b_t)),
            ("fb_delay".into(), s.fb_delay.to_string()),
            ("dt".into(), s.dt.to_string()),
            ("phi_fb".into(), s.phi_fb.to_string()),
            ("residual_tol".into(), s.residual_tol.to_string()),
            ("max_steps".into(), s.max_steps.to_string()),
            ("truncation".into(), trunc(&s.truncation)),
            ("photon_cutoff".into(), s.photon_cutoff.to_string()),
        ]);
    } else {
        let p = &spec.params;
        out.extend([
            ("gamma_a".into(), p.gamma_a.to_string()),
            ("gamma_b".into(), p.gamma_b.to_string()),
            ("dt".into(), p.dt.to_string()),
            ("n_steps".into(), p.n_steps.to_string()),
            ("m".into(), p.m.to_string()),
            ("phi_fb".into(), p.phi_fb.to_string()),
            ("n_t".into(), p.n_t.to_string()),
            ("phi_t".into(), p.phi_t.to_string()),
            ("feedback_enabled".into(), p.feedback_enabled.to_string()),
            ("truncation".into(), trunc(&p.truncation)),
            ("photon_cutoff".into(), p.photon_cutoff.to_string()),
        ]);
        if spec.kind == Kind::Benchmark {
            out.push(("phi_t_list".into(), format_phase_list(&spec.phi_t_list)));
        }
    }
    out.push(("output_path".into(), spec.output_path.display().to_string()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_accept_multiples_of_pi() {
        assert_eq!(parse_real("0.25").unwrap(), 0.25);
        assert!((parse_real("pi/2").unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((parse_real("0.5*pi").unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((parse_real("-pi").unwrap() + PI).abs() < 1e-15);
        assert!((parse_real("2pi/4").unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(parse_real("p").is_err());
        assert!(parse_real("pi/x").is_err());
    }

    #[test]
    fn truncation_syntax() {
        assert_eq!(parse_truncation("1e-8").unwrap(), TruncationPolicy { epsilon: 1e-8, max_bond: None });
        assert_eq!(parse_truncation("0:16").unwrap(), TruncationPolicy { epsilon: 0.0, max_bond: Some(16) });
        assert!(parse_truncation("-1").is_err());
        assert!(parse_truncation("1e-8:x").is_err());
    }

    #[test]
    fn empty_config_lists_every_missing_field() {
        let cfg = RawConfig::parse("").unwrap();
        let errs = resolve(Some(Kind::G2), Some(&cfg), &Overrides::default()).unwrap_err();
        for key in MODEL_REQUIRED {
            assert!(errs.iter().any(|e| e.starts_with(key)), "{key} missing from {errs:?}");
        }
        let errs = resolve(None, Some(&cfg), &Overrides::default()).unwrap_err();
        assert!(errs[0].starts_with("kind"));
    }

    #[test]
    fn config_round_trips_through_its_header() {
        let text = "kind = benchmark\ngamma_a = 1\ngamma_b = 4\ndt = 0.05\nn_steps = 20\nn_t = 5\nphi_t_list = 0, pi/2\n";
        let spec = resolve(None, Some(&RawConfig::parse(text).unwrap()), &Overrides::default()).unwrap();
        assert_eq!(spec.phi_t_list, vec![0.0, FRAC_PI_2]);
        let header: String = render(&spec).iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let again = resolve(None, Some(&RawConfig::parse(&header).unwrap()), &Overrides::default()).unwrap();
        assert_eq!(render(&again), render(&spec));
    }

    #[test]
    fn bad_values_are_reported_per_field() {
        let text = "kind = g2\ngamma_a = -1\ngamma_b = x\ndt = 0.2\nn_steps = 10\nn_t = 2\nbogus = 3\n";
        let errs = resolve(None, Some(&RawConfig::parse(text).unwrap()), &Overrides::default()).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("gamma_b (line 3)")));
        assert!(errs.iter().any(|e| e.starts_with("bogus (line 7)")));
        assert!(RawConfig::parse("a = 1\na = 2").is_err());
        assert!(RawConfig::parse("no equals sign").is_err());
    }
}
