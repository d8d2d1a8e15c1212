//! Experiment configuration: a TOML file, command-line flags on top, then
//! validation that lists every offending field.

use std::path::{Path, PathBuf};

use dimcons_core::sweep::EtaMode;
use serde::Deserialize;

/// Experiment kinds, one per subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Dim,
    Sweep,
    Energy,
    Counting,
    AlmostDc,
    Transversality,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Dim => "dim",
            Kind::Sweep => "sweep",
            Kind::Energy => "energy",
            Kind::Counting => "counting",
            Kind::AlmostDc => "almost-dc",
            Kind::Transversality => "transversality",
        }
    }
}

/// `η` selection as written in configs: `{ mode = "fixed", factor = 4 }`,
/// `{ mode = "absolute", value = 0.125 }` or
/// `{ mode = "asymptotic", epsilon = .., gamma = .., s = .. }`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EtaSpec {
    Fixed { factor: f64 },
    Absolute { value: f64 },
    Asymptotic { epsilon: f64, gamma: f64, s: f64 },
}

impl EtaSpec {
    pub fn mode(self) -> EtaMode {
        match self {
            EtaSpec::Fixed { factor } => EtaMode::Fixed(factor),
            EtaSpec::Absolute { value } => EtaMode::Absolute(value),
            EtaSpec::Asymptotic { epsilon, gamma, s } => EtaMode::Asymptotic { epsilon, gamma, s },
        }
    }

    /// Parses `fixed:4`, `absolute:0.125` or `asymptotic:ε,γ,s`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (mode, rest) = s.split_once(':').ok_or_else(|| format!("`{s}`: expected mode:value"))?;
        let nums: Result<Vec<f64>, _> = rest.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|_| format!("`{s}`: bad number"))?;
        match (mode, nums.as_slice()) {
            ("fixed", [f]) => Ok(EtaSpec::Fixed { factor: *f }),
            ("absolute", [v]) => Ok(EtaSpec::Absolute { value: *v }),
            ("asymptotic", [e, g, s]) => Ok(EtaSpec::Asymptotic { epsilon: *e, gamma: *g, s: *s }),
            _ => Err(format!("`{s}`: expected fixed:F, absolute:V or asymptotic:ε,γ,s")),
        }
    }
}

/// A ladder of scales: an explicit list or `"2^-4..2^-8"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LadderSpec {
    List(Vec<f64>),
    Text(String),
}

impl LadderSpec {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        match self {
            LadderSpec::List(v) => Ok(v.clone()),
            LadderSpec::Text(t) => parse_ladder(t),
        }
    }
}

fn power(t: &str) -> Result<(f64, i32), String> {
    let (base, exp) = t.trim().split_once('^').ok_or_else(|| format!("`{t}`: expected base^exponent"))?;
    let base: f64 = base.trim().parse().map_err(|_| format!("`{base}`: bad base"))?;
    let exp: i32 = exp.trim().parse().map_err(|_| format!("`{exp}`: bad exponent"))?;
    Ok((base, exp))
}

/// `b^-i..b^-j` (every integer exponent in between) or a comma list of
/// numbers and powers.
pub fn parse_ladder(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let ((b0, e0), (b1, e1)) = (power(a)?, power(b)?);
        if b0 != b1 || !(b0 > 1.0) {
            return Err(format!("`{s}`: both ends need the same base > 1"));
        }
        let step = if e1 >= e0 { 1 } else { -1 };
        let mut out = Vec::new();
        let mut e = e0;
        loop {
            out.push(b0.powi(e));
            if e == e1 {
                break;
            }
            e += step;
        }
        Ok(out)
    } else {
        s.split(',')
            .map(|t| match t.contains('^') {
                true => power(t).map(|(b, e)| b.powi(e)),
                false => t.trim().parse::<f64>().map_err(|_| format!("`{t}`: bad number")),
            })
            .collect()
    }
}

/// Every field an experiment may read. Unset optional fields take the
/// per-kind defaults documented on the subcommands.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: Option<Kind>,
    pub system: Option<String>,
    pub ladder: Option<LadderSpec>,
    pub net_separation: Option<f64>,
    pub s: Option<f64>,
    pub epsilon: Option<f64>,
    /// Fiber dimension `Δ` for almost-DC.
    pub fiber_dimension: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub eta: Option<EtaSpec>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub instances: Option<usize>,
    pub oversample: Option<f64>,
    pub jitter: Option<usize>,
    pub depth: Option<usize>,
    pub directions: Option<usize>,
    pub word_depth: Option<usize>,
    pub axis: Option<usize>,
    pub verify: Option<usize>,
    pub max_net_scale: Option<f64>,
    pub tolerance: Option<f64>,
    pub step: Option<f64>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, ValidationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ValidationError { fields: vec![format!("config: cannot read {}: {e}", path.display())] })?;
        toml::from_str(&text).map_err(|e| ValidationError { fields: vec![format!("config: {e}")] })
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            kind, system, ladder, net_separation, s, epsilon, fiber_dimension, delta_grid, eta, seed, output, n, k,
            instances, oversample, jitter, depth, directions, word_depth, axis, verify, max_net_scale, tolerance, step
        )
    }
}

/// Validation failure; exit status 2.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration:\n{}", .fields.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n"))]
pub struct ValidationError {
    pub fields: Vec<String>,
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub system: Option<String>,
    pub ladder: Vec<f64>,
    pub net_separation: Option<f64>,
    pub s: f64,
    pub epsilon: f64,
    pub fiber_dimension: Option<f64>,
    pub delta_grid: Vec<f64>,
    pub eta: EtaSpec,
    pub seed: u64,
    pub output: PathBuf,
    pub n: usize,
    pub k: usize,
    pub instances: usize,
    pub oversample: f64,
    pub jitter: usize,
    pub depth: usize,
    pub directions: usize,
    pub word_depth: usize,
    pub axis: usize,
    pub verify: usize,
    pub max_net_scale: f64,
    pub tolerance: f64,
    pub step: f64,
}

fn default_ladder(kind: Kind) -> &'static str {
    match kind {
        Kind::Sweep => "2^-5..2^-9",
        Kind::Energy => "2^-4..2^-8",
        Kind::Counting => "2^-3..2^-6",
        Kind::Dim | Kind::AlmostDc | Kind::Transversality => "",
    }
}

impl ExperimentConfig {
    /// Applies defaults for `kind` and checks every field.
    pub fn validate(file: ConfigFile, default_output: PathBuf) -> Result<Self, ValidationError> {
        let mut errs = Vec::new();
        let kind = file.kind.unwrap_or_else(|| {
            errs.push("kind: required".into());
            Kind::Dim
        });
        let seed = file.seed.unwrap_or_else(|| {
            errs.push("seed: required (experiments must be reproducible)".into());
            0
        });
        let needs_system = kind != Kind::Counting;
        if needs_system && file.system.is_none() {
            errs.push(format!("system: required for `{}`", kind.as_str()));
        }
        let ladder = match &file.ladder {
            Some(l) => l.values().unwrap_or_else(|e| {
                errs.push(format!("ladder: {e}"));
                Vec::new()
            }),
            None if default_ladder(kind).is_empty() => Vec::new(),
            None => parse_ladder(default_ladder(kind)).expect("default ladders parse"),
        };
        if matches!(kind, Kind::Sweep | Kind::Energy | Kind::Counting) {
            if ladder.len() < 2 {
                errs.push("ladder: needs at least two scales".into());
            }
            if ladder.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
                errs.push("ladder: scales must lie in (0, 1]".into());
            }
            if ladder.windows(2).any(|w| !(w[1] < w[0])) {
                errs.push("ladder: must be strictly decreasing".into());
            }
        }
        let positive = |name: &str, v: Option<f64>, errs: &mut Vec<String>| {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    errs.push(format!("{name}: must be positive, got {x}"));
                }
            }
        };
        positive("net_separation", file.net_separation, &mut errs);
        positive("epsilon", file.epsilon, &mut errs);
        positive("oversample", file.oversample, &mut errs);
        positive("max_net_scale", file.max_net_scale, &mut errs);
        positive("tolerance", file.tolerance, &mut errs);
        positive("step", file.step, &mut errs);
        if let Some(s) = file.s {
            if !(s >= 0.0) {
                errs.push(format!("s: must be ≥ 0, got {s}"));
            }
        }
        if let Some(d) = file.fiber_dimension {
            if !(d >= 0.0) {
                errs.push(format!("fiber_dimension: must be ≥ 0, got {d}"));
            }
        }
        if kind == Kind::Sweep && file.s.is_none() {
            errs.push("s: required for `sweep`".into());
        }
        if kind == Kind::AlmostDc && file.fiber_dimension.is_none() {
            errs.push("fiber_dimension: required for `almost-dc`".into());
        }
        if kind == Kind::Counting && (file.n.is_none() || file.k.is_none()) {
            errs.push("n, k: required for `counting`".into());
        }
        let (n, k) = (file.n.unwrap_or(2), file.k.unwrap_or(1));
        if !(1 <= k && k < n) && kind == Kind::Counting {
            errs.push(format!("k: need 1 ≤ k < n, got n={n}, k={k}"));
        }
        if file.k == Some(0) {
            errs.push("k: must be ≥ 1".into());
        }
        let eta = file.eta.unwrap_or(EtaSpec::Absolute { value: 0.125 });
        match eta {
            EtaSpec::Fixed { factor } if !(factor > 1.0) => errs.push(format!("eta: fixed factor must exceed 1, got {factor}")),
            EtaSpec::Absolute { value } if !(value > 0.0) => errs.push(format!("eta: value must be positive, got {value}")),
            EtaSpec::Asymptotic { epsilon, gamma, s } if !(epsilon > 0.0 && gamma - s - epsilon > 0.0) => {
                errs.push("eta: asymptotic formula needs ε > 0 and γ − s − ε > 0".into())
            }
            EtaSpec::Absolute { value } if kind == Kind::Energy && ladder.iter().any(|d| *d >= value) => {
                errs.push(format!("eta: absolute value {value} must exceed every ladder scale"))
            }
            _ => {}
        }
        for (name, v) in [("jitter", file.jitter), ("depth", file.depth), ("directions", file.directions), ("word_depth", file.word_depth), ("instances", file.instances)] {
            if v == Some(0) {
                errs.push(format!("{name}: must be ≥ 1"));
            }
        }
        let delta_grid = file.delta_grid.clone().unwrap_or_default();
        if delta_grid.iter().any(|d| !(*d >= 0.0)) {
            errs.push("delta_grid: entries must be ≥ 0".into());
        }
        if !errs.is_empty() {
            return Err(ValidationError { fields: errs });
        }
        Ok(ExperimentConfig {
            kind,
            system: file.system,
            ladder,
            net_separation: file.net_separation,
            s: file.s.unwrap_or(0.0),
            epsilon: file.epsilon.unwrap_or(0.05),
            fiber_dimension: file.fiber_dimension,
            delta_grid,
            eta,
            seed,
            output: file.output.unwrap_or(default_output),
            n,
            k,
            instances: file.instances.unwrap_or(200),
            oversample: file.oversample.unwrap_or(match kind {
                Kind::Counting => 0.25,
                _ => 4.0,
            }),
            jitter: file.jitter.unwrap_or(match kind {
                Kind::Dim => 8,
                _ => 4,
            }),
            depth: file.depth.unwrap_or(8),
            directions: file.directions.unwrap_or(360),
            word_depth: file.word_depth.unwrap_or(6),
            axis: file.axis.unwrap_or(0),
            verify: file.verify.unwrap_or(2),
            max_net_scale: file.max_net_scale.unwrap_or(5000.0),
            tolerance: file.tolerance.unwrap_or(0.1),
            step: file.step.unwrap_or(1e-4),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders_parse() {
        assert_eq!(parse_ladder("2^-1..2^-3").unwrap(), vec![0.5, 0.25, 0.125]);
        assert_eq!(parse_ladder("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        assert_eq!(parse_ladder("2^-1, 0.125").unwrap(), vec![0.5, 0.125]);
        assert!(parse_ladder("2^-1..3^-2").is_err());
        assert!(parse_ladder("x").is_err());
    }

    #[test]
    fn eta_parses() {
        assert_eq!(EtaSpec::parse("fixed:4").unwrap(), EtaSpec::Fixed { factor: 4.0 });
        assert_eq!(EtaSpec::parse("absolute:0.125").unwrap(), EtaSpec::Absolute { value: 0.125 });
        assert!(EtaSpec::parse("asymptotic:1,2").is_err());
    }

    #[test]
    fn missing_seed_and_bad_ladder_are_both_reported() {
        let file = ConfigFile {
            kind: Some(Kind::Sweep),
            system: Some("four-corner".into()),
            s: Some(0.5),
            ladder: Some(LadderSpec::List(vec![0.1, 0.2])),
            ..Default::default()
        };
        let err = ExperimentConfig::validate(file, "out".into()).unwrap_err();
        assert_eq!(err.fields.len(), 2, "{:?}", err.fields);
        assert!(err.fields.iter().any(|f| f.starts_with("seed")));
        assert!(err.fields.iter().any(|f| f.contains("strictly decreasing")));
    }

    #[test]
    fn overlay_prefers_flags() {
        let base = ConfigFile { seed: Some(1), s: Some(0.5), ..Default::default() };
        let over = ConfigFile { seed: Some(2), ..Default::default() };
        let merged = base.overlay(over);
        assert_eq!((merged.seed, merged.s), (Some(2), Some(0.5)));
    }

    #[test]
    fn config_files_parse() {
        let text = r#"
            kind = "energy"
            system = "four-corner"
            seed = 7
            ladder = "2^-4..2^-8"
            eta = { mode = "absolute", value = 0.125 }
        "#;
        let file: ConfigFile = toml::from_str(text).unwrap();
        let cfg = ExperimentConfig::validate(file, "out".into()).unwrap();
        assert_eq!(cfg.ladder.len(), 5);
        assert_eq!(cfg.eta, EtaSpec::Absolute { value: 0.125 });
        assert!(toml::from_str::<ConfigFile>("seed = 1\nbogus = 2").is_err());
    }
}
