//! `key = value` experiment settings shared by config files and flags.

use std::path::PathBuf;
use std::str::FromStr;

use scanforge::registration::{GradientFlowConfig, MultilevelConfig, SeriesSpec};
use scanforge::sim::{CostDistribution, CostModel};
use scanforge::{ScanKind, StrategyVariant};

use crate::CliError;

/// Every accepted key. Flags use the same names with a `--` prefix.
pub const KEYS: &[&str] = &[
    "kind",
    "variant",
    "n",
    "p",
    "k",
    "mode",
    "runner",
    "cost",
    "cost-c",
    "cost-lo",
    "cost-hi",
    "cost-mu",
    "cost-sigma",
    "cost-trace",
    "latency",
    "unit-us",
    "seed",
    "repetitions",
    "out",
    "theory-csv",
    "timeline",
    "gnuplot",
    "network",
    "frames",
    "level",
    "coarse-level",
    "alpha-scale",
    "t-scale",
    "snr",
    "lambda",
    "epsilon",
    "iter-max",
    "tau-max",
    "armijo-sigma",
    "manifest",
    "energy-line",
    "save-frames",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Runner {
    /// Discrete-event simulator.
    Sim,
    /// Real worker threads with a busy-waiting operator.
    Threads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Constant,
    Uniform,
    LogNormal,
    Trace,
}

/// Resolved experiment settings. List-valued fields left as `None` take
/// the command's own default.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kinds: Option<Vec<ScanKind>>,
    pub variants: Option<Vec<StrategyVariant>>,
    pub n: Option<Vec<usize>>,
    pub p: Option<Vec<usize>>,
    /// Elements per worker in weak scaling.
    pub k: usize,
    pub mode: ScalingMode,
    pub runner: Runner,
    pub cost: CostKind,
    pub cost_c: f64,
    pub cost_lo: f64,
    pub cost_hi: f64,
    pub cost_mu: f64,
    pub cost_sigma: f64,
    pub cost_trace: Option<PathBuf>,
    pub latency: f64,
    /// Wall time of one cost unit for the thread runner, microseconds.
    pub unit_us: f64,
    pub seed: u64,
    pub repetitions: usize,
    pub out: Option<PathBuf>,
    pub theory_csv: Option<PathBuf>,
    pub timeline: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub frames: usize,
    pub level: u32,
    pub coarse_level: u32,
    pub alpha_scale: f64,
    pub t_scale: f64,
    pub snr: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub iter_max: usize,
    pub tau_max: f64,
    pub armijo_sigma: f64,
    pub manifest: Option<PathBuf>,
    pub energy_line: usize,
    pub save_frames: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let series = SeriesSpec::default();
        let ml = MultilevelConfig::default();
        let gf = GradientFlowConfig::default();
        Self {
            kinds: None,
            variants: None,
            n: None,
            p: None,
            k: 64,
            mode: ScalingMode::Strong,
            runner: Runner::Sim,
            cost: CostKind::Constant,
            cost_c: 1.0,
            cost_lo: 0.5,
            cost_hi: 1.5,
            cost_mu: 0.0,
            cost_sigma: 0.5,
            cost_trace: None,
            latency: 0.0,
            unit_us: 20.0,
            seed: series.seed,
            repetitions: 5,
            out: None,
            theory_csv: None,
            timeline: None,
            gnuplot: None,
            network: None,
            frames: series.frames,
            level: ml.m1,
            coarse_level: ml.m0,
            alpha_scale: series.alpha_scale,
            t_scale: series.t_scale,
            snr: 1.0 / series.noise_ratio,
            lambda: gf.lambda,
            epsilon: gf.epsilon,
            iter_max: gf.iter_max,
            tau_max: gf.tau_max,
            armijo_sigma: gf.sigma,
            manifest: None,
            energy_line: 0,
            save_frames: false,
        }
    }
}

fn usage(key: &str, value: &str, what: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{key}={value}: {what}"))
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| usage(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| usage(key, value, e)))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(usage(key, value, "empty list"));
    }
    Ok(items)
}

/// Like [`list`], but also accepts `a..b` and `a..=b` for powers of two,
/// e.g. `1..=512`.
fn size_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    if let Some((lo, hi)) = value.split_once("..") {
        let (hi, inclusive) = match hi.strip_prefix('=') {
            Some(h) => (h, true),
            None => (hi, false),
        };
        let lo: usize = scalar(key, lo)?;
        let hi: usize = scalar(key, hi)?;
        if lo == 0 || !lo.is_power_of_two() {
            return Err(usage(key, value, "range start must be a power of two"));
        }
        let v: Vec<usize> = std::iter::successors(Some(lo), |x| x.checked_mul(2))
            .take_while(|&x| if inclusive { x <= hi } else { x < hi })
            .collect();
        if v.is_empty() {
            return Err(usage(key, value, "empty range"));
        }
        return Ok(v);
    }
    list(key, value)
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(usage(key, value, "expected a boolean")),
    }
}

impl ExperimentSpec {
    /// Sets one key. Unknown keys and unparsable values are usage errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "kind" => self.kinds = Some(list(key, value)?),
            "variant" => self.variants = Some(list(key, value)?),
            "n" => self.n = Some(size_list(key, value)?),
            "p" => self.p = Some(size_list(key, value)?),
            "k" => self.k = scalar(key, value)?,
            "mode" => {
                self.mode = match value.trim() {
                    "strong" => ScalingMode::Strong,
                    "weak" => ScalingMode::Weak,
                    _ => return Err(usage(key, value, "expected strong or weak")),
                }
            }
            "runner" => {
                self.runner = match value.trim() {
                    "sim" => Runner::Sim,
                    "threads" => Runner::Threads,
                    _ => return Err(usage(key, value, "expected sim or threads")),
                }
            }
            "cost" => {
                self.cost = match value.trim() {
                    "constant" => CostKind::Constant,
                    "uniform" => CostKind::Uniform,
                    "lognormal" => CostKind::LogNormal,
                    "trace" => CostKind::Trace,
                    _ => return Err(usage(key, value, "expected constant, uniform, lognormal or trace")),
                }
            }
            "cost-c" => self.cost_c = scalar(key, value)?,
            "cost-lo" => self.cost_lo = scalar(key, value)?,
            "cost-hi" => self.cost_hi = scalar(key, value)?,
            "cost-mu" => self.cost_mu = scalar(key, value)?,
            "cost-sigma" => self.cost_sigma = scalar(key, value)?,
            "cost-trace" => self.cost_trace = path(),
            "latency" => self.latency = scalar(key, value)?,
            "unit-us" => self.unit_us = scalar(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            "repetitions" => self.repetitions = scalar(key, value)?,
            "out" => self.out = path(),
            "theory-csv" => self.theory_csv = path(),
            "timeline" => self.timeline = path(),
            "gnuplot" => self.gnuplot = path(),
            "network" => self.network = path(),
            "frames" => self.frames = scalar(key, value)?,
            "level" => self.level = scalar(key, value)?,
            "coarse-level" => self.coarse_level = scalar(key, value)?,
            "alpha-scale" => self.alpha_scale = scalar(key, value)?,
            "t-scale" => self.t_scale = scalar(key, value)?,
            "snr" => self.snr = scalar(key, value)?,
            "lambda" => self.lambda = scalar(key, value)?,
            "epsilon" => self.epsilon = scalar(key, value)?,
            "iter-max" => self.iter_max = scalar(key, value)?,
            "tau-max" => self.tau_max = scalar(key, value)?,
            "armijo-sigma" => self.armijo_sigma = scalar(key, value)?,
            "manifest" => self.manifest = path(),
            "energy-line" => self.energy_line = scalar(key, value)?,
            "save-frames" => self.save_frames = flag(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Layers config text, then `SCANFORGE_SEED`, then flags over the
    /// defaults, and validates the result.
    pub fn resolve(config: Option<&str>, env_seed: Option<&str>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let mut spec = Self::default();
        if let Some(text) = config {
            for (key, value) in parse_config(text)? {
                spec.set(&key, &value)?;
            }
        }
        if let Some(seed) = env_seed {
            spec.set("seed", seed)?;
        }
        for (key, value) in flags {
            spec.set(key, value)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.repetitions == 0 {
            return bad("repetitions must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if let Some(n) = &self.n {
            if n.contains(&0) {
                return bad("n must be positive".into());
            }
        }
        if let Some(p) = &self.p {
            if p.contains(&0) {
                return bad("p must be positive".into());
            }
        }
        if !(self.unit_us >= 0.0 && self.unit_us.is_finite()) {
            return bad(format!("unit-us must be >= 0, got {}", self.unit_us));
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr must be > 0, got {}", self.snr));
        }
        if self.frames < 2 {
            return bad(format!("a series needs at least two frames, got {}", self.frames));
        }
        self.multilevel()
            .validate()
            .and_then(|_| self.gradient_flow().validate())
            .or_else(|e| bad(e.to_string()))?;
        if self.cost != CostKind::Trace {
            self.cost_model(Vec::new)
                .validate()
                .or_else(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    pub fn kinds_or(&self, default: &[ScanKind]) -> Vec<ScanKind> {
        self.kinds.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn variants_or(&self, default: &[StrategyVariant]) -> Vec<StrategyVariant> {
        self.variants.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn n_or(&self, default: &[usize]) -> Vec<usize> {
        self.n.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn p_or(&self, default: &[usize]) -> Vec<usize> {
        self.p.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Cost model; `trace` supplies samples for the trace distribution.
    pub fn cost_model(&self, trace: impl FnOnce() -> Vec<f64>) -> CostModel {
        let distribution = match self.cost {
            CostKind::Constant => CostDistribution::Constant(self.cost_c),
            CostKind::Uniform => CostDistribution::Uniform {
                lo: self.cost_lo,
                hi: self.cost_hi,
            },
            CostKind::LogNormal => CostDistribution::LogNormal {
                mu: self.cost_mu,
                sigma: self.cost_sigma,
            },
            CostKind::Trace => CostDistribution::Trace(trace()),
        };
        CostModel {
            distribution,
            latency: self.latency,
            seed: self.seed,
        }
    }

    pub fn multilevel(&self) -> MultilevelConfig {
        MultilevelConfig {
            m0: self.coarse_level,
            m1: self.level,
        }
    }

    pub fn gradient_flow(&self) -> GradientFlowConfig {
        GradientFlowConfig {
            epsilon: self.epsilon,
            iter_max: self.iter_max,
            tau_max: self.tau_max,
            sigma: self.armijo_sigma,
            lambda: self.lambda,
        }
    }

    pub fn series(&self) -> SeriesSpec {
        SeriesSpec {
            frames: self.frames,
            level: self.level,
            alpha_scale: self.alpha_scale,
            t_scale: self.t_scale,
            noise_ratio: 1.0 / self.snr,
            seed: self.seed,
        }
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected `key = value`", no + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", no + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn precedence() {
        let cfg = "seed = 3\nrepetitions = 2 # few\n";
        let s = ExperimentSpec::resolve(Some(cfg), None, &[]).unwrap();
        assert_eq!((s.seed, s.repetitions), (3, 2));
        let s = ExperimentSpec::resolve(Some(cfg), Some("7"), &[]).unwrap();
        assert_eq!(s.seed, 7);
        let s = ExperimentSpec::resolve(Some(cfg), Some("7"), &flags(&[("seed", "9")])).unwrap();
        assert_eq!(s.seed, 9);
    }

    #[test]
    fn unknown_and_bad_values() {
        assert!(matches!(parse_config("colour = red"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("just words"), Err(CliError::Usage(_))));
        let mut s = ExperimentSpec::default();
        assert!(s.set("nope", "1").is_err());
        assert!(s.set("kind", "bogus").is_err());
        assert!(s.set("p", "").is_err());
        assert!(ExperimentSpec::resolve(None, None, &flags(&[("repetitions", "0")])).is_err());
        assert!(ExperimentSpec::resolve(None, None, &flags(&[("armijo-sigma", "1.5")])).is_err());
        assert!(ExperimentSpec::resolve(None, None, &flags(&[("cost", "uniform"), ("cost-lo", "2")])).is_err());
    }

    #[test]
    fn every_key_is_settable() {
        for key in KEYS {
            let mut s = ExperimentSpec::default();
            if let Err(e) = s.set(key, "") {
                assert!(!e.to_string().contains("unknown key"), "{key}");
            }
        }
    }

    #[test]
    fn lists_and_ranges() {
        let mut s = ExperimentSpec::default();
        s.set("p", "1..=8").unwrap();
        assert_eq!(s.p, Some(vec![1, 2, 4, 8]));
        s.set("n", "2..16").unwrap();
        assert_eq!(s.n, Some(vec![2, 4, 8]));
        s.set("kind", "ks, sklansky").unwrap();
        assert_eq!(s.kinds, Some(vec![ScanKind::KoggeStone, ScanKind::Sklansky]));
        s.set("variant", "alternative").unwrap();
        assert_eq!(s.variants, Some(vec![StrategyVariant::Alternative]));
        assert!(s.set("p", "3..=8").is_err());
    }
}
