//! Flat `key = value` configuration with dotted keys. Command-line flags are
//! applied on top of the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use robgasp::{Kernel1D, MeanBasis, Parameterization, PriorKind};

use crate::error::{CliError, CliResult};

pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "design",
    "output",
    "predict",
    "prior.kind",
    "prior.a",
    "prior.b",
    "fit.parameterization",
    "fit.tol",
    "fit.max_iter",
    "fit.multistart",
    "model.kernel",
    "model.mean",
    "model.nugget",
    "screen.p0",
    "mcmc.s",
    "mcmc.s0",
    "calibrate.example",
    "calibrate.theta_bounds",
    "calibrate.runs_design",
    "calibrate.runs_output",
    "calibrate.nugget",
    "bench.case",
    "bench.replicates",
    "bench.paper_scale",
    "bench.n",
    "bench.n_star",
    "bench.method",
];

pub fn parse_config_text(text: &str, source: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(format!("{source}: line {}: expected key = value", k + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::config(format!("{source}: line {}: unknown key '{key}'", k + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text, &path.display().to_string())
}

/// `matern-2.5`, `matern-<ν>`, `gaussian`, `pow-exp-<α>`.
pub fn parse_kernel(s: &str) -> CliResult<Kernel1D> {
    let s = s.trim().to_ascii_lowercase();
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| CliError::config(format!("bad kernel parameter in '{s}'")))
    };
    let k = if s == "gaussian" {
        Kernel1D::gaussian()
    } else if let Some(v) = s.strip_prefix("matern-") {
        Kernel1D::matern(num(v)?)?
    } else if let Some(v) = s.strip_prefix("pow-exp-") {
        Kernel1D::power_exponential(num(v)?)?
    } else {
        return Err(CliError::config(format!("unknown kernel '{s}'")));
    };
    Ok(k)
}

/// `lo:hi,lo:hi,…`.
pub fn parse_bounds(s: &str) -> CliResult<Vec<(f64, f64)>> {
    s.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| CliError::config(format!("bound '{part}' is not lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| CliError::config(format!("bad bound '{part}'")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| CliError::config(format!("bad bound '{part}'")))?;
            if !(lo < hi) {
                return Err(CliError::config(format!("bound '{part}' needs lo < hi")));
            }
            Ok((lo, hi))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub design: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub predict: Option<PathBuf>,
    pub prior: PriorKind,
    pub prior_a: Option<f64>,
    pub prior_b: Option<f64>,
    pub parameterization: Parameterization,
    pub tol: f64,
    pub max_iter: usize,
    pub multistart: usize,
    pub kernel: Kernel1D,
    pub mean: MeanBasis,
    pub nugget: bool,
    pub p0: f64,
    pub s: usize,
    pub s0: usize,
    pub example: Option<String>,
    pub theta_bounds: Option<Vec<(f64, f64)>>,
    pub runs_design: Option<PathBuf>,
    pub runs_output: Option<PathBuf>,
    pub calibrate_nugget: bool,
    /// Benchmark case; `None` when not given.
    pub case: Option<String>,
    pub replicates: Option<usize>,
    pub paper_scale: bool,
    pub n: Option<usize>,
    pub n_star: Option<usize>,
    pub method: String,
    /// `prior.kind` was set explicitly.
    pub prior_given: bool,
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| CliError::config(format!("invalid value '{v}' for {key}")))
        })
        .transpose()
}

fn get_bool(map: &BTreeMap<String, String>, key: &str) -> CliResult<Option<bool>> {
    map.get(key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(CliError::config(format!("invalid boolean '{v}' for {key}"))),
        })
        .transpose()
}

impl RunConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        for key in map.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!("unknown key '{key}'")));
            }
        }
        let prior: PriorKind = get(map, "prior.kind")?.unwrap_or(PriorKind::Jr);
        let parameterization: Parameterization = get(map, "fit.parameterization")?.unwrap_or(Parameterization::Xi);
        if prior == PriorKind::Reference && parameterization == Parameterization::Beta {
            return Err(CliError::config(
                "the reference prior cannot be used with the beta parameterization (the mode sits at beta = 0)",
            ));
        }
        let cfg = Self {
            seed: get(map, "seed")?.unwrap_or(1),
            out: get(map, "out")?.unwrap_or_else(|| PathBuf::from("out")),
            design: get(map, "design")?,
            output: get(map, "output")?,
            predict: get(map, "predict")?,
            prior,
            prior_a: get(map, "prior.a")?,
            prior_b: get(map, "prior.b")?,
            parameterization,
            tol: get(map, "fit.tol")?.unwrap_or(1e-6),
            max_iter: get(map, "fit.max_iter")?.unwrap_or(200),
            multistart: get(map, "fit.multistart")?.unwrap_or(3),
            kernel: parse_kernel(map.get("model.kernel").map_or("matern-2.5", String::as_str))?,
            mean: get(map, "model.mean")?.unwrap_or(MeanBasis::Constant),
            nugget: get_bool(map, "model.nugget")?.unwrap_or(false),
            p0: get(map, "screen.p0")?.unwrap_or(1.0),
            s: get(map, "mcmc.s")?.unwrap_or(20_000),
            s0: get(map, "mcmc.s0")?.unwrap_or(4_000),
            example: get(map, "calibrate.example")?,
            theta_bounds: map.get("calibrate.theta_bounds").map(|s| parse_bounds(s)).transpose()?,
            runs_design: get(map, "calibrate.runs_design")?,
            runs_output: get(map, "calibrate.runs_output")?,
            calibrate_nugget: get_bool(map, "calibrate.nugget")?.unwrap_or(true),
            case: get(map, "bench.case")?,
            replicates: get(map, "bench.replicates")?,
            paper_scale: get_bool(map, "bench.paper_scale")?.unwrap_or(false),
            n: get(map, "bench.n")?,
            n_star: get(map, "bench.n_star")?,
            method: get(map, "bench.method")?.unwrap_or_else(|| "inverse-range".to_string()),
            prior_given: map.contains_key("prior.kind"),
        };
        if !(cfg.tol > 0.0) || cfg.multistart == 0 {
            return Err(CliError::config("fit.tol must be positive and fit.multistart at least 1"));
        }
        if !(cfg.p0 > 0.0) {
            return Err(CliError::config("screen.p0 must be positive"));
        }
        if cfg.s <= cfg.s0 {
            return Err(CliError::config(format!("mcmc.s ({}) must exceed mcmc.s0 ({})", cfg.s, cfg.s0)));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_map() {
        let c = RunConfig::from_map(&BTreeMap::new()).unwrap();
        assert_eq!(c.prior, PriorKind::Jr);
        assert_eq!(c.mean, MeanBasis::Constant);
        assert_eq!(c.kernel, Kernel1D::matern_5_2());
    }

    #[test]
    fn file_syntax() {
        let m = parse_config_text("# c\nprior.a = 0.3 # x\n\nfit.tol=1e-5\n", "f").unwrap();
        assert_eq!(m["prior.a"], "0.3");
        assert!(parse_config_text("nope = 1\n", "f").is_err());
        assert!(parse_config_text("seed\n", "f").unwrap_err().message.contains("line 1"));
    }

    #[test]
    fn reference_beta_rejected() {
        let mut m = BTreeMap::new();
        m.insert("prior.kind".to_string(), "reference".to_string());
        m.insert("fit.parameterization".to_string(), "beta".to_string());
        assert_eq!(RunConfig::from_map(&m).unwrap_err().exit_code(), 2);
    }
}
