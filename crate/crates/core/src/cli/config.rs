//! Run configuration: UTF-8 `key = value` lines, `#` starts a comment.
//! Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::model::{CovarianceKind, Family};
use crate::optimizer::{BlockPolicy, OptimizerPolicy, Schedule, SvdMode, UpdateRule};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    /// IDX unsigned-byte image tensors.
    Idx {
        train: PathBuf,
        test: Option<PathBuf>,
    },
    /// RBMMAT1 matrices.
    Matrix {
        train: PathBuf,
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinarizeMode {
    None,
    Threshold(f64),
    /// Bernoulli draws from a stream derived from the run seed.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdMode {
    Cd,
    Pcd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub n_hidden: usize,
    pub covariance: CovarianceKind,
    pub data: DataSource,
    pub binarize: BinarizeMode,
    pub batch_size: usize,
    pub cd_k: usize,
    pub cd_mode: CdMode,
    pub policy: OptimizerPolicy,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
    pub init_checkpoint: Option<PathBuf>,
    pub iterations: u64,
    pub eval_interval: u64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Bit-exact output: wall-clock times go to a sidecar file instead of
    /// the metrics CSV.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: Family::Bernoulli,
            n_hidden: 25,
            covariance: CovarianceKind::Identity,
            data: DataSource::Synthetic(SyntheticConfig::default()),
            binarize: BinarizeMode::None,
            batch_size: 100,
            cd_k: 1,
            cd_mode: CdMode::Cd,
            policy: OptimizerPolicy { momentum: 0.9, ..OptimizerPolicy::uniform(UpdateRule::Sgd, 0.05) },
            init_scale: 0.01,
            init_checkpoint: None,
            iterations: 1000,
            eval_interval: 100,
            seed: 0,
            output_dir: None,
            deterministic: false,
        }
    }
}

const KEYS: &[&str] = &[
    "family",
    "n_hidden",
    "covariance",
    "data",
    "train_path",
    "test_path",
    "synthetic_seed",
    "synthetic_n_visible",
    "synthetic_n_hidden",
    "synthetic_n_train",
    "synthetic_n_test",
    "synthetic_burn_in",
    "binarize",
    "binarize_threshold",
    "batch_size",
    "cd_k",
    "cd_mode",
    "rule",
    "rule_w",
    "rule_b",
    "rule_a",
    "rule_cov",
    "step",
    "step_w",
    "step_b",
    "step_a",
    "step_cov",
    "schedule",
    "schedule_gamma",
    "schedule_period",
    "momentum",
    "weight_norm_cap",
    "svd_mode",
    "svd_rank",
    "svd_oversample",
    "init_scale",
    "init_checkpoint",
    "iterations",
    "eval_interval",
    "seed",
    "output_dir",
    "deterministic",
];

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: invalid value `{raw}` for `{key}`"))),
        }
    }

    fn or<T: FromStr>(&self, key: &'static str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }
}

// Enum-valued keys go through the crate's own parsers, whose errors carry
// their own messages.
fn parsed<T: FromStr<Err = Error>>(e: &Entries, key: &str, default: T) -> Result<T> {
    e.raw(key).map_or(Ok(default), str::parse)
}

impl RunConfig {
    /// Parses configuration text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<RunConfig> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
            let k = k.trim();
            let key = KEYS
                .iter()
                .find(|known| **known == k)
                .ok_or_else(|| Error::Config(format!("line {line_no}: unknown key `{k}`")))?;
            if map.insert(*key, (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {line_no}: duplicate key `{k}`")));
            }
        }
        let e = Entries { map };
        let d = RunConfig::default();
        let path = |key: &'static str| -> Option<PathBuf> {
            e.raw(key).map(|p| match base {
                Some(dir) if Path::new(p).is_relative() => dir.join(p),
                _ => PathBuf::from(p),
            })
        };

        let seed = e.or("seed", d.seed)?;
        let data = match e.raw("data").unwrap_or("synthetic") {
            "synthetic" => {
                let s = SyntheticConfig::default();
                DataSource::Synthetic(SyntheticConfig {
                    seed: e.or("synthetic_seed", seed)?,
                    n_visible: e.or("synthetic_n_visible", s.n_visible)?,
                    n_hidden: e.or("synthetic_n_hidden", s.n_hidden)?,
                    n_train: e.or("synthetic_n_train", s.n_train)?,
                    n_test: e.or("synthetic_n_test", s.n_test)?,
                    burn_in: e.or("synthetic_burn_in", s.burn_in)?,
                })
            }
            kind @ ("idx" | "matrix") => {
                let train =
                    path("train_path").ok_or_else(|| Error::Config(format!("data = {kind} needs train_path")))?;
                let test = path("test_path");
                if kind == "idx" {
                    DataSource::Idx { train, test }
                } else {
                    DataSource::Matrix { train, test }
                }
            }
            other => return Err(Error::Config(format!("unknown data source `{other}`"))),
        };
        let binarize = match e.raw("binarize").unwrap_or("none") {
            "none" => BinarizeMode::None,
            "threshold" => BinarizeMode::Threshold(e.or("binarize_threshold", 0.5)?),
            "stochastic" => BinarizeMode::Stochastic,
            other => return Err(Error::Config(format!("unknown binarization `{other}`"))),
        };
        let cd_mode = match e.raw("cd_mode").unwrap_or("cd") {
            "cd" => CdMode::Cd,
            "pcd" => CdMode::Pcd,
            other => return Err(Error::Config(format!("unknown cd_mode `{other}`"))),
        };

        let rule: UpdateRule = parsed(&e, "rule", d.policy.w.rule)?;
        let step: f64 = e.or("step", d.policy.w.step)?;
        let block = |r: &str, s: &'static str| -> Result<BlockPolicy> {
            Ok(BlockPolicy::new(parsed(&e, r, rule)?, e.or(s, step)?))
        };
        let schedule = match e.raw("schedule").unwrap_or("fixed") {
            "fixed" => Schedule::Fixed,
            "exponential" => {
                Schedule::Exponential { gamma: e.or("schedule_gamma", 0.5)?, period: e.or("schedule_period", 1000)? }
            }
            other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
        };
        let svd_mode = match e.raw("svd_mode").unwrap_or("exact") {
            "exact" => SvdMode::Exact,
            "randomized" => {
                SvdMode::Randomized { target_rank: e.or("svd_rank", 10)?, oversample: e.or("svd_oversample", 5)? }
            }
            other => return Err(Error::Config(format!("unknown svd_mode `{other}`"))),
        };
        let weight_norm_cap = match e.raw("weight_norm_cap") {
            None | Some("none") => None,
            Some(_) => e.get("weight_norm_cap")?,
        };
        let policy = OptimizerPolicy {
            w: block("rule_w", "step_w")?,
            b: block("rule_b", "step_b")?,
            a: block("rule_a", "step_a")?,
            cov: block("rule_cov", "step_cov")?,
            schedule,
            svd_mode,
            weight_norm_cap,
            momentum: e.or("momentum", d.policy.momentum)?,
        };

        let cfg = RunConfig {
            family: parsed(&e, "family", d.family)?,
            n_hidden: e.or("n_hidden", d.n_hidden)?,
            covariance: parsed(&e, "covariance", d.covariance)?,
            data,
            binarize,
            batch_size: e.or("batch_size", d.batch_size)?,
            cd_k: e.or("cd_k", d.cd_k)?,
            cd_mode,
            policy,
            init_scale: e.or("init_scale", d.init_scale)?,
            init_checkpoint: path("init_checkpoint"),
            iterations: e.or("iterations", d.iterations)?,
            eval_interval: e.or("eval_interval", d.eval_interval)?,
            seed,
            output_dir: path("output_dir"),
            deterministic: e.or("deterministic", d.deterministic)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_hidden", self.n_hidden as u64),
            ("batch_size", self.batch_size as u64),
            ("cd_k", self.cd_k as u64),
            ("eval_interval", self.eval_interval),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be finite and >= 0".into()));
        }
        if self.family == Family::Bernoulli && self.covariance != CovarianceKind::Identity {
            return Err(Error::Config("Bernoulli models take no covariance".into()));
        }
        if let BinarizeMode::Threshold(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config("binarize_threshold must lie in [0, 1]".into()));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.n_visible == 0 || s.n_hidden == 0 || s.n_train == 0 || s.n_test == 0 {
                return Err(Error::Config("synthetic sizes must be >= 1".into()));
            }
        }
        self.policy.validate()
    }

    /// Short optimizer label: the rule name when every block shares it,
    /// otherwise `W`'s rule and the others' (e.g. `ssd_W/sgd`).
    pub fn optimizer_label(&self) -> String {
        let p = &self.policy;
        let rest = [p.b.rule, p.a.rule, p.cov.rule];
        if rest.iter().all(|r| *r == p.w.rule) {
            p.w.rule.name().to_string()
        } else if rest.iter().all(|r| *r == p.b.rule) {
            format!("{}_W/{}", p.w.rule, p.b.rule)
        } else {
            format!("{}_W/{}_b/{}_a/{}_cov", p.w.rule, p.b.rule, p.a.rule, p.cov.rule)
        }
    }

    /// Renders the configuration in the text format, such that parsing the
    /// result yields `self` again.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k} = {v}").expect("string write");
        put("family", &self.family);
        put("n_hidden", &self.n_hidden);
        put("covariance", &self.covariance.name());
        match &self.data {
            DataSource::Synthetic(s) => {
                put("data", &"synthetic");
                put("synthetic_seed", &s.seed);
                put("synthetic_n_visible", &s.n_visible);
                put("synthetic_n_hidden", &s.n_hidden);
                put("synthetic_n_train", &s.n_train);
                put("synthetic_n_test", &s.n_test);
                put("synthetic_burn_in", &s.burn_in);
            }
            DataSource::Idx { train, test } | DataSource::Matrix { train, test } => {
                let kind = if matches!(self.data, DataSource::Idx { .. }) { "idx" } else { "matrix" };
                put("data", &kind);
                put("train_path", &train.display());
                if let Some(t) = test {
                    put("test_path", &t.display());
                }
            }
        }
        match self.binarize {
            BinarizeMode::None => put("binarize", &"none"),
            BinarizeMode::Threshold(t) => {
                put("binarize", &"threshold");
                put("binarize_threshold", &t);
            }
            BinarizeMode::Stochastic => put("binarize", &"stochastic"),
        }
        put("batch_size", &self.batch_size);
        put("cd_k", &self.cd_k);
        put("cd_mode", &if self.cd_mode == CdMode::Cd { "cd" } else { "pcd" });
        let p = &self.policy;
        for (name, b) in [("w", p.w), ("b", p.b), ("a", p.a), ("cov", p.cov)] {
            put(&format!("rule_{name}"), &b.rule);
            put(&format!("step_{name}"), &b.step);
        }
        match p.schedule {
            Schedule::Fixed => put("schedule", &"fixed"),
            Schedule::Exponential { gamma, period } => {
                put("schedule", &"exponential");
                put("schedule_gamma", &gamma);
                put("schedule_period", &period);
            }
        }
        put("momentum", &p.momentum);
        match p.weight_norm_cap {
            None => put("weight_norm_cap", &"none"),
            Some(r) => put("weight_norm_cap", &r),
        }
        match p.svd_mode {
            SvdMode::Exact => put("svd_mode", &"exact"),
            SvdMode::Randomized { target_rank, oversample } => {
                put("svd_mode", &"randomized");
                put("svd_rank", &target_rank);
                put("svd_oversample", &oversample);
            }
        }
        put("init_scale", &self.init_scale);
        if let Some(c) = &self.init_checkpoint {
            put("init_checkpoint", &c.display());
        }
        put("iterations", &self.iterations);
        put("eval_interval", &self.eval_interval);
        put("seed", &self.seed);
        if let Some(o) = &self.output_dir {
            put("output_dir", &o.display());
        }
        put("deterministic", &self.deterministic);
        out
    }
}
