//! Flat key=value experiment configuration: trivially diffable fixture
//! files with strict unknown-key rejection.

use crate::error::{Error, Result};
use crate::optimizer::StepRule;
use crate::oracle::{NoiseDistribution, NoiseModel};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub tau: f64,
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.tau, self.distribution, self.seed)
    }
}

/// One experiment: objective, rule, start point and budget, with
/// optional noise and Monte-Carlo seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: String,
    pub rule: StepRule,
    pub x0: Vec<f64>,
    pub eps: f64,
    pub budget: u64,
    pub noise: Option<NoiseSpec>,
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad vector component `{}`", t.trim())))
        })
        .collect()
}

fn render_vector(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses the `key = value` format. Lines starting with `#` and
    /// blank lines are ignored; unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut objective = None;
        let mut rule = None;
        let mut x0 = None;
        let mut eps = None;
        let mut budget = None;
        let mut tau = None;
        let mut distribution = None;
        let mut noise_seed = None;
        let mut output_dir = None;
        let mut seeds = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "objective" => objective = Some(value.to_string()),
                "rule" => rule = Some(value.parse::<StepRule>()?),
                "x0" => x0 = Some(parse_vector(value)?),
                "eps" => {
                    eps = Some(value.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("bad value `{value}` for `eps`"))
                    })?)
                }
                "budget" => {
                    budget = Some(value.parse::<u64>().map_err(|_| {
                        Error::Parse(format!("bad value `{value}` for `budget`"))
                    })?)
                }
                "tau" => {
                    tau = Some(value.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("bad value `{value}` for `tau`"))
                    })?)
                }
                "noise_distribution" => {
                    distribution = Some(value.parse::<NoiseDistribution>()?)
                }
                "noise_seed" => {
                    noise_seed = Some(value.parse::<u64>().map_err(|_| {
                        Error::Parse(format!("bad value `{value}` for `noise_seed`"))
                    })?)
                }
                "output_dir" => output_dir = Some(PathBuf::from(value)),
                "seeds" => {
                    let parsed: Result<Vec<u64>> = value
                        .split(',')
                        .map(|t| {
                            t.trim().parse::<u64>().map_err(|_| {
                                Error::Parse(format!("bad seed `{}`", t.trim()))
                            })
                        })
                        .collect();
                    seeds = Some(parsed?);
                }
                other => {
                    return Err(Error::Parse(format!("unknown config key `{other}`")));
                }
            }
        }
        let noise = match (tau, distribution, noise_seed) {
            (None, None, None) => None,
            (Some(tau), d, s) => Some(NoiseSpec {
                tau,
                distribution: d.unwrap_or(NoiseDistribution::UniformBall),
                seed: s.unwrap_or(0),
            }),
            _ => {
                return Err(Error::Parse(
                    "noise_distribution/noise_seed given without tau".into(),
                ))
            }
        };
        let missing = |k: &str| Error::Parse(format!("missing config key `{k}`"));
        Ok(Self {
            objective: objective.ok_or_else(|| missing("objective"))?,
            rule: rule.ok_or_else(|| missing("rule"))?,
            x0: x0.ok_or_else(|| missing("x0"))?,
            eps: eps.ok_or_else(|| missing("eps"))?,
            budget: budget.ok_or_else(|| missing("budget"))?,
            noise,
            output_dir,
            seeds,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("objective = {}\n", self.objective));
        out.push_str(&format!("rule = {}\n", self.rule));
        out.push_str(&format!("x0 = {}\n", render_vector(&self.x0)));
        out.push_str(&format!("eps = {}\n", self.eps));
        out.push_str(&format!("budget = {}\n", self.budget));
        if let Some(noise) = &self.noise {
            out.push_str(&format!("tau = {}\n", noise.tau));
            out.push_str(&format!("noise_distribution = {}\n", noise.distribution));
            out.push_str(&format!("noise_seed = {}\n", noise.seed));
        }
        if let Some(dir) = &self.output_dir {
            out.push_str(&format!("output_dir = {}\n", dir.display()));
        }
        if let Some(seeds) = &self.seeds {
            out.push_str(&format!(
                "seeds = {}\n",
                seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            ));
        }
        out
    }
}
