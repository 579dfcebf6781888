//! Run configuration: a flat `key = value` file merged with flag overrides.
//!
//! Recognized keys (flags take precedence): `task`, `schema`, `data`, `out`,
//! `seed`, `steps`, `gamma`, `lambda_gp`, `batch`, `init_std`, `alpha`,
//! `beta1`, `beta2`, `critic_warmup_steps`, `critic_warmup_updates`,
//! `critic_steady_updates`, `gen_hidden`, `critic_hidden`, `points`,
//! `checkpoint_every`, `n_eval`, plus per-object `dim.<object>` and
//! `latent.<object>` for schema-file tasks and per-arrow `arch.<arrow>`
//! generator spec overrides.

use crate::CliError;
use functorium::para::MLPSpec;
use functorium::train::TrainConfig;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub task: Option<String>,
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda_gp: Option<f64>,
    pub batch: Option<usize>,
    pub init_std: Option<f64>,
    pub alpha: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub critic_warmup_steps: Option<usize>,
    pub critic_warmup_updates: Option<usize>,
    pub critic_steady_updates: Option<usize>,
    pub gen_hidden: Option<Vec<usize>>,
    pub critic_hidden: Option<Vec<usize>>,
    /// Points per domain when generating a built-in task.
    pub points: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub n_eval: Option<usize>,
    /// Embedding dims for schema-file tasks.
    pub object_dims: BTreeMap<String, usize>,
    /// Latent tail widths for schema-file tasks.
    pub latent_dims: BTreeMap<String, usize>,
    /// Per-arrow generator overrides.
    pub arch_overrides: BTreeMap<String, MLPSpec>,
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("config key `{key}`: bad integer `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("config key `{key}`: bad number `{v}`")))
}

fn parse_widths(key: &str, v: &str) -> Result<Vec<usize>, CliError> {
    v.split(',')
        .filter(|w| !w.trim().is_empty())
        .map(|w| parse_usize(key, w.trim()))
        .collect()
}

impl RunConfig {
    /// Parses a config file. Unknown keys are errors so typos surface.
    pub fn from_file(path: &std::path::Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "task" => self.task = Some(value.to_string()),
            "schema" => self.schema = Some(PathBuf::from(value)),
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse_usize(key, value)? as u64),
            "steps" => self.steps = Some(parse_usize(key, value)?),
            "gamma" => self.gamma = Some(parse_f64(key, value)?),
            "lambda_gp" => self.lambda_gp = Some(parse_f64(key, value)?),
            "batch" => self.batch = Some(parse_usize(key, value)?),
            "init_std" => self.init_std = Some(parse_f64(key, value)?),
            "alpha" => self.alpha = Some(parse_f64(key, value)?),
            "beta1" => self.beta1 = Some(parse_f64(key, value)?),
            "beta2" => self.beta2 = Some(parse_f64(key, value)?),
            "critic_warmup_steps" => self.critic_warmup_steps = Some(parse_usize(key, value)?),
            "critic_warmup_updates" => self.critic_warmup_updates = Some(parse_usize(key, value)?),
            "critic_steady_updates" => self.critic_steady_updates = Some(parse_usize(key, value)?),
            "gen_hidden" => self.gen_hidden = Some(parse_widths(key, value)?),
            "critic_hidden" => self.critic_hidden = Some(parse_widths(key, value)?),
            "points" => self.points = Some(parse_usize(key, value)?),
            "checkpoint_every" => self.checkpoint_every = Some(parse_usize(key, value)?),
            "n_eval" => self.n_eval = Some(parse_usize(key, value)?),
            _ if key.starts_with("dim.") => {
                let object = key.trim_start_matches("dim.").to_string();
                self.object_dims.insert(object, parse_usize(key, value)?);
            }
            _ if key.starts_with("latent.") => {
                let object = key.trim_start_matches("latent.").to_string();
                self.latent_dims.insert(object, parse_usize(key, value)?);
            }
            _ if key.starts_with("arch.") => {
                let arrow = key.trim_start_matches("arch.").to_string();
                let spec: MLPSpec = value
                    .parse()
                    .map_err(|e| CliError::usage(format!("config key `{key}`: {e}")))?;
                self.arch_overrides.insert(arrow, spec);
            }
            other => {
                return Err(CliError::usage(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Overlays `flags` (higher precedence) on `self`.
    pub fn merged_under(mut self, flags: RunConfig) -> RunConfig {
        macro_rules! take {
            ($field:ident) => {
                if flags.$field.is_some() {
                    self.$field = flags.$field;
                }
            };
        }
        take!(task);
        take!(schema);
        take!(data);
        take!(out);
        take!(seed);
        take!(steps);
        take!(gamma);
        take!(lambda_gp);
        take!(batch);
        take!(init_std);
        take!(alpha);
        take!(beta1);
        take!(beta2);
        take!(critic_warmup_steps);
        take!(critic_warmup_updates);
        take!(critic_steady_updates);
        take!(gen_hidden);
        take!(critic_hidden);
        take!(points);
        take!(checkpoint_every);
        take!(n_eval);
        self.object_dims.extend(flags.object_dims);
        self.latent_dims.extend(flags.latent_dims);
        self.arch_overrides.extend(flags.arch_overrides);
        self
    }

    /// Applies the scalar overrides onto a base training config.
    pub fn apply_to(&self, base: &mut TrainConfig) {
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = self.steps {
            base.total_steps = v;
        }
        if let Some(v) = self.gamma {
            base.gamma = v;
        }
        if let Some(v) = self.lambda_gp {
            base.lambda_gp = v;
        }
        if let Some(v) = self.batch {
            base.batch_size = v;
        }
        if let Some(v) = self.init_std {
            base.init_std = v;
        }
        if let Some(v) = self.alpha {
            base.adam.alpha = v;
        }
        if let Some(v) = self.beta1 {
            base.adam.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            base.adam.beta2 = v;
        }
        if let Some(v) = self.critic_warmup_steps {
            base.critic_schedule.warmup_steps = v;
        }
        if let Some(v) = self.critic_warmup_updates {
            base.critic_schedule.warmup_updates = v;
        }
        if let Some(v) = self.critic_steady_updates {
            base.critic_schedule.steady_updates = v;
        }
    }
}
