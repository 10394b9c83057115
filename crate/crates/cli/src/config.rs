//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, dotted keys group settings
//! (`attack.epsilon = 10`). Unknown or repeated keys are rejected so a typo
//! never silently falls back to a default. Relative paths are resolved
//! against the directory holding the config file.

use std::collections::HashSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use abbg_core::data::SuiteConfig;
use abbg_core::gradcheck::GradcheckConfig;
use abbg_core::runner::RunConfig;

use crate::CliError;

/// Where `attack` gets its sequences from.
#[derive(Debug, Clone, PartialEq)]
pub enum Sequences {
    /// Rendered in memory from the master seed.
    Synth(SuiteConfig),
    /// Every subdirectory with a `groundtruth.txt`, in name order.
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub suite: SuiteConfig,
    pub data_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub gradcheck: GradcheckConfig,
    /// Test hook: scale the pullback so the gradient check must fail.
    pub corrupt_backward: bool,
    pub output_dir: Option<PathBuf>,
}

fn value<T: FromStr>(raw: &str) -> Result<T, String>
where
    T::Err: Display,
{
    raw.parse::<T>().map_err(|e| format!("invalid value {raw:?}: {e}"))
}

fn flag(raw: &str) -> Result<bool, String> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {raw:?}")),
    }
}

impl ExperimentConfig {
    pub fn sequences(&self) -> Sequences {
        match &self.data_dir {
            Some(d) => Sequences::Dir(d.clone()),
            None => Sequences::Synth(self.suite.clone()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| CliError::config(format!("{}{e}", path.display())))
    }

    /// Parses config text. Errors are `":<line>: <message>"` so the caller
    /// can prefix a file name.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, val)) = content.split_once('=') else {
                return Err(format!(":{line}: expected `key = value`, got {content:?}"));
            };
            let (key, val) = (key.trim(), val.trim());
            if key.is_empty() {
                return Err(format!(":{line}: missing key"));
            }
            if !seen.insert(key.to_string()) {
                return Err(format!(":{line}: duplicate key {key:?}"));
            }
            cfg.set(key, val, base_dir)
                .map_err(|msg| format!(":{line}: {key}: {msg}"))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, raw: &str, base_dir: &Path) -> Result<(), String> {
        let path = |raw: &str| {
            let p = PathBuf::from(raw);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let run = &mut self.run;
        let synth = &mut self.suite.base;
        let gc = &mut self.gradcheck;
        match key {
            "seed" => self.seed = Some(value(raw)?),
            "output_dir" => self.output_dir = Some(path(raw)),
            "data.dir" => self.data_dir = Some(path(raw)),

            "suite.count" => self.suite.count = value(raw)?,
            "suite.frames" => self.suite.frames = value(raw)?,
            "suite.speed_min" => self.suite.speed.0 = value(raw)?,
            "suite.speed_max" => self.suite.speed.1 = value(raw)?,
            "suite.period" => self.suite.period = value(raw)?,
            "synth.frame_height" => synth.frame_size.0 = value(raw)?,
            "synth.frame_width" => synth.frame_size.1 = value(raw)?,
            "synth.object_height" => synth.object_size.0 = value(raw)?,
            "synth.object_width" => synth.object_size.1 = value(raw)?,
            "synth.noise_sigma" => synth.noise_sigma = value(raw)?,
            "synth.background_contrast" => synth.background_contrast = value(raw)?,
            "synth.background_grain" => synth.background_grain = value(raw)?,
            "synth.object_cell" => synth.object_cell = value(raw)?,
            "synth.object_contrast" => synth.object_contrast = value(raw)?,

            "attack" => run.attack = raw.parse().map_err(|e| format!("{e}"))?,
            "protocol" => run.protocol = raw.parse().map_err(|e| format!("{e}"))?,
            "attack.epsilon" => run.attack_params.epsilon = value(raw)?,
            "attack.steps" => run.attack_params.steps = value(raw)?,
            "attack.step_size" => run.attack_params.step_size = value(raw)?,
            "attack.carry_over" => run.attack_params.carry_over = flag(raw)?,

            "boxgen.k" => run.boxgen_params.k = value(raw)?,
            "boxgen.t_min" => run.boxgen_params.t_min = value(raw)?,
            "boxgen.t_max" => run.boxgen_params.t_max = value(raw)?,
            "boxgen.s_min" => run.boxgen_params.s_min = value(raw)?,
            "boxgen.s_max" => run.boxgen_params.s_max = value(raw)?,
            "boxgen.retain_fraction" => run.boxgen_params.retain_fraction = value(raw)?,
            "boxgen.symmetric_offsets" => run.boxgen_params.symmetric_offsets = flag(raw)?,

            "tracker.size_damping" => run.tracker_params.size_damping = value(raw)?,
            "tracker.temperature" => run.tracker_params.temperature = value(raw)?,
            "tracker.size_min" => run.tracker_params.size_range.0 = value(raw)?,
            "tracker.size_max" => run.tracker_params.size_range.1 = value(raw)?,

            "vot.anchor_spacing" => run.vot_params.anchor_spacing = value(raw)?,
            "vot.fail_iou" => run.vot_params.fail_iou = value(raw)?,
            "vot.fail_window" => run.vot_params.fail_window = value(raw)?,

            "gradcheck.states" => gc.states = value(raw)?,
            "gradcheck.probes" => gc.probes = value(raw)?,
            "gradcheck.step" => gc.step = value(raw)?,
            "gradcheck.tolerance" => gc.tolerance = value(raw)?,
            "gradcheck.template_min" => gc.template_side.0 = value(raw)?,
            "gradcheck.template_max" => gc.template_side.1 = value(raw)?,
            "gradcheck.noise_sigma" => gc.noise_sigma = value(raw)?,
            "gradcheck.corrupt_backward" => self.corrupt_backward = flag(raw)?,

            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks what `synth` and `attack` need: a seed and valid parameters.
    pub fn validate_experiment(&self) -> Result<u64, CliError> {
        let seed = self
            .seed
            .ok_or_else(|| CliError::config("a seed is required (config `seed = N` or --seed)"))?;
        self.run.validate().map_err(CliError::from)?;
        if self.suite.count == 0 {
            return Err(CliError::config("suite.count must be at least 1"));
        }
        self.suite.base.validate().map_err(CliError::from)?;
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return Err(CliError::config(format!(
                    "data.dir {} is not a directory",
                    dir.display()
                )));
            }
        }
        Ok(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abbg_core::runner::{AttackKind, Protocol};

    fn parse(text: &str) -> Result<ExperimentConfig, String> {
        ExperimentConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn reads_sections_and_comments() {
        let cfg = parse(
            "seed = 7   # master\nattack = random\nprotocol=ope\nattack.epsilon = 2.5\n\
             boxgen.symmetric_offsets = true\ndata.dir = seqs\noutput_dir = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.run.attack, AttackKind::Random);
        assert_eq!(cfg.run.protocol, Protocol::Ope);
        assert_eq!(cfg.run.attack_params.epsilon, 2.5);
        assert!(cfg.run.boxgen_params.symmetric_offsets);
        assert_eq!(cfg.data_dir, Some(PathBuf::from("/base/seqs")));
        assert_eq!(cfg.output_dir, Some(PathBuf::from("/tmp/x")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse("seed = 1\nbogus = 2\n").unwrap_err(), ":2: bogus: unknown key");
        assert!(parse("seed = 1\n\nseed = 2").unwrap_err().starts_with(":3: duplicate"));
        assert!(parse("attack.steps = ten").unwrap_err().starts_with(":1: attack.steps: invalid value"));
        assert!(parse("just words").unwrap_err().starts_with(":1: expected"));
        assert!(parse("attack = fgsm").unwrap_err().contains("unknown attack"));
    }

    #[test]
    fn seed_is_mandatory_for_experiments() {
        let cfg = parse("attack = none").unwrap();
        assert_eq!(cfg.validate_experiment().unwrap_err().code, crate::EXIT_CONFIG);
    }
}
