//! Run configuration: UTF-8 `section.key = value` lines.
//!
//! Every key is validated against the registry at load time — unknown or
//! misspelled keys are rejected with the offending key named — and every
//! value is parsed on consumption with the same courtesy. Missing keys fall
//! back to built-in defaults, so an empty (or absent) file is a valid run.

use anyhow::{anyhow, bail, Context, Result};
use smallnet::game::SpeedModel;
use smallnet::network::{ArchVariant, Architecture, TrainConfig};
use smallnet::protocol::SessionPlan;
use smallnet::signal::{BandSignature, SignatureConfig, TaskSignature};
use std::collections::BTreeMap;

/// Exact keys the loader accepts (plus the `signature.<task>` family).
const KNOWN_KEYS: &[&str] = &[
    "paths.grid",
    "tasks.active",
    "tasks.pool",
    "generator.background_rms_uv",
    "generator.background_exponent",
    "generator.line_noise_amp_uv",
    "generator.blink_rate_hz",
    "generator.blink_amp_uv",
    "generator.blink_weights",
    "generator.game_gain_scale",
    "generator.game_noise_scale",
    "arch.variant",
    "arch.conv_maps",
    "arch.conv_kernel",
    "arch.conv3d_maps",
    "arch.conv3d_kernel",
    "arch.fc_width",
    "arch.input_norm",
    "train.learning_rate",
    "train.batch_size",
    "train.max_epochs",
    "train.patience",
    "train.holdout_fraction",
    "train.max_examples",
    "train.clip_norm",
    "cv.k",
    "cv.n_seeds",
    "rank.examples_per_task",
    "rank.segment_s",
    "rank.alpha",
    "rank.max_epochs",
    "ica.components",
    "ica.max_iter",
    "ica.tol",
    "ica.threshold",
    "ica.calibration_s",
    "game.n_pads",
    "game.pad_length_m",
    "game.v_correct",
    "game.v_none",
    "game.v_wrong",
    "game.reaction_delay_s",
    "gen.block_s",
    "gen.n_blocks",
    "gen.truncate",
    "plan.n_videos",
    "plan.n_warmup_races",
    "plan.n_retrain_races",
    "plan.n_adaptive_races",
    "plan.buffer_cap",
    "plan.video_pad_duration_s",
    "plan.video_n_pads",
];

/// Built-in 8-task signature library: (name, low Hz, high Hz, electrodes).
const DEFAULT_SIGNATURES: &[(&str, f64, f64, &str)] = &[
    ("right_hand", 8.0, 12.0, "C3;C5;CP3"),
    ("left_hand", 8.0, 12.0, "C4;C6;CP4"),
    ("feet", 8.0, 12.0, "Cz;C1;C2"),
    ("stomach", 13.0, 18.0, "CP1;CP2;CPz"),
    ("lips", 20.0, 24.0, "FC3;FC4;FCz"),
    ("humming", 5.0, 8.0, "T7;T8;FT7"),
    ("numbers", 18.0, 24.0, "F3;F4;Fz"),
    ("relax", 9.0, 12.0, "O1;Oz;O2"),
];

const DEFAULT_ACTIVE: &str = "right_hand,feet,relax,humming";
const DEFAULT_GAIN: f64 = 4.0;

#[derive(Debug, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config `{}`", p.display()))?;
                RunConfig::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `section.key = value`", lineno + 1))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !Self::is_known(&key) {
                bail!("config line {}: unknown key `{key}`", lineno + 1);
            }
            if entries.insert(key.clone(), value).is_some() {
                bail!("config line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(RunConfig { entries })
    }

    fn is_known(key: &str) -> bool {
        KNOWN_KEYS.contains(&key)
            || key
                .strip_prefix("signature.")
                .is_some_and(|task| !task.is_empty() && !task.contains('.'))
    }

    fn get_parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{raw}`")),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        self.get_parsed(key, default)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.get_parsed(key, default)
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        self.get_parsed(key, default)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.entries
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    pub fn opt_string(&self, key: &str) -> Option<String> {
        self.entries.get(key).cloned()
    }

    /// Task names mapped to model classes / pad types, in order.
    pub fn active_tasks(&self) -> Vec<String> {
        self.string("tasks.active", DEFAULT_ACTIVE)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// The mental-task pool screened by `rank-tasks`.
    pub fn pool_tasks(&self) -> Vec<String> {
        match self.opt_string("tasks.pool") {
            Some(s) => s
                .split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect(),
            None => DEFAULT_SIGNATURES.iter().map(|(n, ..)| n.to_string()).collect(),
        }
    }

    fn band_for(&self, task: &str) -> Result<Vec<BandSignature>> {
        let parse = |raw: &str| -> Result<BandSignature> {
            // low,high,gain,e1;e2;e3
            let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                bail!("signature.{task}: expected `low_hz,high_hz,gain,e1;e2;...`, got `{raw}`");
            }
            let low_hz: f64 = parts[0]
                .parse()
                .map_err(|_| anyhow!("signature.{task}: bad low `{}`", parts[0]))?;
            let high_hz: f64 = parts[1]
                .parse()
                .map_err(|_| anyhow!("signature.{task}: bad high `{}`", parts[1]))?;
            let power_gain: f64 = parts[2]
                .parse()
                .map_err(|_| anyhow!("signature.{task}: bad gain `{}`", parts[2]))?;
            let electrodes: Vec<String> = parts[3]
                .split(';')
                .map(|e| e.trim().to_string())
                .filter(|e| !e.is_empty())
                .collect();
            if electrodes.is_empty() {
                bail!("signature.{task}: empty electrode list");
            }
            Ok(BandSignature {
                low_hz,
                high_hz,
                electrodes,
                power_gain,
            })
        };

        if let Some(raw) = self.entries.get(&format!("signature.{task}")) {
            return Ok(vec![parse(raw)?]);
        }
        for (name, low, high, electrodes) in DEFAULT_SIGNATURES {
            if *name == task {
                return Ok(vec![BandSignature {
                    low_hz: *low,
                    high_hz: *high,
                    electrodes: electrodes.split(';').map(str::to_string).collect(),
                    power_gain: DEFAULT_GAIN,
                }]);
            }
        }
        bail!("task `{task}` has no signature (add `signature.{task} = low,high,gain,e1;e2`)");
    }

    /// Generator config over the given task list (labels in list order).
    pub fn generator(&self, tasks: &[String], seed: u64) -> Result<SignatureConfig> {
        let mut task_sigs = Vec::with_capacity(tasks.len());
        for name in tasks {
            task_sigs.push(TaskSignature {
                name: name.clone(),
                bands: self.band_for(name)?,
            });
        }
        let blink_weights = {
            let raw = self.string(
                "generator.blink_weights",
                "Fp1:1.0,Fp2:1.0,AF3:0.8,AF4:0.8,AF7:0.7,AF8:0.7,F1:0.4,F2:0.4",
            );
            let mut weights = Vec::new();
            for pair in raw.split(',') {
                let (ch, w) = pair
                    .split_once(':')
                    .ok_or_else(|| anyhow!("generator.blink_weights: bad entry `{pair}`"))?;
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| anyhow!("generator.blink_weights: bad weight in `{pair}`"))?;
                weights.push((ch.trim().to_string(), w));
            }
            weights
        };
        Ok(SignatureConfig {
            tasks: task_sigs,
            background_rms_uv: self.f64("generator.background_rms_uv", 3.0)?,
            background_exponent: self.f64("generator.background_exponent", 1.0)?,
            line_noise_amp_uv: self.f64("generator.line_noise_amp_uv", 1.0)?,
            blink_rate_hz: self.f64("generator.blink_rate_hz", 0.25)?,
            blink_amp_uv: self.f64("generator.blink_amp_uv", 60.0)?,
            blink_weights,
            seed,
        })
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let name = self.string("arch.variant", "smallnet");
        let variant = ArchVariant::parse(&name)
            .ok_or_else(|| anyhow!("arch.variant: unknown variant `{name}`"))?;
        let mut arch = Architecture::new(variant);
        arch.conv_maps = self.usize("arch.conv_maps", arch.conv_maps)?;
        arch.conv3d_maps = self.usize("arch.conv3d_maps", arch.conv3d_maps)?;
        arch.fc_width = self.usize("arch.fc_width", arch.fc_width)?;
        arch.input_norm = self.bool("arch.input_norm", arch.input_norm)?;
        if let Some(raw) = self.opt_string("arch.conv_kernel") {
            arch.conv_kernel = parse_kernel2(&raw).context("arch.conv_kernel")?;
        }
        if let Some(raw) = self.opt_string("arch.conv3d_kernel") {
            arch.conv3d_kernel = parse_kernel3(&raw).context("arch.conv3d_kernel")?;
        }
        Ok(arch)
    }

    pub fn train_config(&self, shuffle_seed: u64) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        Ok(TrainConfig {
            learning_rate: self.f64("train.learning_rate", defaults.learning_rate)?,
            batch_size: self.usize("train.batch_size", defaults.batch_size)?,
            max_epochs: self.usize("train.max_epochs", defaults.max_epochs)?,
            shuffle_seed,
            patience: self.usize("train.patience", defaults.patience)?,
            holdout_fraction: self.f64("train.holdout_fraction", defaults.holdout_fraction)?,
            max_examples: self.usize("train.max_examples", defaults.max_examples)?,
            clip_norm: self.f64("train.clip_norm", defaults.clip_norm)?,
        })
    }

    pub fn speed_model(&self) -> Result<SpeedModel> {
        let d = SpeedModel::default();
        let speed = SpeedModel {
            v_correct: self.f64("game.v_correct", d.v_correct)?,
            v_none: self.f64("game.v_none", d.v_none)?,
            v_wrong: self.f64("game.v_wrong", d.v_wrong)?,
            command_effect_duration_s: d.command_effect_duration_s,
        };
        speed.validate().map_err(|e| anyhow!("game speeds: {e}"))?;
        Ok(speed)
    }

    pub fn session_plan(&self, master_seed: u64) -> Result<SessionPlan> {
        let d = SessionPlan::default();
        Ok(SessionPlan {
            n_videos: self.usize("plan.n_videos", d.n_videos)?,
            n_warmup_races: self.usize("plan.n_warmup_races", d.n_warmup_races)?,
            n_retrain_races: self.usize("plan.n_retrain_races", d.n_retrain_races)?,
            n_adaptive_races: self.usize("plan.n_adaptive_races", d.n_adaptive_races)?,
            buffer_cap: self.usize("plan.buffer_cap", d.buffer_cap)?,
            video_pad_duration_s: self.f64("plan.video_pad_duration_s", d.video_pad_duration_s)?,
            video_n_pads: self.usize("plan.video_n_pads", d.video_n_pads)?,
            race_n_pads: self.usize("game.n_pads", d.race_n_pads)?,
            pad_length_m: self.f64("game.pad_length_m", d.pad_length_m)?,
            ica_components: self.usize("ica.components", d.ica_components)?,
            reaction_delay_s: self.f64("game.reaction_delay_s", d.reaction_delay_s)?,
            game_gain_scale: self.f64("generator.game_gain_scale", d.game_gain_scale)?,
            game_noise_scale: self.f64("generator.game_noise_scale", d.game_noise_scale)?,
            master_seed,
        })
    }

    /// Grid table: from `paths.grid` when set, otherwise the shipped table.
    pub fn grid(&self) -> Result<smallnet::features::ElectrodeGrid> {
        match self.opt_string("paths.grid") {
            None => Ok(smallnet::features::ElectrodeGrid::default_table()),
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("cannot read grid table `{path}`"))?;
                smallnet::features::ElectrodeGrid::parse(&text)
                    .map_err(|e| anyhow!("grid table `{path}`: {e}"))
            }
        }
    }
}

fn parse_kernel2(raw: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = raw.split('x').collect();
    if parts.len() != 2 {
        bail!("expected HxW, got `{raw}`");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn parse_kernel3(raw: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = raw.split('x').collect();
    if parts.len() != 3 {
        bail!("expected DxHxW, got `{raw}`");
    }
    Ok((
        parts[0].trim().parse()?,
        parts[1].trim().parse()?,
        parts[2].trim().parse()?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::parse("train.learning_rte = 0.1").unwrap_err();
        assert!(err.to_string().contains("train.learning_rte"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(RunConfig::parse("cv.k = 5\ncv.k = 3").is_err());
    }

    #[test]
    fn defaults_cover_an_empty_config() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.active_tasks().len(), 4);
        assert_eq!(cfg.pool_tasks().len(), 8);
        let arch = cfg.architecture().unwrap();
        assert_eq!(arch.conv_maps, 32);
        let gen = cfg.generator(&cfg.active_tasks(), 1).unwrap();
        assert_eq!(gen.tasks.len(), 4);
        assert!(cfg.speed_model().is_ok());
    }

    #[test]
    fn values_parse_with_key_context() {
        let cfg = RunConfig::parse("cv.k = five").unwrap();
        let err = cfg.usize("cv.k", 5).unwrap_err();
        assert!(err.to_string().contains("cv.k"), "{err}");
    }

    #[test]
    fn custom_signature_lines_override_defaults() {
        let cfg = RunConfig::parse("signature.relax = 7,9,2.5,Oz;POz").unwrap();
        let gen = cfg
            .generator(&["relax".to_string(), "feet".to_string()], 0)
            .unwrap();
        let relax = &gen.tasks[0].bands[0];
        assert_eq!(relax.low_hz, 7.0);
        assert_eq!(relax.power_gain, 2.5);
        assert_eq!(relax.electrodes, vec!["Oz", "POz"]);
        // feet falls back to the library.
        assert_eq!(gen.tasks[1].bands[0].electrodes[0], "Cz");
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# comment\n\n  cv.k = 7\n").unwrap();
        assert_eq!(cfg.usize("cv.k", 5).unwrap(), 7);
    }
}
