//! Flat `key=value` run configuration.
//!
//! One line per setting, `#` starts a comment. Unknown keys are errors, not
//! warnings: a typo must never silently train the wrong model. The canonical
//! echo (`to_canonical_string`) always writes every key in a fixed order, so
//! two configs are equivalent iff their echoes are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::objective::LossConfig;
use crate::optim::OptimConfig;
use crate::stdc::Variant;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // model
    pub variant: Variant,
    pub num_classes: usize,
    pub decoder_ch: usize,
    pub dilations: Vec<usize>,
    pub aux_head: bool,
    pub use_se_aspp: bool,
    pub use_ccbam: bool,
    pub se_on_sum: bool,
    // loss
    pub alpha: f64,
    pub gamma: f64,
    pub ignore_index: i32,
    pub aux_weight: f64,
    // optimizer
    pub base_lr: f64,
    pub min_lr: f64,
    pub power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: usize,
    // data
    pub height: usize,
    pub width: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub hflip_prob: f64,
    pub noise_std: f64,
    pub shape_kinds: usize,
    pub align: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub boundary_ignore: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub batch_size: usize,
    // run
    pub seed: u64,
    pub log_every: usize,
    pub val_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        let opt = OptimConfig::default();
        RunConfig {
            variant: Variant::Stdc1,
            num_classes: 19,
            decoder_ch: 256,
            dilations: vec![1, 3],
            aux_head: true,
            use_se_aspp: true,
            use_ccbam: true,
            se_on_sum: false,
            alpha: loss.alpha,
            gamma: loss.gamma,
            ignore_index: loss.ignore_index,
            aux_weight: loss.aux_weight,
            base_lr: opt.base_lr,
            min_lr: opt.min_lr,
            power: opt.power,
            momentum: opt.momentum,
            weight_decay: opt.weight_decay,
            max_iter: opt.max_iter,
            height: 128,
            width: 256,
            crop_h: 96,
            crop_w: 96,
            scale_min: 0.75,
            scale_max: 1.5,
            hflip_prob: 0.5,
            noise_std: 0.03,
            shape_kinds: 3,
            align: 1,
            min_shapes: 3,
            max_shapes: 8,
            boundary_ignore: 0,
            train_size: 64,
            val_size: 8,
            batch_size: 4,
            seed: 0,
            log_every: 10,
            val_every: 100,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("invalid bool '{value}' for key '{key}'"))),
    }
}

fn parse_dilations(value: &str) -> Result<Vec<usize>> {
    let out: Result<Vec<usize>> = value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("invalid dilation list '{value}'")))
        })
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err(Error::config("dilation list must not be empty"));
    }
    Ok(out)
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = value.parse()?,
            "num_classes" => self.num_classes = parse(key, value)?,
            "decoder_ch" => self.decoder_ch = parse(key, value)?,
            "dilations" => self.dilations = parse_dilations(value)?,
            "aux_head" => self.aux_head = parse_bool(key, value)?,
            "use_se_aspp" => self.use_se_aspp = parse_bool(key, value)?,
            "use_ccbam" => self.use_ccbam = parse_bool(key, value)?,
            "se_on_sum" => self.se_on_sum = parse_bool(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "ignore_index" => self.ignore_index = parse(key, value)?,
            "aux_weight" => self.aux_weight = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "min_lr" => self.min_lr = parse(key, value)?,
            "power" => self.power = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "crop_h" => self.crop_h = parse(key, value)?,
            "crop_w" => self.crop_w = parse(key, value)?,
            "scale_min" => self.scale_min = parse(key, value)?,
            "scale_max" => self.scale_max = parse(key, value)?,
            "hflip_prob" => self.hflip_prob = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "shape_kinds" => self.shape_kinds = parse(key, value)?,
            "align" => self.align = parse(key, value)?,
            "min_shapes" => self.min_shapes = parse(key, value)?,
            "max_shapes" => self.max_shapes = parse(key, value)?,
            "boundary_ignore" => self.boundary_ignore = parse(key, value)?,
            "train_size" => self.train_size = parse(key, value)?,
            "val_size" => self.val_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "val_every" => self.val_every = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a whole config text (defaults plus overrides, last wins).
    pub fn from_str_cfg(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_cfg(&text)
    }

    /// `key=value` overrides as passed on a command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override '{pair}' is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            Variant::Stdc1 => "stdc1",
            Variant::Stdc2 => "stdc2",
        }
    }

    /// Every key in fixed order; the echo written into checkpoints and logs.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let dil: Vec<String> = self.dilations.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "variant={}", self.variant_name());
        let _ = writeln!(s, "num_classes={}", self.num_classes);
        let _ = writeln!(s, "decoder_ch={}", self.decoder_ch);
        let _ = writeln!(s, "dilations={}", dil.join(","));
        let _ = writeln!(s, "aux_head={}", self.aux_head);
        let _ = writeln!(s, "use_se_aspp={}", self.use_se_aspp);
        let _ = writeln!(s, "use_ccbam={}", self.use_ccbam);
        let _ = writeln!(s, "se_on_sum={}", self.se_on_sum);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "ignore_index={}", self.ignore_index);
        let _ = writeln!(s, "aux_weight={}", self.aux_weight);
        let _ = writeln!(s, "base_lr={}", self.base_lr);
        let _ = writeln!(s, "min_lr={}", self.min_lr);
        let _ = writeln!(s, "power={}", self.power);
        let _ = writeln!(s, "momentum={}", self.momentum);
        let _ = writeln!(s, "weight_decay={}", self.weight_decay);
        let _ = writeln!(s, "max_iter={}", self.max_iter);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "crop_h={}", self.crop_h);
        let _ = writeln!(s, "crop_w={}", self.crop_w);
        let _ = writeln!(s, "scale_min={}", self.scale_min);
        let _ = writeln!(s, "scale_max={}", self.scale_max);
        let _ = writeln!(s, "hflip_prob={}", self.hflip_prob);
        let _ = writeln!(s, "noise_std={}", self.noise_std);
        let _ = writeln!(s, "shape_kinds={}", self.shape_kinds);
        let _ = writeln!(s, "min_shapes={}", self.min_shapes);
        let _ = writeln!(s, "max_shapes={}", self.max_shapes);
        let _ = writeln!(s, "boundary_ignore={}", self.boundary_ignore);
        let _ = writeln!(s, "align={}", self.align);
        let _ = writeln!(s, "train_size={}", self.train_size);
        let _ = writeln!(s, "val_size={}", self.val_size);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "log_every={}", self.log_every);
        let _ = writeln!(s, "val_every={}", self.val_every);
        s
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            variant: self.variant,
            num_classes: self.num_classes,
            decoder_ch: self.decoder_ch,
            dilations: self.dilations.clone(),
            aux_head: self.aux_head,
            use_se_aspp: self.use_se_aspp,
            use_ccbam: self.use_ccbam,
            se_on_sum: self.se_on_sum,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            ignore_index: self.ignore_index,
            aux_weight: self.aux_weight,
        }
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            base_lr: self.base_lr,
            min_lr: self.min_lr,
            power: self.power,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            max_iter: self.max_iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("variant", "stdc2").unwrap();
        cfg.set("dilations", "2,4").unwrap();
        cfg.set("gamma", "1.5").unwrap();
        let echo = cfg.to_canonical_string();
        let back = RunConfig::from_str_cfg(&echo).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_canonical_string(), echo);
    }

    #[test]
    fn comments_and_blank_lines_ok() {
        let cfg = RunConfig::from_str_cfg("# hello\n\nseed=9  # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(RunConfig::from_str_cfg("sede=9\n").is_err());
        assert!(RunConfig::from_str_cfg("just a line\n").is_err());
    }

    #[test]
    fn overrides_last_wins() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["seed=1".into(), "seed=2".into()]).unwrap();
        assert_eq!(cfg.seed, 2);
        assert!(cfg.apply_overrides(&["bogus".into()]).is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = RunConfig::from_str_cfg("gamma=fast\n").unwrap_err().to_string();
        assert!(err.contains("gamma"), "{err}");
    }
}
