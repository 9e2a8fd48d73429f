use std::fmt::Write as _;

use super::TrainError;

/// Optimization hyperparameters. Defaults follow the reference splatting
/// recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lambda_dssim: f64,
    pub lr_sh: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    /// Position learning rate at the first and last iteration, in units of
    /// the scene extent. Decays log-linearly in between.
    pub lr_position_init: f64,
    pub lr_position_final: f64,
    pub densify_interval: usize,
    pub densify_from: usize,
    pub densify_until: usize,
    pub densify_grad_threshold: f64,
    pub prune_opacity: f64,
    pub opacity_reset_interval: usize,
    pub opacity_reset_until: usize,
    pub opacity_reset_value: f64,
    pub background: [f64; 3],
    pub sh_degree: usize,
    pub seed: u64,
    pub checkpoint_interval: usize,
    /// Every k-th view (k > 0) is held out of training.
    pub holdout_every_k: usize,
    /// Off by default so that equal seeds give byte-identical logs; when
    /// off the wall-clock column is written as 0.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            lambda_dssim: 0.2,
            lr_sh: 0.0025,
            lr_opacity: 0.05,
            lr_scale: 0.005,
            lr_rotation: 0.001,
            lr_position_init: 1.6e-4,
            lr_position_final: 1.6e-6,
            densify_interval: 100,
            densify_from: 500,
            densify_until: 15_000,
            densify_grad_threshold: 0.0002,
            prune_opacity: 0.005,
            opacity_reset_interval: 3000,
            opacity_reset_until: 15_000,
            opacity_reset_value: 0.01,
            background: [0.0; 3],
            sh_degree: 0,
            seed: 0,
            checkpoint_interval: 5000,
            holdout_every_k: 0,
            record_time: false,
        }
    }
}

fn bad(key: &str, value: &str) -> TrainError {
    TrainError::Config(format!("invalid value {value:?} for {key}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value.trim().parse().map_err(|_| bad(key, value))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let rates = [
            ("lr_sh", self.lr_sh),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_position_init", self.lr_position_init),
            ("lr_position_final", self.lr_position_final),
        ];
        for (k, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{k} must be positive, got {v}")));
            }
        }
        let intervals = [
            ("densify_interval", self.densify_interval),
            ("opacity_reset_interval", self.opacity_reset_interval),
            ("checkpoint_interval", self.checkpoint_interval),
        ];
        for (k, v) in intervals {
            if v == 0 {
                return Err(TrainError::Config(format!("{k} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(TrainError::Config(format!(
                "lambda_dssim must be in [0, 1], got {}",
                self.lambda_dssim
            )));
        }
        if !(self.densify_grad_threshold >= 0.0) || !(self.prune_opacity >= 0.0) {
            return Err(TrainError::Config("thresholds must be non-negative".into()));
        }
        if !(self.opacity_reset_value > 0.0 && self.opacity_reset_value < 1.0) {
            return Err(TrainError::Config("opacity_reset_value must be in (0, 1)".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(TrainError::Config("background must be in [0, 1]".into()));
        }
        if self.sh_degree > crate::sh::MAX_SH_DEGREE {
            return Err(TrainError::Config(format!(
                "sh_degree {} unsupported",
                self.sh_degree
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let v = value.trim();
        match key.trim() {
            "iterations" => self.iterations = parse_num(key, v)?,
            "lambda_dssim" => self.lambda_dssim = parse_num(key, v)?,
            "lr_sh" => self.lr_sh = parse_num(key, v)?,
            "lr_opacity" => self.lr_opacity = parse_num(key, v)?,
            "lr_scale" => self.lr_scale = parse_num(key, v)?,
            "lr_rotation" => self.lr_rotation = parse_num(key, v)?,
            "lr_position_init" => self.lr_position_init = parse_num(key, v)?,
            "lr_position_final" => self.lr_position_final = parse_num(key, v)?,
            "densify_interval" => self.densify_interval = parse_num(key, v)?,
            "densify_from" => self.densify_from = parse_num(key, v)?,
            "densify_until" => self.densify_until = parse_num(key, v)?,
            "densify_grad_threshold" => self.densify_grad_threshold = parse_num(key, v)?,
            "prune_opacity" => self.prune_opacity = parse_num(key, v)?,
            "opacity_reset_interval" => self.opacity_reset_interval = parse_num(key, v)?,
            "opacity_reset_until" => self.opacity_reset_until = parse_num(key, v)?,
            "opacity_reset_value" => self.opacity_reset_value = parse_num(key, v)?,
            "sh_degree" => self.sh_degree = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = parse_num(key, v)?,
            "holdout_every_k" => self.holdout_every_k = parse_num(key, v)?,
            "record_time" => self.record_time = parse_num(key, v)?,
            "background" => {
                let parts: Vec<&str> = v.split(',').collect();
                self.background = match parts.as_slice() {
                    [g] => [parse_num(key, g)?; 3],
                    [r, g, b] => [parse_num(key, r)?, parse_num(key, g)?, parse_num(key, b)?],
                    _ => return Err(bad(key, v)),
                };
            }
            other => return Err(TrainError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document on top of `self`. Blank lines
    /// and `#` comments are ignored.
    pub fn apply_str(&mut self, text: &str) -> Result<(), TrainError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_str_checked(text: &str) -> Result<Self, TrainError> {
        let mut c = Self::default();
        c.apply_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Renders the config in the format accepted by [`apply_str`](Self::apply_str).
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let b = self.background;
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "lambda_dssim = {:?}", self.lambda_dssim);
        let _ = writeln!(s, "lr_sh = {:?}", self.lr_sh);
        let _ = writeln!(s, "lr_opacity = {:?}", self.lr_opacity);
        let _ = writeln!(s, "lr_scale = {:?}", self.lr_scale);
        let _ = writeln!(s, "lr_rotation = {:?}", self.lr_rotation);
        let _ = writeln!(s, "lr_position_init = {:?}", self.lr_position_init);
        let _ = writeln!(s, "lr_position_final = {:?}", self.lr_position_final);
        let _ = writeln!(s, "densify_interval = {}", self.densify_interval);
        let _ = writeln!(s, "densify_from = {}", self.densify_from);
        let _ = writeln!(s, "densify_until = {}", self.densify_until);
        let _ = writeln!(s, "densify_grad_threshold = {:?}", self.densify_grad_threshold);
        let _ = writeln!(s, "prune_opacity = {:?}", self.prune_opacity);
        let _ = writeln!(s, "opacity_reset_interval = {}", self.opacity_reset_interval);
        let _ = writeln!(s, "opacity_reset_until = {}", self.opacity_reset_until);
        let _ = writeln!(s, "opacity_reset_value = {:?}", self.opacity_reset_value);
        let _ = writeln!(s, "background = {:?},{:?},{:?}", b[0], b[1], b[2]);
        let _ = writeln!(s, "sh_degree = {}", self.sh_degree);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "checkpoint_interval = {}", self.checkpoint_interval);
        let _ = writeln!(s, "holdout_every_k = {}", self.holdout_every_k);
        let _ = writeln!(s, "record_time = {}", self.record_time);
        s
    }

    /// Iterations at which opacities are reset.
    pub fn is_reset_iteration(&self, it: usize) -> bool {
        it > 0 && it % self.opacity_reset_interval == 0 && it <= self.opacity_reset_until
    }

    pub fn is_densify_iteration(&self, it: usize) -> bool {
        it > self.densify_from && it < self.densify_until && it % self.densify_interval == 0
    }

    /// Position learning rate at 1-based iteration `it`, before scaling by
    /// the scene extent.
    pub fn position_lr(&self, it: usize) -> f64 {
        let t = if self.iterations <= 1 {
            0.0
        } else {
            ((it.max(1) - 1) as f64 / (self.iterations - 1) as f64).clamp(0.0, 1.0)
        };
        (self.lr_position_init.ln() * (1.0 - t) + self.lr_position_final.ln() * t).exp()
    }
}
