//! Experiment configuration: flat `key = value` text with dotted namespaces.
//!
//! Lines starting with `#` are comments. Two-element settings such as
//! `mpc.q = 50, 50` take a comma-separated list. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nsvb_core::dictionary::{NarxConfig, Scaling};
use nsvb_core::mpc::OffsetMode;
use nsvb_core::nsvb::Hyperpriors;
use nsvb_core::plant::PlantParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Multiplier on the base level; 0 gives exact measurements.
    pub mult: f64,
    pub level: f64,
    /// Read `level` as a variance (`N(0, level)`) rather than a std.
    pub level_is_variance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationConfig {
    pub u_low: [f64; 2],
    pub u_high: [f64; 2],
    /// Steps each input level is held.
    pub dwell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub degree: u32,
    pub bias: bool,
    /// Each model sees the lags of both outputs instead of only its own.
    pub cross_outputs: bool,
    pub scaling: Scaling,
    pub max_terms: usize,
    pub max_iter: usize,
    pub elbo_rel_tol: f64,
    pub prune_threshold: f64,
    pub prior: Hyperpriors,
}

impl ModelConfig {
    /// Regressor layout for the two-output, two-input plant.
    pub fn narx(&self) -> NarxConfig {
        NarxConfig {
            n_a: self.n_a,
            n_b: self.n_b,
            n_u: 2,
            n_y: if self.cross_outputs { 2 } else { 1 },
            degree: self.degree,
            include_bias: self.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSettings {
    pub n_p: usize,
    pub n_c: usize,
    pub q: [f64; 2],
    pub r: [f64; 2],
    pub eta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub y_ref: [f64; 2],
    pub y_low: [f64; 2],
    pub y_high: [f64; 2],
    /// Controller input box; defaults to the excitation envelope, inside
    /// which the learned models were trained.
    pub u_min: Option<[f64; 2]>,
    pub u_max: Option<[f64; 2]>,
    pub offset: OffsetMode,
    pub offset_gain: f64,
    pub measurement_gain: f64,
    pub max_iter: usize,
    pub lin_delta: f64,
    pub lag_weight: f64,
    pub redesign_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub noise: NoiseConfig,
    pub plant: PlantParams,
    /// Input held before excitation and before the first control move.
    pub nominal_input: [f64; 2],
    pub excitation: ExcitationConfig,
    pub train: usize,
    pub validation: usize,
    pub model: ModelConfig,
    pub mpc: MpcSettings,
    pub steps: usize,
    /// Closed-loop start: every temperature this far below its equilibrium
    /// value at the references.
    pub cold_offset: f64,
    /// Number of consecutive seeds run by `sweep`.
    pub sweep_seeds: usize,
    /// Final window used for tracking metrics.
    pub metric_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            noise: NoiseConfig { mult: 1.0, level: 0.7, level_is_variance: true },
            plant: PlantParams::default(),
            nominal_input: [0.5, 1.0],
            excitation: ExcitationConfig { u_low: [0.25, 0.4], u_high: [1.0, 1.6], dwell: 10 },
            train: 250,
            validation: 750,
            model: ModelConfig {
                n_a: 2,
                n_b: 0,
                degree: 1,
                bias: true,
                cross_outputs: true,
                scaling: Scaling::Affine,
                max_terms: nsvb_core::dictionary::DEFAULT_MAX_TERMS,
                max_iter: 500,
                elbo_rel_tol: 1e-6,
                prune_threshold: 1e4,
                prior: Hyperpriors::default(),
            },
            mpc: MpcSettings {
                n_p: 10,
                n_c: 10,
                q: [50.0, 50.0],
                r: [1.0, 1.0],
                eta: 100.0,
                rho: 1.0,
                lambda: 1.0,
                y_ref: [336.15, 343.15],
                y_low: [325.0, 325.0],
                y_high: [355.0, 355.0],
                u_min: None,
                u_max: None,
                offset: OffsetMode::Filtered,
                offset_gain: 0.05,
                measurement_gain: 1.0,
                max_iter: 200,
                lin_delta: 0.015,
                lag_weight: 1e-6,
                redesign_tol: 0.05,
            },
            steps: 3000,
            cold_offset: 10.0,
            sweep_seeds: 10,
            metric_window: 100,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>().map_err(|_| CliError::Usage(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse::<usize>().map_err(|_| CliError::Usage(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_pair(key: &str, v: &str) -> Result<[f64; 2], CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([parse_f64(key, a)?, parse_f64(key, b)?]),
        _ => Err(CliError::Usage(format!("{key}: expected two comma-separated numbers, got '{v}'"))),
    }
}

fn pair_text(p: [f64; 2]) -> String {
    format!("{}, {}", p[0], p[1])
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value, got '{raw}'", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{assignment}'")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let m = &mut self.model;
        let c = &mut self.mpc;
        match key {
            "seed" => self.seed = v.parse().map_err(|_| CliError::Usage(format!("seed: bad value '{v}'")))?,
            "out" => self.out = PathBuf::from(v),
            "noise.mult" => self.noise.mult = parse_f64(key, v)?,
            "noise.level" => self.noise.level = parse_f64(key, v)?,
            "noise.level_is_variance" => self.noise.level_is_variance = parse_bool(key, v)?,
            "plant.m_st" => self.plant.m_st = parse_f64(key, v)?,
            "plant.m_tank" => self.plant.m_tank = parse_f64(key, v)?,
            "plant.m_rad" => self.plant.m_rad = parse_f64(key, v)?,
            "plant.a_rad" => self.plant.a_rad = parse_f64(key, v)?,
            "plant.c_w" => self.plant.c_w = parse_f64(key, v)?,
            "plant.t_amb" => self.plant.t_amb = parse_f64(key, v)?,
            "plant.q_gen" => self.plant.q_gen = parse_f64(key, v)?,
            "plant.ua_tank" => self.plant.ua_tank = parse_f64(key, v)?,
            "plant.u_min" => self.plant.u_min = parse_pair(key, v)?,
            "plant.u_max" => self.plant.u_max = parse_pair(key, v)?,
            "plant.nominal_input" => self.nominal_input = parse_pair(key, v)?,
            "excitation.u_low" => self.excitation.u_low = parse_pair(key, v)?,
            "excitation.u_high" => self.excitation.u_high = parse_pair(key, v)?,
            "excitation.dwell" => self.excitation.dwell = parse_usize(key, v)?,
            "data.train" => self.train = parse_usize(key, v)?,
            "data.validation" => self.validation = parse_usize(key, v)?,
            "narx.n_a" => m.n_a = parse_usize(key, v)?,
            "narx.n_b" => m.n_b = parse_usize(key, v)?,
            "narx.degree" => {
                m.degree = u32::try_from(parse_usize(key, v)?).map_err(|_| CliError::Usage(format!("{key}: too large")))?
            }
            "narx.bias" => m.bias = parse_bool(key, v)?,
            "narx.cross_outputs" => m.cross_outputs = parse_bool(key, v)?,
            "narx.scaling" => {
                m.scaling = match v {
                    "affine" => Scaling::Affine,
                    "scale-only" => Scaling::ScaleOnly,
                    "none" => Scaling::None,
                    _ => return Err(CliError::Usage(format!("{key}: expected affine, scale-only or none, got '{v}'"))),
                }
            }
            "narx.max_terms" => m.max_terms = parse_usize(key, v)?,
            "fit.max_iter" => m.max_iter = parse_usize(key, v)?,
            "fit.elbo_rel_tol" => m.elbo_rel_tol = parse_f64(key, v)?,
            "fit.prune_threshold" => m.prune_threshold = parse_f64(key, v)?,
            "prior.a0" => m.prior.a0 = parse_f64(key, v)?,
            "prior.b0" => m.prior.b0 = parse_f64(key, v)?,
            "prior.c0" => m.prior.c0 = parse_f64(key, v)?,
            "prior.d0" => m.prior.d0 = parse_f64(key, v)?,
            "mpc.n_p" => c.n_p = parse_usize(key, v)?,
            "mpc.n_c" => c.n_c = parse_usize(key, v)?,
            "mpc.q" => c.q = parse_pair(key, v)?,
            "mpc.r" => c.r = parse_pair(key, v)?,
            "mpc.eta" => c.eta = parse_f64(key, v)?,
            "mpc.rho" => c.rho = parse_f64(key, v)?,
            "mpc.lambda" => c.lambda = parse_f64(key, v)?,
            "mpc.y_ref" => c.y_ref = parse_pair(key, v)?,
            "mpc.y_low" => c.y_low = parse_pair(key, v)?,
            "mpc.y_high" => c.y_high = parse_pair(key, v)?,
            "mpc.u_min" => c.u_min = Some(parse_pair(key, v)?),
            "mpc.u_max" => c.u_max = Some(parse_pair(key, v)?),
            "mpc.offset" => {
                c.offset = match v {
                    "filtered" => OffsetMode::Filtered,
                    "none" => OffsetMode::None,
                    _ => return Err(CliError::Usage(format!("{key}: expected filtered or none, got '{v}'"))),
                }
            }
            "mpc.offset_gain" => c.offset_gain = parse_f64(key, v)?,
            "mpc.measurement_gain" => c.measurement_gain = parse_f64(key, v)?,
            "mpc.max_iter" => c.max_iter = parse_usize(key, v)?,
            "mpc.lin_delta" => c.lin_delta = parse_f64(key, v)?,
            "mpc.lag_weight" => c.lag_weight = parse_f64(key, v)?,
            "mpc.redesign_tol" => c.redesign_tol = parse_f64(key, v)?,
            "run.steps" => self.steps = parse_usize(key, v)?,
            "run.cold_offset" => self.cold_offset = parse_f64(key, v)?,
            "run.metric_window" => self.metric_window = parse_usize(key, v)?,
            "sweep.seeds" => self.sweep_seeds = parse_usize(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.plant.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.model.prior.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.model.narx().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if !(self.noise.mult >= 0.0) || !(self.noise.level >= 0.0) {
            return Err(CliError::Usage("noise level and multiplier must be non-negative".into()));
        }
        if self.excitation.dwell == 0 {
            return Err(CliError::Usage("excitation.dwell must be at least 1".into()));
        }
        for i in 0..2 {
            let (lo, hi) = (self.excitation.u_low[i], self.excitation.u_high[i]);
            if !(lo <= hi && lo >= self.plant.u_min[i] && hi <= self.plant.u_max[i]) {
                return Err(CliError::Usage(format!("excitation range {i} [{lo}, {hi}] must lie inside the plant box")));
            }
            let (lo, hi) = self.controller_box();
            if !(lo[i] <= hi[i] && lo[i] >= self.plant.u_min[i] && hi[i] <= self.plant.u_max[i]) {
                return Err(CliError::Usage(format!("controller box {i} must lie inside the plant box")));
            }
        }
        if self.sweep_seeds == 0 {
            return Err(CliError::Usage("sweep.seeds must be positive".into()));
        }
        Ok(())
    }

    /// Input box handed to the controller.
    pub fn controller_box(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.mpc.u_min.unwrap_or(self.excitation.u_low),
            self.mpc.u_max.unwrap_or(self.excitation.u_high),
        )
    }

    /// The configuration in the same text format `apply_text` reads.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let c = &self.mpc;
        let (u_min, u_max) = self.controller_box();
        let scaling = match m.scaling {
            Scaling::Affine => "affine",
            Scaling::ScaleOnly => "scale-only",
            Scaling::None => "none",
        };
        let offset = match c.offset {
            OffsetMode::Filtered => "filtered",
            OffsetMode::None => "none",
        };
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("noise.mult", self.noise.mult.to_string());
        put("noise.level", self.noise.level.to_string());
        put("noise.level_is_variance", self.noise.level_is_variance.to_string());
        put("plant.m_st", self.plant.m_st.to_string());
        put("plant.m_tank", self.plant.m_tank.to_string());
        put("plant.m_rad", self.plant.m_rad.to_string());
        put("plant.a_rad", self.plant.a_rad.to_string());
        put("plant.c_w", self.plant.c_w.to_string());
        put("plant.t_amb", self.plant.t_amb.to_string());
        put("plant.q_gen", self.plant.q_gen.to_string());
        put("plant.ua_tank", self.plant.ua_tank.to_string());
        put("plant.u_min", pair_text(self.plant.u_min));
        put("plant.u_max", pair_text(self.plant.u_max));
        put("plant.nominal_input", pair_text(self.nominal_input));
        put("excitation.u_low", pair_text(self.excitation.u_low));
        put("excitation.u_high", pair_text(self.excitation.u_high));
        put("excitation.dwell", self.excitation.dwell.to_string());
        put("data.train", self.train.to_string());
        put("data.validation", self.validation.to_string());
        put("narx.n_a", m.n_a.to_string());
        put("narx.n_b", m.n_b.to_string());
        put("narx.degree", m.degree.to_string());
        put("narx.bias", m.bias.to_string());
        put("narx.cross_outputs", m.cross_outputs.to_string());
        put("narx.scaling", scaling.to_string());
        put("narx.max_terms", m.max_terms.to_string());
        put("fit.max_iter", m.max_iter.to_string());
        put("fit.elbo_rel_tol", m.elbo_rel_tol.to_string());
        put("fit.prune_threshold", m.prune_threshold.to_string());
        put("prior.a0", m.prior.a0.to_string());
        put("prior.b0", m.prior.b0.to_string());
        put("prior.c0", m.prior.c0.to_string());
        put("prior.d0", m.prior.d0.to_string());
        put("mpc.n_p", c.n_p.to_string());
        put("mpc.n_c", c.n_c.to_string());
        put("mpc.q", pair_text(c.q));
        put("mpc.r", pair_text(c.r));
        put("mpc.eta", c.eta.to_string());
        put("mpc.rho", c.rho.to_string());
        put("mpc.lambda", c.lambda.to_string());
        put("mpc.y_ref", pair_text(c.y_ref));
        put("mpc.y_low", pair_text(c.y_low));
        put("mpc.y_high", pair_text(c.y_high));
        put("mpc.u_min", pair_text(u_min));
        put("mpc.u_max", pair_text(u_max));
        put("mpc.offset", offset.to_string());
        put("mpc.offset_gain", c.offset_gain.to_string());
        put("mpc.measurement_gain", c.measurement_gain.to_string());
        put("mpc.max_iter", c.max_iter.to_string());
        put("mpc.lin_delta", c.lin_delta.to_string());
        put("mpc.lag_weight", c.lag_weight.to_string());
        put("mpc.redesign_tol", c.redesign_tol.to_string());
        put("run.steps", self.steps.to_string());
        put("run.cold_offset", self.cold_offset.to_string());
        put("run.metric_window", self.metric_window.to_string());
        put("sweep.seeds", self.sweep_seeds.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_comments() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# plant\nplant.m_st = 3.5\nmpc.q = 100, 40  # heavier\n\nnarx.scaling = scale-only\n").unwrap();
        assert_eq!(cfg.plant.m_st, 3.5);
        assert_eq!(cfg.mpc.q, [100.0, 40.0]);
        assert_eq!(cfg.model.scaling, Scaling::ScaleOnly);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_text("plant.m_stack = 2").unwrap_err();
        assert!(err.to_string().contains("plant.m_stack"));
        assert!(cfg.set("mpc.q", "1").is_err());
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("seed", "7").unwrap();
        cfg.set("mpc.offset", "none").unwrap();
        cfg.set("narx.degree", "2").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        let (lo, hi) = cfg.controller_box();
        cfg.mpc.u_min = Some(lo);
        cfg.mpc.u_max = Some(hi);
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.excitation.u_high = [70.0, 1.0];
        assert!(cfg.validate().is_err());
    }
}
