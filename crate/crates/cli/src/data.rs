//! Excitation, data generation and the dataset CSV.

use std::path::Path;

use nsvb_core::plant::{noise_std, steady_state, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// RNG sub-streams derived from the run seed.
pub mod streams {
    pub const EXCITATION: u64 = 1;
    pub const DATA_NOISE: u64 = 2;
    pub const LOOP_NOISE: u64 = 4;
}

/// Controlled outputs in channel order.
pub const OUTPUTS: [&str; 2] = ["t_tank", "t_out"];

/// Multilevel pseudo-random input: every `dwell` steps each input jumps to
/// a fresh level drawn uniformly from its range.
#[derive(Debug, Clone)]
pub struct Excitation {
    rng: ChaCha8Rng,
    low: [f64; 2],
    high: [f64; 2],
    dwell: usize,
    level: [f64; 2],
    k: usize,
}

impl Excitation {
    pub fn new(seed: u64, low: [f64; 2], high: [f64; 2], dwell: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(streams::EXCITATION);
        Self { rng, low, high, dwell: dwell.max(1), level: low, k: 0 }
    }

    pub fn next_input(&mut self) -> [f64; 2] {
        if self.k.is_multiple_of(self.dwell) {
            for i in 0..2 {
                self.level[i] = if self.high[i] > self.low[i] {
                    self.rng.random_range(self.low[i]..=self.high[i])
                } else {
                    self.low[i]
                };
            }
        }
        self.k += 1;
        self.level
    }
}

/// One sampling instant: input applied at `k`, measured and true
/// temperatures at `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub k: usize,
    #[serde(rename = "t_s")]
    pub t: f64,
    #[serde(rename = "w_w_kg_s")]
    pub w_w: f64,
    #[serde(rename = "w_a_kg_s")]
    pub w_a: f64,
    #[serde(rename = "t_tank_meas_K")]
    pub t_tank_meas: f64,
    #[serde(rename = "t_out_meas_K")]
    pub t_out_meas: f64,
    #[serde(rename = "t_tank_K")]
    pub t_tank: f64,
    #[serde(rename = "t_in_K")]
    pub t_in: f64,
    #[serde(rename = "t_out_K")]
    pub t_out: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Measured outputs, channel-major.
    pub fn outputs(&self) -> Vec<Vec<f64>> {
        vec![
            self.rows.iter().map(|r| r.t_tank_meas).collect(),
            self.rows.iter().map(|r| r.t_out_meas).collect(),
        ]
    }

    /// Noise-free outputs, channel-major.
    pub fn clean_outputs(&self) -> Vec<Vec<f64>> {
        vec![self.rows.iter().map(|r| r.t_tank).collect(), self.rows.iter().map(|r| r.t_out).collect()]
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        vec![self.rows.iter().map(|r| r.w_w).collect(), self.rows.iter().map(|r| r.w_a).collect()]
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        if self.rows.is_empty() {
            w.write_record(["k", "t_s", "w_w_kg_s", "w_a_kg_s", "t_tank_meas_K", "t_out_meas_K", "t_tank_K", "t_in_K", "t_out_K"])?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn read_csv(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<Result<Vec<DataRow>, _>>()?;
        if rows.iter().any(|r| {
            [r.t, r.w_w, r.w_a, r.t_tank_meas, r.t_out_meas, r.t_tank, r.t_in, r.t_out].iter().any(|v| !v.is_finite())
        }) {
            return Err(CliError::Usage(format!("{} contains non-finite values", path.display())));
        }
        Ok(Self { rows })
    }
}

/// Excites the plant from its equilibrium at the nominal input and records
/// `train + validation` samples.
pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let p = cfg.plant;
    let x0 = steady_state(&p, cfg.nominal_input, p.q_gen)
        .map_err(|e| CliError::numeric("plant equilibrium at the nominal input", e))?;
    let sd = noise_std(cfg.noise.level, cfg.noise.level_is_variance, cfg.noise.mult);
    let mut sim = Simulator::new(p, x0, sd, cfg.seed, streams::DATA_NOISE)
        .map_err(|e| CliError::numeric("plant simulator", e))?;
    let mut exc = Excitation::new(cfg.seed, cfg.excitation.u_low, cfg.excitation.u_high, cfg.excitation.dwell);
    let n = cfg.train + cfg.validation;
    let mut rows = Vec::with_capacity(n);
    let mut y = sim.measure();
    for k in 0..n {
        let u = exc.next_input();
        let x = sim.state();
        rows.push(DataRow {
            k,
            t: sim.time(),
            w_w: u[0],
            w_a: u[1],
            t_tank_meas: y[0],
            t_out_meas: y[1],
            t_tank: x.x1,
            t_in: x.x2,
            t_out: x.x3,
        });
        y = sim.step(u).map_err(|e| CliError::numeric(format!("plant step {k}"), e))?.measured;
    }
    Ok(Dataset { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excitation_holds_levels_inside_range() {
        let mut e = Excitation::new(3, [0.25, 0.4], [1.0, 1.6], 10);
        let seq: Vec<[f64; 2]> = (0..100).map(|_| e.next_input()).collect();
        for block in seq.chunks(10) {
            assert!(block.iter().all(|u| *u == block[0]));
        }
        assert!(seq.iter().all(|u| (0.25..=1.0).contains(&u[0]) && (0.4..=1.6).contains(&u[1])));
        assert_ne!(seq[0], seq[10]);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = ExperimentConfig { train: 20, validation: 5, ..ExperimentConfig::default() };
        let d = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        d.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("k,t_s,w_w_kg_s,w_a_kg_s,t_tank_meas_K"));
    }

    #[test]
    fn empty_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        Dataset::default().write_csv(&path).unwrap();
        assert!(Dataset::read_csv(&path).unwrap().is_empty());
    }
}
