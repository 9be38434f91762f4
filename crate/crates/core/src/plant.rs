//! Three-temperature cooling loop of a fuel-cell stack: stack outlet,
//! water tank and radiator outlet, driven by pump flow `W_w` and fan air
//! flow `W_a`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{newton_root, rk4_step, NewtonOptions};

/// Sampling time of the loop (s).
pub const SAMPLE_TIME: f64 = 0.1;
/// Smallest pump flow used inside the radiator model (kg/s).
pub const PUMP_FLOOR: f64 = 1e-3;
/// Temperatures outside this band trigger a simulation warning (K).
pub const PLAUSIBLE_RANGE: (f64, f64) = (250.0, 450.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Coolant masses in the stack, tank and radiator (kg).
    pub m_st: f64,
    pub m_tank: f64,
    pub m_rad: f64,
    /// Radiator area (m²).
    pub a_rad: f64,
    /// Specific heat of water (J/(kg K)).
    pub c_w: f64,
    /// Ambient temperature (K).
    pub t_amb: f64,
    /// Nominal stack heat production (W).
    pub q_gen: f64,
    /// Tank-to-ambient heat-loss conductance (W/K); 0 gives an adiabatic tank.
    pub ua_tank: f64,
    /// Bounds on `[W_w, W_a]` (kg/s).
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
}

impl Default for PlantParams {
    /// Sized so that `(T_tank, T_out) = (336.15, 343.15)` K is the
    /// equilibrium at `W_w = 0.5`, `W_a = 1.0` with a 30 kW load.
    fn default() -> Self {
        Self {
            m_st: 2.0,
            m_tank: 5.0,
            m_rad: 1.0,
            a_rad: 93.105_375_932_054_46,
            c_w: 4184.0,
            t_amb: 298.15,
            q_gen: 30_000.0,
            ua_tank: 385.368_421_052_631_56,
            u_min: [0.0, 0.0],
            u_max: [60.0, 2.0],
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_st", self.m_st),
            ("m_tank", self.m_tank),
            ("m_rad", self.m_rad),
            ("a_rad", self.a_rad),
            ("c_w", self.c_w),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("plant.{name} must be positive, got {v}")));
        }
        if !(self.ua_tank >= 0.0) || !self.t_amb.is_finite() || !self.q_gen.is_finite() {
            return Err(Error::Config("plant.ua_tank must be non-negative; t_amb and q_gen finite".into()));
        }
        for i in 0..2 {
            if !(self.u_min[i] >= 0.0 && self.u_min[i] < self.u_max[i]) || !self.u_max[i].is_finite() {
                return Err(Error::Config(format!(
                    "input {} bounds [{}, {}] are not a valid non-negative interval",
                    i + 1,
                    self.u_min[i],
                    self.u_max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn clamp_input(&self, u: [f64; 2]) -> [f64; 2] {
        [u[0].clamp(self.u_min[0], self.u_max[0]), u[1].clamp(self.u_min[1], self.u_max[1])]
    }
}

/// Coolant temperatures (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Water tank.
    pub x1: f64,
    /// Stack inlet, after the radiator.
    pub x2: f64,
    /// Stack outlet.
    pub x3: f64,
}

impl PlantState {
    pub fn uniform(t: f64) -> Self {
        Self { x1: t, x2: t, x3: t }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { x1: x[0], x2: x[1], x3: x[2] }
    }

    /// Measured outputs `(T_tank, T_out)`.
    pub fn outputs(self) -> [f64; 2] {
        [self.x1, self.x3]
    }

    pub fn is_plausible(self) -> bool {
        self.to_array().iter().all(|t| (PLAUSIBLE_RANGE.0..=PLAUSIBLE_RANGE.1).contains(t))
    }
}

/// Radiator heat-transfer coefficient as a function of air flow.
pub fn h_rad(w_a: f64) -> f64 {
    -1.4495 * w_a * w_a + 5.9045 * w_a - 0.1147
}

/// Radiator temperature drop; `saturated` is set when the pump flow is not
/// positive and the drop is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureDrop {
    pub value: f64,
    pub saturated: bool,
}

pub fn delta_t(p: &PlantParams, x1: f64, w_w: f64, w_a: f64) -> TemperatureDrop {
    if !(w_w > 0.0) {
        return TemperatureDrop { value: 0.0, saturated: true };
    }
    TemperatureDrop { value: p.a_rad * (x1 - p.t_amb) * h_rad(w_a) / (p.c_w * w_w), saturated: false }
}

/// Right-hand side of the three energy balances under load `q_gen` (W).
pub fn dynamics(p: &PlantParams, x: &PlantState, u: [f64; 2], q_gen: f64) -> Result<[f64; 3]> {
    let w_w = u[0].max(PUMP_FLOOR);
    let w_a = u[1];
    let drop = delta_t(p, x.x1, w_w, w_a).value;
    let dx1 = w_w / p.m_tank * (x.x3 - x.x1) - p.ua_tank * (x.x1 - p.t_amb) / (p.m_tank * p.c_w);
    let dx2 = w_w / p.m_rad * (x.x1 - x.x2 - drop);
    let dx3 = -w_w / p.m_st * (x.x3 - x.x2) + q_gen / (p.m_st * p.c_w);
    let dx = [dx1, dx2, dx3];
    match dx.iter().position(|v| !v.is_finite()) {
        Some(component) => Err(Error::Integration { component }),
        None => Ok(dx),
    }
}

/// One RK4 step of length `dt` with the input held constant.
pub fn integrate(p: &PlantParams, x: &PlantState, u: [f64; 2], q_gen: f64, dt: f64) -> Result<PlantState> {
    let f = |s: &[f64], v: &[f64]| {
        dynamics(p, &PlantState::from_slice(s), [v[0], v[1]], q_gen)
            .map(|d| d.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; 3])
    };
    let next = rk4_step(f, &x.to_array(), &u, dt)?;
    Ok(PlantState::from_slice(&next))
}

/// Equilibrium temperatures for a constant input and load.
pub fn steady_state(p: &PlantParams, u: [f64; 2], q_gen: f64) -> Result<PlantState> {
    let g = |x: &[f64]| {
        dynamics(p, &PlantState::from_slice(x), u, q_gen)
            .map(|d| d.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; 3])
    };
    let guess = vec![p.t_amb + 30.0; 3];
    let x = newton_root(g, &guess, NewtonOptions::default())?;
    Ok(PlantState::from_slice(&x))
}

/// Inputs `[W_w, W_a]` and inlet temperature that hold the outputs at
/// `(x1, x3)`.
pub fn steady_inputs(p: &PlantParams, x1: f64, x3: f64, q_gen: f64) -> Result<([f64; 2], PlantState)> {
    let g = |v: &[f64]| {
        let x = PlantState { x1, x2: v[0], x3 };
        dynamics(p, &x, [v[1], v[2]], q_gen)
            .map(|d| d.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; 3])
    };
    let w_mid = 0.5;
    let guess = vec![x3 - q_gen / (p.c_w * w_mid), w_mid, 1.0];
    let v = newton_root(g, &guess, NewtonOptions::default())?;
    Ok(([v[1], v[2]], PlantState { x1, x2: v[0], x3 }))
}

/// Piecewise-constant heat load: `(start_time_s, q_gen_W)` breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub segments: Vec<(f64, f64)>,
}

impl LoadProfile {
    pub fn constant(q: f64) -> Self {
        Self { segments: vec![(0.0, q)] }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.segments.iter().take_while(|(start, _)| *start <= t).last().or(self.segments.first()).map_or(0.0, |s| s.1)
    }
}

/// Standard deviation of the measurement noise from the nominal level 0.7,
/// read either as a variance or directly as a standard deviation.
pub fn noise_std(level: f64, level_is_variance: bool, multiplier: f64) -> f64 {
    let base = if level_is_variance { level.sqrt() } else { level };
    base * multiplier
}

/// One sample of the simulated loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: PlantState,
    pub input: [f64; 2],
    pub measured: [f64; 2],
}

/// Plant with its own noise stream, stepped at a fixed sampling time.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub params: PlantParams,
    pub load: LoadProfile,
    pub dt: f64,
    state: PlantState,
    t: f64,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    warned: bool,
}

impl Simulator {
    pub fn new(params: PlantParams, x0: PlantState, noise_std: f64, seed: u64, stream: u64) -> Result<Self> {
        params.validate()?;
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::Config(format!("noise standard deviation must be non-negative, got {noise_std}")));
        }
        let noise = if noise_std > 0.0 {
            Some(Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            params,
            load: LoadProfile::constant(params.q_gen),
            dt: SAMPLE_TIME,
            state: x0,
            t: 0.0,
            noise,
            rng,
            warned: false,
        })
    }

    pub fn with_load(mut self, load: LoadProfile) -> Self {
        self.load = load;
        self
    }

    pub fn state(&self) -> PlantState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Measurement of the current state.
    pub fn measure(&mut self) -> [f64; 2] {
        let mut y = self.state.outputs();
        if let Some(n) = &self.noise {
            for v in &mut y {
                *v += n.sample(&mut self.rng);
            }
        }
        y
    }

    /// Applies `u` (clamped to the bounds) for one sampling interval and
    /// returns the new state with its measurement.
    pub fn step(&mut self, u: [f64; 2]) -> Result<Sample> {
        let u = self.params.clamp_input(u);
        let q = self.load.at(self.t);
        self.state = integrate(&self.params, &self.state, u, q, self.dt)?;
        self.t += self.dt;
        if !self.warned && !self.state.is_plausible() {
            log::warn!("plant state {:?} left the plausible range at t = {:.1} s", self.state, self.t);
            self.warned = true;
        }
        let measured = self.measure();
        Ok(Sample { t: self.t, state: self.state, input: u, measured })
    }
}
