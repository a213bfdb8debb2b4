//! Synthetic quadruped logs with exact ground truth.
//!
//! The body follows a smooth nominal motion: forward speed along the heading
//! ramping up to `stride * cadence`, a constant turn rate, a yaw sway at the
//! cadence and a vertical bob at twice the cadence. IMU samples are drawn from the nominal motion and the ground
//! truth is their exact zero-order-hold integral, so a noiseless log is
//! consistent with the estimators' motion model to rounding. Feet follow a
//! trot (diagonal pairs half a cycle apart) or stand still.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ContactPacket;
use crate::factors::{ContactMeasurement, EpisodeKey, FootId};
use crate::imu::{ImuBias, ImuSample, NoiseConfig};
use crate::io::{write_log, write_trajectory, GroundTruthPose, LogRecord, Pose};
use crate::liegroup::{so3, Rot3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Trot,
    Stand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub gait: Gait,
    /// s
    pub duration: f64,
    /// Hz
    pub imu_rate: f64,
    /// Hz, must divide `imu_rate`.
    pub contact_rate: f64,
    /// Hz, must divide `imu_rate`.
    pub gt_rate: f64,
    /// Gait cycles per second.
    pub cadence: f64,
    /// Distance travelled per gait cycle, m.
    pub stride: f64,
    /// Fraction of the cycle each foot spends in stance.
    pub duty: f64,
    pub feet: usize,
    /// Height of the body above the ground, m.
    pub body_height: f64,
    /// Half-length and half-width of the hip rectangle, m.
    pub hip_x: f64,
    pub hip_y: f64,
    /// Time to reach walking speed from rest, s. Zero starts at full speed.
    pub ramp: f64,
    /// m
    pub bob_amplitude: f64,
    /// rad
    pub yaw_amplitude: f64,
    /// Constant heading rate, rad/s.
    pub turn_rate: f64,
    /// Gravity magnitude, m/s².
    pub gravity: f64,
    pub seed: u64,
    /// Adds white noise and a constant IMU bias.
    pub noise: bool,
    /// Noise densities used when `noise` is set. Only the IMU densities and
    /// `contact_sigma` are used.
    pub noise_model: NoiseConfig,
    /// Constant IMU bias used when `noise` is set.
    pub bias: ImuBias,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            gait: Gait::Trot,
            duration: 10.0,
            imu_rate: 400.0,
            contact_rate: 200.0,
            gt_rate: 100.0,
            cadence: 2.0,
            stride: 0.25,
            duty: 0.6,
            feet: 4,
            body_height: 0.5,
            hip_x: 0.35,
            hip_y: 0.2,
            ramp: 1.0,
            bob_amplitude: 0.005,
            yaw_amplitude: 0.05,
            turn_rate: 0.05,
            gravity: -crate::imu::DEFAULT_GRAVITY[2],
            seed: 0,
            noise: false,
            noise_model: NoiseConfig {
                contact_sigma: 0.005,
                ..NoiseConfig::default()
            },
            bias: ImuBias::new(Vector3::new(1e-3, -5e-4, 8e-4), Vector3::new(0.02, -0.015, 0.03)),
        }
    }
}

fn divides(rate: f64, base: f64) -> bool {
    let ratio = base / rate;
    (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0
}

impl SyntheticConfig {
    /// A robot standing still on all feet.
    pub fn stand() -> Self {
        Self {
            gait: Gait::Stand,
            ramp: 0.0,
            ..Self::default()
        }
    }

    pub fn speed(&self) -> f64 {
        match self.gait {
            Gait::Trot => self.stride * self.cadence,
            Gait::Stand => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("imu_rate", self.imu_rate),
            ("contact_rate", self.contact_rate),
            ("gt_rate", self.gt_rate),
            ("cadence", self.cadence),
            ("body_height", self.body_height),
            ("gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        let non_negative = [
            ("stride", self.stride),
            ("ramp", self.ramp),
            ("bob_amplitude", self.bob_amplitude),
            ("yaw_amplitude", self.yaw_amplitude),
            ("turn_rate", self.turn_rate.abs()),
            ("hip_x", self.hip_x),
            ("hip_y", self.hip_y),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {value}")));
            }
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::Config(format!("duty must lie in (0, 1), got {}", self.duty)));
        }
        if self.feet < 2 || self.feet % 2 != 0 {
            return Err(Error::Config(format!("feet must be even and at least 2, got {}", self.feet)));
        }
        if !divides(self.contact_rate, self.imu_rate) || !divides(self.gt_rate, self.imu_rate) {
            return Err(Error::Config("contact_rate and gt_rate must divide imu_rate".into()));
        }
        if self.noise {
            self.noise_model.validate()?;
        }
        Ok(())
    }

    /// Hip offset of `foot` in the body frame. Feet are numbered front to
    /// back, left before right.
    pub fn hip(&self, foot: usize) -> Vector3<f64> {
        let rows = self.feet / 2;
        let row = foot / 2;
        let x = if rows == 1 {
            0.0
        } else {
            self.hip_x * (1.0 - 2.0 * row as f64 / (rows - 1) as f64)
        };
        let y = if foot % 2 == 0 { self.hip_y } else { -self.hip_y };
        Vector3::new(x, y, 0.0)
    }

    /// Stance episode of `foot` at `t`, if in stance.
    pub fn episode(&self, foot: usize, t: f64) -> Option<i64> {
        match self.gait {
            Gait::Stand => Some(0),
            Gait::Trot => {
                let group = (foot / 2 + foot % 2) % 2;
                let cycles = t * self.cadence - 0.5 * group as f64;
                let m = cycles.floor();
                (cycles - m < self.duty).then_some(m as i64)
            }
        }
    }

    fn episode_midpoint(&self, foot: usize, episode: i64) -> f64 {
        match self.gait {
            Gait::Stand => 0.0,
            Gait::Trot => {
                let group = (foot / 2 + foot % 2) % 2;
                (episode as f64 + 0.5 * group as f64 + 0.5 * self.duty) / self.cadence
            }
        }
    }

    fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }

    /// Nominal world acceleration and body angular rate at `t`.
    fn nominal(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.gait == Gait::Stand {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let top = self.speed();
        let (speed, speed_rate) = if self.ramp > 0.0 && t < self.ramp {
            let x = PI * t / self.ramp;
            (0.5 * top * (1.0 - x.cos()), top * PI / (2.0 * self.ramp) * x.sin())
        } else {
            (top, 0.0)
        };
        let wy = 2.0 * PI * self.cadence;
        let heading = self.turn_rate * t + self.yaw_amplitude * (1.0 - (wy * t).cos());
        let heading_rate = self.turn_rate + self.yaw_amplitude * wy * (wy * t).sin();
        let (sin, cos) = heading.sin_cos();
        let wb = 4.0 * PI * self.cadence;
        let accel = Vector3::new(
            speed_rate * cos - speed * heading_rate * sin,
            speed_rate * sin + speed * heading_rate * cos,
            self.bob_amplitude * wb * wb * (wb * t).cos(),
        );
        (accel, Vector3::new(0.0, 0.0, heading_rate))
    }

    fn initial_velocity(&self) -> Vector3<f64> {
        if self.ramp > 0.0 {
            Vector3::zeros()
        } else {
            Vector3::new(self.speed(), 0.0, 0.0)
        }
    }
}

/// True body state at one IMU tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub rotation: Rot3,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub records: Vec<LogRecord>,
    pub ground_truth: Vec<Pose>,
    /// Truth at every IMU tick.
    pub states: Vec<TruthState>,
    /// World foothold of every stance episode, keyed by episode index
    /// (counting from zero at the first episode in the log).
    pub footholds: BTreeMap<EpisodeKey, Vector3<f64>>,
}

impl SyntheticLog {
    /// Writes `log.jsonl` and `groundtruth.tum` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_log(dir.join("log.jsonl"), &self.records)?;
        write_trajectory(dir.join("groundtruth.tum"), &self.ground_truth)
    }
}

/// Exact integration of a held body rate and specific force over `dt`.
fn integrate(s: &TruthState, omega: &Vector3<f64>, f: &Vector3<f64>, g: &Vector3<f64>, dt: f64) -> TruthState {
    let theta = omega * dt;
    let r = s.rotation.matrix();
    TruthState {
        t: s.t + dt,
        rotation: Rot3::from_matrix_unchecked(r * so3::exp(&theta).matrix()).normalized(),
        position: s.position + s.velocity * dt + g * (0.5 * dt * dt) + r * so3::gamma_left(&theta) * f * (dt * dt),
        velocity: s.velocity + g * dt + r * so3::left_jacobian(&theta) * f * dt,
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticLog> {
    config.validate()?;
    let dt = 1.0 / config.imu_rate;
    let ticks = (config.duration * config.imu_rate).round() as usize;
    let contact_every = (config.imu_rate / config.contact_rate).round() as usize;
    let gt_every = (config.imu_rate / config.gt_rate).round() as usize;
    let g = config.gravity_vector();

    // Clean samples and the truth they integrate to.
    let mut states = Vec::with_capacity(ticks + 1);
    let mut samples = Vec::with_capacity(ticks + 1);
    let mut state = TruthState {
        t: 0.0,
        rotation: Rot3::identity(),
        position: Vector3::zeros(),
        velocity: config.initial_velocity(),
    };
    for k in 0..=ticks {
        let t = k as f64 * dt;
        state.t = t;
        let (accel, omega) = config.nominal(t + 0.5 * dt);
        let f = state.rotation.transpose() * (accel - g);
        samples.push(ImuSample::new(t, omega, f));
        states.push(state);
        state = integrate(&state, &omega, &f, &g, dt);
    }

    // Footholds at mid-stance, on the ground.
    let mut raw_footholds: BTreeMap<(usize, i64), Vector3<f64>> = BTreeMap::new();
    for k in (0..=ticks).step_by(contact_every) {
        let t = k as f64 * dt;
        for foot in 0..config.feet {
            if let Some(m) = config.episode(foot, t) {
                raw_footholds.entry((foot, m)).or_insert_with(|| {
                    let mid = config.episode_midpoint(foot, m).clamp(0.0, ticks as f64 * dt);
                    let s = &states[(mid / dt).round() as usize];
                    let mut f = s.position + s.rotation.matrix() * config.hip(foot);
                    f.z = -config.body_height;
                    f
                });
            }
        }
    }
    let mut first_episode = BTreeMap::new();
    for &(foot, m) in raw_footholds.keys() {
        first_episode.entry(foot).or_insert(m);
    }
    let episode_key = |foot: usize, m: i64| EpisodeKey::new(foot as FootId, (m - first_episode[&foot]) as u32);
    let footholds = raw_footholds
        .iter()
        .map(|(&(foot, m), f)| (episode_key(foot, m), *f))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut gauss = |sigma: f64| Vector3::from_fn(|_, _| sigma * unit.sample(&mut rng));
    let (gyro_sigma, accel_sigma) = (
        config.noise_model.gyro_noise * config.imu_rate.sqrt(),
        config.noise_model.accel_noise * config.imu_rate.sqrt(),
    );

    let mut records = Vec::new();
    let mut ground_truth = Vec::new();
    let mut previous: BTreeMap<usize, i64> = BTreeMap::new();
    for k in 0..=ticks {
        let s = &states[k];
        let mut sample = samples[k];
        if config.noise {
            sample.gyro += config.bias.gyro + gauss(gyro_sigma);
            sample.accel += config.bias.accel + gauss(accel_sigma);
        }
        records.push(LogRecord::Imu(sample));

        if k % contact_every == 0 {
            let mut feet = Vec::new();
            let mut current = BTreeMap::new();
            for foot in 0..config.feet {
                let Some(m) = config.episode(foot, s.t) else { continue };
                let mut point = s.rotation.transpose() * (raw_footholds[&(foot, m)] - s.position);
                if config.noise {
                    point += gauss(config.noise_model.contact_sigma);
                }
                feet.push(ContactMeasurement {
                    foot: foot as FootId,
                    point,
                    touchdown: previous.get(&foot) != Some(&m),
                });
                current.insert(foot, m);
            }
            previous = current;
            records.push(LogRecord::Contact(ContactPacket::new(s.t, feet)));
        }

        if k % gt_every == 0 {
            records.push(LogRecord::GroundTruth(GroundTruthPose {
                t: s.t,
                position: s.position,
                rotation: s.rotation,
            }));
            ground_truth.push(Pose::new(s.t, s.position, s.rotation));
        }
    }

    Ok(SyntheticLog {
        records,
        ground_truth,
        states,
        footholds,
    })
}
