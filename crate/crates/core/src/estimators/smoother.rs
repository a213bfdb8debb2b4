use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{
    full_contact, validate_packet, ContactPacket, Estimate, Estimator, EstimatorConfig, ImuClock, Scheduler,
    Variant,
};
use crate::error::{Error, Result};
use crate::estimation::{
    lm_optimize_ordered, marginalize_window, Key, NoiseModel, SharedFactor, Values, Variable,
};
use crate::factors::{
    CombinedImuFactor, EpisodeKey, FootId, ImuFactor, LandmarkContactFactor, LandmarkHeightFactor, PriorFactor,
};
use crate::imu::{predict, ImuBias, ImuSample, PreintegratedImu, SlotMap};
use crate::liegroup::SEK3;

/// Shortest preintegration interval that creates a new base state.
const MIN_EVENT_SPACING: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Event {
    index: u64,
    t: f64,
}

/// Fixed-lag smoother over contact-event base states `(R, p, v)`, tied by
/// preintegrated IMU factors, with one navigation-frame landmark per contact
/// episode.
///
/// `FlSingle` keeps one bias variable for the whole run; `FlCombined` adds a
/// bias per event chained by a random walk.
#[derive(Debug, Clone)]
pub struct FixedLagSmoother {
    config: EstimatorConfig,
    variant: Variant,
    gravity: Vector3<f64>,
    values: Values,
    factors: Vec<SharedFactor>,
    events: VecDeque<Event>,
    next_index: u64,
    bias: ImuBias,
    pim: PreintegratedImu,
    dead_reckoned: SEK3,
    latest_covariance: DMatrix<f64>,
    active_episodes: BTreeMap<FootId, EpisodeKey>,
    episode_counters: HashMap<FootId, u32>,
    last_seen: HashMap<EpisodeKey, u64>,
    closed: BTreeSet<EpisodeKey>,
    initialized: bool,
    clock: ImuClock,
    scheduler: Scheduler,
    updates: usize,
}

impl FixedLagSmoother {
    pub fn new(config: EstimatorConfig, variant: Variant) -> Result<Self> {
        config.validate()?;
        if !matches!(variant, Variant::FlSingle | Variant::FlCombined) {
            return Err(Error::Config(format!("{variant} is not a smoother variant")));
        }
        Ok(Self {
            gravity: config.gravity(),
            values: Values::new(),
            factors: Vec::new(),
            events: VecDeque::new(),
            next_index: 0,
            bias: config.bias,
            pim: PreintegratedImu::new(config.bias, config.noise),
            dead_reckoned: SEK3::identity(2),
            latest_covariance: DMatrix::zeros(9, 9),
            active_episodes: BTreeMap::new(),
            episode_counters: HashMap::new(),
            last_seen: HashMap::new(),
            closed: BTreeSet::new(),
            initialized: false,
            clock: ImuClock::default(),
            scheduler: Scheduler::new(config.max_update_interval),
            updates: 0,
            config,
            variant,
        })
    }

    fn combined(&self) -> bool {
        self.variant == Variant::FlCombined
    }

    fn bias_key(&self, index: u64) -> Key {
        if self.combined() {
            Key::Bias(index)
        } else {
            Key::Bias(0)
        }
    }

    /// Current variable values of the window.
    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn factors(&self) -> &[SharedFactor] {
        &self.factors
    }

    /// Timestamps of the base states in the window, oldest first.
    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }

    /// Bias estimate at the latest event.
    pub fn bias(&self) -> ImuBias {
        self.bias
    }

    /// Landmark of `foot`'s current contact episode.
    pub fn active_episode(&self, foot: FootId) -> Option<EpisodeKey> {
        self.active_episodes.get(&foot).copied()
    }

    fn latest(&self) -> Event {
        *self.events.back().expect("initialized smoother has an event")
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        if let Some((sample, dt)) = self.clock.span_to(t) {
            self.pim.integrate(&sample, dt)?;
            self.dead_reckoned = predict(&self.dead_reckoned, &sample, &self.bias, &self.gravity, dt, SlotMap::default())?.0;
        }
        self.clock.time = Some(t);
        Ok(())
    }

    fn contact_noise(&self) -> NoiseModel {
        let noise = NoiseModel::isotropic(3, self.config.noise.contact_sigma);
        if self.config.robust_contact {
            noise.with_huber(self.config.huber_threshold)
        } else {
            noise
        }
    }

    fn open_episode(&mut self, foot: FootId, nav: &SEK3, z: &Vector3<f64>) -> EpisodeKey {
        if let Some(old) = self.active_episodes.remove(&foot) {
            self.closed.insert(old);
        }
        let counter = self.episode_counters.entry(foot).or_insert(0);
        let episode = EpisodeKey::new(foot, *counter);
        *counter += 1;
        let f = nav.column(0) + nav.rotation().matrix() * z;
        let key = Key::Landmark(episode);
        self.values
            .insert(key, Variable::Vector(DVector::from_column_slice(f.as_slice())));
        self.factors.push(Arc::new(PriorFactor::new(
            key,
            Variable::Vector(DVector::from_column_slice(f.as_slice())),
            NoiseModel::isotropic(3, self.config.noise.foothold_init_sigma),
        )));
        if self.config.height_prior {
            self.factors.push(Arc::new(LandmarkHeightFactor::new(
                key,
                self.config.terrain_height,
                self.config.noise.height_sigma,
            )));
        }
        self.active_episodes.insert(foot, episode);
        episode
    }

    fn add_contacts(&mut self, index: u64, packet: &ContactPacket) {
        for m in &packet.feet {
            let episode = self.active_episodes[&m.foot];
            self.factors.push(Arc::new(LandmarkContactFactor::new(
                Key::Nav(index),
                Key::Landmark(episode),
                m.point,
                self.contact_noise(),
            )));
            self.last_seen.insert(episode, index);
        }
    }

    fn initialize(&mut self, packet: &ContactPacket) -> Result<()> {
        let init = self.config.initial;
        let x0 = SEK3::new(init.rotation(), vec![init.position(), init.velocity()]);
        let cov = init.covariance();
        self.values.insert(Key::Nav(0), Variable::Group(x0.clone()));
        self.factors.push(Arc::new(PriorFactor::from_covariance(
            Key::Nav(0),
            Variable::Group(x0.clone()),
            &cov,
        )?));
        let b = DVector::from_column_slice(self.bias.to_vector().as_slice());
        self.values.insert(Key::Bias(0), Variable::Vector(b.clone()));
        self.factors.push(Arc::new(PriorFactor::new(
            Key::Bias(0),
            Variable::Vector(b),
            NoiseModel::diagonal(&init.bias_sigmas()),
        )));
        for m in &packet.feet {
            self.open_episode(m.foot, &x0, &m.point);
        }
        self.add_contacts(0, packet);
        self.events.push_back(Event { index: 0, t: packet.t });
        self.next_index = 1;
        self.dead_reckoned = x0;
        self.latest_covariance = cov;
        self.pim = PreintegratedImu::new(self.bias, self.config.noise);
        self.initialized = true;
        self.clock.time = Some(packet.t);
        self.scheduler.commit(packet);
        Ok(())
    }

    /// Adds a base state at the packet time, or reuses the latest one when no
    /// time has passed since it.
    fn new_event(&mut self, t: f64) -> Result<u64> {
        let prev = self.latest();
        if self.pim.delta_t() < MIN_EVENT_SPACING {
            return Ok(prev.index);
        }
        let index = self.next_index;
        self.next_index += 1;
        self.values
            .insert(Key::Nav(index), Variable::Group(self.dead_reckoned.clone()));
        let pim = Arc::new(std::mem::replace(
            &mut self.pim,
            PreintegratedImu::new(self.bias, self.config.noise),
        ));
        if self.combined() {
            let b = DVector::from_column_slice(self.bias.to_vector().as_slice());
            self.values.insert(Key::Bias(index), Variable::Vector(b));
            self.factors.push(Arc::new(CombinedImuFactor::new(
                Key::Nav(prev.index),
                Key::Nav(index),
                Key::Bias(prev.index),
                Key::Bias(index),
                pim,
                self.gravity,
            )?));
        } else {
            self.factors.push(Arc::new(ImuFactor::new(
                Key::Nav(prev.index),
                Key::Nav(index),
                Key::Bias(0),
                pim,
                self.gravity,
            )?));
        }
        self.events.push_back(Event { index, t });
        Ok(index)
    }

    fn optimize(&mut self, index: u64) -> Result<()> {
        let trailing: Vec<Key> = if self.combined() { vec![] } else { vec![Key::Bias(0)] };
        let result = lm_optimize_ordered(&self.factors, &self.values, &self.config.lm, &trailing)?;
        self.latest_covariance = result.marginal_covariance(&[Key::Nav(index)])?;
        self.values = result.values;
        let b = self.values.vector(&self.bias_key(index))?;
        self.bias = ImuBias::from_slice(b.as_slice());
        Ok(())
    }

    /// Marginalizes base states older than the lag, with their biases and any
    /// closed landmark that no retained state observes.
    fn marginalize_old(&mut self, now: f64) -> Result<()> {
        let cutoff = now - self.config.lag;
        let mut drop = Vec::new();
        let mut dropped_events = BTreeSet::new();
        while self.events.len() > 1 && self.events.front().is_some_and(|e| e.t < cutoff) {
            let e = self.events.pop_front().expect("non-empty");
            drop.push(Key::Nav(e.index));
            if self.combined() {
                drop.push(Key::Bias(e.index));
            }
            dropped_events.insert(e.index);
        }
        if drop.is_empty() {
            return Ok(());
        }
        let oldest = self.latest().index.min(self.events.front().expect("kept").index);
        let stale: Vec<EpisodeKey> = self
            .closed
            .iter()
            .filter(|e| self.last_seen.get(e).map_or(true, |&i| i < oldest))
            .copied()
            .collect();
        for e in &stale {
            drop.push(Key::Landmark(*e));
        }
        let m = marginalize_window(&self.factors, &self.values, &drop)?;
        self.factors = m.remaining;
        if let Some(prior) = m.prior {
            self.factors.push(Arc::new(prior));
        }
        for key in &drop {
            self.values.remove(key);
        }
        for e in stale {
            self.closed.remove(&e);
            self.last_seen.remove(&e);
        }
        Ok(())
    }

    fn latest_nav(&self) -> Result<SEK3> {
        Ok(self.values.group(&Key::Nav(self.latest().index))?.clone())
    }
}

impl Estimator for FixedLagSmoother {
    fn variant(&self) -> Variant {
        self.variant
    }

    fn is_initialized(&self) -> bool {
        self.initialized
    }

    fn process_imu(&mut self, sample: &ImuSample) -> Result<()> {
        self.clock.check_sample(sample)?;
        if self.initialized {
            self.advance_to(sample.t)?;
        } else {
            self.clock.time = Some(sample.t);
        }
        self.clock.held = Some(*sample);
        Ok(())
    }

    fn process_contact(&mut self, packet: &ContactPacket) -> Result<bool> {
        validate_packet(&self.config.feet, packet)?;
        self.clock.check(packet.t, "contact packet")?;
        if !self.initialized {
            if full_contact(&self.config.feet, packet) {
                self.initialize(packet)?;
            } else {
                self.clock.time = Some(packet.t);
            }
            return Ok(false);
        }
        self.advance_to(packet.t)?;
        if !self.scheduler.due(packet) {
            return Ok(false);
        }

        let index = self.new_event(packet.t)?;
        for foot in self.scheduler.liftoffs(packet) {
            if let Some(e) = self.active_episodes.remove(&foot) {
                self.closed.insert(e);
            }
        }
        let nav = self.values.group(&Key::Nav(index))?.clone();
        for m in &packet.feet {
            if m.touchdown || !self.active_episodes.contains_key(&m.foot) {
                self.open_episode(m.foot, &nav, &m.point);
            }
        }
        self.add_contacts(index, packet);
        self.optimize(index)?;
        self.marginalize_old(packet.t)?;

        self.dead_reckoned = self.latest_nav()?;
        self.pim = PreintegratedImu::new(self.bias, self.config.noise);
        self.scheduler.commit(packet);
        self.updates += 1;
        Ok(true)
    }

    fn current_estimate(&self, t: f64) -> Result<Estimate> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        self.clock.check(t, "estimate request")?;
        let mut x = self.dead_reckoned.clone();
        if let Some((sample, dt)) = self.clock.span_to(t) {
            x = predict(&x, &sample, &self.bias, &self.gravity, dt, SlotMap::default())?.0;
        }
        let at_event = self.pim.delta_t() == 0.0 && t == self.clock.time.unwrap_or(t) && t == self.latest().t;
        Ok(Estimate {
            t,
            rotation: *x.rotation(),
            position: *x.column(0),
            velocity: *x.column(1),
            covariance: at_event.then(|| self.latest_covariance.clone()),
        })
    }

    fn update_count(&self) -> usize {
        self.updates
    }
}
