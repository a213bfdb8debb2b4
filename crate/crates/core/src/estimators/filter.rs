use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{
    full_contact, validate_packet, ContactPacket, Estimate, Estimator, EstimatorConfig, ImuClock, Scheduler,
    Variant,
};
use crate::error::{Error, Result};
use crate::estimation::{
    ekf_update, lm_optimize, marginalize_out, GaussianBelief, Key, NoiseModel, SharedFactor, Values, Variable,
};
use crate::factors::{
    contact_residual_filter, height_row_filter, FilterContactFactor, FilterHeightFactor, FootId, PriorFactor,
};
use crate::imu::{predict, process_noise, ImuSample, SlotMap};
use crate::liegroup::SEK3;

const STATE_KEY: Key = Key::State(0);

/// Invariant filter on SE_{k+2}(3) with state `(R, p, v, f_1, …, f_k)`.
///
/// The `Ekf` variant corrects with a Kalman update, `Iekf` with a
/// Levenberg-Marquardt solve over a prior factor and the contact factors, and
/// `DeadReckoning` never corrects.
#[derive(Debug, Clone)]
pub struct InvariantFilter {
    config: EstimatorConfig,
    variant: Variant,
    slots: SlotMap,
    gravity: Vector3<f64>,
    state: SEK3,
    covariance: DMatrix<f64>,
    active: Vec<bool>,
    initialized: bool,
    clock: ImuClock,
    scheduler: Scheduler,
    updates: usize,
}

impl InvariantFilter {
    pub fn new(config: EstimatorConfig, variant: Variant) -> Result<Self> {
        config.validate()?;
        if !matches!(variant, Variant::Ekf | Variant::Iekf | Variant::DeadReckoning) {
            return Err(Error::Config(format!("{variant} is not a filter variant")));
        }
        let k = config.feet.len() + 2;
        let n = 3 * (k + 1);
        Ok(Self {
            slots: SlotMap::default(),
            gravity: config.gravity(),
            state: SEK3::identity(k),
            covariance: DMatrix::identity(n, n),
            active: vec![false; config.feet.len()],
            initialized: false,
            clock: ImuClock::default(),
            scheduler: Scheduler::new(config.max_update_interval),
            updates: 0,
            config,
            variant,
        })
    }

    pub fn state(&self) -> &SEK3 {
        &self.state
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Active flag per configured foot, in configuration order.
    pub fn active_feet(&self) -> &[bool] {
        &self.active
    }

    /// SE_K(3) column holding `foot`'s foothold.
    pub fn slot_column(&self, foot: FootId) -> Result<usize> {
        self.config
            .feet
            .iter()
            .position(|f| *f == foot)
            .map(|i| i + 2)
            .ok_or(Error::UnknownFoot(foot))
    }

    /// Overrides the belief, e.g. to start from a known state in tests.
    pub fn set_belief(&mut self, state: SEK3, covariance: DMatrix<f64>, active: Vec<bool>) -> Result<()> {
        if state.k() != self.state.k()
            || covariance.shape() != self.covariance.shape()
            || active.len() != self.active.len()
        {
            return Err(Error::Dimension("filter belief layout".into()));
        }
        self.state = state;
        self.covariance = covariance;
        self.active = active;
        Ok(())
    }

    fn foot_index(&self, foot: FootId) -> usize {
        self.config.feet.iter().position(|f| *f == foot).expect("validated foot")
    }

    fn slot_range(column: usize) -> std::ops::Range<usize> {
        3 * (column + 1)..3 * (column + 2)
    }

    fn propagate(
        &self,
        state: &SEK3,
        covariance: &DMatrix<f64>,
        sample: &ImuSample,
        dt: f64,
    ) -> Result<(SEK3, DMatrix<f64>)> {
        let (x, a) = predict(state, sample, &self.config.bias, &self.gravity, dt, self.slots)?;
        let q = process_noise(&self.config.noise, dt, state.k(), self.slots, &self.active);
        let p = &a * covariance * a.transpose() + q;
        Ok((x, (&p + p.transpose()) * 0.5))
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        if let Some((sample, dt)) = self.clock.span_to(t) {
            let (x, p) = self.propagate(&self.state, &self.covariance, &sample, dt)?;
            self.state = x;
            self.covariance = p;
        }
        self.clock.time = Some(t);
        Ok(())
    }

    /// Sets the slot covariance to `σ_f² I` with no cross terms, keeping the
    /// marginal of every other variable.
    fn reset_slot_covariance(&mut self, column: usize) -> Result<()> {
        let range = Self::slot_range(column);
        let leaving: Vec<usize> = range.clone().collect();
        let kept = marginalize_out(&self.covariance, &leaving)?;
        let n = self.covariance.nrows();
        let keep: Vec<usize> = (0..n).filter(|i| !range.contains(i)).collect();
        let mut p = DMatrix::zeros(n, n);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                p[(i, j)] = kept[(a, b)];
            }
        }
        let sf2 = self.config.noise.foothold_init_sigma.powi(2);
        for i in range {
            p[(i, i)] = sf2;
        }
        self.covariance = p;
        Ok(())
    }

    fn liftoff(&mut self, foot: FootId) -> Result<()> {
        let column = self.slot_column(foot)?;
        self.reset_slot_covariance(column)?;
        let i = self.foot_index(foot);
        self.active[i] = false;
        Ok(())
    }

    fn touchdown(&mut self, foot: FootId, z: &Vector3<f64>) -> Result<()> {
        let column = self.slot_column(foot)?;
        self.reset_slot_covariance(column)?;
        let f = self.state.column(self.slots.position) + self.state.rotation().matrix() * z;
        self.state.set_column(column, f);
        let i = self.foot_index(foot);
        self.active[i] = true;
        Ok(())
    }

    fn initialize(&mut self, packet: &ContactPacket) -> Result<()> {
        let init = &self.config.initial;
        let k = self.state.k();
        let mut x = SEK3::identity(k);
        x.set_rotation(init.rotation());
        x.set_column(self.slots.position, init.position());
        x.set_column(self.slots.velocity, init.velocity());
        let n = 3 * (k + 1);
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (9, 9)).copy_from(&init.covariance());
        let sf2 = self.config.noise.foothold_init_sigma.powi(2);
        for i in 9..n {
            p[(i, i)] = sf2;
        }
        self.state = x;
        self.covariance = p;
        for m in &packet.feet {
            let column = self.slot_column(m.foot)?;
            let f = init.position() + init.rotation().matrix() * m.point;
            self.state.set_column(column, f);
            let i = self.foot_index(m.foot);
            self.active[i] = true;
        }
        self.initialized = true;
        self.clock.time = Some(packet.t);
        self.scheduler.commit(packet);
        Ok(())
    }

    fn correct_ekf(&mut self, packet: &ContactPacket, touched: &[FootId]) -> Result<()> {
        let n = self.state.tangent_dim();
        let rows = 3 * packet.feet.len()
            + if self.config.height_prior { touched.len() } else { 0 };
        let mut h = DMatrix::zeros(rows, n);
        let mut innovation = DVector::zeros(rows);
        let mut r_n = DMatrix::zeros(rows, rows);
        let sc2 = self.config.noise.contact_sigma.powi(2);
        let mut row = 0;
        for m in &packet.feet {
            let column = self.slot_column(m.foot)?;
            let (r, hi) = contact_residual_filter(&self.state, self.slots, column, &m.point)?;
            h.view_mut((row, 0), (3, n)).copy_from(&hi);
            innovation.fixed_rows_mut::<3>(row).copy_from(&r);
            r_n.fixed_view_mut::<3, 3>(row, row)
                .copy_from(&(Matrix3::identity() * sc2));
            row += 3;
        }
        if self.config.height_prior {
            for foot in touched {
                let column = self.slot_column(*foot)?;
                let (r, hr) = height_row_filter(&self.state, self.slots, column, self.config.terrain_height)?;
                h.view_mut((row, 0), (1, n)).copy_from(&hr);
                innovation[row] = -r;
                r_n[(row, row)] = self.config.noise.height_sigma.powi(2);
                row += 1;
            }
        }
        let belief = GaussianBelief::new(self.state.clone(), self.covariance.clone())?;
        let post = ekf_update(&belief, &h, &innovation, &r_n)?;
        self.state = post.mean;
        self.covariance = post.covariance;
        Ok(())
    }

    fn correct_graph(&mut self, packet: &ContactPacket, touched: &[FootId]) -> Result<()> {
        let mut factors: Vec<SharedFactor> = Vec::with_capacity(packet.feet.len() + 1);
        factors.push(std::sync::Arc::new(PriorFactor::from_covariance(
            STATE_KEY,
            Variable::Group(self.state.clone()),
            &self.covariance,
        )?));
        for m in &packet.feet {
            let column = self.slot_column(m.foot)?;
            let mut noise = NoiseModel::isotropic(3, self.config.noise.contact_sigma);
            if self.config.robust_contact {
                noise = noise.with_huber(self.config.huber_threshold);
            }
            factors.push(std::sync::Arc::new(FilterContactFactor::new(
                STATE_KEY, self.slots, column, m.point, noise,
            )));
        }
        if self.config.height_prior {
            for foot in touched {
                let column = self.slot_column(*foot)?;
                factors.push(std::sync::Arc::new(FilterHeightFactor::new(
                    STATE_KEY,
                    self.slots,
                    column,
                    self.config.terrain_height,
                    self.config.noise.height_sigma,
                )));
            }
        }
        let mut values = Values::new();
        values.insert(STATE_KEY, Variable::Group(self.state.clone()));
        let result = lm_optimize(&factors, &values, &self.config.lm)?;
        self.covariance = result.marginal_covariance(&[STATE_KEY])?;
        self.state = result.values.group(&STATE_KEY)?.clone();
        Ok(())
    }

    fn estimate_from(&self, t: f64, x: &SEK3, p: &DMatrix<f64>) -> Estimate {
        Estimate {
            t,
            rotation: *x.rotation(),
            position: *x.column(self.slots.position),
            velocity: *x.column(self.slots.velocity),
            covariance: Some(p.view((0, 0), (9, 9)).into_owned()),
        }
    }
}

impl Estimator for InvariantFilter {
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
        if self.variant == Variant::DeadReckoning || !self.scheduler.due(packet) {
            return Ok(false);
        }

        for foot in self.scheduler.liftoffs(packet) {
            self.liftoff(foot)?;
        }
        let mut touched = Vec::new();
        for m in &packet.feet {
            let active = self.active[self.foot_index(m.foot)];
            if m.touchdown || !active {
                self.touchdown(m.foot, &m.point)?;
                touched.push(m.foot);
            }
        }
        if !packet.feet.is_empty() {
            match self.variant {
                Variant::Iekf => self.correct_graph(packet, &touched)?,
                _ => self.correct_ekf(packet, &touched)?,
            }
        }
        self.scheduler.commit(packet);
        self.updates += 1;
        Ok(true)
    }

    fn current_estimate(&self, t: f64) -> Result<Estimate> {
        if !self.initialized {
            return Err(Error::NotInitialized);
        }
        self.clock.check(t, "estimate request")?;
        match self.clock.span_to(t) {
            Some((sample, dt)) => {
                let (x, p) = self.propagate(&self.state, &self.covariance, &sample, dt)?;
                Ok(self.estimate_from(t, &x, &p))
            }
            None => Ok(self.estimate_from(t, &self.state, &self.covariance)),
        }
    }

    fn update_count(&self) -> usize {
        self.updates
    }
}
