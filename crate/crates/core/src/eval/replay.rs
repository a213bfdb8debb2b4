use crate::error::{Error, Result};
use crate::estimators::{build_estimator, Estimate, Variant};
use crate::io::{apply_extrinsics, LogRecord, Pose, ReplayConfig};

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub variant: Variant,
    /// Estimates at every scheduled update plus the periodic outputs, sorted
    /// by time.
    pub estimates: Vec<Estimate>,
    /// Ground truth found in the log.
    pub ground_truth: Vec<Pose>,
    pub updates: usize,
}

impl ReplayOutput {
    pub fn trajectory(&self) -> Vec<Pose> {
        self.estimates
            .iter()
            .map(|e| Pose::new(e.t, e.position, e.rotation))
            .collect()
    }
}

/// Runs a time-ordered record stream through one estimator. Outputs are
/// emitted after every scheduled update and on the `output_rate` grid in
/// between; a grid time that coincides with an update is not repeated.
pub fn replay(records: &[LogRecord], config: &ReplayConfig, variant: Variant) -> Result<ReplayOutput> {
    config.validate()?;
    let mut estimator = build_estimator(&config.estimator, variant)?;
    let period = (config.output_rate > 0.0).then(|| 1.0 / config.output_rate);
    let mut estimates: Vec<Estimate> = Vec::new();
    let mut ground_truth = Vec::new();
    let mut next_tick: Option<u64> = None;

    let emit_grid = |estimator: &dyn crate::estimators::Estimator,
                     until: f64,
                     inclusive: bool,
                     next_tick: &mut Option<u64>,
                     estimates: &mut Vec<Estimate>|
     -> Result<()> {
        let (Some(period), Some(tick)) = (period, next_tick.as_mut()) else {
            return Ok(());
        };
        loop {
            let t = *tick as f64 * period;
            if t > until || (!inclusive && t == until) {
                return Ok(());
            }
            if estimates.last().map_or(true, |e| t > e.t) {
                estimates.push(estimator.current_estimate(t)?);
            }
            *tick += 1;
        }
    };

    for record in records {
        let record = apply_extrinsics(record, &config.extrinsics.imu, &config.extrinsics.contact);
        if estimator.is_initialized() {
            emit_grid(estimator.as_ref(), record.t(), false, &mut next_tick, &mut estimates)?;
        }
        match &record {
            LogRecord::Imu(sample) => estimator.process_imu(sample)?,
            LogRecord::Contact(packet) => {
                let was_initialized = estimator.is_initialized();
                let updated = estimator.process_contact(packet)?;
                if !was_initialized && estimator.is_initialized() {
                    estimates.push(estimator.current_estimate(packet.t)?);
                    if let Some(period) = period {
                        next_tick = Some((packet.t / period).floor() as u64 + 1);
                    }
                } else if updated {
                    if estimates.last().map_or(false, |e| e.t == packet.t) {
                        estimates.pop();
                    }
                    estimates.push(estimator.current_estimate(packet.t)?);
                }
            }
            LogRecord::GroundTruth(g) => ground_truth.push(Pose::new(g.t, g.position, g.rotation)),
        }
    }
    if !estimator.is_initialized() {
        return Err(Error::NotInitialized);
    }
    if let Some(last) = records.last() {
        emit_grid(estimator.as_ref(), last.t(), true, &mut next_tick, &mut estimates)?;
    }

    Ok(ReplayOutput {
        variant,
        estimates,
        ground_truth,
        updates: estimator.update_count(),
    })
}
