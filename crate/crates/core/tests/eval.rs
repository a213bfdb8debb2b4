mod common;

use legged_odom::estimation::LmSettings;
use legged_odom::estimators::{ContactPacket, Variant};
use legged_odom::eval::{
    align_rigid, emit_plot_data, evaluate, generate_synthetic, replay, Gait, SyntheticConfig,
};
use legged_odom::imu::ImuSample;
use legged_odom::io::{write_trajectory, LogRecord, Pose, ReplayConfig};
use legged_odom::liegroup::{so3, Rot3};
use legged_odom::Error;
use nalgebra::Vector3;
use proptest::prelude::*;

/// A helix with attitude wobble, sampled at 100 Hz.
fn helix(n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.01;
            let p = Vector3::new(3.0 * (0.5 * t).cos(), 2.0 * (0.5 * t).sin(), 0.3 * t);
            let r = so3::exp(&Vector3::new(0.1 * t.sin(), 0.05 * (2.0 * t).cos(), 0.5 * t));
            Pose::new(t, p, r)
        })
        .collect()
}

fn perturbed(truth: &[Pose], seed: u64) -> Vec<Pose> {
    let mut rng = common::rng(seed);
    truth
        .iter()
        .map(|p| {
            let dr = so3::exp(&common::vec3(&mut rng, 0.02));
            Pose::new(p.t, p.position + common::vec3(&mut rng, 0.05), &p.rotation * &dr)
        })
        .collect()
}

fn transformed(poses: &[Pose], r: &Rot3, t: &Vector3<f64>) -> Vec<Pose> {
    poses
        .iter()
        .map(|p| Pose::new(p.t, r.matrix() * p.position + t, r * &p.rotation))
        .collect()
}

#[test]
fn identical_trajectories_have_zero_error() {
    let truth = helix(1000);
    let m = evaluate(&truth, &truth, 1.0, "self").unwrap();
    assert_eq!(m.pose_count, 1000);
    for v in [m.ape_t, m.ape_r, m.ape_z, m.rpe_t, m.rpe_r] {
        assert!(v < 1e-6, "{m:?}");
    }
    assert_eq!(m.rpe_pairs, 900);
    assert!(m.convention.contains("no scale"));
}

#[test]
fn rigidly_moved_estimate_aligns_to_zero() {
    let truth = helix(1000);
    let est = transformed(&truth, &Rot3::from_rpy(0.3, -0.2, 2.0), &Vector3::new(10.0, -4.0, 1.0));
    let m = evaluate(&est, &truth, 1.0, "moved").unwrap();
    assert!(m.ape_t < 1e-9 && m.ape_z < 1e-9 && m.ape_r < 1e-6);
    assert!(m.rpe_t < 1e-9 && m.rpe_r < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_are_invariant_to_rigid_transforms(
        rpy in prop::array::uniform3(-3.0f64..3.0),
        shift in prop::array::uniform3(-100.0f64..100.0),
        seed in 0u64..1000,
    ) {
        let truth = helix(600);
        let est = perturbed(&truth, seed);
        let moved = transformed(&est, &Rot3::from_rpy(rpy[0], rpy[1], rpy[2]), &Vector3::from(shift));
        let a = evaluate(&est, &truth, 1.0, "a").unwrap();
        let b = evaluate(&moved, &truth, 1.0, "b").unwrap();
        for (x, y) in [(a.ape_t, b.ape_t), (a.ape_z, b.ape_z), (a.ape_r, b.ape_r), (a.rpe_t, b.rpe_t), (a.rpe_r, b.rpe_r)] {
            prop_assert!((x - y).abs() < 1e-10, "{} vs {}", x, y);
        }
        prop_assert!(a.ape_t > 0.01);
    }
}

#[test]
fn alignment_is_a_least_squares_minimum() {
    let truth = helix(300);
    let est = perturbed(&transformed(&truth, &Rot3::from_rpy(0.1, 0.2, 0.3), &Vector3::new(1.0, 2.0, 3.0)), 5);
    let src: Vec<_> = est.iter().map(|p| p.position).collect();
    let dst: Vec<_> = truth.iter().map(|p| p.position).collect();
    let a = align_rigid(&src, &dst).unwrap();
    let cost = |r: &Rot3, t: &Vector3<f64>| -> f64 {
        src.iter().zip(&dst).map(|(s, d)| (r.matrix() * s + t - d).norm_squared()).sum()
    };
    let best = cost(&a.rotation, &a.translation);
    let mut rng = common::rng(6);
    for _ in 0..200 {
        let r = &a.rotation * &so3::exp(&common::vec3(&mut rng, 1e-3));
        let t = a.translation + common::vec3(&mut rng, 1e-3);
        assert!(cost(&r, &t) >= best);
    }
    assert!(a.rotation.matrix().determinant() > 0.0);
}

#[test]
fn alignment_handles_reflections_and_degenerate_sets() {
    // A planar set whose best orthogonal fit is a reflection.
    let src = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(-1.0, -1.0, 0.0)];
    let dst: Vec<_> = src.iter().map(|p| Vector3::new(p.x, -p.y, p.z)).collect();
    let a = align_rigid(&src, &dst).unwrap();
    assert!((a.rotation.matrix().determinant() - 1.0).abs() < 1e-12);

    // Collinear points: the line is mapped onto the line.
    let src: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
    let dst: Vec<_> = (0..10).map(|i| Vector3::new(0.0, i as f64, 5.0)).collect();
    let a = align_rigid(&src, &dst).unwrap();
    for (s, d) in src.iter().zip(&dst) {
        assert!((a.rotation.matrix() * s + a.translation - d).amax() < 1e-9);
    }

    // A single repeated point.
    let a = align_rigid(&[Vector3::new(1.0, 2.0, 3.0); 3], &[Vector3::zeros(); 3]).unwrap();
    assert_eq!(a.rotation, Rot3::identity());
    assert!((a.translation + Vector3::new(1.0, 2.0, 3.0)).amax() < 1e-15);
    assert!(align_rigid(&[], &[]).is_err());
}

#[test]
fn vertical_drift_against_static_truth() {
    let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
    let truth: Vec<_> = times.iter().map(|&t| Pose::new(t, Vector3::zeros(), Rot3::identity())).collect();
    let est: Vec<_> = times.iter().map(|&t| Pose::new(t, Vector3::new(0.0, 0.0, 0.1 * t), Rot3::identity())).collect();
    let m = evaluate(&est, &truth, 1.0, "drift").unwrap();

    // Brute-force oracle: with static truth the aligned estimate is the ramp
    // minus its mean, so APE_z is the RMS of the centred ramp.
    let mean = times.iter().map(|t| 0.1 * t).sum::<f64>() / times.len() as f64;
    let oracle = (times.iter().map(|t| (0.1 * t - mean).powi(2)).sum::<f64>() / times.len() as f64).sqrt();
    assert!((m.ape_z - oracle).abs() < 1e-12, "{} vs {oracle}", m.ape_z);
    assert!((m.ape_t - oracle).abs() < 1e-12);
    // No offset along z does better than the centred ramp.
    for k in -50..=50 {
        let offset = mean + k as f64 * 1e-3;
        let rms = (times.iter().map(|t| (0.1 * t - offset).powi(2)).sum::<f64>() / times.len() as f64).sqrt();
        assert!(rms >= oracle - 1e-15);
    }
    assert!((m.rpe_t - 0.1).abs() < 1e-12);
    assert_eq!(m.rpe_r, 0.0);
}

#[test]
fn evaluation_errors() {
    let truth = helix(100);
    let late: Vec<_> = truth.iter().map(|p| Pose::new(p.t + 100.0, p.position, p.rotation)).collect();
    assert!(matches!(evaluate(&late, &truth, 1.0, "x"), Err(Error::InvalidArgument(_))));
    assert!(evaluate(&truth, &truth, 0.0, "x").is_err());
}

#[test]
fn report_serializes() {
    let truth = helix(300);
    let m = evaluate(&perturbed(&truth, 1), &truth, 1.0, "seq").unwrap();
    let json = serde_json::to_string(&m).unwrap();
    for key in ["ape_t", "ape_r", "ape_z", "rpe_t", "rpe_r", "pose_count", "sequence", "convention"] {
        assert!(json.contains(key), "{key}");
    }
}

#[test]
fn standing_robot_reads_gravity() {
    let log = generate_synthetic(&SyntheticConfig { duration: 2.0, ..SyntheticConfig::stand() }).unwrap();
    for r in &log.records {
        match r {
            LogRecord::Imu(s) => {
                assert_eq!(s.gyro, Vector3::zeros());
                assert!((s.accel - Vector3::new(0.0, 0.0, 9.81)).amax() < 1e-15);
            }
            LogRecord::Contact(c) => {
                assert_eq!(c.feet.len(), 4);
                assert_eq!(c.feet.iter().all(|f| f.touchdown), c.t == 0.0);
            }
            LogRecord::GroundTruth(g) => assert!(g.position.amax() < 1e-15),
        }
    }
}

#[test]
fn straight_walk_covers_speed_times_duration() {
    let config = SyntheticConfig {
        ramp: 0.0,
        turn_rate: 0.0,
        yaw_amplitude: 0.0,
        bob_amplitude: 0.0,
        ..SyntheticConfig::default()
    };
    assert_eq!(config.speed(), 0.5);
    let log = generate_synthetic(&config).unwrap();
    let first = log.ground_truth.first().unwrap();
    let last = log.ground_truth.last().unwrap();
    assert_eq!(last.t, 10.0);
    assert!((last.position - first.position - Vector3::new(5.0, 0.0, 0.0)).amax() < 1e-9);
}

#[test]
fn contact_points_match_the_measurement_model() {
    let config = SyntheticConfig::default();
    let log = generate_synthetic(&config).unwrap();
    let mut checked = 0;
    let mut episode: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for r in &log.records {
        let LogRecord::Contact(c) = r else { continue };
        let state = log.states.iter().find(|s| s.t == c.t).unwrap();
        for f in &c.feet {
            if f.touchdown {
                let next = episode.get(&f.foot).map_or(0, |e| e + 1);
                episode.insert(f.foot, next);
            }
            let key = legged_odom::factors::EpisodeKey::new(f.foot, episode[&f.foot]);
            let foothold = log.footholds[&key];
            let z = state.rotation.transpose() * (foothold - state.position);
            assert!((z - f.point).amax() == 0.0);
            assert!((foothold.z + config.body_height).abs() < 1e-15);
            checked += 1;
        }
    }
    assert!(checked > 4000);
}

#[test]
fn trot_alternates_diagonal_pairs() {
    let log = generate_synthetic(&SyntheticConfig { duration: 3.0, ..SyntheticConfig::default() }).unwrap();
    let mut swing_pairs = std::collections::BTreeSet::new();
    for r in &log.records {
        let LogRecord::Contact(c) = r else { continue };
        let ids: Vec<u32> = c.feet.iter().map(|f| f.foot).collect();
        if ids.len() == 2 {
            swing_pairs.insert(ids);
        }
    }
    assert_eq!(swing_pairs.into_iter().collect::<Vec<_>>(), vec![vec![0, 3], vec![1, 2]]);
}

#[test]
fn noisy_logs_depend_only_on_the_seed() {
    let config = SyntheticConfig { duration: 1.0, noise: true, seed: 9, ..SyntheticConfig::default() };
    let a = generate_synthetic(&config).unwrap();
    let b = generate_synthetic(&config).unwrap();
    assert_eq!(a.records, b.records);
    let c = generate_synthetic(&SyntheticConfig { seed: 10, ..config.clone() }).unwrap();
    assert_ne!(a.records, c.records);
    let clean = generate_synthetic(&SyntheticConfig { noise: false, ..config }).unwrap();
    assert_eq!(a.ground_truth, clean.ground_truth);
}

#[test]
fn invalid_synthetic_configs() {
    for bad in [
        SyntheticConfig { duty: 0.0, ..SyntheticConfig::default() },
        SyntheticConfig { feet: 3, ..SyntheticConfig::default() },
        SyntheticConfig { contact_rate: 300.0, ..SyntheticConfig::default() },
        SyntheticConfig { duration: -1.0, ..SyntheticConfig::default() },
    ] {
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
    }
    assert_eq!(SyntheticConfig::stand().gait, Gait::Stand);
}

fn read_lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let truth = helix(10);
    let one = [truth[3]];
    let files = emit_plot_data(&[("empty", &[]), ("one", &one), ("all", &truth)], Some(&truth), dir.path()).unwrap();
    assert_eq!(files.len(), 9);

    assert_eq!(read_lines(&dir.path().join("empty_xy.csv")), vec!["x,y"]);
    assert_eq!(read_lines(&dir.path().join("empty_z.csv")), vec!["t,z"]);
    assert_eq!(read_lines(&dir.path().join("empty_error.csv")), vec!["t,ex,ey,ez"]);
    for suffix in ["xy", "z", "error"] {
        assert_eq!(read_lines(&dir.path().join(format!("one_{suffix}.csv"))).len(), 2);
    }
    for suffix in ["xy", "z", "error"] {
        let lines = read_lines(&dir.path().join(format!("all_{suffix}.csv")));
        let columns = lines[0].split(',').count();
        assert_eq!(lines.len(), 11);
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), columns);
            assert!(l.split(',').all(|v| v.parse::<f64>().is_ok()));
        }
    }
    let error = read_lines(&dir.path().join("all_error.csv"));
    assert_eq!(error[1], "0,0,0,0");

    let no_ref = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&[("a", &truth)], None, no_ref.path()).unwrap();
    assert_eq!(files.len(), 2);
}

fn noisy_log(duration: f64, seed: u64) -> Vec<LogRecord> {
    generate_synthetic(&SyntheticConfig { duration, noise: true, seed, ..SyntheticConfig::default() })
        .unwrap()
        .records
}

#[test]
fn replay_is_deterministic() {
    let records = noisy_log(4.0, 1);
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::Ekf, Variant::Iekf, Variant::FlSingle, Variant::FlCombined] {
        let mut bytes = Vec::new();
        for run in 0..2 {
            let out = replay(&records, &ReplayConfig::default(), variant).unwrap();
            let path = dir.path().join(format!("{variant}_{run}.tum"));
            write_trajectory(&path, &out.trajectory()).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1], "{variant}");
    }
}

#[test]
fn replay_output_schedule() {
    let records = noisy_log(3.0, 2);
    let out = replay(&records, &ReplayConfig::default(), Variant::Ekf).unwrap();
    let times: Vec<f64> = out.estimates.iter().map(|e| e.t).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(times[0], 0.0);
    assert_eq!(*times.last().unwrap(), 3.0);
    // Every 20 ms grid point between the first and last record is present.
    for k in 1..150 {
        let t = k as f64 * 0.02;
        assert!(times.iter().any(|x| (x - t).abs() < 1e-12), "missing {t}");
    }
    assert!(out.updates > 30);
    assert_eq!(out.ground_truth.len(), 301);

    let sparse = ReplayConfig { output_rate: 0.0, ..ReplayConfig::default() };
    let out = replay(&records, &sparse, Variant::Ekf).unwrap();
    assert_eq!(out.estimates.len(), out.updates + 1);
}

#[test]
fn replay_without_full_contact_fails() {
    let records: Vec<LogRecord> = (0..100)
        .flat_map(|i| {
            let t = i as f64 * 0.005;
            [
                LogRecord::Imu(ImuSample::new(t, Vector3::zeros(), Vector3::new(0.0, 0.0, 9.81))),
                LogRecord::Contact(ContactPacket::new(t, vec![])),
            ]
        })
        .collect();
    assert!(matches!(replay(&records, &ReplayConfig::default(), Variant::Ekf), Err(Error::NotInitialized)));
}

#[test]
fn noiseless_replay_recovers_the_truth() {
    let log = generate_synthetic(&SyntheticConfig { duration: 3.0, ..SyntheticConfig::default() }).unwrap();
    let out = replay(&log.records, &ReplayConfig::default(), Variant::Ekf).unwrap();
    let m = evaluate(&out.trajectory(), &log.ground_truth, 1.0, "clean").unwrap();
    assert!(m.ape_t < 1e-9 && m.ape_r < 1e-7, "{m:?}");
}

#[test]
fn single_step_graph_update_replays_like_the_ekf() {
    let log = generate_synthetic(&SyntheticConfig { duration: 10.0, noise: true, seed: 4, ..SyntheticConfig::default() })
        .unwrap();
    let mut config = ReplayConfig::default();
    config.estimator.lm = LmSettings::single_gauss_newton();
    let ekf = replay(&log.records, &config, Variant::Ekf).unwrap();
    let iekf = replay(&log.records, &config, Variant::Iekf).unwrap();
    let a = evaluate(&ekf.trajectory(), &log.ground_truth, 1.0, "ekf").unwrap();
    let b = evaluate(&iekf.trajectory(), &log.ground_truth, 1.0, "iekf").unwrap();
    assert!((a.ape_t - b.ape_t).abs() <= 1e-6, "{} vs {}", a.ape_t, b.ape_t);
    let max_gap = ekf
        .estimates
        .iter()
        .zip(&iekf.estimates)
        .map(|(x, y)| (x.position - y.position).amax())
        .fold(0.0, f64::max);
    assert!(max_gap < 1e-6);
}

#[test]
fn extrinsics_are_applied_during_replay() {
    // Contact points reported in a frame shifted by d relative to the body.
    let log = generate_synthetic(&SyntheticConfig { duration: 2.0, ..SyntheticConfig::default() }).unwrap();
    let d = Vector3::new(0.05, -0.02, 0.1);
    let shifted: Vec<LogRecord> = log
        .records
        .iter()
        .map(|r| match r {
            LogRecord::Contact(c) => {
                let mut c = c.clone();
                for f in &mut c.feet {
                    f.point -= d;
                }
                LogRecord::Contact(c)
            }
            other => other.clone(),
        })
        .collect();
    let mut config = ReplayConfig::default();
    config.extrinsics.contact = legged_odom::io::Extrinsic::new(&Rot3::identity(), d);
    let out = replay(&shifted, &config, Variant::Ekf).unwrap();
    let m = evaluate(&out.trajectory(), &log.ground_truth, 1.0, "ext").unwrap();
    assert!(m.ape_t < 1e-9, "{m:?}");
}
