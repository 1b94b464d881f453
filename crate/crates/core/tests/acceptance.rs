//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evflight::augment::{augment_recording, mean_depth, relabel, rotate_events, translate_events, AugmentSpec};
use evflight::config::RunConfig;
use evflight::eval::{MetricReport, convexhull_baseline, hough_circle_baseline, raster_disk, raster_ring, HoughConfig};
use evflight::event::{CountFrame, Event, EventStream, Polarity};
use evflight::filterbank::{
    alphas_from_time_constants, bench_stream, measure_throughput, quantize, Encoder, FilterBank, FilterBankConfig,
    Scaling, CHANNELS, DEFAULT_TIME_CONSTANTS_US, SCALES,
};
use evflight::geom::{CameraModel, ImpactLabel, RigidTransform, TrajectorySample, THETA_BINS, THETA_BIN_DEG};
use evflight::inference::{bayes_update, windowed_estimate, Posterior, PredictionRecord};
use evflight::pipeline::{ablation_run, run_experiment, simulate, Arm, Experiment};
use evflight::sim::{simulate_recording, velocity_at, Dataset, Recording};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn impulse_response() -> Outcome {
    let start = Instant::now();
    const STEPS: u64 = 10_000;
    let mut worst = 0.0f64;
    let mut worst_lsb = 0i32;
    for scaling in [Scaling::Rate, Scaling::Count] {
        let cfg = FilterBankConfig {
            crop: (2, 2),
            downscale: 1,
            scaling,
            ..FilterBankConfig::default()
        };
        let full = cfg.full_scale().map_err(|e| e.to_string())?;
        let stream = EventStream::new(2, 2, vec![Event::new(0, 0, Polarity::On, 0), Event::new(1, 1, Polarity::Off, 0)])
            .map_err(|e| e.to_string())?;
        let mut fb = FilterBank::<f64>::new(cfg.clone(), 2, 2, 0).map_err(|e| e.to_string())?;
        let dt = cfg.dt_us as f64;
        for n in 0..STEPS {
            fb.advance_to(&stream, (n + 1) * cfg.dt_us).map_err(|e| e.to_string())?;
            let snap = fb.snapshot();
            for s in 0..SCALES {
                let tc = DEFAULT_TIME_CONSTANTS_US[s];
                let oracle = (1.0 - (-dt / tc).exp()) * (-(n as f64) * dt / tc).exp();
                for (c, x, y) in [(s, 0, 0), (SCALES + s, 1, 1)] {
                    worst = worst.max((fb.value(c, x, y) - oracle).abs());
                    let lsb = snap.get(c, y, x) as i32 - quantize(oracle, full[c]) as i32;
                    worst_lsb = worst_lsb.max(lsb.abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && worst_lsb <= 1 && secs < 10.0,
        format!("max abs error {worst:.2e}, max quantised diff {worst_lsb} LSB, {STEPS} steps x 10 scales, rate+count, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------- 2

/// `(lo, hi)` in microseconds allowed by half a unit in the last printed digit.
fn printed_period(text: &str) -> (f64, f64, f64) {
    let (num, unit) = text.split_once(' ').unwrap();
    let scale = match unit {
        "us" => 1.0,
        "ms" => 1e3,
        "s" => 1e6,
        _ => unreachable!(),
    };
    let decimals = num.split_once('.').map_or(0, |(_, d)| d.len()) as i32;
    let half = 0.5 * 10f64.powi(-decimals);
    let v: f64 = num.parse().unwrap();
    ((v - half) * scale, v * scale, (v + half) * scale)
}

fn time_constants() -> Outcome {
    let printed = ["200 us", "477 us", "1.13 ms", "2.71 ms", "6.47 ms", "15.44 ms", "36.84 ms", "87.871 ms", "0.2 s", "0.5 s"];
    let periods: Vec<(f64, f64, f64)> = printed.iter().map(|s| printed_period(s)).collect();
    for (p, tc) in periods.iter().zip(DEFAULT_TIME_CONSTANTS_US) {
        if (p.1 - tc).abs() > 1e-9 * tc {
            return Err(format!("filter period {tc} us differs from printed {}", p.1));
        }
    }
    let alphas: Vec<f64> = alphas_from_time_constants(&DEFAULT_TIME_CONSTANTS_US, 200).map_err(|e| e.to_string())?;
    let increasing = alphas.windows(2).all(|w| w[0] < w[1]);
    let target = 2500f64.powf(1.0 / 9.0);
    let (lo_ok, hi_ok) = (target * 0.97, target * 1.03);
    let mut raw = Vec::new();
    let mut all = true;
    for w in periods.windows(2) {
        let (a, b) = (w[0], w[1]);
        raw.push(format!("{:.3}", b.1 / a.1));
        let (rlo, rhi) = (b.0 / a.2, b.2 / a.0);
        all &= rlo <= hi_ok && rhi >= lo_ok;
    }
    check(
        increasing && all,
        format!("alpha strictly increasing: {increasing}; target ratio {target:.4} +/- 3%; raw ratios [{}]", raw.join(", ")),
    )
}

// ---------------------------------------------------------------- 3

fn gradients() -> Outcome {
    let start = Instant::now();
    let checks = common::gradcheck::suite(0xacce97);
    let secs = start.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.max_rel).fold(0.0, f64::max);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let has_loss = checks.iter().any(|c| c.name.contains("loss"));
    check(
        failed.is_empty() && checks.len() >= 20 && has_loss && secs < 120.0,
        format!("{} shapes, worst relative error {worst:.2e}, failed {failed:?}, {secs:.1} s", checks.len()),
    )
}

// ---------------------------------------------------------------- 4

fn cam() -> CameraModel<f64> {
    CameraModel::new(160, 120, 150.0, 150.0, 79.5, 59.5, RigidTransform::identity()).unwrap()
}

fn unique_time_stream(raw: &[(u16, u16)]) -> EventStream {
    let events = raw.iter().enumerate().map(|(i, &(x, y))| Event::new(x, y, Polarity::On, i as u64)).collect();
    EventStream::new(160, 120, events).unwrap()
}

fn rotation_round_trip(runner: &mut TestRunner) -> std::result::Result<(), String> {
    let strat = (prop::collection::vec((0u16..160, 0u16..120), 1..200), 0.0..TAU);
    runner
        .run(&strat, |(raw, phi)| {
            let s = unique_time_stream(&raw);
            let back = rotate_events(&rotate_events(&s, phi, &cam()), -phi, &cam());
            for e in back.events() {
                let o = s.events()[e.t as usize];
                let d = (e.x as i32 - o.x as i32).abs().max((e.y as i32 - o.y as i32).abs());
                prop_assert!(d <= 1, "event {:?} came back as {:?} (phi {})", o, e, phi);
            }
            Ok(())
        })
        .map_err(|e| format!("rotation: {e}"))
}

fn linear_approach(z0: f64, z1: f64, dur: f64, xy: [f64; 2]) -> Vec<TrajectorySample<f64>> {
    (0..=200)
        .map(|i| {
            let s = i as f64 / 200.0;
            TrajectorySample {
                t: s * dur,
                pos: [xy[0], xy[1], z0 + s * (z1 - z0)],
            }
        })
        .collect()
}

fn translation_pinhole(runner: &mut TestRunner) -> std::result::Result<(), String> {
    let strat = (
        (0.5f64..3.0, 0.05f64..0.45, 0.05f64..0.3),
        (-0.25f64..0.25, -0.25f64..0.25),
        prop_oneof![Just(1_000u64), Just(3_000u64)],
        prop::collection::vec((0u16..160, 0u16..120, 0.0f64..1.0), 1..100),
    );
    runner
        .run(&strat, |((z0, zfrac, dur), (dx, dy), window, raw)| {
            let z1 = z0 * zfrac;
            let traj = linear_approach(z0, z1, dur, [0.0, 0.0]);
            // Events stay clear of the last window so every window lies on the trajectory.
            let span_us = (dur * 1e6) as u64 - window;
            let events: Vec<Event> =
                raw.iter().map(|&(x, y, f)| Event::new(x, y, Polarity::Off, (f * span_us as f64) as u64)).collect();
            let s = EventStream::from_unsorted(160, 120, events);
            let out = translate_events(&s, &traj, [dx, dy], &cam(), window).map_err(|e| TestCaseError::fail(e.to_string()))?;
            // Independent oracle: the mean depth of a straight line over a window is its midpoint depth.
            let depth = |t: f64| z0 + (z1 - z0) * t / dur;
            let shift_of = |t_us: u64| {
                let k = t_us / window;
                let (a, b) = ((k * window) as f64 * 1e-6, ((k + 1) * window) as f64 * 1e-6);
                let z = 0.5 * (depth(a) + depth(b));
                (150.0 * dx / z, 150.0 * dy / z)
            };
            let mut expected = Vec::new();
            let mut ambiguous = false;
            for e in s.events() {
                let (fx, fy) = shift_of(e.t);
                ambiguous |= (fx.fract().abs() - 0.5).abs() < 1e-6 || (fy.fract().abs() - 0.5).abs() < 1e-6;
                let (x, y) = (e.x as i64 + fx.round() as i64, e.y as i64 + fy.round() as i64);
                if (0..160).contains(&x) && (0..120).contains(&y) {
                    expected.push((x as u16, y as u16, e.t));
                }
            }
            if ambiguous {
                return Ok(());
            }
            let mut got: Vec<(u16, u16, u64)> = out.events().iter().map(|e| (e.x, e.y, e.t)).collect();
            got.sort_unstable();
            expected.sort_unstable();
            prop_assert_eq!(got, expected);
            Ok(())
        })
        .map_err(|e| format!("translation: {e}"))
}

fn relabel_rotation(runner: &mut TestRunner) -> std::result::Result<(), String> {
    let strat = (0.0f64..0.2, 0.0f64..360.0, 0u32..12);
    runner
        .run(&strat, |(r, deg, turns)| {
            let a = deg.to_radians();
            let l = ImpactLabel::at(0.1, r * a.cos(), r * a.sin());
            let edge = (l.theta_deg / THETA_BIN_DEG).fract();
            if r < 1e-6 || edge < 1e-6 || edge > 1.0 - 1e-6 {
                return Ok(());
            }
            let mut cur = l;
            for k in 1..=turns {
                cur = relabel(&cur, &AugmentSpec::rotate(30f64.to_radians()));
                prop_assert_eq!(cur.theta_bin, (l.theta_bin + k as usize) % THETA_BINS);
                prop_assert_eq!(cur.r_bin, l.r_bin);
            }
            Ok(())
        })
        .map_err(|e| format!("relabel: {e}"))
}

fn tau_labels(runner: &mut TestRunner, recs: &[Recording]) -> std::result::Result<(), String> {
    let strat = (0..recs.len(), 0.0..TAU, (-0.2f64..0.2, -0.2f64..0.2), prop_oneof![Just(1_000u64), Just(3_000u64)], 0u8..4);
    runner
        .run(&strat, |(i, phi, (dx, dy), window, which)| {
            let rec = &recs[i];
            let specs = match which {
                0 => vec![AugmentSpec::rotate(phi)],
                1 => vec![AugmentSpec::translate([dx, dy], window)],
                2 => vec![AugmentSpec::rotate(phi), AugmentSpec::translate([dx, dy], window)],
                _ => vec![AugmentSpec::translate([dx, dy], window), AugmentSpec::rotate(phi)],
            };
            let out = augment_recording(rec, &specs, "aug".into()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&out.labels, &rec.labels);
            prop_assert_eq!(out.impact.t_impact, rec.impact.t_impact);
            Ok(())
        })
        .map_err(|e| format!("tau labels: {e}"))
}

fn augmentation() -> Outcome {
    const CASES: u32 = 1_000;
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: CASES,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let mut cfg = RunConfig::default();
    cfg.apply_text("object = dart").map_err(|e| e.to_string())?;
    let dc = cfg.dataset_config();
    let recs: Vec<Recording> = (0..3)
        .map(|i| simulate_recording(format!("r{i}"), &dc, 100 + i))
        .collect::<evflight::error::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    for r in [
        rotation_round_trip(&mut runner),
        translation_pinhole(&mut runner),
        relabel_rotation(&mut runner),
        tau_labels(&mut runner, &recs),
    ] {
        if let Err(e) = r {
            errors.push(e);
        }
    }
    // Sanity check on the helper used by translation: the integral mean depth agrees with the midpoint.
    let traj = linear_approach(2.0, 0.5, 0.1, [0.0, 0.0]);
    let z = mean_depth(&traj, 0.02, 0.05);
    if (z - 0.5 * (2.0 - 1.5 * 0.2 + 2.0 - 1.5 * 0.5)).abs() > 1e-9 {
        errors.push(format!("mean depth {z}"));
    }
    check(
        errors.is_empty(),
        if errors.is_empty() {
            format!("4 properties x {CASES} cases (rotation round trip, pinhole translation, 30 deg relabel, tau labels)")
        } else {
            errors.join("; ")
        },
    )
}

// ---------------------------------------------------------------- 5

fn normalised(v: &[f64]) -> bool {
    v.iter().all(|&p| p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(4) + 1e-12).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn peaked(n: usize, k: usize) -> Vec<f64> {
    (0..n).map(|i| if i == k { 0.5 } else { 0.5 / (n - 1) as f64 }).collect()
}

fn smoother() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut post = Posterior::<f64>::uniform();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let lambda = rng.gen_range(0.0..=1.0);
        post = bayes_update(&post, &random_simplex(&mut rng, 12), &random_simplex(&mut rng, 4), lambda)
            .map_err(|e| e.to_string())?;
        if !normalised(&post.p_theta) || !normalised(&post.p_r) {
            return Err(format!("posterior left the simplex after {} updates", post.updates));
        }
        worst = worst.max((post.p_theta.iter().sum::<f64>() - 1.0).abs());
    }
    let mut slowest = 0;
    for k in 0..12 {
        let mut p = Posterior::<f64>::uniform();
        let mut n = 0;
        while p.theta_bin() != k || p.r_bin() != k % 4 {
            p = bayes_update(&p, &peaked(12, k), &peaked(4, k % 4), 1.0).map_err(|e| e.to_string())?;
            n += 1;
            if n > 5 {
                return Err(format!("peaked likelihood on bin {k} not the argmax after 5 updates"));
            }
        }
        slowest = slowest.max(n);
    }
    let prior = Posterior {
        p_theta: random_simplex(&mut rng, 12),
        p_r: random_simplex(&mut rng, 4),
        updates: 3,
    };
    let (lt, lr) = (random_simplex(&mut rng, 12), random_simplex(&mut rng, 4));
    let zero = bayes_update(&prior, &lt, &lr, 0.0).map_err(|e| e.to_string())?;
    let exact = zero.p_theta == lt && zero.p_r == lr;
    check(
        exact,
        format!("max |sum-1| {worst:.1e} over 10000 updates; peaked argmax in <= {slowest} updates; lambda=0 exact: {exact}"),
    )
}

// ---------------------------------------------------------------- 6-8

fn max_speed(rec: &Recording) -> f64 {
    rec.trajectory
        .iter()
        .filter(|s| s.t < rec.impact.t_impact)
        .map(|s| {
            let v = velocity_at(&rec.trajectory, s.t);
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        })
        .fold(0.0, f64::max)
}

fn start_height(rec: &Recording) -> f64 {
    rec.trajectory[0].pos[2]
}

fn bin_thresholds(report: &MetricReport) -> (bool, String) {
    let g = &report.global;
    let ok = g.mean_theta_deg <= 30.0 && g.mean_radius_mm <= 31.0 && g.median_ttc_error <= 0.25;
    (
        ok,
        format!(
            "theta {:.2} deg (<= 30), radius {:.2} mm (<= 31), median TTC {:.2}% (<= 25)",
            g.mean_theta_deg,
            g.mean_radius_mm,
            g.median_ttc_error * 100.0
        ),
    )
}

fn run(cfg: &RunConfig) -> std::result::Result<(Dataset, Experiment, f64), String> {
    let start = Instant::now();
    let data = simulate(cfg, 1).map_err(|e| e.to_string())?;
    let e = run_experiment(cfg, &data, 1).map_err(|e| e.to_string())?;
    Ok((data, e, start.elapsed().as_secs_f64()))
}

fn ball() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.apply_text("object = ball\nsim.n = 60").map_err(|e| e.to_string())?;
    let (data, e, secs) = run(&cfg)?;
    let all: Vec<&Recording> = data.train.iter().chain(&data.test).collect();
    let v = all.iter().map(|r| max_speed(r)).fold(0.0, f64::max);
    let (hmin, hmax) = all.iter().map(|r| start_height(r)).fold((f64::MAX, 0.0f64), |(a, b), h| (a.min(h), b.max(h)));
    let (ok, metrics) = bin_thresholds(&e.report);
    check(
        ok && all.len() == 60 && v <= 4.8 + 1e-6 && e.n_train_samples >= 3000 && secs <= 1800.0,
        format!(
            "{} drops, start depth {hmin:.2}-{hmax:.2} m, max speed {v:.2} m/s, {} train / {} test samples; {metrics}; {secs:.0} s",
            all.len(),
            e.n_train_samples,
            e.n_test_samples
        ),
    )
}

fn theta_in(report: &MetricReport, lo: f64, hi: f64) -> Option<f64> {
    report
        .intervals
        .iter()
        .find(|i| (i.lo - lo).abs() < 1e-9 && (i.hi - hi).abs() < 1e-9)
        .map(|i| i.metrics.mean_theta_deg)
}

fn window_info(preds: &[(String, Vec<PredictionRecord>)]) -> String {
    let mut parts = Vec::new();
    for lead in [0.03, 0.02, 0.01] {
        let mut err = Vec::new();
        for (_, recs) in preds {
            let Some(r0) = recs.iter().find(|r| r.tau_true_s.is_some()) else { continue };
            let t_imp = r0.t_s + r0.tau_true_s.unwrap();
            let Some(truth) = r0.theta_true else { continue };
            if let Ok(w) = windowed_estimate(recs, t_imp - 0.04, t_imp - lead, 1.0) {
                let d = (w.theta_bin as i64 - truth as i64).rem_euclid(12);
                err.push(d.min(12 - d) as f64 * THETA_BIN_DEG);
            }
        }
        let mean = err.iter().sum::<f64>() / err.len().max(1) as f64;
        parts.push(format!("tau>={lead}: {mean:.1} deg"));
    }
    parts.join(", ")
}

fn dart(cfg: &RunConfig) -> (Outcome, Option<(Dataset, Experiment)>) {
    let (data, e, secs) = match run(cfg) {
        Ok(x) => x,
        Err(msg) => return (Err(msg), None),
    };
    let all: Vec<&Recording> = data.train.iter().chain(&data.test).collect();
    let (vmin, vmax) = all.iter().map(|r| max_speed(r)).fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let (ok, metrics) = bin_thresholds(&e.report);
    let late = theta_in(&e.report, 0.01, 0.02);
    let early = theta_in(&e.report, 0.03, 0.04);
    let pattern = matches!((late, early), (Some(l), Some(x)) if l <= x);
    println!("INFO  dart windowed smoothed theta error from T-0.04 s to {}", window_info(&e.predictions));
    let outcome = check(
        ok && pattern && all.len() == 36 && vmin >= 16.0 - 1e-6 && vmax <= 23.4 + 0.5,
        format!(
            "{} shots, speeds {vmin:.1}-{vmax:.1} m/s, {} train / {} test samples; {metrics}; theta (0.01,0.02] {:.2} <= (0.03,0.04] {:.2}; {secs:.0} s",
            all.len(),
            e.n_train_samples,
            e.n_test_samples,
            late.unwrap_or(f64::NAN),
            early.unwrap_or(f64::NAN)
        ),
    );
    (outcome, Some((data, e)))
}

fn ablation(cfg: &RunConfig, base: Option<(Dataset, Experiment)>) -> Outcome {
    let (data, full) = base.ok_or("dart experiment unavailable")?;
    let start = Instant::now();
    let arms = ablation_run(cfg, &data, &Arm::ALL[1..], 1).map_err(|e| e.to_string())?;
    let g = &full.report.global;
    let mut ok = true;
    let mut parts = vec![format!("aug+exp theta {:.1} r {:.1}", g.mean_theta_deg, g.mean_radius_mm)];
    for a in &arms {
        match &a.experiment {
            Some(e) => {
                let h = &e.report.global;
                ok &= g.mean_theta_deg <= h.mean_theta_deg && g.mean_radius_mm <= h.mean_radius_mm;
                parts.push(format!("{} theta {:.1} r {:.1}", a.arm.name(), h.mean_theta_deg, h.mean_radius_mm));
            }
            // A diverged ablation arm is worse than the full model.
            None => parts.push(format!("{} diverged: {}", a.arm.name(), a.failure.clone().unwrap_or_default())),
        }
    }
    parts.push(format!("{:.0} s", start.elapsed().as_secs_f64()));
    check(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 9

fn frame(pixels: &[(usize, usize)], w: u16, h: u16) -> CountFrame {
    let events: Vec<Event> = pixels.iter().map(|&(x, y)| Event::new(x as u16, y as u16, Polarity::On, 0)).collect();
    CountFrame::from_events(w, h, 0, 1, &events)
}

fn baselines() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut hull_worst, mut hough_worst) = (0.0f64, 0.0f64);
    for r in 10..=40 {
        let (cx, cy) = (60.0 + rng.gen::<f64>() * 10.0, 60.0 + rng.gen::<f64>() * 10.0);
        let r = r as f64 + rng.gen::<f64>() * 0.9;
        let hull = convexhull_baseline(&frame(&raster_disk(cx, cy, r, 128, 128), 128, 128)).map_err(|e| e.to_string())?;
        hull_worst = hull_worst.max((hull.diameter_px - 2.0 * r).abs() / (2.0 * r));
        let c = hough_circle_baseline(&frame(&raster_ring(cx, cy, r, 128, 128), 128, 128), &HoughConfig::default())
            .map_err(|e| e.to_string())?;
        hough_worst = hough_worst.max((c.r - r).abs());
    }
    check(
        hull_worst <= 0.10 && hough_worst <= 2.0,
        format!("hull worst relative diameter error {:.2}% (<= 10%), Hough worst radius error {hough_worst:.2} px (<= 2)", hull_worst * 100.0),
    )
}

// ---------------------------------------------------------------- 10

fn throughput() -> Outcome {
    let stream = bench_stream(640, 480, 4_000_000, 1_000_000, 10);
    let cfg = FilterBankConfig::default();
    let f64_rate = measure_throughput::<f64>(&stream, &cfg).map_err(|e| e.to_string())?.events_per_sec;
    let f32_rate = measure_throughput::<f32>(&stream, &cfg).map_err(|e| e.to_string())?.events_per_sec;
    check(
        f64_rate.min(f32_rate) >= 1e6,
        format!("640x480, 4M events over 1 s, {CHANNELS} channels: f64 {:.2} M ev/s, f32 {:.2} M ev/s", f64_rate / 1e6, f32_rate / 1e6),
    )
}

// ----------------------------------------------------------------

/// `ACCEPTANCE_ONLY=1,2,9` restricts the run to the listed criteria.
fn selected(n: usize) -> bool {
    std::env::var("ACCEPTANCE_ONLY").map_or(true, |v| v.split(',').any(|k| k.trim() == n.to_string()))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    if !selected(n) {
        println!("SKIP  {n:>2} {name}");
        return true;
    }
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match outcome {
        Ok(d) => {
            println!("PASS  {n:>2} {name}: {d}");
            true
        }
        Err(d) => {
            println!("FAIL  {n:>2} {name}: {d}");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and similar probes pass flags; only run on a plain invocation.
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= report(1, "filterbank impulse response", impulse_response);
    ok &= report(2, "time-constant ladder", time_constants);
    ok &= report(3, "gradient check", gradients);
    ok &= report(4, "augmentation properties", augmentation);
    ok &= report(5, "Bayesian smoother", smoother);
    ok &= report(6, "desk ball benchmark", ball);
    let mut dart_cfg = RunConfig::default();
    dart_cfg.apply_text("object = dart").expect("valid config");
    let mut base = None;
    ok &= report(7, "desk dart benchmark", || {
        let (o, b) = dart(&dart_cfg);
        base = b;
        o
    });
    ok &= report(8, "filter and augmentation ablation", || ablation(&dart_cfg, base));
    ok &= report(9, "hull and Hough baselines", baselines);
    ok &= report(10, "bin+filter throughput", throughput);
    if !ok {
        std::process::exit(1);
    }
}
