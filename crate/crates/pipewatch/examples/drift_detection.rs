//! The dual drift detector on scripted encoding streams: KS-test behaviour,
//! the warn/alarm/expiry lifecycle, and the distance test.
//!
//! Run with: cargo run --release --example drift_detection

use pipewatch::drift::{
    distance_test, ks_two_sample, DriftAction, DriftConfig, DriftState, InstanceKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> pipewatch::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n01 = Normal::new(0.0, 1.0).unwrap();

    // Two-sample KS behaviour.
    let a: Vec<f64> = (0..200).map(|_| n01.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..200).map(|_| n01.sample(&mut rng)).collect();
    let same = ks_two_sample(&a, &b, 200, false)?;
    println!(
        "same distribution:    KS {:.3}  p {:.3}",
        same.statistic, same.p_value
    );
    for shift in [0.2, 0.5, 1.0, 3.0] {
        let c: Vec<f64> = (0..200).map(|_| n01.sample(&mut rng) + shift).collect();
        let ks = ks_two_sample(&a, &c, 200, false)?;
        println!(
            "shift {shift:>4}:           KS {:.3}  p {:.3e}",
            ks.statistic, ks.p_value
        );
    }

    // Warn -> expiry lifecycle: a transient wobble warns, buffers, then
    // expires without retraining.
    let cfg = DriftConfig {
        dd1_stride: 1,
        ..DriftConfig::default()
    };
    let mut state = DriftState::new(f64::INFINITY);
    let mut warned_at = None;
    let mut expired_at = None;
    for t in 0..2000usize {
        // Stationary except for a 60-step wobble shifted by 1.5 sigma.
        let wobble = (600..660).contains(&t);
        let e = n01.sample(&mut rng) + if wobble { 1.5 } else { 0.0 };
        let obs = state.step(&cfg, InstanceKind::Normal, &[e], e);
        if obs.action == DriftAction::Warn && warned_at.is_none() {
            warned_at = Some(t);
        }
        if let Some(w) = warned_at {
            if !obs.flag_warn && expired_at.is_none() && t > w {
                expired_at = Some(t);
            }
        }
        if obs.flag_alarm {
            println!("unexpected alarm at {t}");
        }
    }
    println!();
    match (warned_at, expired_at) {
        (Some(w), Some(x)) => println!(
            "transient wobble: warned at step {w}, expired quietly at step {x} \
             (buffer cleared, no retrain)"
        ),
        (Some(w), None) => println!("warned at {w}, still warned at end"),
        _ => println!("no warning raised"),
    }

    // Sustained shift: the warning escalates to a DD1 alarm.
    let mut state = DriftState::new(f64::INFINITY);
    for _ in 0..400 {
        let e = n01.sample(&mut rng);
        state.step(&cfg, InstanceKind::Normal, &[e], e);
    }
    for t in 0..400usize {
        let e = n01.sample(&mut rng) + 2.0;
        let obs = state.step(&cfg, InstanceKind::Normal, &[e], e);
        if obs.flag_alarm {
            println!(
                "sustained 2-sigma shift: DD1 alarm after {t} drifted steps \
                 (p* {:.2e}), retraining from {} buffered values",
                obs.p_star.unwrap(),
                state.warn_buffer().len()
            );
            break;
        }
    }

    // Distance test between anomaly-encoding matrices.
    let zeros = vec![vec![0.0; 2]; 50];
    let ones = vec![vec![1.0; 2]; 50];
    let (dis, alarm) = distance_test(&zeros, &ones, 50, 5.0)?;
    println!();
    println!("DD2 distance between unit-separated matrices: {dis} (alarm: {alarm})");
    Ok(())
}
