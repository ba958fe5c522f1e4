//! Train the LSTM-VAE on a warm-up segment, derive the adaptive threshold,
//! and score normal versus anomalous windows.
//!
//! Run with: cargo run --release --example train_vae

use pipewatch::data;
use pipewatch::detector::update_threshold;
use pipewatch::neural::{windows_from_series, LstmVae, ModelConfig};
use pipewatch::preprocess::stl_decompose;

fn main() -> pipewatch::Result<()> {
    let net = data::hanoi_like();
    let mut scenario = data::paper_timeline_scenario();
    scenario.horizon_steps = 4000;
    scenario.blockage_events = vec![pipewatch::scenario::BlockageEvent {
        pipe_id: "P07".into(),
        start_step: 3000,
        end_step: 4000,
    }];
    scenario.leak_events.clear();

    let live = scenario.generate(&net)?;
    let hist = scenario.generate_historical(&net)?;
    let sensor = live.sensor_index("N13").unwrap();
    let d = stl_decompose(&hist.column(sensor), 336)?;
    let series: Vec<f64> = live
        .column(sensor)
        .iter()
        .enumerate()
        .map(|(t, &x)| d.residualize(x, t))
        .collect();

    let windows = windows_from_series(&series[..1000], 10);
    let mut model = LstmVae::new(ModelConfig::default(), 7);
    println!(
        "training on {} windows ({} parameters)...",
        windows.len(),
        model.parameter_count()
    );
    let start = std::time::Instant::now();
    let report = model.train(&windows, 100)?;
    println!(
        "100 epochs in {:.1?}; mean loss {:.4} -> {:.4}",
        start.elapsed(),
        report.first_epoch_mean_loss,
        report.last_epoch_mean_loss
    );

    let threshold = update_threshold(&report.final_losses, 0)?;
    println!("adaptive threshold (max training loss): {:.4}", threshold.theta);

    let score = |t: usize| model.score(&series[t - 9..=t]);
    println!();
    println!("eval-mode scores against theta {:.4}:", threshold.theta);
    for (label, t) in [("quiet step      ", 1500), ("quiet step      ", 2500), ("blockage step   ", 3100), ("blockage step   ", 3500)] {
        let s = score(t);
        let mark = if s > threshold.theta { "ANOMALOUS" } else { "normal" };
        println!("  {label} t={t}: {s:>10.4}  [{mark}]");
    }

    let out = model.infer(&series[1490..1500]);
    println!();
    println!("latent mean of a quiet window: [{:.3}, {:.3}]", out.mu[0], out.mu[1]);
    model.save_json("target/vae_checkpoint.json")?;
    let restored = LstmVae::load_json("target/vae_checkpoint.json")?;
    assert_eq!(restored.infer(&series[1490..1500]), out);
    println!("checkpoint round-trips exactly (target/vae_checkpoint.json)");
    Ok(())
}
