//! Overfits the toy model on a handful of synthetic clips and reports
//! training-set metrics. Takes about a minute in release mode.
//!
//! ```text
//! cargo run --release --example train_toy -- 300
//! ```

use std::time::Instant;

use rgbd_vsod::data::{generate_fixtures, FixtureConfig};
use rgbd_vsod::metrics::{evaluate_maps, EvalOptions};
use rgbd_vsod::model::{infer, train, ModelConfig, Network, TrainConfig, TrainState};

fn main() -> rgbd_vsod::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let fixtures = FixtureConfig { clips: 4, frames_per_clip: 4, ..Default::default() };
    let frames = generate_fixtures(&fixtures, 0)?;

    let net = Network::new(ModelConfig::toy(32).with_seed(0))?;
    println!("toy model with {} weights, {} training frames", net.num_weights(), frames.len());
    let cfg = TrainConfig { steps, flip: false, crop: false, ..TrainConfig::toy() };
    let start = Instant::now();
    let history = train(&net, &frames, &cfg, &mut TrainState::default(), None)?;
    for (i, loss) in history.iter().enumerate().step_by(25) {
        println!("step {i:>4}  loss {:.4}", loss.total);
    }
    println!("trained in {:.1} s", start.elapsed().as_secs_f64());

    let maps = infer(&net, &frames, 8)?;
    let report = evaluate_maps(
        frames.iter().zip(&maps).map(|(f, m)| (f.sequence_id.as_str(), f.label(), m, &f.gt)),
        EvalOptions::default(),
    )?;
    let d = report.dataset;
    println!("training set: F_max {:.3}  S {:.3}  MAE {:.4}", d.f_max, d.s_measure, d.mae);
    Ok(())
}
