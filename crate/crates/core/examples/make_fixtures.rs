//! Writes a small synthetic RGB-D video dataset and reloads it.
//!
//! ```text
//! cargo run --example make_fixtures -- /tmp/fixtures
//! ```

use std::path::PathBuf;

use rgbd_vsod::data::{default_split, load_sequence, make_fixtures, FixtureConfig, Placement};

fn main() -> rgbd_vsod::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rgbd_vsod_fixtures"));
    let config = FixtureConfig {
        clips: 4,
        frames_per_clip: 8,
        placement: Placement::Random,
        test_clips: 1,
        ..Default::default()
    };
    let dataset = make_fixtures(&config, 7, &root)?;
    let split = default_split(&dataset.split_path())?;
    println!("wrote {} clips to {}", dataset.sequences.len(), root.display());
    println!("train {:?}  test {:?}", split.train_totals(), split.test_totals());

    for seq in &dataset.sequences {
        let frames = load_sequence(&root, seq)?;
        let coverage: Vec<String> = frames
            .iter()
            .map(|f| format!("{:.2}", f.gt.count() as f64 / (f.gt.width * f.gt.height) as f64))
            .collect();
        println!("{seq}: {} frames, object coverage {}", frames.len(), coverage.join(" "));
    }
    Ok(())
}
