//! Scores blurred and shifted versions of ground-truth masks to show how
//! MAE, the F-measure curve and the structure measure react.

use rgbd_vsod::data::{generate_fixtures, FixtureConfig};
use rgbd_vsod::image_ops::SaliencyMap;
use rgbd_vsod::metrics::{evaluate_maps, EvalOptions, FMaxMode};

fn shifted(map: &SaliencyMap, dx: usize) -> SaliencyMap {
    let mut out = SaliencyMap::zeros(map.height, map.width);
    for y in 0..map.height {
        for x in dx..map.width {
            out.set(y, x, map.get(y, x - dx));
        }
    }
    out
}

fn main() -> rgbd_vsod::Result<()> {
    let frames = generate_fixtures(&FixtureConfig { clips: 2, frames_per_clip: 4, ..Default::default() }, 1)?;
    let perfect: Vec<SaliencyMap> = frames.iter().map(|f| f.gt.to_plane()).collect();
    let variants: [(&str, Vec<SaliencyMap>); 3] = [
        ("ground truth", perfect.clone()),
        ("blurred", perfect.iter().map(|m| m.resize(m.height / 8, m.width / 8).resize(m.height, m.width)).collect()),
        ("shifted 6 px", perfect.iter().map(|m| shifted(m, 6)).collect()),
    ];
    for (name, maps) in &variants {
        for mode in [FMaxMode::CurveMean, FMaxMode::PerFrameMax] {
            let report = evaluate_maps(
                frames.iter().zip(maps).map(|(f, m)| (f.sequence_id.as_str(), f.label(), m, &f.gt)),
                EvalOptions { f_max_mode: mode },
            )?;
            let d = report.dataset;
            println!("{name:<13} {mode:?}: F_max {:.4}  S {:.4}  MAE {:.4}", d.f_max, d.s_measure, d.mae);
        }
    }
    Ok(())
}
