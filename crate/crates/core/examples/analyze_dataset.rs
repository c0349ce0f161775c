//! Dataset statistics for a fixture set: center-bias map, object distance
//! from the frame centre and object size, written as CSV and PNG.

use std::path::PathBuf;

use rgbd_vsod::data::{dataset_statistics, generate_fixtures, parse_attributes, FixtureConfig, Histogram};
use rgbd_vsod::plot;

fn print_histogram(name: &str, h: &Histogram) {
    println!("{name}:");
    for (i, &c) in h.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
        let (lo, hi) = h.bin_edges(i);
        println!("  [{lo:.2}, {hi:.2})  {}", "#".repeat(c));
    }
}

fn main() -> rgbd_vsod::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rgbd_vsod_stats"));
    let records = generate_fixtures(&FixtureConfig { clips: 6, frames_per_clip: 6, ..Default::default() }, 3)?;
    let stats = dataset_statistics(&records)?;
    stats.write_csv(&out)?;
    plot::save(&plot::heatmap(&stats.center_bias), &out.join("center_bias.png"))?;

    print_histogram("distance to centre", &stats.center_distance);
    print_histogram("size ratio", &stats.size_ratio);
    let (r, c) = stats.center_bias_argmax();
    println!("center-bias peak at ({r}, {c}); files in {}", out.display());

    let attrs = parse_attributes("clip000 IN FM SO\nclip001 OUT FM\n")?;
    for a in &attrs {
        let codes: Vec<&str> = a.attributes.iter().map(|x| x.code()).collect();
        println!("{}: {}", a.sequence_id, codes.join(" "));
    }
    match parse_attributes("clip002 IN OUT\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("IN and OUT exclude each other"),
    }
    Ok(())
}
