//! Renders an SVG of key rate against fibre length from a results table.
//!
//! `cargo run --release --example plot -- <results.csv> [out_dir]`

use std::path::PathBuf;

use cvqkd_keyrate::output::{read_csv, write_plots};

fn main() -> cvqkd_keyrate::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(csv) = args.next() else {
        eprintln!("usage: plot <results.csv> [out_dir]");
        std::process::exit(2);
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cvqkd-plot"));
    let reports = read_csv(PathBuf::from(csv).as_path())?;
    std::fs::create_dir_all(&out)?;
    for p in write_plots(&out, &reports, None)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
