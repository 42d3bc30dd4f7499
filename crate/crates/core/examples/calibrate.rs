//! Five-seed calibration runs for the quantitative acceptance targets.
//!
//! `cargo run --release --example calibrate -- <tv|mre|semi> [seeds]`

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "tv".into());
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seed count"));
    for seed in 0..seeds {
        let t = std::time::Instant::now();
        let line = match which.as_str() {
            "tv" => format!("tv {:.4}", common::consistency_run(seed)),
            "mre" => format!("{:?}", common::mre_ordering_run(seed)),
            "semi" => format!("{:?}", common::semi_supervised_run(seed)),
            other => panic!("unknown calibration {other}"),
        };
        println!("seed {seed}: {line} ({:.1?})", t.elapsed());
    }
}
