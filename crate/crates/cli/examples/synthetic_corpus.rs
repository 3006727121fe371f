//! Writes a synthetic demand corpus for trying the CLI:
//!
//! ```text
//! cargo run --release -p mtlf-cli --example synthetic_corpus -- demand.csv 20 10
//! ```

use mtlf_core::dataset::write_corpus;
use mtlf_core::synthetic::trend_seasonal_corpus;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "demand.csv".into());
    let count = args.next().map_or(20, |a| a.parse().expect("series count"));
    let years = args.next().map_or(10, |a| a.parse().expect("years"));
    let corpus = trend_seasonal_corpus(count, years, 0.02, 2024);
    let file = std::fs::File::create(&path).expect("create output file");
    write_corpus(&corpus, file).expect("write corpus");
    println!("wrote {count} series x {years} years to {path}");
}
