//! Runs the planted conditional benchmark and prints mean ATPAR per method.
//!
//! cargo run --release -p mcode --example planted -- [dim_fraction] [repeats]

use std::time::Instant;

use mcode::eval::{run_experiment, ExperimentConfig};
use mcode::synthetic::{planted_benchmark, PlantedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dim_fraction: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.25);
    let repeats: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);

    let (ds, _) = planted_benchmark(&PlantedSpec::default())?;
    let cfg = ExperimentConfig {
        dim_fraction,
        repeats,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    for r in run_experiment(&ds, &cfg)? {
        println!("{:<7} {:.4} +- {:.4}", r.method.label(), r.mean, r.std_dev);
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
