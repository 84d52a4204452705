//! Trains a few betas on a (possibly truncated) MNIST split and prints the
//! test error after each epoch. Useful for exploring init scale, learning
//! rate and batch size before committing to a full sweep.
//!
//! usage: regime_scan <data-dir> <n-train> <init-scale|fan_in> <lr> <batch> <epochs> <beta>...

use std::path::Path;
use std::time::Instant;

use demodnet::experiment::{run_learning_curves, CurveConfig};
use demodnet::mnist::load_mnist;
use demodnet::nn::NetworkConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 8 {
        eprintln!("usage: regime_scan <data-dir> <n-train> <init-scale|fan_in> <lr> <batch> <epochs> <beta>...");
        std::process::exit(2);
    }
    let mnist = load_mnist(Path::new(&args[1])).expect("load MNIST");
    let train = mnist.train.head(args[2].parse().unwrap());
    let cfg = CurveConfig {
        network: NetworkConfig {
            init_scale: args[3].parse().unwrap(),
            learning_rate: args[4].parse().unwrap(),
            batch_size: args[5].parse().unwrap(),
            ..NetworkConfig::default()
        },
        epochs: args[6].parse().unwrap(),
        betas: args[7..].iter().map(|b| b.parse().unwrap()).collect(),
        parallel: false,
    };
    let start = Instant::now();
    let report = run_learning_curves(&train, &mnist.test, &cfg).expect("training");
    for s in &report.series {
        let errs: Vec<String> = s.errors.iter().map(|e| format!("{e:.4}")).collect();
        println!("beta={:>5} {}", s.beta, errs.join(" "));
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
