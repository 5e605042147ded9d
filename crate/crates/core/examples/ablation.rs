//! Graph-variant and loss ablations on the planted-coreference benchmark.
//!
//! cargo run --release -p semsel-core --example ablation -- [seeds] [epochs]

use std::time::Instant;

use semsel::harness::{benchmark_train_config, gen_synthetic, run_synthetic, SynthConfig, TrainConfig};
use semsel::semgraph::Variant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let synth = SynthConfig::default();
    let runs = [
        ("full/joint", Variant::Full, 1.0),
        ("sentence/joint", Variant::SentenceOnly, 1.0),
        ("full/sentence-loss", Variant::Full, 0.0),
        ("coref/joint", Variant::CorefOnly, 1.0),
        ("homogeneous/joint", Variant::Homogeneous, 1.0),
    ];
    println!("{:<20} {:>8} {:>8} {:>8} {:>8}", "run", "train", "test", "c-map", "secs");
    for (name, variant, beta) in runs {
        let (mut tr, mut te, mut cm) = (0.0, 0.0, 0.0);
        let start = Instant::now();
        for seed in 0..seeds {
            let data = gen_synthetic(seed, &synth);
            let cfg = TrainConfig { epochs, ..benchmark_train_config(seed, synth.dim, beta) };
            let r = run_synthetic(&data, variant, &cfg).expect("experiment");
            tr += r.train.p_at_1;
            te += r.test.p_at_1;
            cm += r.concept_map;
        }
        let n = seeds as f64;
        println!(
            "{:<20} {:>8.3} {:>8.3} {:>8.3} {:>8.1}",
            name,
            tr / n,
            te / n,
            cm / n,
            start.elapsed().as_secs_f64()
        );
    }
}
