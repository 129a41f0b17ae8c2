//! Count parameters for every shipped architecture and compare the
//! separable-module cost against a time-depth separable block of the
//! same dimensions.
//!
//!     cargo run --release -p quartznet --example profile_architectures

use quartznet::model::{
    count_params, separable_module_count, tds_param_count, ModelConfig,
};

fn main() {
    let configs = [
        ModelConfig::quartznet_5x5(),
        ModelConfig::quartznet_10x5(),
        ModelConfig::quartznet_15x5(),
        ModelConfig::quartznet_15x5_grouped(2),
        ModelConfig::quartznet_15x5_grouped(4),
        ModelConfig::wsj_5x3(),
        ModelConfig::tiny_1x1(),
    ];

    println!("{:<20} {:>12} {:>8}", "model", "params", "M");
    for cfg in &configs {
        let report = count_params(cfg).unwrap();
        println!(
            "{:<20} {:>12} {:>8.1}",
            report.model, report.total, report.total_millions
        );
    }

    println!("\nper-layer breakdown for quartznet15x5:");
    let report = count_params(&ModelConfig::quartznet_15x5()).unwrap();
    for layer in &report.layers {
        println!("  {:<4} {:<32} {:>10}", layer.name, layer.detail, layer.params);
    }

    // A time-depth separable block needs k*c^2 + 2*(w*c)^2 weights; the
    // time-channel separable module for the same width needs k*c + c^2.
    println!("\nseparable cost comparison at c=512:");
    println!(
        "{:>4} {:>4} {:>14} {:>14} {:>8}",
        "k", "w", "tds", "time-channel", "ratio"
    );
    for (k, w) in [(9, 10), (21, 10), (33, 10)] {
        let tds = tds_param_count(k, w, 512);
        let tcs = separable_module_count(k, 512);
        println!("{:>4} {:>4} {:>14} {:>14} {:>8.1}", k, w, tds, tcs, tds as f64 / tcs as f64);
    }
}
