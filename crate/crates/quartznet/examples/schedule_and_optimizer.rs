//! Warmup + cosine-annealing schedule and NovoGrad on a toy quadratic.
//!
//!     cargo run --release -p quartznet --example schedule_and_optimizer

use quartznet::tensor::Tensor;
use quartznet::training::{lr_at, NovoGrad, ScheduleConfig};

fn main() {
    let sc = ScheduleConfig {
        lr_max: 0.05,
        lr_min: 0.001,
        warmup_steps: 100,
        total_steps: 1000,
    };
    println!("warmup {} steps to lr {}, cosine to {} at step {}:", sc.warmup_steps, sc.lr_max, sc.lr_min, sc.total_steps);
    for step in [0, 25, 50, 100, 250, 500, 750, 1000] {
        let lr = lr_at(step, &sc);
        let bar = "#".repeat((lr / sc.lr_max * 40.0) as usize);
        println!("  step {step:>4}  lr {lr:.5}  {bar}");
    }

    // Minimize f(w) = sum((w - 3)^2) / 2 with NovoGrad; the gradient is
    // computed by the autodiff tape.
    let w = Tensor::<f64>::param(&[2], vec![0.0, 10.0]).unwrap();
    let params = vec![("w".to_string(), w.clone())];
    let mut opt = NovoGrad::new(0.95, 0.5, 0.0).unwrap();
    println!("\nnovograd (beta1=0.95, beta2=0.5) on (w - 3)^2 / 2 from {:?}:", w.values());
    for step in 1..=40 {
        let loss = w.add_scalar(-3.0).mul(&w.add_scalar(-3.0)).unwrap().sum_all().unwrap().mul_scalar(0.5);
        w.zero_grad();
        loss.backward().unwrap();
        opt.step(&params, 0.2, 1.0).unwrap();
        if step % 8 == 0 {
            println!("  step {step:>2}  loss {:>9.5}  w = {:?}", loss.item(), w.values());
        }
    }
}
