//! The audio front-end: log-mel features from a synthesized tone, then
//! speed perturbation, SpecAugment band masks and SpecCutout rectangles.
//!
//!     cargo run --release -p quartznet --example features_and_augmentation

use std::f64::consts::PI;

use quartznet::frontend::{
    log_mel, spec_augment, spec_cutout, speed_perturb, AudioClip, AugmentSpec,
};

/// Half a second at `lo_hz`, then half a second at `hi_hz`.
fn two_tone(lo_hz: f64, hi_hz: f64, secs: f64) -> AudioClip {
    let n = (secs * 16000.0) as usize;
    AudioClip {
        samples: (0..n)
            .map(|i| {
                let freq = if i < n / 2 { lo_hz } else { hi_hz };
                0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin()
            })
            .collect(),
        sample_rate: 16000,
    }
}

fn sparkline(fm: &quartznet::frontend::FeatureMatrix, frame: usize) -> String {
    let ramp = [' ', '.', ':', '-', '=', '+', '*', '#'];
    (0..fm.mels)
        .step_by(2)
        .map(|m| {
            let v = fm.value(m, frame);
            let idx = ((v + 2.0) / 4.0 * 7.0).clamp(0.0, 7.0) as usize;
            ramp[idx]
        })
        .collect()
}

fn main() {
    let clip = two_tone(440.0, 3520.0, 1.0);
    let fm = log_mel(&clip).unwrap();
    println!(
        "1 s of 440 Hz then 3520 Hz -> {} mel bands x {} frames (hop {} ms)",
        fm.mels,
        fm.frames,
        fm.frame_shift * 1000.0
    );
    println!("column at t=25 (low tone,  low -> high band): {:?}", sparkline(&fm, 25));
    println!("column at t=75 (high tone, low -> high band): {:?}", sparkline(&fm, 75));

    // Speed perturbation changes duration and pitch together.
    for factor in [0.9, 1.1] {
        let warped = speed_perturb(&clip, factor).unwrap();
        println!(
            "speed {factor}: {} samples -> {} samples ({:.3} s)",
            clip.samples.len(),
            warped.samples.len(),
            warped.duration_secs()
        );
    }

    // SpecAugment zeroes full-width bands; SpecCutout zeroes rectangles.
    let spec = AugmentSpec {
        freq_masks: 2,
        freq_mask_width: 15,
        time_masks: 2,
        time_mask_width: 25,
        cutout_rects: 5,
        cutout_freq: 10,
        cutout_time: 10,
        seed: 11,
        ..AugmentSpec::default()
    };
    let masked = spec_augment(&fm, &spec);
    let cut = spec_cutout(&masked, &spec);
    let zeros = |m: &quartznet::frontend::FeatureMatrix| {
        m.values.iter().filter(|&&v| v == 0.0).count()
    };
    let total = fm.mels * fm.frames;
    println!(
        "spec_augment masked {} / {total} cells; + spec_cutout: {} / {total}",
        zeros(&masked),
        zeros(&cut)
    );
    println!("masked column t=50:                     {:?}", sparkline(&cut, 50));

    // The same seed replays the identical masks.
    let replay = spec_cutout(&spec_augment(&fm, &spec), &spec);
    assert_eq!(replay.values, cut.values);
    println!("same seed -> identical masks: ok");
}
