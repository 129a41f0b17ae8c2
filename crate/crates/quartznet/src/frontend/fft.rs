//! Iterative radix-2 FFT, enough for short analysis windows.

use std::f64::consts::PI;

/// In-place complex FFT; `re.len()` must be a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    debug_assert_eq!(n, im.len());

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = start + k;
                let b = start + k + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len <<= 1;
    }
}

/// Magnitude spectrum of a real frame zero-padded to `n_fft`; returns the
/// `n_fft / 2 + 1` non-redundant bins.
pub fn magnitude_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    re[..frame.len().min(n_fft)].copy_from_slice(&frame[..frame.len().min(n_fft)]);
    fft(&mut re, &mut im);
    (0..=n_fft / 2)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(n^2) DFT magnitude, the oracle.
    fn naive_dft_magnitude(x: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (n, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = crate::rng::Rng::new(13);
        let x: Vec<f64> = (0..300).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let fast = magnitude_spectrum(&x, 512);
        let slow = naive_dft_magnitude(&x, 512);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        // Exactly bin 32 of a 512-point FFT at unit sample rate.
        let x: Vec<f64> = (0..512)
            .map(|n| (2.0 * PI * 32.0 * n as f64 / 512.0).sin())
            .collect();
        let mags = magnitude_spectrum(&x, 512);
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 32);
    }
}
