use std::f64::consts::{LN_2, PI};

use milscene::frontend::{frame_length, hann, log_mel, mel, mel_filterbank, mel_to_hz, stft_power, LogMel, LOG_FLOOR};
use milscene::wav::AudioClip;

const RATE: u32 = 44_100;

fn tone(freq: f64, amplitude: f64, secs: f64, rate: u32) -> Vec<f64> {
    let n = (secs * rate as f64) as usize;
    (0..n).map(|i| amplitude * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

/// Deterministic broadband test signal.
fn noise(n: usize) -> Vec<f64> {
    let mut s = 0x2545_f491_4f6c_dd1du64;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

#[test]
fn ten_second_clip_gives_forty_by_five_hundred() {
    let clip = AudioClip::new(noise(10 * RATE as usize), RATE).unwrap();
    let x = log_mel(&clip).unwrap();
    assert_eq!(x.shape(), &[40, 500]);
    assert!(x.is_finite());
}

#[test]
fn frame_is_forty_milliseconds() {
    assert_eq!(frame_length(44_100), 1764);
    assert_eq!(frame_length(16_000), 640);
}

#[test]
fn silence_hits_the_log_floor() {
    let x = log_mel(&AudioClip::new(vec![0.0; RATE as usize], RATE).unwrap()).unwrap();
    assert!(x.data().iter().all(|&v| v == LOG_FLOOR.ln()));
}

#[test]
fn doubling_amplitude_adds_ln_four() {
    let a = noise(2 * RATE as usize);
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let x = log_mel(&AudioClip::new(a, RATE).unwrap()).unwrap();
    let y = log_mel(&AudioClip::new(b, RATE).unwrap()).unwrap();
    let mut compared = 0;
    for (u, v) in x.data().iter().zip(y.data()) {
        // where mel power dwarfs the floor
        if *u > LOG_FLOOR.ln() + 20.0 {
            assert!((v - u - 2.0 * LN_2).abs() < 1e-6, "{u} -> {v}");
            compared += 1;
        }
    }
    assert!(compared > x.len() / 2);
}

#[test]
fn bin_centred_sinusoid_concentrates_energy() {
    let frame = 1764;
    let hop = 882;
    for bin in [20usize, 100, 401] {
        let freq = bin as f64 * RATE as f64 / frame as f64;
        let p = stft_power(&tone(freq, 0.5, 0.5, RATE), frame, hop).unwrap();
        let bins = p.dim(1);
        // skip the zero-padded last frame
        for t in 0..p.dim(0) - 2 {
            let row = &p.data()[t * bins..(t + 1) * bins];
            let total: f64 = row.iter().sum();
            let near: f64 = row[bin - 1..=bin + 1].iter().sum();
            assert!(near / total >= 0.9, "bin {bin} frame {t}: {:.4}", near / total);
        }
    }
}

#[test]
fn periodic_hann_window() {
    let w = hann(8);
    assert_eq!(w[0], 0.0);
    assert!((w[4] - 1.0).abs() < 1e-15);
    assert!((w[2] - 0.5).abs() < 1e-15);
    assert!((w[1] - w[7]).abs() < 1e-15);
}

#[test]
fn htk_mel_scale() {
    assert!((mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
    assert!((mel(1000.0) - 1000.0).abs() < 0.1);
    for hz in [0.0, 123.4, 8000.0, 22_050.0] {
        assert!((mel_to_hz(mel(hz)) - hz).abs() < 1e-9);
    }
}

#[test]
fn filterbank_triangles_peak_at_one_and_overlap_half() {
    let fb = mel_filterbank(883, 40, RATE).unwrap();
    assert_eq!(fb.shape(), &[40, 883]);
    for l in 0..40 {
        let row = &fb.data()[l * 883..(l + 1) * 883];
        let peak = row.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.5 && peak <= 1.0, "band {l} peak {peak}");
        assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    // inside the covered range adjacent triangles sum to one
    let top = mel_to_hz(mel(22_050.0) * 40.0 / 41.0);
    let low = mel_to_hz(mel(22_050.0) / 41.0);
    for k in 0..883 {
        let f = k as f64 * 22_050.0 / 882.0;
        if f > low && f < top {
            let s: f64 = (0..40).map(|l| fb.get(&[l, k])).sum();
            assert!((s - 1.0).abs() < 1e-9, "bin {k}: {s}");
        }
    }
}

#[test]
fn tone_lands_in_the_matching_band() {
    let lm = LogMel::new(RATE, 40).unwrap();
    let x = lm.compute(&AudioClip::new(tone(1000.0, 0.5, 1.0, RATE), RATE).unwrap()).unwrap();
    let t = 10;
    let band = (0..40).max_by(|&a, &b| x.get(&[a, t]).total_cmp(&x.get(&[b, t]))).unwrap();
    let fb = lm.filterbank();
    let bin = (1000.0 * 1764.0 / RATE as f64).round() as usize;
    let best = (0..40).max_by(|&a, &b| fb.get(&[a, bin]).total_cmp(&fb.get(&[b, bin]))).unwrap();
    assert!(band.abs_diff(best) <= 1, "{band} vs {best}");
}

#[test]
fn rate_mismatch_and_short_clips_are_errors() {
    let lm = LogMel::new(RATE, 40).unwrap();
    assert!(lm.compute(&AudioClip::new(vec![0.0; 48_000], 48_000).unwrap()).is_err());
    assert!(lm.compute(&AudioClip::new(vec![0.0; 100], RATE).unwrap()).is_err());
    assert!(mel_filterbank(20, 40, RATE).is_err());
}
