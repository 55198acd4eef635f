//! Synthetic EEG-like recordings with a spatially lateralized class signal.
//!
//! A dipole source in the left (class 0) or right (class 1) temporal region
//! emits a 10 Hz oscillation with a slowly diffusing phase. Each sensor picks
//! it up with inverse-square falloff plus per-channel 1/f noise, so the label
//! lives in the scalp topography — exactly the structure spatial attention is
//! meant to exploit.

use crate::error::Result;
use crate::montage::{Montage, Sensor};
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const HEAD_RADIUS_M: f64 = 0.09;
/// Sensors stay on the upper cap: z >= 0.2 * radius.
pub const CAP_MIN_Z_FRACTION: f64 = 0.2;
pub const SOURCE_FREQ_HZ: f64 = 10.0;
/// Source depth as a fraction of the head radius.
const SOURCE_DEPTH_FRACTION: f64 = 0.75;
/// Leadfield softening term (meters^2): gain = 1 / (d^2 + 0.02^2).
const LEADFIELD_EPS_SQ: f64 = 0.02 * 0.02;
/// Phase diffusion of the source oscillation, rad per sqrt(second).
const PHASE_DIFFUSION: f64 = 1.5;

/// Quasi-uniform sensor positions on the upper spherical cap via a Fibonacci
/// lattice; the seed rotates the lattice azimuth. Deterministic for a fixed
/// `(n, seed)`.
pub fn synth_montage(n: usize, seed: u64) -> Result<Montage> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let offset = rng::stream(seed, "montage-azimuth", &[]).gen_range(0.0..std::f64::consts::TAU);
    let mut sensors = Vec::with_capacity(n);
    for i in 0..n {
        let zf = if n == 1 {
            1.0 // lattice degenerates to the cap apex
        } else {
            1.0 - (i as f64 / (n - 1) as f64) * (1.0 - CAP_MIN_Z_FRACTION)
        };
        let r_ring = (1.0 - zf * zf).max(0.0).sqrt();
        let phi = golden_angle * i as f64 + offset;
        sensors.push(Sensor::new(
            format!("e{:03}", i + 1),
            HEAD_RADIUS_M * r_ring * phi.cos(),
            HEAD_RADIUS_M * r_ring * phi.sin(),
            HEAD_RADIUS_M * zf,
        ));
    }
    Montage::with_default_margin(sensors)
}

/// Greedy farthest-point subset of `k` sensor names, maximizing pairwise
/// spread in 3-D. Starts from the apex-most sensor; deterministic.
pub fn spread_subset(montage: &Montage, k: usize) -> Vec<String> {
    let sensors = montage.sensors();
    assert!(k >= 1 && k <= sensors.len());
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let start = (0..sensors.len())
        .max_by(|&a, &b| {
            sensors[a].pos3d[2]
                .partial_cmp(&sensors[b].pos3d[2])
                .unwrap()
                .then(b.cmp(&a))
        })
        .unwrap();
    let mut chosen = vec![start];
    while chosen.len() < k {
        let next = (0..sensors.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| {
                let da = chosen
                    .iter()
                    .map(|&c| dist(&sensors[a].pos3d, &sensors[c].pos3d))
                    .fold(f64::INFINITY, f64::min);
                let db = chosen
                    .iter()
                    .map(|&c| dist(&sensors[b].pos3d, &sensors[c].pos3d))
                    .fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        chosen.push(next);
    }
    chosen.sort_unstable();
    chosen.iter().map(|&i| sensors[i].name.clone()).collect()
}

/// Where a subject's source sits: a temporal-region direction mirrored by
/// class, with per-subject jitter drawn once from the subject's stream.
pub fn subject_source(label: u8, subject_seed: u64) -> [f64; 3] {
    let mut rng = rng::stream(subject_seed, "source-jitter", &[]);
    // base polar angle 75 degrees from vertical, azimuth 0 (right) or pi (left)
    let theta = 75.0_f64.to_radians() + rng.gen_range(-0.15..0.15);
    let base_phi = if label == 1 { 0.0 } else { std::f64::consts::PI };
    let phi = base_phi + rng.gen_range(-0.3..0.3);
    let r = SOURCE_DEPTH_FRACTION * HEAD_RADIUS_M;
    [
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    ]
}

/// Leadfield gains of a source at `src` for every sensor, normalized to unit
/// mean so signal scale is montage-independent.
pub fn leadfield(montage: &Montage, src: &[f64; 3]) -> Vec<f64> {
    let mut g: Vec<f64> = montage
        .sensors()
        .iter()
        .map(|s| {
            let d2 = (s.pos3d[0] - src[0]).powi(2)
                + (s.pos3d[1] - src[1]).powi(2)
                + (s.pos3d[2] - src[2]).powi(2);
            1.0 / (d2 + LEADFIELD_EPS_SQ)
        })
        .collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter_mut().for_each(|v| *v /= mean);
    g
}

/// Pink-ish noise: white noise through the classic three-pole 1/f
/// approximation, normalized to unit RMS.
fn pink_noise<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let white = Normal::new(0.0, 1.0).unwrap();
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let w: f64 = white.sample(rng);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        out.push(b0 + b1 + b2 + w * 0.1848);
    }
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// One subject's continuous raw recording at `rate` Hz: dipole oscillation
/// through the leadfield plus per-channel pink noise at `snr_db`.
///
/// `noise_db` convention: per-channel noise RMS equals the mean clean-signal
/// RMS times `10^(-snr_db/20)`.
pub fn synth_recording(
    montage: &Montage,
    label: u8,
    subject_seed: u64,
    len: usize,
    rate: f64,
    snr_db: f64,
) -> Tensor {
    let c = montage.len();
    let src = subject_source(label, subject_seed);
    let gains = leadfield(montage, &src);

    // source phase: random start plus a Wiener walk so epochs decorrelate
    let mut phase_rng = rng::stream(subject_seed, "source-phase", &[]);
    let sigma_step = PHASE_DIFFUSION / rate.sqrt();
    let step = Normal::new(0.0, sigma_step).unwrap();
    let mut phase: f64 = phase_rng.gen_range(0.0..std::f64::consts::TAU);
    let omega = std::f64::consts::TAU * SOURCE_FREQ_HZ / rate;
    let mut source = Vec::with_capacity(len);
    for _ in 0..len {
        source.push(phase.sin());
        phase += omega + step.sample(&mut phase_rng);
    }

    let mean_gain_rms = {
        let source_rms = (source.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
        let mean_abs_gain = gains.iter().sum::<f64>() / c as f64;
        source_rms * mean_abs_gain
    };
    let noise_rms = mean_gain_rms * 10f64.powf(-snr_db / 20.0);

    let mut data = Tensor::zeros(&[c, len]);
    for ch in 0..c {
        let mut noise_rng = rng::stream(subject_seed, "channel-noise", &[ch as u64]);
        let noise = pink_noise(len, &mut noise_rng);
        let g = gains[ch];
        let row = data.row_mut(ch);
        for ((v, &s), &n) in row.iter_mut().zip(&source).zip(&noise) {
            *v = g * s + noise_rms * n;
        }
    }
    data
}

/// Reference-channel proxy: the lowest sensor on each side of the head
/// (largest |x| among the low-z ring), standing in for averaged mastoids.
pub fn mastoid_proxies(montage: &Montage) -> Vec<usize> {
    let sensors = montage.sensors();
    if sensors.len() < 2 {
        return vec![0];
    }
    let mut best_left: Option<usize> = None;
    let mut best_right: Option<usize> = None;
    let score = |i: usize| -> f64 {
        // prefer low z, eccentric x
        sensors[i].pos3d[0].abs() - sensors[i].pos3d[2]
    };
    for i in 0..sensors.len() {
        if sensors[i].pos3d[0] < 0.0 {
            if best_left.map_or(true, |b| score(i) > score(b)) {
                best_left = Some(i);
            }
        } else if best_right.map_or(true, |b| score(i) > score(b)) {
            best_right = Some(i);
        }
    }
    let mut out: Vec<usize> = [best_left, best_right].iter().flatten().copied().collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::betainc_reg;

    #[test]
    fn single_sensor_sits_at_apex() {
        let m = synth_montage(1, 0).unwrap();
        let p = m.sensors()[0].pos3d;
        assert_eq!(p[2], HEAD_RADIUS_M);
        assert_eq!((p[0], p[1]), (0.0, 0.0));
    }

    #[test]
    fn lattice_stays_on_cap_with_positive_spacing() {
        let m = synth_montage(128, 42).unwrap();
        let mut min_dist = f64::INFINITY;
        for (i, a) in m.sensors().iter().enumerate() {
            assert!(a.pos3d[2] >= CAP_MIN_Z_FRACTION * HEAD_RADIUS_M - 1e-12);
            let r = (a.pos3d[0].powi(2) + a.pos3d[1].powi(2) + a.pos3d[2].powi(2)).sqrt();
            assert!((r - HEAD_RADIUS_M).abs() < 1e-12);
            for b in m.sensors().iter().skip(i + 1) {
                let d = ((a.pos3d[0] - b.pos3d[0]).powi(2)
                    + (a.pos3d[1] - b.pos3d[1]).powi(2)
                    + (a.pos3d[2] - b.pos3d[2]).powi(2))
                .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 0.0, "coincident sensors in lattice");
    }

    #[test]
    fn montage_is_deterministic() {
        assert_eq!(synth_montage(32, 7).unwrap(), synth_montage(32, 7).unwrap());
        assert_ne!(synth_montage(32, 7).unwrap(), synth_montage(32, 8).unwrap());
    }

    #[test]
    fn spread_subset_is_deterministic_and_spread() {
        let m = synth_montage(32, 7).unwrap();
        let a = spread_subset(&m, 8);
        let b = spread_subset(&m, 8);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        // all names distinct and present
        for n in &a {
            assert!(m.index_of(n).is_some());
        }
    }

    #[test]
    fn noiseless_recording_peaks_at_nearest_sensor() {
        let m = synth_montage(32, 7).unwrap();
        let label = 1u8;
        let seed = rng::derive(99, "subject", &[4]);
        let data = synth_recording(&m, label, seed, 512, 128.0, 300.0); // ~no noise
        let src = subject_source(label, seed);
        let nearest = (0..32)
            .min_by(|&a, &b| {
                let d = |i: usize| {
                    let p = m.sensors()[i].pos3d;
                    (p[0] - src[0]).powi(2) + (p[1] - src[1]).powi(2) + (p[2] - src[2]).powi(2)
                };
                d(a).partial_cmp(&d(b)).unwrap()
            })
            .unwrap();
        let rms_of = |ch: usize| {
            (data.row(ch).iter().map(|x| x * x).sum::<f64>() / 512.0).sqrt()
        };
        let best = (0..32).max_by(|&a, &b| rms_of(a).partial_cmp(&rms_of(b)).unwrap()).unwrap();
        assert_eq!(best, nearest);
    }

    #[test]
    fn same_subject_same_source_different_phases() {
        let m = synth_montage(16, 3).unwrap();
        let seed = rng::derive(5, "subject", &[0]);
        let data = synth_recording(&m, 0, seed, 1024, 128.0, 300.0);
        // project two separate epochs onto quadrature 10 Hz carriers
        let phase_of = |offset: usize| {
            let mut s = 0.0;
            let mut c = 0.0;
            for t in 0..256 {
                let ang = std::f64::consts::TAU * SOURCE_FREQ_HZ * t as f64 / 128.0;
                s += data.at2(0, offset + t) * ang.sin();
                c += data.at2(0, offset + t) * ang.cos();
            }
            c.atan2(s)
        };
        let p1 = phase_of(0);
        let p2 = phase_of(512);
        assert!((p1 - p2).abs() > 0.01, "phases identical across epochs");
        // while the source location is fixed per subject
        assert_eq!(subject_source(0, seed), subject_source(0, seed));
    }

    #[test]
    fn class_topography_lateralizes() {
        let m = synth_montage(32, 7).unwrap();
        let mut successes = 0usize;
        let n = 200usize;
        for e in 0..n {
            let label = (e % 2) as u8;
            let seed = rng::derive(1234, "subject", &[e as u64]);
            let data = synth_recording(&m, label, seed, 256, 128.0, 0.0);
            let mut left = 0.0;
            let mut right = 0.0;
            let (mut nl, mut nr) = (0usize, 0usize);
            for (ch, s) in m.sensors().iter().enumerate() {
                let r = (data.row(ch).iter().map(|x| x * x).sum::<f64>() / 256.0).sqrt();
                if s.pos3d[0] < 0.0 {
                    left += r;
                    nl += 1;
                } else {
                    right += r;
                    nr += 1;
                }
            }
            let diff = right / nr as f64 - left / nl as f64;
            let matches = if label == 1 { diff > 0.0 } else { diff < 0.0 };
            if matches {
                successes += 1;
            }
        }
        // two-sided binomial sign test against p = 1/2
        let k = successes.max(n - successes);
        let p_tail = betainc_reg(k as f64, (n - k + 1) as f64, 0.5);
        let p = (2.0 * p_tail).min(1.0);
        assert!(
            successes > n / 2 && p < 0.01,
            "lateralization sign test failed: {successes}/{n}, p = {p}"
        );
    }
}
