//! The raw-data preprocessing chain: re-referencing, zero-phase FIR
//! band-pass, polyphase resampling, epoching, and per-epoch mean removal.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::f64::consts::PI;

pub const BANDPASS_LO_HZ: f64 = 0.25;
pub const BANDPASS_HI_HZ: f64 = 25.0;
/// Half the transition width: the -6 dB points sit this far outside the band.
pub const CUTOFF_OFFSET_HZ: f64 = 0.125;
/// Tap count of the reference design at 500 Hz; scaled proportionally at
/// other rates so the transition width in Hz stays fixed.
pub const REFERENCE_TAPS_AT_500: f64 = 6601.0;
pub const EPOCH_SAMPLES: usize = 256;

/// Subtract each channel's own mean.
pub fn remove_mean(data: &Tensor) -> Tensor {
    let mut out = data.clone();
    let (c, t) = (data.shape()[0], data.shape()[1]);
    for ch in 0..c {
        let row = out.row_mut(ch);
        let mean = row.iter().sum::<f64>() / t as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Subtract the mean of the referenced channels' signals from every channel.
pub fn rereference(data: &Tensor, ref_indices: &[usize]) -> Result<Tensor> {
    let (c, t) = (data.shape()[0], data.shape()[1]);
    if ref_indices.is_empty() {
        return Err(Error::Config("rereference: empty reference set".to_string()));
    }
    if let Some(&bad) = ref_indices.iter().find(|&&i| i >= c) {
        return Err(Error::Config(format!(
            "rereference: channel index {bad} out of range ({c} channels)"
        )));
    }
    let mut reference = vec![0.0; t];
    for &i in ref_indices {
        for (r, &v) in reference.iter_mut().zip(data.row(i)) {
            *r += v;
        }
    }
    let inv = 1.0 / ref_indices.len() as f64;
    reference.iter_mut().for_each(|r| *r *= inv);
    let mut out = data.clone();
    for ch in 0..c {
        for (v, r) in out.row_mut(ch).iter_mut().zip(&reference) {
            *v -= r;
        }
    }
    Ok(out)
}

/// Number of taps for the band-pass at `rate`: the 500 Hz reference count
/// scaled by rate and rounded to the nearest odd integer.
pub fn bandpass_taps_len(rate: f64) -> usize {
    let n = (REFERENCE_TAPS_AT_500 * rate / 500.0).round() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Unit-DC-gain windowed-sinc lowpass (Hamming), odd length.
fn hamming_sinc_lowpass(cutoff_cycles: f64, taps: usize) -> Vec<f64> {
    debug_assert!(taps % 2 == 1);
    let center = (taps - 1) as f64 / 2.0;
    let mut h = vec![0.0; taps];
    for (n, tap) in h.iter_mut().enumerate() {
        let x = n as f64 - center;
        let sinc = if x == 0.0 {
            2.0 * cutoff_cycles
        } else {
            (2.0 * PI * cutoff_cycles * x).sin() / (PI * x)
        };
        let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
        *tap = sinc * window;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Band-pass taps as the difference of two lowpasses whose cutoffs sit at
/// the -6 dB points `lo - 0.125` and `hi + 0.125` Hz.
pub fn bandpass_taps(rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    let taps = bandpass_taps_len(rate);
    let f_lo = (lo - CUTOFF_OFFSET_HZ).max(0.0) / rate;
    let f_hi = (hi + CUTOFF_OFFSET_HZ) / rate;
    let high = hamming_sinc_lowpass(f_hi, taps);
    let low = hamming_sinc_lowpass(f_lo, taps);
    high.iter().zip(&low).map(|(a, b)| a - b).collect()
}

/// Odd (anti-symmetric) reflection about each endpoint value; keeps the
/// extension continuous and tames filter edge transients.
fn mirror_pad(signal: &[f64], pad: usize) -> Vec<f64> {
    let n = signal.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(2.0 * signal[0] - signal[i]);
    }
    out.extend_from_slice(signal);
    for i in 1..=pad {
        out.push(2.0 * signal[n - 1] - signal[n - 1 - i]);
    }
    out
}

fn convolve_valid(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let out_len = signal.len() + 1 - n;
    let mut out = vec![0.0; out_len];
    for (u, o) in out.iter_mut().enumerate() {
        let window = &signal[u..u + n];
        let mut acc = 0.0;
        for (w, t) in window.iter().zip(taps) {
            acc += w * t;
        }
        *o = acc;
    }
    out
}

/// Zero-phase FIR band-pass: the symmetric windowed-sinc kernel applied
/// forward and backward over a mirror-padded extension, cropped back to the
/// input length. Requires `rate > 2 hi` and more samples than taps.
pub fn fir_bandpass(signal: &[f64], rate: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if rate <= 2.0 * hi {
        return Err(Error::Config(format!(
            "fir_bandpass: rate {rate} must exceed twice the upper cutoff {hi}"
        )));
    }
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::Config(format!("fir_bandpass: bad band {lo}..{hi}")));
    }
    let taps = bandpass_taps(rate, lo, hi);
    let n = taps.len();
    if signal.len() <= n {
        return Err(Error::Config(format!(
            "fir_bandpass: signal length {} must exceed the filter order {n}",
            signal.len()
        )));
    }
    let ext = mirror_pad(signal, n - 1);
    let once = convolve_valid(&ext, &taps);
    // second (backward) pass: taps are symmetric, so convolving again is
    // identical to time-reversed filtering and the net phase is zero
    Ok(convolve_valid(&once, &taps))
}

/// Convenience: band-pass with the 0.25-25 Hz defaults.
pub fn fir_bandpass_default(signal: &[f64], rate: f64) -> Result<Vec<f64>> {
    fir_bandpass(signal, rate, BANDPASS_LO_HZ, BANDPASS_HI_HZ)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reflected index for positions outside `[0, n)`.
fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Polyphase rational resampling by `p/q` with an anti-alias Hamming-sinc
/// lowpass at the tighter of the two Nyquist limits. Output length is
/// `ceil(len * p / q)`; `p = q` returns the input unchanged.
pub fn resample(signal: &[f64], p: usize, q: usize) -> Result<Vec<f64>> {
    if p == 0 || q == 0 {
        return Err(Error::Config("resample: p and q must be >= 1".to_string()));
    }
    let g = gcd(p, q);
    let (p, q) = (p / g, q / g);
    if p == q {
        return Ok(signal.to_vec());
    }
    let t = signal.len();
    let out_len = (t * p).div_ceil(q);
    // kernel in the p-upsampled domain
    let m = p.max(q);
    let half = 8 * m;
    let taps_len = 2 * half + 1;
    let kernel = hamming_sinc_lowpass(0.5 / m as f64, taps_len);
    let center = half as isize;
    let mut out = vec![0.0; out_len];
    for (n, o) in out.iter_mut().enumerate() {
        let pos = (n * q) as isize;
        // contributing input samples j with kernel index center + j*p - pos
        let j_lo = (pos - center).div_euclid(p as isize);
        let j_hi = (pos + center).div_euclid(p as isize);
        let mut acc = 0.0;
        for j in j_lo..=j_hi {
            let u = center + j * p as isize - pos;
            if u >= 0 && (u as usize) < taps_len {
                acc += kernel[u as usize] * signal[mirror_index(j, t)];
            }
        }
        *o = acc * p as f64;
    }
    Ok(out)
}

/// Split `[C, total]` into consecutive non-overlapping `[C, win]` windows;
/// the remainder is discarded.
pub fn epoch_windows(data: &Tensor, win: usize) -> Result<Vec<Tensor>> {
    let (c, total) = (data.shape()[0], data.shape()[1]);
    if total < win {
        return Err(Error::Config(format!(
            "epoch_windows: {total} samples is shorter than one {win}-sample window"
        )));
    }
    let count = total / win;
    let mut out = Vec::with_capacity(count);
    for e in 0..count {
        let mut epoch = Tensor::zeros(&[c, win]);
        for ch in 0..c {
            epoch
                .row_mut(ch)
                .copy_from_slice(&data.row(ch)[e * win..(e + 1) * win]);
        }
        out.push(epoch);
    }
    Ok(out)
}

#[cfg(test)]
fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}
