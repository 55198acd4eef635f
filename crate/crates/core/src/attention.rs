//! Spatial attention over sensor coordinates.
//!
//! Each output channel j carries a learnable complex frequency matrix `z_j`
//! of extent K x K. A sensor at normalized planar position (x, y) gets the
//! score
//!
//! ```text
//! a_j(x, y) = sum_{k=1..K} sum_{l=1..K}
//!     Re(z_j^{(k,l)}) cos(2 pi (k x + l y)) + Im(z_j^{(k,l)}) sin(2 pi (k x + l y))
//! ```
//!
//! (frequencies start at 1; there is no DC term). Output channel j is the
//! softmax-weighted sum of the input channels under these scores, followed by
//! a 1x1 convolution across output channels. Since the scores are functions
//! of coordinates, not channel indices, the same parameters accept any number
//! of input channels — that is the harmonization property the rest of the
//! crate builds on.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;
use std::sync::Arc;

pub const DEFAULT_DROP_RADIUS: f64 = 0.1;

/// Learnable parameters of one spatial attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttentionParams {
    /// Real parts of z, shape `[D1, K, K]`.
    pub re: Tensor,
    /// Imaginary parts of z, shape `[D1, K, K]`.
    pub im: Tensor,
    /// 1x1 mixing weights, shape `[D1, D1]`.
    pub mix_w: Tensor,
    /// Mixing bias, shape `[D1]`. Ignored when `mix_bias` is false.
    pub mix_b: Tensor,
    pub k: usize,
    pub d1: usize,
    pub mix_bias: bool,
}

impl SpatialAttentionParams {
    pub fn zeros(d1: usize, k: usize) -> SpatialAttentionParams {
        SpatialAttentionParams {
            re: Tensor::zeros(&[d1, k, k]),
            im: Tensor::zeros(&[d1, k, k]),
            mix_w: Tensor::eye(d1),
            mix_b: Tensor::zeros(&[d1]),
            k,
            d1,
            mix_bias: true,
        }
    }

    /// Random initialization: re/im entries are zero-mean Gaussian with
    /// standard deviation 1/K so the initial scores stay O(1) and the softmax
    /// starts near-uniform; the mixing starts at identity plus small noise so
    /// the averaged signal passes through.
    pub fn init<R: Rng>(d1: usize, k: usize, mix_bias: bool, rng: &mut R) -> SpatialAttentionParams {
        let freq = Normal::new(0.0, 1.0 / k as f64).unwrap();
        let jitter = Normal::new(0.0, 0.01).unwrap();
        let mut p = SpatialAttentionParams::zeros(d1, k);
        p.mix_bias = mix_bias;
        for v in p.re.data_mut() {
            *v = freq.sample(rng);
        }
        for v in p.im.data_mut() {
            *v = freq.sample(rng);
        }
        for v in p.mix_w.data_mut() {
            *v += jitter.sample(rng);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, k) = (self.d1, self.k);
        if self.re.shape() != [d1, k, k] || self.im.shape() != [d1, k, k] {
            return Err(Error::Shape("attention z tensors".to_string()));
        }
        if self.mix_w.shape() != [d1, d1] || self.mix_b.shape() != [d1] {
            return Err(Error::Shape("attention mixing tensors".to_string()));
        }
        self.re.check_finite("attention re")?;
        self.im.check_finite("attention im")?;
        self.mix_w.check_finite("attention mix_w")?;
        self.mix_b.check_finite("attention mix_b")
    }

    pub fn param_count(&self) -> usize {
        self.re.len()
            + self.im.len()
            + self.mix_w.len()
            + if self.mix_bias { self.mix_b.len() } else { 0 }
    }
}

/// A circular training-time dropout region in normalized layout coordinates.
/// Sensors strictly closer than `radius` to `center` are excluded from the
/// softmax. A zero radius therefore drops nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropRegion {
    pub center: [f64; 2],
    pub radius: f64,
    pub enabled: bool,
}

impl DropRegion {
    pub fn disabled() -> DropRegion {
        DropRegion {
            center: [0.0, 0.0],
            radius: DEFAULT_DROP_RADIUS,
            enabled: false,
        }
    }

    pub fn at(center: [f64; 2]) -> DropRegion {
        DropRegion {
            center,
            radius: DEFAULT_DROP_RADIUS,
            enabled: true,
        }
    }

    fn drops(&self, coord: &[f64; 2]) -> bool {
        if !self.enabled {
            return false;
        }
        let dx = coord[0] - self.center[0];
        let dy = coord[1] - self.center[1];
        (dx * dx + dy * dy).sqrt() < self.radius
    }
}

/// Pick a drop region centered on one of the sensor locations, uniformly at
/// random. If the region would eliminate every sensor (single-sensor montages,
/// tightly clustered layouts), returns a disabled region instead — the
/// softmax is undefined over an empty set.
pub fn sample_drop_region<R: Rng>(coords: &[[f64; 2]], rng: &mut R) -> DropRegion {
    assert!(!coords.is_empty(), "sample_drop_region: empty coords");
    let center = coords[rng.gen_range(0..coords.len())];
    let region = DropRegion::at(center);
    if coords.iter().any(|c| !region.drops(c)) {
        region
    } else {
        DropRegion::disabled()
    }
}

/// The literal per-output-channel variant: one region per output channel.
pub fn sample_drop_regions_per_output<R: Rng>(
    coords: &[[f64; 2]],
    d1: usize,
    rng: &mut R,
) -> Vec<DropRegion> {
    (0..d1).map(|_| sample_drop_region(coords, rng)).collect()
}

/// Reference generic attention: `softmax(Q K^T) V`, softmax over the last
/// axis. Kept as a documented fixture for the softmax-weighted-sum pattern;
/// the spatial layer below specializes the scores to coordinate functions.
pub fn attention_reference(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
        return Err(Error::Shape(format!(
            "attention_reference: Q {qs:?}, K {ks:?}, V {vs:?}"
        )));
    }
    let (n, m, p) = (qs[0], ks[0], vs[1]);
    let mut out = Tensor::zeros(&[n, p]);
    for i in 0..n {
        let mut scores = vec![0.0; m];
        for (j, s) in scores.iter_mut().enumerate() {
            *s = q.row(i).iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
        }
        let weights = softmax(&scores);
        for (j, &w) in weights.iter().enumerate() {
            for (o, &vv) in out.row_mut(i).iter_mut().zip(v.row(j)) {
                *o += w * vv;
            }
        }
    }
    Ok(out)
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Precomputed Fourier basis and scores for one coordinate set.
///
/// The basis depends only on the coordinates, and the scores only on
/// (params, coordinates), so a training batch sharing one montage computes
/// this once and reuses it for every sample.
#[derive(Debug)]
pub struct ScoreTable {
    /// cos(2 pi (k x_i + l y_i)), shape `[C, K*K]`.
    basis_cos: Tensor,
    /// sin(2 pi (k x_i + l y_i)), shape `[C, K*K]`.
    basis_sin: Tensor,
    /// a_j(x_i, y_i), shape `[D1, C]`.
    scores: Tensor,
    coords: Vec<[f64; 2]>,
}

impl ScoreTable {
    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
}

/// Evaluate the K x K trigonometric basis at one coordinate.
///
/// Uses the angle-addition identities on per-axis tables, so only 4K
/// trigonometric evaluations are needed instead of 2K^2.
fn basis_at(k: usize, x: f64, y: f64, cos_out: &mut [f64], sin_out: &mut [f64]) {
    let mut cx = vec![0.0; k];
    let mut sx = vec![0.0; k];
    let mut cy = vec![0.0; k];
    let mut sy = vec![0.0; k];
    for f in 0..k {
        let fx = TAU * (f + 1) as f64 * x;
        let fy = TAU * (f + 1) as f64 * y;
        cx[f] = fx.cos();
        sx[f] = fx.sin();
        cy[f] = fy.cos();
        sy[f] = fy.sin();
    }
    for kk in 0..k {
        for ll in 0..k {
            let idx = kk * k + ll;
            cos_out[idx] = cx[kk] * cy[ll] - sx[kk] * sy[ll];
            sin_out[idx] = sx[kk] * cy[ll] + cx[kk] * sy[ll];
        }
    }
}

/// Build the score table for a coordinate set.
pub fn score_table(params: &SpatialAttentionParams, coords: &[[f64; 2]]) -> Result<ScoreTable> {
    params.validate()?;
    let c = coords.len();
    if c == 0 {
        return Err(Error::Config("attention: zero input channels".to_string()));
    }
    for (i, p) in coords.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::NonFinite(format!("coordinate {i}")));
        }
    }
    let (k, d1) = (params.k, params.d1);
    let kk = k * k;
    let mut basis_cos = Tensor::zeros(&[c, kk]);
    let mut basis_sin = Tensor::zeros(&[c, kk]);
    for (i, p) in coords.iter().enumerate() {
        basis_at(k, p[0], p[1], basis_cos.row_mut(i), basis_sin.row_mut(i));
    }
    let mut scores = Tensor::zeros(&[d1, c]);
    for j in 0..d1 {
        let re = &params.re.data()[j * kk..(j + 1) * kk];
        let im = &params.im.data()[j * kk..(j + 1) * kk];
        for i in 0..c {
            let bc = basis_cos.row(i);
            let bs = basis_sin.row(i);
            let mut acc = 0.0;
            for t in 0..kk {
                acc += re[t] * bc[t] + im[t] * bs[t];
            }
            *scores.at2_mut(j, i) = acc;
        }
    }
    Ok(ScoreTable {
        basis_cos,
        basis_sin,
        scores,
        coords: coords.to_vec(),
    })
}

/// Score of output channel `j` at coordinate (x, y).
pub fn fourier_score(
    params: &SpatialAttentionParams,
    j: usize,
    x: f64,
    y: f64,
) -> Result<f64> {
    if j >= params.d1 {
        return Err(Error::Config(format!(
            "fourier_score: output index {j} out of range (D1 = {})",
            params.d1
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("fourier_score coordinate".to_string()));
    }
    let k = params.k;
    let kk = k * k;
    let mut bc = vec![0.0; kk];
    let mut bs = vec![0.0; kk];
    basis_at(k, x, y, &mut bc, &mut bs);
    let re = &params.re.data()[j * kk..(j + 1) * kk];
    let im = &params.im.data()[j * kk..(j + 1) * kk];
    let mut acc = 0.0;
    for t in 0..kk {
        acc += re[t] * bc[t] + im[t] * bs[t];
    }
    Ok(acc)
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug)]
pub struct ForwardCache {
    table: Arc<ScoreTable>,
    /// Softmax weights, shape `[D1, C]`; dropped sensors hold exactly 0.
    weights: Tensor,
    /// Pre-mixing weighted sums, shape `[D1, T]`.
    summed: Tensor,
    /// Input copy, shape `[C, T]`.
    x: Tensor,
    mix_bias: bool,
    mix_w: Tensor,
}

/// Forward pass against a prebuilt score table (batch path).
///
/// `drops` holds either one shared region or one region per output channel.
/// If a region would eliminate every sensor it is ignored for this call.
pub fn forward_with_table(
    params: &SpatialAttentionParams,
    table: &Arc<ScoreTable>,
    x: &Tensor,
    drops: &[DropRegion],
) -> Result<(Tensor, ForwardCache)> {
    let (d1, c) = (params.d1, table.coords.len());
    let xs = x.shape();
    if xs.len() != 2 || xs[0] != c {
        return Err(Error::Shape(format!(
            "attention input {xs:?} does not match {c} coordinates"
        )));
    }
    if !(drops.len() == 1 || drops.len() == d1) {
        return Err(Error::Shape(format!(
            "expected 1 or {d1} drop regions, got {}",
            drops.len()
        )));
    }
    let t = xs[1];
    x.check_finite("attention input")?;

    let mut weights = Tensor::zeros(&[d1, c]);
    let mut summed = Tensor::zeros(&[d1, t]);
    for j in 0..d1 {
        let region = if drops.len() == 1 { &drops[0] } else { &drops[j] };
        let mask: Vec<bool> = table.coords.iter().map(|p| !region.drops(p)).collect();
        let any_survivor = mask.iter().any(|&m| m);
        let scores = table.scores.row(j);

        let mut max = f64::NEG_INFINITY;
        for i in 0..c {
            if (mask[i] || !any_survivor) && scores[i] > max {
                max = scores[i];
            }
        }
        let mut sum = 0.0;
        let wrow = weights.row_mut(j);
        for i in 0..c {
            if mask[i] || !any_survivor {
                wrow[i] = (scores[i] - max).exp();
                sum += wrow[i];
            }
        }
        for w in wrow.iter_mut() {
            *w /= sum;
        }
        let srow = summed.row_mut(j);
        for i in 0..c {
            let w = weights.at2(j, i);
            if w != 0.0 {
                let xrow = x.row(i);
                for (s, &v) in srow.iter_mut().zip(xrow) {
                    *s += w * v;
                }
            }
        }
    }

    // 1x1 mixing across output channels, broadcast over time.
    let mut y = Tensor::zeros(&[d1, t]);
    for j in 0..d1 {
        let yrow = y.row_mut(j);
        if params.mix_bias {
            let b = params.mix_b.data()[j];
            yrow.iter_mut().for_each(|v| *v = b);
        }
        for jp in 0..d1 {
            let w = params.mix_w.at2(j, jp);
            if w != 0.0 {
                for (o, &s) in yrow.iter_mut().zip(summed.row(jp)) {
                    *o += w * s;
                }
            }
        }
    }

    let cache = ForwardCache {
        table: Arc::clone(table),
        weights,
        summed,
        x: x.clone(),
        mix_bias: params.mix_bias,
        mix_w: params.mix_w.clone(),
    };
    Ok((y, cache))
}

/// Standalone forward pass: builds the score table, applies one shared drop
/// region, and returns the output with a cache for the backward pass.
pub fn spatial_attention_forward(
    params: &SpatialAttentionParams,
    coords: &[[f64; 2]],
    x: &Tensor,
    drop: &DropRegion,
) -> Result<(Tensor, ForwardCache)> {
    let table = Arc::new(score_table(params, coords)?);
    forward_with_table(params, &table, x, std::slice::from_ref(drop))
}

/// Gradients of `<dY, Y>` with respect to the layer inputs and parameters.
#[derive(Debug)]
pub struct AttentionGrads {
    pub dx: Tensor,
    pub d_re: Tensor,
    pub d_im: Tensor,
    pub d_mix_w: Tensor,
    pub d_mix_b: Tensor,
}

pub fn spatial_attention_backward(cache: &ForwardCache, dy: &Tensor) -> Result<AttentionGrads> {
    let d1 = cache.summed.shape()[0];
    let t = cache.summed.shape()[1];
    let c = cache.x.shape()[0];
    let kk = cache.table.basis_cos.shape()[1];
    let k = (kk as f64).sqrt() as usize;
    if dy.shape() != [d1, t] {
        return Err(Error::Shape(format!(
            "attention backward: dY {:?} does not match [{}, {}]",
            dy.shape(),
            d1,
            t
        )));
    }

    // Mixing backward: Y = W S + b.
    let mut d_mix_w = Tensor::zeros(&[d1, d1]);
    let mut d_mix_b = Tensor::zeros(&[d1]);
    let mut d_summed = Tensor::zeros(&[d1, t]);
    for j in 0..d1 {
        let dyrow = dy.row(j);
        if cache.mix_bias {
            d_mix_b.data_mut()[j] = dyrow.iter().sum();
        }
        for jp in 0..d1 {
            let srow = cache.summed.row(jp);
            let mut acc = 0.0;
            for (a, b) in dyrow.iter().zip(srow) {
                acc += a * b;
            }
            *d_mix_w.at2_mut(j, jp) = acc;
            let w = cache.mix_w.at2(j, jp);
            if w != 0.0 {
                let drow = d_summed.row_mut(jp);
                for (d, &g) in drow.iter_mut().zip(dyrow) {
                    *d += w * g;
                }
            }
        }
    }

    // Softmax-weighted-sum backward. For each output j:
    //   g_i = <dS_j, X_i>,  da_{j,i} = w_i (g_i - sum_i' w_i' g_i'),
    // and dropped sensors (w = 0) receive zero gradient.
    let mut dx = Tensor::zeros(&[c, t]);
    let mut da = Tensor::zeros(&[d1, c]);
    for j in 0..d1 {
        let drow = d_summed.row(j);
        let mut g = vec![0.0; c];
        for i in 0..c {
            let w = cache.weights.at2(j, i);
            if w != 0.0 {
                let xrow = cache.x.row(i);
                let mut acc = 0.0;
                for (a, b) in drow.iter().zip(xrow) {
                    acc += a * b;
                }
                g[i] = acc;
                let dxrow = dx.row_mut(i);
                for (d, &v) in dxrow.iter_mut().zip(drow) {
                    *d += w * v;
                }
            }
        }
        let mut expected = 0.0;
        for i in 0..c {
            expected += cache.weights.at2(j, i) * g[i];
        }
        for i in 0..c {
            let w = cache.weights.at2(j, i);
            *da.at2_mut(j, i) = w * (g[i] - expected);
        }
    }

    // Score backward into the frequency parameters through the basis.
    let mut d_re = Tensor::zeros(&[d1, k, k]);
    let mut d_im = Tensor::zeros(&[d1, k, k]);
    for j in 0..d1 {
        let dre = &mut d_re.data_mut()[j * kk..(j + 1) * kk];
        for i in 0..c {
            let a = da.at2(j, i);
            if a != 0.0 {
                let bc = cache.table.basis_cos.row(i);
                for (d, &b) in dre.iter_mut().zip(bc) {
                    *d += a * b;
                }
            }
        }
        let dim = &mut d_im.data_mut()[j * kk..(j + 1) * kk];
        for i in 0..c {
            let a = da.at2(j, i);
            if a != 0.0 {
                let bs = cache.table.basis_sin.row(i);
                for (d, &b) in dim.iter_mut().zip(bs) {
                    *d += a * b;
                }
            }
        }
    }

    Ok(AttentionGrads {
        dx,
        d_re,
        d_im,
        d_mix_w,
        d_mix_b,
    })
}
