//! Per-voxel multiscale features: a Gaussian pyramid, intensity and
//! gradient-magnitude channels at every level, and distances to a k-means
//! codebook appended as extra channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, Dims, Spacing, VolumeGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevel {
    pub level: usize,
    pub grid: VolumeGrid,
    /// Accumulated smoothing width in millimeters along (z, y, x).
    pub sigma_mm: [f64; 3],
}

/// Mirror index into `0..n` (half-sample symmetric, period `2n`).
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

fn convolve_axis(data: &[f64], dims: Dims, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let n = dims[axis];
    let mut out = vec![0.0; data.len()];
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z, y, x];
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let mut q = p;
                    q[axis] = reflect(p[axis] as i64 + t as i64 - radius, n);
                    acc += w * data[linear_index(dims, q[0], q[1], q[2])];
                }
                out[linear_index(dims, z, y, x)] = acc;
            }
        }
    }
    out
}

/// Separable Gaussian smoothing with reflective boundaries, returned in f64.
pub fn gaussian_smooth(grid: &VolumeGrid, sigma_vox: f64) -> Vec<f64> {
    let dims = grid.dims();
    let kernel = gaussian_kernel(sigma_vox);
    let mut data: Vec<f64> = grid.voxels().iter().map(|&v| v as f64).collect();
    if kernel.len() == 1 {
        return data;
    }
    for axis in 0..3 {
        data = convolve_axis(&data, dims, axis, &kernel);
    }
    data
}

pub fn gaussian_pyramid(grid: &VolumeGrid, levels: usize, sigma_vox: f64) -> Result<Vec<PyramidLevel>> {
    let dims = grid.dims();
    if levels == 0 || levels > 20 || dims.iter().any(|&d| d < 1usize << (levels - 1)) {
        return Err(Error::GridTooSmall { dims, levels });
    }
    let mut out = vec![PyramidLevel {
        level: 0,
        grid: grid.clone(),
        sigma_mm: [0.0; 3],
    }];
    for level in 1..levels {
        let prev = &out[level - 1];
        let pdims = prev.grid.dims();
        let smoothed = gaussian_smooth(&prev.grid, sigma_vox);
        let ndims = [pdims[0].div_ceil(2), pdims[1].div_ceil(2), pdims[2].div_ceil(2)];
        let sp = prev.grid.spacing();
        let next = VolumeGrid::from_fn(ndims, sp.scaled(2.0)?, |z, y, x| {
            smoothed[linear_index(pdims, 2 * z, 2 * y, 2 * x)] as f32
        });
        let spa = sp.as_array();
        let mut sigma_mm = prev.sigma_mm;
        for a in 0..3 {
            sigma_mm[a] = (sigma_mm[a].powi(2) + (sigma_vox * spa[a]).powi(2)).sqrt();
        }
        out.push(PyramidLevel {
            level,
            grid: next,
            sigma_mm,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats { mean: 0.0, std: 1.0 };

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Per-voxel feature vectors stored voxel-major (`voxel * F + channel`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    dims: Dims,
    spacing: Spacing,
    n_features: usize,
    data: Vec<f64>,
    /// Normalization applied to each channel; identity for raw features.
    stats: Vec<ChannelStats>,
}

impl FeatureVolume {
    pub fn from_raw(dims: Dims, spacing: Spacing, n_features: usize, data: Vec<f64>) -> Result<Self> {
        let expected = crate::volume::voxel_count(dims) * n_features;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite feature value".into()));
        }
        Ok(FeatureVolume {
            dims,
            spacing,
            n_features,
            data,
            stats: vec![ChannelStats::IDENTITY; n_features],
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_voxels(&self) -> usize {
        self.data.len() / self.n_features.max(1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn stats(&self) -> &[ChannelStats] {
        &self.stats
    }

    #[inline]
    pub fn voxel(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.n_features).copied()
    }

    /// Mean and population standard deviation of each channel. Channels with
    /// zero spread get `std = 1` so they normalize to zero.
    pub fn channel_stats(&self) -> Vec<ChannelStats> {
        pooled_channel_stats(std::slice::from_ref(self))
    }

    /// Applies `stats` to every channel; the stored stats compose with any
    /// normalization already applied.
    pub fn normalized_with(&self, stats: &[ChannelStats]) -> Result<Self> {
        if stats.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                actual: stats.len(),
            });
        }
        let f = self.n_features;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| stats[i % f].apply(v))
            .collect();
        let composed = self
            .stats
            .iter()
            .zip(stats)
            .map(|(a, b)| ChannelStats {
                mean: a.mean + b.mean * a.std,
                std: a.std * b.std,
            })
            .collect();
        Ok(FeatureVolume {
            dims: self.dims,
            spacing: self.spacing,
            n_features: f,
            data,
            stats: composed,
        })
    }

    pub fn standardized(&self) -> Self {
        self.normalized_with(&self.channel_stats()).expect("matching length")
    }

    /// Concatenates the channels of `other` after this volume's channels.
    pub fn concat(&self, other: &FeatureVolume) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        let f = self.n_features + other.n_features;
        let mut data = Vec::with_capacity(self.n_voxels() * f);
        for i in 0..self.n_voxels() {
            data.extend_from_slice(self.voxel(i));
            data.extend_from_slice(other.voxel(i));
        }
        let mut stats = self.stats.clone();
        stats.extend_from_slice(&other.stats);
        Ok(FeatureVolume {
            dims: self.dims,
            spacing: self.spacing,
            n_features: f,
            data,
            stats,
        })
    }
}

pub(crate) fn pooled_channel_stats(volumes: &[FeatureVolume]) -> Vec<ChannelStats> {
    let f = volumes.first().map_or(0, |v| v.n_features);
    let mut sum = vec![0.0; f];
    let mut n = 0usize;
    for v in volumes {
        for i in 0..v.n_voxels() {
            for (s, &x) in sum.iter_mut().zip(v.voxel(i)) {
                *s += x;
            }
        }
        n += v.n_voxels();
    }
    let n = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut var = vec![0.0; f];
    for v in volumes {
        for i in 0..v.n_voxels() {
            for ((s, &x), m) in var.iter_mut().zip(v.voxel(i)).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
    }
    mean.into_iter()
        .zip(var)
        .map(|(mean, v)| {
            let std = (v / n).sqrt();
            ChannelStats {
                mean,
                std: if std > 1e-12 { std } else { 1.0 },
            }
        })
        .collect()
}

/// Central-difference gradient magnitude in intensity per millimeter;
/// one-sided differences on the faces.
pub fn gradient_magnitude(grid: &VolumeGrid) -> Vec<f64> {
    let dims = grid.dims();
    let sp = grid.spacing().as_array();
    let v = grid.voxels();
    let mut out = vec![0.0; v.len()];
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z, y, x];
                let mut g2 = 0.0;
                for a in 0..3 {
                    let n = dims[a];
                    if n < 2 {
                        continue;
                    }
                    let (lo, hi) = if p[a] == 0 {
                        (0, 1)
                    } else if p[a] == n - 1 {
                        (n - 2, n - 1)
                    } else {
                        (p[a] - 1, p[a] + 1)
                    };
                    let mut ql = p;
                    let mut qh = p;
                    ql[a] = lo;
                    qh[a] = hi;
                    let d = v[linear_index(dims, qh[0], qh[1], qh[2])] as f64
                        - v[linear_index(dims, ql[0], ql[1], ql[2])] as f64;
                    let g = d / ((hi - lo) as f64 * sp[a]);
                    g2 += g * g;
                }
                out[linear_index(dims, z, y, x)] = g2.sqrt();
            }
        }
    }
    out
}

/// Nearest coarse index for each fine index at a pyramid level.
fn nearest_map(n_fine: usize, n_coarse: usize, level: usize) -> Vec<usize> {
    let scale = (1usize << level) as f64;
    (0..n_fine)
        .map(|i| ((i as f64 / scale).round() as usize).min(n_coarse - 1))
        .collect()
}

/// Raw (unnormalized) multiscale channels: intensity at every level, then
/// gradient magnitude at every level when enabled.
pub fn raw_voxel_features(pyramid: &[PyramidLevel], include_gradient: bool) -> Result<FeatureVolume> {
    let base = pyramid
        .first()
        .ok_or_else(|| Error::Config("empty pyramid".into()))?;
    let dims = base.grid.dims();
    let levels = pyramid.len();
    let f = levels * (1 + include_gradient as usize);
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(f);
    let grads: Vec<Vec<f64>> = if include_gradient {
        pyramid.iter().map(|l| gradient_magnitude(&l.grid)).collect()
    } else {
        Vec::new()
    };
    let upsample = |level: &PyramidLevel, values: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let cd = level.grid.dims();
        let maps: Vec<Vec<usize>> = (0..3).map(|a| nearest_map(dims[a], cd[a], level.level)).collect();
        let mut out = Vec::with_capacity(crate::volume::voxel_count(dims));
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    out.push(values(linear_index(cd, maps[0][z], maps[1][y], maps[2][x])));
                }
            }
        }
        out
    };
    for level in pyramid {
        let v = level.grid.voxels();
        channels.push(upsample(level, &|i| v[i] as f64));
    }
    for (level, g) in pyramid.iter().zip(&grads) {
        channels.push(upsample(level, &|i| g[i]));
    }
    let n = crate::volume::voxel_count(dims);
    let mut data = Vec::with_capacity(n * f);
    for i in 0..n {
        for ch in &channels {
            data.push(ch[i]);
        }
    }
    FeatureVolume::from_raw(dims, base.grid.spacing(), f, data)
}

/// Multiscale channels, each z-scored with its own statistics.
pub fn voxel_features(pyramid: &[PyramidLevel], include_gradient: bool) -> Result<FeatureVolume> {
    Ok(raw_voxel_features(pyramid, include_gradient)?.standardized())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    /// Feature dimensionality.
    pub f: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the nearest centroid after the final iteration.
    pub inertia: f64,
    /// Inertia measured at each assignment step.
    pub inertia_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm from a seeded k-means++ start.
pub fn kmeans_fit(samples: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<Codebook> {
    if k == 0 || samples.len() < k {
        return Err(Error::TooFewSamples {
            k,
            samples: samples.len(),
        });
    }
    let f = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != f) {
        return Err(Error::FeatureMismatch {
            expected: f,
            actual: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![samples[rng.random_range(0..samples.len())].clone()];
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = samples.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..samples.len())
        };
        centroids.push(samples[pick].clone());
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(sq_dist(s, &centroids[centroids.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; samples.len()];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, s) in assign.iter_mut().zip(samples) {
            let (j, d) = nearest(s, &centroids);
            inertia += d;
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; f]; k];
        let mut counts = vec![0usize; k];
        for (&a, s) in assign.iter().zip(samples) {
            counts[a] += 1;
            for (acc, &v) in sums[a].iter_mut().zip(s) {
                *acc += v;
            }
        }
        for j in 0..k {
            // empty clusters keep their previous centroid
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let inertia = samples.iter().map(|s| nearest(s, &centroids).1).sum();
    Ok(Codebook {
        k,
        f,
        seed,
        centroids,
        inertia,
        inertia_history: history,
    })
}

/// Euclidean distance from every voxel to every centroid, unnormalized.
pub fn codebook_distances(features: &FeatureVolume, codebook: &Codebook) -> Result<FeatureVolume> {
    if codebook.f != features.n_features() {
        return Err(Error::FeatureMismatch {
            expected: codebook.f,
            actual: features.n_features(),
        });
    }
    let mut data = Vec::with_capacity(features.n_voxels() * codebook.k);
    for i in 0..features.n_voxels() {
        let v = features.voxel(i);
        for c in &codebook.centroids {
            data.push(sq_dist(v, c).sqrt());
        }
    }
    FeatureVolume::from_raw(features.dims(), features.spacing(), codebook.k, data)
}

/// Appends `k` z-scored centroid-distance channels to `features`.
pub fn kmeans_encode(features: &FeatureVolume, codebook: &Codebook) -> Result<FeatureVolume> {
    features.concat(&codebook_distances(features, codebook)?.standardized())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub levels: usize,
    pub sigma_vox: f64,
    pub include_gradient: bool,
    pub k: usize,
    pub max_iters: usize,
    /// Voxels drawn per training scan for fitting the codebook.
    pub kmeans_samples_per_scan: usize,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            levels: 3,
            sigma_vox: 1.0,
            include_gradient: true,
            k: 8,
            max_iters: 50,
            kmeans_samples_per_scan: 2000,
            seed: 0,
        }
    }
}

impl FeatureConfig {
    pub fn base_features(&self) -> usize {
        self.levels * (1 + self.include_gradient as usize)
    }

    pub fn total_features(&self) -> usize {
        self.base_features() + self.k
    }
}

/// Feature front end with normalization and codebook frozen from training scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub base_stats: Vec<ChannelStats>,
    pub codebook: Codebook,
    pub distance_stats: Vec<ChannelStats>,
}

impl FeatureExtractor {
    pub fn fit(grids: &[&VolumeGrid], config: &FeatureConfig) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::EmptySplit("feature-fitting"));
        }
        let raw: Vec<FeatureVolume> = grids
            .iter()
            .map(|g| raw_voxel_features(&gaussian_pyramid(g, config.levels, config.sigma_vox)?, config.include_gradient))
            .collect::<Result<_>>()?;
        let base_stats = pooled_channel_stats(&raw);
        let normalized: Vec<FeatureVolume> = raw
            .iter()
            .map(|r| r.normalized_with(&base_stats))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6b6d_6561_6e73);
        let mut samples = Vec::new();
        for v in &normalized {
            let n = v.n_voxels();
            for _ in 0..config.kmeans_samples_per_scan.min(n) {
                samples.push(v.voxel(rng.random_range(0..n)).to_vec());
            }
        }
        let codebook = kmeans_fit(&samples, config.k, config.seed, config.max_iters)?;
        let dists: Vec<FeatureVolume> = normalized
            .iter()
            .map(|v| codebook_distances(v, &codebook))
            .collect::<Result<_>>()?;
        let distance_stats = pooled_channel_stats(&dists);
        Ok(FeatureExtractor {
            config: config.clone(),
            base_stats,
            codebook,
            distance_stats,
        })
    }

    pub fn n_features(&self) -> usize {
        self.base_stats.len() + self.codebook.k
    }

    pub fn extract(&self, grid: &VolumeGrid) -> Result<FeatureVolume> {
        let pyramid = gaussian_pyramid(grid, self.config.levels, self.config.sigma_vox)?;
        let base = raw_voxel_features(&pyramid, self.config.include_gradient)?.normalized_with(&self.base_stats)?;
        let dist = codebook_distances(&base, &self.codebook)?.normalized_with(&self.distance_stats)?;
        base.concat(&dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-5, 2), 0);
    }

    #[test]
    fn single_level_is_input() {
        let g = VolumeGrid::from_fn([3, 4, 5], Spacing::default(), |z, y, x| (z + y * x) as f32);
        let p = gaussian_pyramid(&g, 1, 1.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].grid, g);
    }

    #[test]
    fn pyramid_dims_and_constants() {
        let g = VolumeGrid::filled([9, 8, 5], Spacing::default(), 7.5);
        let p = gaussian_pyramid(&g, 3, 1.0).unwrap();
        assert_eq!(p[1].grid.dims(), [5, 4, 3]);
        assert_eq!(p[2].grid.dims(), [3, 2, 2]);
        for l in &p {
            assert!(l.grid.voxels().iter().all(|&v| (v - 7.5).abs() < 1e-5));
        }
        assert!(gaussian_pyramid(&g, 4, 1.0).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = VolumeGrid::filled([4, 4, 4], Spacing::default(), 3.0);
        let p = gaussian_pyramid(&g, 2, 1.0).unwrap();
        let f = raw_voxel_features(&p, true).unwrap();
        assert_eq!(f.n_features(), 4);
        for c in 2..4 {
            assert!(f.channel(c).all(|v| v == 0.0));
        }
    }

    #[test]
    fn single_level_feature_is_zscored_intensity() {
        let g = VolumeGrid::from_fn([2, 3, 4], Spacing::default(), |z, y, x| (z * 12 + y * 4 + x) as f32);
        let p = gaussian_pyramid(&g, 1, 1.0).unwrap();
        let f = voxel_features(&p, false).unwrap();
        assert_eq!(f.n_features(), 1);
        let n = 24.0;
        let mean = 11.5;
        let std = ((0..24).map(|v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (i, v) in f.channel(0).enumerate() {
            assert!((v - (i as f64 - mean) / std).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_gradient_is_slope() {
        let sp = Spacing::new(1.0, 1.0, 0.5).unwrap();
        let g = VolumeGrid::from_fn([5, 5, 12], sp, |_, _, x| 0.25 * x as f32);
        let grad = gradient_magnitude(&g);
        for z in 0..5 {
            for y in 0..5 {
                for x in 1..11 {
                    assert!((grad[linear_index([5, 5, 12], z, y, x)] - 0.5).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let samples: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let cb = kmeans_fit(&samples, 5, 3, 10).unwrap();
        assert_eq!(cb.inertia, 0.0);
        let mut c = cb.centroids.clone();
        c.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(c, samples);
    }

    #[test]
    fn kmeans_too_few_samples() {
        let samples = vec![vec![0.0], vec![1.0]];
        assert!(matches!(kmeans_fit(&samples, 3, 0, 5), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn encode_distance_zero_at_centroid() {
        let f = FeatureVolume::from_raw([1, 1, 2], Spacing::default(), 2, vec![1.0, 2.0, 4.0, 6.0]).unwrap();
        let cb = Codebook {
            k: 1,
            f: 2,
            seed: 0,
            centroids: vec![vec![1.0, 2.0]],
            inertia: 0.0,
            inertia_history: vec![],
        };
        let d = codebook_distances(&f, &cb).unwrap();
        assert_eq!(d.data(), &[0.0, 5.0]);
        let enc = kmeans_encode(&f, &cb).unwrap();
        assert_eq!(enc.n_features(), 3);
        assert_eq!(&enc.voxel(1)[..2], &[4.0, 6.0]);
        let bad = Codebook { f: 3, ..cb };
        assert!(kmeans_encode(&f, &bad).is_err());
    }
}
