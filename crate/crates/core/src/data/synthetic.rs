use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, Dataset};
use crate::numerics::Tensor;

/// Samples from a planar Gaussian mixture pushed into `dim_data` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDataset {
    pub samples: Tensor,
    pub labels: Vec<usize>,
    /// Component means in the plane.
    pub means: Vec<[f64; 2]>,
    pub latents: Tensor,
    pub seed: u64,
}

impl MixtureDataset {
    /// The samples as observed column `x`, with labels.
    pub fn dataset(&self) -> Dataset {
        let columns = BTreeMap::from([("x".to_string(), self.samples.clone())]);
        Dataset::new(columns, Some(self.labels.clone())).expect("consistent mixture")
    }
}

/// Unit-variance components with means evenly spaced on a circle of radius `separation`.
/// Each planar point `z` is mapped to `tanh(W z / separation + b)` with a seeded `W`, `b`.
pub fn make_mixture(
    k_true: usize,
    dim_data: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<MixtureDataset, DataError> {
    if k_true < 1 || dim_data < 1 || n < 1 {
        return Err(DataError::BadParameter("components, dimension and size must be positive".into()));
    }
    if !(separation > 0.0) {
        return Err(DataError::BadParameter(format!("separation must be positive, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<[f64; 2]> = (0..k_true)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / k_true as f64;
            [separation * a.cos(), separation * a.sin()]
        })
        .collect();
    let w: Vec<f64> = (0..2 * dim_data).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b: Vec<f64> = (0..dim_data).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut labels = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(2 * n);
    let mut samples = Vec::with_capacity(dim_data * n);
    for _ in 0..n {
        let k = rng.random_range(0..k_true);
        let z =
            [means[k][0] + rng.sample::<f64, _>(StandardNormal), means[k][1] + rng.sample::<f64, _>(StandardNormal)];
        labels.push(k);
        latents.extend(z);
        for d in 0..dim_data {
            let u = (w[2 * d] * z[0] + w[2 * d + 1] * z[1]) / separation + b[d];
            samples.push(u.tanh());
        }
    }
    Ok(MixtureDataset {
        samples: Tensor::matrix(n, dim_data, samples).expect("sized"),
        labels,
        means,
        latents: Tensor::matrix(n, 2, latents).expect("sized"),
        seed,
    })
}

/// Clips of a 3×3 dot moving at constant velocity with elastic reflection at the borders.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDataset {
    pub side: usize,
    /// `frames[t]` is `[N, side²]`, pixels in [−1, 1].
    pub frames: Vec<Tensor>,
    /// Top-left dot position per clip and frame.
    pub positions: Vec<Vec<(i64, i64)>>,
    pub velocities: Vec<(i64, i64)>,
}

impl VideoDataset {
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn t(&self) -> usize {
        self.frames.len()
    }

    /// Frames as observed columns `x1..xT`.
    pub fn dataset(&self) -> Dataset {
        let columns = self.frames.iter().enumerate().map(|(t, f)| (format!("x{}", t + 1), f.clone())).collect();
        Dataset::new(columns, None).expect("consistent video")
    }
}

const DOT: i64 = 3;

fn bounce(p: i64, v: i64, max: i64) -> (i64, i64) {
    let next = p + v;
    if next < 0 {
        (-next, -v)
    } else if next > max {
        (2 * max - next, -v)
    } else {
        (next, v)
    }
}

/// Frames (row-major `side × side`) and dot positions for one clip.
pub fn render_clip(t: usize, side: usize, start: (i64, i64), velocity: (i64, i64)) -> (Vec<Vec<f64>>, Vec<(i64, i64)>) {
    let max = side as i64 - DOT;
    let (mut pos, mut vel) = (start, velocity);
    let mut frames = Vec::with_capacity(t);
    let mut path = Vec::with_capacity(t);
    for step in 0..t {
        if step > 0 {
            let (r, vr) = bounce(pos.0, vel.0, max);
            let (c, vc) = bounce(pos.1, vel.1, max);
            pos = (r, c);
            vel = (vr, vc);
        }
        let mut frame = vec![-1.0; side * side];
        for dr in 0..DOT {
            for dc in 0..DOT {
                frame[((pos.0 + dr) as usize) * side + (pos.1 + dc) as usize] = 1.0;
            }
        }
        frames.push(frame);
        path.push(pos);
    }
    (frames, path)
}

/// `n` clips of `t` frames. Positions are uniform over the valid range and each
/// velocity component is uniform in −2..=2.
pub fn make_bouncing_dot(t: usize, side: usize, n: usize, seed: u64) -> Result<VideoDataset, DataError> {
    if t < 2 {
        return Err(DataError::BadParameter(format!("clips need at least 2 frames, got {t}")));
    }
    if side < DOT as usize + 2 || n < 1 {
        return Err(DataError::BadParameter(format!("side must be at least {}, and N positive", DOT + 2)));
    }
    let max = side as i64 - DOT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![Vec::with_capacity(n * side * side); t];
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for _ in 0..n {
        let start = (rng.random_range(0..=max), rng.random_range(0..=max));
        let vel = (rng.random_range(-2..=2), rng.random_range(-2..=2));
        let (frames, path) = render_clip(t, side, start, vel);
        for (dst, f) in data.iter_mut().zip(frames) {
            dst.extend(f);
        }
        positions.push(path);
        velocities.push(vel);
    }
    let frames = data.into_iter().map(|d| Tensor::matrix(n, side * side, d).expect("sized")).collect();
    Ok(VideoDataset { side, frames, positions, velocities })
}
