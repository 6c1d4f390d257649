//! Gaussian-process prior functions over flattened pragma configs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernel::{DesignSpace, PragmaConfig};
use crate::oracle::LabeledDesign;
use crate::rng::rng_for;

pub const GP_JITTER: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpPrior {
    pub length_range: (f64, f64),
    pub scale_range: (f64, f64),
}

impl Default for GpPrior {
    fn default() -> Self {
        Self {
            length_range: (0.0, 7.0),
            scale_range: (1.0, 10.0),
        }
    }
}

/// One RBF-kernel GP sample path, realized on demand for a finite point set.
#[derive(Clone, Debug, PartialEq)]
pub struct GpFunction {
    pub length_scale: f64,
    pub scale: f64,
    pub seed: u64,
}

impl GpFunction {
    /// Draw `l` and `sigma` uniformly from the prior ranges.
    pub fn draw(prior: &GpPrior, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x69]);
        let (l0, l1) = prior.length_range;
        let (s0, s1) = prior.scale_range;
        Self {
            length_scale: l0 + (l1 - l0) * rng.random::<f64>(),
            scale: s0 + (s1 - s0) * rng.random::<f64>(),
            seed,
        }
    }

    /// `sigma^2 exp(-|x - x'|^2 / (2 l^2))`; a zero length scale degenerates
    /// to white noise.
    pub fn kernel(&self, x: &[f64], x2: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b).powi(2)).sum();
        let s2 = self.scale * self.scale;
        if d2 == 0.0 {
            s2
        } else if self.length_scale <= 0.0 {
            0.0
        } else {
            s2 * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
        }
    }

    /// Joint sample at `points`, reproducible per seed.
    pub fn sample(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel(&points[i], &points[j]);
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }
        let mut jitter = GP_JITTER;
        let chol = loop {
            let mut a = cov.clone();
            for i in 0..n {
                a[i * n + i] += jitter;
            }
            if let Some(l) = cholesky(a, n) {
                break l;
            }
            jitter *= 10.0;
        };
        let mut rng = rng_for(self.seed, &[0x70]);
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n).map(|i| (0..=i).map(|j| chol[i * n + j] * z[j]).sum()).collect()
    }
}

/// Lower-triangular factor of a row-major SPD matrix, `None` if not SPD.
fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Some(a)
}

/// Flattened config zero-padded to `dim` entries.
pub fn padded_features(config: &PragmaConfig, dim: usize) -> Vec<f64> {
    let mut f = config.flatten();
    f.resize(dim.max(f.len()), 0.0);
    f
}

/// Label `k` configs sampled from `space` with one GP path drawn from `prior`.
pub fn gp_weak_labels(space: &DesignSpace, base_latency: u64, prior: &GpPrior, seed: u64, k: usize, pad_dim: usize) -> Vec<LabeledDesign> {
    let f = GpFunction::draw(prior, seed);
    let configs = super::weak::sample_configs(space, k, &mut rng_for(seed, &[0x71]));
    let points: Vec<Vec<f64>> = configs.iter().map(|c| padded_features(c, pad_dim)).collect();
    let ys = f.sample(&points);
    let source = format!("gp-{seed}");
    configs
        .into_iter()
        .zip(ys)
        .map(|(c, y)| LabeledDesign::weak(&space.kernel_id, c, y, base_latency, &source))
        .collect()
}
