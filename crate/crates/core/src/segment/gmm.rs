//! Full-covariance RGB Gaussian mixtures for the GrabCut color models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Ridge added to every covariance diagonal.
pub const COVARIANCE_EPSILON: f64 = 0.01;

const LLOYD_ITERS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
    inv: [[f64; 3]; 3],
    log_norm: f64,
}

impl Gaussian {
    pub fn new(weight: f64, mean: [f64; 3], cov: [[f64; 3]; 3]) -> Result<Self> {
        let det = det3(&cov);
        if !(det > 0.0) {
            return Err(Error::arg(format!("covariance is not positive definite (det = {det})")));
        }
        let inv = inv3(&cov, det);
        let log_norm = -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        Ok(Gaussian {
            weight,
            mean,
            cov,
            inv,
            log_norm,
        })
    }

    /// log N(x | mean, cov).
    pub fn log_density(&self, x: [f64; 3]) -> f64 {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1], x[2] - self.mean[2]];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += d[i] * self.inv[i][j] * d[j];
            }
        }
        self.log_norm - 0.5 * q
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.cov)
    }
}

/// Mixture of [`Gaussian`]s; components with zero support are dropped, so
/// `components().len()` may be below the requested K.
#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    components: Vec<Gaussian>,
}

impl Gmm {
    pub fn from_components(components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::arg("mixture needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::arg(format!("mixture weights must be nonnegative and sum to 1, got {total}")));
        }
        Ok(Gmm { components })
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    /// log Σ_k w_k N(x | k), via log-sum-exp.
    pub fn log_likelihood(&self, x: [f64; 3]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 16];
        let mut scratch = Vec::new();
        let logs: &mut [f64] = if self.components.len() <= terms.len() {
            &mut terms[..self.components.len()]
        } else {
            scratch.resize(self.components.len(), 0.0);
            &mut scratch
        };
        for (slot, c) in logs.iter_mut().zip(&self.components) {
            *slot = if c.weight > 0.0 {
                c.weight.ln() + c.log_density(x)
            } else {
                f64::NEG_INFINITY
            };
            best = best.max(*slot);
        }
        if best == f64::NEG_INFINITY {
            return best;
        }
        best + logs.iter().map(|&l| (l - best).exp()).sum::<f64>().ln()
    }

    fn best_component(&self, x: [f64; 3]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, c) in self.components.iter().enumerate() {
            let score = c.weight.ln() + c.log_density(x);
            if score > best.1 {
                best = (k, score);
            }
        }
        best.0
    }
}

fn as_f64(p: [u8; 3]) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// k-means++ seeding; stops early when every remaining point coincides
/// with a chosen center.
fn seed_centers(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        if d2[pick] <= 0.0 {
            // rounding fell off the end: take the last point with mass
            pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
        }
        let c = points[pick];
        centers.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, c));
        }
    }
    centers
}

fn nearest(centers: &[[f64; 3]], p: [f64; 3]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, &c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

fn estimate(points: &[[f64; 3]], assign: &[usize], k: usize) -> Result<Vec<Gaussian>> {
    let mut count = vec![0usize; k];
    let mut sum = vec![[0.0f64; 3]; k];
    for (p, &a) in points.iter().zip(assign) {
        count[a] += 1;
        for c in 0..3 {
            sum[a][c] += p[c];
        }
    }
    let mut cov = vec![[[0.0f64; 3]; 3]; k];
    let means: Vec<[f64; 3]> = (0..k)
        .map(|j| {
            let n = count[j].max(1) as f64;
            [sum[j][0] / n, sum[j][1] / n, sum[j][2] / n]
        })
        .collect();
    for (p, &a) in points.iter().zip(assign) {
        let d = [p[0] - means[a][0], p[1] - means[a][1], p[2] - means[a][2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[a][i][j] += d[i] * d[j];
            }
        }
    }
    let n = points.len() as f64;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        if count[j] == 0 {
            continue;
        }
        let mut c = cov[j];
        for (i, row) in c.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v /= count[j] as f64;
            }
            row[i] += COVARIANCE_EPSILON;
        }
        out.push(Gaussian::new(count[j] as f64 / n, means[j], c)?);
    }
    renormalize(&mut out);
    Ok(out)
}

fn renormalize(components: &mut [Gaussian]) {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
}

/// Fits a K-component mixture: k-means++ seeding, Lloyd refinement, then
/// one maximum-likelihood hard reassignment and re-estimation.
pub fn fit_gmm(pixels: &[[u8; 3]], k: usize, seed: u64) -> Result<Gmm> {
    if pixels.is_empty() {
        return Err(Error::arg("cannot fit a color model to an empty pixel set"));
    }
    if k == 0 {
        return Err(Error::arg("component count must be at least 1"));
    }
    let points: Vec<[f64; 3]> = pixels.iter().map(|&p| as_f64(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(&points, k, &mut rng);
    let mut assign: Vec<usize> = points.iter().map(|&p| nearest(&centers, p)).collect();
    for _ in 0..LLOYD_ITERS {
        let kk = centers.len();
        let mut sum = vec![[0.0f64; 3]; kk];
        let mut count = vec![0usize; kk];
        for (p, &a) in points.iter().zip(&assign) {
            count[a] += 1;
            for c in 0..3 {
                sum[a][c] += p[c];
            }
        }
        for j in 0..kk {
            if count[j] > 0 {
                let n = count[j] as f64;
                centers[j] = [sum[j][0] / n, sum[j][1] / n, sum[j][2] / n];
            }
        }
        let next: Vec<usize> = points.iter().map(|&p| nearest(&centers, p)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let kk = centers.len();
    let first = Gmm {
        components: estimate(&points, &assign, kk)?,
    };
    let reassigned: Vec<usize> = points.iter().map(|&p| first.best_component(p)).collect();
    Ok(Gmm {
        components: estimate(&points, &reassigned, first.components.len())?,
    })
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    inv
}
