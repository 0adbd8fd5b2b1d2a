//! k-means++ / Lloyd vocabulary training and the `VOCB` file format.

use std::io::{Cursor, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VOCB";

/// Visual vocabulary: `k` centers of length `dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    k: usize,
    dim: usize,
    centers: Vec<f32>,
    seed: u64,
}

impl Vocabulary {
    pub fn new(k: usize, dim: usize, centers: Vec<f32>, seed: u64) -> Result<Self> {
        if k == 0 || dim == 0 || centers.len() != k * dim {
            return Err(Error::arg(format!(
                "vocabulary {k}x{dim} does not match {} center values",
                centers.len()
            )));
        }
        Ok(Vocabulary { k, dim, centers, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn center(&self, i: usize) -> &[f32] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest center; ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, v: &[f32]) -> (usize, f32) {
        nearest_center(&self.centers, self.dim, v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.centers.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for c in &self.centers {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("vocabulary file lacks VOCB magic".into()));
        }
        let k = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let need = k.checked_mul(dim).ok_or_else(|| Error::Format("vocabulary size overflows".into()))?;
        if bytes.len() != 12 + need * 4 + 8 {
            return Err(Error::Format(format!(
                "vocabulary file is {} bytes, expected {}",
                bytes.len(),
                12 + need * 4 + 8
            )));
        }
        let mut centers = Vec::with_capacity(need);
        let mut buf = [0u8; 4];
        for _ in 0..need {
            read_exact(&mut r, &mut buf)?;
            centers.push(f32::from_le_bytes(buf));
        }
        let mut seed = [0u8; 8];
        read_exact(&mut r, &mut seed)?;
        Vocabulary::new(k, dim, centers, u64::from_le_bytes(seed)).map_err(|e| Error::Format(e.to_string()))
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated at byte {}", r.position())))
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[inline]
pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    // fixed 8-lane accumulation keeps the result independent of call site
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for l in 0..8 {
            let d = a[c * 8 + l] - b[c * 8 + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn nearest_center(centers: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct KMeansOutcome {
    pub vocabulary: Vocabulary,
    /// Distortion after seeding and after every Lloyd iteration.
    pub distortions: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn assign_all(samples: &[f32], dim: usize, centers: &[f32]) -> (Vec<usize>, Vec<f32>) {
    samples
        .par_chunks_exact(dim)
        .map(|v| nearest_center(centers, dim, v))
        .unzip()
}

fn kmeans_pp(samples: &[f32], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let first = rng.gen_range(0..n);
    let mut centers = row(first).to_vec();
    let mut d2: Vec<f32> = samples.par_chunks_exact(dim).map(|v| sq_dist(v, row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().map(|&d| d as f64).sum();
        if total <= 0.0 {
            return Err(Error::arg(format!(
                "pool has fewer than k = {k} distinct descriptors"
            )));
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                if target < d as f64 {
                    pick = Some(i);
                    break;
                }
                target -= d as f64;
            }
        }
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"));
        let c = row(pick).to_vec();
        d2.par_chunks_mut(1)
            .zip(samples.par_chunks_exact(dim))
            .for_each(|(d, v)| d[0] = d[0].min(sq_dist(v, &c)));
        centers.extend_from_slice(&c);
    }
    Ok(centers)
}

/// Trains a `k`-word vocabulary on a row-major pool of `dim`-length samples.
///
/// Seeding is k-means++ from `seed`; Lloyd iterations run until the
/// assignment reaches a fixpoint or `max_iters`. An emptied cluster is
/// re-seeded at the sample farthest from its current center. The result
/// does not depend on the rayon thread count.
pub fn kmeans(samples: &[f32], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<KMeansOutcome> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::arg("sample pool length is not a multiple of the dimension"));
    }
    let n = samples.len() / dim;
    if k == 0 || n < k {
        return Err(Error::arg(format!("cannot fit k = {k} centers to {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(samples, n, dim, k, &mut rng)?;
    let (mut assign, mut dist) = assign_all(samples, dim, &centers);
    let mut distortions = vec![dist.iter().map(|&d| d as f64).sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            let s = &mut sums[a * dim..(a + 1) * dim];
            for (acc, &v) in s.iter_mut().zip(&samples[i * dim..(i + 1) * dim]) {
                *acc += v as f64;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, &s) in centers[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *c = (s * inv) as f32;
                }
            } else {
                // farthest sample from its own center, lowest index on ties
                let far = dist
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |b, (i, &d)| if d > b.1 { (i, d) } else { b })
                    .0;
                centers[j * dim..(j + 1) * dim].copy_from_slice(&samples[far * dim..(far + 1) * dim]);
                dist[far] = 0.0;
            }
        }
        let (next, next_dist) = assign_all(samples, dim, &centers);
        distortions.push(next_dist.iter().map(|&d| d as f64).sum());
        dist = next_dist;
        if next == assign {
            converged = true;
            break;
        }
        assign = next;
    }
    Ok(KMeansOutcome {
        vocabulary: Vocabulary::new(k, dim, centers, seed)?,
        distortions,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Optimal 2-partition of 1-D points by exhaustive enumeration.
    fn best_two_means(points: &[f64]) -> (f64, f64, f64) {
        let n = points.len();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for mask in 1u32..(1 << n) - 1 {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &p) in points.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(p)
                } else {
                    b.push(p)
                }
            }
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let cost = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if cost < best.0 {
                best = (cost, ma.min(mb), ma.max(mb));
            }
        }
        best
    }

    #[test]
    fn one_dimensional_two_means_matches_exhaustive_oracle() {
        let points = [0.0, 1.0, 10.0, 11.0];
        let (cost, lo, hi) = best_two_means(&points);
        assert_eq!((cost, lo, hi), (1.0, 0.5, 10.5));
        for seed in 0..20 {
            let samples: Vec<f32> = points.iter().map(|&p| p as f32).collect();
            let out = kmeans(&samples, 1, 2, seed, 100).unwrap();
            let mut c = [out.vocabulary.center(0)[0] as f64, out.vocabulary.center(1)[0] as f64];
            c.sort_by(f64::total_cmp);
            assert_eq!(c, [lo, hi], "seed {seed}");
            assert_eq!(*out.distortions.last().unwrap(), cost);
        }
    }

    #[test]
    fn k_equal_to_distinct_points_is_exact() {
        let samples: Vec<f32> = vec![0.0, 0.0, 3.0, 1.0, -2.0, 5.0, 7.0, 7.0];
        let out = kmeans(&samples, 2, 4, 9, 50).unwrap();
        assert_eq!(*out.distortions.last().unwrap(), 0.0);
        let mut got: Vec<Vec<f32>> = (0..4).map(|i| out.vocabulary.center(i).to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f32>> = samples.chunks(2).map(|c| c.to_vec()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn pool_smaller_than_k() {
        assert!(matches!(kmeans(&[1.0, 2.0], 1, 3, 0, 10), Err(Error::Argument(_))));
        assert!(matches!(kmeans(&[1.0, 1.0, 1.0], 1, 2, 0, 10), Err(Error::Argument(_))));
    }

    #[test]
    fn vocb_roundtrip_and_truncation() {
        let v = Vocabulary::new(2, 3, vec![1.0, 2.0, 3.0, -4.5, 0.25, 9.0], 42).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(&bytes[..4], b"VOCB");
        assert_eq!(Vocabulary::from_bytes(&bytes).unwrap(), v);
        assert!(matches!(Vocabulary::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    fn pool(seed: u64, n: usize, dim: usize) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim)
            .map(|i| (i % 3) as f32 * 4.0 + rng.gen_range(-1.0f32..1.0))
            .collect()
    }

    #[test]
    fn independent_of_thread_count() {
        let samples = pool(3, 400, 6);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| kmeans(&samples, 6, 7, 5, 100).unwrap());
        let b = four.install(|| kmeans(&samples, 6, 7, 5, 100).unwrap());
        assert_eq!(a.vocabulary, b.vocabulary);
        assert_eq!(a.distortions, b.distortions);
    }

    proptest! {
        #[test]
        fn distortion_never_increases(seed in 0u64..500, k in 1usize..8) {
            let samples = pool(seed, 60, 3);
            let out = kmeans(&samples, 3, k, seed, 100).unwrap();
            for w in out.distortions.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-6) + 1e-9, "{:?}", out.distortions);
            }
        }

        #[test]
        fn quantization_agrees_with_brute_force(seed in 0u64..200) {
            let samples = pool(seed, 50, 4);
            let vocab = kmeans(&samples, 4, 5, seed, 100).unwrap().vocabulary;
            for v in samples.chunks(4) {
                let (id, _) = vocab.nearest(v);
                let brute = (0..5)
                    .map(|j| (j, v.iter().zip(vocab.center(j)).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()))
                    .fold((0, f64::INFINITY), |b, (j, d)| if d < b.1 { (j, d) } else { b });
                let d_id: f64 = v.iter().zip(vocab.center(id)).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                prop_assert!(id == brute.0 || (d_id - brute.1).abs() < 1e-5);
            }
        }
    }
}
