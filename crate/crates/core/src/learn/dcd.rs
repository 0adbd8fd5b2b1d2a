//! L2-regularized hinge-loss SVM by dual coordinate descent.
//!
//! The bias is an extra weight on a constant feature of value 1, so it is
//! regularized along with w.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Multiplies C for positive examples.
    pub pos_weight: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 10.0,
            tol: 1e-3,
            max_iter: 1000,
            pos_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective ½‖w̃‖² − Σα after every epoch.
    pub dual_trace: Vec<f64>,
}

#[inline]
pub(crate) fn dot(w: &[f64], x: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += w[c * 4 + l] * x[c * 4 + l] as f64;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..x.len() {
        tail += w[i] * x[i] as f64;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// ½(‖w‖² + b²) + Σ C_i max(0, 1 − y_i(w·x_i + b)).
pub fn primal_objective(features: &[&[f32]], labels: &[i8], weights: &[f64], bias: f64, params: &SvmParams) -> f64 {
    let reg = 0.5 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    let loss: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let c = if y > 0 { params.c * params.pos_weight } else { params.c };
            c * (1.0 - y as f64 * (dot(weights, x) + bias)).max(0.0)
        })
        .sum();
    reg + loss
}

fn validate(features: &[&[f32]], labels: &[i8], params: &SvmParams) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::arg(format!("label {bad} is not +1 or -1")));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::arg("binary SVM needs at least one example of each sign"));
    }
    let len = features[0].len();
    if let Some(i) = features.iter().position(|f| f.len() != len) {
        return Err(Error::arg(format!(
            "feature row {i} has length {}, expected {len}",
            features[i].len()
        )));
    }
    if !(params.c > 0.0 && params.pos_weight > 0.0 && params.tol > 0.0) {
        return Err(Error::arg("C, positive weight and tolerance must be positive"));
    }
    Ok(len)
}

pub fn train_binary(features: &[&[f32]], labels: &[i8], params: &SvmParams, seed: u64) -> Result<BinarySvm> {
    let dim = validate(features, labels, params)?;
    let n = features.len();
    let upper: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0 { params.c * params.pos_weight } else { params.c })
        .collect();
    let qdiag: Vec<f64> = features
        .iter()
        .map(|x| x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() + 1.0)
        .collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dual_trace = Vec::new();
    let mut epochs = 0;
    let mut converged = false;

    while epochs < params.max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut worst = 0.0f64;
        for &i in &order {
            let y = labels[i] as f64;
            let x = features[i];
            let g = y * (dot(&w, x) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qdiag[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y;
                if step != 0.0 {
                    for (wj, &xj) in w.iter_mut().zip(x) {
                        *wj += step * xj as f64;
                    }
                    b += step;
                }
            }
        }
        debug_assert!(alpha.iter().zip(&upper).all(|(&a, &u)| (0.0..=u).contains(&a)));
        let wn = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        dual_trace.push(0.5 * wn - alpha.iter().sum::<f64>());
        if worst < params.tol {
            converged = true;
            break;
        }
    }
    assert!(
        alpha.iter().zip(&upper).all(|(&a, &u)| (0.0..=u).contains(&a)),
        "dual variable left its box"
    );
    Ok(BinarySvm {
        weights: w,
        bias: b,
        epochs,
        converged,
        dual_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Accelerated projected gradient on the box-constrained dual, run to
    /// a certified duality gap. Returns the primal optimum value.
    pub(crate) fn qp_oracle(xs: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
        let n = xs.len();
        let aug: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| ys[i] * ys[j] * aug[i].iter().zip(&aug[j]).map(|(a, b)| a * b).sum::<f64>()).collect())
            .collect();
        // Frobenius norm bounds the largest eigenvalue
        let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let primal_of = |a: &[f64]| {
            let d = aug[0].len();
            let w: Vec<f64> = (0..d).map(|k| (0..n).map(|i| a[i] * ys[i] * aug[i][k]).sum()).collect();
            let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
            let loss: f64 = (0..n)
                .map(|i| c * (1.0 - ys[i] * w.iter().zip(&aug[i]).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
                .sum();
            (reg + loss, reg - a.iter().sum::<f64>())
        };
        let mut a = vec![0.0; n];
        let mut z = a.clone();
        let mut t = 1.0f64;
        for it in 0..2_000_000 {
            let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(u, v)| u * v).sum::<f64>() - 1.0).collect();
            let next: Vec<f64> = (0..n).map(|i| (z[i] - grad[i] / lip).clamp(0.0, c)).collect();
            let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            z = (0..n).map(|i| next[i] + (t - 1.0) / tn * (next[i] - a[i])).collect();
            a = next;
            t = tn;
            if it % 1000 == 999 {
                let (p, d) = primal_of(&a);
                if p + d <= 1e-9 * p.abs().max(1e-12) {
                    return p;
                }
                // restart momentum
                z = a.clone();
                t = 1.0;
            }
        }
        panic!("oracle failed to certify its gap");
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = rng.gen_range(2..=10);
        let d = rng.gen_range(1..=3);
        let mut ys: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        ys[0] = 1.0;
        ys[1] = -1.0;
        let xs = (0..n)
            .map(|i| (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.5 * ys[i]).collect())
            .collect();
        (xs, ys)
    }

    fn as_f32(xs: &[Vec<f64>]) -> Vec<Vec<f32>> {
        xs.iter().map(|x| x.iter().map(|&v| v as f32).collect()).collect()
    }

    #[test]
    fn symmetric_pair() {
        let xs = [vec![-1.0f32], vec![1.0f32]];
        let rows: Vec<&[f32]> = xs.iter().map(|v| v.as_slice()).collect();
        let m = train_binary(&rows, &[-1, 1], &SvmParams::default(), 0).unwrap();
        assert!(m.bias.abs() <= 1e-3);
        assert!(m.weights[0] * -1.0 + m.bias < 0.0);
        assert!(m.weights[0] + m.bias > 0.0);
    }

    #[test]
    fn matches_qp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let (xs, ys) = random_problem(&mut rng);
            let c = 1.0;
            let want = qp_oracle(&xs, &ys, c);
            let xf = as_f32(&xs);
            let rows: Vec<&[f32]> = xf.iter().map(|v| v.as_slice()).collect();
            let labels: Vec<i8> = ys.iter().map(|&y| y as i8).collect();
            let params = SvmParams { c, tol: 1e-6, ..Default::default() };
            let m = train_binary(&rows, &labels, &params, 1).unwrap();
            let got = primal_objective(&rows, &labels, &m.weights, m.bias, &params);
            assert!((got - want).abs() <= 1e-4 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn duplicated_data_with_half_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (xs, ys) = random_problem(&mut rng);
        let xf = as_f32(&xs);
        let labels: Vec<i8> = ys.iter().map(|&y| y as i8).collect();
        let rows: Vec<&[f32]> = xf.iter().map(|v| v.as_slice()).collect();
        let twice: Vec<&[f32]> = rows.iter().chain(rows.iter()).copied().collect();
        let labels2: Vec<i8> = labels.iter().chain(labels.iter()).copied().collect();
        let p = SvmParams { c: 4.0, tol: 1e-9, max_iter: 100_000, ..Default::default() };
        let a = train_binary(&rows, &labels, &p, 0).unwrap();
        let b = train_binary(&twice, &labels2, &SvmParams { c: 2.0, ..p }, 0).unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() <= 1e-5);
        }
        assert!((a.bias - b.bias).abs() <= 1e-5);
    }

    #[test]
    fn single_class_and_length_mismatch() {
        let xs = [vec![0.0f32], vec![1.0f32]];
        let rows: Vec<&[f32]> = xs.iter().map(|v| v.as_slice()).collect();
        assert!(matches!(train_binary(&rows, &[1, 1], &SvmParams::default(), 0), Err(Error::Argument(_))));
        let ys = [vec![0.0f32], vec![1.0f32, 2.0]];
        let rows: Vec<&[f32]> = ys.iter().map(|v| v.as_slice()).collect();
        assert!(matches!(train_binary(&rows, &[1, -1], &SvmParams::default(), 0), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn dual_objective_never_increases(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (xs, ys) = random_problem(&mut rng);
            let xf = as_f32(&xs);
            let rows: Vec<&[f32]> = xf.iter().map(|v| v.as_slice()).collect();
            let labels: Vec<i8> = ys.iter().map(|&y| y as i8).collect();
            let m = train_binary(&rows, &labels, &SvmParams { c: 10.0, tol: 1e-8, ..Default::default() }, seed).unwrap();
            for w in m.dual_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }
}
