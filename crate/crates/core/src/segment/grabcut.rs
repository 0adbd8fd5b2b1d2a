use log::warn;

use super::{fit_gmm, max_flow, FlowNetwork, Gmm, Mask};
use crate::error::{Error, Result};
use crate::imgio::{BBox, Image};

/// Upper clamp for terminal capacities; also the hard-constraint weight.
pub const HARD_CAPACITY: f64 = 1e8;

/// Forward 8-neighborhood offsets, each unordered pair visited once.
const NEIGHBORS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaMode {
    /// β = 1 / (2 · mean squared neighbor contrast), 0 for a flat image.
    FromContrast,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrabCutParams {
    pub iterations: usize,
    pub components: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        GrabCutParams {
            iterations: 5,
            components: 5,
            lambda: 50.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub mask: Mask,
    /// Min-cut energy of the accepted labeling after each completed round.
    pub energies: Vec<f64>,
    /// Set when a round emptied the foreground and the previous mask was kept.
    pub degenerate: bool,
    pub rounds: usize,
}

fn color(img: &Image, i: usize) -> [f64; 3] {
    let d = &img.data()[i * 3..i * 3 + 3];
    [d[0] as f64, d[1] as f64, d[2] as f64]
}

fn contrast(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn neighbor_pairs(width: usize, height: usize) -> impl Iterator<Item = (usize, usize, f64)> {
    (0..height).flat_map(move |y| {
        (0..width).flat_map(move |x| {
            NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || nx >= width as isize || ny >= height as isize {
                    return None;
                }
                let dist = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                Some((y * width + x, ny as usize * width + nx as usize, dist))
            })
        })
    })
}

fn contrast_beta(img: &Image) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for (p, q, _) in neighbor_pairs(img.width(), img.height()) {
        total += contrast(color(img, p), color(img, q));
        count += 1;
    }
    if count == 0 || total == 0.0 {
        0.0
    } else {
        1.0 / (2.0 * total / count as f64)
    }
}

/// Builds the s-t grid network for one GrabCut round. Node `i` is pixel
/// `i` (row-major); the source is the foreground terminal.
pub fn build_network(img: &Image, mask: &Mask, fg: &Gmm, bg: &Gmm, lambda: f64, beta_mode: BetaMode) -> Result<FlowNetwork> {
    let (w, h) = (img.width(), img.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::arg(format!(
            "mask {}x{} does not match image {w}x{h}",
            mask.width(),
            mask.height()
        )));
    }
    let n = w * h;
    let beta = match beta_mode {
        BetaMode::FromContrast => contrast_beta(img),
        BetaMode::Fixed(b) => b,
    };
    let mut net = FlowNetwork::with_capacity(n + 2, n, n + 1, n * 5);
    let (source, sink) = (n, n + 1);
    let hard = mask.hardness();
    for i in 0..n {
        let (to_source, to_sink) = if hard[i] {
            // hard constraints only ever pin background
            (0.0, HARD_CAPACITY)
        } else {
            let c = color(img, i);
            (
                (-bg.log_likelihood(c)).clamp(0.0, HARD_CAPACITY),
                (-fg.log_likelihood(c)).clamp(0.0, HARD_CAPACITY),
            )
        };
        net.add_arc(source, i, to_source);
        net.add_arc(i, sink, to_sink);
    }
    for (p, q, dist) in neighbor_pairs(w, h) {
        let weight = lambda * (-beta * contrast(color(img, p), color(img, q))).exp() / dist;
        net.add_pair(p, q, weight, weight);
    }
    Ok(net)
}

/// Iterated graph-cut segmentation seeded by `seed_box`.
pub fn grabcut(img: &Image, seed_box: BBox, params: &GrabCutParams) -> Result<Segmentation> {
    let (w, h) = (img.width(), img.height());
    seed_box.check(w, h)?;
    if seed_box.area() == w * h {
        return Err(Error::NoBackground);
    }
    if params.iterations == 0 {
        return Err(Error::arg("grabcut needs at least one iteration"));
    }
    let n = w * h;
    let mut mask = Mask::from_seed_box(w, h, seed_box);
    let mut energies = Vec::with_capacity(params.iterations);
    let mut degenerate = false;
    let mut rounds = 0;

    for _ in 0..params.iterations {
        let (mut fg_px, mut bg_px) = (Vec::new(), Vec::new());
        for (i, p) in img.pixels().enumerate() {
            if mask.labels()[i] {
                fg_px.push(p);
            } else {
                bg_px.push(p);
            }
        }
        if fg_px.is_empty() {
            degenerate = true;
            break;
        }
        let fg = fit_gmm(&fg_px, params.components, params.seed)?;
        let bg = fit_gmm(&bg_px, params.components, params.seed ^ 0x9E37_79B9_7F4A_7C15)?;
        let net = build_network(img, &mask, &fg, &bg, params.lambda, BetaMode::FromContrast)?;
        let (energy, side) = max_flow(&net);
        rounds += 1;

        let labels = &side[..n];
        if !labels.iter().zip(mask.hardness()).any(|(&f, &hard)| f && !hard) {
            warn!("grabcut round {rounds} emptied the foreground; keeping previous mask");
            degenerate = true;
            break;
        }
        if let Some(&last) = energies.last() {
            if energy > last {
                // refit raised the energy: keep the last labeling so the
                // accepted sequence stays monotone
                break;
            }
        }
        energies.push(energy);
        if mask.set_soft_labels(labels) == 0 {
            break;
        }
    }
    Ok(Segmentation {
        mask,
        energies,
        degenerate,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{Gaussian, COVARIANCE_EPSILON};
    use super::*;

    fn iso_gmm(mean: [f64; 3], var: f64) -> Gmm {
        let cov = [[var, 0.0, 0.0], [0.0, var, 0.0], [0.0, 0.0, var]];
        Gmm::from_components(vec![Gaussian::new(1.0, mean, cov).unwrap()]).unwrap()
    }

    fn terminal(net: &FlowNetwork, from: usize, to: usize) -> f64 {
        net.arcs()
            .filter(|&(u, v, _)| u == from && v == to)
            .map(|(_, _, c)| c)
            .sum()
    }

    #[test]
    fn flat_image_pairwise_is_lambda_over_distance() {
        let img = Image::filled(3, 3, [90, 90, 90]);
        let mask = Mask::all_foreground(3, 3);
        let g = iso_gmm([90.0; 3], 100.0);
        let net = build_network(&img, &mask, &g, &g, 50.0, BetaMode::FromContrast).unwrap();
        let n = 9;
        for (u, v, c) in net.arcs().filter(|&(u, v, _)| u < n && v < n) {
            let (ux, uy, vx, vy) = (u % 3, u / 3, v % 3, v / 3);
            let diagonal = ux != vx && uy != vy;
            let want = if diagonal { 50.0 / std::f64::consts::SQRT_2 } else { 50.0 };
            assert!((c - want).abs() < 1e-12, "{u}->{v}: {c}");
        }
    }

    #[test]
    fn hard_background_has_no_source_capacity() {
        let img = Image::filled(4, 4, [0, 0, 0]);
        let mask = Mask::from_seed_box(4, 4, BBox::new(1, 1, 2, 2));
        let g = iso_gmm([0.0; 3], 1.0);
        let net = build_network(&img, &mask, &g, &g, 50.0, BetaMode::FromContrast).unwrap();
        assert_eq!(terminal(&net, 16, 0), 0.0);
        assert_eq!(terminal(&net, 0, 17), HARD_CAPACITY);
    }

    #[test]
    fn terminal_capacities_match_hand_densities() {
        let img = Image::new(2, 1, vec![100, 50, 20, 10, 200, 90]).unwrap();
        let mask = Mask::all_foreground(2, 1);
        let fg = iso_gmm([100.0, 60.0, 20.0], 400.0);
        let bg = iso_gmm([0.0, 200.0, 100.0], 900.0);
        let net = build_network(&img, &mask, &fg, &bg, 50.0, BetaMode::Fixed(0.0)).unwrap();
        let neg_log = |x: [f64; 3], m: [f64; 3], var: f64| {
            let q: f64 = (0..3).map(|c| (x[c] - m[c]).powi(2)).sum::<f64>() / var;
            1.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5 * q
        };
        let px = [[100.0, 50.0, 20.0], [10.0, 200.0, 90.0]];
        for (i, x) in px.iter().enumerate() {
            let want_src = neg_log(*x, [0.0, 200.0, 100.0], 900.0).clamp(0.0, HARD_CAPACITY);
            let want_sink = neg_log(*x, [100.0, 60.0, 20.0], 400.0).clamp(0.0, HARD_CAPACITY);
            assert!((terminal(&net, 2, i) - want_src).abs() < 1e-6);
            assert!((terminal(&net, i, 3) - want_sink).abs() < 1e-6);
        }
        assert!((terminal(&net, 0, 1) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_mask_rejected() {
        let img = Image::filled(2, 2, [0, 0, 0]);
        let g = iso_gmm([0.0; 3], COVARIANCE_EPSILON);
        let err = build_network(&img, &Mask::all_foreground(3, 2), &g, &g, 1.0, BetaMode::FromContrast);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn whole_image_seed_box_has_no_background() {
        let img = Image::filled(5, 5, [1, 2, 3]);
        let err = grabcut(&img, img.full_box(), &GrabCutParams::default());
        assert!(matches!(err, Err(Error::NoBackground)));
    }

    fn square_fixture() -> (Image, BBox, BBox) {
        let mut img = Image::filled(100, 100, [0, 0, 255]);
        let square = BBox::new(30, 30, 40, 40);
        for y in square.y..square.y + square.h {
            for x in square.x..square.x + square.w {
                img.set_pixel(x, y, [255, 0, 0]);
            }
        }
        (img, square, BBox::new(25, 25, 50, 50))
    }

    #[test]
    fn recovers_red_square_from_loose_box() {
        let (img, square, seed) = square_fixture();
        let params = GrabCutParams {
            iterations: 3,
            ..GrabCutParams::default()
        };
        let seg = grabcut(&img, seed, &params).unwrap();
        // ground truth by color threshold
        let truth: Vec<bool> = img.pixels().map(|p| p[0] > 128 && p[2] < 128).collect();
        let (mut inter, mut union) = (0, 0);
        for (i, &t) in truth.iter().enumerate() {
            let m = seg.mask.labels()[i];
            inter += (t && m) as usize;
            union += (t || m) as usize;
        }
        assert_eq!(truth.iter().filter(|&&t| t).count(), square.area());
        assert!(inter as f64 / union as f64 >= 0.99);
        assert!(seg.energies.windows(2).all(|w| w[1] <= w[0]));
        for y in 0..100 {
            for x in 0..100 {
                if !seed.contains(x, y) {
                    assert!(!seg.mask.is_fg(x, y));
                }
            }
        }
        assert!(!seg.degenerate);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (img, _, seed) = square_fixture();
        let params = GrabCutParams::default();
        let a = grabcut(&img, seed, &params).unwrap();
        let b = grabcut(&img, seed, &params).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.energies, b.energies);
    }
}
