//! Hard bag-of-words assignment and spatial-pyramid pooling.

use rayon::prelude::*;

use crate::descript::DescriptorSet;
use crate::error::{Error, Result};

use super::Vocabulary;

/// Pyramid with `levels` levels; level l is a 2^l × 2^l grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PyramidSpec {
    pub levels: usize,
}

impl PyramidSpec {
    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 || levels > 8 {
            return Err(Error::arg(format!("pyramid levels must be in 1..=8, got {levels}")));
        }
        Ok(PyramidSpec { levels })
    }

    pub fn total_cells(&self) -> usize {
        (0..self.levels).map(|l| 1usize << (2 * l)).sum()
    }

    pub fn output_len(&self, n_bins: usize) -> usize {
        n_bins * self.total_cells()
    }
}

/// Nearest word per descriptor, ties to the lowest id.
pub fn quantize(descs: &DescriptorSet, vocab: &Vocabulary) -> Result<Vec<(u32, u32, usize)>> {
    if descs.is_empty() {
        return Ok(Vec::new());
    }
    if descs.dim() != vocab.dim() {
        return Err(Error::arg(format!(
            "descriptor length {} does not match vocabulary dim {}",
            descs.dim(),
            vocab.dim()
        )));
    }
    Ok(descs
        .raw()
        .par_chunks_exact(descs.dim())
        .zip(descs.locations().par_iter())
        .map(|(v, &(x, y))| (x, y, vocab.nearest(v).0))
        .collect())
}

/// Level-major, then row-major cell, then bin; L1-normalized over the
/// whole vector.
pub fn pyramid_pool(
    items: &[(u32, u32, usize)],
    n_bins: usize,
    region_w: usize,
    region_h: usize,
    spec: PyramidSpec,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.output_len(n_bins)];
    for &(x, y, bin) in items {
        let (x, y) = (x as usize, y as usize);
        if x >= region_w || y >= region_h {
            return Err(Error::arg(format!("item ({x}, {y}) outside {region_w}x{region_h} region")));
        }
        if bin >= n_bins {
            return Err(Error::arg(format!("bin {bin} out of range for {n_bins} bins")));
        }
        let mut base = 0;
        for l in 0..spec.levels {
            let g = 1usize << l;
            let cx = (x * g / region_w).min(g - 1);
            let cy = (y * g / region_h).min(g - 1);
            out[(base + cy * g + cx) * n_bins + bin] += 1.0;
            base += g * g;
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab_1d(centers: &[f32]) -> Vocabulary {
        Vocabulary::new(centers.len(), 1, centers.to_vec(), 0).unwrap()
    }

    fn set_1d(values: &[f32]) -> DescriptorSet {
        let mut s = DescriptorSet::empty(1);
        for (i, &v) in values.iter().enumerate() {
            s.push((i as u32, 0), &[v]);
        }
        s
    }

    #[test]
    fn exact_center_and_ties() {
        let vocab = vocab_1d(&[0.0, 10.0, 4.0, 20.0, 30.0, 8.0, 40.0, 50.0]);
        assert_eq!(quantize(&set_1d(&[50.0]), &vocab).unwrap()[0].2, 7);
        // 6 is equidistant from words 2 (4) and 5 (8)
        assert_eq!(quantize(&set_1d(&[6.0]), &vocab).unwrap()[0].2, 2);
        assert!(quantize(&DescriptorSet::empty(1), &vocab).unwrap().is_empty());
        assert!(quantize(&DescriptorSet::empty(3), &vocab).unwrap().is_empty());
    }

    #[test]
    fn dim_mismatch() {
        let vocab = Vocabulary::new(1, 2, vec![0.0, 0.0], 0).unwrap();
        assert!(matches!(quantize(&set_1d(&[1.0]), &vocab), Err(Error::Argument(_))));
    }

    #[test]
    fn cell_counts() {
        assert_eq!(PyramidSpec::new(3).unwrap().total_cells(), 21);
        assert_eq!(PyramidSpec::new(5).unwrap().total_cells(), 341);
        assert_eq!(PyramidSpec::new(3).unwrap().output_len(1000), 21000);
    }

    #[test]
    fn single_item_at_origin() {
        let h = pyramid_pool(&[(0, 0, 1)], 2, 10, 10, PyramidSpec::new(3).unwrap()).unwrap();
        let nonzero: Vec<(usize, f64)> = h.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        // cell 0 of each level, bin 1
        assert_eq!(nonzero.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 3, 11]);
        assert!(nonzero.iter().all(|&(_, v)| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn far_corner_is_clamped_into_last_cell() {
        let h = pyramid_pool(&[(9, 9, 0)], 1, 10, 10, PyramidSpec::new(2).unwrap()).unwrap();
        assert_eq!(h, vec![0.5, 0.0, 0.0, 0.0, 0.5]);
        assert!(pyramid_pool(&[(10, 0, 0)], 1, 10, 10, PyramidSpec::new(2).unwrap()).is_err());
    }

    #[test]
    fn uniform_items_put_one_level_share_at_level_zero() {
        let items: Vec<_> = (0..16u32).flat_map(|y| (0..16u32).map(move |x| (x, y, 0))).collect();
        let h = pyramid_pool(&items, 1, 16, 16, PyramidSpec::new(4).unwrap()).unwrap();
        assert!((h[0] - 0.25).abs() < 1e-15);
        assert!((h[1..5].iter().sum::<f64>() - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mass_is_one_or_zero(items in proptest::collection::vec((0u32..30, 0u32..20, 0usize..5), 0..50), levels in 1usize..5) {
            let h = pyramid_pool(&items, 5, 30, 20, PyramidSpec::new(levels).unwrap()).unwrap();
            let mass: f64 = h.iter().sum();
            if items.is_empty() {
                prop_assert_eq!(mass, 0.0);
            } else {
                prop_assert!((mass - 1.0).abs() < 1e-12);
            }
        }
    }
}
