use crate::imgio::Image;

/// Black → red → yellow → white.
fn hot(t: f64) -> [u8; 3] {
    let ch = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * t), ch(3.0 * t - 1.0), ch(3.0 * t - 2.0)]
}

/// Row-normalized confusion matrix as an `out_size`-pixel square (at least
/// one pixel per cell), nearest-neighbor scaled. Empty rows render black.
pub fn render_heatmap(confusion: &[Vec<u64>], out_size: usize) -> Image {
    let k = confusion.len().max(1);
    let size = out_size.max(k);
    let colors: Vec<Vec<[u8; 3]>> = confusion
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&n| hot(if total == 0 { 0.0 } else { n as f64 / total as f64 }))
                .collect()
        })
        .collect();
    let mut img = Image::filled(size, size, [0, 0, 0]);
    if confusion.is_empty() {
        return img;
    }
    for y in 0..size {
        let r = y * k / size;
        for x in 0..size {
            let c = x * k / size;
            img.set_pixel(x, y, colors[r].get(c).copied().unwrap_or([0, 0, 0]));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_bright_diagonal() {
        let img = render_heatmap(&[vec![3, 0], vec![0, 5]], 10);
        assert_eq!(img.pixel(2, 2), [255, 255, 255]);
        assert_eq!(img.pixel(7, 7), [255, 255, 255]);
        assert_eq!(img.pixel(7, 2), [0, 0, 0]);
        assert_eq!(img.pixel(2, 7), [0, 0, 0]);
    }

    #[test]
    fn empty_row_is_dark() {
        let img = render_heatmap(&[vec![0, 0], vec![1, 1]], 4);
        assert!((0..4).all(|x| img.pixel(x, 0) == [0, 0, 0]));
        assert_eq!(img.pixel(0, 3), hot(0.5));
    }
}
