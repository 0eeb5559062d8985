use crate::batch::{ImageBatch, CHANNELS, SIDE};

/// Bilinear resize of channels-last images (half-pixel centers, edge clamp).
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<f32> {
    let n = src.len() / (h * w * c);
    let axis = |o: usize, len_in: usize, len_out: usize| -> (usize, usize, f32) {
        let s = ((o as f64 + 0.5) * len_in as f64 / len_out as f64 - 0.5).clamp(0.0, (len_in - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(len_in - 1), (s - i0 as f64) as f32)
    };
    let ys: Vec<_> = (0..oh).map(|y| axis(y, h, oh)).collect();
    let xs: Vec<_> = (0..ow).map(|x| axis(x, w, ow)).collect();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    for img in src.chunks_exact(h * w * c) {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for ch in 0..c {
                    let p = |y: usize, x: usize| img[(y * w + x) * c + ch];
                    let top = p(y0, x0) + (p(y0, x1) - p(y0, x0)) * fx;
                    let bot = p(y1, x0) + (p(y1, x1) - p(y1, x0)) * fx;
                    out.push(top + (bot - top) * fy);
                }
            }
        }
    }
    out
}

/// Resizes to 32x32 and maps channels to RGB: grayscale is copied into all
/// three channels, alpha (or any channel past the third) is dropped.
pub fn to_canonical(batch: &ImageBatch) -> ImageBatch {
    if batch.is_canonical() {
        return batch.clone();
    }
    let (n, h, w, c) = batch.shape();
    let resized = if (h, w) == (SIDE, SIDE) {
        batch.data().to_vec()
    } else {
        resize_bilinear(batch.data(), h, w, c, SIDE, SIDE)
    };
    let color = c >= 3;
    let mut data = Vec::with_capacity(n * SIDE * SIDE * CHANNELS);
    for px in resized.chunks_exact(c) {
        for ch in 0..CHANNELS {
            let v = if color { px[ch] } else { px[0] };
            data.push(v.clamp(0.0, 1.0));
        }
    }
    ImageBatch::new(n, SIDE, SIDE, CHANNELS, data).expect("canonical size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let b = ImageBatch::new(1, 28, 28, 1, vec![0.25; 784]).unwrap();
        let c = to_canonical(&b);
        assert!(c.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn upscale_of_2x2_interpolates() {
        // 2x2 -> 4x4: inner samples sit a quarter of the way between pixels
        let out = resize_bilinear(&[0.0, 1.0, 0.0, 1.0], 2, 2, 1, 4, 4);
        assert_eq!(&out[0..4], &[0.0, 0.25, 0.75, 1.0]);
    }
}
