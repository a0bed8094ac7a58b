use super::{Image, Mask};

fn source_coord(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resample with pixel-center alignment.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let xs: Vec<_> = (0..width).map(|x| source_coord(x, width, img.width())).collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let (y0, y1, fy) = source_coord(y, height, img.height());
        for &(x0, x1, fx) in &xs {
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            for c in 0..3 {
                let top = p00[c] + (p10[c] - p00[c]) * fx;
                let bottom = p01[c] + (p11[c] - p01[c]) * fx;
                data.push(top + (bottom - top) * fy);
            }
        }
    }
    Image::new(width, height, data, img.space()).expect("resampled buffer is well formed")
}

/// Nearest-neighbour resample; keeps the mask binary.
pub fn resize_mask_nearest(mask: &Mask, width: usize, height: usize) -> Mask {
    if mask.width() == width && mask.height() == height {
        return mask.clone();
    }
    let pick = |d: usize, dl: usize, sl: usize| (((d as f64 + 0.5) * sl as f64 / dl as f64) as usize).min(sl - 1);
    Mask::from_fn(width, height, |x, y| {
        mask.get(pick(x, width, mask.width()), pick(y, height, mask.height()))
    })
}
