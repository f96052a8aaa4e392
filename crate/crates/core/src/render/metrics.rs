use super::Image;
use crate::error::{Error, Result};

/// BT.601 luma weights used to grayscale images for SSIM.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 8;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared error over every channel of every pixel.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10·log10(1/MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Mean SSIM over every 8×8 window (stride 1) of the luma channel, unit
/// dynamic range, uniform window weights and population statistics.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let x = a.luma(LUMA_WEIGHTS);
    let y = b.luma(LUMA_WEIGHTS);
    // Summed-area tables of x, y, x², y², xy.
    let stride = w + 1;
    let mut tables = vec![vec![0.0; stride * (h + 1)]; 5];
    for r in 0..h {
        for c in 0..w {
            let (xv, yv) = (x[r * w + c], y[r * w + c]);
            let vals = [xv, yv, xv * xv, yv * yv, xv * yv];
            for (t, v) in tables.iter_mut().zip(vals) {
                t[(r + 1) * stride + c + 1] = v + t[r * stride + c + 1] + t[(r + 1) * stride + c] - t[r * stride + c];
            }
        }
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let window_sum = |t: &[f64], r: usize, c: usize| {
        let (r1, c1) = (r + SSIM_WINDOW, c + SSIM_WINDOW);
        t[r1 * stride + c1] - t[r * stride + c1] - t[r1 * stride + c] + t[r * stride + c]
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let mx = window_sum(&tables[0], r, c) / n;
            let my = window_sum(&tables[1], r, c) / n;
            let vx = window_sum(&tables[2], r, c) / n - mx * mx;
            let vy = window_sum(&tables[3], r, c) / n - my * my;
            let cov = window_sum(&tables[4], r, c) / n - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
