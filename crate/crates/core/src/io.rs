//! Binary tensor files, content hashes and PNG output.
//!
//! Tensor file layout (little endian): 8-byte magic `FCTENSR1`, `u32` rank,
//! `rank` x `u64` dims, then the `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FCTENSR1";

pub fn write_tensor(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != data.len() {
        return Err(Error::ShapeMismatch { expected: format!("{shape:?}"), got: format!("{} values", data.len()) });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        write(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write(&buf)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a tensor file. With `max_leading = Some(k)` only the first `k`
/// entries along the leading axis are read.
pub fn read_tensor(path: &Path, max_leading: Option<usize>) -> Result<(Vec<usize>, Vec<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let mut read = |buf: &mut [u8]| r.read_exact(buf).map_err(|e| Error::io(path, e));
    let mut magic = [0u8; 8];
    read(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::corrupt(path, "not a tensor file (bad magic)"));
    }
    let mut b4 = [0u8; 4];
    read(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::corrupt(path, format!("unsupported rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b8 = [0u8; 8];
        read(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let total: usize = shape.iter().product();
    let expected_len = 12 + 8 * rank as u64 + 4 * total as u64;
    if file_len != expected_len {
        return Err(Error::corrupt(path, format!("expected {expected_len} bytes for shape {shape:?}, found {file_len}")));
    }
    if let Some(k) = max_leading {
        shape[0] = shape[0].min(k);
    }
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 4];
    read(&mut buf)?;
    let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((shape, data))
}

pub fn save_images(path: &Path, images: &ImageBatch) -> Result<()> {
    let (n, h, w, c) = images.shape();
    write_tensor(path, &[n, h, w, c], images.data())
}

pub fn load_images(path: &Path, limit: Option<usize>) -> Result<ImageBatch> {
    let (shape, data) = read_tensor(path, limit)?;
    if shape.len() != 4 {
        return Err(Error::corrupt(path, format!("expected a rank-4 image tensor, found shape {shape:?}")));
    }
    ImageBatch::new(shape[0], shape[1], shape[2], shape[3], data)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn save_rgb(path: &Path, width: u32, height: u32, pixels: Vec<u8>) -> Result<()> {
    image::RgbImage::from_raw(width, height, pixels)
        .expect("pixel buffer matches dimensions")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Writes rows of images as one PNG grid; each entry of `rows` becomes one
/// band of the grid, at most `cols` images wide. Grayscale images are
/// replicated to RGB.
pub fn write_image_grid(path: &Path, rows: &[&ImageBatch], cols: usize) -> Result<()> {
    let (h, w) = rows.iter().find(|r| !r.is_empty()).map(|r| (r.shape().1, r.shape().2)).unwrap_or((32, 32));
    let pad = 2;
    let bands: Vec<usize> = rows.iter().map(|r| r.len().div_ceil(cols).max(1)).collect();
    let gw = cols * (w + pad) + pad;
    let gh = bands.iter().sum::<usize>() * (h + pad) + pad;
    let mut px = vec![255u8; gw * gh * 3];
    let mut band_y = 0;
    for (batch, &nb) in rows.iter().zip(&bands) {
        let c = batch.shape().3;
        for i in 0..batch.len() {
            let (gx, gy) = (i % cols, band_y + i / cols);
            let (ox, oy) = (pad + gx * (w + pad), pad + gy * (h + pad));
            let s = batch.sample(i);
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..3 {
                        let v = s[(y * w + x) * c + ch.min(c - 1)];
                        px[((oy + y) * gw + ox + x) * 3 + ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    }
                }
            }
        }
        band_y += nb;
    }
    save_rgb(path, gw as u32, gh as u32, px)
}

const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [23, 190, 207]];

/// Minimal line chart: one polyline per series on shared, auto-scaled axes.
/// Non-finite points are skipped. No text is drawn; the CSV next to the plot
/// carries the labels.
pub fn write_line_plot(path: &Path, series: &[Vec<(f64, f64)>]) -> Result<()> {
    let (width, height, margin) = (640usize, 400usize, 30usize);
    let pts = || series.iter().flatten().filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let mut px = vec![255u8; width * height * 3];
    let put = |x: i64, y: i64, color: [u8; 3], px: &mut Vec<u8>| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            let o = (y as usize * width + x as usize) * 3;
            px[o..o + 3].copy_from_slice(&color);
        }
    };
    let (pw, ph) = ((width - 2 * margin) as f64, (height - 2 * margin) as f64);
    let to_px = |x: f64, y: f64| {
        (margin as f64 + (x - x0) / (x1 - x0) * pw, (height - margin) as f64 - (y - y0) / (y1 - y0) * ph)
    };
    for i in margin..=width - margin {
        put(i as i64, (height - margin) as i64, [0, 0, 0], &mut px);
    }
    for j in margin..=height - margin {
        put(margin as i64, j as i64, [0, 0, 0], &mut px);
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut prev: Option<(f64, f64)> = None;
        for &(x, y) in s {
            if !(x.is_finite() && y.is_finite()) {
                prev = None;
                continue;
            }
            let p = to_px(x, y);
            if let Some(q) = prev {
                let steps = ((p.0 - q.0).abs().max((p.1 - q.1).abs()).ceil() as usize).max(1);
                for t in 0..=steps {
                    let f = t as f64 / steps as f64;
                    put((q.0 + (p.0 - q.0) * f).round() as i64, (q.1 + (p.1 - q.1) * f).round() as i64, color, &mut px);
                }
            }
            for dx in -1..=1 {
                for dy in -1..=1 {
                    put(p.0.round() as i64 + dx, p.1.round() as i64 + dy, color, &mut px);
                }
            }
            prev = Some(p);
        }
    }
    save_rgb(path, width as u32, height as u32, px)
}
