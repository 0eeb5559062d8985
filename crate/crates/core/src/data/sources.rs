//! Raw on-disk formats: IDX (MNIST family), CIFAR-10 binary batches and
//! directories of PNG files.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use super::Split;
use crate::batch::ImageBatch;
use crate::error::{Error, Result};

/// Images in their native size, possibly several differently-shaped chunks.
pub(super) struct RawSet {
    pub images: Vec<ImageBatch>,
    pub labels: Option<Vec<u32>>,
    pub num_classes: Option<usize>,
    pub available: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_u32_be(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(b))
}

fn idx_header(r: &mut impl Read, path: &Path, expected_magic: u32) -> Result<Vec<usize>> {
    let magic = read_u32_be(r, path)?;
    if magic != expected_magic {
        return Err(Error::corrupt(path, format!("bad IDX magic {magic:#010x}, expected {expected_magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    (0..rank).map(|_| read_u32_be(r, path).map(|d| d as usize)).collect()
}

/// `train-*-idx?-ubyte` / `t10k-*-idx?-ubyte` pairs.
pub(super) fn idx(dir: &Path, split: Split, limit: Option<usize>) -> Result<RawSet> {
    let prefix = if split == Split::Train { "train" } else { "t10k" };
    let img_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let lbl_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    let mut r = open(&img_path)?;
    let dims = idx_header(&mut r, &img_path, 0x0000_0803)?;
    let (count, h, w) = (dims[0], dims[1], dims[2]);
    let n = limit.unwrap_or(count).min(count);
    let mut bytes = vec![0u8; n * h * w];
    r.read_exact(&mut bytes).map_err(|_| Error::corrupt(&img_path, "file shorter than its header claims"))?;

    let mut lr = open(&lbl_path)?;
    let ldims = idx_header(&mut lr, &lbl_path, 0x0000_0801)?;
    if ldims[0] != count {
        return Err(Error::corrupt(&lbl_path, format!("{} labels for {count} images", ldims[0])));
    }
    let mut lbytes = vec![0u8; n];
    lr.read_exact(&mut lbytes).map_err(|_| Error::corrupt(&lbl_path, "file shorter than its header claims"))?;
    if let Some(bad) = lbytes.iter().find(|&&l| l > 9) {
        return Err(Error::corrupt(&lbl_path, format!("label {bad} outside 0..10")));
    }
    let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(RawSet {
        images: vec![ImageBatch::new(n, h, w, 1, data)?],
        labels: Some(lbytes.into_iter().map(u32::from).collect()),
        num_classes: Some(10),
        available: count,
    })
}

const CIFAR_RECORD: usize = 1 + 3 * 1024;

/// CIFAR-10 binary version: `data_batch_{1..5}.bin` and `test_batch.bin`,
/// each record a label byte followed by planar R, G, B 32x32 bytes.
pub(super) fn cifar10(dir: &Path, split: Split, limit: Option<usize>) -> Result<RawSet> {
    let dir = if dir.join("cifar-10-batches-bin").is_dir() { dir.join("cifar-10-batches-bin") } else { dir.to_path_buf() };
    let files: Vec<PathBuf> = match split {
        Split::Train => (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
        _ => vec![dir.join("test_batch.bin")],
    };
    let mut available = 0;
    for f in &files {
        let len = std::fs::metadata(f).map_err(|e| Error::io(f, e))?.len() as usize;
        if len % CIFAR_RECORD != 0 {
            return Err(Error::corrupt(f, format!("size {len} is not a multiple of {CIFAR_RECORD}")));
        }
        available += len / CIFAR_RECORD;
    }
    let n = limit.unwrap_or(available).min(available);
    let mut data = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    let mut rec = vec![0u8; CIFAR_RECORD];
    'files: for f in &files {
        let mut r = open(f)?;
        while labels.len() < n {
            match r.read_exact(&mut rec) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => continue 'files,
                Err(e) => return Err(Error::io(f, e)),
            }
            if rec[0] > 9 {
                return Err(Error::corrupt(f, format!("label {} outside 0..10", rec[0])));
            }
            labels.push(rec[0] as u32);
            for p in 0..1024 {
                for ch in 0..3 {
                    data.push(rec[1 + ch * 1024 + p] as f32 / 255.0);
                }
            }
        }
        break;
    }
    Ok(RawSet { images: vec![ImageBatch::new(n, 32, 32, 3, data)?], labels: Some(labels), num_classes: Some(10), available })
}

fn collect_pngs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_pngs(&p, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(p);
        }
    }
    Ok(())
}

fn decode_png(path: &Path) -> Result<ImageBatch> {
    let img = image::open(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        ImageBatch::new(1, h, w, 3, img.to_rgb32f().into_raw())
    } else {
        ImageBatch::new(1, h, w, 1, img.to_luma32f().into_raw())
    }
}

/// All PNGs below `dir`, in sorted path order. When every file sits inside
/// a first-level subdirectory, that subdirectory is the class label.
pub(super) fn png_dir(dir: &Path) -> Result<RawSet> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "image directory not found")));
    }
    let mut files = Vec::new();
    collect_pngs(dir, &mut files)?;
    let class_of = |p: &PathBuf| -> Option<String> {
        let rel = p.strip_prefix(dir).ok()?;
        let mut comps = rel.components();
        let first = comps.next()?;
        comps.next()?;
        Some(first.as_os_str().to_string_lossy().into_owned())
    };
    let classes: Option<Vec<String>> = files.iter().map(class_of).collect();
    let (labels, num_classes) = match classes {
        Some(names) if !names.is_empty() => {
            let mut uniq = names.clone();
            uniq.sort();
            uniq.dedup();
            let labels = names.iter().map(|n| uniq.binary_search(n).unwrap() as u32).collect();
            (Some(labels), Some(uniq.len()))
        }
        _ => (None, None),
    };
    let images = files.iter().map(|p| decode_png(p)).collect::<Result<Vec<_>>>()?;
    Ok(RawSet { available: images.len(), images, labels, num_classes })
}
