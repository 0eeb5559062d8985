//! Checkpoint archive: 8-byte magic `FCCKPT01`, then three sections, each a
//! `u64` little-endian byte length followed by the bytes:
//! a JSON header (architecture and tensor sizes), the `f32` parameter blob
//! (encoder params, encoder state, decoder params, decoder state) and a JSON
//! training record (`null` when absent).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::EpochStats;
use super::{AeConfig, Autoencoder};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec};

const MAGIC: &[u8; 8] = b"FCCKPT01";
const FORMAT_VERSION: u32 = 1;

/// Training history kept alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub history: Vec<EpochStats>,
    pub recon_bounds: (f64, f64),
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: Option<AeConfig>,
    encoder: NetworkSpec,
    decoder: NetworkSpec,
    sizes: [usize; 4],
}

pub fn save_checkpoint(path: &Path, model: &Autoencoder, record: Option<&TrainingRecord>) -> Result<()> {
    let (e, d) = (model.encoder(), model.decoder());
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().copied(),
        encoder: e.spec().clone(),
        decoder: d.spec().clone(),
        sizes: [e.params().len(), e.state().len(), d.params().len(), d.state().len()],
    };
    let header = serde_json::to_vec_pretty(&header).expect("serializable");
    let mut blob = Vec::with_capacity(4 * model.param_count());
    for v in e.params().iter().chain(e.state()).chain(d.params()).chain(d.state()) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    let record = serde_json::to_vec(&record).expect("serializable");
    let file = File::create(path).map_err(|err| Error::io(path, err))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|err| Error::io(path, err));
    put(MAGIC)?;
    for section in [&header, &blob, &record] {
        put(&(section.len() as u64).to_le_bytes())?;
        put(section)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

fn read_section(r: &mut impl Read, path: &Path, limit: u64) -> Result<Vec<u8>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| Error::corrupt(path, "truncated checkpoint"))?;
    let len = u64::from_le_bytes(len);
    if len > limit {
        return Err(Error::corrupt(path, format!("section length {len} exceeds file size")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(path, "truncated checkpoint"))?;
    Ok(buf)
}

pub fn load_checkpoint(path: &Path) -> Result<(Autoencoder, Option<TrainingRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::corrupt(path, "truncated checkpoint"))?;
    if &magic != MAGIC {
        return Err(Error::corrupt(path, "not a checkpoint (bad magic)"));
    }
    let header = read_section(&mut r, path, file_len)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::corrupt(path, format!("unsupported checkpoint version {}", header.format_version)));
    }
    if let Some(cfg) = header.config {
        cfg.validate().map_err(|e| Error::corrupt(path, e.to_string()))?;
        if cfg.encoder_spec() != header.encoder || cfg.decoder_spec() != header.decoder {
            return Err(Error::corrupt(path, "architecture does not match its config"));
        }
    }
    for spec in [&header.encoder, &header.decoder] {
        if spec.output_dims().is_none() {
            return Err(Error::corrupt(path, "inconsistent network description"));
        }
    }
    let expected = [
        header.encoder.param_count(),
        header.encoder.state_count(),
        header.decoder.param_count(),
        header.decoder.state_count(),
    ];
    if header.sizes != expected {
        return Err(Error::corrupt(path, format!("tensor sizes {:?} do not match architecture {:?}", header.sizes, expected)));
    }
    let blob = read_section(&mut r, path, file_len)?;
    let total: usize = expected.iter().sum();
    if blob.len() != 4 * total {
        return Err(Error::corrupt(
            path,
            format!("parameter blob has {} bytes, architecture needs {}", blob.len(), 4 * total),
        ));
    }
    let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |k: usize| values.by_ref().take(k).collect::<Vec<f32>>();
    let (ep, es, dp, ds) = (take(expected[0]), take(expected[1]), take(expected[2]), take(expected[3]));
    let encoder = Network::from_parts(header.encoder, ep, es).expect("sizes checked");
    let decoder = Network::from_parts(header.decoder, dp, ds).expect("sizes checked");
    let record = read_section(&mut r, path, file_len)?;
    let record: Option<TrainingRecord> =
        serde_json::from_slice(&record).map_err(|e| Error::corrupt(path, format!("training record: {e}")))?;
    let mut model = Autoencoder::from_networks(encoder, decoder).map_err(|e| Error::corrupt(path, e.to_string()))?;
    model.config = header.config;
    Ok((model, record))
}
