//! Binary checkpoint: magic, version, config text, parameter table, CRC-32.
//!
//! All integers are little-endian `u32`. Layout:
//!
//! ```text
//! "IARN" | version | config_len | config (UTF-8 key = value)
//! | param_count | { name_len | name | rank | dims... | f32 data } ...
//! | crc32 of every preceding byte
//! ```

use std::path::Path;

use iarn_tensor::Array;

use crate::backbone::Backbone;
use crate::config::TrainConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IARN";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("field {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(config: &TrainConfig, model: &Backbone<f32>) -> Result<Vec<u8>> {
    if config.backbone != *model.config() {
        return Err(Error::Checkpoint("training config and model disagree on the backbone".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let text = config.to_text();
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    put_u32(&mut out, model.params().len())?;
    for p in model.params() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rank())?;
        for &d in p.value.shape() {
            put_u32(&mut out, d)?;
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(TrainConfig, Backbone<f32>)> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not an IARN checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "CRC mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let config = TrainConfig::from_text(&r.string("config")?)
        .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    let count = r.u32("parameter count")?;
    let mut named = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string("parameter name")?;
        let rank = r.u32("rank")?;
        let dims = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let raw = r.take(numel.checked_mul(4).unwrap_or(usize::MAX), "parameter data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        named.push((name, Array::new(dims, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let mut model = Backbone::zeros(config.backbone.clone())
        .map_err(|e| Error::Checkpoint(format!("embedded backbone config: {e}")))?;
    model.load_params(named)?;
    Ok((config, model))
}

pub fn save(path: &Path, config: &TrainConfig, model: &Backbone<f32>) -> Result<()> {
    let bytes = to_bytes(config, model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(TrainConfig, Backbone<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> (TrainConfig, Backbone<f32>) {
        let mut cfg = TrainConfig::default();
        cfg.backbone = BackboneConfig {
            num_blocks: 2,
            atrous_layers: 2,
            feature_width: 4,
            ..BackboneConfig::default()
        };
        cfg.base_lr = 3.3e-4;
        let model = Backbone::random(cfg.backbone.clone(), &mut ChaCha8Rng::seed_from_u64(5), 1.0).unwrap();
        (cfg, model)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (cfg, model) = sample();
        let bytes = to_bytes(&cfg, &model).unwrap();
        let (cfg2, model2) = from_bytes(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        for (a, b) in model.params().iter().zip(model2.params()) {
            assert_eq!(a.name, b.name);
            let bits = |x: &Array<f32>| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(to_bytes(&cfg2, &model2).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let (cfg, model) = sample();
        let bytes = to_bytes(&cfg, &model).unwrap();
        assert_eq!(&bytes[..4], b"IARN");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(std::str::from_utf8(&bytes[12..12 + n]).unwrap(), cfg.to_text());
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let (cfg, model) = sample();
        let bytes = to_bytes(&cfg, &model).unwrap();
        for pos in [5, 20, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))), "byte {pos}");
        }
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(b"PNG").is_err());
    }

    #[test]
    fn mismatched_backbone_is_refused() {
        let (mut cfg, model) = sample();
        cfg.backbone.num_blocks = 3;
        assert!(to_bytes(&cfg, &model).is_err());
    }
}
