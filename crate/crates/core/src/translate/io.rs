//! T2TM model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "T2TM"  u32 version  u8 kind
//! geometry: camera grid (u32 rows, u32 cols, f64 origin[2], f64 spacing[2]),
//!           u32 downsample, u32 N, f64 pitch, f64 sensing radius, N × f64[2]
//! layers:   u32 n, n × u32 architecture words
//!           u32 tensors, per tensor: u32 rank, rank × u32 dims
//! params:   u32 count, count × f32
//! meta:     u32 epochs_run, u32 best_epoch, f64 best_val_l3, u64 seed,
//!           u64 config_hash
//! u32 CRC-32 of everything above
//! ```
//!
//! Architecture words are `[levels, channels…, pool rows, pool cols]`.

use std::path::Path;

use super::{Architecture, TrainingMeta, TranslatorKind, TranslatorModel};
use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, TaxelLayout};

pub const MODEL_MAGIC: &[u8; 4] = b"T2TM";
pub const MODEL_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0
            .extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated model file: missing {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    /// Reads a u32 count and checks it against the bytes left, so a corrupt
    /// count cannot trigger a huge allocation.
    fn count(&mut self, item_bytes: usize, what: &str) -> Result<usize> {
        let at = self.pos;
        let n = self.u32(what)?;
        if n.saturating_mul(item_bytes) > self.bytes.len() - self.pos {
            return Err(Error::format(at as u64, format!("{what} count {n} exceeds file size")));
        }
        Ok(n)
    }
}

pub fn encode_model(model: &TranslatorModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION as usize);
    w.u8(model.kind().code());

    let g = model.camera_grid();
    w.u32(g.rows);
    w.u32(g.cols);
    g.origin.iter().chain(&g.spacing).for_each(|&v| w.f64(v));
    w.u32(model.downsample());
    let layout = model.layout();
    w.u32(layout.n_taxels());
    w.f64(layout.pitch());
    w.f64(layout.sensing_radius());
    for p in layout.positions() {
        w.f64(p[0]);
        w.f64(p[1]);
    }

    let arch = model.architecture();
    let mut words = vec![arch.channels.len()];
    words.extend(&arch.channels);
    words.extend(arch.pool);
    w.u32(words.len());
    words.iter().for_each(|&v| w.u32(v));
    let dims = model.tensor_dims();
    w.u32(dims.len());
    for d in &dims {
        w.u32(d.len());
        d.iter().for_each(|&v| w.u32(v));
    }

    w.u32(model.params().len());
    for &p in model.params() {
        w.0.extend_from_slice(&p.to_le_bytes());
    }

    let m = &model.meta;
    w.u32(m.epochs_run as usize);
    w.u32(m.best_epoch as usize);
    w.f64(m.best_val_l3);
    w.u64(m.seed);
    w.u64(m.config_hash);
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<TranslatorModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, expected T2TM"));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION as usize {
        return Err(Error::format(4, format!("unsupported T2TM version {version}")));
    }
    let kind_code = r.u8("kind")?;
    let kind = TranslatorKind::from_code(kind_code)
        .ok_or_else(|| Error::format(8, format!("unknown model kind {kind_code}")))?;

    let rows = r.u32("grid rows")?;
    let cols = r.u32("grid cols")?;
    let origin = [r.f64("grid origin")?, r.f64("grid origin")?];
    let spacing = [r.f64("grid spacing")?, r.f64("grid spacing")?];
    let camera_grid = PixelGrid::new(rows, cols, origin, spacing)?;
    let downsample = r.u32("downsample")?;
    let n = r.count(16, "taxel")?;
    let pitch = r.f64("pitch")?;
    let radius = r.f64("sensing radius")?;
    let positions = (0..n)
        .map(|_| Ok([r.f64("taxel position")?, r.f64("taxel position")?]))
        .collect::<Result<Vec<_>>>()?;
    let layout = TaxelLayout::new(positions, pitch, radius)?;

    let arch_at = r.pos;
    let n_words = r.count(4, "architecture word")?;
    let words = (0..n_words)
        .map(|_| r.u32("architecture word"))
        .collect::<Result<Vec<_>>>()?;
    let arch = match words.split_first() {
        Some((&levels, rest)) if rest.len() == levels + 2 => Architecture {
            channels: rest[..levels].to_vec(),
            pool: [rest[levels], rest[levels + 1]],
        },
        _ => return Err(Error::format(arch_at as u64, "malformed architecture descriptor")),
    };
    let dims_at = r.pos;
    let n_tensors = r.count(4, "tensor")?;
    let mut dims = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rank = r.count(4, "tensor rank")?;
        dims.push((0..rank).map(|_| r.u32("tensor dim")).collect::<Result<Vec<_>>>()?);
    }

    let params_at = r.pos;
    let count = r.count(4, "parameter")?;
    let params: Vec<f32> = r
        .take(4 * count, "parameters")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();

    let meta = TrainingMeta {
        epochs_run: r.u32("epochs_run")? as u32,
        best_epoch: r.u32("best_epoch")? as u32,
        best_val_l3: r.f64("best_val_l3")?,
        seed: r.u64("seed")?,
        config_hash: r.u64("config_hash")?,
    };
    let body_end = r.pos;
    let stored = u32::from_le_bytes(r.take(4, "checksum")?.try_into().expect("4 bytes"));
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after T2TM checksum"));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::format(
            body_end as u64,
            format!("T2TM checksum {stored:08x} does not match contents {computed:08x}"),
        ));
    }

    let model =
        TranslatorModel::new(kind, arch, camera_grid, downsample, layout, params, meta).map_err(|e| match e {
            Error::LengthMismatch { expected, actual } => Error::format(
                params_at as u64,
                format!("parameter count {actual} does not match the layer descriptor ({expected})"),
            ),
            e => e,
        })?;
    if model.tensor_dims() != dims {
        return Err(Error::format(
            dims_at as u64,
            "tensor shapes do not match the architecture",
        ));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &TranslatorModel) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TranslatorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
