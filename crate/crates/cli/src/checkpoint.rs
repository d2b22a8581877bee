//! Checkpoint persistence. Everything sampling needs rides along with the
//! parameters: config snapshot, limit distributions, schedule arrays, and
//! the size histogram, all integrity-checked with a trailing CRC32.
//!
//! Tensors are stored as little-endian f64 so `load(save(m))` reproduces
//! forward outputs bit for bit.

use dgdm_core::denoiser::{DenoiserModel, ModelDims, Tensor};
use dgdm_core::sampling::SizeDistribution;
use dgdm_core::schedule::{LimitDistributions, NoiseSchedule, ScheduleKind};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"DGDMB1";
const DTYPE_F64: u8 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic; not a checkpoint file")]
    BadMagic,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    BadChecksum { stored: u32, computed: u32 },
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub limits: LimitDistributions,
    pub schedule: NoiseSchedule,
    pub size_dist: SizeDistribution,
    pub model: DenoiserModel,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len() as u32);
        for &v in vs {
            self.f64(v);
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u32()? as usize;
        if n > 100_000_000 {
            return Err(CheckpointError::Malformed(format!("vector of {n} floats")));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn save(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.bytes(ckpt.config_text.as_bytes());

    // Limits.
    w.f64s(ckpt.limits.mx());
    w.f64s(ckpt.limits.me());
    w.f64s(ckpt.limits.mxb());
    w.f64s(ckpt.limits.meb());
    w.f64(ckpt.limits.r());

    // Schedule.
    w.u8(match ckpt.schedule.kind() {
        ScheduleKind::Cosine => 0,
        ScheduleKind::Linear => 1,
    });
    w.f64s(ckpt.schedule.alphas());
    w.f64s(ckpt.schedule.alpha_bars());

    // Size distribution.
    w.u32(ckpt.size_dist.sizes().len() as u32);
    for (&s, &p) in ckpt.size_dist.sizes().iter().zip(ckpt.size_dist.probs()) {
        w.u32(s as u32);
        w.f64(p);
    }

    // Model.
    let dims = ckpt.model.dims();
    for v in [dims.a, dims.d, dims.layers, dims.h_node, dims.h_edge, dims.heads, dims.max_n] {
        w.u32(v as u32);
    }
    w.u32(ckpt.model.params().len() as u32);
    for (name, tensor) in ckpt.model.param_names().iter().zip(ckpt.model.params()) {
        w.bytes(name.as_bytes());
        w.u32(tensor.rows as u32);
        w.u32(tensor.cols as u32);
        w.u8(DTYPE_F64);
        for &v in &tensor.data {
            w.f64(v);
        }
    }

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn load(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::BadChecksum { stored, computed });
    }

    let mut r = Reader::new(&body[MAGIC.len()..]);
    let config_text = String::from_utf8_lossy(r.bytes()?).to_string();

    let mx = r.f64s()?;
    let me = r.f64s()?;
    let mxb = r.f64s()?;
    let meb = r.f64s()?;
    let r_mix = r.f64()?;
    let limits = LimitDistributions::new(mx, me, mxb, meb, r_mix)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    let kind = match r.u8()? {
        0 => ScheduleKind::Cosine,
        1 => ScheduleKind::Linear,
        other => return Err(CheckpointError::Malformed(format!("schedule kind {other}"))),
    };
    let alphas = r.f64s()?;
    let alpha_bars = r.f64s()?;
    let schedule = NoiseSchedule::from_parts(kind, alphas, alpha_bars)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    let n_sizes = r.u32()? as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    let mut probs = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32()? as usize);
        probs.push(r.f64()?);
    }
    let size_dist = SizeDistribution::from_parts(sizes, probs)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    let mut dims_vals = [0usize; 7];
    for v in &mut dims_vals {
        *v = r.u32()? as usize;
    }
    let dims = ModelDims {
        a: dims_vals[0],
        d: dims_vals[1],
        layers: dims_vals[2],
        h_node: dims_vals[3],
        h_edge: dims_vals[4],
        heads: dims_vals[5],
        max_n: dims_vals[6],
    };

    let n_tensors = r.u32()? as usize;
    if n_tensors > 1_000_000 {
        return Err(CheckpointError::Malformed(format!("{n_tensors} tensors")));
    }
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name = String::from_utf8_lossy(r.bytes()?).to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let dtype = r.u8()?;
        if dtype != DTYPE_F64 {
            return Err(CheckpointError::Malformed(format!("tensor dtype {dtype}")));
        }
        if rows.saturating_mul(cols) > 100_000_000 {
            return Err(CheckpointError::Malformed(format!("tensor {rows}x{cols}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        tensors.push((name, Tensor { rows, cols, data }));
    }
    let model = DenoiserModel::from_named_tensors(dims, tensors)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    Ok(Checkpoint { config_text, limits, schedule, size_dist, model })
}
