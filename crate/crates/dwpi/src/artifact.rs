//! Versioned binary artifacts for trained tables and models.
//!
//! Both formats carry the environment's spec hash; loading verifies it
//! against the embedded layout so an artifact can never be replayed against
//! a different environment. Encoding is little-endian and fully
//! deterministic, so re-running a seeded pipeline reproduces artifacts
//! byte for byte.

use std::path::Path;

use crate::agent::QTable;
use crate::demos::FeatureStats;
use crate::envs::EnvSpec;
use crate::error::{DwpiError, Result};
use crate::model::MlpModel;
use crate::morl::{PreferenceSpace, PreferenceVector};

const QTABLE_MAGIC: &[u8; 4] = b"DWQT";
const MODEL_MAGIC: &[u8; 4] = b"DWPM";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        let mut w = Writer { buf };
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.f64(*v);
        }
    }

    fn bytes(&mut self, bs: &[u8]) {
        self.u32(bs.len() as u32);
        self.buf.extend_from_slice(bs);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4], path: &Path) -> Result<Self> {
        let mut r = Reader {
            buf,
            pos: 0,
            path: path.display().to_string(),
        };
        let got = r.take(4)?;
        if got != magic {
            return Err(DwpiError::Artifact(format!(
                "{}: bad magic {:?}, expected {:?}",
                r.path,
                got,
                std::str::from_utf8(magic).unwrap()
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(DwpiError::Artifact(format!(
                "{}: unsupported version {version}",
                r.path
            )));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DwpiError::Artifact(format!("{}: truncated", self.path)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(DwpiError::Artifact(format!(
                "{}: {} trailing bytes",
                self.path,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn qtable_to_bytes(q: &QTable) -> Result<Vec<u8>> {
    let spec_json = serde_json::to_string(q.spec())?;
    let mut w = Writer::new(QTABLE_MAGIC);
    w.bytes(spec_json.as_bytes());
    w.bytes(q.spec().spec_hash().as_bytes());
    w.f64(q.space().grid_step());
    w.u32(q.space().m() as u32);
    w.u32(q.space().len() as u32);
    for p in q.space().points() {
        for x in p.weights() {
            w.f64(*x);
        }
    }
    w.f64s(q.values());
    Ok(w.buf)
}

pub fn qtable_from_bytes(bytes: &[u8], path: &Path) -> Result<QTable> {
    let mut r = Reader::new(bytes, QTABLE_MAGIC, path)?;
    let spec_json = r.bytes()?;
    let spec: EnvSpec = serde_json::from_slice(&spec_json)?;
    spec.validate()?;
    let stored_hash = String::from_utf8(r.bytes()?)
        .map_err(|_| DwpiError::Artifact(format!("{}: bad hash encoding", path.display())))?;
    if stored_hash != spec.spec_hash() {
        return Err(DwpiError::SpecHashMismatch {
            artifact: stored_hash,
            current: spec.spec_hash(),
        });
    }
    let grid_step = r.f64()?;
    let m = r.u32()? as usize;
    let n_points = r.u32()? as usize;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut weights = Vec::with_capacity(m);
        for _ in 0..m {
            weights.push(r.f64()?);
        }
        points.push(
            PreferenceVector::new(weights)
                .map_err(|e| DwpiError::Artifact(format!("{}: {e}", path.display())))?,
        );
    }
    let values = r.f64s()?;
    r.finish()?;
    let space = PreferenceSpace::from_points(points, grid_step)?;
    QTable::from_parts(spec, space, values)
}

pub fn save_qtable(q: &QTable, path: &Path) -> Result<()> {
    std::fs::write(path, qtable_to_bytes(q)?)
        .map_err(|e| DwpiError::io(path.display().to_string(), e))
}

pub fn load_qtable(path: &Path) -> Result<QTable> {
    let bytes =
        std::fs::read(path).map_err(|e| DwpiError::io(path.display().to_string(), e))?;
    qtable_from_bytes(&bytes, path)
}

pub fn model_to_bytes(model: &MlpModel) -> Result<Vec<u8>> {
    let mut w = Writer::new(MODEL_MAGIC);
    w.bytes(model.spec_hash().as_bytes());
    w.f64(model.space().grid_step());
    let sizes = model.layer_sizes();
    w.u32(sizes.len() as u32);
    for s in &sizes {
        w.u32(*s as u32);
    }
    w.f64s(&model.normalizer().mean);
    w.f64s(&model.normalizer().std);
    for layer in &model.layers {
        w.u32(layer.rows as u32);
        w.u32(layer.cols as u32);
        w.f64s(&layer.w);
        w.f64s(&layer.b);
    }
    Ok(w.buf)
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<MlpModel> {
    let mut r = Reader::new(bytes, MODEL_MAGIC, path)?;
    let spec_hash = String::from_utf8(r.bytes()?)
        .map_err(|_| DwpiError::Artifact(format!("{}: bad hash encoding", path.display())))?;
    let grid_step = r.f64()?;
    let n_sizes = r.u32()? as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32()? as usize);
    }
    if sizes.len() < 2 {
        return Err(DwpiError::Artifact(format!(
            "{}: model needs at least one layer",
            path.display()
        )));
    }
    let mean = r.f64s()?;
    let std = r.f64s()?;
    let m = sizes[0];
    let hidden = &sizes[1..sizes.len() - 1];
    let mut model = MlpModel::new(
        m,
        hidden,
        FeatureStats { mean, std },
        grid_step,
        spec_hash,
        0,
    )?;
    for layer in &mut model.layers {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows != layer.rows || cols != layer.cols {
            return Err(DwpiError::Artifact(format!(
                "{}: layer shape {rows}x{cols} does not match declared sizes",
                path.display()
            )));
        }
        layer.w = r.f64s()?;
        layer.b = r.f64s()?;
        if layer.w.len() != rows * cols || layer.b.len() != rows {
            return Err(DwpiError::Artifact(format!(
                "{}: layer parameter count mismatch",
                path.display()
            )));
        }
        if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
            return Err(DwpiError::NonFinite("model parameters".into()));
        }
    }
    r.finish()?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)
        .map_err(|e| DwpiError::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes =
        std::fs::read(path).map_err(|e| DwpiError::io(path.display().to_string(), e))?;
    model_from_bytes(&bytes, path)
}

/// Writes the JSON sidecar next to a binary artifact (`<path>.json`).
pub fn write_sidecar<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(&sidecar, json)
        .map_err(|e| DwpiError::io(sidecar.display().to_string(), e))
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    std::path::PathBuf::from(name)
}
