//! Little-endian binary envelope shared by buffer, model and agent files.
//!
//! Every file starts with a 5-byte magic tag followed by `u64` and `f64`
//! fields. Readers track their byte offset so malformed input is reported
//! with a position.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpSpec, ParamEntry, ParamTree};

#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 5]) -> Self {
        Self { buf: magic.to_vec() }
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }

    /// Length-prefixed raw bytes.
    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn entry(&mut self, e: &ParamEntry) {
        let (r, c) = e.value.dim();
        self.u64(r as u64);
        self.u64(c as u64);
        self.f64s(e.value.iter().copied());
        self.f64s(e.m.iter().copied());
        self.f64s(e.v.iter().copied());
        self.u64(e.step);
    }

    pub fn mlp(&mut self, mlp: &Mlp) {
        let spec = mlp.spec();
        self.u64(spec.input as u64);
        self.u64(spec.hidden.len() as u64);
        for &h in &spec.hidden {
            self.u64(h as u64);
        }
        self.u64(spec.output as u64);
        for (_, e) in mlp.params().iter() {
            self.entry(e);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn write_to(self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.buf).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8], magic: &[u8; 5]) -> Result<Self> {
        if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
            return Err(Error::Parse {
                offset: 0,
                message: format!("missing magic {:?}", String::from_utf8_lossy(magic)),
            });
        }
        Ok(Self {
            bytes,
            pos: magic.len(),
        })
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take8(&mut self) -> Result<[u8; 8]> {
        if self.remaining() < 8 {
            return Err(self.error("unexpected end of file"));
        }
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
        self.pos += 8;
        Ok(b)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.take8().map(u64::from_le_bytes)
    }

    /// Reads a `u64` that is used as a length; rejects absurd values early.
    pub fn len(&mut self, max: u64) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        if v > max {
            return Err(Error::Parse {
                offset: at,
                message: format!("length {v} exceeds limit {max}"),
            });
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.take8().map(f64::from_le_bytes)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.remaining() < n.saturating_mul(8) {
            return Err(self.error("unexpected end of file"));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.len(1 << 24)?;
        if self.remaining() < n {
            return Err(self.error("unexpected end of file"));
        }
        let out = self.bytes[self.pos..self.pos + n].to_vec();
        self.pos += n;
        Ok(out)
    }

    pub fn entry(&mut self) -> Result<ParamEntry> {
        let r = self.len(1 << 24)?;
        let c = self.len(1 << 24)?;
        let n = r * c;
        let shape = |v: Vec<f64>| Array2::from_shape_vec((r, c), v).expect("length checked");
        let value = shape(self.f64s(n)?);
        let m = shape(self.f64s(n)?);
        let v = shape(self.f64s(n)?);
        let step = self.u64()?;
        Ok(ParamEntry { value, m, v, step })
    }

    pub fn mlp(&mut self) -> Result<Mlp> {
        let at = self.pos;
        let input = self.len(1 << 20)?;
        let n_hidden = self.len(1 << 10)?;
        let hidden = (0..n_hidden)
            .map(|_| self.len(1 << 20))
            .collect::<Result<Vec<_>>>()?;
        let output = self.len(1 << 20)?;
        let spec = MlpSpec {
            input,
            hidden,
            output,
        };
        let mut layers = Vec::with_capacity(spec.num_layers());
        for _ in 0..spec.num_layers() {
            let w = self.entry()?;
            let b = self.entry()?;
            layers.push((w, b));
        }
        let mut tree = ParamTree::from_layers(
            layers
                .iter()
                .map(|(w, b)| (w.value.clone(), b.value.clone()))
                .collect(),
        );
        for ((_, dst), src) in tree
            .iter_mut()
            .zip(layers.into_iter().flat_map(|(w, b)| [w, b]))
        {
            *dst = src;
        }
        Mlp::from_params(spec, tree).map_err(|e| Error::Parse {
            offset: at,
            message: e.to_string(),
        })
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
