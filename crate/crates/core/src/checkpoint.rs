//! Versioned binary container for a configuration, parameters and scaler.
//!
//! ```text
//! "FILMCKPT" u32:version
//! u64:len config-text
//! u8:has_scaler [u64:len scaler-text]
//! u32:tensors { u32:len name  u32:ndim u64:dims..  f64:data.. }
//! ```
//! All integers and floats little-endian; floats are stored as raw bits.

use std::path::Path;

use crate::config::RunConfig;
use crate::data::Scaler;
use crate::error::{FilmError, Result};
use crate::model::{FilmModel, FilmParams};
use crate::spectral::SpectralWeights;

const MAGIC: &[u8; 8] = b"FILMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: FilmParams,
    pub scaler: Option<Scaler>,
}

fn tensors(p: &FilmParams) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out = Vec::new();
    for (e, w) in p.experts.iter().enumerate() {
        let parts: Vec<(&str, &[usize], [&[f64]; 2])> = match w {
            SpectralWeights::Full(f) => vec![("w", f.w.re.shape(), f.w.slices())],
            SpectralWeights::LowRank(l) => vec![
                ("w0", l.w0.re.shape(), l.w0.slices()),
                ("w1", l.w1.re.shape(), l.w1.slices()),
                ("w2", l.w2.re.shape(), l.w2.slices()),
            ],
        };
        for (name, shape, [re, im]) in parts {
            out.push((format!("expert{e}.{name}.re"), shape.to_vec(), re));
            out.push((format!("expert{e}.{name}.im"), shape.to_vec(), im));
        }
    }
    out.push(("merge".into(), vec![p.merge.len()], p.merge.as_slice().expect("contiguous")));
    out.push(("revin.gamma".into(), vec![p.revin.gamma.len()], p.revin.gamma.as_slice().expect("contiguous")));
    out.push(("revin.beta".into(), vec![p.revin.beta.len()], p.revin.beta.as_slice().expect("contiguous")));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            FilmError::Format(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| FilmError::Format("checkpoint text is not UTF-8".into()))
    }
}

fn put_text(out: &mut Vec<u8>, text: &str, wide: bool) {
    if wide {
        out.extend((text.len() as u64).to_le_bytes());
    } else {
        out.extend((text.len() as u32).to_le_bytes());
    }
    out.extend(text.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        put_text(&mut out, &self.config.to_text(), true);
        match &self.scaler {
            Some(s) => {
                out.push(1);
                put_text(&mut out, &s.to_text(), true);
            }
            None => out.push(0),
        }
        let ts = tensors(&self.params);
        out.extend((ts.len() as u32).to_le_bytes());
        for (name, shape, data) in ts {
            put_text(&mut out, &name, false);
            out.extend((shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend((d as u64).to_le_bytes());
            }
            for v in data {
                out.extend(v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(FilmError::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FilmError::Format(format!(
                "checkpoint version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.u64()? as usize;
        let config = RunConfig::from_text(&r.text(len)?)?;
        let scaler = match r.u8()? {
            0 => None,
            1 => {
                let len = r.u64()? as usize;
                Some(Scaler::from_text(&r.text(len)?)?)
            }
            f => return Err(FilmError::Format(format!("bad scaler flag {f}"))),
        };
        let model = FilmModel::new(config.model.clone())?;
        let mut params = model.zero_params();
        let expected: Vec<(String, Vec<usize>)> =
            tensors(&params).into_iter().map(|(n, s, _)| (n, s)).collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(FilmError::Format(format!(
                "checkpoint holds {count} tensors, configuration implies {}",
                expected.len()
            )));
        }
        let mut targets = params.slices_mut();
        // `tensors` and `slices_mut` list the same buffers in the same order
        for ((name, shape), dst) in expected.iter().zip(targets.iter_mut()) {
            let len = r.u32()? as usize;
            let got_name = r.text(len)?;
            let ndim = r.u32()? as usize;
            let got_shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &got_name != name || &got_shape != shape {
                return Err(FilmError::Format(format!(
                    "expected tensor {name} {shape:?}, found {got_name} {got_shape:?}"
                )));
            }
            for v in dst.iter_mut() {
                *v = f64::from_bits(r.u64()?);
            }
        }
        drop(targets);
        if r.pos != buf.len() {
            return Err(FilmError::Format(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self { config, params, scaler })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
