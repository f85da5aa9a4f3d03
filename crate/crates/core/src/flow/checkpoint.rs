//! Binary flow checkpoints.
//!
//! Layout (all integers `u32`, all reals `f64`, little-endian):
//!
//! ```text
//! magic "RSNLFLOW" | version | summary_dim | context_dim | bins | bound | n_layers
//! per layer:  n_dense
//!   per dense: in | out | weight (out*in, row-major) | bias (out)
//! ```
//!
//! Masks are not stored; they follow from the layer index and `summary_dim`.

use std::fs;
use std::path::Path;

use super::{coupling_mask, CouplingLayer, Flow};
use crate::error::{Error, Result};
use crate::nn::{Dense, Matrix, Mlp};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSNLFLOW";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_DIM: u32 = 1 << 16;

pub fn encode_flow(flow: &Flow) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    put_u32(&mut out, flow.summary_dim);
    put_u32(&mut out, flow.context_dim);
    put_u32(&mut out, flow.bins);
    out.extend_from_slice(&flow.bound.to_le_bytes());
    put_u32(&mut out, flow.layers.len());
    for layer in &flow.layers {
        put_u32(&mut out, layer.conditioner.layers.len());
        for d in &layer.conditioner.layers {
            put_u32(&mut out, d.input_dim());
            put_u32(&mut out, d.output_dim());
            for v in d.weight.data().iter().chain(&d.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Parse(format!("flow checkpoint truncated at byte {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::Parse(format!(
                "flow checkpoint: {what} = {v} out of range"
            )));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Parse("size overflow".into()))?,
        )?;
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse(
                "flow checkpoint contains non-finite values".into(),
            ));
        }
        Ok(v)
    }
}

pub fn decode_flow(bytes: &[u8]) -> Result<Flow> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not a flow checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported flow checkpoint version {version}"
        )));
    }
    let summary_dim = r.dim("summary_dim")?;
    let context_dim = r.dim("context_dim")?;
    let bins = r.dim("bins")?;
    let bound = r.f64s(1)?[0];
    let n_layers = r.dim("layer count")?;
    let mut layers = Vec::new();
    for l in 0..n_layers {
        let n_dense = r.dim("dense count")?;
        let mut dense = Vec::new();
        for _ in 0..n_dense {
            let input = r.dim("dense input")?;
            let output = r.dim("dense output")?;
            let w = r.f64s(input * output)?;
            let bias = r.f64s(output)?;
            dense.push(Dense {
                weight: Matrix::from_vec(output, input, w)?,
                bias,
            });
        }
        let conditioner = Mlp::from_layers(dense).map_err(|e| Error::Parse(e.to_string()))?;
        let (transformed, identity) = coupling_mask(summary_dim, l);
        layers.push(CouplingLayer {
            transformed,
            identity,
            conditioner,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes in flow checkpoint",
            bytes.len() - r.pos
        )));
    }
    Flow::from_parts(summary_dim, context_dim, bins, bound, layers)
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_flow(flow: &Flow, path: &Path) -> Result<()> {
    fs::write(path, encode_flow(flow))?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<Flow> {
    decode_flow(&fs::read(path)?)
}
