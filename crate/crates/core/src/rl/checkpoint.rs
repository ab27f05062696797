//! Flat binary weight checkpoints.
//!
//! Layout, all little-endian: the 8-byte magic `FLXQNET1`, a `u32` layer
//! count `L`, `L + 1` `u32` layer widths, then for each layer its weights as
//! `f64` in row-major `outputs × inputs` order followed by its biases.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::network::{Dense, QNetwork};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FLXQNET1";

pub fn write_checkpoint<W: Write>(net: &QNetwork, mut out: W) -> Result<()> {
    let dims = net.dims();
    out.write_all(MAGIC)?;
    out.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for d in &dims {
        out.write_all(&(*d as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Reads a checkpoint into a network without dropout.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<QNetwork> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a flexagg network checkpoint".into()));
    }
    let layers = read_u32(&mut input)? as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::Config(format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers)
        .map(|_| read_u32(&mut input).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(layers);
    for w in dims.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = Array2::from_shape_vec((outputs, inputs), read_f64s(&mut input, inputs * outputs)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let bias = Array1::from(read_f64s(&mut input, outputs)?);
        out.push(Dense { weights, bias });
    }
    QNetwork::from_layers(out)
}
