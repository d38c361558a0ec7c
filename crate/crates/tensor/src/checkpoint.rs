//! `TLW1` parameter checkpoints.
//!
//! Layout: the magic bytes `TLW1`, then per parameter the name length
//! (u16 LE), the UTF-8 name, the rank (u8), each dimension (u32 LE) and the
//! row-major values as f32 LE. The file ends after the last parameter.

use std::io::{self, Read, Write};

use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TLW1";

pub fn write_checkpoint<T: Real, W: Write>(store: &ParamStore<T>, mut out: W) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| TensorError::Checkpoint(format!("parameter name too long: {}", p.name)))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name)?;
        let rank = u8::try_from(p.value.rank())
            .map_err(|_| TensorError::Checkpoint(format!("rank too large for {}", p.name)))?;
        out.write_all(&[rank])?;
        for &d in p.value.shape() {
            let d = u32::try_from(d).map_err(|_| TensorError::Checkpoint(format!("dimension too large in {}", p.name)))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for &v in p.value.data() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads every `(name, tensor)` record in file order.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| TensorError::Checkpoint("truncated header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut records = Vec::new();
    loop {
        let mut len = [0u8; 2];
        match read_fully_or_eof(&mut input, &mut len)? {
            false => break,
            true => {}
        }
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_record(&mut input, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        read_record(&mut input, &mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut d = [0u8; 4];
            read_record(&mut input, &mut d)?;
            shape.push(u32::from_le_bytes(d) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        read_record(&mut input, &mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| TensorError::Checkpoint(format!("{name}: {e}")))?;
        records.push((name, tensor));
    }
    Ok(records)
}

fn read_record<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TensorError::Checkpoint("truncated record".into()),
        _ => TensorError::Io(e),
    })
}

/// `Ok(false)` on a clean end of stream before the first byte.
fn read_fully_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(TensorError::Checkpoint("truncated record".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}
