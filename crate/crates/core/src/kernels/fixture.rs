//! Binary tensor fixtures: five little-endian `u32` dims `(n, t, c, h, w)`
//! followed by `n·t·c·h·w` little-endian `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use super::{KernelError, Tensor5D};
use crate::model_ir::Shape5D;

pub fn write_tensor<W: Write>(tensor: &Tensor5D, mut out: W) -> Result<(), KernelError> {
    for d in tensor.shape().dims() {
        let d = u32::try_from(d).map_err(|_| KernelError::Format(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in tensor.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<Tensor5D, KernelError> {
    let mut dims = [0usize; 5];
    let mut word = [0u8; 4];
    for d in &mut dims {
        input.read_exact(&mut word).map_err(|e| KernelError::Format(format!("truncated header: {e}")))?;
        *d = u32::from_le_bytes(word) as usize;
    }
    let [n, t, c, h, w] = dims;
    let shape = Shape5D::new(n, t, c, h, w).map_err(|e| KernelError::Format(e.to_string()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != shape.numel() * 8 {
        return Err(KernelError::Format(format!(
            "payload has {} bytes, shape {shape} needs {}",
            bytes.len(),
            shape.numel() * 8
        )));
    }
    let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Tensor5D::from_vec(shape, data)
}

pub fn save_tensor(tensor: &Tensor5D, path: &Path) -> Result<(), KernelError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_tensor(tensor, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor5D, KernelError> {
    read_tensor(std::io::BufReader::new(std::fs::File::open(path)?))
}
