//! Raw IQ files: interleaved little-endian `f32` I and Q, no header.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::ofdm::{FdSymbolVector, FrameSpec, TimeSeries};
use crate::pipeline::FrameCapture;
use crate::{Error, Result};

pub fn write_iq<W: Write>(mut out: W, samples: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_iq<R: Read>(mut input: R) -> Result<TimeSeries> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::size(
            "IQ byte count (multiple of 8)",
            bytes.len() - bytes.len() % 8 + 8,
            bytes.len(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

pub fn write_iq_file(path: &Path, samples: &[Complex64]) -> Result<()> {
    write_iq(std::io::BufWriter::new(std::fs::File::create(path)?), samples)
}

pub fn read_iq_file(path: &Path) -> Result<TimeSeries> {
    read_iq(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Reads one frame of `(1 + p)(N + N_cp)` samples and splits it.
pub fn ingest_iq_capture(path: &Path, spec: &FrameSpec, pilot_fd: &FdSymbolVector) -> Result<FrameCapture> {
    let rx = read_iq_file(path)?;
    if rx.len() != spec.frame_len() {
        return Err(Error::size("IQ frame samples", spec.frame_len(), rx.len()));
    }
    let sym = spec.symbol_len();
    FrameCapture::new(
        rx[..sym].to_vec().into(),
        rx[sym..].to_vec().into(),
        pilot_fd.clone(),
        *spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let mut buf = Vec::new();
        write_iq(&mut buf, &[Complex64::new(1.0, -2.0)]).unwrap();
        assert_eq!(buf, [0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
        assert_eq!(read_iq(&buf[..]).unwrap().as_slice(), &[Complex64::new(1.0, -2.0)]);
    }

    #[test]
    fn ragged_input_rejected() {
        assert!(matches!(read_iq(&[0u8; 12][..]), Err(Error::InputSize { .. })));
    }
}
