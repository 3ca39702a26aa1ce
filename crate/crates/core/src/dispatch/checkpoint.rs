//! Binary parameter checkpoints with a small JSON header.
//!
//! Layout: the magic line `JFQN\n`, one JSON header line, then every
//! network's parameters as little-endian `f64`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::network::QNetwork;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "JFQN";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic line)")]
    BadMagic,
    #[error("unreadable checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("checkpoint architecture {found:?} x{found_nets} does not match configured {expected:?} x{expected_nets}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
        expected_nets: usize,
        found_nets: usize,
    },
    #[error("checkpoint body is truncated")]
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    /// Number of online networks stored (1 when parameters are shared).
    pub networks: usize,
    pub step: u64,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    nets: &[&QNetwork],
    step: u64,
) -> Result<(), CheckpointError> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        layer_sizes: nets.first().map(|n| n.layer_sizes()).unwrap_or_default(),
        networks: nets.len(),
        step,
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for net in nets {
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_header<R: BufRead>(r: &mut R) -> Result<CheckpointHeader, CheckpointError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    Ok(header)
}

/// Load parameters into `nets`, which fix the expected architecture. The
/// shape is checked before any parameter is touched.
pub fn read_checkpoint<R: BufRead>(
    mut r: R,
    nets: &mut [QNetwork],
) -> Result<CheckpointHeader, CheckpointError> {
    let header = read_header(&mut r)?;
    let expected = nets.first().map(|n| n.layer_sizes()).unwrap_or_default();
    if header.layer_sizes != expected || header.networks != nets.len() {
        return Err(CheckpointError::ShapeMismatch {
            expected,
            found: header.layer_sizes,
            expected_nets: nets.len(),
            found_nets: header.networks,
        });
    }
    let mut loaded = Vec::with_capacity(nets.len());
    for net in nets.iter() {
        let mut bytes = vec![0u8; net.param_count() * 8];
        r.read_exact(&mut bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
            _ => CheckpointError::Io(e),
        })?;
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        loaded.push(params);
    }
    for (net, params) in nets.iter_mut().zip(loaded) {
        net.set_params(&params);
    }
    Ok(header)
}

/// Hex SHA-256 of the parameter bits, for checking that a run left a policy
/// untouched.
pub fn params_digest(nets: &[&QNetwork]) -> String {
    let mut h = Sha256::new();
    for net in nets {
        for p in net.params() {
            h.update(p.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QNetwork::new(&[4, 3, 2], &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[&net], 42).unwrap();
        let mut loaded = vec![QNetwork::new(&[4, 3, 2], &mut rng)];
        let header = read_checkpoint(buf.as_slice(), &mut loaded).unwrap();
        assert_eq!(header.step, 42);
        assert_eq!(loaded[0], net);
        assert_eq!(params_digest(&[&loaded[0]]), params_digest(&[&net]));
    }

    #[test]
    fn shape_mismatch_is_rejected_without_loading() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QNetwork::new(&[4, 3, 2], &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[&net], 0).unwrap();
        let mut other = vec![QNetwork::new(&[4, 5, 2], &mut rng)];
        let before = other[0].clone();
        let err = read_checkpoint(buf.as_slice(), &mut other).unwrap_err();
        assert!(matches!(err, CheckpointError::ShapeMismatch { .. }));
        assert_eq!(other[0], before);
    }

    #[test]
    fn truncated_and_garbage_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QNetwork::new(&[2, 2], &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[&net], 0).unwrap();
        buf.truncate(buf.len() - 3);
        let mut nets = vec![net.clone()];
        assert!(matches!(
            read_checkpoint(buf.as_slice(), &mut nets),
            Err(CheckpointError::Truncated)
        ));
        assert!(matches!(
            read_checkpoint(&b"hello\n"[..], &mut nets),
            Err(CheckpointError::BadMagic)
        ));
    }
}
