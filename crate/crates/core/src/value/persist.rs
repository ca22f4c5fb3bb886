//! Parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic          4 bytes  "GHRL"
//! version        u32      = 1
//! goal checksum  u64      ordering fingerprint of the gesture grid
//! count          u32      number of approximators
//! per approximator:
//!   backend      u8       0 = table, 1 = network
//!   heads        u32
//!   n_sizes      u32
//!   sizes        u32 * n_sizes   table: block sizes then outputs;
//!                                network: input, hidden..., output
//!   network:
//!     n_params   u64
//!     params     f64 * n_params  per layer weights then bias
//!   table:
//!     n_rows     u64      rows written, ascending
//!     rows       (u64 index, f64 * outputs) * n_rows
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::approx::{Backend, Dense, Mlp, QApproximator, QTable};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GHRL";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| get::<8, _>(r).map(f64::from_le_bytes)).collect()
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(get::<4, _>(r)?))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(get::<8, _>(r)?))
}

pub fn save_approximators<W: Write>(mut w: W, checksum: u64, approximators: &[&QApproximator]) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_u64(&mut w, checksum)?;
    put_u32(&mut w, approximators.len() as u32)?;
    for q in approximators {
        let sizes = match q.backend() {
            Backend::Table(t) => {
                let mut sizes = t.block_sizes().to_vec();
                sizes.push(q.output_size());
                sizes
            }
            Backend::Network(m) => m.sizes(),
        };
        w.write_all(&[u8::from(!q.is_table())])?;
        put_u32(&mut w, q.heads() as u32)?;
        put_u32(&mut w, sizes.len() as u32)?;
        for s in &sizes {
            put_u32(&mut w, *s as u32)?;
        }
        match q.backend() {
            Backend::Table(t) => {
                put_u64(&mut w, t.stored_rows().count() as u64)?;
                for (row, values) in t.stored_rows() {
                    put_u64(&mut w, row as u64)?;
                    put_f64s(&mut w, values)?;
                }
            }
            Backend::Network(m) => {
                let params = m.params_flat();
                put_u64(&mut w, params.len() as u64)?;
                put_f64s(&mut w, &params)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a parameter file, rejecting it unless its goal checksum equals `expected_checksum`.
pub fn load_approximators<R: Read>(mut r: R, expected_checksum: u64) -> Result<Vec<QApproximator>> {
    if &get::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let checksum = get_u64(&mut r)?;
    if checksum != expected_checksum {
        return Err(Error::ChecksumMismatch { file: checksum, expected: expected_checksum });
    }
    let count = get_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = get::<1, _>(&mut r)?[0];
        let heads = get_u32(&mut r)? as usize;
        let n_sizes = get_u32(&mut r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::Format(format!("implausible size count {n_sizes}")));
        }
        let sizes = (0..n_sizes).map(|_| get_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let backend = match tag {
            0 => {
                let (&outputs, blocks) = sizes.split_last().expect("n_sizes >= 2");
                let n_rows = blocks.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
                let n_rows = n_rows.ok_or_else(|| Error::Format("table too large".into()))?;
                let stored = get_u64(&mut r)? as usize;
                if stored > n_rows {
                    return Err(Error::Format(format!("{stored} rows stored in a table of {n_rows}")));
                }
                let mut rows = BTreeMap::new();
                let mut last = None;
                for _ in 0..stored {
                    let row = get_u64(&mut r)? as usize;
                    if row >= n_rows || last.is_some_and(|l| row <= l) {
                        return Err(Error::Format(format!("row index {row} out of order or range")));
                    }
                    last = Some(row);
                    rows.insert(row, get_f64s(&mut r, outputs)?.into_boxed_slice());
                }
                Backend::Table(QTable::from_parts(blocks.to_vec(), outputs, rows))
            }
            1 => {
                let n_params = get_u64(&mut r)? as usize;
                let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
                if n_params != expected {
                    return Err(Error::Format(format!("expected {expected} parameters, found {n_params}")));
                }
                let params = get_f64s(&mut r, n_params)?;
                let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
                let mut mlp = Mlp::from_layers(layers);
                mlp.set_params_flat(&params);
                Backend::Network(mlp)
            }
            t => return Err(Error::Format(format!("unknown backend tag {t}"))),
        };
        let q = QApproximator::from_backend(backend, 1);
        if heads == 0 || !q.output_size().is_multiple_of(heads) {
            return Err(Error::Format(format!("{heads} heads do not divide output")));
        }
        out.push(q.with_heads(heads));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::features::FeatureLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_network_and_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = QApproximator::network(Mlp::new(&[5, 7, 4], &mut rng)).with_heads(2);
        let layout = FeatureLayout::new().one_hot("a", 2).one_hot("b", 3);
        let mut table = QApproximator::table(&layout, 2).unwrap();
        if let Backend::Table(t) = table.backend_mut() {
            t.row_mut(4).copy_from_slice(&[0.5, -1.25]);
        }
        let mut buf = Vec::new();
        save_approximators(&mut buf, 42, &[&net, &table]).unwrap();
        let back = load_approximators(&buf[..], 42).unwrap();
        assert_eq!(back[0], net);
        assert_eq!(back[1].backend(), table.backend());
        assert_eq!(back[0].heads(), 2);
    }

    #[test]
    fn checksum_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QApproximator::network(Mlp::new(&[2, 2], &mut rng));
        let mut buf = Vec::new();
        save_approximators(&mut buf, 1, &[&net]).unwrap();
        assert!(matches!(load_approximators(&buf[..], 2), Err(Error::ChecksumMismatch { file: 1, expected: 2 })));
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = QApproximator::network(Mlp::new(&[3, 2], &mut rng));
        let mut buf = Vec::new();
        save_approximators(&mut buf, 9, &[&net]).unwrap();
        assert!(matches!(load_approximators(&buf[..buf.len() - 3], 9), Err(Error::Format(_))));
        let junk: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        assert!(load_approximators(&junk[..], 9).is_err());
    }

    #[test]
    fn floats_are_little_endian() {
        let mut m = Mlp::zeros(&[1, 1]);
        m.set_params_flat(&[1.5, -2.0]);
        let mut buf = Vec::new();
        save_approximators(&mut buf, 0, &[&QApproximator::network(m)]).unwrap();
        let tail = &buf[buf.len() - 16..];
        assert_eq!(&tail[..8], &1.5f64.to_le_bytes());
        assert_eq!(&tail[8..], &(-2.0f64).to_le_bytes());
    }
}
