//! Channel tensor exchange formats.
//!
//! CSV: header `time_block,carrier,tx,rx,re,im`, one row per gain, rows in
//! `[time_block][carrier][tx][rx]` order on export (any order on import, but
//! every index must appear exactly once).
//!
//! Binary (little endian):
//!
//! ```text
//! magic      8 bytes  "EVMSCH01"
//! n_blocks   u64
//! n_carriers u64
//! n_tx       u64
//! n_rx       u64
//! spacing    f64      carrier spacing, Hz
//! period     f64      block period, s
//! gains      (f64 re, f64 im) * n_blocks*n_carriers*n_tx*n_rx
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::ChannelResponse;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EVMSCH01";

pub fn write_csv<W: Write>(h: &ChannelResponse, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_block", "carrier", "tx", "rx", "re", "im"])?;
    for t in 0..h.n_blocks() {
        for c in 0..h.n_carriers() {
            for tx in 0..h.n_tx() {
                for rx in 0..h.n_rx() {
                    let g = h.get(t, c, tx, rx);
                    out.write_record([
                        t.to_string(),
                        c.to_string(),
                        tx.to_string(),
                        rx.to_string(),
                        g.re.to_string(),
                        g.im.to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Dimensions are inferred from the largest index in each column. The CSV
/// carries no spacing or period, so the caller supplies them.
pub fn read_csv<R: Read>(r: R, carrier_spacing_hz: f64, block_period_s: f64) -> Result<ChannelResponse> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let expected = ["time_block", "carrier", "tx", "rx", "re", "im"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "channel CSV header must be {}",
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let idx = |k: usize| -> Result<usize> {
            rec[k]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad index `{}`", line + 2, &rec[k])))
        };
        let val = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad value `{}`", line + 2, &rec[k])))
        };
        rows.push(([idx(0)?, idx(1)?, idx(2)?, idx(3)?], Complex64::new(val(4)?, val(5)?)));
    }
    if rows.is_empty() {
        return Err(Error::Parse("channel CSV has no rows".into()));
    }
    let dim = |k: usize| rows.iter().map(|(i, _)| i[k]).max().unwrap_or(0) + 1;
    let (nb, nc, nt, nr) = (dim(0), dim(1), dim(2), dim(3));
    let total = nb * nc * nt * nr;
    if rows.len() != total {
        return Err(Error::Parse(format!(
            "expected {total} rows for a {nb}x{nc}x{nt}x{nr} channel, found {}",
            rows.len()
        )));
    }
    let mut gains = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    for ([t, c, tx, rx], g) in rows {
        let i = ((t * nc + c) * nt + tx) * nr + rx;
        if seen[i] {
            return Err(Error::Parse(format!("duplicate entry ({t},{c},{tx},{rx})")));
        }
        seen[i] = true;
        gains[i] = g;
    }
    ChannelResponse::new(nb, nc, nt, nr, carrier_spacing_hz, block_period_s, gains)
}

pub fn write_binary<W: Write>(h: &ChannelResponse, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for d in [h.n_blocks(), h.n_carriers(), h.n_tx(), h.n_rx()] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&h.carrier_spacing_hz().to_le_bytes())?;
    w.write_all(&h.block_period_s().to_le_bytes())?;
    for g in h.gains() {
        w.write_all(&g.re.to_le_bytes())?;
        w.write_all(&g.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ChannelResponse> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an EVMSCH01 channel file".into()));
    }
    let mut buf = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    let dims = [next_u64(&mut r)?, next_u64(&mut r)?, next_u64(&mut r)?, next_u64(&mut r)?];
    let spacing = f64::from_bits(next_u64(&mut r)?);
    let period = f64::from_bits(next_u64(&mut r)?);
    let total = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .filter(|&t| t <= (1 << 32))
        .ok_or_else(|| Error::Parse("channel dimensions overflow".into()))? as usize;
    let mut gains = Vec::with_capacity(total);
    for _ in 0..total {
        let re = f64::from_bits(next_u64(&mut r)?);
        let im = f64::from_bits(next_u64(&mut r)?);
        gains.push(Complex64::new(re, im));
    }
    let [nb, nc, nt, nr] = dims.map(|d| d as usize);
    ChannelResponse::new(nb, nc, nt, nr, spacing, period, gains)
}
