//! Columnar serialization of grid rough paths.
//!
//! Both layouts carry the header `(d, N, T, alpha)`, then the `N+1` level-1
//! rows, then the `N` level-2 cells row-major. Floats are written so that a
//! read gives back the identical bits.
//!
//! Binary layout (little endian):
//! `b"GRP1" | d: u64 | N: u64 | T: f64 | alpha: f64 | level1: f64 * (N+1) d | cells: f64 * N d^2`.

use std::io::{BufRead, BufReader, Read, Write};

use super::grid::{Grid, HoelderExponent};
use super::rough_path::GridRoughPath;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GRP1";

pub fn to_bytes(rp: &GridRoughPath) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 8 * (rp.level1().len() + rp.cells().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rp.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(rp.n_steps() as u64).to_le_bytes());
    out.extend_from_slice(&rp.grid().horizon().to_le_bytes());
    out.extend_from_slice(&rp.alpha().value().to_le_bytes());
    for v in rp.level1().iter().chain(rp.cells()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_binary<W: Write>(rp: &GridRoughPath, mut w: W) -> Result<()> {
    w.write_all(&to_bytes(rp))?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridRoughPath> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a binary rough path (bad magic)".into()));
    }
    let mut b8 = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let d = next_u64(&mut r)? as usize;
    let n = next_u64(&mut r)? as usize;
    let horizon = f64::from_bits(next_u64(&mut r)?);
    let alpha = f64::from_bits(next_u64(&mut r)?);
    let n1 = (n + 1)
        .checked_mul(d)
        .ok_or_else(|| Error::Format("header overflow".into()))?;
    let n2 = n
        .checked_mul(d * d)
        .ok_or_else(|| Error::Format("header overflow".into()))?;
    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    };
    let level1 = read_block(n1)?;
    let cells = read_block(n2)?;
    GridRoughPath::new(d, Grid::new(horizon, n)?, level1, cells, HoelderExponent::new(alpha)?)
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

/// CSV: a `d,N,T,alpha` header row and its values, then one row per level-1
/// point, then one row per level-2 cell.
pub fn write_csv<W: Write>(rp: &GridRoughPath, mut w: W) -> Result<()> {
    writeln!(w, "d,N,T,alpha")?;
    writeln!(
        w,
        "{},{},{:?},{:?}",
        rp.dim(),
        rp.n_steps(),
        rp.grid().horizon(),
        rp.alpha().value()
    )?;
    let d = rp.dim();
    for row in rp.level1().chunks(d) {
        writeln!(w, "{}", join(row))?;
    }
    for row in rp.cells().chunks(d * d) {
        writeln!(w, "{}", join(row))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<GridRoughPath> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of CSV".into()))?
            .map_err(Error::from)
    };
    if next()?.trim() != "d,N,T,alpha" {
        return Err(Error::Format("missing CSV header".into()));
    }
    let header = next()?;
    let fields: Vec<&str> = header.trim().split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Format("header must have 4 fields".into()));
    }
    let parse_err = |e: std::num::ParseIntError| Error::Format(e.to_string());
    let parse_ferr = |e: std::num::ParseFloatError| Error::Format(e.to_string());
    let d: usize = fields[0].parse().map_err(parse_err)?;
    let n: usize = fields[1].parse().map_err(parse_err)?;
    let horizon: f64 = fields[2].parse().map_err(parse_ferr)?;
    let alpha: f64 = fields[3].parse().map_err(parse_ferr)?;
    let mut read_rows = |rows: usize, width: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let line = next()?;
            let before = out.len();
            for tok in line.trim().split(',') {
                out.push(tok.parse::<f64>().map_err(parse_ferr)?);
            }
            if out.len() - before != width {
                return Err(Error::Format(format!("expected {width} columns")));
            }
        }
        Ok(out)
    };
    let level1 = read_rows(n + 1, d)?;
    let cells = read_rows(n, d * d)?;
    GridRoughPath::new(d, Grid::new(horizon, n)?, level1, cells, HoelderExponent::new(alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_rough_path() -> impl Strategy<Value = GridRoughPath> {
        (1usize..3, 1usize..6).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(-1e3f64..1e3, n * d),
                prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), n * d * d),
                0.34f64..0.5,
                0.1f64..10.0,
            )
                .prop_map(move |(l1, cells, alpha, horizon)| {
                    let mut level1 = vec![0.0; d];
                    level1.extend(l1);
                    GridRoughPath::new(
                        d,
                        Grid::new(horizon, n).unwrap(),
                        level1,
                        cells,
                        HoelderExponent::new(alpha).unwrap(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip_bit_exactly(rp in arb_rough_path()) {
            let mut buf = Vec::new();
            write_binary(&rp, &mut buf).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(to_bytes(&back), to_bytes(&rp));

            let mut csv = Vec::new();
            write_csv(&rp, &mut csv).unwrap();
            let back = read_csv(csv.as_slice()).unwrap();
            prop_assert_eq!(to_bytes(&back), to_bytes(&rp));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_binary(&b"NOPE"[..]).is_err());
        assert!(read_csv(&b"x,y\n"[..]).is_err());
    }
}
