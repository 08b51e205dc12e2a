//! Serialization of fields and traces: CSV, a flat little-endian binary
//! layout, and 8-bit PGM images.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

use super::field::ScalarField;
use super::grid::{Extent, GridSpec};
use super::trace::{BoundaryTrace, GammaMask};

const FIELD_MAGIC: &[u8; 4] = b"MWTF";
const TRACE_MAGIC: &[u8; 4] = b"MWTT";

/// `# nx,ny,x_min,x_max,y_min,y_max` header followed by `ny` rows of `nx`
/// values, bottom row first.
pub fn write_field_csv<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    let g = field.grid();
    let e = g.extent;
    writeln!(w, "# nx,ny,x_min,x_max,y_min,y_max")?;
    writeln!(w, "# {},{},{},{},{},{}", g.nx, g.ny, e.x_min, e.x_max, e.y_min, e.y_max)?;
    for j in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|i| format!("{:e}", field.get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a field written by [`write_field_csv`]. Time sampling of the returned
/// grid is a placeholder (`nt = 1`).
pub fn read_field_csv<R: Read>(r: R) -> Result<ScalarField> {
    let mut lines = BufReader::new(r).lines();
    let _ = lines.next().ok_or_else(|| invalid("empty field CSV"))??;
    let header = lines.next().ok_or_else(|| invalid("missing field CSV header"))??;
    let parts: Vec<&str> = header.trim_start_matches('#').trim().split(',').collect();
    if parts.len() != 6 {
        return Err(invalid("malformed field CSV header"));
    }
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| invalid(e.to_string()));
    let nx: usize = parts[0].trim().parse().map_err(|_| invalid("bad nx"))?;
    let extent =
        Extent { x_min: parse(parts[2])?, x_max: parse(parts[3])?, y_min: parse(parts[4])?, y_max: parse(parts[5])? };
    let grid = GridSpec::with_time_step(nx, extent, 1.0, 1.0)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for v in line.split(',') {
            values.push(parse(v)?);
        }
    }
    ScalarField::from_values(grid, values)
}

pub fn write_field_binary<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    let g = field.grid();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.ny as u64).to_le_bytes())?;
    for v in [g.extent.x_min, g.extent.x_max, g.extent.y_min, g.extent.y_max] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(invalid("not a field file"));
    }
    let nx = read_u64(&mut r)? as usize;
    let _ny = read_u64(&mut r)? as usize;
    let extent = Extent {
        x_min: read_f64(&mut r)?,
        x_max: read_f64(&mut r)?,
        y_min: read_f64(&mut r)?,
        y_max: read_f64(&mut r)?,
    };
    let grid = GridSpec::with_time_step(nx, extent, 1.0, 1.0)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut r)?);
    }
    ScalarField::from_values(grid, values)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Binary PGM (P5), linearly scaled so `min -> 0` and `max -> 255`, top row
/// of the image is the largest `y`. Returns the `(min, max)` used.
pub fn write_pgm<W: Write>(field: &ScalarField, mut w: W) -> Result<(f64, f64)> {
    let g = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{} {}\n255\n", g.nx, g.ny)?;
    let mut bytes = Vec::with_capacity(g.len());
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let v = ((field.get(i, j) - lo) / span * 255.0).round().clamp(0.0, 255.0);
            bytes.push(v as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok((lo, hi))
}

pub fn save_pgm(field: &ScalarField, path: &Path) -> Result<(f64, f64)> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    let scale = write_pgm(field, &mut w)?;
    w.flush()?;
    Ok(scale)
}

/// Rows are time levels, columns perimeter nodes (bottom, right, top, left;
/// counterclockwise from the bottom-left corner).
pub fn write_trace_csv<W: Write>(trace: &BoundaryTrace, mut w: W) -> Result<()> {
    let g = trace.grid();
    writeln!(w, "# perimeter order: bottom->right->top->left (counterclockwise from bottom-left corner)")?;
    writeln!(w, "# nx={},nt={},dt={:e},dx={:e}", g.nx, g.nt, g.dt, g.dx)?;
    let header: Vec<String> = (0..g.perimeter_len())
        .map(|k| {
            let (i, j) = g.perimeter_node(k);
            format!("p{k}({i};{j})")
        })
        .collect();
    writeln!(w, "t,{}", header.join(","))?;
    for n in 0..trace.levels() {
        let row: Vec<String> = trace.row(n).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{:e},{}", g.time(n), row.join(","))?;
    }
    Ok(())
}

/// Compact binary trace: magic, nx, nt, dt, extent, Gamma flags, samples.
pub fn write_trace_binary<W: Write>(trace: &BoundaryTrace, mut w: W) -> Result<()> {
    let g = trace.grid();
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.nt as u64).to_le_bytes())?;
    w.write_all(&g.dt.to_le_bytes())?;
    for v in [g.extent.x_min, g.extent.x_max, g.extent.y_min, g.extent.y_max] {
        w.write_all(&v.to_le_bytes())?;
    }
    let flags: Vec<u8> = trace.gamma().flags().iter().map(|&f| f as u8).collect();
    w.write_all(&flags)?;
    for v in trace.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_trace_binary<R: Read>(mut r: R) -> Result<BoundaryTrace> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(invalid("not a trace file"));
    }
    let nx = read_u64(&mut r)? as usize;
    let nt = read_u64(&mut r)? as usize;
    let dt = read_f64(&mut r)?;
    let extent = Extent {
        x_min: read_f64(&mut r)?,
        x_max: read_f64(&mut r)?,
        y_min: read_f64(&mut r)?,
        y_max: read_f64(&mut r)?,
    };
    let mut grid = GridSpec::with_time_step(nx, extent, dt * nt as f64, dt)?;
    if grid.nt != nt {
        grid.nt = nt;
    }
    let mut flags = vec![0u8; grid.perimeter_len()];
    r.read_exact(&mut flags)?;
    let gamma = GammaMask::from_flags(flags.iter().map(|&b| b != 0).collect())?;
    let n = (nt + 1) * grid.perimeter_len();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(read_f64(&mut r)?);
    }
    BoundaryTrace::from_values(grid, gamma, values).map_err(|e| match e {
        Error::GridMismatch(m) => invalid(m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_csv_and_binary_roundtrip() {
        let g = GridSpec::new(9, Extent::default(), 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x * 0.3 - y * y + 0.125);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let back = read_field_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());

        let mut buf = Vec::new();
        write_field_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 32 + 8 * g.len());
        assert_eq!(read_field_binary(buf.as_slice()).unwrap().values(), f.values());
    }

    #[test]
    fn pgm_scaling() {
        let g = GridSpec::new(3, Extent::default(), 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        let mut buf = Vec::new();
        let (lo, hi) = write_pgm(&f, &mut buf).unwrap();
        assert_eq!((lo, hi), (-1.0, 1.0));
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..header.len() + 3], &[0, 128, 255]);
    }

    #[test]
    fn trace_binary_roundtrip() {
        let g = GridSpec::new(7, Extent::default(), 0.5, 1.0).unwrap();
        let gamma = GammaMask::bottom_left_plus(&g, 0.2).unwrap();
        let t = BoundaryTrace::from_fn(g, gamma, |t, k| t + k as f64);
        let mut buf = Vec::new();
        write_trace_binary(&t, &mut buf).unwrap();
        let back = read_trace_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.gamma().flags(), t.gamma().flags());

        let mut csv = Vec::new();
        write_trace_csv(&t, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3 + g.nt + 1);
    }
}
