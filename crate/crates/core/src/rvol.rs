//! The RVOL volume container.
//!
//! Layout: the ASCII magic `RVOL`, the rest of a single UTF-8 header line
//! (`dims=X Y Z spacing=SX SY SZ dtype=f32\n`), then the voxel payload as
//! little-endian f32 in x-fastest order. Spacing is written with shortest
//! round-trip formatting so it survives a save/load cycle bit-exactly.

use crate::error::{CoreError, Result};
use crate::volume::Volume;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RVOL";

pub fn save_volume(path: impl AsRef<Path>, v: &Volume) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dims = v.dims();
    let sp = v.spacing();
    let header = format!(
        "RVOL dims={} {} {} spacing={} {} {} dtype=f32\n",
        dims[0], dims[1], dims[2], sp[0], sp[1], sp[2]
    );
    w.write_all(header.as_bytes())
        .map_err(|e| CoreError::io(path, e))?;
    let mut buf = Vec::with_capacity(v.len() * 4);
    for &value in v.voxels() {
        buf.extend_from_slice(&(value as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| CoreError::io(path, e))?;
    w.flush().map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| CoreError::io(path, e))?;
    if &magic != MAGIC {
        return Err(CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("bad magic {:?}, expected \"RVOL\"", magic),
        });
    }

    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => {
                return Err(CoreError::MalformedHeader {
                    path: path.to_path_buf(),
                    reason: format!("unterminated header line: {e}"),
                })
            }
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 4096 {
            return Err(CoreError::MalformedHeader {
                path: path.to_path_buf(),
                reason: "header line exceeds 4096 bytes".into(),
            });
        }
    }
    let header = String::from_utf8(header).map_err(|_| CoreError::MalformedHeader {
        path: path.to_path_buf(),
        reason: "header is not valid UTF-8".into(),
    })?;

    let (dims, spacing) = parse_header_fields(&header).map_err(|reason| {
        CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        }
    })?;

    let n = dims[0] * dims[1] * dims[2];
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| CoreError::io(path, e))?;
    if payload.len() != n * 4 {
        return Err(CoreError::TruncatedPayload {
            path: path.to_path_buf(),
            expected: n,
            got: payload.len() / 4,
        });
    }
    let mut voxels = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(4) {
        let bits = [chunk[0], chunk[1], chunk[2], chunk[3]];
        voxels.push(f32::from_le_bytes(bits) as f64);
    }
    Volume::new(dims, spacing, voxels)
}

fn parse_header_fields(header: &str) -> std::result::Result<([usize; 3], [f64; 3]), String> {
    let mut dims: Option<[usize; 3]> = None;
    let mut spacing: Option<[f64; 3]> = None;
    let mut dtype: Option<String> = None;

    let tokens: Vec<&str> = header.split_whitespace().collect();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if let Some(rest) = tok.strip_prefix("dims=") {
            let (triple, used) = take_triple::<usize>(rest, &tokens[i + 1..])?;
            dims = Some(triple);
            i += 1 + used;
        } else if let Some(rest) = tok.strip_prefix("spacing=") {
            let (triple, used) = take_triple::<f64>(rest, &tokens[i + 1..])?;
            spacing = Some(triple);
            i += 1 + used;
        } else if let Some(rest) = tok.strip_prefix("dtype=") {
            dtype = Some(rest.to_string());
            i += 1;
        } else {
            return Err(format!("unrecognized header token {tok:?}"));
        }
    }

    let dims = dims.ok_or_else(|| "missing dims field".to_string())?;
    let spacing = spacing.ok_or_else(|| "missing spacing field".to_string())?;
    let dtype = dtype.ok_or_else(|| "missing dtype field".to_string())?;
    if dtype != "f32" {
        return Err(format!("unsupported dtype {dtype:?}"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(format!("dims must be positive, got {dims:?}"));
    }
    if spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(format!("spacing must be positive, got {spacing:?}"));
    }
    Ok((dims, spacing))
}

fn take_triple<T: std::str::FromStr>(
    first: &str,
    rest: &[&str],
) -> std::result::Result<([T; 3], usize), String> {
    if rest.len() < 2 {
        return Err("triple field needs three values".into());
    }
    let a = first
        .parse::<T>()
        .map_err(|_| format!("cannot parse {first:?}"))?;
    let b = rest[0]
        .parse::<T>()
        .map_err(|_| format!("cannot parse {:?}", rest[0]))?;
    let c = rest[1]
        .parse::<T>()
        .map_err(|_| format!("cannot parse {:?}", rest[1]))?;
    Ok(([a, b, c], 2))
}
