//! Reader for the raw-encoded, 3D, 8/16-bit subset of NRRD.

use std::fs;
use std::path::Path;

use super::{decode_voxels, BitDepth, ByteOrder, Dims, Spacing, Volume};
use crate::error::{Error, Result};

fn unsupported(field: &str, value: &str) -> Error {
    Error::UnsupportedNrrd {
        field: field.to_string(),
        value: value.to_string(),
    }
}

#[derive(Default)]
struct Header {
    dimension: Option<usize>,
    depth: Option<BitDepth>,
    sizes: Option<Dims>,
    spacings: Option<[f64; 3]>,
    directions: Option<[f64; 3]>,
    endian: ByteOrder,
    data_file: Option<String>,
    byte_skip: i64,
    line_skip: usize,
    encoding_seen: bool,
}

fn parse_type(value: &str) -> Result<BitDepth> {
    match value {
        "uchar" | "unsigned char" | "uint8" | "uint8_t" => Ok(BitDepth::U8),
        "ushort" | "unsigned short" | "unsigned short int" | "uint16" | "uint16_t" => {
            Ok(BitDepth::U16)
        }
        other => Err(unsupported("type", other)),
    }
}

fn parse_three<T: std::str::FromStr>(field: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(unsupported(field, value));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| Error::MalformedHeader(format!("NRRD {field}: `{p}`")))?,
        );
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// `(a,b,c) (d,e,f) (g,h,i)` -> per-axis vector norms.
fn parse_directions(value: &str) -> Result<[f64; 3]> {
    let mut norms = Vec::new();
    for tok in value.split_whitespace() {
        if tok == "none" {
            continue;
        }
        let inner = tok.trim_start_matches('(').trim_end_matches(')');
        let mut sq = 0.0;
        for c in inner.split(',') {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::MalformedHeader(format!("NRRD space directions: `{tok}`")))?;
            sq += v * v;
        }
        norms.push(sq.sqrt());
    }
    match norms[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(unsupported("space directions", value)),
    }
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.lines();
    match lines.next() {
        Some(magic) if magic.starts_with("NRRD") => {}
        _ => return Err(Error::MalformedHeader("missing NRRD magic".into())),
    }
    let mut h = Header::default();
    for line in lines {
        if line.is_empty() {
            break;
        }
        if line.starts_with('#') || line.contains(":=") {
            continue;
        }
        let Some((field, value)) = line.split_once(": ") else {
            return Err(Error::MalformedHeader(format!("NRRD line `{line}`")));
        };
        let field = field.trim().to_ascii_lowercase();
        let value = value.trim();
        match field.as_str() {
            "dimension" => {
                let d: usize = value
                    .parse()
                    .map_err(|_| Error::MalformedHeader(format!("NRRD dimension `{value}`")))?;
                if d != 3 {
                    return Err(unsupported("dimension", value));
                }
                h.dimension = Some(d);
            }
            "type" => h.depth = Some(parse_type(value)?),
            "encoding" => {
                if value != "raw" {
                    return Err(unsupported("encoding", value));
                }
                h.encoding_seen = true;
            }
            "sizes" => {
                let [x, y, z] = parse_three::<usize>("sizes", value)?;
                h.sizes = Some(Dims::new(x, y, z));
            }
            "spacings" => {
                let vals = parse_three::<f64>("spacings", value)?;
                h.spacings = Some(vals);
            }
            "space directions" => h.directions = Some(parse_directions(value)?),
            "endian" => {
                h.endian = match value {
                    "little" => ByteOrder::Little,
                    "big" => ByteOrder::Big,
                    other => return Err(unsupported("endian", other)),
                }
            }
            "data file" | "datafile" => {
                if value.starts_with("LIST") || value.contains('%') {
                    return Err(unsupported("data file", value));
                }
                h.data_file = Some(value.to_string());
            }
            "byte skip" | "byteskip" => {
                h.byte_skip = value
                    .parse()
                    .map_err(|_| Error::MalformedHeader(format!("NRRD byte skip `{value}`")))?;
                if h.byte_skip < -1 {
                    return Err(unsupported("byte skip", value));
                }
            }
            "line skip" | "lineskip" => {
                h.line_skip = value
                    .parse()
                    .map_err(|_| Error::MalformedHeader(format!("NRRD line skip `{value}`")))?;
            }
            _ => {}
        }
    }
    Ok(h)
}

/// Loads an NRRD volume with an attached or detached (`data file:`) payload.
///
/// Spacing comes from `spacings`, else from the norms of `space directions`,
/// else defaults to 1.0 per axis. Non-finite spacings fall back to 1.0.
pub fn load_nrrd(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let header_end = find_header_end(&bytes);
    let text = String::from_utf8_lossy(&bytes[..header_end.unwrap_or(bytes.len())]);
    let h = parse_header(&text)?;

    if h.dimension.is_none() {
        return Err(Error::MalformedHeader("NRRD missing `dimension`".into()));
    }
    let depth = h
        .depth
        .ok_or_else(|| Error::MalformedHeader("NRRD missing `type`".into()))?;
    if !h.encoding_seen {
        return Err(Error::MalformedHeader("NRRD missing `encoding`".into()));
    }
    let dims = h
        .sizes
        .ok_or_else(|| Error::MalformedHeader("NRRD missing `sizes`".into()))?;
    let [sx, sy, sz] = h
        .spacings
        .or(h.directions)
        .unwrap_or([1.0, 1.0, 1.0])
        .map(|s| if s.is_finite() && s > 0.0 { s } else { 1.0 });
    let spacing = Spacing::new(sx, sy, sz)?;

    let payload: Vec<u8> = match &h.data_file {
        Some(name) => {
            let data_path = path.parent().unwrap_or(Path::new(".")).join(name);
            fs::read(data_path)?
        }
        None => match header_end {
            Some(end) => bytes[end..].to_vec(),
            None => Vec::new(),
        },
    };
    let payload = skip_lines(&payload, h.line_skip);

    let len = dims
        .checked_len()
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims} overflow")))?;
    let expected = len * depth.bytes();
    let data = if h.byte_skip == -1 {
        if payload.len() < expected {
            return Err(Error::SizeMismatch {
                expected: expected as u64,
                actual: payload.len() as u64,
            });
        }
        &payload[payload.len() - expected..]
    } else {
        let skip = (h.byte_skip as usize).min(payload.len());
        &payload[skip..]
    };
    if data.len() != expected {
        return Err(Error::SizeMismatch {
            expected: expected as u64,
            actual: data.len() as u64,
        });
    }
    let voxels = decode_voxels(data, depth, h.endian);
    Volume::new(dims, voxels, spacing)
}

/// Byte offset just past the blank line that terminates an attached header.
fn find_header_end(bytes: &[u8]) -> Option<usize> {
    bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .map(|p| p + 2)
        .or_else(|| {
            bytes
                .windows(4)
                .position(|w| w == b"\r\n\r\n")
                .map(|p| p + 4)
        })
}

fn skip_lines(data: &[u8], lines: usize) -> &[u8] {
    let mut rest = data;
    for _ in 0..lines {
        match rest.iter().position(|&b| b == b'\n') {
            Some(p) => rest = &rest[p + 1..],
            None => return &[],
        }
    }
    rest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Voxels;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn attached_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes =
            b"NRRD0004\n# comment\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nencoding: raw\n\n"
                .to_vec();
        bytes.extend([1u8; 8]);
        let v = load_nrrd(write(dir.path(), "a.nrrd", &bytes)).unwrap();
        assert_eq!(v.dims(), Dims::cube(2));
        assert_eq!(v.voxels(), &Voxels::U8(vec![1; 8]));
        assert_eq!(v.spacing(), Spacing::default());
    }

    #[test]
    fn dimension_two_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bytes =
            b"NRRD0004\ntype: uchar\ndimension: 2\nsizes: 2 2\nencoding: raw\n\n\x01\x01\x01\x01";
        match load_nrrd(write(dir.path(), "d2.nrrd", bytes)) {
            Err(Error::UnsupportedNrrd { field, .. }) => assert_eq!(field, "dimension"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_type_and_encoding_named() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = b"NRRD0004\ntype: float\ndimension: 3\nsizes: 1 1 1\nencoding: raw\n\n\0\0\0\0";
        match load_nrrd(write(dir.path(), "f.nrrd", bytes)) {
            Err(Error::UnsupportedNrrd { field, value }) => {
                assert_eq!(field, "type");
                assert_eq!(value, "float");
            }
            other => panic!("{other:?}"),
        }
        let bytes = b"NRRD0004\ntype: uchar\ndimension: 3\nsizes: 1 1 1\nencoding: gzip\n\n\0";
        match load_nrrd(write(dir.path(), "g.nrrd", bytes)) {
            Err(Error::UnsupportedNrrd { field, .. }) => assert_eq!(field, "encoding"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spacings_mapped() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"NRRD0004\ntype: ushort\ndimension: 3\nsizes: 1 1 2\nendian: big\nencoding: raw\nspacings: 1.0 1.0 0.4\n\n".to_vec();
        bytes.extend([0x01, 0x02, 0x00, 0x03]);
        let v = load_nrrd(write(dir.path(), "s.nrrd", &bytes)).unwrap();
        assert_eq!(v.spacing(), Spacing::new(1.0, 1.0, 0.4).unwrap());
        assert_eq!(v.get(0, 0, 0), 0x0102);
        assert_eq!(v.get(0, 0, 1), 3);
    }

    #[test]
    fn detached_with_space_directions() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "vol.raw", &[7u8; 6]);
        let header = b"NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 2 3\nencoding: raw\nspace: left-posterior-superior\nspace directions: (2,0,0) (0,1,0) (0,0,0.5)\ndata file: vol.raw\n";
        let v = load_nrrd(write(dir.path(), "vol.nhdr", header)).unwrap();
        assert_eq!(v.dims(), Dims::new(1, 2, 3));
        assert_eq!(v.mass(), 42);
        assert_eq!(v.spacing(), Spacing::new(2.0, 1.0, 0.5).unwrap());
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = b"NRRD0004\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nencoding: raw\n\n\x01\x01";
        assert!(matches!(
            load_nrrd(write(dir.path(), "short.nrrd", bytes)),
            Err(Error::SizeMismatch {
                expected: 8,
                actual: 2
            })
        ));
    }
}
