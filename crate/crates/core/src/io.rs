//! File formats: ASCII PLY point clouds, binary PGM/PPM rasters, the
//! two-channel PFM2 probability map, and JSON for everything else.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom3d::Vec3;
use crate::priors::ProbMap;
use crate::raster::{Label, LabelMask, RgbImage};

const PFM2_MAGIC: &[u8] = b"PFM2\n";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Vertices of an ASCII PLY file. Only `x`, `y`, `z` are read; other vertex
/// properties and other elements are skipped.
pub fn read_ply(path: &Path) -> Result<Vec<Vec3>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|_| Error::format(path, "PLY is not ASCII text"))?;
    parse_ply(&text).map_err(|msg| Error::format(path, msg))
}

fn parse_ply(text: &str) -> std::result::Result<Vec<Vec3>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic".into());
    }
    // (element name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or("header not terminated by end_header")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "ascii" {
                    return Err(format!("unsupported PLY format '{fmt}'"));
                }
                ascii = true;
            }
            ["element", name, count] => {
                let n = count.parse().map_err(|_| format!("bad element count '{count}'"))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", ..] => {
                let el = elements.last_mut().ok_or("property before element")?;
                if el.0 == "vertex" {
                    return Err("list properties on vertices are not supported".into());
                }
                el.2.push(String::new());
            }
            ["property", _ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.2.push(name.to_string());
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unexpected header line '{line}'")),
        }
    }
    if !ascii {
        return Err("missing format line".into());
    }
    let mut out = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines.next().ok_or("truncated element data")?;
            }
            continue;
        }
        let col = |axis: &str| {
            props
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| format!("vertex has no '{axis}' property"))
        };
        let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
        out.reserve(*count);
        for i in 0..*count {
            let line = lines.next().ok_or_else(|| format!("expected {count} vertices, found {i}"))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != props.len() {
                return Err(format!("vertex {i}: expected {} values, found {}", props.len(), vals.len()));
            }
            let get = |j: usize| {
                vals[j]
                    .parse::<f64>()
                    .map_err(|_| format!("vertex {i}: bad number '{}'", vals[j]))
            };
            out.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
        }
    }
    Ok(out)
}

/// ASCII PLY with double-precision coordinates written in shortest
/// round-trip form, so reading back is exact.
pub fn write_ply(path: &Path, points: &[Vec3]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        write!(
            w,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            points.len()
        )?;
        for p in points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Parse a binary netpbm header. Returns (width, height, maxval, data offset).
fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> std::result::Result<(usize, usize, usize, usize), String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("expected magic '{}'", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("bad header number")?;
    }
    // exactly one whitespace byte separates the header from the data
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("truncated header".into());
    }
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit rasters are supported (maxval {maxval})"));
    }
    Ok((w, h, maxval, pos + 1))
}

/// Binary PGM mask; values at or above half range are road.
pub fn read_pgm_mask(path: &Path) -> Result<LabelMask> {
    let bytes = read_bytes(path)?;
    let (w, h, maxval, off) = parse_pnm_header(&bytes, b"P5").map_err(|m| Error::format(path, m))?;
    let data = bytes
        .get(off..off + w * h)
        .ok_or_else(|| Error::format(path, "truncated pixel data"))?;
    let labels = data
        .iter()
        .map(|&v| if 2 * v as usize > maxval { Label::Road } else { Label::NotRoad })
        .collect();
    Ok(LabelMask {
        width: w,
        height: h,
        labels,
    })
}

/// Binary PGM, 255 = road, 0 = not road.
pub fn write_pgm_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    bytes.extend(mask.labels.iter().map(|l| if l.is_road() { 255u8 } else { 0 }));
    write_bytes(path, &bytes)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = read_bytes(path)?;
    let (w, h, maxval, off) = parse_pnm_header(&bytes, b"P6").map_err(|m| Error::format(path, m))?;
    if maxval != 255 {
        return Err(Error::format(path, format!("expected maxval 255, found {maxval}")));
    }
    let data = bytes
        .get(off..off + 3 * w * h)
        .ok_or_else(|| Error::format(path, "truncated pixel data"))?;
    Ok(RgbImage {
        width: w,
        height: h,
        pixels: data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend(image.pixels.iter().flatten());
    write_bytes(path, &bytes)
}

pub fn read_pfm2(path: &Path) -> Result<ProbMap> {
    let bytes = read_bytes(path)?;
    if !bytes.starts_with(PFM2_MAGIC) {
        return Err(Error::format(path, "missing PFM2 magic"));
    }
    let rest = &bytes[PFM2_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::format(path, "missing dimension line"))?;
    let dims = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::format(path, "bad dimension line"))?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(Error::format(path, format!("bad dimension line '{dims}'"))),
    };
    let data = &rest[nl + 1..];
    if data.len() != 8 * w * h {
        return Err(Error::format(
            path,
            format!("expected {} bytes of data, found {}", 8 * w * h, data.len()),
        ));
    }
    let vals: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let (s_road, s_nonroad_max) = vals.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
    ProbMap::new(w, h, s_road, s_nonroad_max).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pfm2(path: &Path, probs: &ProbMap) -> Result<()> {
    let mut bytes = PFM2_MAGIC.to_vec();
    bytes.extend(format!("{} {}\n", probs.width, probs.height).bytes());
    for (r, n) in probs.s_road.iter().zip(&probs.s_nonroad_max) {
        bytes.extend(r.to_le_bytes());
        bytes.extend(n.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::{CameraModel, OrientedBox, PoseSE3};

    #[test]
    fn ply_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let pts = vec![
            Vec3::new(0.1, -2.0 / 3.0, 1e-17),
            Vec3::new(f64::MAX, f64::MIN_POSITIVE, -0.0),
        ];
        write_ply(&p, &pts).unwrap();
        assert_eq!(read_ply(&p).unwrap(), pts);
        write_ply(&p, &[]).unwrap();
        assert!(read_ply(&p).unwrap().is_empty());
    }

    #[test]
    fn ply_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float z\nproperty uchar red\nproperty float x\nproperty float y\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n3 255 1 2\n6 0 4 5\n3 0 1 1\n";
        let pts = parse_ply(text).unwrap();
        assert_eq!(pts, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn ply_errors() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n").is_err());
        assert!(parse_ply("plx\n").is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let e = read_pfm2(Path::new("/nonexistent/probs.pfm2")).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
        assert!(e.to_string().contains("/nonexistent/probs.pfm2"));
    }

    #[test]
    fn pgm_round_trip_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let m = LabelMask {
            width: 3,
            height: 2,
            labels: vec![Label::Road, Label::NotRoad, Label::Road, Label::Road, Label::NotRoad, Label::NotRoad],
        };
        write_pgm_mask(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 255, 255, 0, 0]);
        assert_eq!(read_pgm_mask(&p).unwrap(), m);

        fs::write(&p, b"P5 # comment\n2 1 255\n\x80\x7f").unwrap();
        assert_eq!(read_pgm_mask(&p).unwrap().labels, vec![Label::Road, Label::NotRoad]);
        fs::write(&p, b"P5\n2 2\n255\n\x00").unwrap();
        assert!(matches!(read_pgm_mask(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.ppm");
        let img = RgbImage {
            width: 2,
            height: 2,
            pixels: vec![[1, 2, 3], [255, 0, 10], [7, 7, 7], [0, 0, 0]],
        };
        write_ppm(&p, &img).unwrap();
        assert_eq!(read_ppm(&p).unwrap(), img);
        assert!(read_pgm_mask(&p).is_err());
    }

    #[test]
    fn pfm2_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.pfm2");
        let probs = ProbMap::new(2, 1, vec![0.7, 0.1 + 0.2], vec![0.2, 1.0 / 3.0]).unwrap();
        write_pfm2(&p, &probs).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"PFM2\n2 1\n"));
        assert_eq!(bytes.len(), 9 + 16);
        assert_eq!(&bytes[9..13], &0.7f32.to_le_bytes());
        assert_eq!(&bytes[13..17], &0.2f32.to_le_bytes());
        let back = read_pfm2(&p).unwrap();
        assert_eq!(back, probs);

        fs::write(&p, b"PFM2\n2 1\n\0\0").unwrap();
        assert!(matches!(read_pfm2(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        let cam = CameraModel::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
        write_json(&p, &cam).unwrap();
        assert_eq!(read_json::<CameraModel>(&p).unwrap(), cam);

        let pose = PoseSE3::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(0.1, 0.2, 0.3));
        write_json(&p, &pose).unwrap();
        assert_eq!(read_json::<PoseSE3>(&p).unwrap(), pose);

        let boxes = vec![OrientedBox::axis_aligned(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.5, 0.25, 1.0 / 3.0))];
        write_json(&p, &boxes).unwrap();
        assert_eq!(read_json::<Vec<OrientedBox>>(&p).unwrap(), boxes);

        fs::write(&p, "{").unwrap();
        assert!(matches!(read_json::<CameraModel>(&p), Err(Error::Json { .. })));
    }
}
