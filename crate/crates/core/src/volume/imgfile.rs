//! Image file IO: binary PGM/PPM export and the two-plane projection image
//! container (JSON header line + raw 8-bit planes, water then fat).

use super::{ProjectionImage, VolumeError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> VolumeError {
    VolumeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a binary (P5) PGM. Each entry of `comments` becomes a `#` header
/// line; comments must not contain newlines.
pub fn write_pgm(path: &Path, img: &Array2<u8>, comments: &[&str]) -> Result<(), VolumeError> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 {
        return Err(VolumeError::EmptyImage);
    }
    let mut bytes = Vec::with_capacity(h * w + 64);
    bytes.extend_from_slice(b"P5\n");
    for c in comments {
        debug_assert!(!c.contains('\n'));
        bytes.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    bytes.extend_from_slice(format!("{w} {h}\n255\n").as_bytes());
    for row in img.rows() {
        bytes.extend(row.iter());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| io_err(path, e))
}

/// Writes a binary (P6) RGB PPM from three equally sized planes.
pub fn write_ppm(
    path: &Path,
    r: &Array2<u8>,
    g: &Array2<u8>,
    b: &Array2<u8>,
    comments: &[&str],
) -> Result<(), VolumeError> {
    let (h, w) = r.dim();
    if h == 0 || w == 0 {
        return Err(VolumeError::EmptyImage);
    }
    assert_eq!(r.dim(), g.dim());
    assert_eq!(r.dim(), b.dim());
    let mut bytes = Vec::with_capacity(3 * h * w + 64);
    bytes.extend_from_slice(b"P6\n");
    for c in comments {
        debug_assert!(!c.contains('\n'));
        bytes.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    bytes.extend_from_slice(format!("{w} {h}\n255\n").as_bytes());
    for row in 0..h {
        for col in 0..w {
            bytes.push(r[[row, col]]);
            bytes.push(g[[row, col]]);
            bytes.push(b[[row, col]]);
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| io_err(path, e))
}

/// Reads a binary (P5) PGM written by [`write_pgm`] (maxval 255).
pub fn read_pgm(path: &Path) -> Result<Array2<u8>, VolumeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        // skip whitespace and comment lines
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(VolumeError::Header("truncated PGM header".into()));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if tokens[0] != "P5" || tokens[3] != "255" {
        return Err(VolumeError::Header(format!(
            "unsupported PGM header {tokens:?}"
        )));
    }
    let w: usize = tokens[1]
        .parse()
        .map_err(|_| VolumeError::Header("bad width".into()))?;
    let h: usize = tokens[2]
        .parse()
        .map_err(|_| VolumeError::Header("bad height".into()))?;
    pos += 1; // single whitespace after maxval
    let payload = &bytes[pos..];
    if payload.len() != w * h {
        return Err(VolumeError::PayloadSize {
            expected: w * h,
            actual: payload.len(),
        });
    }
    Ok(Array2::from_shape_vec((h, w), payload.to_vec()).expect("shape matches len"))
}

#[derive(Serialize, Deserialize)]
struct ProjHeader {
    width: usize,
    height: usize,
    channels: [String; 2],
    subject_id: String,
}

/// Writes the two-plane projection image container.
pub fn write_projection_image(path: &Path, img: &ProjectionImage) -> Result<(), VolumeError> {
    let (h, w) = img.water.dim();
    assert_eq!(img.water.dim(), img.fat.dim());
    let header = ProjHeader {
        width: w,
        height: h,
        channels: ["water".into(), "fat".into()],
        subject_id: img.subject_id.clone(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serialization is infallible");
    bytes.push(b'\n');
    bytes.reserve(2 * h * w);
    for plane in [&img.water, &img.fat] {
        for row in plane.rows() {
            bytes.extend(row.iter());
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| io_err(path, e))
}

/// Reads a projection image container written by [`write_projection_image`].
pub fn read_projection_image(path: &Path) -> Result<ProjectionImage, VolumeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VolumeError::Header("missing newline after header".into()))?;
    let header: ProjHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| VolumeError::Header(e.to_string()))?;
    if header.channels != ["water", "fat"] {
        return Err(VolumeError::Header(format!(
            "unexpected channel list {:?}",
            header.channels
        )));
    }
    let (w, h) = (header.width, header.height);
    if w == 0 || h == 0 {
        return Err(VolumeError::EmptyImage);
    }
    let payload = &bytes[newline + 1..];
    if payload.len() != 2 * w * h {
        return Err(VolumeError::PayloadSize {
            expected: 2 * w * h,
            actual: payload.len(),
        });
    }
    let water = Array2::from_shape_vec((h, w), payload[..w * h].to_vec()).unwrap();
    let fat = Array2::from_shape_vec((h, w), payload[w * h..].to_vec()).unwrap();
    Ok(ProjectionImage {
        subject_id: header.subject_id,
        water,
        fat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> Array2<u8> {
        Array2::from_shape_fn((h, w), |(r, c)| ((r * 7 + c * 13) % 256) as u8)
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        let img = gradient(5, 9);
        write_pgm(&p, &img, &["subject=s1", "kind=test"]).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!(back, img);
        let text = std::fs::read(&p).unwrap();
        assert!(text.starts_with(b"P5\n# subject=s1\n# kind=test\n9 5\n255\n"));
    }

    #[test]
    fn ppm_header_and_interleaving() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let r = Array2::from_elem((1, 2), 10u8);
        let g = Array2::from_elem((1, 2), 20u8);
        let b = Array2::from_elem((1, 2), 30u8);
        write_ppm(&p, &r, &g, &b, &["m=t"]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let expect_header = b"P6\n# m=t\n2 1\n255\n";
        assert!(bytes.starts_with(expect_header));
        assert_eq!(&bytes[expect_header.len()..], &[10, 20, 30, 10, 20, 30]);
    }

    #[test]
    fn projection_image_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.rpi");
        let p2 = dir.path().join("b.rpi");
        let img = ProjectionImage {
            subject_id: "ph00042".into(),
            water: gradient(256, 256),
            fat: gradient(256, 256).mapv(|v| v.wrapping_add(3)),
        };
        write_projection_image(&p1, &img).unwrap();
        let back = read_projection_image(&p1).unwrap();
        assert_eq!(back, img);
        write_projection_image(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn projection_image_size_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.rpi");
        let img = ProjectionImage {
            subject_id: "s".into(),
            water: gradient(4, 4),
            fat: gradient(4, 4),
        };
        write_projection_image(&p, &img).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_projection_image(&p),
            Err(VolumeError::PayloadSize { .. })
        ));
    }
}
