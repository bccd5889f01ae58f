//! On-disk volume format: one UTF-8 JSON header line, a newline, then the
//! voxel payload as little-endian f32 in x-fastest order.

use super::{Channel, Volume, VolumeError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    channel: Channel,
}

fn io_err(path: &Path, source: std::io::Error) -> VolumeError {
    VolumeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `v` to `path`. Output bytes are a pure function of the volume.
pub fn write_volume(path: &Path, v: &Volume) -> Result<(), VolumeError> {
    let (nx, ny, nz) = v.dims();
    let header = Header {
        dims: [nx, ny, nz],
        spacing: v.spacing(),
        channel: v.channel(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serialization is infallible");
    bytes.push(b'\n');
    let voxels = v.data().as_slice().expect("standard layout");
    bytes.reserve(voxels.len() * 4);
    for &val in voxels {
        bytes.extend_from_slice(&val.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a volume, validating header fields, payload size, and voxel values.
pub fn read_volume(path: &Path) -> Result<Volume, VolumeError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    parse_volume(&bytes)
}

fn parse_volume(bytes: &[u8]) -> Result<Volume, VolumeError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| VolumeError::Header("missing newline after header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| VolumeError::Header(e.to_string()))?;
    let [nx, ny, nz] = header.dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(VolumeError::EmptyDims(nx, ny, nz));
    }
    if header.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::BadSpacing(header.spacing));
    }
    let payload = &bytes[newline + 1..];
    let expected = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| VolumeError::Header("dims overflow".into()))?;
    if payload.len() != expected {
        return Err(VolumeError::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    let mut voxels = Vec::with_capacity(nx * ny * nz);
    for chunk in payload.chunks_exact(4) {
        voxels.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let data = ndarray::Array3::from_shape_vec((nz, ny, nx), voxels).expect("shape matches len");
    Volume::new(data, header.spacing, header.channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample_volume() -> Volume {
        let data = Array3::from_shape_fn((4, 3, 2), |(z, y, x)| (z * 100 + y * 10 + x) as f32 / 7.0);
        Volume::new(data, [2.23, 2.23, 3.0], Channel::Water).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.rvf");
        let p2 = dir.path().join("b.rvf");
        let v = sample_volume();
        write_volume(&p1, &v).unwrap();
        let v2 = read_volume(&p1).unwrap();
        write_volume(&p2, &v2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(v.dims(), v2.dims());
        assert_eq!(v.spacing(), v2.spacing());
        assert_eq!(v.channel(), v2.channel());
        assert_eq!(v.data(), v2.data());
    }

    #[test]
    fn payload_is_x_fastest_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.rvf");
        let data = Array3::from_shape_fn((1, 2, 3), |(_, y, x)| (y * 3 + x) as f32);
        let v = Volume::new(data, [1.0, 1.0, 1.0], Channel::Fat).unwrap();
        write_volume(&p, &v).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..newline]).unwrap();
        assert_eq!(header, r#"{"dims":[3,2,1],"spacing":[1.0,1.0,1.0],"channel":"fat"}"#);
        let payload = &bytes[newline + 1..];
        // x varies fastest: 0,1,2 then 3,4,5
        let vals: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.rvf");
        write_volume(&p, &sample_volume()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&p, &bytes).unwrap();
        match read_volume(&p) {
            Err(VolumeError::PayloadSize { expected, actual }) => {
                assert_eq!(expected, 4 * 3 * 2 * 4);
                assert_eq!(actual, expected - 5);
            }
            other => panic!("expected PayloadSize error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.rvf");
        std::fs::write(&p, b"{\"dims\":[1,1,1]\nxxxx").unwrap();
        assert!(matches!(read_volume(&p), Err(VolumeError::Header(_))));
        std::fs::write(&p, b"no json here").unwrap();
        assert!(matches!(read_volume(&p), Err(VolumeError::Header(_))));
        // unknown channel name
        std::fs::write(
            &p,
            b"{\"dims\":[1,1,1],\"spacing\":[1.0,1.0,1.0],\"channel\":\"bone\"}\n\x00\x00\x00\x00",
        )
        .unwrap();
        assert!(matches!(read_volume(&p), Err(VolumeError::Header(_))));
    }

    #[test]
    fn non_finite_voxel_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.rvf");
        write_volume(&p, &sample_volume()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let voxel = 5; // corrupt the sixth voxel
        let at = newline + 1 + voxel * 4;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        match read_volume(&p) {
            Err(VolumeError::BadVoxel { index, .. }) => assert_eq!(index, voxel),
            other => panic!("expected BadVoxel, got {other:?}"),
        }
    }

    #[test]
    fn negative_voxel_is_rejected() {
        let data = Array3::from_elem((1, 1, 2), 1.0f32);
        let mut neg = data.clone();
        neg[[0, 0, 1]] = -0.5;
        assert!(Volume::new(data, [1.0; 3], Channel::Water).is_ok());
        match Volume::new(neg, [1.0; 3], Channel::Water) {
            Err(VolumeError::BadVoxel { index, value }) => {
                assert_eq!(index, 1);
                assert_eq!(value, -0.5);
            }
            other => panic!("expected BadVoxel, got {other:?}"),
        }
    }

    #[test]
    fn zero_dims_and_bad_spacing_are_rejected() {
        let data = Array3::<f32>::zeros((0, 2, 2));
        assert!(matches!(
            Volume::new(data, [1.0; 3], Channel::Water),
            Err(VolumeError::EmptyDims(..))
        ));
        let data = Array3::<f32>::zeros((2, 2, 2));
        assert!(matches!(
            Volume::new(data, [1.0, 0.0, 1.0], Channel::Water),
            Err(VolumeError::BadSpacing(_))
        ));
    }
}
