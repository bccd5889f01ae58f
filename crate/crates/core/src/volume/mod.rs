//! Two-channel volume data: file format, resampling, station fusion,
//! mean-intensity projections, and 8-bit network input assembly.
//!
//! Axis convention throughout: `x` runs left→right, `y` anterior→posterior,
//! `z` caudal→cranial. Voxel data is stored C-ordered as `[z][y][x]`, so `x`
//! is the fastest-varying index both in memory and in the file payload.

mod fuse;
mod imgfile;
mod project;
mod resample;
mod rvf;

pub use fuse::fuse_stations;
pub use imgfile::{read_pgm, read_projection_image, write_pgm, write_ppm, write_projection_image};
pub use project::{
    assemble_input, frontal_panel_width, mean_projection, quantize_to_u8, resize_bilinear,
    ProjectionAxis,
};
pub use resample::resample_volume;
pub use rvf::{read_volume, write_volume};

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Signal channel held by a [`Volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Water,
    Fat,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Water => write!(f, "water"),
            Channel::Fat => write!(f, "fat"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("volume dimensions must all be at least 1, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("voxel spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("non-finite or negative value {value} at voxel index {index}")]
    BadVoxel { index: usize, value: f32 },
    #[error("payload holds {actual} bytes, header implies {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("station stack is empty")]
    EmptyStack,
    #[error("station geometry mismatch: {0}")]
    StationGeometry(String),
    #[error("overlap list has {overlaps} entries for {stations} stations")]
    OverlapCount { overlaps: usize, stations: usize },
    #[error("overlap of {overlap_mm} mm is invalid between stations of extent {a_mm} mm and {b_mm} mm")]
    BadOverlap {
        overlap_mm: f64,
        a_mm: f64,
        b_mm: f64,
    },
    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: Channel, actual: Channel },
    #[error("voxel grid mismatch between channels: {0}")]
    GridMismatch(String),
    #[error("image dimensions must be at least 1x1")]
    EmptyImage,
}

/// A single-channel scalar volume on a regular grid.
///
/// `data` is indexed `[z][y][x]`; `spacing` is millimetres per voxel along
/// `(x, y, z)`. All values are finite and non-negative (signal magnitudes).
#[derive(Debug, Clone)]
pub struct Volume {
    data: Array3<f32>,
    spacing: [f64; 3],
    channel: Channel,
}

impl Volume {
    /// Validates invariants and wraps the raw parts into a volume.
    pub fn new(data: Array3<f32>, spacing: [f64; 3], channel: Channel) -> Result<Self, VolumeError> {
        let (nz, ny, nx) = data.dim();
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::EmptyDims(nx, ny, nz));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        // data may be non-contiguous (e.g. a view copy); normalize to standard
        // layout so the x-fastest payload order is the memory order.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        for (index, &v) in data.as_slice().expect("standard layout").iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(VolumeError::BadVoxel { index, value: v });
            }
        }
        Ok(Self {
            data,
            spacing,
            channel,
        })
    }

    /// Grid size as `(nx, ny, nz)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (nz, ny, nx) = self.data.dim();
        (nx, ny, nz)
    }

    /// Millimetres per voxel along `(x, y, z)`.
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Physical extent in millimetres along `(x, y, z)`.
    pub fn extent_mm(&self) -> [f64; 3] {
        let (nx, ny, nz) = self.dims();
        [
            nx as f64 * self.spacing[0],
            ny as f64 * self.spacing[1],
            nz as f64 * self.spacing[2],
        ]
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Voxel data indexed `[z][y][x]`.
    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }
}

/// An ordered list of same-subject acquisition stations along `z`, caudal
/// station first, with the physical overlap between each adjacent pair.
#[derive(Debug, Clone)]
pub struct StationStack {
    stations: Vec<Volume>,
    overlaps_mm: Vec<f64>,
}

impl StationStack {
    /// Validates station compatibility: identical channel, in-plane grid and
    /// spacing, one non-negative overlap per adjacent pair, each smaller than
    /// both neighbours' z extents.
    pub fn new(stations: Vec<Volume>, overlaps_mm: Vec<f64>) -> Result<Self, VolumeError> {
        if stations.is_empty() {
            return Err(VolumeError::EmptyStack);
        }
        if overlaps_mm.len() + 1 != stations.len() {
            return Err(VolumeError::OverlapCount {
                overlaps: overlaps_mm.len(),
                stations: stations.len(),
            });
        }
        let first = &stations[0];
        let (nx0, ny0, _) = first.dims();
        for s in &stations[1..] {
            if s.channel() != first.channel() {
                return Err(VolumeError::ChannelMismatch {
                    expected: first.channel(),
                    actual: s.channel(),
                });
            }
            let (nx, ny, _) = s.dims();
            if (nx, ny) != (nx0, ny0) {
                return Err(VolumeError::StationGeometry(format!(
                    "in-plane dims {}x{} vs {}x{}",
                    nx, ny, nx0, ny0
                )));
            }
            if s.spacing() != first.spacing() {
                return Err(VolumeError::StationGeometry(format!(
                    "spacing {:?} vs {:?}",
                    s.spacing(),
                    first.spacing()
                )));
            }
        }
        for (i, &o) in overlaps_mm.iter().enumerate() {
            let a_mm = stations[i].extent_mm()[2];
            let b_mm = stations[i + 1].extent_mm()[2];
            if !o.is_finite() || o < 0.0 || o >= a_mm || o >= b_mm {
                return Err(VolumeError::BadOverlap {
                    overlap_mm: o,
                    a_mm,
                    b_mm,
                });
            }
        }
        Ok(Self {
            stations,
            overlaps_mm,
        })
    }

    pub fn stations(&self) -> &[Volume] {
        &self.stations
    }

    pub fn overlaps_mm(&self) -> &[f64] {
        &self.overlaps_mm
    }
}

/// Assembled two-channel 8-bit network input.
///
/// Layout: the frontal projection occupies the left panel, the lateral
/// projection the right panel, jointly rescaled to a fixed square canvas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionImage {
    pub subject_id: String,
    /// Water channel, `SIZE x SIZE`, row 0 = caudal end.
    pub water: ndarray::Array2<u8>,
    /// Fat channel, same geometry as `water`.
    pub fat: ndarray::Array2<u8>,
}

impl ProjectionImage {
    /// Canvas side length in pixels.
    pub const SIZE: usize = 256;
}
