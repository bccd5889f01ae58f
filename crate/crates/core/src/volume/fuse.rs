//! Fusion of per-station acquisitions into one continuous volume along `z`.

use super::{StationStack, Volume, VolumeError};
use ndarray::Array3;

/// Concatenates the stations of `stack` along `z`, averaging voxels where
/// adjacent stations overlap. Overlap extents are converted to whole slices
/// with round-to-nearest.
pub fn fuse_stations(stack: &StationStack) -> Result<Volume, VolumeError> {
    let stations = stack.stations();
    let spacing = stations[0].spacing();
    let (nx, ny, _) = stations[0].dims();
    let sz = spacing[2];

    let overlap_slices: Vec<usize> = stack
        .overlaps_mm()
        .iter()
        .map(|o| (o / sz).round() as usize)
        .collect();
    // Start slice of each station in the fused grid.
    let mut starts = Vec::with_capacity(stations.len());
    let mut cursor = 0usize;
    for (i, s) in stations.iter().enumerate() {
        if i > 0 {
            let o = overlap_slices[i - 1];
            let prev_nz = stations[i - 1].dims().2;
            if o >= prev_nz || o >= s.dims().2 {
                return Err(VolumeError::BadOverlap {
                    overlap_mm: stack.overlaps_mm()[i - 1],
                    a_mm: stations[i - 1].extent_mm()[2],
                    b_mm: s.extent_mm()[2],
                });
            }
            cursor = cursor + prev_nz - o;
        }
        starts.push(cursor);
    }
    let total_nz = starts.last().unwrap() + stations.last().unwrap().dims().2;

    let mut sum = Array3::<f64>::zeros((total_nz, ny, nx));
    let mut count = vec![0u32; total_nz];
    for (s, &start) in stations.iter().zip(&starts) {
        let (_, _, snz) = s.dims();
        for z in 0..snz {
            count[start + z] += 1;
            let mut dst = sum.index_axis_mut(ndarray::Axis(0), start + z);
            let src = s.data().index_axis(ndarray::Axis(0), z);
            dst.zip_mut_with(&src, |d, &v| *d += v as f64);
        }
    }
    let mut out = Array3::<f32>::zeros((total_nz, ny, nx));
    for z in 0..total_nz {
        debug_assert!(count[z] > 0, "fused grid has uncovered slices");
        let c = count[z] as f64;
        let src = sum.index_axis(ndarray::Axis(0), z);
        let mut dst = out.index_axis_mut(ndarray::Axis(0), z);
        dst.zip_mut_with(&src, |d, &v| *d = (v / c) as f32);
    }
    Volume::new(out, spacing, stations[0].channel())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Channel;

    fn station(nz: usize, value: f32) -> Volume {
        Volume::new(
            Array3::from_elem((nz, 2, 2), value),
            [1.0, 1.0, 2.0],
            Channel::Water,
        )
        .unwrap()
    }

    #[test]
    fn single_station_is_identity() {
        let v = Volume::new(
            Array3::from_shape_fn((3, 2, 2), |(z, y, x)| (z * 4 + y * 2 + x) as f32),
            [1.0, 1.0, 1.0],
            Channel::Fat,
        )
        .unwrap();
        let stack = StationStack::new(vec![v.clone()], vec![]).unwrap();
        let fused = fuse_stations(&stack).unwrap();
        assert_eq!(fused.data(), v.data());
        assert_eq!(fused.channel(), v.channel());
    }

    #[test]
    fn two_stations_average_the_overlap() {
        // Two 4-slice stations at sz=2mm with a 4mm (2-slice) overlap:
        // fused depth 6, the shared slices hold the mean of both stations.
        let a = station(4, 10.0);
        let b = station(4, 20.0);
        let stack = StationStack::new(vec![a, b], vec![4.0]).unwrap();
        let fused = fuse_stations(&stack).unwrap();
        assert_eq!(fused.dims(), (2, 2, 6));
        let col: Vec<f32> = (0..6).map(|z| fused.data()[[z, 0, 0]]).collect();
        assert_eq!(col, vec![10.0, 10.0, 15.0, 15.0, 20.0, 20.0]);
    }

    #[test]
    fn three_stations_chain() {
        let stack = StationStack::new(
            vec![station(3, 1.0), station(3, 2.0), station(3, 3.0)],
            vec![2.0, 2.0],
        )
        .unwrap();
        let fused = fuse_stations(&stack).unwrap();
        // 3 + 3 + 3 - 1 - 1 slices
        assert_eq!(fused.dims(), (2, 2, 7));
        let col: Vec<f32> = (0..7).map(|z| fused.data()[[z, 0, 0]]).collect();
        assert_eq!(col, vec![1.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
    }

    #[test]
    fn mismatched_in_plane_dims_are_rejected() {
        let a = station(4, 1.0);
        let b = Volume::new(
            Array3::from_elem((4, 2, 3), 1.0f32),
            [1.0, 1.0, 2.0],
            Channel::Water,
        )
        .unwrap();
        assert!(matches!(
            StationStack::new(vec![a, b], vec![2.0]),
            Err(VolumeError::StationGeometry(_))
        ));
    }

    #[test]
    fn mixed_channels_are_rejected() {
        let a = station(4, 1.0);
        let b = Volume::new(
            Array3::from_elem((4, 2, 2), 1.0f32),
            [1.0, 1.0, 2.0],
            Channel::Fat,
        )
        .unwrap();
        assert!(matches!(
            StationStack::new(vec![a, b], vec![2.0]),
            Err(VolumeError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn overlap_exceeding_station_extent_is_rejected() {
        let err = StationStack::new(vec![station(4, 1.0), station(4, 2.0)], vec![8.0]);
        assert!(matches!(err, Err(VolumeError::BadOverlap { .. })));
        let err = StationStack::new(vec![station(4, 1.0), station(4, 2.0)], vec![-1.0]);
        assert!(matches!(err, Err(VolumeError::BadOverlap { .. })));
    }

    #[test]
    fn overlap_count_must_match_station_count() {
        assert!(matches!(
            StationStack::new(vec![station(4, 1.0), station(4, 2.0)], vec![]),
            Err(VolumeError::OverlapCount { .. })
        ));
        assert!(matches!(
            StationStack::new(vec![], vec![]),
            Err(VolumeError::EmptyStack)
        ));
    }
}
