//! Trilinear resampling onto a new voxel spacing.

use super::{Volume, VolumeError};
use ndarray::Array3;
use rayon::prelude::*;

/// Per-axis interpolation plan: for output index `i`, blend source indices
/// `lo[i]` and `hi[i]` with weight `frac[i]` on the `hi` side.
struct AxisPlan {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

fn plan_axis(n_src: usize, src_spacing: f64, n_dst: usize, dst_spacing: f64) -> AxisPlan {
    let scale = dst_spacing / src_spacing;
    let mut lo = Vec::with_capacity(n_dst);
    let mut hi = Vec::with_capacity(n_dst);
    let mut frac = Vec::with_capacity(n_dst);
    for i in 0..n_dst {
        // Sample positions are aligned to the source voxel-0 centre, so an
        // identity spacing reproduces voxels exactly.
        let pos = (i as f64 * scale).clamp(0.0, (n_src - 1) as f64);
        let base = pos.floor();
        let l = base as usize;
        let h = (l + 1).min(n_src - 1);
        lo.push(l);
        hi.push(h);
        frac.push(pos - base);
    }
    AxisPlan { lo, hi, frac }
}

/// Resamples `v` onto `target_spacing` (mm per voxel along x, y, z) with
/// trilinear interpolation, preserving the physical extent to within one
/// voxel. Output dims are `round(extent / target_spacing)`, at least 1.
pub fn resample_volume(v: &Volume, target_spacing: [f64; 3]) -> Result<Volume, VolumeError> {
    if target_spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::BadSpacing(target_spacing));
    }
    let (nx, ny, nz) = v.dims();
    let extent = v.extent_mm();
    let dx = ((extent[0] / target_spacing[0]).round() as usize).max(1);
    let dy = ((extent[1] / target_spacing[1]).round() as usize).max(1);
    let dz = ((extent[2] / target_spacing[2]).round() as usize).max(1);

    let px = plan_axis(nx, v.spacing()[0], dx, target_spacing[0]);
    let py = plan_axis(ny, v.spacing()[1], dy, target_spacing[1]);
    let pz = plan_axis(nz, v.spacing()[2], dz, target_spacing[2]);

    let src = v.data();
    let mut out = Array3::<f32>::zeros((dz, dy, dx));
    // Each z-slab is independent, so parallel execution cannot reorder any
    // floating-point reduction.
    out.outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(iz, mut slab)| {
            let (z0, z1, fz) = (pz.lo[iz], pz.hi[iz], pz.frac[iz]);
            for iy in 0..dy {
                let (y0, y1, fy) = (py.lo[iy], py.hi[iy], py.frac[iy]);
                for ix in 0..dx {
                    let (x0, x1, fx) = (px.lo[ix], px.hi[ix], px.frac[ix]);
                    let c000 = src[[z0, y0, x0]] as f64;
                    let c001 = src[[z0, y0, x1]] as f64;
                    let c010 = src[[z0, y1, x0]] as f64;
                    let c011 = src[[z0, y1, x1]] as f64;
                    let c100 = src[[z1, y0, x0]] as f64;
                    let c101 = src[[z1, y0, x1]] as f64;
                    let c110 = src[[z1, y1, x0]] as f64;
                    let c111 = src[[z1, y1, x1]] as f64;
                    let c00 = c000 + (c001 - c000) * fx;
                    let c01 = c010 + (c011 - c010) * fx;
                    let c10 = c100 + (c101 - c100) * fx;
                    let c11 = c110 + (c111 - c110) * fx;
                    let c0 = c00 + (c01 - c00) * fy;
                    let c1 = c10 + (c11 - c10) * fy;
                    slab[[iy, ix]] = (c0 + (c1 - c0) * fz) as f32;
                }
            }
        });
    Volume::new(out, target_spacing, v.channel())
}
