//! Mean-intensity projections and assembly of the two-panel 8-bit input.

use super::{ProjectionImage, Volume, VolumeError};
use ndarray::{Array2, Axis};

/// Viewing direction of a mean-intensity projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionAxis {
    /// Coronal view: average over `y`, giving a `(nz, nx)` image.
    Frontal,
    /// Sagittal view: average over `x`, giving a `(nz, ny)` image.
    Lateral,
}

/// Mean-intensity projection of `v` along the collapsed axis. Rows index `z`.
pub fn mean_projection(v: &Volume, axis: ProjectionAxis) -> Array2<f64> {
    let data = v.data();
    let (nz, ny, nx) = data.dim();
    match axis {
        ProjectionAxis::Frontal => {
            let mut out = Array2::<f64>::zeros((nz, nx));
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        out[[z, x]] += data[[z, y, x]] as f64;
                    }
                }
            }
            out.mapv_inplace(|s| s / ny as f64);
            out
        }
        ProjectionAxis::Lateral => {
            let mut out = Array2::<f64>::zeros((nz, ny));
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        out[[z, y]] += data[[z, y, x]] as f64;
                    }
                }
            }
            out.mapv_inplace(|s| s / nx as f64);
            out
        }
    }
}

/// Bilinear resize with pixel-centre alignment: output pixel `i` samples
/// source position `(i + 0.5) * in/out - 0.5`, clamped to the source grid.
pub fn resize_bilinear(img: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = img.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0);
    let plan = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let rows = plan(in_h, out_h);
    let cols = plan(in_w, out_w);
    let mut out = Array2::<f64>::zeros((out_h, out_w));
    for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
        for (c, &(c0, c1, fc)) in cols.iter().enumerate() {
            let top = img[[r0, c0]] + (img[[r0, c1]] - img[[r0, c0]]) * fc;
            let bot = img[[r1, c0]] + (img[[r1, c1]] - img[[r1, c0]]) * fc;
            out[[r, c]] = top + (bot - top) * fr;
        }
    }
    out
}

/// Min–max quantization to 8 bits: `round(255 * (p - min) / (max - min))`
/// with round-half-away-from-zero. A constant image quantizes to zeros.
pub fn quantize_to_u8(img: &Array2<f64>) -> Array2<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in img.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return Array2::zeros(img.dim());
    }
    let scale = 255.0 / (hi - lo);
    img.mapv(|v| ((v - lo) * scale).round() as u8)
}

/// Pixel width of the frontal (left) panel after the two-panel canvas of
/// width `nx + ny` is rescaled to `out_w` pixels.
pub fn frontal_panel_width(nx: usize, ny: usize, out_w: usize) -> usize {
    ((out_w * nx) as f64 / (nx + ny) as f64).round() as usize
}

/// Builds the network input for one subject: frontal and lateral mean
/// projections of each channel, placed side by side (frontal left) into one
/// canvas, bilinearly resized to 256x256, then min–max quantized per channel.
pub fn assemble_input(
    water: &Volume,
    fat: &Volume,
    subject_id: &str,
) -> Result<ProjectionImage, VolumeError> {
    if water.dims() != fat.dims() || water.spacing() != fat.spacing() {
        return Err(VolumeError::GridMismatch(format!(
            "water {:?} @ {:?} vs fat {:?} @ {:?}",
            water.dims(),
            water.spacing(),
            fat.dims(),
            fat.spacing()
        )));
    }
    let assemble_channel = |v: &Volume| -> Array2<u8> {
        let frontal = mean_projection(v, ProjectionAxis::Frontal);
        let lateral = mean_projection(v, ProjectionAxis::Lateral);
        let (nz, nx) = frontal.dim();
        let ny = lateral.dim().1;
        let mut canvas = Array2::<f64>::zeros((nz, nx + ny));
        canvas.slice_mut(ndarray::s![.., ..nx]).assign(&frontal);
        canvas.slice_mut(ndarray::s![.., nx..]).assign(&lateral);
        let resized = resize_bilinear(&canvas, ProjectionImage::SIZE, ProjectionImage::SIZE);
        quantize_to_u8(&resized)
    };
    Ok(ProjectionImage {
        subject_id: subject_id.to_string(),
        water: assemble_channel(water),
        fat: assemble_channel(fat),
    })
}
