use std::path::Path;

use super::DataError;

fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Binary PGM of `frames` (each `height × width`, row-major, values in [−1, 1]) tiled
/// row-major into a `rows × cols` grid with 1-pixel separators of value 0.
pub fn pgm_grid_bytes(
    frames: &[&[f64]],
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<u8>, DataError> {
    if rows * cols < frames.len() {
        return Err(DataError::BadParameter(format!("{rows}x{cols} grid cannot hold {} frames", frames.len())));
    }
    if height == 0 || width == 0 || rows == 0 || cols == 0 {
        return Err(DataError::BadParameter("empty grid".into()));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != height * width) {
        return Err(DataError::BadParameter(format!("frame of {} values, expected {}", f.len(), height * width)));
    }
    let gw = cols * width + cols - 1;
    let gh = rows * height + rows - 1;
    let mut pixels = vec![0u8; gw * gh];
    for (i, frame) in frames.iter().enumerate() {
        let (gr, gc) = (i / cols, i % cols);
        for r in 0..height {
            let y = gr * (height + 1) + r;
            for c in 0..width {
                pixels[y * gw + gc * (width + 1) + c] = to_byte(frame[r * width + c]);
            }
        }
    }
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

pub fn write_pgm_grid(
    frames: &[&[f64]],
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
    path: &Path,
) -> Result<(), DataError> {
    let bytes = pgm_grid_bytes(frames, height, width, rows, cols)?;
    Ok(std::fs::write(path, bytes)?)
}
