//! Binary PGM (gray) and PPM (color) rendering of [0, 1] grids.

use std::path::Path;

use super::AudioIoError;
use crate::nn::Tensor;

fn to_byte(v: f32) -> Result<u8, AudioIoError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(AudioIoError::ValueOutOfRange(v));
    }
    Ok((v * 255.0).round() as u8)
}

/// `[H, W]` grid → `P5` bytes. Row 0 is the top of the image.
pub fn encode_pgm(grid: &Tensor) -> Result<Vec<u8>, AudioIoError> {
    let [h, w] = *grid.shape() else {
        return Err(AudioIoError::BadShape {
            expected: "an H×W grid",
            shape: grid.shape().to_vec(),
        });
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in grid.data() {
        out.push(to_byte(v)?);
    }
    Ok(out)
}

/// `[3, H, W]` planes (R, G, B) → interleaved `P6` bytes.
pub fn encode_ppm(planes: &Tensor) -> Result<Vec<u8>, AudioIoError> {
    let [3, h, w] = *planes.shape() else {
        return Err(AudioIoError::BadShape {
            expected: "a 3×H×W grid",
            shape: planes.shape().to_vec(),
        });
    };
    let d = planes.data();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h * w {
        for c in 0..3 {
            out.push(to_byte(d[c * h * w + i])?);
        }
    }
    Ok(out)
}

pub fn save_image_gray(grid: &Tensor, path: impl AsRef<Path>) -> Result<(), AudioIoError> {
    std::fs::write(path, encode_pgm(grid)?)?;
    Ok(())
}

pub fn save_image_rgb(planes: &Tensor, path: impl AsRef<Path>) -> Result<(), AudioIoError> {
    std::fs::write(path, encode_ppm(planes)?)?;
    Ok(())
}
