//! 8-bit binary PGM previews sharing one min-max window per stack.

use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Maps `[lo, hi]` to `0..=255`; a flat stack maps to 0.
pub fn to_gray(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

pub fn encode_pgm(n: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Writes `<prefix>_<k>.pgm` for each frame and returns the paths.
pub fn write_stack(dir: &Path, prefix: &str, n: usize, frames: &[f64]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let lo = frames.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = frames.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    frames
        .chunks(n * n)
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(format!("{prefix}_{k:03}.pgm"));
            std::fs::write(&path, encode_pgm(n, &to_gray(f, lo, hi))).map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_ends() {
        assert_eq!(to_gray(&[-1.0, 0.0, 1.0], -1.0, 1.0), vec![0, 128, 255]);
        assert_eq!(to_gray(&[3.0, 3.0], 3.0, 3.0), vec![0, 0]);
    }

    #[test]
    fn header() {
        let b = encode_pgm(2, &[0, 1, 2, 3]);
        assert_eq!(&b[..11], b"P5\n2 2\n255\n");
        assert_eq!(b.len(), 15);
    }
}
