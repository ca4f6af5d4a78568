//! Centered 2-D amplitude spectra of images and of their grid sub-parts.

use std::fs::File;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::ImageField;
use crate::partition::PartitionMask;

/// Axis of an [`amplitude_slice`]: `X` walks along the row through the
/// center bin, `Y` along the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// DFT of a rectangular region with the zero frequency moved to
/// `(height / 2, width / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    /// Row-major, centered.
    pub bins: Vec<Complex64>,
    /// `(y0, x0)` of the region inside its parent image.
    pub offset: (usize, usize),
}

impl Spectrum {
    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    /// Bin at signed frequency `(fy, fx)`.
    pub fn at(&self, fy: isize, fx: isize) -> Complex64 {
        let (cy, cx) = self.center();
        let y = (cy as isize + fy).rem_euclid(self.height as isize) as usize;
        let x = (cx as isize + fx).rem_euclid(self.width as isize) as usize;
        self.bins[y * self.width + x]
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

/// Unnormalized forward DFT `F(u,v) = Σ f(y,x)·e^{−2πi(uy/H + vx/W)}` of a
/// row-major real grid, center-shifted.
pub fn dft2_values(values: &[f64], height: usize, width: usize) -> Result<Spectrum> {
    if height == 0 || width == 0 || values.len() != height * width {
        return Err(Error::Input("spectrum region must be non-empty and match its dims".into()));
    }
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(width);
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(height);
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
    let (cy, cx) = (height / 2, width / 2);
    let mut bins = vec![Complex64::default(); height * width];
    for y in 0..height {
        for x in 0..width {
            bins[((y + cy) % height) * width + (x + cx) % width] = data[y * width + x];
        }
    }
    Ok(Spectrum {
        height,
        width,
        bins,
        offset: (0, 0),
    })
}

/// Spectrum of a rectangle of `image`; RGB is averaged to gray first.
pub fn dft2_region(image: &ImageField, y0: usize, x0: usize, h: usize, w: usize) -> Result<Spectrum> {
    let region = image.crop(y0, x0, h, w)?.to_gray();
    let mut s = dft2_values(region.data(), h, w)?;
    s.offset = (y0, x0);
    Ok(s)
}

pub fn dft2(image: &ImageField) -> Result<Spectrum> {
    dft2_region(image, 0, 0, image.height(), image.width())
}

/// `(signed frequency, amplitude)` along the row or column through the center bin.
pub fn amplitude_slice(spec: &Spectrum, axis: Axis) -> Vec<(isize, f64)> {
    let n = match axis {
        Axis::X => spec.width,
        Axis::Y => spec.height,
    } as isize;
    (-(n / 2)..n - n / 2)
        .map(|f| {
            let bin = match axis {
                Axis::X => spec.at(0, f),
                Axis::Y => spec.at(f, 0),
            };
            (f, bin.norm())
        })
        .collect()
}

/// Mean amplitude over slice bins with `|f| > n/4`; 0 when no bin qualifies.
pub fn high_band_mean(slice: &[(isize, f64)]) -> f64 {
    let n = slice.len() as isize;
    let band: Vec<f64> = slice.iter().filter(|(f, _)| 4 * f.abs() > n).map(|(_, a)| *a).collect();
    if band.is_empty() {
        0.0
    } else {
        band.iter().sum::<f64>() / band.len() as f64
    }
}

/// One line of a sub-part comparison. `part` is `None` for the whole image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub part: Option<usize>,
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    pub dc: f64,
    pub dc_per_pixel: f64,
    pub high_x: f64,
    pub high_y: f64,
    pub high_x_per_pixel: f64,
    pub high_y_per_pixel: f64,
}

impl SpectrumRow {
    fn from_spectrum(part: Option<usize>, s: &Spectrum) -> Self {
        let area = (s.height * s.width) as f64;
        let high_x = high_band_mean(&amplitude_slice(s, Axis::X));
        let high_y = high_band_mean(&amplitude_slice(s, Axis::Y));
        let dc = s.at(0, 0).norm();
        SpectrumRow {
            part,
            y0: s.offset.0,
            x0: s.offset.1,
            height: s.height,
            width: s.width,
            dc,
            dc_per_pixel: dc / area,
            high_x,
            high_y,
            high_x_per_pixel: high_x / area,
            high_y_per_pixel: high_y / area,
        }
    }
}

/// Whole-image row followed by one row per grid cell.
pub fn compare_subparts(image: &ImageField, mask: &PartitionMask) -> Result<Vec<SpectrumRow>> {
    if !mask.matches(image) {
        return Err(Error::Config("mask and image dims differ".into()));
    }
    let cells = mask
        .grid_cells()
        .ok_or_else(|| Error::Config("spectral comparison needs a grid mask".into()))?;
    let mut rows = vec![SpectrumRow::from_spectrum(None, &dft2(image)?)];
    for (n, (y0, x0, h, w)) in cells.into_iter().enumerate() {
        rows.push(SpectrumRow::from_spectrum(Some(n), &dft2_region(image, y0, x0, h, w)?));
    }
    Ok(rows)
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[SpectrumRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r).map_err(crate::trainer::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_slice_csv(path: impl AsRef<Path>, slice: &[(isize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["frequency", "amplitude"]).map_err(crate::trainer::csv_err)?;
    for (f, a) in slice {
        w.write_record([f.to_string(), a.to_string()]).map_err(crate::trainer::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{pog, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn direct_dft(values: &[f64], h: usize, w: usize, u: usize, v: usize) -> Complex64 {
        let mut acc = Complex64::default();
        for y in 0..h {
            for x in 0..w {
                let phase = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                acc += Complex64::from_polar(values[y * w + x], phase);
            }
        }
        acc
    }

    #[test]
    fn constant_has_only_dc() {
        let img = ImageField::constant(6, 8, 1, 0.25).unwrap();
        let s = dft2(&img).unwrap();
        assert!((s.at(0, 0).norm() - 0.25 * 48.0).abs() < 1e-12);
        let (cy, cx) = s.center();
        for (i, a) in s.amplitudes().iter().enumerate() {
            if i != cy * 8 + cx {
                assert!(a.abs() < 1e-12);
            }
        }
        let slice = amplitude_slice(&s, Axis::X);
        assert_eq!(slice[4].0, 0);
        assert_eq!(high_band_mean(&slice), 0.0);
    }

    #[test]
    fn impulse_is_flat() {
        let mut v = vec![0.0; 35];
        v[0] = 1.0;
        let s = dft2_values(&v, 5, 7).unwrap();
        assert!(s.amplitudes().iter().all(|a| (a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (h, w) in [(8, 8), (5, 6)] {
            let v: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let s = dft2_values(&v, h, w).unwrap();
            for u in 0..h {
                for k in 0..w {
                    let direct = direct_dft(&v, h, w, u, k);
                    let fast = s.at(u as isize, k as isize);
                    assert!((direct - fast).norm() < 1e-9, "{h}×{w} ({u},{k})");
                }
            }
        }
    }

    #[test]
    fn cosine_gives_symmetric_spikes() {
        let img = ImageField::from_fn(8, 16, 1, |_, x, _| 0.5 + 0.5 * (2.0 * PI * 3.0 * x as f64 / 16.0).cos()).unwrap();
        let slice = amplitude_slice(&dft2(&img).unwrap(), Axis::X);
        for (f, a) in &slice {
            match f {
                0 => assert!((a - 64.0).abs() < 1e-9),
                3 | -3 => assert!((a - 32.0).abs() < 1e-9),
                _ => assert!(a.abs() < 1e-9),
            }
        }
    }

    #[test]
    fn subpart_dc_bounded_by_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = ImageField::from_fn(12, 10, 3, |_, _, _| rng.random()).unwrap();
        let mask = pog(12, 10, GridSpec::for_cells(12, 10, 2, 2)).unwrap();
        let rows = compare_subparts(&img, &mask).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].part, None);
        for r in &rows[1..] {
            assert!(r.dc <= rows[0].dc);
            assert_eq!(r.height * r.width, 30);
        }
    }

    #[test]
    fn non_grid_mask_rejected() {
        let img = ImageField::constant(4, 4, 1, 0.5).unwrap();
        let mask = PartitionMask::new(4, 4, 1, vec![0; 16], crate::partition::Provenance::Imported).unwrap();
        assert!(matches!(compare_subparts(&img, &mask), Err(Error::Config(_))));
    }
}
