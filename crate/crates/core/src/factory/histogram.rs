use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FactoryError;

/// Fixed-width disparity histogram starting at 0. Values past the last
/// bin land in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityHistogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl DisparityHistogram {
    pub fn new(bin_width: f64, bins: usize) -> Self {
        assert!(bin_width > 0.0 && bins > 0, "histogram needs positive width and bins");
        Self {
            bin_width,
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, d: f64) {
        if !d.is_finite() || d < 0.0 {
            return;
        }
        let k = ((d / self.bin_width) as usize).min(self.counts.len() - 1);
        self.counts[k] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `[low edge of first occupied bin, high edge of last occupied bin]`.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.counts.iter().position(|&c| c > 0)?;
        let last = self.counts.iter().rposition(|&c| c > 0)?;
        Some((first as f64 * self.bin_width, (last + 1) as f64 * self.bin_width))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["bin_low", "bin_high", "count"])?;
        for (k, c) in self.counts.iter().enumerate() {
            let lo = k as f64 * self.bin_width;
            wr.write_record([format!("{lo}"), format!("{}", lo + self.bin_width), c.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Bar chart as an 8-bit grayscale PNG, one `bar_px` column per bin.
    pub fn write_png(&self, path: &Path, height: u32, bar_px: u32) -> Result<(), FactoryError> {
        let peak = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let width = self.counts.len() as u32 * bar_px;
        let img = image::GrayImage::from_fn(width, height, |x, y| {
            let c = self.counts[(x / bar_px) as usize] as f64;
            let bar = (c / peak * f64::from(height)).round() as u32;
            image::Luma([if height - y <= bar { 40 } else { 255 }])
        });
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_and_support() {
        let mut h = DisparityHistogram::new(1.0, 8);
        for d in [0.2, 3.5, 3.9, 100.0, -1.0, f64::NAN] {
            h.add(d);
        }
        assert_eq!(h.counts, vec![1, 0, 0, 2, 0, 0, 0, 1]);
        assert_eq!(h.support(), Some((0.0, 8.0)));
        assert_eq!(DisparityHistogram::new(1.0, 3).support(), None);
    }

    #[test]
    fn csv_has_one_row_per_bin() {
        let h = DisparityHistogram::new(0.5, 4);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
