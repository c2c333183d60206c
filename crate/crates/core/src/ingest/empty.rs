//! Cheap classical gate deciding whether a frame may contain an object.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::{self, Component};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmptyFrameConfig {
    /// Background samples kept in the FIFO.
    pub fifo_capacity: usize,
    /// Difference intensity above which a pixel is foreground.
    pub binary_threshold: u8,
    pub min_contour_area: u64,
    pub max_contour_area: u64,
    /// Accepted height / width range of a candidate region, inclusive.
    pub aspect_ratio_range: (f64, f64),
    /// Frames between median rebuilds while in empty mode.
    pub background_refresh_period: u32,
    /// Confirmed-empty frames between FIFO pushes.
    pub sample_period: u32,
    /// Radius of the square structuring element.
    pub morphology_kernel: u8,
}

impl Default for EmptyFrameConfig {
    fn default() -> Self {
        EmptyFrameConfig {
            fifo_capacity: 10,
            binary_threshold: 30,
            min_contour_area: 300,
            max_contour_area: 1 << 40,
            aspect_ratio_range: (0.2, 5.0),
            background_refresh_period: 150,
            sample_period: 15,
            morphology_kernel: 2,
        }
    }
}

impl EmptyFrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fifo_capacity < 3 {
            return Err(Error::config("fifo_capacity must be at least 3"));
        }
        if self.binary_threshold == 0 || self.min_contour_area == 0 {
            return Err(Error::config("empty-frame thresholds must be positive"));
        }
        if self.max_contour_area < self.min_contour_area {
            return Err(Error::config("max_contour_area below min_contour_area"));
        }
        let (lo, hi) = self.aspect_ratio_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::config("aspect_ratio_range needs 0 < low < high"));
        }
        if self.background_refresh_period == 0 || self.sample_period == 0 {
            return Err(Error::config("periods must be positive"));
        }
        Ok(())
    }

    fn accepts(&self, c: &Component) -> bool {
        let area = c.box_area();
        let aspect = c.aspect();
        (self.min_contour_area..=self.max_contour_area).contains(&area)
            && aspect >= self.aspect_ratio_range.0
            && aspect <= self.aspect_ratio_range.1
    }
}

/// Regions of the cleaned difference mask that pass the area and aspect gates.
pub fn candidate_regions(
    frame: &RgbImage,
    background: &RgbImage,
    cfg: &EmptyFrameConfig,
) -> Result<Vec<Component>> {
    let diff = imgops::abs_diff_gray(frame, background)?;
    let mask = imgops::binarize(&diff, cfg.binary_threshold);
    let mask = imgops::open(&mask, cfg.morphology_kernel);
    Ok(imgops::components(&mask)
        .into_iter()
        .filter(|c| cfg.accepts(c))
        .collect())
}

/// True when no region resembling an object survives the pipeline.
pub fn is_frame_empty(frame: &RgbImage, background: &RgbImage, cfg: &EmptyFrameConfig) -> Result<bool> {
    Ok(candidate_regions(frame, background, cfg)?.is_empty())
}
