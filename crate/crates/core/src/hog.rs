//! Histogram-of-oriented-gradients descriptors for standardized density frames.

use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{StandardizedDay, QUARTERS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HogError {
    #[error("invalid HOG parameters: {0}")]
    Params(String),
    #[error("frame {rows}x{cols} is smaller than one {need}x{need} block")]
    FrameTooSmall { rows: usize, cols: usize, need: usize },
    #[error("shape error: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HogParams {
    /// HOG cell side, in grid cells.
    pub cell_px: usize,
    /// Block side, in HOG cells.
    pub block_cells: usize,
    /// Block step, in HOG cells.
    pub block_stride: usize,
    /// Unsigned orientation bins over [0, 180) degrees.
    pub n_bins: usize,
    pub norm_epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self { cell_px: 3, block_cells: 2, block_stride: 1, n_bins: 9, norm_epsilon: 1e-6 }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), HogError> {
        if self.cell_px == 0 || self.block_cells == 0 || self.block_stride == 0 || self.n_bins == 0 {
            return Err(HogError::Params(format!("all sizes must be positive: {self:?}")));
        }
        if !(self.norm_epsilon > 0.0 && self.norm_epsilon.is_finite()) {
            return Err(HogError::Params(format!("norm_epsilon {} must be positive", self.norm_epsilon)));
        }
        Ok(())
    }

    pub fn layout(&self, n_rows: usize, n_cols: usize) -> Result<FeatureLayout, HogError> {
        self.validate()?;
        let need = self.cell_px * self.block_cells;
        if n_rows < need || n_cols < need {
            return Err(HogError::FrameTooSmall { rows: n_rows, cols: n_cols, need });
        }
        let (cy, cx) = (n_rows / self.cell_px, n_cols / self.cell_px);
        Ok(FeatureLayout {
            n_cells_y: cy,
            n_cells_x: cx,
            n_blocks_y: (cy - self.block_cells) / self.block_stride + 1,
            n_blocks_x: (cx - self.block_cells) / self.block_stride + 1,
            block_cells: self.block_cells,
            n_bins: self.n_bins,
        })
    }
}

/// Shape of a per-frame descriptor: blocks in row-major order, each holding
/// `block_cells^2` cell histograms (row-major) of `n_bins` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_cells_y: usize,
    pub n_cells_x: usize,
    pub n_blocks_y: usize,
    pub n_blocks_x: usize,
    pub block_cells: usize,
    pub n_bins: usize,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.n_blocks_y * self.n_blocks_x * self.block_cells * self.block_cells * self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyFeatureVector {
    pub day: NaiveDate,
    pub values: Vec<f64>,
}

/// Centred differences with replicated borders. `gx` runs along columns,
/// `gy` along rows (northwards).
pub fn gradients(frame: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = frame.dim();
    let gx = Array2::from_shape_fn((h, w), |(r, c)| frame[[r, (c + 1).min(w - 1)]] - frame[[r, c.saturating_sub(1)]]);
    let gy = Array2::from_shape_fn((h, w), |(r, c)| frame[[(r + 1).min(h - 1), c]] - frame[[r.saturating_sub(1), c]]);
    (gx, gy)
}

/// Splits `magnitude` between the two orientation bins nearest `angle_deg`.
/// Bin `i` is centred on `i * 180 / n_bins`, wrapping at 180.
pub fn soft_bin(angle_deg: f64, magnitude: f64, n_bins: usize) -> [(usize, f64); 2] {
    let width = 180.0 / n_bins as f64;
    let pos = angle_deg.rem_euclid(180.0) / width;
    let lo = pos.floor();
    let frac = pos - lo;
    let lo = (lo as usize) % n_bins;
    [(lo, magnitude * (1.0 - frac)), ((lo + 1) % n_bins, magnitude * frac)]
}

/// Per-cell orientation histograms, shape `(n_cells_y, n_cells_x, n_bins)`.
/// Pixels beyond the last whole HOG cell are ignored.
pub fn cell_histograms(frame: &Array2<f64>, params: &HogParams) -> Result<Array3<f64>, HogError> {
    let layout = params.layout(frame.nrows(), frame.ncols())?;
    let (gx, gy) = gradients(frame);
    let mut hist = Array3::zeros((layout.n_cells_y, layout.n_cells_x, params.n_bins));
    for r in 0..layout.n_cells_y * params.cell_px {
        for c in 0..layout.n_cells_x * params.cell_px {
            let (dx, dy) = (gx[[r, c]], gy[[r, c]]);
            let m = dx.hypot(dy);
            if m == 0.0 {
                continue;
            }
            let angle = dy.atan2(dx).to_degrees();
            for (bin, w) in soft_bin(angle, m, params.n_bins) {
                hist[[r / params.cell_px, c / params.cell_px, bin]] += w;
            }
        }
    }
    Ok(hist)
}

/// HOG descriptor of one standardized frame, with each block L2-normalized as
/// `v / sqrt(|v|^2 + eps^2)`.
pub fn hog(frame: &Array2<f64>, params: &HogParams) -> Result<FeatureVector, HogError> {
    let layout = params.layout(frame.nrows(), frame.ncols())?;
    let hist = cell_histograms(frame, params)?;
    let bc = params.block_cells;
    let block_len = bc * bc * params.n_bins;
    let mut values = Vec::with_capacity(layout.len());
    let mut block = Vec::with_capacity(block_len);
    for by in 0..layout.n_blocks_y {
        for bx in 0..layout.n_blocks_x {
            block.clear();
            for cy in 0..bc {
                for cx in 0..bc {
                    let (y, x) = (by * params.block_stride + cy, bx * params.block_stride + cx);
                    block.extend((0..params.n_bins).map(|b| hist[[y, x, b]]));
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + params.norm_epsilon.powi(2)).sqrt();
            values.extend(block.iter().map(|v| v / norm));
        }
    }
    debug_assert_eq!(values.len(), layout.len());
    Ok(FeatureVector { values, layout })
}

/// Concatenates the 96 quarter descriptors of one day in quarter order.
pub fn stack_daily(day: NaiveDate, features: &[FeatureVector]) -> Result<DailyFeatureVector, HogError> {
    if features.len() != QUARTERS_PER_DAY {
        return Err(HogError::Shape(format!("expected {QUARTERS_PER_DAY} quarter vectors, got {}", features.len())));
    }
    let len = features[0].values.len();
    if let Some((q, _)) = features.iter().enumerate().find(|(_, f)| f.values.len() != len) {
        return Err(HogError::Shape(format!("quarter {q} has a different descriptor length")));
    }
    let mut values = Vec::with_capacity(len * QUARTERS_PER_DAY);
    for f in features {
        values.extend_from_slice(&f.values);
    }
    Ok(DailyFeatureVector { day, values })
}

/// Descriptors for every day, frames processed in parallel.
pub fn daily_features(days: &[StandardizedDay], params: &HogParams) -> Result<Vec<DailyFeatureVector>, HogError> {
    days.par_iter()
        .map(|d| {
            let per_q = d.frames.iter().map(|f| hog(f, params)).collect::<Result<Vec<_>, _>>()?;
            stack_daily(d.date, &per_q)
        })
        .collect()
}
