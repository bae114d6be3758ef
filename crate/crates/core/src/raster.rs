//! Real-valued images on a uniform pixel grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a raster's values mean. Only intensities carry a sign constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterKind {
    Intensity,
    ProjectedDensity,
    Generic,
}

impl RasterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RasterKind::Intensity => "intensity",
            RasterKind::ProjectedDensity => "projected_density",
            RasterKind::Generic => "generic",
        }
    }
}

/// An immutable row-major image with physical pixel pitch in meters.
///
/// Values are shared behind an `Arc`, so clones are cheap and rasters can be
/// handed to worker threads freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster2D {
    width: usize,
    height: usize,
    pitch_x: f64,
    pitch_y: f64,
    kind: RasterKind,
    values: Arc<[f64]>,
}

impl Raster2D {
    pub fn new(
        width: usize,
        height: usize,
        pitch_x: f64,
        pitch_y: f64,
        kind: RasterKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invariant(
                "raster shape",
                format!("{width}x{height} has a zero dimension"),
            ));
        }
        check_pitch("pitch_x", pitch_x)?;
        check_pitch("pitch_y", pitch_y)?;
        if values.len() != width * height {
            return Err(Error::invariant(
                "raster values",
                format!("expected {} values, got {}", width * height, values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(
                "raster values",
                format!("non-finite value at index {i}"),
            ));
        }
        if kind == RasterKind::Intensity {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::invariant(
                    "raster values",
                    format!("negative intensity {:e} at index {i}", values[i]),
                ));
            }
        }
        Ok(Self {
            width,
            height,
            pitch_x,
            pitch_y,
            kind,
            values: values.into(),
        })
    }

    /// A raster with every pixel set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        pitch: f64,
        kind: RasterKind,
        value: f64,
    ) -> Result<Self> {
        Self::new(width, height, pitch, pitch, kind, vec![value; width * height])
    }

    /// Build a raster by evaluating `f(x, y)` at each pixel index.
    pub fn from_fn(
        width: usize,
        height: usize,
        pitch: f64,
        kind: RasterKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, pitch, pitch, kind, values)
    }

    /// A new raster on the same grid with different values and kind.
    pub fn with_values(&self, kind: RasterKind, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.pitch_x,
            self.pitch_y,
            kind,
            values,
        )
    }

    /// Apply `f` to every pixel, keeping the grid.
    pub fn map(&self, kind: RasterKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(kind, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Same values, relabelled. Fails if the values violate the new kind.
    pub fn relabel(&self, kind: RasterKind) -> Result<Self> {
        if kind == self.kind {
            return Ok(self.clone());
        }
        self.with_values(kind, self.values.to_vec())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch_x(&self) -> f64 {
        self.pitch_x
    }

    pub fn pitch_y(&self) -> f64 {
        self.pitch_y
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, other: &Raster2D) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pitch_x == other.pitch_x
            && self.pitch_y == other.pitch_y
    }

    pub(crate) fn ensure_same_grid(&self, other: &Raster2D, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} @ ({:e}, {:e}) vs {}x{} @ ({:e}, {:e})",
                self.width,
                self.height,
                self.pitch_x,
                self.pitch_y,
                other.width,
                other.height,
                other.pitch_x,
                other.pitch_y
            )))
        }
    }
}

fn check_pitch(field: &'static str, pitch: f64) -> Result<()> {
    if pitch.is_finite() && pitch > 0.0 {
        Ok(())
    } else {
        Err(Error::invariant(field, format!("{pitch} must be positive")))
    }
}

/// A rectangular region of interest with inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    /// Validates ordering and the two-sample minimum. Bounds against a host
    /// raster are checked by [`Roi::check_within`].
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x1 < x0 || y1 < y0 {
            return Err(Error::invariant(
                "roi",
                format!("bounds ({x0},{y0})-({x1},{y1}) are reversed"),
            ));
        }
        let roi = Self { x0, y0, x1, y1 };
        if roi.area() < 2 {
            return Err(Error::invariant("roi", "area must be at least 2 pixels"));
        }
        Ok(roi)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }

    pub fn check_within(&self, raster: &Raster2D) -> Result<()> {
        if self.x1 < self.x0 || self.y1 < self.y0 {
            return Err(Error::invariant("roi", "bounds are reversed"));
        }
        if self.x1 >= raster.width() || self.y1 >= raster.height() {
            return Err(Error::invariant(
                "roi",
                format!(
                    "({},{})-({},{}) exceeds {}x{} raster",
                    self.x0,
                    self.y0,
                    self.x1,
                    self.y1,
                    raster.width(),
                    raster.height()
                ),
            ));
        }
        if self.area() < 2 {
            return Err(Error::invariant("roi", "area must be at least 2 pixels"));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &Roi) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    /// Iterate over the ROI's pixel values in row-major order.
    pub fn values<'a>(&'a self, raster: &'a Raster2D) -> impl Iterator<Item = f64> + 'a {
        (self.y0..=self.y1).flat_map(move |y| raster.row(y)[self.x0..=self.x1].iter().copied())
    }
}
