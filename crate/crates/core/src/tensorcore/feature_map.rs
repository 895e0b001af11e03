use crate::{Error, Result};

/// A `C×H×W` real grid, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    origin: [f64; 2],
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                format!(
                    "{channels}x{height}x{width} = {}",
                    channels * height * width
                ),
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {} at flat index {bad}",
                data[bad]
            )));
        }
        Ok(Self::from_parts(channels, height, width, data))
    }

    /// Builds a map from data the caller has already validated.
    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
            origin: Self::center(height, width),
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_parts(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    /// Builds a single-channel map from a function of the pixel's `[row, col]`
    /// offset from the center.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut([f64; 2]) -> f64,
    ) -> Result<Self> {
        let [or, oc] = Self::center(height, width);
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f([i as f64 - or, j as f64 - oc]));
            }
        }
        Self::new(1, height, width, data)
    }

    fn center(height: usize, width: usize) -> [f64; 2] {
        [(height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0]
    }

    pub fn with_origin(mut self, origin: [f64; 2]) -> Self {
        self.origin = origin;
        self
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }

    /// Pointwise map. Non-finite results are rejected.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
        .map(|m| m.with_origin(self.origin))
    }

    /// `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &FeatureMap, beta: f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::shape(self.shape_string(), other.shape_string()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.channels, self.height, self.width, data).map(|m| m.with_origin(self.origin))
    }

    /// Removes `margin` pixels from every border.
    pub fn crop(&self, margin: usize) -> Result<Self> {
        if 2 * margin >= self.height || 2 * margin >= self.width {
            return Err(Error::InvalidArgument(format!(
                "crop margin {margin} leaves nothing of a {}x{} map",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height - 2 * margin, self.width - 2 * margin);
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for i in margin..margin + h {
                let row = (c * self.height + i) * self.width;
                data.extend_from_slice(&self.data[row + margin..row + margin + w]);
            }
        }
        Ok(Self::from_parts(self.channels, h, w, data))
    }

    /// Embeds the map in a larger zero canvas, centered.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        if height < self.height || width < self.width {
            return Err(Error::InvalidArgument(format!(
                "cannot pad {}x{} down to {height}x{width}",
                self.height, self.width
            )));
        }
        let (top, left) = ((height - self.height) / 2, (width - self.width) / 2);
        let mut data = vec![0.0; self.channels * height * width];
        for c in 0..self.channels {
            for i in 0..self.height {
                let src = &self.data[(c * self.height + i) * self.width..][..self.width];
                let dst = (c * height + i + top) * width + left;
                data[dst..dst + self.width].copy_from_slice(src);
            }
        }
        Ok(Self::from_parts(self.channels, height, width, data))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add_scalar(&self, v: f64) -> Result<Self> {
        self.map(|x| x + v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(matches!(
            FeatureMap::new(1, 2, 2, vec![0.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            FeatureMap::new(1, 1, 2, vec![0.0, f64::NAN]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn default_origin_is_center() {
        let f = FeatureMap::zeros(1, 5, 8);
        assert_eq!(f.origin(), [2.0, 3.5]);
    }

    #[test]
    fn pad_then_crop_recovers_original() {
        let f = FeatureMap::new(2, 2, 2, vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let p = f.pad_to(6, 6).unwrap();
        assert_eq!(p.get(0, 2, 2), 1.0);
        assert_eq!(p.get(1, 3, 3), 8.0);
        assert_eq!(p.crop(2).unwrap(), f);
    }
}
