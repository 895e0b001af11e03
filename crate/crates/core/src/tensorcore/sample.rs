use super::FeatureMap;

/// Bilinear stencil at a fractional pixel location.
///
/// `G(y, m) = g(y₁, m₁) g(y₂, m₂)` with `g(a, b) = max(0, 1 - |a - b|)`.
/// Grid points outside `height × width` get weight zero, so the stencil
/// implements zero padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpSample {
    pub location: [f64; 2],
    pub indices: [[i64; 2]; 4],
    pub weights: [f64; 4],
}

impl InterpSample {
    /// `location` is in absolute `[row, col]` pixel coordinates.
    pub fn new(location: [f64; 2], height: usize, width: usize) -> Self {
        let r0 = location[0].floor();
        let c0 = location[1].floor();
        let fr = location[0] - r0;
        let fc = location[1] - c0;
        let (r0, c0) = (r0 as i64, c0 as i64);
        let indices = [[r0, c0], [r0, c0 + 1], [r0 + 1, c0], [r0 + 1, c0 + 1]];
        let mut weights = [
            (1.0 - fr) * (1.0 - fc),
            (1.0 - fr) * fc,
            fr * (1.0 - fc),
            fr * fc,
        ];
        for (w, [r, c]) in weights.iter_mut().zip(indices) {
            if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
                *w = 0.0;
            }
        }
        Self {
            location,
            indices,
            weights,
        }
    }

    /// Flat `row * width + col` offsets; zero-weight taps (including every
    /// out-of-bounds one) map to 0.
    pub fn flat_indices(&self, width: usize) -> [usize; 4] {
        std::array::from_fn(|k| {
            let [r, c] = self.indices[k];
            if self.weights[k] == 0.0 || r < 0 || c < 0 {
                0
            } else {
                r as usize * width + c as usize
            }
        })
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.indices
            .iter()
            .all(|&[r, c]| r >= 0 && c >= 0 && r < height as i64 && c < width as i64)
    }

    /// Applies the stencil to one channel plane.
    #[inline]
    pub fn apply(&self, plane: &[f64], width: usize) -> f64 {
        let idx = self.flat_indices(width);
        let mut acc = 0.0;
        for k in 0..4 {
            if self.weights[k] != 0.0 {
                acc += self.weights[k] * plane[idx[k]];
            }
        }
        acc
    }
}

/// `Σ_m G(location, m) f(m)` for one channel, zero outside the grid.
pub fn bilinear_sample(f: &FeatureMap, channel: usize, location: [f64; 2]) -> f64 {
    InterpSample::new(location, f.height(), f.width()).apply(f.channel(channel), f.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> FeatureMap {
        FeatureMap::new(1, 3, 4, (0..12).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn integer_location_is_exact() {
        let f = ramp();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(bilinear_sample(&f, 0, [i as f64, j as f64]), f.get(0, i, j));
            }
        }
    }

    #[test]
    fn midpoint_between_zero_and_one() {
        let f = FeatureMap::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&f, 0, [0.0, 0.5]), 0.5);
    }

    #[test]
    fn outside_is_zero() {
        let f = ramp();
        assert_eq!(bilinear_sample(&f, 0, [-5.0, 1.0]), 0.0);
        assert_eq!(bilinear_sample(&f, 0, [1.0, 40.0]), 0.0);
        assert_eq!(bilinear_sample(&f, 0, [-1.0, -1.0]), 0.0);
    }

    #[test]
    fn partial_overlap_at_border_fades() {
        let f = FeatureMap::new(1, 1, 1, vec![2.0]).unwrap();
        assert!((bilinear_sample(&f, 0, [0.0, -0.25]) - 1.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn interior_weights_are_a_partition_of_unity(r in 0.0f64..9.0, c in 0.0f64..9.0) {
            let s = InterpSample::new([r, c], 10, 10);
            prop_assert!(s.in_bounds(10, 10));
            prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
