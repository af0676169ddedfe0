//! Mask pyramid: the cascade of average-pooling layers that mirrors the
//! generator encoder geometry, producing one soft mask per encoder depth.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::conv::{avg_pool2d_forward, ConvSpec};
use crate::tensor::Tensor;

/// Ordered (kernel, stride, padding) triples, one per coupled encoder block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidSpec {
    levels: Vec<(usize, usize, usize)>,
}

impl PyramidSpec {
    pub fn new(levels: Vec<(usize, usize, usize)>) -> Self {
        PyramidSpec { levels }
    }

    /// Derive the pyramid from encoder conv specs, layer by layer.
    pub fn from_conv_specs(specs: &[ConvSpec]) -> Self {
        PyramidSpec { levels: specs.iter().map(|s| (s.kernel, s.stride, s.padding)).collect() }
    }

    pub fn levels(&self) -> &[(usize, usize, usize)] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Spatial size after each level for an (h, w) input; errors name the
    /// first level that cannot be applied.
    pub fn level_sizes(&self, (h, w): (usize, usize)) -> Result<Vec<(usize, usize)>> {
        let mut sizes = Vec::with_capacity(self.levels.len());
        let (mut h, mut w) = (h, w);
        for (i, &(k, s, p)) in self.levels.iter().enumerate() {
            let spec = ConvSpec::new(1, 1, k, s, p);
            h = spec.out_extent(h).map_err(|e| Error::config(format!("pyramid level {i}: {e}")))?;
            w = spec.out_extent(w).map_err(|e| Error::config(format!("pyramid level {i}: {e}")))?;
            sizes.push((h, w));
        }
        Ok(sizes)
    }
}

/// Pool the mask through every level. Values stay in [0, 1]: each level is
/// the padded k^2-mean of the previous one (level 0 pools the mask itself).
/// Levels are real-valued, not re-binarized.
pub fn mask_pyramid(mask: &Mask, spec: &PyramidSpec) -> Result<Vec<Tensor>> {
    let mut levels = Vec::with_capacity(spec.len());
    let mut current = mask.to_f64();
    let (mut h, mut w) = (mask.height, mask.width);
    for (i, &(k, s, p)) in spec.levels().iter().enumerate() {
        let conv = ConvSpec::new(1, 1, k, s, p);
        let (oh, ow) = (
            conv.out_extent(h).map_err(|e| Error::config(format!("pyramid level {i}: {e}")))?,
            conv.out_extent(w).map_err(|e| Error::config(format!("pyramid level {i}: {e}")))?,
        );
        current = avg_pool2d_forward(&current, (1, 1, h, w), k, s, p)?;
        (h, w) = (oh, ow);
        levels.push(Tensor::from_vec(vec![1, 1, h, w], current.clone())?);
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskDomain;

    #[test]
    fn ones_mask_single_level_hand_computed() {
        let mask = Mask::full(64, 64, MaskDomain::Image);
        let spec = PyramidSpec::new(vec![(4, 2, 1)]);
        let levels = mask_pyramid(&mask, &spec).unwrap();
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].shape(), &[1, 1, 32, 32]);
        let data = levels[0].data();
        // corners see 9 of 16 padded cells
        assert_eq!(data[0], 9.0 / 16.0);
        assert_eq!(data[31], 9.0 / 16.0);
        assert_eq!(data[31 * 32], 9.0 / 16.0);
        assert_eq!(data[32 * 32 - 1], 9.0 / 16.0);
        // interior stays 1.0
        assert_eq!(data[5 * 32 + 7], 1.0);
    }

    #[test]
    fn empty_mask_all_levels_zero() {
        let mask = Mask::empty(64, 64, MaskDomain::Image);
        let spec = PyramidSpec::new(vec![(4, 2, 1); 4]);
        for level in mask_pyramid(&mask, &spec).unwrap() {
            assert!(level.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn values_stay_in_unit_interval() {
        let mut mask = Mask::empty(32, 32, MaskDomain::Image);
        for row in 4..20 {
            for col in 9..23 {
                mask.set(row, col, (row + col) as u8 % 2);
            }
        }
        let spec = PyramidSpec::new(vec![(4, 2, 1), (4, 2, 1), (4, 2, 1)]);
        for level in mask_pyramid(&mask, &spec).unwrap() {
            for &v in level.data() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn monotone_in_mask() {
        let mut small = Mask::empty(32, 32, MaskDomain::Image);
        for row in 10..16 {
            for col in 10..16 {
                small.set(row, col, 1);
            }
        }
        let mut large = small.clone();
        for row in 20..28 {
            for col in 4..12 {
                large.set(row, col, 1);
            }
        }
        let spec = PyramidSpec::new(vec![(4, 2, 1), (4, 2, 1)]);
        let p_small = mask_pyramid(&small, &spec).unwrap();
        let p_large = mask_pyramid(&large, &spec).unwrap();
        for (ls, ll) in p_small.iter().zip(&p_large) {
            for (a, b) in ls.data().iter().zip(ll.data()) {
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn incompatible_size_names_level() {
        let mask = Mask::full(6, 6, MaskDomain::Image);
        let spec = PyramidSpec::new(vec![(4, 2, 1), (4, 2, 1), (4, 2, 1)]);
        let err = mask_pyramid(&mask, &spec).unwrap_err();
        assert!(err.to_string().contains("level 2"), "{err}");
    }
}
