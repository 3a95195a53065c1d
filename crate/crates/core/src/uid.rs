//! Universal Image Distance: `d**` between the raster-scan grayscale strings
//! of two images. The two images may have different sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{linearize, to_grayscale, RgbImage};
use crate::strdist::{joint_complexity, normalized_distance, ComplexityCachedString};

/// A UID value together with the three complexities it was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UidValue {
    pub value: f64,
    pub left_complexity: usize,
    pub right_complexity: usize,
    pub joint_complexity: usize,
}

impl UidValue {
    pub fn from_complexities(left: usize, right: usize, joint: usize) -> Self {
        Self {
            value: normalized_distance(joint, left, right),
            left_complexity: left,
            right_complexity: right,
            joint_complexity: joint,
        }
    }

    /// Recompute the value from the stored complexities.
    pub fn recompute(&self) -> f64 {
        normalized_distance(self.joint_complexity, self.left_complexity, self.right_complexity)
    }
}

/// The string an image contributes to a UID computation.
pub fn image_string(img: &RgbImage) -> ComplexityCachedString {
    ComplexityCachedString::new(linearize(&to_grayscale(img)))
}

/// `UID(I, J)`; the concatenation order is `X(I) · X(J)`.
pub fn uid(i: &RgbImage, j: &RgbImage) -> Result<UidValue> {
    uid_cached(&image_string(i), &image_string(j))
}

/// UID from precomputed strings; only the concatenation is parsed.
pub fn uid_cached(a: &ComplexityCachedString, b: &ComplexityCachedString) -> Result<UidValue> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyImage);
    }
    let joint = joint_complexity(a.string().as_slice(), b.string().as_slice());
    Ok(UidValue::from_complexities(a.complexity(), b.complexity(), joint))
}
