//! Supervised and unsupervised learning over feature-vector datasets, and
//! the composed image classifier `F(I) = C(v(I))`.

mod classifier;
mod cv;
mod kmeans;

pub use classifier::{train, Algorithm, TrainedClassifier, VARIANCE_FLOOR};
pub use cv::{cross_validate, paired_t_test, stratified_folds, CvReport, FoldResult, Verdict, ALPHA};
pub use kmeans::{adjusted_rand_index, kmeans, ClusterReport, MAX_ITERATIONS};

use crate::error::{Error, Result};
use crate::features::feature_vector_rgb;
use crate::imaging::RgbImage;
use crate::prototypes::PrototypeSet;

/// Classify an image by extracting its feature vector and applying `c`.
pub fn classify_image(img: &RgbImage, ps: &PrototypeSet, c: &TrainedClassifier) -> Result<String> {
    if c.dimension != ps.num_categories() {
        return Err(Error::DimensionMismatch {
            expected: c.dimension,
            actual: ps.num_categories(),
        });
    }
    let v = feature_vector_rgb(img, ps)?;
    c.predict(&v.values).map(str::to_string)
}
