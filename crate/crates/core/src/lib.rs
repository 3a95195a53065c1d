//! Universal Image Distance: LZ76 complexity, the normalized `d**` string
//! distance, image stringification, prototype clustering, feature vectors
//! and small learners, plus an on-disk project store.

pub mod complexity;
pub mod dataset;
pub mod error;
pub mod features;
pub mod imaging;
pub mod learn;
pub mod project;
pub mod prototypes;
pub mod strdist;
pub mod synth;
pub mod uid;

pub use complexity::{exhaustive_history, lz76_complexity, ExhaustiveHistory, SymbolString};
pub use dataset::{Dataset, DatasetRow, ExportFormat};
pub use error::{Error, Result};
pub use features::{extract, feature_vector, feature_vector_rgb, ComplexityLookup, Extraction, FeatureVector, NoCache};
pub use imaging::{decode_image, to_grayscale, Edge, GrayImage, PixelRect, RgbImage};
pub use learn::{classify_image, cross_validate, kmeans, Algorithm, ClusterReport, CvReport, TrainedClassifier};
pub use project::Project;
pub use prototypes::{
    cut_clusters, distance_matrix, hierarchical_cluster, purity_check, Dendrogram, DistanceMatrix, Linkage,
    Prototype, PrototypeSet, PurityReport,
};
pub use strdist::{d_star_star, ComplexityCachedString};
pub use uid::{uid, UidValue};
