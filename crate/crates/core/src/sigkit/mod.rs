//! Truncated signatures and log-signatures of piecewise-linear paths.
//!
//! Flattened feature layout is level-major and row-major within a level.
//! Signature features include the leading constant 1; log-signature features
//! start at level 1 and are stored in full tensor coordinates.

pub mod path;
pub mod tensor;

pub use path::{
    feature_dim, features, logsig_dim, path_signature, path_signature_by_products, sig_dim, AugPath, FeatureKind, FeatureSpec,
    SignatureStream,
};
pub use tensor::TruncatedTensor;
