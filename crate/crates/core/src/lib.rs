//! Parallel corpus toolkit: XCES parsing, bitext formats, catalog access,
//! filtering, sampling pipelines and a translation-serving protocol.

pub mod catalog;
pub mod error;
pub mod filters;
pub mod formats;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod serve;
pub mod text;
pub mod xces;

pub use error::{Error, Result};
pub use model::{AlignedUnit, Bitext, LanguagePairKey, LanguageTag, SamplingSpec, Segment};
