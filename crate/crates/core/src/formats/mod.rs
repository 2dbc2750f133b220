//! Moses-style plain text bitexts and TMX translation memories.
//!
//! Both writers drop empty links; the TMX writer additionally drops repeated
//! (source, target) pairs. The returned counts account for every input unit.

pub mod moses;
pub mod tmx;

pub use moses::{read_moses, read_moses_tsv, write_moses, write_moses_tsv, MosesCounts};
pub use tmx::{read_tmx, validate_tmx14, write_tmx, TmxCounts};
