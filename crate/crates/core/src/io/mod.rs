//! File formats.

pub mod dump;

pub use dump::{parse_dump, parse_dump_file, write_dump, write_dump_file, Dataset, DumpStats, ParseMode, DUMP_VERSION};
