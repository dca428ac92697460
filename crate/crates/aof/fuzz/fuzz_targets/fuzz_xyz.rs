#![no_main]

use libfuzzer_sys::fuzz_target;
use std::path::Path;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // Must never panic; parse errors are the expected outcome.
        let _ = aof::pointcloud::parse_xyz(text, Path::new("fuzz"));
    }
});
