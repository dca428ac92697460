#![no_main]

use libfuzzer_sys::fuzz_target;
use std::path::Path;

fuzz_target!(|data: &[u8]| {
    let _ = aof::model::parse_model(data, Path::new("fuzz"));
});
