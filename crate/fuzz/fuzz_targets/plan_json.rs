#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::compressor::CompressionPlan;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = CompressionPlan::from_json(text) {
        let _ = plan.compressed_metas();
    }
});
