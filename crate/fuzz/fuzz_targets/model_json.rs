#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::generator::DiffusionModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = DiffusionModel::from_json(text) {
        let _ = model.sample_with_steps(2, 0, 2);
    }
});
