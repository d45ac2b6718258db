#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_particle::models::Model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = Model::from_json_str(text) {
        let _ = model.kind();
    }
});
