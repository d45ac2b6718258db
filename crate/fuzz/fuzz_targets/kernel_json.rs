#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_particle::kernel::validate;
use qsd_particle::SubstochasticMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SubstochasticMatrix::from_json_str(text) {
        assert!(validate(&m.rows()).is_valid());
        for i in 0..m.size() {
            assert!(m.survival(i) > 0.0 && m.absorption(i) >= 0.0);
        }
    }
});
