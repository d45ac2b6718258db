#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_particle::cli::parse_particle_counts;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(counts) = parse_particle_counts(text) {
        assert!(!counts.0.is_empty());
        assert!(counts.0.windows(2).all(|w| w[0] < w[1]));
        assert!(counts.0[0] >= 2);
    }
});
