#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use qsd_particle::cli::Cli;

// Splits the input on whitespace into an argument vector.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("qsd-particle").chain(text.split_whitespace());
    let _ = Cli::try_parse_from(args);
});
