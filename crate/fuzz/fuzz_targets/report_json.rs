#![no_main]
use libfuzzer_sys::fuzz_target;
use tasksel::report::RunReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = RunReport::from_json(text);
});
