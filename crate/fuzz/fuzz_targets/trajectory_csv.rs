#![no_main]
use libfuzzer_sys::fuzz_target;
use tasksel::report::parse_trajectory_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tr) = parse_trajectory_csv(text) {
        for row in &tr.rows {
            assert_eq!(row.h.len(), tr.ids.len());
            assert_eq!(row.lambda.len(), tr.ids.len());
        }
    }
});
