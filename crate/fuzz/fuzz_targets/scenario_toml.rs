#![no_main]
use libfuzzer_sys::fuzz_target;
use tasksel::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_toml_str(text) {
        // Whatever loads must survive a save/load round trip unchanged.
        let again = Scenario::from_toml_str(&s.to_toml_string()).expect("saved scenario reloads");
        assert_eq!(again, s);
    }
});
