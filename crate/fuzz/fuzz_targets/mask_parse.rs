#![no_main]
use libfuzzer_sys::fuzz_target;
use tasksel::mask::SubsetMask;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = text.parse::<SubsetMask>() {
        assert_eq!(m.to_string().parse::<SubsetMask>().unwrap(), m);
        assert!(SubsetMask::parse_len(text, m.len()).is_ok());
        if m.len() <= 64 {
            assert_eq!(SubsetMask::from_index(m.index(), m.len()), m);
        }
    }
});
