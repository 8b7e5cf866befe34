#![no_main]
use libfuzzer_sys::fuzz_target;
use tasksel::oracles::ReachGrid;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = ReachGrid::from_bytes(data) {
        assert_eq!(grid.to_bytes(), data);
    }
});
