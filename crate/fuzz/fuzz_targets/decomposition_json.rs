#![no_main]

use ehi_core::dyadic::DyadicDecomposition;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dec) = DyadicDecomposition::from_json(data) {
        for k in dec.k_min..=dec.k_max() {
            let _ = dec.cubes(k);
        }
        let back = DyadicDecomposition::from_json(dec.to_json().as_bytes()).expect("serialized decomposition parses");
        assert_eq!(back, dec);
    }
});
