#![no_main]

use ehi_core::vk::{audit_ledger, Ledger};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ledger) = Ledger::from_json(data) {
        let _ = audit_ledger(&ledger);
        let back = Ledger::from_json(ledger.to_json().as_bytes()).expect("serialized ledger parses");
        assert_eq!(back, ledger);
    }
});
