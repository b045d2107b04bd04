#![no_main]

use libfuzzer_sys::fuzz_target;
use shrinkdetect::detectors::{decode_snapshot, encode_snapshot, Detector};

fuzz_target!(|data: &[u8]| {
    let Ok(mut d) = decode_snapshot(data) else { return };
    let text = encode_snapshot(&d).expect("encode");
    decode_snapshot(text.as_bytes()).expect("re-decode");
    let p = d.model().p;
    for x in [0.0, 1.0, 3.0] {
        if d.step(&vec![x; p]).map(|s| s.alarmed).unwrap_or(true) {
            break;
        }
    }
});
