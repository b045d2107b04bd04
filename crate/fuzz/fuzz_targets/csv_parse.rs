#![no_main]

use libfuzzer_sys::fuzz_target;
use shrinkdetect::report::{parse_csv, CalibratedRow, CellRow, FixedThresholdRow};

fuzz_target!(|data: &[u8]| {
    let _ = parse_csv::<CellRow>(data);
    let _ = parse_csv::<FixedThresholdRow>(data);
    let _ = parse_csv::<CalibratedRow>(data);
});
