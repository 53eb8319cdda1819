#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(recs) = gaussbox_cli::parse_detections(text) {
            // Accepted records must survive a round trip unchanged.
            let again: String = recs.iter().map(|r| r.to_json_line() + "\n").collect();
            assert_eq!(gaussbox_cli::parse_detections(&again).unwrap(), recs);
        }
    }
});
