#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(segs) = msa_core::segmentation::parse_segmentations(text) {
            let again = msa_core::segmentation::write_segmentations(&segs);
            assert_eq!(
                msa_core::segmentation::parse_segmentations(&again).unwrap(),
                segs
            );
        }
    }
});
