#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scores) = msa_core::classifier::parse_scores(data) {
        let mut out = Vec::new();
        msa_core::classifier::write_scores(&mut out, &scores).unwrap();
        assert_eq!(
            msa_core::classifier::parse_scores(out.as_slice()).unwrap(),
            scores
        );
    }
});
