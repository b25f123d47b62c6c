#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = msa_core::harness::parse_manifest(data) {
        let mut out = Vec::new();
        msa_core::harness::write_manifest(&mut out, &records).unwrap();
        assert_eq!(
            msa_core::harness::parse_manifest(out.as_slice()).unwrap(),
            records
        );
    }
});
