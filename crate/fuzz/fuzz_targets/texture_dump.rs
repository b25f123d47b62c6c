#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tex) = msa_core::normalization::decode_texture_dump(data) {
        let again = msa_core::normalization::encode_texture_dump(&tex);
        assert_eq!(
            msa_core::normalization::decode_texture_dump(&again).unwrap(),
            tex
        );
    }
});
