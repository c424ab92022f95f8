#![no_main]
use irsp::network::{parse_network_csv, spectral_decompose, validate_network};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(raw) = parse_network_csv(text) else { return };
    assert!(raw.is_square());
    if let Ok(net) = validate_network(raw) {
        // Valid networks re-serialize to the same matrix and always decompose or fail cleanly.
        assert_eq!(parse_network_csv(&net.to_csv()).unwrap(), *net.weights());
        let _ = spectral_decompose(&net);
    }
});
