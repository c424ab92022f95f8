#![no_main]
use irsp_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        let again = parse_config(&cfg.to_toml()).expect("accepted configs round-trip");
        assert_eq!(again.fingerprint(), cfg.fingerprint());
    }
});
