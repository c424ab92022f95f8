#![no_main]
use irsp::inference::parse_actions_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = parse_actions_csv(text) {
        assert!(rec.actions.iter().all(|row| row.len() == rec.n_agents && row.iter().all(|&x| x <= 1)));
        assert_eq!(parse_actions_csv(&rec.to_csv()).unwrap(), rec);
    }
});
