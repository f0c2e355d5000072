#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::Condition;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Condition::parse(src) {
        let shown = c.to_string();
        let again = Condition::parse(&shown).expect("rendered condition parses");
        assert_eq!(again.to_string(), shown);
    }
});
