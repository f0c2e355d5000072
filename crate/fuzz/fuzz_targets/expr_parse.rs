#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Expr::parse(src) {
        let shown = e.to_string();
        let again = Expr::parse(&shown).expect("rendered expression parses");
        assert_eq!(again.to_string(), shown);
    }
});
