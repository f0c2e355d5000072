#![no_main]

use libfuzzer_sys::fuzz_target;
use tabkg::fixtures::{generate_fixture, FixtureSpec};
use tabkg::table::{metadata_of, read_table, Metadata};

fn metadata() -> &'static Metadata {
    static META: std::sync::OnceLock<Metadata> = std::sync::OnceLock::new();
    META.get_or_init(|| metadata_of(&generate_fixture(&FixtureSpec::new("mini-retail", 10, 0)).unwrap().table.metas()))
}

fuzz_target!(|data: &[u8]| {
    if let Ok((table, _)) = read_table(data, metadata()) {
        let text = table.to_csv_string();
        let (again, _) = read_table(text.as_bytes(), metadata()).expect("written table reads back");
        assert_eq!(again.n_rows(), table.n_rows());
    }
});
