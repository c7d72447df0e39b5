#![no_main]

use itergp::data::{parse_dataset_csv, write_dataset_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ds) = parse_dataset_csv(data) else {
        return;
    };
    // anything accepted must survive a write/parse cycle unchanged
    let mut buf = Vec::new();
    write_dataset_csv(&ds, &mut buf).unwrap();
    assert_eq!(parse_dataset_csv(buf.as_slice()).unwrap(), ds);
});
