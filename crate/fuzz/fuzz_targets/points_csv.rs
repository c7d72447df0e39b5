#![no_main]

use itergp::data::{parse_points_csv, write_points_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(points) = parse_points_csv(data) else {
        return;
    };
    assert!(points.iter().all(|v| v.is_finite()));
    let mut buf = Vec::new();
    write_points_csv(&points, &mut buf).unwrap();
    assert_eq!(parse_points_csv(buf.as_slice()).unwrap(), points);
});
