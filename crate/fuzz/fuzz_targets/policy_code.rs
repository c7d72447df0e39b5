#![no_main]

use itergp::PolicyKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|code: &str| {
    let Ok(kind) = code.parse::<PolicyKind>() else {
        return;
    };
    let printed = kind.to_string();
    assert_eq!(printed.parse::<PolicyKind>().unwrap(), kind, "{printed}");
});
