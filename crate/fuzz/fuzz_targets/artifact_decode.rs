#![no_main]

use itergp::artifact::ModelArtifact;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = ModelArtifact::decode(data) else {
        return;
    };
    let bytes = model.encode().unwrap();
    assert_eq!(ModelArtifact::decode(&bytes).unwrap(), model);
    let _ = model.posterior();
});
