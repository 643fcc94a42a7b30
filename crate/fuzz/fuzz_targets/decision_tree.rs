#![no_main]

use hostguard::monitor::{classify, DecisionTree, FEATURE_NAMES};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(tree) = serde_json::from_slice::<DecisionTree>(data) else { return };
    if tree.validate_for(FEATURE_NAMES.len()).is_ok() {
        // A valid tree classifies any full-length vector.
        classify(&tree, &[0.0; 8]).expect("validated tree classifies");
        let _ = tree.render();
    }
});
