#![no_main]

use std::sync::OnceLock;

use hostguard::gateway::{Gateway, GatewayPolicy, HttpRequestRecord, Mode, RequestIds};
use hostguard::signatures::SignatureSet;
use libfuzzer_sys::fuzz_target;

fn gateway() -> &'static Gateway {
    static GW: OnceLock<Gateway> = OnceLock::new();
    GW.get_or_init(|| {
        Gateway::new(GatewayPolicy::default(), SignatureSet::seed(), Mode::Production)
            .expect("default policy")
            .with_request_ids(RequestIds::sequence(0))
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(rec) = serde_json::from_slice::<HttpRequestRecord>(data) {
        let v = gateway().evaluate(&rec);
        let _ = v.to_json_line();
        let _ = hostguard::gateway::render_warning(&v);
    }
});
