mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use proptest::prelude::*;
use railgate_server::AppState;

fn body() -> impl Strategy<Value = String> {
    let field = prop_oneof![
        Just("\"topical\"".to_string()),
        Just("\"jailbreak\"".to_string()),
        Just("\"\"".to_string()),
        Just("null".to_string()),
        Just("7".to_string()),
        "\"[a-zA-Z !?]{0,12}\"",
    ];
    prop_oneof![
        (field.clone(), field.clone(), field, any::<bool>()).prop_map(|(c, m, s, t)| {
            format!(r#"{{"config_id": {c}, "message": {m}, "session_id": {s}, "trace": {t}}}"#)
        }),
        "[{}\":, a-z0-9]{0,40}",
    ]
}

fn rt() -> &'static tokio::runtime::Runtime {
    static RT: std::sync::OnceLock<tokio::runtime::Runtime> = std::sync::OnceLock::new();
    RT.get_or_init(|| tokio::runtime::Runtime::new().unwrap())
}

fn state() -> &'static Arc<AppState> {
    static STATE: std::sync::OnceLock<Arc<AppState>> = std::sync::OnceLock::new();
    STATE.get_or_init(|| app_state(all_apps()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_body_gets_a_well_formed_answer(body in body()) {
        let app = router_for(state());
        let (status, json) = rt().block_on(send(&app, "POST", "/v1/chat", &body));
        prop_assert!(!status.is_server_error(), "{body} -> {status}");
        if status == StatusCode::OK {
            prop_assert!(schema_errors("chat_response", &json).is_empty(), "{json}");
        } else {
            prop_assert!(status.is_client_error());
            prop_assert!(schema_errors("error", &json).is_empty(), "{json}");
        }
    }
}
