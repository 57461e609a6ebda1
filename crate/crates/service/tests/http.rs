use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use drape_core::demo;
use drape_core::pipeline::OutfitSpec;
use drape_service::{router, AppState, Config};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
    spec: Value,
}

fn config(dir: &Path) -> Config {
    let mut c = Config::new(dir);
    c.snapshot_dir = Some(dir.join("snapshots"));
    c
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = demo::write_outfit(dir.path()).unwrap();
    let spec = OutfitSpec::from_file(&spec_path).unwrap();
    let state = Arc::new(AppState::new(config(dir.path())).unwrap());
    Fixture {
        app: router(state.clone()),
        state,
        spec: serde_json::to_value(&spec).unwrap(),
        _dir: dir,
    }
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, body).await;
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

async fn create(f: &Fixture) -> Value {
    let (status, v) = json_call(&f.app, Method::POST, "/sessions", Some(f.spec.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

fn point_index(name: &str) -> usize {
    drape_core::default_schema().id_of(name).unwrap()
}

fn point(summary: &Value, garment: usize, name: &str) -> Value {
    summary["garments"][garment]["points"][point_index(name)].clone()
}

#[tokio::test]
async fn schema_and_templates_are_listed() {
    let f = fixture();
    let (status, v) = json_call(&f.app, Method::GET, "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["points"].as_array().unwrap().len(), 49);
    assert_eq!(v["points"][point_index("torso_center")]["name"], "torso_center");

    let (status, v) = json_call(&f.app, Method::GET, "/templates", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"front_tuck") && names.contains(&"open_wider"));
}

#[tokio::test]
async fn sessions_get_distinct_ids_and_unknown_ids_are_404() {
    let f = fixture();
    let a = create(&f).await;
    let b = create(&f).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["garments"].as_array().unwrap().len(), 3);
    assert_eq!(a["history_depth"], 0);

    let (status, v) = json_call(&f.app, Method::GET, &format!("/sessions/{}", a["id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, a);

    for uri in ["/sessions/nope", "/sessions/nope/render.png", "/images/abc.png"] {
        let (status, _) = send(&f.app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn render_links_serve_png() {
    let f = fixture();
    let s = create(&f).await;
    let id = s["id"].as_str().unwrap();
    let (status, direct) = send(&f.app, Method::GET, &format!("/sessions/{id}/render.png"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&direct[..8], b"\x89PNG\r\n\x1a\n");
    let (status, linked) = send(&f.app, Method::GET, s["render"]["draft"].as_str().unwrap(), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(linked, direct);
    let (status, layout) = send(&f.app, Method::GET, &format!("/sessions/{id}/layout.png"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_ne!(layout, direct);
}

#[tokio::test]
async fn undo_restores_points_and_render_exactly() {
    let f = fixture();
    let s = create(&f).await;
    let id = s["id"].as_str().unwrap();
    let patch = json!({ "changes": [
        { "point": "split_left_mid", "delta": [-0.02, 0.0] },
        { "point": point_index("split_right_mid"), "position": [0.7, 0.5] },
    ]});
    let uri = format!("/sessions/{id}/garments/2/points");
    let (status, v) = json_call(&f.app, Method::PATCH, &uri, Some(patch)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let edited = &v["session"];
    assert_eq!(edited["history_depth"], 1);
    assert_eq!(point(edited, 2, "split_right_mid"), json!([0.7, 0.5]));
    assert_ne!(edited["render"], s["render"]);
    // Garments the edit did not touch keep their points.
    assert_eq!(edited["garments"][0], s["garments"][0]);
    assert_eq!(edited["garments"][1], s["garments"][1]);

    let (status, v) = json_call(&f.app, Method::POST, &format!("/sessions/{id}/templates/open_wider"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["session"]["history_depth"], 2);

    for _ in 0..2 {
        let (status, _) = json_call(&f.app, Method::POST, &format!("/sessions/{id}/undo"), None).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, back) = json_call(&f.app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(back, s);

    let (status, v) = json_call(&f.app, Method::POST, &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
}

#[tokio::test]
async fn empty_patch_records_nothing_and_clamps_warn() {
    let f = fixture();
    let s = create(&f).await;
    let id = s["id"].as_str().unwrap();
    let uri = format!("/sessions/{id}/garments/0/points");
    let (status, v) = json_call(&f.app, Method::PATCH, &uri, Some(json!({ "changes": [] }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["session"], s);

    let (status, v) = json_call(
        &f.app,
        Method::PATCH,
        &uri,
        Some(json!({ "changes": [{ "point": "hem_center", "delta": [0.0, 2.0] }] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
    assert_eq!(point(&v["session"], 0, "hem_center")[1], 1.0);
}

#[tokio::test]
async fn bad_requests_are_rejected_without_side_effects() {
    let f = fixture();
    let s = create(&f).await;
    let id = s["id"].as_str().unwrap();

    let cases = [
        (Method::PATCH, "garments/0/points", json!({ "changes": [{ "point": "crotch", "delta": [0, 0] }] }), 422),
        (Method::PATCH, "garments/0/points", json!({ "changes": [{ "point": "no_such", "delta": [0, 0] }] }), 422),
        (Method::PATCH, "garments/0/points", json!({ "changes": [{ "point": "hem_center" }] }), 422),
        (Method::PATCH, "garments/0/points", json!({ "moves": [] }), 422),
        (Method::PATCH, "garments/7/points", json!({ "changes": [] }), 404),
        (Method::POST, "templates/no_such_template", json!({}), 404),
        (Method::POST, "templates/waist_up", json!({ "garment": 1 }), 409),
        (Method::POST, "templates/front_tuck", json!({}), 409),
        (Method::POST, "templates/waist_up", json!({ "garment": 5 }), 404),
    ];
    for (method, path, body, want) in cases {
        let uri = format!("/sessions/{id}/{path}");
        let (status, v) = json_call(&f.app, method, &uri, Some(body.clone())).await;
        assert_eq!(status.as_u16(), want, "{uri} {body}: {v}");
        assert!(v["message"].is_string(), "{v}");
    }
    let (_, after) = json_call(&f.app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(after, s);
}

#[tokio::test]
async fn invalid_outfits_report_stage_and_garment() {
    let f = fixture();
    let mut spec = f.spec.clone();
    spec["garments"][1]["asset"] = json!("garments/missing");
    let (status, v) = json_call(&f.app, Method::POST, "/sessions", Some(spec)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["stage"], "load");
    assert!(v["message"].as_str().unwrap().contains("missing"), "{v}");

    let mut spec = f.spec.clone();
    spec["person"]["image"] = json!("../person.png");
    let (status, _) = json_call(&f.app, Method::POST, "/sessions", Some(spec)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let mut spec = f.spec.clone();
    spec["garments"][0]["style"] = json!({ "tuck": "sideways" });
    let (status, v) = json_call(&f.app, Method::POST, "/sessions", Some(spec)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn front_tuck_pins_the_top_to_the_waistline() {
    let f = fixture();
    let mut spec = f.spec.clone();
    spec["templates"] = json!([]);
    let (status, s) = json_call(&f.app, Method::POST, "/sessions", Some(spec)).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = s["id"].as_str().unwrap();
    assert_ne!(point(&s, 1, "torso_center")[1], point(&s, 0, "waistline_center")[1]);

    let (status, v) = json_call(
        &f.app,
        Method::POST,
        &format!("/sessions/{id}/templates/front_tuck_skirt"),
        Some(json!({ "garment": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let after = &v["session"];
    assert_eq!(point(after, 1, "torso_center")[1], point(after, 0, "waistline_center")[1]);
    assert_eq!(v["applications"][0]["status"], "applied");
}

#[tokio::test]
async fn snapshots_replay_after_restart() {
    let f = fixture();
    let s = create(&f).await;
    let id = s["id"].as_str().unwrap().to_string();
    let untouched = create(&f).await;
    let steps = [
        (Method::POST, "templates/waist_down".to_string(), None),
        (
            Method::PATCH,
            "garments/1/points".to_string(),
            Some(json!({ "changes": [{ "point": "hem_left", "delta": [0.01, -0.02] }] })),
        ),
        (Method::POST, "templates/open".to_string(), Some(json!({ "garment": 2 }))),
        (Method::POST, "undo".to_string(), None),
        (Method::POST, "templates/open_wider".to_string(), None),
    ];
    for (method, path, body) in steps {
        let (status, v) = json_call(&f.app, method, &format!("/sessions/{id}/{path}"), body).await;
        assert_eq!(status, StatusCode::OK, "{path}: {v}");
    }
    let (_, live) = json_call(&f.app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(live["history_depth"], 3);
    assert_eq!(f.state.write_snapshots().unwrap(), 2);
    // Nothing changed since, so nothing is rewritten.
    assert_eq!(f.state.write_snapshots().unwrap(), 0);

    let restarted = Arc::new(AppState::new(f.state.config.clone()).unwrap());
    assert_eq!(restarted.restore_snapshots().unwrap(), 2);
    let app = router(restarted);
    let (_, back) = json_call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(back, live);
    let (_, other) = json_call(&app, Method::GET, &format!("/sessions/{}", untouched["id"].as_str().unwrap()), None).await;
    assert_eq!(other, untouched);

    let (status, fresh) = json_call(&app, Method::POST, "/sessions", Some(f.spec.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_ne!(fresh["id"], s["id"]);
    assert_ne!(fresh["id"], untouched["id"]);
}

async fn run_edits(app: &Router, id: &str, edits: &[(Method, String, Option<Value>)]) -> Value {
    for (method, path, body) in edits {
        let (status, v) = json_call(app, method.clone(), &format!("/sessions/{id}/{path}"), body.clone()).await;
        assert_eq!(status, StatusCode::OK, "{path}: {v}");
    }
    json_call(app, Method::GET, &format!("/sessions/{id}"), None).await.1
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let f = fixture();
    let nudge = |name: &str, dx: f64| {
        Some(json!({ "changes": [{ "point": name, "delta": [dx, 0.0] }] }))
    };
    let a_edits = vec![
        (Method::PATCH, "garments/2/points".to_string(), nudge("split_left_mid", -0.02)),
        (Method::POST, "templates/waist_up".to_string(), None),
        (Method::PATCH, "garments/2/points".to_string(), nudge("split_right_mid", 0.02)),
    ];
    let b_edits = vec![
        (Method::POST, "templates/open_wider".to_string(), None),
        (Method::PATCH, "garments/0/points".to_string(), nudge("hem_left", -0.01)),
        (Method::POST, "undo".to_string(), None),
    ];
    let (a, b) = (create(&f).await, create(&f).await);
    let (a_id, b_id) = (a["id"].as_str().unwrap(), b["id"].as_str().unwrap());
    let (a_end, b_end) = tokio::join!(run_edits(&f.app, a_id, &a_edits), run_edits(&f.app, b_id, &b_edits));

    // The same sequences, one session at a time.
    let (a2, b2) = (create(&f).await, create(&f).await);
    let a_alone = run_edits(&f.app, a2["id"].as_str().unwrap(), &a_edits).await;
    let b_alone = run_edits(&f.app, b2["id"].as_str().unwrap(), &b_edits).await;
    for (got, want) in [(&a_end, &a_alone), (&b_end, &b_alone)] {
        assert_eq!(got["garments"], want["garments"]);
        assert_eq!(got["render"], want["render"]);
        assert_eq!(got["history_depth"], want["history_depth"]);
    }
    assert_ne!(a_end["garments"], b_end["garments"]);
}
