use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sigaudit_core::aggregation::{distribution, privacy_floor, DistributionQuery};
use sigaudit_core::api::{routes, PatchSource, QueryService};
use sigaudit_core::signal_model::{Dataset, Schema};
use sigaudit_core::synth::{generate_synthetic, SynthSpec};
use sigaudit_server::{router, router_with_state, AppState, ResponseCache};

const SPEC: &str = r#"
samples = 300
seed = 5

[images]
widths = [64]
heights = [64]

[[attributes]]
name = "nsfw"
generator = "probability"
alpha = 2.0
beta = 2.0

[[attributes]]
name = "scene"
generator = "categorical"
classes = ["indoor", "outdoor"]
weights = [0.6, 0.4]

[[individuals]]
count_weights = [0.3, 0.5, 0.2]
box_attribute = "face"

[[individuals.attributes]]
name = "face"
generator = "probability"
alpha = 5.0
beta = 1.0

[[individuals.attributes]]
name = "ita"
generator = "normal"
mean = 20.0
std = 25.0
"#;

fn dataset() -> Arc<Dataset> {
    let spec = SynthSpec::from_toml_str(SPEC).unwrap();
    Arc::new(generate_synthetic(&spec, Arc::new(Schema::builtin())).unwrap().dataset)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn distribution_matches_offline_recount() {
    let ds = dataset();
    let app = router(QueryService::with_defaults(ds.clone()), 16);
    let q = json!({"attribute": "nsfw_class", "thresholds": {"nsfw": 0.8}});
    let (status, got) = call(&app, "POST", routes::DISTRIBUTION, Some(q)).await;
    assert_eq!(status, StatusCode::OK);

    let mut offline = DistributionQuery::new("nsfw_class");
    offline.thresholds = BTreeMap::from([("nsfw".to_string(), 0.8)]);
    let want = privacy_floor(distribution(&ds, &offline).unwrap(), 5).unwrap();
    assert_eq!(got, serde_json::to_value(&want).unwrap());
    assert_eq!(got["query"]["thresholds"]["nsfw"], json!(0.8));
}

#[tokio::test]
async fn every_endpoint_answers() {
    let app = router(QueryService::with_defaults(dataset()), 16);
    let (s, info) = call(&app, "GET", routes::INFO, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["samples"], json!(300));
    assert_eq!(info["trusted"], json!(false));

    let (s, attrs) = call(&app, "GET", routes::ATTRIBUTES, None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = attrs["attributes"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"ita") && names.contains(&"nsfw_class"));

    let (s, sum) = call(&app, "GET", routes::SUMMARY, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sum["k"], json!(5));
    let (s, _) = call(&app, "POST", routes::SUMMARY, Some(json!({"thresholds": {"nsfw": 0.2}}))).await;
    assert_eq!(s, StatusCode::OK);

    let (s, b) = call(&app, "POST", routes::BOXPLOT, Some(json!({"attribute": "ita"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["unit"], json!("individual"));

    let pair = json!({"x": "scene", "y": "nsfw_class", "normalization": "row"});
    let (s, c) = call(&app, "POST", routes::COOCCURRENCE, Some(pair.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(c["query"]["normalization"], json!("row"));
    assert_eq!(c["query"]["filters"], json!([]));
    let (s, n) = call(&app, "POST", routes::NPMI, Some(pair)).await;
    assert_eq!(s, StatusCode::OK);
    assert!(n["npmi"].is_array());
}

#[tokio::test]
async fn structured_errors() {
    let app = router(QueryService::with_defaults(dataset()), 16);
    let (s, e) = call(&app, "POST", routes::DISTRIBUTION, Some(json!({"attribute": "skin"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], json!("unknown_attribute"));
    let valid = e["error"]["valid_attributes"].as_array().unwrap();
    assert!(valid.contains(&json!("ita")));

    let (s, e) = call(&app, "POST", routes::DISTRIBUTION, Some(json!({"attr": "ita"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], json!("invalid_query"));

    let q = json!({"attribute": "ita", "facets": ["scene", "scene", "scene", "scene"]});
    let (s, e) = call(&app, "POST", routes::DISTRIBUTION, Some(q)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], json!("invalid_query"));

    let (s, e) = call(&app, "GET", "/api/v1/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"]["code"], json!("not_found"));
}

#[tokio::test]
async fn patch_route_absent_outside_trusted_mode() {
    let app = router(QueryService::with_defaults(dataset()), 16);
    let (s, e) = call(&app, "POST", routes::PATCHES, Some(json!({"bin": 0}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"]["code"], json!("not_found"));
}

#[tokio::test]
async fn patch_route_in_trusted_mode() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset();
    for s in ds.samples() {
        image::RgbImage::from_pixel(64, 64, image::Rgb([190, 140, 110]))
            .save_with_format(dir.path().join(&s.sample_id), image::ImageFormat::Png)
            .unwrap();
    }
    let svc = QueryService::new(ds, None, 5, Some(PatchSource::new(dir.path()))).unwrap();
    let app = router(svc, 16);
    let (s, page) = call(&app, "POST", routes::PATCHES, Some(json!({"bin": 5}))).await;
    assert_eq!(s, StatusCode::OK, "{page}");
    let n = page["patches"].as_array().unwrap().len();
    assert!(n > 0 && n <= 36);
    assert!(page["failures"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn no_sample_ids_outside_trusted_mode() {
    let ds = dataset();
    let app = router(QueryService::with_defaults(ds.clone()), 16);
    let mut bodies = Vec::new();
    for (m, u, b) in [
        ("GET", routes::ATTRIBUTES, None),
        ("GET", routes::SUMMARY, None),
        ("POST", routes::DISTRIBUTION, Some(json!({"attribute": "ita", "facets": ["scene"]}))),
        ("POST", routes::BOXPLOT, Some(json!({"attribute": "face_relative_area"}))),
        ("POST", routes::COOCCURRENCE, Some(json!({"x": "scene", "y": "face_count"}))),
        ("POST", routes::NPMI, Some(json!({"x": "scene", "y": "scene"}))),
    ] {
        let (s, v) = call(&app, m, u, b).await;
        assert_eq!(s, StatusCode::OK, "{u}: {v}");
        bodies.push(v.to_string());
    }
    for s in ds.samples() {
        let quoted = format!("\"{}\"", s.sample_id);
        assert!(bodies.iter().all(|b| !b.contains(&quoted)), "{} leaked", s.sample_id);
    }
}

#[tokio::test]
async fn repeated_queries_hit_the_cache() {
    let state = Arc::new(AppState {
        service: QueryService::with_defaults(dataset()),
        cache: ResponseCache::new(8),
    });
    let app = router_with_state(state.clone(), false);
    let q = json!({"attribute": "scene"});
    let (_, a) = call(&app, "POST", routes::DISTRIBUTION, Some(q.clone())).await;
    assert_eq!(state.cache.len(), 1);
    let (_, b) = call(&app, "POST", routes::DISTRIBUTION, Some(q)).await;
    assert_eq!(state.cache.len(), 1);
    assert_eq!(a, b);
    call(&app, "POST", routes::DISTRIBUTION, Some(json!({"attribute": "nsfw"}))).await;
    assert_eq!(state.cache.len(), 2);
}
