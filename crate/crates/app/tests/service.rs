//! HTTP service behaviour against an in-process server.

mod common;

use std::net::SocketAddr;
use std::sync::Arc;

use bridge_vae::dataset::{label_dictionary, render_bridge, BridgeRenderSpec, CanvasSize, Subtype};
use bridge_vae::Image;
use bridge_vae_app::service::{router, AppState, ServiceConfig, DEFAULT_MAX_BODY_BYTES};
use bridge_vae_app::Model;
use reqwest::StatusCode;
use serde_json::{json, Value};

use common::{fixture, fixture_with_seed, png_size, Fixture};

fn config(f: &Fixture, centroids: bool) -> ServiceConfig {
    ServiceConfig {
        checkpoint: f.checkpoint.clone(),
        addr: "127.0.0.1:0".parse().unwrap(),
        centroids: centroids.then(|| f.centroids.clone()),
        max_body_bytes: 64 * 1024,
    }
}

async fn start(config: &ServiceConfig) -> String {
    let state = Arc::new(AppState::load(config).unwrap());
    let listener = tokio::net::TcpListener::bind(config.addr).await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let app = router(state, config.max_body_bytes);
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

async fn post_json(url: &str, body: Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(url)
        .json(&body)
        .send()
        .await
        .unwrap()
}

async fn error_field(resp: reqwest::Response) -> Option<String> {
    let body: Value = resp.json().await.unwrap();
    assert!(body["error"].is_string());
    body["field"].as_str().map(str::to_string)
}

#[tokio::test]
async fn meta_describes_the_model() {
    let f = fixture();
    let base = start(&config(&f, false)).await;
    let meta: Value = reqwest::get(format!("{base}/meta"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(meta["latent_dim"], 8);
    assert_eq!(meta["image_width"], 256);
    assert_eq!(meta["image_height"], 64);
    assert_eq!(meta["checkpoint_id"], f.id.as_str());
    assert_eq!(
        meta["label_dictionary"],
        serde_json::to_value(label_dictionary()).unwrap()
    );
}

#[tokio::test]
async fn decode_is_deterministic_and_matches_the_shared_decoder() {
    let f = fixture();
    let base = start(&config(&f, false)).await;
    let z = [0.5, -1.0, 2.0, 0.0, 100.0, -100.0, 3.0, 0.25];
    let first = post_json(&format!("{base}/decode"), json!({ "z": z })).await;
    assert_eq!(first.status(), StatusCode::OK);
    assert_eq!(first.headers()["content-type"], "image/png");
    let first = first.bytes().await.unwrap();
    let second = post_json(&format!("{base}/decode"), json!({ "z": z }))
        .await
        .bytes()
        .await
        .unwrap();
    assert_eq!(first, second);
    assert_eq!(png_size(&first), (256, 64));
    let model = Model::load(&f.checkpoint).unwrap();
    assert_eq!(first.to_vec(), model.decode_png(&z).unwrap());
}

#[tokio::test]
async fn decode_rejects_bad_vectors() {
    let f = fixture();
    let base = start(&config(&f, false)).await;
    let url = format!("{base}/decode");

    let short = post_json(&url, json!({ "z": [1.0, 2.0] })).await;
    assert_eq!(short.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_field(short).await.as_deref(), Some("z"));

    let huge = reqwest::Client::new()
        .post(&url)
        .body(r#"{"z":[0,0,0,0,0,0,0,1e999]}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(huge.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_field(huge).await.as_deref(), Some("z"));

    let garbage = reqwest::Client::new()
        .post(&url)
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_bodies_are_refused() {
    let f = fixture();
    let base = start(&config(&f, false)).await;
    let body = vec![b' '; 100 * 1024];
    let resp = reqwest::Client::new()
        .post(format!("{base}/decode"))
        .body(body)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);
    assert!(DEFAULT_MAX_BODY_BYTES > 100 * 1024);
}

#[tokio::test]
async fn encode_returns_the_latent_distribution() {
    let f = fixture();
    let base = start(&config(&f, false)).await;
    let img =
        render_bridge(&BridgeRenderSpec::new(Subtype::BeamVType, 4, CanvasSize::DESK).unwrap())
            .unwrap();
    let png = img.to_png_bytes().unwrap();
    let resp = reqwest::Client::new()
        .post(format!("{base}/encode"))
        .body(png.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().await.unwrap();
    let z_mean: Vec<f64> = serde_json::from_value(body["z_mean"].clone()).unwrap();
    let z_log_var: Vec<f64> = serde_json::from_value(body["z_log_var"].clone()).unwrap();
    assert_eq!((z_mean.len(), z_log_var.len()), (8, 8));

    let model = Model::load(&f.checkpoint).unwrap();
    let enc = model
        .vae
        .encode(&Image::from_png_bytes(&png).unwrap().to_tensor())
        .unwrap();
    let expected: Vec<f64> = enc.z_mean.data().iter().map(|&v| v as f64).collect();
    assert_eq!(z_mean, expected);

    let wrong_size = Image::black(32, 32).to_png_bytes().unwrap();
    let resp = reqwest::Client::new()
        .post(format!("{base}/encode"))
        .body(wrong_size)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let resp = reqwest::Client::new()
        .post(format!("{base}/encode"))
        .body("nope")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn centroids_need_a_table() {
    let f = fixture();
    let without = start(&config(&f, false)).await;
    let resp = reqwest::get(format!("{without}/centroids")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);

    let with = start(&config(&f, true)).await;
    let table: Value = reqwest::get(format!("{with}/centroids"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let names: Vec<&String> = table.as_object().unwrap().keys().collect();
    assert_eq!(names, ["Arch Top_bear", "Cable Harp_shaped"]);
    assert_eq!(table["Arch Top_bear"].as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn morph_strip_by_name_and_vector() {
    let f = fixture();
    let base = start(&config(&f, true)).await;
    let url = format!("{base}/morph");

    let resp = post_json(
        &url,
        json!({ "a": "Arch Top_bear", "b": "Cable Harp_shaped", "steps": 5 }),
    )
    .await;
    assert_eq!(resp.status(), StatusCode::OK);
    let strip = resp.bytes().await.unwrap();
    assert_eq!(png_size(&strip), (5 * 257 + 1, 66));

    let resp = post_json(&url, json!({ "a": vec![0.0; 8], "b": "Arch Top_bear" })).await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(png_size(&resp.bytes().await.unwrap()).0, 11 * 257 + 1);

    let resp = post_json(&url, json!({ "a": "Beam V_type", "b": "Arch Top_bear" })).await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    let resp = post_json(&url, json!({ "a": "Bridge", "b": "Arch Top_bear" })).await;
    assert_eq!(error_field(resp).await.as_deref(), Some("a"));
    let resp = post_json(&url, json!({ "a": [1.0], "b": "Arch Top_bear" })).await;
    assert_eq!(error_field(resp).await.as_deref(), Some("a"));
    let resp = post_json(
        &url,
        json!({ "a": vec![0.0; 8], "b": vec![1.0; 8], "steps": 1 }),
    )
    .await;
    assert_eq!(error_field(resp).await.as_deref(), Some("steps"));
}

#[tokio::test]
async fn restarting_changes_no_response() {
    let f = fixture();
    let z = json!({ "z": [1.0, 2.0, 3.0, -4.0, 0.0, 0.5, -0.5, 9.0] });
    let a = start(&config(&f, true)).await;
    let b = start(&config(&f, true)).await;
    let da = post_json(&format!("{a}/decode"), z.clone())
        .await
        .bytes()
        .await
        .unwrap();
    let db = post_json(&format!("{b}/decode"), z)
        .await
        .bytes()
        .await
        .unwrap();
    assert_eq!(da, db);
    let ma: Value = reqwest::get(format!("{a}/meta"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let mb: Value = reqwest::get(format!("{b}/meta"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn startup_checks_the_files() {
    let f = fixture();
    let mut bad = config(&f, true);
    bad.checkpoint = f.dir.path().join("missing.ckpt");
    assert!(AppState::load(&bad).is_err());

    let other = fixture_with_seed(6);
    assert_ne!(other.id, f.id);
    let mut mismatched = config(&f, true);
    mismatched.centroids = Some(other.centroids.clone());
    let err = AppState::load(&mismatched)
        .err()
        .expect("centroids of another checkpoint");
    assert!(format!("{err:#}").contains("centroid table"), "{err:#}");
}
