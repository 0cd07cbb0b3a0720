use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use cluster_shapley::Artifact;
use cluster_shapley_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const IRIS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv");

fn app(dir: &std::path::Path) -> Router {
    let cfg = ServiceConfig { artifact_dir: dir.to_path_buf(), ..ServiceConfig::default() };
    router(AppState::new(cfg).unwrap())
}

async fn send(app: &Router, method: Method, uri: &str, body: Body, json: bool) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if json {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn post_json(app: &Router, uri: &str, v: Value) -> (StatusCode, Value) {
    let (s, b) = send(app, Method::POST, uri, Body::from(v.to_string()), true).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, Method::GET, uri, Body::empty(), false).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn upload_iris(app: &Router) -> String {
    let csv = std::fs::read(IRIS).unwrap();
    let (s, b) = send(app, Method::POST, "/datasets?label_column=species", Body::from(csv), false).await;
    assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&b));
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["n_rows"], 150);
    v["dataset_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (s, v) = get_json(&app(dir.path()), "/explanations").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));
}

#[tokio::test]
async fn manual_without_polygons_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_iris(&app).await;
    let (s, _) = post_json(&app, &format!("/datasets/{id}/embedding"), json!({"method": "pca"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = post_json(&app, &format!("/datasets/{id}/clusters"), json!({"method": "manual", "polygons": []})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "MissingPolygons");
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = get_json(&app, "/explanations/0123456789abcdef").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "NotFound");
    let (s, _) = post_json(&app, "/datasets/nope/clusters", json!({"method": "labeled"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get_json(&app, "/runs/run-404").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = upload_iris(&app).await;
    let (s, v) = post_json(&app, &format!("/datasets/{id}/explain"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "NotAnnotated");

    let (s, v) = post_json(&app, &format!("/datasets/{id}/clusters"), json!({"method": "spectral"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "BadRequest");

    let (s, v) = post_json(&app, &format!("/datasets/{id}/embedding"), json!({"method": "pca"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["coords"].as_array().unwrap().len(), 150);
    let (s, v) = post_json(&app, &format!("/datasets/{id}/clusters"), json!({"method": "kmeans", "k": 1})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "BadK");

    let (s, b) = send(&app, Method::POST, "/datasets", Body::from("a,b\n1,x\n"), false).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&b));
}

#[tokio::test]
async fn iris_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_iris(&app).await;

    let (s, _) = post_json(&app, &format!("/datasets/{id}/embedding"), json!({"method": "pca"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = post_json(&app, &format!("/datasets/{id}/clusters"), json!({"method": "labeled"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["k"], 3);
    assert_eq!(v["labels"].as_array().unwrap().len(), 150);

    let (s, v) = post_json(&app, &format!("/datasets/{id}/explain"), json!({"run_id": "r1"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let eid = v["explanation_id"].as_str().unwrap().to_string();
    assert_eq!(v["n_test"], 30);

    let (s, run) = get_json(&app, "/runs/r1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(run["state"], "finished");
    assert_eq!(run["done"], 30);
    assert_eq!(run["total"], 30);
    assert_eq!(run["explanation_id"], eid.as_str());

    // Served bytes equal the persisted file.
    let (s, served) = send(&app, Method::GET, &format!("/explanations/{eid}"), Body::empty(), false).await;
    assert_eq!(s, StatusCode::OK);
    let on_disk = std::fs::read(dir.path().join(format!("{eid}.json"))).unwrap();
    assert_eq!(served, on_disk);
    let artifact = Artifact::from_bytes(&served).unwrap();
    artifact.validate().unwrap();
    assert_eq!(artifact.id(), eid);

    let (s, view) = get_json(&app, &format!("/explanations/{eid}/cluster/0")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["cluster"], 0);
    assert_eq!(view["ranking"][0], 2);
    for key in ["histograms", "dot_plot", "kde", "importance"] {
        assert!(view.get(key).is_some(), "missing {key}");
    }
    let (s, _) = get_json(&app, &format!("/explanations/{eid}/cluster/3")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, list) = get_json(&app, "/explanations").await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["explanation_id"], eid.as_str());

    // Identical inputs give the same stored explanation.
    let (_, again) = post_json(&app, &format!("/datasets/{id}/explain"), json!({})).await;
    assert_eq!(again["explanation_id"], eid.as_str());
    let (_, d) = get_json(&app, &format!("/datasets/{id}")).await;
    assert_eq!(d["explanation_id"], eid.as_str());

    // A fresh service over the same directory serves the stored artifact.
    let reopened = self::app(dir.path());
    let (s, served2) = send(&reopened, Method::GET, &format!("/explanations/{eid}"), Body::empty(), false).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(served2, on_disk);
    let (s, _) = get_json(&reopened, &format!("/explanations/{eid}/cluster/2")).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn uploaded_embedding_and_lasso() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let csv = "a,b,c\n0,0,1\n0.1,0,1\n0,0.1,1\n5,5,0\n5.1,5,0\n5,5.1,0\n";
    let (s, b) = send(&app, Method::POST, "/datasets", Body::from(csv), false).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = serde_json::from_slice::<Value>(&b).unwrap()["dataset_id"].as_str().unwrap().to_string();

    let coords = "0,0\n0.1,0\n0,0.1\n5,5\n5.1,5\n5,5.1\n";
    let (s, b) = send(&app, Method::POST, &format!("/datasets/{id}/embedding"), Body::from(coords), false).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));

    let polygons = json!({"method": "manual", "polygons": [
        {"cluster_id": 0, "vertices": [[-1, -1], [1, -1], [1, 1], [-1, 1]]},
        {"cluster_id": 1, "vertices": [[4, 4], [6, 4], [6, 6], [4, 6]]}
    ]});
    let (s, v) = post_json(&app, &format!("/datasets/{id}/clusters"), polygons).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["labels"], json!([0, 0, 0, 1, 1, 1]));

    let (s, v) = post_json(&app, &format!("/datasets/{id}/explain"), json!({"fraction": 0.5, "seed": 3})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
}
