use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use cluster_shapley_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const BIN: &str = env!("CARGO_BIN_EXE_cluster-shapley");
const IRIS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/iris.csv");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn explain_iris(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["explain", "--input", IRIS, "--label-column", "species", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = cli(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn explain_then_verify_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let art = explain_iris(dir.path(), "a.json", &[]);
    let o = cli(&["verify", "--artifact", art.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok "));
    assert!(stderr(&o).contains("elapsed: "));
}

#[test]
fn report_lists_petal_length_first() {
    let dir = tempfile::tempdir().unwrap();
    let art = explain_iris(dir.path(), "a.json", &[]);
    let o = cli(&["report", "--artifact", art.to_str().unwrap(), "--cluster", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let first = text.lines().find(|l| l.trim_start().starts_with("1.")).unwrap();
    assert!(first.contains("petal length"), "{text}");
    assert!(text.contains("heatmap rows: "));
    let view: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.cluster0.json")).unwrap()).unwrap();
    assert_eq!(view["cluster"], 0);
    assert_eq!(view["ranking"][0], 2);

    let o = cli(&["report", "--artifact", art.to_str().unwrap(), "--cluster", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("BadCluster"));
}

#[test]
fn unknown_flag_exits_with_usage() {
    let o = cli(&["explain", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn domain_errors_exit_one_with_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let cases: [(&[&str], &str); 4] = [
        (&["explain", "--input", "/no/such.csv", "--out", "x"], "MissingFile"),
        (&["explain", "--input", IRIS, "--out", "x"], "ParseError"),
        (&["explain", "--input", IRIS, "--label-column", "species", "--fraction", "1.5", "--out", out.to_str().unwrap()], "BadFraction"),
        (&["annotate", "--input", IRIS, "--label-column", "species", "--method", "manual", "--output", out.to_str().unwrap()], "MissingPolygons"),
    ];
    for (args, name) in cases {
        let o = cli(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).contains(&format!("error: {name}")), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_rejects_tampered_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let art = explain_iris(dir.path(), "a.json", &[]);
    let mut v: Value = serde_json::from_slice(&std::fs::read(&art).unwrap()).unwrap();
    let x = v["explanation"]["shap_values"][0][0][0].as_f64().unwrap();
    v["explanation"]["shap_values"][0][0][0] = (x + 0.5).into();
    std::fs::write(&art, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    let o = cli(&["verify", "--artifact", art.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("InvariantViolation"), "{}", stderr(&o));
    assert!(stderr(&o).contains("local_accuracy"), "{}", stderr(&o));
}

#[test]
fn embed_annotate_explain_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (emb, asg, art) = (p("e.csv"), p("a.json"), p("x.json"));
    let o = cli(&["embed", "--input", IRIS, "--label-column", "species", "--output", &emb]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cli(&["embed", "--input", IRIS, "--label-column", "species", "--method", "file", "--coords", &emb, "--output", &p("e2.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&emb).unwrap(), std::fs::read(p("e2.csv")).unwrap());

    for (method, extra) in [("kmeans", vec!["--k", "3"]), ("agglomerative", vec!["--k", "3", "--linkage", "ward"])] {
        let mut args = vec!["annotate", "--input", IRIS, "--label-column", "species", "--embedding", &emb, "--method", method, "--output", &asg];
        args.extend(extra);
        let o = cli(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let a: Value = serde_json::from_slice(&std::fs::read(&asg).unwrap()).unwrap();
        assert_eq!(a["k"], 3);
        let o = cli(&["explain", "--input", IRIS, "--label-column", "species", "--embedding", &emb, "--assignment", &asg, "--standardize", "zscore", "--out", &art]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = cli(&["verify", "--artifact", &art]);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    let polygons = r#"[{"cluster_id": 0, "vertices": [[-10, -10], [0, -10], [0, 10], [-10, 10]]},
                      {"cluster_id": 1, "vertices": [[0, -10], [10, -10], [10, 10], [0, 10]]}]"#;
    std::fs::write(p("poly.json"), polygons).unwrap();
    let o = cli(&["annotate", "--input", IRIS, "--label-column", "species", "--embedding", &emb, "--method", "manual", "--polygons", &p("poly.json"), "--output", &asg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a: Value = serde_json::from_slice(&std::fs::read(&asg).unwrap()).unwrap();
    assert_eq!(a["method"], "manual");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = explain_iris(dir.path(), "a.json", &["--threads", "1", "--budget", "6"]);
    let b = explain_iris(dir.path(), "b.json", &["--threads", "4", "--budget", "6"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[tokio::test]
async fn service_and_cli_artifacts_match() {
    let dir = tempfile::tempdir().unwrap();
    let art = explain_iris(dir.path(), "cli.json", &[]);
    let cli_bytes = std::fs::read(art).unwrap();

    let store = dir.path().join("store");
    let app = router(AppState::new(ServiceConfig { artifact_dir: store, ..ServiceConfig::default() }).unwrap());
    let call = |method: &str, uri: String, body: Vec<u8>, json: bool| {
        let app = app.clone();
        let mut req = Request::builder().method(method).uri(uri);
        if json {
            req = req.header(header::CONTENT_TYPE, "application/json");
        }
        let req = req.body(Body::from(body)).unwrap();
        async move {
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
        }
    };
    let (s, b) = call("POST", "/datasets?label_column=species".into(), std::fs::read(IRIS).unwrap(), false).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = serde_json::from_slice::<Value>(&b).unwrap()["dataset_id"].as_str().unwrap().to_string();
    let (s, _) = call("POST", format!("/datasets/{id}/embedding"), br#"{"method":"pca"}"#.to_vec(), true).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call("POST", format!("/datasets/{id}/clusters"), br#"{"method":"labeled"}"#.to_vec(), true).await;
    assert_eq!(s, StatusCode::OK);
    let (s, b) = call("POST", format!("/datasets/{id}/explain"), b"{}".to_vec(), true).await;
    assert_eq!(s, StatusCode::OK);
    let eid = serde_json::from_slice::<Value>(&b).unwrap()["explanation_id"].as_str().unwrap().to_string();
    let (s, served) = call("GET", format!("/explanations/{eid}"), Vec::new(), false).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(served, cli_bytes);
}
