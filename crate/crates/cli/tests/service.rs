use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use uidkit_cli::service::{router, JobHandle, JobState};
use uidkit_core::project::{DendrogramReport, Project};
use uidkit_core::synth::{self, texture_image, Texture, CROP};
use uidkit_core::{cut_clusters, purity_check, Linkage, PixelRect, RgbImage};

struct Resp {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Resp {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn send(app: &Router, req: Request<Body>) -> Resp {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Resp { status, headers, body }
}

async fn get(app: &Router, uri: &str) -> Resp {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Resp {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

async fn delete(app: &Router, uri: &str) -> Resp {
    send(app, Request::builder().method(Method::DELETE).uri(uri).body(Body::empty()).unwrap()).await
}

/// Poll a job until it settles, checking that states only move forward.
async fn wait(app: &Router, job: &JobHandle) -> JobHandle {
    let rank = |s: JobState| match s {
        JobState::Queued => 0,
        JobState::Running => 1,
        JobState::Done | JobState::Failed => 2,
    };
    let start = Instant::now();
    let mut last = job.clone();
    loop {
        let h: JobHandle = serde_json::from_value(get(app, &format!("/jobs/{}", job.id)).await.json()).unwrap();
        assert!(rank(h.state) >= rank(last.state), "{:?} -> {:?}", last.state, h.state);
        assert!(h.progress >= last.progress && (0.0..=1.0).contains(&h.progress));
        last = h;
        if matches!(last.state, JobState::Done | JobState::Failed) {
            return last;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "job did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

async fn start(app: &Router, uri: &str, body: Value) -> JobHandle {
    let r = post(app, uri, body).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    serde_json::from_value(r.json()).unwrap()
}

fn planted_project(dir: &std::path::Path) -> (Project, Vec<String>) {
    let mut p = Project::open_or_init(dir).unwrap();
    let mut ids = Vec::new();
    for (i, t) in Texture::ALL.into_iter().enumerate() {
        let id = p.ingest_bytes(Some(t.name()), &texture_image(t, 180, 68, 1000 + i as u64).to_png().unwrap()).unwrap();
        p.add_category(t.name()).unwrap();
        for (l, top) in [(0, 0), (52, 20), (109, 41)] {
            p.add_prototype(t.name(), &id, PixelRect::new(l, top, CROP.0, CROP.1)).unwrap();
        }
        ids.push(id);
    }
    (p, ids)
}

/// The planted project plus small labeled mixtures of known textures.
fn labeled_project(dir: &std::path::Path, n: usize, size: (u32, u32)) -> Project {
    let (mut p, sources) = planted_project(dir);
    let mut labels = BTreeMap::new();
    for id in &sources {
        labels.insert(id.clone(), "source".to_string());
    }
    for i in 0..n {
        let (cols, rows) = size;
        let grid: Vec<Texture> = (0..cols * rows)
            .map(|c| if (c as usize + i).is_multiple_of(3) { Texture::Noise } else { Texture::ALL[(c as usize + i / 2) % 3] })
            .collect();
        let img: RgbImage = synth::compose(&grid, cols, rows, 77 + i as u64);
        let id = p.ingest_bytes(Some(&format!("m{i}.png")), &img.to_png().unwrap()).unwrap();
        labels.insert(id, if i % 2 == 0 { "even" } else { "odd" }.to_string());
    }
    p.set_labels("parity", &labels).unwrap();
    p
}

#[tokio::test]
async fn out_of_bounds_rect_names_edge() {
    let dir = tempfile::tempdir().unwrap();
    let (p, ids) = planted_project(dir.path());
    let app = router(p);
    let r = post(&app, "/prototypes", json!({ "source_id": ids[0], "category": "noise", "rect": { "left": 150, "top": 0, "width": 45, "height": 17 } })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let e = r.json();
    assert_eq!(e["error"]["kind"], "validation");
    assert_eq!(e["error"]["fields"][0]["field"], "rect.right");

    let r = post(&app, "/prototypes", json!({ "source_id": ids[0], "category": "noise", "rect": { "left": 0, "top": 60, "width": 45, "height": 17 } })).await;
    assert_eq!(r.json()["error"]["fields"][0]["field"], "rect.bottom");

    let r = post(&app, "/prototypes", json!({ "source_id": ids[0], "category": "noise", "rect": { "left": 0, "top": 0, "width": -3, "height": 17 } })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "rect.width");

    let r = post(&app, "/prototypes", json!({ "source_id": ids[0], "category": "sky", "rect": { "left": 0, "top": 0, "width": 4, "height": 4 } })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "category");
}

#[tokio::test]
async fn dendrogram_after_matrix_job_is_pure_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = planted_project(dir.path());
    let app = router(p);

    let r = get(&app, "/prototypes/dendrogram").await;
    assert_eq!(r.status, StatusCode::CONFLICT, "no matrix yet");

    let job = start(&app, "/prototypes/matrix", json!({})).await;
    let done = wait(&app, &job).await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.error);
    assert_eq!(done.result.as_deref(), Some("/prototypes/matrix"));
    assert_eq!(done.progress, 1.0);

    let report: DendrogramReport = serde_json::from_value(get(&app, "/prototypes/dendrogram?cut=4").await.json()).unwrap();
    assert!(report.purity.pure);
    let lib = Project::open(dir.path()).unwrap();
    let clusters = cut_clusters(&report.dendrogram, 4).unwrap();
    assert_eq!(report.purity, purity_check(&clusters, lib.prototypes()));
    assert_eq!(report, lib.dendrogram(Some(4), Linkage::Average).unwrap());

    let r = get(&app, "/prototypes/dendrogram?cut=99").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = get(&app, "/prototypes/dendrogram?linkage=ward").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "linkage");

    // Identical state gives byte-identical answers.
    assert_eq!(get(&app, "/prototypes/dendrogram?cut=4").await.body, get(&app, "/prototypes/dendrogram?cut=4").await.body);

    let m = get(&app, "/prototypes/matrix").await;
    assert_eq!(m.status, StatusCode::OK);
    assert_eq!(m.json()["matrix"]["labels"].as_array().unwrap().len(), 12);
    assert_eq!(delete(&app, "/prototypes/p1").await.status, StatusCode::NO_CONTENT);
    assert_eq!(get(&app, "/prototypes/matrix").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/prototypes/dendrogram").await.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn dataset_formats_and_negotiation() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(labeled_project(dir.path(), 4, (2, 2)));
    let job = start(&app, "/features/extract", json!({ "target": "parity" })).await;
    let done = wait(&app, &job).await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.error);
    let loc = done.result.unwrap();
    let id = loc.trim_start_matches("/datasets/").to_string();
    assert_eq!(get(&app, "/datasets").await.json()["datasets"], json!([id]));

    let arff = get(&app, &format!("{loc}?format=arff")).await;
    assert_eq!(arff.status, StatusCode::OK);
    assert!(arff.headers[header::CONTENT_TYPE].to_str().unwrap().starts_with("text/plain"));
    assert!(arff.headers[header::CONTENT_DISPOSITION].to_str().unwrap().contains(".arff"));
    let text = arff.text();
    let attrs: Vec<&str> = text.lines().filter(|l| l.to_ascii_lowercase().starts_with("@attribute")).collect();
    assert_eq!(attrs.len(), 5, "{text}");
    assert!(attrs[..4].iter().all(|a| a.to_ascii_uppercase().ends_with("NUMERIC")), "{attrs:?}");
    assert!(attrs[4].contains('{') && attrs[4].contains("even") && attrs[4].contains("odd"), "{}", attrs[4]);

    let lib = Project::open(dir.path()).unwrap().dataset(&id).unwrap();
    assert_eq!(text, lib.to_arff());
    let csv = send(&app, Request::get(&loc).header(header::ACCEPT, "text/csv").body(Body::empty()).unwrap()).await;
    assert_eq!(csv.text(), lib.to_csv().unwrap());
    let js = get(&app, &loc).await;
    assert_eq!(js.headers[header::CONTENT_TYPE], "application/json");
    assert_eq!(serde_json::from_slice::<uidkit_core::Dataset>(&js.body).unwrap(), lib);
    assert_eq!(get(&app, &format!("{loc}?format=xls")).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/datasets/ds-0123456789ab").await.status, StatusCode::NOT_FOUND);

    // Learning runs on the extracted dataset.
    let cv = wait(&app, &start(&app, "/learn/cv", json!({ "dataset_id": id, "algorithm": "knn", "k": 1, "folds": 2, "seed": 3 })).await).await;
    assert_eq!(cv.state, JobState::Done, "{:?}", cv.error);
    let report = get(&app, cv.result.as_ref().unwrap()).await.json();
    assert_eq!(report["kind"], "cv");
    assert_eq!(report["report"]["folds"].as_array().unwrap().len(), 2);
    let text = get(&app, &format!("{}?format=text", cv.result.as_ref().unwrap())).await.text();
    assert!(text.contains("Classify Image into parity:"));

    let km = wait(&app, &start(&app, "/learn/kmeans", json!({ "dataset_id": id, "k": 2, "seed": 1 })).await).await;
    assert_eq!(km.state, JobState::Done, "{:?}", km.error);
    let reports = get(&app, "/reports").await.json();
    assert_eq!(reports["reports"].as_array().unwrap().len(), 2);

    // A failing run ends in `failed` with a message.
    let bad = wait(&app, &start(&app, "/learn/cv", json!({ "dataset_id": id, "algorithm": "zero_r", "folds": 50 })).await).await;
    assert_eq!(bad.state, JobState::Failed);
    assert!(bad.error.is_some());
}

#[tokio::test]
async fn validation_and_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let (p, ids) = planted_project(dir.path());
    let app = router(p);
    assert_eq!(get(&app, "/jobs/job-9").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/reports/cv-0123456789ab").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/corpus/images/ffffffffffffffff/raw").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/prototypes/p99").await.status, StatusCode::NOT_FOUND);
    assert_eq!(delete(&app, "/prototypes/p99").await.status, StatusCode::NOT_FOUND);
    assert_eq!(delete(&app, "/categories/sky").await.status, StatusCode::NOT_FOUND);

    let r = post(&app, "/learn/cv", json!({ "dataset_id": "x", "algorithm": "svm" })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "algorithm");
    let r = post(&app, "/learn/kmeans", json!({ "dataset_id": 5 })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "dataset_id");
    let r = post(&app, "/labels/t", json!({ "labels": { "nope": "a" } })).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"]["fields"][0]["field"], "labels.nope");
    let r = post(&app, "/features/extract", json!({ "target": "absent" })).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let raw = get(&app, &format!("/corpus/images/{}/raw", ids[0])).await;
    assert_eq!(raw.headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(raw.body, Project::open(dir.path()).unwrap().image_bytes(&ids[0]).unwrap());
    let img = get(&app, "/prototypes/p4/image").await;
    assert_eq!(img.status, StatusCode::OK);
    assert_eq!(&img.body[1..4], b"PNG");

    let r = post(&app, "/labels/kind", json!({ "labels": { ids[0].clone(): "flat" } })).await;
    assert_eq!(r.status, StatusCode::OK);
    let corpus = get(&app, "/corpus").await.json();
    assert_eq!(corpus["images"].as_array().unwrap().len(), 4);
    let first = corpus["images"].as_array().unwrap().iter().find(|i| i["id"] == ids[0]).unwrap();
    assert_eq!(first["labels"]["kind"], "flat");
    assert_eq!((first["width"].as_u64(), first["height"].as_u64()), (Some(180), Some(68)));

    assert_eq!(post(&app, "/categories", json!({ "name": "sky" })).await.status, StatusCode::CREATED);
    assert_eq!(post(&app, "/categories", json!({ "name": "sky" })).await.status, StatusCode::CONFLICT);
    let cats = get(&app, "/categories").await.json();
    assert_eq!(cats["categories"].as_array().unwrap().len(), 5);
    // An empty category blocks extraction.
    assert_eq!(post(&app, "/features/extract", json!({})).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(delete(&app, "/categories/sky").await.status, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn multipart_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Project::open_or_init(dir.path()).unwrap());
    let png = synth::random_image(30, 20, 1).to_png().unwrap();
    let boundary = "XBOUNDARY";
    let mut body = Vec::new();
    for (name, bytes) in [("a.png", png.as_slice()), ("junk.png", b"junk".as_slice())] {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\nContent-Type: image/png\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    let req = Request::post("/corpus/images")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let r = send(&app, req).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let j = r.json();
    assert_eq!(j["ids"].as_array().unwrap().len(), 1);
    assert_eq!(j["failures"][0]["path"], "junk.png");
    let id = j["ids"][0].as_str().unwrap();
    assert_eq!(get(&app, &format!("/corpus/images/{id}/raw")).await.body, png);
}

#[tokio::test]
async fn running_job_blocks_same_kind_and_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(labeled_project(dir.path(), 6, (8, 20)));
    let job = start(&app, "/features/extract", json!({ "target": "parity", "audit": true })).await;
    assert_eq!(job.state, JobState::Queued);
    let again = post(&app, "/features/extract", json!({ "target": "parity" })).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    // Wait until the job holds the project, then try a mutation.
    let t0 = Instant::now();
    loop {
        let h: JobHandle = serde_json::from_value(get(&app, &format!("/jobs/{}", job.id)).await.json()).unwrap();
        if h.state != JobState::Queued {
            assert_eq!(h.state, JobState::Running, "job finished too fast to observe the conflict");
            break;
        }
        assert!(t0.elapsed() < Duration::from_secs(10));
        tokio::time::sleep(Duration::from_millis(1)).await;
    }
    let r = post(&app, "/categories", json!({ "name": "late" })).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    // Reads still work meanwhile; other kinds are not blocked.
    assert_eq!(get(&app, "/corpus").await.status, StatusCode::OK);
    let m = post(&app, "/prototypes/matrix", json!({})).await;
    assert_eq!(m.status, StatusCode::ACCEPTED);

    let done = wait(&app, &job).await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.error);
    // Immutable once done.
    let later: JobHandle = serde_json::from_value(get(&app, &format!("/jobs/{}", job.id)).await.json()).unwrap();
    assert_eq!(later, done);
    assert_eq!(post(&app, "/categories", json!({ "name": "late" })).await.status, StatusCode::CREATED);
}
