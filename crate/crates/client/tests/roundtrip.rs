use std::sync::Arc;

use sigaudit_client::{Client, ClientError};
use sigaudit_core::aggregation::{distribution, npmi, privacy_floor, BoxplotQuery, DistributionQuery, PairQuery};
use sigaudit_core::api::{ErrorCode, QueryService, SummaryQuery};
use sigaudit_core::patches::PatchQuery;
use sigaudit_core::signal_model::{Dataset, Schema};
use sigaudit_core::synth::{generate_synthetic, SynthSpec};

const SPEC: &str = r#"
samples = 500
seed = 9

[[attributes]]
name = "nsfw"
generator = "probability"
alpha = 1.0
beta = 3.0

[[attributes]]
name = "scene"
generator = "categorical"
classes = ["indoor", "outdoor", "studio"]
weights = [0.5, 0.3, 0.2]

[[attributes]]
name = "extension"
generator = "categorical"
classes = ["jpg", "png"]
weights = [0.8, 0.2]

[[joints]]
x = "scene"
y = "extension"
table = [[0.35, 0.15], [0.27, 0.03], [0.18, 0.02]]
"#;

fn dataset() -> Arc<Dataset> {
    let spec = SynthSpec::from_toml_str(SPEC).unwrap();
    Arc::new(generate_synthetic(&spec, Arc::new(Schema::builtin())).unwrap().dataset)
}

async fn start(ds: Arc<Dataset>) -> Client {
    let app = sigaudit_server::router(QueryService::with_defaults(ds), 32);
    let (addr, _task) = sigaudit_server::spawn("127.0.0.1:0", app).await.unwrap();
    Client::new(format!("http://{addr}/"))
}

#[tokio::test]
async fn responses_equal_library_calls() {
    let ds = dataset();
    let client = start(ds.clone()).await;

    let info = client.info().await.unwrap();
    assert_eq!(info.samples.count(), Some(500));
    assert_eq!(info.dataset_digest, ds.digest());

    let q = DistributionQuery {
        facets: vec!["extension".into()],
        ..DistributionQuery::new("scene")
    };
    let got = client.distribution(&q).await.unwrap();
    assert_eq!(got, privacy_floor(distribution(&ds, &q).unwrap(), 5).unwrap());

    let pq = PairQuery::new("scene", "extension");
    let got = client.npmi(&pq).await.unwrap();
    assert_eq!(got, privacy_floor(npmi(&ds, &pq).unwrap(), 5).unwrap());

    let c = client.cooccurrence(&pq).await.unwrap();
    assert_eq!(c.counts.len(), 3);

    let b = client
        .boxplot(&BoxplotQuery {
            attribute: "nsfw".into(),
            ..Default::default()
        })
        .await
        .unwrap();
    assert_eq!(b.count.count(), Some(500));

    let s = client.summary(&SummaryQuery::default()).await.unwrap();
    assert!(s.rows.iter().any(|r| r.attribute == "scene"));
    let a = client.attributes().await.unwrap();
    assert_eq!(a.attributes.len(), ds.schema().len());
}

#[tokio::test]
async fn errors_are_structured() {
    let client = start(dataset()).await;
    let err = client.distribution(&DistributionQuery::new("scenery")).await.unwrap_err();
    let body = err.api_error().unwrap();
    assert_eq!(body.code, ErrorCode::UnknownAttribute);
    assert!(body.valid_attributes.as_ref().unwrap().iter().any(|a| a == "scene"));

    let err = client.patches(&PatchQuery::new(0)).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 404, .. }));
}

#[tokio::test]
async fn unreachable_server() {
    let client = Client::new("http://127.0.0.1:1");
    assert!(matches!(client.info().await, Err(ClientError::Transport(_))));
}
