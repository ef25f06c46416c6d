//! Shared helpers: fixture paths, an in-process server and the two
//! scripted walkthroughs used by the replay tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use cultiverse::api::{self, AppState};
use cultiverse::files::load_dataset;
use cultiverse::gateway::{Gateway, MockProvider, MockScript};
use cultiverse_core::prompt::{
    build_image_prompt, build_inference_prompt, build_qa_prompt, build_translation_prompt, build_verification_prompt,
};
use cultiverse_core::response::{serialize_inference, serialize_translation, serialize_verdict, FacetValue, OrUnknown};
use cultiverse_core::{
    Dataset, EmotionPolarity, Facet, FacetSet, InferenceItem, Judgment, NormId, PromptEnvelope, QaQuestion,
    RhetoricType, SourceNorm, TargetNorm, TranslationRequest, UserBackground, Verdict,
};
use serde_json::Value;
use tempfile::TempDir;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_root() -> PathBuf {
    crate_dir().join("fixtures/tcp_fixture")
}

pub fn mock_dir() -> PathBuf {
    crate_dir().join("fixtures/mock")
}

pub fn fixture() -> Dataset {
    load_dataset(&fixture_root()).expect("fixture loads")
}

/// Copies the fixture's dataset files into a fresh directory.
pub fn fixture_copy() -> TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    for entry in std::fs::read_dir(fixture_root()).expect("fixture dir") {
        let entry = entry.expect("dir entry");
        if entry.file_type().expect("file type").is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).expect("copy");
        }
    }
    dir
}

pub fn source(ds: &Dataset, norm: &str) -> SourceNorm {
    let norm = ds.norm(&NormId::new(norm)).expect("norm in fixture").clone();
    let element = ds.elements.get(&norm.element).expect("element in fixture").clone();
    SourceNorm { norm, element }
}

pub fn facets(list: &[Facet]) -> FacetSet {
    list.iter().copied().collect()
}

// ---- in-process server ------------------------------------------------------

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub state: Arc<AppState>,
    pub store: TempDir,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

pub struct Response {
    pub status: u16,
    pub text: String,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }

    pub fn ok(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

impl Server {
    pub async fn start(script: MockScript) -> Server {
        Server::start_with(Arc::new(MockProvider::new(script)), None).await
    }

    pub async fn start_with(provider: Arc<MockProvider>, token: Option<&str>) -> Server {
        let store = tempfile::tempdir().expect("tempdir");
        let gateway = Gateway::new(provider, store.path());
        let state = AppState::open(&fixture_root(), store.path(), gateway)
            .expect("state opens")
            .with_token(token.map(str::to_string));
        Server::serve(Arc::new(state), store).await
    }

    pub async fn serve(state: Arc<AppState>, store: TempDir) -> Server {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let base = format!("http://{}", listener.local_addr().expect("addr"));
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let task = tokio::spawn(api::serve(listener, state.clone(), async {
            let _ = rx.await;
        }));
        Server { base, client: reqwest::Client::new(), state, store, shutdown: Some(tx), task: Some(task) }
    }

    pub async fn stop(mut self) -> TempDir {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            task.await.expect("server task").expect("server io");
        }
        let store = tempfile::tempdir().expect("tempdir");
        std::mem::replace(&mut self.store, store)
    }

    pub async fn send_raw(&self, req: reqwest::RequestBuilder) -> Response {
        let resp = req.send().await.expect("request sent");
        let status = resp.status().as_u16();
        let text = resp.text().await.expect("body");
        Response { status, text }
    }

    pub async fn get(&self, path: &str) -> Response {
        self.send_raw(self.client.get(format!("{}{path}", self.base))).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Response {
        self.send_raw(self.client.post(format!("{}{path}", self.base)).json(body)).await
    }

    pub async fn delete(&self, path: &str) -> Response {
        self.send_raw(self.client.delete(format!("{}{path}", self.base))).await
    }

    pub async fn session(&self, background: &UserBackground) -> String {
        let r = self.post("/sessions", &serde_json::json!({ "background": background })).await;
        assert_eq!(r.status, 201, "{}", r.text);
        r.json()["session_id"].as_str().expect("session id").to_string()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

// ---- scripted walkthroughs ---------------------------------------------------

pub fn kay() -> UserBackground {
    UserBackground {
        country: "Japan".into(),
        age: 31,
        education: "Master's degree".into(),
        fwc: 5,
        fwtcp: 3,
        note: Some("Born in China, works as a consultant in Japan, JLPT N2.".into()),
    }
}

pub fn lily() -> UserBackground {
    UserBackground {
        country: "Indonesia".into(),
        age: 21,
        education: "Undergraduate".into(),
        fwc: 3,
        fwtcp: 1,
        note: None,
    }
}

fn target(facet: Facet, native: &str, gloss: &str, explanation: &str, rhetoric: RhetoricType) -> TargetNorm {
    TargetNorm {
        facet_values: BTreeMap::from([(facet, FacetValue { native: native.into(), gloss_en: gloss.into() })]),
        explanation: explanation.into(),
        rhetoric: OrUnknown::Known(rhetoric),
        emotion: OrUnknown::Known(EmotionPolarity::Positive),
    }
}

/// Replies in the style of a chat model: prose around a fenced block.
fn chatty(json: String) -> String {
    format!("Sure. Here is what I found.\n\n```json\n{json}\n```\n\nLet me know if you want more detail.")
}

pub struct Case1;

impl Case1 {
    pub const BEE_MONKEY: &'static str = "n005";
    pub const QA_PRESET: u8 = 1;
    pub const QA_FOLLOW_UP: &'static str =
        "Is there another reason a monkey would be linked to a marquess, apart from the sound of the words?";
    pub const IMAGE_SOURCE_TASK: &'static str = "an ancient Chinese marquess receiving his title";
    pub const IMAGE_TARGET_TASK: &'static str = "a chrysanthemum crest on the gate of a noble house";

    pub fn conditions() -> FacetSet {
        facets(&[Facet::Symbol])
    }

    pub fn questions() -> FacetSet {
        facets(&[Facet::Element])
    }

    pub fn qa_answer() -> String {
        "In Chinese the words for bee and for monkey sound like the words for conferring a title and for a \
         marquis, so the pair reads as a wish to be made a marquess. Painters used it as a gift for officials."
            .into()
    }

    pub fn follow_up_answer() -> String {
        "Monkeys are also read as clever and quick-witted, so the picture can flatter the wisdom of the noble \
         it was made for."
            .into()
    }

    pub fn target_norms() -> Vec<TargetNorm> {
        vec![
            target(
                Facet::Element,
                "菊",
                "chrysanthemum",
                "The sixteen-petal chrysanthemum is the seal of the imperial house and marks high rank.",
                RhetoricType::Iconic,
            ),
            target(
                Facet::Element,
                "家紋",
                "family crest",
                "Noble houses identified themselves by their crest, so it stands for titled lineage.",
                RhetoricType::Iconic,
            ),
        ]
    }

    pub fn verdict() -> Verdict {
        Verdict {
            judgment: Judgment::Appropriate,
            reasons: vec![
                "The chrysanthemum is closely tied to the imperial court and to rank.".into(),
                "Both norms express elevated social status.".into(),
            ],
            recommendations: vec!["Mention that the crest belongs to the imperial family in particular.".into()],
        }
    }

    pub fn inference() -> Vec<InferenceItem> {
        vec![
            InferenceItem {
                culture: "British".into(),
                value: "coronet mounted with pearls".into(),
                explanation: "A marquess's coronet carries silver balls and strawberry leaves.".into(),
            },
            InferenceItem {
                culture: "Indian".into(),
                value: "tiger".into(),
                explanation: "Royal and noble houses used the tiger as an emblem of power.".into(),
            },
            InferenceItem {
                culture: "French".into(),
                value: "fleur-de-lis".into(),
                explanation: "The lily flower is the heraldic sign of French nobility.".into(),
            },
        ]
    }

    pub fn exchanges(ds: &Dataset) -> Vec<(PromptEnvelope, String)> {
        let bg = kay();
        let src = source(ds, Self::BEE_MONKEY);
        let qa = build_qa_prompt(&bg, &src, &QaQuestion::Preset(Self::QA_PRESET)).expect("qa prompt");
        let follow = build_qa_prompt(&bg, &src, &QaQuestion::Free(Self::QA_FOLLOW_UP.into())).expect("qa prompt");
        let req = TranslationRequest::new(bg.clone(), src.clone(), Self::conditions(), Self::questions())
            .expect("translation request");
        let translate = build_translation_prompt(&req).expect("translation prompt");
        let verify =
            build_verification_prompt(&bg, &src, &req, &Self::target_norms()[0]).expect("verification prompt");
        let infer = build_inference_prompt(&bg, &src, Facet::Symbol).expect("inference prompt");
        vec![
            (qa, Self::qa_answer()),
            (follow, Self::follow_up_answer()),
            (translate, chatty(serialize_translation(&bg.country, &Self::target_norms()))),
            (verify, chatty(serialize_verdict(&Self::verdict()))),
            (infer, chatty(serialize_inference(&Self::inference()))),
        ]
    }

    pub fn image_prompts(ds: &Dataset) -> Vec<PromptEnvelope> {
        let src = source(ds, Self::BEE_MONKEY);
        [Self::IMAGE_SOURCE_TASK, Self::IMAGE_TARGET_TASK]
            .iter()
            .map(|t| build_image_prompt(&kay(), &src, t).expect("image prompt"))
            .collect()
    }
}

pub struct Case2;

impl Case2 {
    pub const EGRET_LOTUS: &'static str = "n011";
    pub const HIBISCUS: &'static str = "n013";
    pub const LION_DRAGON: &'static str = "n014";
    pub const QA_PRESET: u8 = 2;
    pub const LION_QUESTION: &'static str = "What is a lion dragon? Both lion and dragon, or neither of them?";
    pub const IMAGE_TASK: &'static str = "a lion dragon sitting on the lid of an incense burner";

    pub fn egret_lotus_answer() -> String {
        "The egret's white plumage and the lotus that grows clean out of mud are both read as an upright, \
         untainted character, so the pair stands for nobility."
            .into()
    }

    pub fn lion_answer() -> String {
        "Neither. The lion dragon is one of the nine sons of the dragon, a lion-like beast fond of smoke and of \
         sitting still, which is why it is carved on incense burners to guard against evil."
            .into()
    }

    pub fn hibiscus_conditions() -> FacetSet {
        facets(&[Facet::Element])
    }

    pub fn hibiscus_questions() -> FacetSet {
        facets(&[Facet::Symbol])
    }

    pub fn hibiscus_norms() -> Vec<TargetNorm> {
        vec![
            target(
                Facet::Symbol,
                "kecantikan",
                "beauty",
                "The hibiscus is worn in the hair and stands for feminine beauty.",
                RhetoricType::Iconic,
            ),
            target(
                Facet::Symbol,
                "kesucian",
                "purity",
                "Hibiscus flowers are offered in temple ceremonies as a pure gift.",
                RhetoricType::Iconic,
            ),
        ]
    }

    pub fn lion_conditions() -> FacetSet {
        facets(&[Facet::Symbol])
    }

    pub fn lion_questions() -> FacetSet {
        facets(&[Facet::Element])
    }

    pub fn lion_norms() -> Vec<TargetNorm> {
        vec![
            target(
                Facet::Element,
                "garuda",
                "garuda",
                "The divine bird of Hindu and Buddhist stories defeats demons and protects the realm.",
                RhetoricType::Iconic,
            ),
            target(
                Facet::Element,
                "wayang",
                "shadow puppet",
                "Wayang plays end with good defeating evil and are staged to cleanse a household.",
                RhetoricType::Iconic,
            ),
        ]
    }

    pub fn verdict() -> Verdict {
        Verdict {
            judgment: Judgment::Appropriate,
            reasons: vec![
                "Garuda is a guardian figure who fights evil in Indonesian stories.".into(),
                "As the national emblem it is widely known and carries protective meaning.".into(),
            ],
            recommendations: vec![
                "Compare with the Barong of Bali, a lion-like protector that is even closer in form.".into(),
            ],
        }
    }

    pub fn exchanges(ds: &Dataset) -> Vec<(PromptEnvelope, String)> {
        let bg = lily();
        let egret_lotus = source(ds, Self::EGRET_LOTUS);
        let hibiscus = source(ds, Self::HIBISCUS);
        let lion = source(ds, Self::LION_DRAGON);
        let qa = build_qa_prompt(&bg, &egret_lotus, &QaQuestion::Preset(Self::QA_PRESET)).expect("qa prompt");
        let hib_req = TranslationRequest::new(bg.clone(), hibiscus, Self::hibiscus_conditions(), Self::hibiscus_questions())
            .expect("translation request");
        let hib = build_translation_prompt(&hib_req).expect("translation prompt");
        let lion_qa = build_qa_prompt(&bg, &lion, &QaQuestion::Free(Self::LION_QUESTION.into())).expect("qa prompt");
        let lion_req = TranslationRequest::new(bg.clone(), lion.clone(), Self::lion_conditions(), Self::lion_questions())
            .expect("translation request");
        let lion_tr = build_translation_prompt(&lion_req).expect("translation prompt");
        let verify = build_verification_prompt(&bg, &lion, &lion_req, &Self::lion_norms()[0]).expect("verification prompt");
        vec![
            (qa, Self::egret_lotus_answer()),
            (hib, chatty(serialize_translation(&bg.country, &Self::hibiscus_norms()))),
            (lion_qa, Self::lion_answer()),
            (lion_tr, chatty(serialize_translation(&bg.country, &Self::lion_norms()))),
            (verify, chatty(serialize_verdict(&Self::verdict()))),
        ]
    }
}

pub fn script(exchanges: Vec<(PromptEnvelope, String)>) -> MockScript {
    MockScript {
        replies: exchanges.into_iter().map(|(env, reply)| (env.content_hash, reply)).collect(),
        fallback: Vec::new(),
    }
}

/// Script files shipped under `fixtures/mock`, one per walkthrough.
pub fn expected_scripts() -> Vec<(&'static str, MockScript)> {
    let ds = fixture();
    vec![("case1.json", script(Case1::exchanges(&ds))), ("case2.json", script(Case2::exchanges(&ds)))]
}

pub fn shipped_script(name: &str) -> MockScript {
    MockScript::load(&mock_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}; run with CULTIVERSE_BLESS=1"))
}

/// Percent-encodes `&` for ids such as `bee&monkey` used in paths.
pub fn path_id(id: &str) -> String {
    id.replace('&', "%26")
}
