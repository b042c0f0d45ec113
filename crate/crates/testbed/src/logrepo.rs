//! Hash-chained log repository.
//!
//! | Request | Answer |
//! |---|---|
//! | `GET /logs` | `{"anchor": hex, "records": [{"seq", "fields", "link"}]}` from genesis |
//! | `GET /logs?tail=N` | last N records; `anchor` is the link preceding them |
//! | `POST /logs {"fields", "link"?}` | `201 {"seq", "link"}`; a supplied link must equal the computed one (409 otherwise) |
//! | `PUT /logs/{seq}`, `DELETE /logs/{seq}` | `405` |
//!
//! `link = SHA-256(previous link || canonical(fields))` where the canonical
//! form is `name=value` lines sorted by name, joined with `\n`, and the
//! genesis link is 32 zero bytes. Reads need `logs.read`, appends
//! `logs.write`, audience `logs`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::gateway::bearer;
use crate::tokens::{Reject, Verifier};
use crate::toggles::{Toggle, Toggles};

pub(crate) const AUDIENCE: &str = "logs";
const GENESIS: [u8; 32] = [0; 32];

fn canonical(fields: &BTreeMap<String, String>) -> Vec<u8> {
    fields
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

fn link_for(prev: &[u8; 32], fields: &BTreeMap<String, String>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(canonical(fields));
    h.finalize().into()
}

struct Record {
    seq: u64,
    fields: BTreeMap<String, String>,
    link: [u8; 32],
}

#[derive(Default)]
struct Chain {
    records: Vec<Record>,
    last_seq: u64,
}

impl Chain {
    fn head(&self) -> [u8; 32] {
        self.records.last().map_or(GENESIS, |r| r.link)
    }
}

pub(crate) struct LogStore {
    chain: Mutex<Chain>,
    coarse: bool,
}

pub(crate) enum AppendError {
    LinkMismatch,
}

impl LogStore {
    pub fn new(coarse: bool) -> Self {
        LogStore { chain: Mutex::new(Chain::default()), coarse }
    }

    /// Appends; `claimed` is checked against the computed link unless
    /// `trust_claim` is set, in which case it is stored as given.
    pub fn append(
        &self,
        fields: BTreeMap<String, String>,
        claimed: Option<[u8; 32]>,
        trust_claim: bool,
    ) -> Result<(u64, [u8; 32]), AppendError> {
        let mut chain = self.chain.lock().unwrap();
        let computed = link_for(&chain.head(), &fields);
        let link = match claimed {
            Some(c) if trust_claim => c,
            Some(c) if c != computed => return Err(AppendError::LinkMismatch),
            _ => computed,
        };
        chain.last_seq += 1;
        let seq = chain.last_seq;
        chain.records.push(Record { seq, fields, link });
        Ok((seq, link))
    }

    /// Records a service event with the standard field set.
    pub fn emit(&self, timestamp: &str, actor: &str, action: &str, resource: &str, outcome: &str) {
        let mut f = BTreeMap::new();
        f.insert("timestamp".to_string(), timestamp.to_string());
        if !self.coarse {
            f.insert("actor_id".to_string(), actor.to_string());
            f.insert("token_subject".to_string(), actor.to_string());
        }
        f.insert("action".to_string(), action.to_string());
        f.insert("resource".to_string(), resource.to_string());
        f.insert("outcome".to_string(), outcome.to_string());
        let _ = self.append(f, None, false);
    }

    fn page(&self, tail: Option<usize>) -> Value {
        let chain = self.chain.lock().unwrap();
        let start = tail.map_or(0, |n| chain.records.len().saturating_sub(n));
        let anchor = if start == 0 { GENESIS } else { chain.records[start - 1].link };
        let records: Vec<Value> = chain.records[start..]
            .iter()
            .map(|r| json!({ "seq": r.seq, "fields": r.fields, "link": hex::encode(r.link) }))
            .collect();
        json!({ "anchor": hex::encode(anchor), "records": records })
    }

    fn overwrite(&self, seq: u64, fields: BTreeMap<String, String>) -> bool {
        let mut chain = self.chain.lock().unwrap();
        match chain.records.iter_mut().find(|r| r.seq == seq) {
            Some(r) => {
                r.fields = fields;
                true
            }
            None => false,
        }
    }

    fn delete(&self, seq: u64) -> bool {
        let mut chain = self.chain.lock().unwrap();
        let before = chain.records.len();
        chain.records.retain(|r| r.seq != seq);
        chain.records.len() != before
    }

    #[cfg(test)]
    fn verifies(&self) -> bool {
        let chain = self.chain.lock().unwrap();
        let mut prev = GENESIS;
        chain.records.iter().all(|r| {
            let ok = r.link == link_for(&prev, &r.fields);
            prev = r.link;
            ok
        })
    }
}

#[derive(Clone)]
struct Repo {
    store: Arc<LogStore>,
    verifier: Arc<Verifier>,
    toggles: Toggles,
}

fn error(status: StatusCode, code: &str, detail: &str) -> Response {
    (status, Json(json!({ "error": code, "error_description": detail }))).into_response()
}

fn rejected(r: Reject) -> Response {
    error(StatusCode::from_u16(r.status()).unwrap(), r.code(), r.reason())
}

impl Repo {
    fn authorize(&self, headers: &HeaderMap, scope: &str) -> Result<(), Response> {
        match bearer(headers) {
            None => Err(error(StatusCode::UNAUTHORIZED, "invalid_token", "bearer token required")),
            Some(t) => self.verifier.verify(t, AUDIENCE, scope).map(|_| ()).map_err(rejected),
        }
    }
}

#[derive(Deserialize)]
struct ListQuery {
    tail: Option<usize>,
}

async fn list(State(repo): State<Repo>, headers: HeaderMap, Query(q): Query<ListQuery>) -> Response {
    let anonymous = bearer(&headers).is_none() && repo.toggles.on(Toggle::PublicLogRead);
    if !anonymous {
        if let Err(r) = repo.authorize(&headers, "logs.read") {
            return r;
        }
    }
    Json(repo.store.page(q.tail)).into_response()
}

#[derive(Deserialize)]
struct AppendBody {
    fields: BTreeMap<String, String>,
    link: Option<String>,
}

async fn append(State(repo): State<Repo>, headers: HeaderMap, body: axum::body::Bytes) -> Response {
    if let Err(r) = repo.authorize(&headers, "logs.write") {
        return r;
    }
    let Ok(body) = serde_json::from_slice::<AppendBody>(&body) else {
        return error(StatusCode::BAD_REQUEST, "invalid_request", "expected {\"fields\": {..}, \"link\"?: hex}");
    };
    let claimed = match body.link.as_deref().map(hex::decode) {
        None => None,
        Some(Ok(b)) if b.len() == 32 => Some(<[u8; 32]>::try_from(b).unwrap()),
        Some(_) => return error(StatusCode::BAD_REQUEST, "invalid_request", "link must be 32 hex-encoded bytes"),
    };
    match repo.store.append(body.fields, claimed, repo.toggles.on(Toggle::BrokenHashChain)) {
        Ok((seq, link)) => (StatusCode::CREATED, Json(json!({ "seq": seq, "link": hex::encode(link) }))).into_response(),
        Err(AppendError::LinkMismatch) => error(StatusCode::CONFLICT, "link_mismatch", "link does not extend the chain head"),
    }
}

fn not_allowed() -> Response {
    (
        StatusCode::METHOD_NOT_ALLOWED,
        [("allow", "GET, POST")],
        Json(json!({ "error": "method_not_allowed", "error_description": "log records are append-only" })),
    )
        .into_response()
}

async fn overwrite(State(repo): State<Repo>, Path(seq): Path<u64>, headers: HeaderMap, body: axum::body::Bytes) -> Response {
    if !repo.toggles.on(Toggle::AllowLogOverwrite) {
        return not_allowed();
    }
    if let Err(r) = repo.authorize(&headers, "logs.write") {
        return r;
    }
    let Ok(body) = serde_json::from_slice::<AppendBody>(&body) else {
        return error(StatusCode::BAD_REQUEST, "invalid_request", "expected {\"fields\": {..}}");
    };
    if repo.store.overwrite(seq, body.fields) {
        Json(json!({ "seq": seq })).into_response()
    } else {
        error(StatusCode::NOT_FOUND, "not_found", "no such record")
    }
}

async fn delete(State(repo): State<Repo>, Path(seq): Path<u64>, headers: HeaderMap) -> Response {
    if !repo.toggles.on(Toggle::AllowLogDelete) {
        return not_allowed();
    }
    if let Err(r) = repo.authorize(&headers, "logs.write") {
        return r;
    }
    if repo.store.delete(seq) {
        StatusCode::NO_CONTENT.into_response()
    } else {
        error(StatusCode::NOT_FOUND, "not_found", "no such record")
    }
}

pub(crate) fn router(store: Arc<LogStore>, verifier: Arc<Verifier>, toggles: Toggles) -> Router {
    Router::new()
        .route("/logs", get(list).post(append))
        .route("/logs/{seq}", put(overwrite).delete(delete))
        .with_state(Repo { store, verifier, toggles })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(n: u32) -> BTreeMap<String, String> {
        [("action".to_string(), format!("a{n}"))].into()
    }

    #[test]
    fn appends_extend_the_chain() {
        let s = LogStore::new(false);
        let (seq, link) = s.append(fields(1), None, false).ok().unwrap();
        assert_eq!(seq, 1);
        assert_eq!(link, link_for(&GENESIS, &fields(1)));
        let good = link_for(&link, &fields(2));
        assert!(s.append(fields(2), Some(good), false).is_ok());
        assert!(matches!(s.append(fields(3), Some([0xab; 32]), false), Err(AppendError::LinkMismatch)));
        assert!(s.verifies());
        assert!(s.append(fields(3), Some([0xab; 32]), true).is_ok());
        assert!(!s.verifies());
    }

    #[test]
    fn tail_page_anchor() {
        let s = LogStore::new(false);
        for n in 0..5 {
            s.emit("t", "u", &format!("a{n}"), "r", "ok");
        }
        let page = s.page(Some(2));
        assert_eq!(page["records"].as_array().unwrap().len(), 2);
        assert_eq!(page["records"][0]["seq"], 4);
        let full = s.page(None);
        assert_eq!(page["anchor"], full["records"][2]["link"]);
        assert_eq!(full["anchor"], hex::encode(GENESIS));
    }

    #[test]
    fn coarse_emission_drops_identity() {
        let s = LogStore::new(true);
        s.emit("t", "u", "a", "r", "ok");
        let page = s.page(None);
        assert!(page["records"][0]["fields"].get("actor_id").is_none());
        assert!(page["records"][0]["fields"].get("outcome").is_some());
    }
}
