//! ISA-like resource API behind bearer tokens (audience `dss`).
//!
//! `GET /v1/isa?owner=X` (isa.read), `GET /v1/isa/{id}` (isa.read),
//! `POST /v1/isa` (isa.write). Search answers `{"items": [..], "count": n}`.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::logrepo::LogStore;
use crate::minisql::{self, ColumnValue, Row};
use crate::tokens::Verifier;
use crate::toggles::{Toggle, Toggles};

pub(crate) const AUDIENCE: &str = "dss";

pub(crate) fn bearer(headers: &HeaderMap) -> Option<&str> {
    let v = headers.get("authorization")?.to_str().ok()?;
    let (scheme, token) = v.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Isa {
    pub id: String,
    pub owner: String,
    pub area: String,
    pub min_alt: i64,
    pub max_alt: i64,
}

impl Row for Isa {
    fn column(&self, name: &str) -> Option<ColumnValue<'_>> {
        Some(match name {
            "id" => ColumnValue::Text(&self.id),
            "owner" => ColumnValue::Text(&self.owner),
            "area" => ColumnValue::Text(&self.area),
            "min_alt" => ColumnValue::Int(self.min_alt),
            "max_alt" => ColumnValue::Int(self.max_alt),
            _ => return None,
        })
    }
}

pub(crate) fn seed_rows() -> Vec<Isa> {
    let row = |id: &str, owner: &str, area: &str, lo: i64, hi: i64| Isa {
        id: id.into(),
        owner: owner.into(),
        area: area.into(),
        min_alt: lo,
        max_alt: hi,
    };
    vec![
        row("isa-0001", "uss-alpha", "harbour-north", 0, 120),
        row("isa-0002", "uss-alpha", "river-east", 0, 60),
        row("isa-0003", "uss-bravo", "airfield-west", 30, 150),
        row("isa-0004", "uss-charlie", "harbour-north", 0, 90),
    ]
}

#[derive(Clone)]
struct Gateway {
    rows: Arc<Mutex<Vec<Isa>>>,
    verifier: Arc<Verifier>,
    log: Arc<LogStore>,
    toggles: Toggles,
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Gateway {
    /// Validates the bearer token; logs the outcome either way.
    fn authorize(&self, headers: &HeaderMap, scope: &str, action: &str) -> Result<String, Response> {
        let result = match bearer(headers) {
            None => Err((StatusCode::UNAUTHORIZED, "invalid_token", "bearer token required")),
            Some(t) => self.verifier.verify(t, AUDIENCE, scope).map_err(|r| {
                (StatusCode::from_u16(r.status()).unwrap(), r.code(), r.reason())
            }),
        };
        match result {
            Ok(claims) => {
                let sub = claims.get("sub").and_then(Value::as_str).unwrap_or("unknown").to_string();
                Ok(sub)
            }
            Err((status, code, why)) => {
                self.log.emit(&timestamp(), "anonymous", action, "isa", &format!("denied: {why}"));
                Err((status, Json(json!({ "error": code, "error_description": why }))).into_response())
            }
        }
    }
}

#[derive(Deserialize)]
struct Search {
    owner: Option<String>,
}

async fn search(State(gw): State<Gateway>, headers: HeaderMap, Query(q): Query<Search>) -> Response {
    let sub = match gw.authorize(&headers, "isa.read", "isa.search") {
        Ok(s) => s,
        Err(r) => return r,
    };
    let Some(owner) = q.owner else {
        gw.log.emit(&timestamp(), &sub, "isa.search", "isa", "400");
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "owner parameter required" }))).into_response();
    };
    let rows = gw.rows.lock().unwrap().clone();
    let found: Result<Vec<&Isa>, minisql::SqlError> = if gw.toggles.on(Toggle::StringConcatQuery) {
        let sql = format!("SELECT * FROM isa WHERE owner = '{owner}'");
        minisql::parse(&sql).and_then(|query| query.select(&rows))
    } else {
        Ok(rows.iter().filter(|r| r.owner == owner).collect())
    };
    match found {
        Ok(items) => {
            gw.log.emit(&timestamp(), &sub, "isa.search", "isa", "200");
            Json(json!({ "items": items, "count": items.len() })).into_response()
        }
        Err(e) => {
            gw.log.emit(&timestamp(), &sub, "isa.search", "isa", "500");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.0 }))).into_response()
        }
    }
}

async fn fetch(State(gw): State<Gateway>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let sub = match gw.authorize(&headers, "isa.read", "isa.get") {
        Ok(s) => s,
        Err(r) => return r,
    };
    let row = gw.rows.lock().unwrap().iter().find(|r| r.id == id).cloned();
    let resource = format!("isa/{id}");
    match row {
        Some(r) => {
            gw.log.emit(&timestamp(), &sub, "isa.get", &resource, "200");
            Json(r).into_response()
        }
        None => {
            gw.log.emit(&timestamp(), &sub, "isa.get", &resource, "404");
            (StatusCode::NOT_FOUND, Json(json!({ "error": "no such ISA" }))).into_response()
        }
    }
}

#[derive(Deserialize)]
struct NewIsa {
    area: String,
    min_alt: i64,
    max_alt: i64,
}

async fn create(State(gw): State<Gateway>, headers: HeaderMap, body: axum::body::Bytes) -> Response {
    let sub = match gw.authorize(&headers, "isa.write", "isa.create") {
        Ok(s) => s,
        Err(r) => return r,
    };
    let Ok(new) = serde_json::from_slice::<NewIsa>(&body) else {
        gw.log.emit(&timestamp(), &sub, "isa.create", "isa", "400");
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "expected {area, min_alt, max_alt}" }))).into_response();
    };
    let mut rows = gw.rows.lock().unwrap();
    let isa = Isa {
        id: format!("isa-{:04}", rows.len() + 1),
        owner: sub.clone(),
        area: new.area,
        min_alt: new.min_alt,
        max_alt: new.max_alt,
    };
    rows.push(isa.clone());
    drop(rows);
    gw.log.emit(&timestamp(), &sub, "isa.create", &format!("isa/{}", isa.id), "201");
    (StatusCode::CREATED, Json(isa)).into_response()
}

pub(crate) fn router(verifier: Arc<Verifier>, log: Arc<LogStore>, toggles: Toggles) -> Router {
    let gw = Gateway {
        rows: Arc::new(Mutex::new(seed_rows())),
        verifier,
        log,
        toggles,
    };
    Router::new()
        .route("/v1/isa", get(search).post(create))
        .route("/v1/isa/{id}", get(fetch))
        .with_state(gw)
}
