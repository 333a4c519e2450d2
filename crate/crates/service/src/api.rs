//! HTTP routes.

use std::convert::Infallible;
use std::sync::Arc;

use aquasonde_core::export;
use aquasonde_core::sample::timestamp;
use aquasonde_core::{Reading, Season};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::BroadcastStream;

use crate::store::{BatchItem, Source, Store, StoreError};

#[derive(Debug)]
pub struct AppState {
    pub store: Store,
    pub token: Option<String>,
    pub default_season: Season,
}

pub type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/readings", post(post_readings))
        .route("/v1/stations", get(list_stations))
        .route("/v1/stations/{label}/readings", get(station_readings))
        .route("/v1/export.csv", get(export_csv))
        .route("/v1/stream", get(stream))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Deserialize)]
struct IngestQuery {
    source: Option<Source>,
}

fn check_auth(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(want) = state.token.as_deref() else {
        return Ok(());
    };
    let got = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if got == Some(want) {
        Ok(())
    } else {
        Err(ApiError(StatusCode::UNAUTHORIZED, "missing or invalid bearer token".into()))
    }
}

async fn post_readings(
    State(state): State<Shared>,
    Query(q): Query<IngestQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<IngestResponse>, ApiError> {
    check_auth(&state, &headers)?;
    let items: Vec<Value> =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("body must be a JSON array of readings: {e}")))?;
    let items: Vec<BatchItem> = items
        .into_iter()
        .map(|v| serde_json::from_value::<Reading>(v).map_err(|e| format!("Malformed: {e}")))
        .collect();
    let source = q.source.unwrap_or(Source::Live);
    let state2 = state.clone();
    let outcome = tokio::task::spawn_blocking(move || state2.store.append_batch(items, source, Utc::now()))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match outcome {
        Ok(o) => Ok(Json(IngestResponse {
            accepted: o.accepted,
            duplicates: o.duplicates,
            rejected: o
                .rejected
                .into_iter()
                .map(|(index, reason)| Rejection { index, reason })
                .collect(),
        })),
        Err(StoreError::Io(e)) => {
            log::error!("log append failed: {e}");
            Err(ApiError(StatusCode::INSUFFICIENT_STORAGE, format!("storage write failed: {e}")))
        }
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
struct SeasonQuery {
    season: Option<String>,
}

fn season_of(state: &AppState, raw: Option<&str>) -> Result<Season, ApiError> {
    match raw {
        None => Ok(state.default_season),
        Some(s) => s.parse().map_err(bad_request),
    }
}

async fn list_stations(
    State(state): State<Shared>,
    Query(q): Query<SeasonQuery>,
) -> Result<Response, ApiError> {
    let season = season_of(&state, q.season.as_deref())?;
    Ok(Json(state.store.summaries(season)).into_response())
}

#[derive(Debug, Deserialize)]
struct IntervalQuery {
    from: Option<String>,
    to: Option<String>,
}

fn parse_bound(name: &str, raw: Option<&str>) -> Result<Option<DateTime<Utc>>, ApiError> {
    raw.filter(|s| !s.is_empty())
        .map(|s| timestamp::parse(s).map_err(|e| bad_request(format!("`{name}`: {e}"))))
        .transpose()
}

async fn station_readings(
    State(state): State<Shared>,
    Path(label): Path<String>,
    Query(q): Query<IntervalQuery>,
) -> Result<Json<Vec<Reading>>, ApiError> {
    let from = parse_bound("from", q.from.as_deref())?;
    let to = parse_bound("to", q.to.as_deref())?;
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return Err(bad_request("`from` is after `to`"));
        }
    }
    state
        .store
        .station_readings(&label, from, to)
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown station `{label}`")))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    with_provenance: bool,
}

async fn export_csv(State(state): State<Shared>, Query(q): Query<ExportQuery>) -> Response {
    let readings = state.store.readings();
    let body = export::to_csv_string(&readings, q.with_provenance);
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn stream(
    State(state): State<Shared>,
    Query(q): Query<SeasonQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let season = season_of(&state, q.season.as_deref())?;
    // Subscribe before the snapshot so nothing accepted in between is lost.
    let rx = state.store.subscribe();
    let snapshot = Event::default()
        .event("snapshot")
        .json_data(json!({ "season": season, "stations": state.store.summaries(season) }))
        .expect("summaries serialize");
    let live = BroadcastStream::new(rx)
        .take_while(|item| {
            let keep = !matches!(item, Err(BroadcastStreamRecvError::Lagged(_)));
            if !keep {
                log::warn!("dropping slow stream subscriber");
            }
            futures::future::ready(keep)
        })
        .filter_map(|item| async move {
            item.ok().map(|r| {
                Ok(Event::default()
                    .event("reading")
                    .json_data(&*r)
                    .expect("reading serializes"))
            })
        });
    let events = stream::once(async move { Ok(snapshot) }).chain(live);
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
