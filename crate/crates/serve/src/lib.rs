//! Local session server for interactive segmentation.
//!
//! Endpoints:
//!
//! * `POST /session` with `{"image": base64, "gt": base64?, "guided": bool?}`
//!   (PNG or PNM bytes) answers `{"id", "w", "h"}`.
//! * `WS /session/{id}` takes `{"op":"click","x","y","pos","soft"?}`,
//!   `{"op":"undo","soft"?}` and `{"op":"reset"}`; every operation answers a
//!   [`MaskUpdate`] or `{"error": message}`.
//! * `GET /session/{id}/export` returns a [`SessionExport`].
//! * `DELETE /session/{id}` drops a session.
//!
//! Masks travel as run lengths of the 0.5-binarized mask ([`rle`]).
//! Operations on one session are applied one at a time in arrival order;
//! sessions share nothing but the model pool.

pub mod rle;
pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use clickseg::guided::GuidedParams;
use clickseg::imgcore::{decode_bytes, image_from_dynamic, mask_from_dynamic, BinaryMask, Image};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

pub use session::{MaskUpdate, ModelPool, Session, SessionExport, DEFAULT_HISTORY_CAP};

/// Largest accepted image side by default.
pub const DEFAULT_MAX_SIDE: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("{0}")]
    Internal(String),
}

impl From<clickseg::Error> for ServeError {
    fn from(e: clickseg::Error) -> Self {
        use clickseg::Error as E;
        match e {
            E::Decode(_) | E::UnsupportedFormat(_) | E::EmptyImage | E::DimensionMismatch { .. } | E::ClickOutOfBounds { .. } | E::InvalidArgument(_) => {
                ServeError::BadRequest(e.to_string())
            }
            other => ServeError::Internal(other.to_string()),
        }
    }
}

impl ServeError {
    fn status(&self) -> StatusCode {
        match self {
            ServeError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServeError::NotFound(_) => StatusCode::NOT_FOUND,
            ServeError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ServeError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Guided-filter setting for sessions that do not choose one.
    pub guided: Option<GuidedParams>,
    pub max_side: usize,
    pub history_cap: usize,
    /// Directory of static UI files served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            guided: None,
            max_side: DEFAULT_MAX_SIDE,
            history_cap: DEFAULT_HISTORY_CAP,
            ui_dir: None,
        }
    }
}

pub struct AppState {
    pub config: ServerConfig,
    pub pool: Arc<ModelPool>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(config: ServerConfig, pool: ModelPool) -> Arc<Self> {
        Arc::new(AppState {
            config,
            pool: Arc::new(pool),
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServeError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ServeError::NotFound(id.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OpenRequest {
    /// Base64 PNG or PNM bytes.
    pub image: String,
    #[serde(default)]
    pub gt: Option<String>,
    /// Override the server's guided-filter default for this session.
    #[serde(default)]
    pub guided: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OpenResponse {
    pub id: String,
    pub w: usize,
    pub h: usize,
}

/// Messages accepted on a session socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ClientMessage {
    Click {
        x: usize,
        y: usize,
        pos: bool,
        #[serde(default)]
        soft: bool,
    },
    Undo {
        #[serde(default)]
        soft: bool,
    },
    Reset,
}

fn new_session_id() -> String {
    let bits: u128 = rand::rng().random();
    format!("{bits:032x}")
}

fn decode_b64(field: &str, s: &str) -> Result<Vec<u8>, ServeError> {
    base64::engine::general_purpose::STANDARD
        .decode(s.trim())
        .map_err(|e| ServeError::BadRequest(format!("{field} is not valid base64: {e}")))
}

fn check_side(bytes: &[u8], max_side: usize) -> Result<(), ServeError> {
    let dims = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .ok()
        .and_then(|r| r.into_dimensions().ok());
    if let Some((w, h)) = dims {
        if w as usize > max_side || h as usize > max_side {
            return Err(ServeError::TooLarge(format!(
                "image is {w}x{h}, the limit is {max_side}x{max_side}"
            )));
        }
    }
    Ok(())
}

fn open_images(req: &OpenRequest, max_side: usize) -> Result<(Image, Option<BinaryMask>), ServeError> {
    let bytes = decode_b64("image", &req.image)?;
    check_side(&bytes, max_side)?;
    let image = image_from_dynamic(&decode_bytes(&bytes)?)?;
    let gt = match &req.gt {
        Some(g) => {
            let bytes = decode_b64("gt", g)?;
            check_side(&bytes, max_side)?;
            let mask = mask_from_dynamic(&decode_bytes(&bytes)?)?;
            if mask.dims() != image.dims() {
                return Err(ServeError::BadRequest(format!(
                    "ground truth is {:?}, image is {:?}",
                    mask.dims(),
                    image.dims()
                )));
            }
            Some(mask)
        }
        None => None,
    };
    Ok((image, gt))
}

async fn open_session(State(state): State<Arc<AppState>>, Json(req): Json<OpenRequest>) -> Result<Json<OpenResponse>, ServeError> {
    let max_side = state.config.max_side;
    let guided = match req.guided {
        Some(true) => Some(state.config.guided.unwrap_or_default()),
        Some(false) => None,
        None => state.config.guided,
    };
    let (image, gt) = tokio::task::spawn_blocking(move || open_images(&req, max_side))
        .await
        .map_err(|e| ServeError::Internal(e.to_string()))??;
    let (w, h) = image.dims();
    let id = new_session_id();
    let session = Session::new(id.clone(), image, gt, guided, state.config.history_cap);
    state.sessions.write().await.insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, w, h, "session opened");
    Ok(Json(OpenResponse { id, w, h }))
}

async fn export_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionExport>, ServeError> {
    let session = state.session(&id).await?;
    let guard = session.lock().await;
    Ok(Json(guard.export()))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ServeError> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ServeError::NotFound(id)),
    }
}

async fn session_socket(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServeError> {
    let session = state.session(&id).await?;
    let pool = state.pool.clone();
    Ok(ws.on_upgrade(move |socket| drive_socket(socket, session, pool)))
}

/// Apply one client message; the session lock is held for the whole operation.
pub async fn handle_message(session: &Arc<Mutex<Session>>, pool: &Arc<ModelPool>, msg: ClientMessage) -> Result<MaskUpdate, ServeError> {
    let mut guard = session.clone().lock_owned().await;
    let pool = pool.clone();
    tokio::task::spawn_blocking(move || match msg {
        ClientMessage::Click { x, y, pos, soft } => {
            let ms = guard.apply_click(&pool, x, y, pos)?;
            Ok(guard.update(ms, soft))
        }
        ClientMessage::Undo { soft } => {
            guard.undo()?;
            Ok(guard.update(0.0, soft))
        }
        ClientMessage::Reset => {
            guard.reset();
            Ok(guard.update(0.0, false))
        }
    })
    .await
    .map_err(|e| ServeError::Internal(e.to_string()))?
}

async fn drive_socket(mut socket: WebSocket, session: Arc<Mutex<Session>>, pool: Arc<ModelPool>) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => match handle_message(&session, &pool, m).await {
                Ok(update) => serde_json::to_string(&update),
                Err(e) => serde_json::to_string(&ErrorBody { error: e.to_string() }),
            },
            Err(e) => serde_json::to_string(&ErrorBody {
                error: format!("bad message: {e}"),
            }),
        }
        .expect("replies serialize");
        if socket.send(Message::Text(reply.into())).await.is_err() {
            break;
        }
    }
}

/// Body limit: a base64 16-bit RGBA PNG at the size limit, with headroom.
const BODY_LIMIT: usize = 64 << 20;

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/session", post(open_session))
        .route("/session/{id}", get(session_socket).delete(delete_session))
        .route("/session/{id}/export", get(export_session))
        .layer(DefaultBodyLimit::max(BODY_LIMIT));
    let app = match &state.config.ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    };
    app.with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
