//! Websocket service streaming foveated frames driven by client gaze.
//!
//! Each connection gets one render worker. View updates go through a watch
//! channel, so updates that arrive while a frame renders collapse into the
//! latest one and at most one render is ever in flight per client.

use std::sync::Arc;
use std::time::Instant;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use fovsplat::camera::Orbit;
use fovsplat::foveation::{build_foveation_map, render_foveated, FoveationConfig};
use fovsplat::io::image::to_rgb8;
use fovsplat::raster::{render, RasterSettings};
use fovsplat::{DisplayGeometry, FrModel};
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, watch};

use crate::protocol::{encode_frame, ClientMessage, FrameHeader, FrameStats, ServerMessage};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub width: u32,
    pub height: u32,
    pub pixels_per_degree: f64,
    pub orbit: Orbit,
    pub foveation: FoveationConfig,
    pub raster: RasterSettings,
}

/// What the client controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub gaze: [f64; 2],
    pub orbit: Orbit,
    pub foveated: bool,
    pub boundaries: Vec<f64>,
}

impl ViewState {
    pub fn initial(opts: &ServeOptions) -> Self {
        ViewState {
            gaze: [opts.width as f64 / 2.0, opts.height as f64 / 2.0],
            orbit: opts.orbit,
            foveated: true,
            boundaries: opts.foveation.boundaries.clone(),
        }
    }

    /// Applies a client message, leaving the state untouched if the result
    /// would be invalid.
    pub fn apply(&mut self, msg: ClientMessage, opts: &ServeOptions) -> Result<(), String> {
        let mut next = self.clone();
        match msg {
            ClientMessage::Gaze { x, y } => {
                if !(x.is_finite() && y.is_finite()) {
                    return Err("gaze must be finite".into());
                }
                next.gaze = [x, y];
            }
            ClientMessage::Camera { azimuth, elevation, radius } => {
                next.orbit.azimuth = azimuth.unwrap_or(next.orbit.azimuth);
                next.orbit.elevation = elevation.unwrap_or(next.orbit.elevation);
                next.orbit.radius = radius.unwrap_or(next.orbit.radius);
                next.orbit.camera(opts.width, opts.height).map_err(|e| e.to_string())?;
            }
            ClientMessage::Config { foveation, boundaries } => {
                next.foveated = foveation.unwrap_or(next.foveated);
                if let Some(b) = boundaries {
                    FoveationConfig { level_count: b.len() as u8, boundaries: b.clone(), band: opts.foveation.band }
                        .validate()
                        .map_err(|e| e.to_string())?;
                    next.boundaries = b;
                }
            }
        }
        *self = next;
        Ok(())
    }
}

/// Renders one frame, returning the encoded binary frame and its stats.
pub fn render_frame(
    model: &FrModel,
    opts: &ServeOptions,
    view: &ViewState,
    frame_id: u32,
) -> fovsplat::Result<(Vec<u8>, FrameStats)> {
    let camera = view.orbit.camera(opts.width, opts.height)?;
    let start = Instant::now();
    let (image, stats) = if view.foveated {
        let levels = (model.level_count as usize).min(view.boundaries.len());
        let config = FoveationConfig {
            level_count: levels as u8,
            boundaries: view.boundaries[..levels].to_vec(),
            band: opts.foveation.band,
        };
        let display = DisplayGeometry::new(opts.width, opts.height, opts.pixels_per_degree, view.gaze)?;
        let map = build_foveation_map(&config, &display, opts.raster.tile_size)?;
        let out = render_foveated(model, &camera, &map, &opts.raster)?;
        (out.image, out.stats)
    } else {
        let out = render(model, &camera, 1, &opts.raster);
        let total = out.total_intersections();
        let stats = fovsplat::foveation::FoveationStats {
            level_intersections: vec![total],
            total_intersections: total,
            region_fractions: vec![1.0],
            double_rendered_fraction: 0.0,
            active_levels: 1,
        };
        (out.image, stats)
    };
    let render_ms = start.elapsed().as_secs_f64() * 1e3;
    let header = FrameHeader { width: opts.width, height: opts.height, frame_id };
    let frame = encode_frame(header, &to_rgb8(&image));
    let stats = FrameStats {
        frame_id,
        level_intersections: stats.level_intersections,
        total_intersections: stats.total_intersections,
        active_levels: stats.active_levels,
        region_fractions: stats.region_fractions,
        render_ms,
        foveated: view.foveated,
        gaze: view.gaze,
    };
    Ok((frame, stats))
}

struct Shared {
    model: FrModel,
    opts: ServeOptions,
}

pub fn router(model: FrModel, opts: ServeOptions) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/", get(|| async { "fovsplat frame service; connect a websocket to /ws\n" }))
        .with_state(Arc::new(Shared { model, opts }))
}

pub async fn serve(listener: tokio::net::TcpListener, model: FrModel, opts: ServeOptions) -> std::io::Result<()> {
    use axum::serve::ListenerExt;
    let listener = listener.tap_io(|tcp| {
        if let Err(e) = tcp.set_nodelay(true) {
            log::warn!("cannot disable Nagle: {e}");
        }
    });
    axum::serve(listener, router(model, opts)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

fn text(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server message serializes").into())
}

fn error(message: impl Into<String>) -> Message {
    text(&ServerMessage::Error { message: message.into() })
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::channel::<Message>(16);
    let writer = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            let close = matches!(m, Message::Close(_));
            if sink.send(m).await.is_err() || close {
                break;
            }
        }
    });

    let mut view = ViewState::initial(&shared.opts);
    let (view_tx, mut view_rx) = watch::channel(view.clone());
    view_rx.mark_changed();
    let worker_out = out_tx.clone();
    let worker_shared = shared.clone();
    let worker = tokio::spawn(async move {
        let mut frame_id = 0u32;
        while view_rx.changed().await.is_ok() {
            let v = view_rx.borrow_and_update().clone();
            let s = worker_shared.clone();
            let id = frame_id;
            frame_id += 1;
            match tokio::task::spawn_blocking(move || render_frame(&s.model, &s.opts, &v, id)).await {
                Ok(Ok((frame, stats))) => {
                    let sent = worker_out.send(Message::Binary(frame.into())).await.is_ok()
                        && worker_out.send(text(&ServerMessage::Stats(stats))).await.is_ok();
                    if !sent {
                        break;
                    }
                }
                Ok(Err(e)) => {
                    if worker_out.send(error(format!("render failed: {e}"))).await.is_err() {
                        break;
                    }
                }
                Err(e) => {
                    log::error!("render worker panicked: {e}");
                    let _ = worker_out.send(error("render panicked; closing")).await;
                    let _ = worker_out.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => {
                let reply = match serde_json::from_str::<ClientMessage>(t.as_str()) {
                    Ok(m) => match view.apply(m, &shared.opts) {
                        Ok(()) => {
                            view_tx.send_replace(view.clone());
                            None
                        }
                        Err(e) => Some(error(e)),
                    },
                    Err(e) => Some(error(format!("malformed message: {e}"))),
                };
                if let Some(r) = reply {
                    if out_tx.send(r).await.is_err() {
                        break;
                    }
                }
            }
            Message::Binary(_) => {
                if out_tx.send(error("binary messages are not accepted")).await.is_err() {
                    break;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
        if worker.is_finished() {
            break;
        }
    }
    drop(view_tx);
    drop(out_tx);
    let _ = worker.await;
    let _ = writer.await;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ServeOptions {
        ServeOptions {
            width: 64,
            height: 36,
            pixels_per_degree: 1.0,
            orbit: Orbit::default(),
            foveation: FoveationConfig::default(),
            raster: RasterSettings::default(),
        }
    }

    #[test]
    fn invalid_updates_leave_the_view_unchanged() {
        let o = opts();
        let mut v = ViewState::initial(&o);
        let before = v.clone();
        assert!(v.apply(ClientMessage::Camera { azimuth: Some(10.0), elevation: None, radius: Some(-1.0) }, &o).is_err());
        assert!(v.apply(ClientMessage::Config { foveation: Some(false), boundaries: Some(vec![5.0, 1.0]) }, &o).is_err());
        assert_eq!(v, before);
        v.apply(ClientMessage::Gaze { x: 3.0, y: 4.0 }, &o).unwrap();
        assert_eq!(v.gaze, [3.0, 4.0]);
    }

    #[test]
    fn watch_keeps_only_the_latest_view() {
        let o = opts();
        let (tx, mut rx) = watch::channel(ViewState::initial(&o));
        for x in [1.0, 2.0] {
            let mut v = tx.borrow().clone();
            v.gaze = [x, 0.0];
            tx.send_replace(v);
        }
        assert!(rx.has_changed().unwrap());
        assert_eq!(rx.borrow_and_update().gaze, [2.0, 0.0]);
        assert!(!rx.has_changed().unwrap());
    }
}
