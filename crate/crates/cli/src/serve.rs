//! Websocket server: one interactive session at a time, audio paced in real
//! time on its own thread.

use std::io::Write as _;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use crossbeam_queue::ArrayQueue;
use futures_util::{SinkExt, StreamExt};
use neures_core::engine::{engine, ControlMessage, EngineConfig, Renderer};
use neures_core::material::MaterialParams;
use neures_core::neural::Model;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Notify};
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{encode_audio, Frame, PROTOCOL_VERSION};

/// Audio blocks buffered for a slow client before the oldest are dropped.
const AUDIO_QUEUE_BLOCKS: usize = 64;
const STATUS_PERIOD: Duration = Duration::from_secs(1);

#[derive(Clone)]
struct Shared {
    model: Arc<Model>,
    config: EngineConfig,
    material: MaterialParams,
    busy: Arc<AtomicBool>,
}

pub async fn serve(
    model: Model,
    config: EngineConfig,
    material: MaterialParams,
    addr: SocketAddr,
) -> Result<()> {
    let listener = TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    println!("listening on ws://{local}");
    std::io::stdout().flush()?;
    let shared = Shared {
        model: Arc::new(model),
        config,
        material,
        busy: Arc::new(AtomicBool::new(false)),
    };
    loop {
        let (stream, peer) = listener.accept().await?;
        let shared = shared.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(stream, shared).await {
                log::warn!("{peer}: {e:#}");
            }
        });
    }
}

async fn connection(stream: TcpStream, shared: Shared) -> Result<()> {
    let mut ws = tokio_tungstenite::accept_async(stream).await?;
    if shared.busy.swap(true, Ordering::AcqRel) {
        let busy = Frame::error("busy", "another session is active");
        ws.send(Message::Text(busy.to_json().into())).await?;
        ws.close(None).await.ok();
        return Ok(());
    }
    let result = session(ws, &shared).await;
    shared.busy.store(false, Ordering::Release);
    result
}

enum Outgoing {
    Text(String),
    Close,
}

struct AudioThread {
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl Drop for AudioThread {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            h.join().ok();
        }
    }
}

fn spawn_audio(
    mut renderer: Renderer,
    sample_rate: f64,
    queue: Arc<ArrayQueue<Vec<f32>>>,
    dropped: Arc<AtomicU64>,
    wake: Arc<Notify>,
) -> Result<AudioThread> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::Builder::new()
        .name("audio".into())
        .spawn(move || {
            let n = renderer.block_size();
            let period = Duration::from_secs_f64(n as f64 / sample_rate);
            let mut block = vec![0.0; n];
            let start = Instant::now();
            let mut blocks = 0u32;
            while !flag.load(Ordering::Acquire) {
                renderer.render(&mut block);
                let out: Vec<f32> = block.iter().map(|v| *v as f32).collect();
                if queue.force_push(out).is_some() {
                    dropped.fetch_add(1, Ordering::Relaxed);
                }
                wake.notify_one();
                blocks += 1;
                let due = start + period * blocks;
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
        })?;
    Ok(AudioThread {
        stop,
        handle: Some(handle),
    })
}

async fn session(ws: tokio_tungstenite::WebSocketStream<TcpStream>, shared: &Shared) -> Result<()> {
    let (mut sink, mut source) = ws.split();
    let cfg = &shared.config;
    let (mut ctl, renderer) = engine(Some((*shared.model).clone()), cfg.clone())?;
    ctl.control_step(ControlMessage::SetMaterial(shared.material))?;

    sink.send(Message::Text(
        Frame::status(cfg.sample_rate, cfg.block_size, 0)
            .to_json()
            .into(),
    ))
    .await?;

    let queue = Arc::new(ArrayQueue::new(AUDIO_QUEUE_BLOCKS));
    let dropped = Arc::new(AtomicU64::new(0));
    let wake = Arc::new(Notify::new());
    let _audio = spawn_audio(
        renderer,
        cfg.sample_rate,
        queue.clone(),
        dropped.clone(),
        wake.clone(),
    )?;

    let (tx, mut rx) = mpsc::unbounded_channel::<Outgoing>();
    let (sr, block) = (cfg.sample_rate, cfg.block_size);
    let writer_dropped = dropped.clone();
    let writer = tokio::spawn(async move {
        let mut seq = 0u32;
        let mut status = tokio::time::interval(STATUS_PERIOD);
        status.tick().await;
        loop {
            tokio::select! {
                _ = wake.notified() => {
                    while let Some(b) = queue.pop() {
                        sink.send(Message::Binary(encode_audio(seq, &b).into())).await?;
                        seq = seq.wrapping_add(1);
                    }
                }
                msg = rx.recv() => match msg {
                    Some(Outgoing::Text(t)) => sink.send(Message::Text(t.into())).await?,
                    Some(Outgoing::Close) | None => {
                        sink.close().await.ok();
                        return Ok::<_, anyhow::Error>(());
                    }
                },
                _ = status.tick() => {
                    let f = Frame::status(sr, block, writer_dropped.load(Ordering::Relaxed));
                    sink.send(Message::Text(f.to_json().into())).await?;
                }
            }
        }
    });

    let reply = |f: Frame| tx.send(Outgoing::Text(f.to_json())).ok();
    while let Some(msg) = source.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                reply(Frame::error(
                    "bad_message",
                    "binary frames are server to client only",
                ));
                continue;
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let frame = match Frame::parse(text.as_str()) {
            Ok(f) => f,
            Err(e) => {
                reply(Frame::error("bad_message", format!("{e:#}")));
                continue;
            }
        };
        if let Frame::Status { version, .. } = frame {
            if version != PROTOCOL_VERSION {
                reply(Frame::error(
                    "version_mismatch",
                    format!("server speaks version {PROTOCOL_VERSION}, client {version}"),
                ));
                break;
            }
            continue;
        }
        let applied = frame.to_control().and_then(|c| match c {
            Some(c) => ctl.control_step(c).map(|_| ()).map_err(Into::into),
            None => Ok(()),
        });
        if let Err(e) = applied {
            reply(Frame::error("rejected", format!("{e:#}")));
        }
    }
    tx.send(Outgoing::Close).ok();
    writer.await.ok();
    Ok(())
}
