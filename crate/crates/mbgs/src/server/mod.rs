//! The edit server: interactive sessions over loaded scenes.
//!
//! Clients speak the framed JSON protocol in [`protocol`]. A connection
//! whose first bytes are `GET ` is answered as HTTP instead; `GET /scenes`
//! returns the scene listing.
//!
//! Each session has a single writer lock; edits and captures check the
//! request's revision under that lock and bump it on success, so revision
//! histories are linear. Reads clone the committed state and never see a
//! half-applied edit.

pub mod client;
pub mod protocol;
pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};

use serde_json::Value;

use mbgs_core::graph::GraphKind;
use mbgs_core::scene::SceneCheckpoint;

use crate::error::{Error, Result};
use crate::formats::{GraphDto, GraphKindDto, ThetaDto};
use crate::image::ImageFormat;
use protocol::{ErrorCode, ImageFormatDto, Reply, Request, Response, SceneInfo, PROTOCOL_VERSION};
use session::{core_rejection, Committed, Rejection, Session};

/// Environment variable capping the number of connection-handling threads.
pub const THREADS_ENV: &str = "MBGS_THREADS";

struct SceneEntry {
    path: PathBuf,
    checkpoint: Arc<SceneCheckpoint>,
}

pub struct Server {
    scenes: BTreeMap<String, SceneEntry>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next_session: AtomicU64,
    export_root: PathBuf,
}

fn joints_of(s: &Session, theta: &mbgs_core::graph::Theta) -> std::result::Result<Vec<[f64; 3]>, Rejection> {
    Ok(s.checkpoint.scene.graph.joint_positions(theta).map_err(core_rejection)?.iter().map(|v| v.as_array()).collect())
}

impl Server {
    /// Scenes are addressed by the file stem of their checkpoint.
    pub fn new(scene_paths: &[PathBuf], export_root: PathBuf) -> Result<Self> {
        let mut scenes = BTreeMap::new();
        for p in scene_paths {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Invalid(format!("{} has no usable file name", p.display())))?
                .to_string();
            let checkpoint = Arc::new(crate::formats::load_checkpoint(p)?);
            if scenes.insert(id.clone(), SceneEntry { path: p.clone(), checkpoint }).is_some() {
                return Err(Error::Invalid(format!("two scenes share the id {id:?}")));
            }
        }
        Ok(Server { scenes, sessions: RwLock::new(HashMap::new()), next_session: AtomicU64::new(1), export_root })
    }

    pub fn scene_infos(&self) -> Vec<SceneInfo> {
        self.scenes
            .iter()
            .map(|(id, e)| {
                let s = &e.checkpoint.scene;
                SceneInfo {
                    id: id.clone(),
                    path: e.path.display().to_string(),
                    graph_kind: match s.graph.topology.kind() {
                        GraphKind::KinematicTree => GraphKindDto::KinematicTree,
                        GraphKind::Deformable => GraphKindDto::Deformable,
                    },
                    joints: s.graph.topology.joint_count(),
                    links: s.graph.topology.link_count(),
                    splats: s.splats.len(),
                    frames: s.motion.len(),
                    instances: s.instance_count,
                    has_camera: e.checkpoint.camera.is_some(),
                }
            })
            .collect()
    }

    fn session(&self, id: &str) -> std::result::Result<Arc<Session>, Rejection> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Rejection::new(ErrorCode::NotFound, format!("no session {id:?}")))
    }

    fn state_reply(
        &self,
        s: &Session,
        c: &Committed,
        time: Option<f64>,
        max_points: Option<usize>,
    ) -> std::result::Result<Reply, Rejection> {
        Ok(Reply::State {
            session: s.id.clone(),
            revision: c.revision,
            scene: s.scene_id.clone(),
            graph: GraphDto::from_graph(&s.checkpoint.scene.graph),
            theta: (&c.theta).into(),
            joints: joints_of(s, &c.theta)?,
            keyframes: c.track.keys().iter().map(|k| k.time).collect(),
            time,
            preview: s.preview(c, time, max_points)?,
        })
    }

    fn dispatch(&self, req: Request) -> std::result::Result<Reply, (Rejection, Option<u64>)> {
        let plain = |e: Rejection| (e, None);
        match req {
            Request::ListScenes {} => Ok(Reply::Scenes { scenes: self.scene_infos() }),
            Request::LoadScene { scene, max_points } => {
                let entry = self
                    .scenes
                    .get(&scene)
                    .ok_or_else(|| plain(Rejection::new(ErrorCode::NotFound, format!("no scene {scene:?}"))))?;
                let id = format!("s{}", self.next_session.fetch_add(1, Ordering::SeqCst));
                let session = Arc::new(Session::new(id.clone(), scene, entry.checkpoint.clone()));
                self.sessions.write().expect("session table lock").insert(id, session.clone());
                let c = session.snapshot();
                self.state_reply(&session, &c, None, max_points).map_err(plain)
            }
            Request::GetState { session, revision, time, max_points } => {
                let s = self.session(&session).map_err(plain)?;
                let c = s.check_read(revision).map_err(|e| (e, Some(s.snapshot().revision)))?;
                self.state_reply(&s, &c, time, max_points).map_err(|e| (e, Some(c.revision)))
            }
            Request::ApplyEdit { session, revision, edit, max_points } => {
                let s = self.session(&session).map_err(plain)?;
                let out = s.apply_edit(revision, &edit).map_err(|e| (e, Some(s.snapshot().revision)))?;
                let c = out.committed;
                let fail = |e| (e, Some(c.revision));
                Ok(Reply::Edited {
                    session: s.id.clone(),
                    revision: c.revision,
                    theta: ThetaDto::from(&c.theta),
                    joints: joints_of(&s, &c.theta).map_err(fail)?,
                    ik: out.ik,
                    preview: s.preview(&c, None, max_points).map_err(fail)?,
                })
            }
            Request::CaptureKeyframe { session, revision, time } => {
                let s = self.session(&session).map_err(plain)?;
                let c = s.capture_keyframe(revision, time).map_err(|e| (e, Some(s.snapshot().revision)))?;
                Ok(Reply::Captured {
                    session: s.id.clone(),
                    revision: c.revision,
                    keyframes: c.track.keys().iter().map(|k| k.time).collect(),
                })
            }
            Request::ExportAnimation { session, revision, frame_count, out_dir, radius_px, format } => {
                let s = self.session(&session).map_err(plain)?;
                let c = s.check_read(revision).map_err(|e| (e, Some(s.snapshot().revision)))?;
                let fail = |e: Rejection| (e, Some(c.revision));
                let camera = s
                    .checkpoint
                    .camera
                    .as_ref()
                    .ok_or_else(|| fail(Rejection::new(ErrorCode::Invalid, "the scene has no camera to render with")))?;
                let dir = match out_dir {
                    Some(d) => {
                        let rel = Path::new(&d);
                        if d.is_empty() || !rel.components().all(|c| matches!(c, std::path::Component::Normal(_))) {
                            return Err(fail(Rejection::new(
                                ErrorCode::Invalid,
                                "out_dir must be a relative path below the export directory",
                            )));
                        }
                        self.export_root.join(rel)
                    }
                    None => self.export_root.join(&s.id),
                };
                let format = match format.unwrap_or(ImageFormatDto::Png) {
                    ImageFormatDto::Png => ImageFormat::Png,
                    ImageFormatDto::Ppm => ImageFormat::Ppm,
                };
                let radius = radius_px.unwrap_or(crate::animate::DEFAULT_RADIUS_PX);
                let files = crate::animate::export_animation(&s.checkpoint.scene, camera, &c.track, frame_count, radius, format, &dir)
                    .map_err(|e| {
                        let code = match &e {
                            Error::Io { .. } => ErrorCode::Io,
                            e if e.is_numerical() => ErrorCode::Numerical,
                            _ => ErrorCode::Invalid,
                        };
                        fail(Rejection::new(code, e.to_string()))
                    })?;
                Ok(Reply::Exported {
                    session: s.id.clone(),
                    revision: c.revision,
                    files: files.iter().map(|p| p.display().to_string()).collect(),
                })
            }
        }
    }

    /// Answer one framed request payload.
    pub fn handle(&self, payload: &[u8]) -> Vec<u8> {
        let mut id = None;
        let result = (|| {
            let mut v: Value = serde_json::from_slice(payload)
                .map_err(|e| (Rejection::new(ErrorCode::BadRequest, format!("malformed JSON: {e}")), None))?;
            let obj = v
                .as_object_mut()
                .ok_or_else(|| (Rejection::new(ErrorCode::BadRequest, "a request must be a JSON object"), None))?;
            id = obj.remove("id");
            match obj.remove("protocol") {
                Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
                Some(other) => {
                    return Err((
                        Rejection::new(ErrorCode::UnsupportedVersion, format!("protocol {other} is not supported (expected {PROTOCOL_VERSION})")),
                        None,
                    ))
                }
                None => return Err((Rejection::new(ErrorCode::BadRequest, "missing protocol version"), None)),
            }
            let req: Request = serde_json::from_value(v)
                .map_err(|e| (Rejection::new(ErrorCode::BadRequest, format!("invalid request: {e}")), None))?;
            self.dispatch(req)
        })();
        let resp = match result {
            Ok(reply) => Response { protocol: PROTOCOL_VERSION, id, ok: true, reply: Some(reply), error: None, revision: None },
            Err((e, revision)) => {
                Response { protocol: PROTOCOL_VERSION, id, ok: false, reply: None, error: Some(e.body()), revision }
            }
        };
        serde_json::to_vec(&resp).expect("responses serialize")
    }

    fn handle_http(&self, stream: &mut TcpStream) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
                break;
            }
        }
        let path = line.split_whitespace().nth(1).unwrap_or("");
        let (status, body) = if path == "/scenes" {
            let body = serde_json::json!({ "protocol": PROTOCOL_VERSION, "scenes": self.scene_infos() });
            ("200 OK", serde_json::to_vec(&body).expect("listing serializes"))
        } else {
            ("404 Not Found", b"{\"error\":\"not found\"}".to_vec())
        };
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            body.len()
        )?;
        stream.write_all(&body)?;
        stream.flush()
    }

    /// Serve one connection until the peer closes it.
    pub fn handle_connection(&self, mut stream: TcpStream) -> std::io::Result<()> {
        stream.set_nodelay(true)?;
        let mut head = [0u8; 4];
        let n = stream.peek(&mut head)?;
        if n == 4 && &head == b"GET " {
            return self.handle_http(&mut stream);
        }
        let mut reader = BufReader::new(stream.try_clone()?);
        while let Some(msg) = protocol::read_message(&mut reader)? {
            let out = self.handle(&msg);
            protocol::write_message(&mut stream, &out)?;
        }
        Ok(())
    }

    /// Accept connections forever, handing each to one of `threads` workers.
    pub fn serve(self: Arc<Self>, listener: TcpListener, threads: usize) -> std::io::Result<()> {
        let (tx, rx) = mpsc::channel::<TcpStream>();
        let rx = Arc::new(Mutex::new(rx));
        for _ in 0..threads.max(1) {
            let (rx, server) = (rx.clone(), self.clone());
            std::thread::spawn(move || loop {
                let next = rx.lock().expect("work queue lock").recv();
                match next {
                    Ok(stream) => {
                        let _ = server.handle_connection(stream);
                    }
                    Err(_) => break,
                }
            });
        }
        for stream in listener.incoming() {
            match stream {
                Ok(s) => {
                    if tx.send(s).is_err() {
                        break;
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Worker count from `MBGS_THREADS`, defaulting to the available
/// parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Load `scenes`, bind `addr` and serve in a background thread. Returns the
/// bound address.
pub fn spawn(scenes: &[PathBuf], export_root: &Path, addr: &str, threads: usize) -> Result<std::net::SocketAddr> {
    let server = Arc::new(Server::new(scenes, export_root.to_path_buf())?);
    let listener = TcpListener::bind(addr).map_err(|e| Error::Invalid(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| Error::Invalid(e.to_string()))?;
    std::thread::spawn(move || server.serve(listener, threads));
    Ok(local)
}
