//! Wire protocol, version 1.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes
//! of UTF-8 JSON. Requests carry `protocol`, an optional client `id` echoed
//! back, and a `type`; responses carry `protocol`, `id`, `ok` and either a
//! payload or an `error`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::formats::{GraphDto, PoseDto, ThetaDto};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_MESSAGE_BYTES: usize = 64 << 20;
/// Upper bound on preview sizes; larger scenes are decimated by a uniform
/// stride.
pub const PREVIEW_BUDGET: usize = 100_000;

pub fn write_message(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let n = u32::try_from(payload.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "message too large"))?;
    w.write_all(&n.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a new message.
pub fn read_message(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => got += n,
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_MESSAGE_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("message of {n} bytes exceeds the limit")));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    ListScenes {},
    LoadScene {
        scene: String,
        #[serde(default)]
        max_points: Option<usize>,
    },
    GetState {
        session: String,
        #[serde(default)]
        revision: Option<u64>,
        /// Preview the keyframe track interpolated at this time instead of
        /// the working parameters.
        #[serde(default)]
        time: Option<f64>,
        #[serde(default)]
        max_points: Option<usize>,
    },
    ApplyEdit {
        session: String,
        revision: u64,
        edit: Edit,
        #[serde(default)]
        max_points: Option<usize>,
    },
    CaptureKeyframe {
        session: String,
        revision: u64,
        time: f64,
    },
    ExportAnimation {
        session: String,
        #[serde(default)]
        revision: Option<u64>,
        frame_count: usize,
        /// Relative paths resolve against the server's export directory.
        #[serde(default)]
        out_dir: Option<String>,
        #[serde(default)]
        radius_px: Option<f64>,
        #[serde(default)]
        format: Option<ImageFormatDto>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormatDto {
    Png,
    Ppm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkTargetDto {
    pub joint: usize,
    pub position: [f64; 3],
    /// `[w, x, y, z]` of the joint's accumulated frame.
    #[serde(default)]
    pub rotation: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Edit {
    /// Tree graphs.
    SetJointRotation { joint: usize, rotation: [f64; 4] },
    /// Deformable graphs.
    SetJointPosition { joint: usize, position: [f64; 3] },
    /// Tree graphs.
    SetRootPose { pose: PoseDto },
    /// Translate joints. Deformable joints move directly; tree joints are
    /// moved by inverse kinematics.
    DragJointGroup { joints: Vec<usize>, delta: [f64; 3] },
    /// Tree graphs.
    SolveIk { targets: Vec<IkTargetDto> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnsupportedVersion,
    NotFound,
    Conflict,
    KindMismatch,
    Invalid,
    Numerical,
    Io,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub total: usize,
    /// Every `stride`-th splat, starting with the first.
    pub stride: usize,
    pub positions: Vec<[f64; 3]>,
    pub instance_ids: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub id: String,
    pub path: String,
    pub graph_kind: crate::formats::GraphKindDto,
    pub joints: usize,
    pub links: usize,
    pub splats: usize,
    pub frames: usize,
    pub instances: usize,
    pub has_camera: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkReport {
    pub reached: bool,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Scenes {
        scenes: Vec<SceneInfo>,
    },
    State {
        session: String,
        revision: u64,
        scene: String,
        graph: GraphDto,
        theta: ThetaDto,
        joints: Vec<[f64; 3]>,
        keyframes: Vec<f64>,
        /// Interpolation time of the preview, when one was requested.
        time: Option<f64>,
        preview: Preview,
    },
    Edited {
        session: String,
        revision: u64,
        theta: ThetaDto,
        joints: Vec<[f64; 3]>,
        ik: Option<IkReport>,
        preview: Preview,
    },
    Captured {
        session: String,
        revision: u64,
        keyframes: Vec<f64>,
    },
    Exported {
        session: String,
        revision: u64,
        files: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub protocol: u32,
    pub id: Option<serde_json::Value>,
    pub ok: bool,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<Reply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    /// Current revision of the addressed session, reported with conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}
