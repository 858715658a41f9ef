//! Messages exchanged with the viewer over a websocket.
//!
//! The client sends JSON text messages. The server answers every render
//! with a binary frame (16-byte header then RGB8 rows) followed by a JSON
//! stats message for the same frame id.

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"FVFR";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    /// Gaze position in frame pixels.
    Gaze { x: f64, y: f64 },
    /// Orbit camera update; absent fields keep their value. Angles in degrees.
    Camera {
        #[serde(default)]
        azimuth: Option<f64>,
        #[serde(default)]
        elevation: Option<f64>,
        #[serde(default)]
        radius: Option<f64>,
    },
    Config {
        #[serde(default)]
        foveation: Option<bool>,
        /// Region start eccentricities in degrees, one per level.
        #[serde(default)]
        boundaries: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Stats(FrameStats),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame_id: u32,
    /// Intersections drawn per level, index `level - 1`.
    pub level_intersections: Vec<usize>,
    pub total_intersections: usize,
    pub active_levels: usize,
    pub region_fractions: Vec<f64>,
    pub render_ms: f64,
    pub foveated: bool,
    pub gaze: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub width: u32,
    pub height: u32,
    pub frame_id: u32,
}

impl FrameHeader {
    pub fn payload_len(&self) -> usize {
        3 * self.width as usize * self.height as usize
    }
}

/// Header then RGB8 payload, all integers little endian.
pub fn encode_frame(header: FrameHeader, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), header.payload_len(), "payload does not match header");
    let mut out = Vec::with_capacity(HEADER_LEN + rgb.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.width.to_le_bytes());
    out.extend_from_slice(&header.height.to_le_bytes());
    out.extend_from_slice(&header.frame_id.to_le_bytes());
    out.extend_from_slice(rgb);
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(FrameHeader, &[u8]), String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("frame of {} bytes is shorter than the header", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err("bad frame magic".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let header = FrameHeader {
        width: word(1),
        height: word(2),
        frame_id: word(3),
    };
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(format!(
            "payload of {} bytes for a {}x{} frame",
            payload.len(),
            header.width,
            header.height
        ));
    }
    Ok((header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = FrameHeader { width: 2, height: 1, frame_id: 0x0102_0304 };
        let bytes = encode_frame(h, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(&bytes[..16], b"FVFR\x02\0\0\0\x01\0\0\0\x04\x03\x02\x01");
        assert_eq!(decode_frame(&bytes).unwrap(), (h, &[1u8, 2, 3, 4, 5, 6][..]));
        assert!(decode_frame(&bytes[..20]).is_err());
    }

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"gaze","x":3,"y":4.5}"#).unwrap();
        assert_eq!(m, ClientMessage::Gaze { x: 3.0, y: 4.5 });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"camera","azimuth":30}"#).unwrap();
        assert_eq!(m, ClientMessage::Camera { azimuth: Some(30.0), elevation: None, radius: None });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"config","foveation":false}"#).unwrap();
        assert_eq!(m, ClientMessage::Config { foveation: Some(false), boundaries: None });
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"gaze","x":1}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"zoom"}"#).is_err());
    }

    #[test]
    fn server_messages_are_tagged() {
        let e = serde_json::to_value(ServerMessage::Error { message: "x".into() }).unwrap();
        assert_eq!(e["type"], "error");
    }
}
