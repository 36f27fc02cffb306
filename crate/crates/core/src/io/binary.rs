use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{IoError, FORMAT_VERSION};
use crate::geom::{Pose, UnitQuat, Vec3};
use crate::synth::{Frame, Meta, Phase, Trajectory};

/// PNG-style signature: a high byte, the name, and line-ending canaries.
pub const BINARY_MAGIC: [u8; 16] = *b"\x89HOPKIT-TRAJ\r\n\x1a\n";
const HEADER_LEN: usize = 16 + 4 + 8;

const PHASES: [Phase; 9] = [
    Phase::FreeMove,
    Phase::Grasp,
    Phase::Place,
    Phase::Move,
    Phase::Rotate,
    Phase::Catch,
    Phase::Throw,
    Phase::Regrasp,
    Phase::Transition,
];

fn put_vec3(out: &mut Vec<u8>, v: &Vec3) {
    for c in v.iter() {
        out.write_f64::<LE>(*c).unwrap();
    }
}

fn put_pose(out: &mut Vec<u8>, p: &Pose) {
    put_vec3(out, &p.position);
    for c in p.orientation.to_array() {
        out.write_f64::<LE>(c).unwrap();
    }
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    out.write_u32::<LE>(u32::try_from(n).expect("length fits in u32")).unwrap();
}

fn put_points(out: &mut Vec<u8>, pts: &[Vec3]) {
    put_len(out, pts.len());
    for p in pts {
        put_vec3(out, p);
    }
}

/// Header plus payload:
///
/// ```text
/// u32 meta length, meta as compact JSON
/// u32 frame count, then per frame:
///   wrist (x y z, w x y z)          7 × f64
///   u32 n, theta                    n × f64
///   u32 n, hand keypoints           n × 3 × f64
///   u8 has object, [object pose     7 × f64]
///   u32 n, object keypoints         n × 3 × f64
///   u32 n, contact flags            n × u8
///   u8 phase
/// ```
pub fn encode_binary(t: &Trajectory) -> Vec<u8> {
    let mut body = Vec::new();
    let meta = serde_json::to_vec(&t.meta).expect("meta serializes");
    put_len(&mut body, meta.len());
    body.extend_from_slice(&meta);
    put_len(&mut body, t.frames.len());
    for f in &t.frames {
        put_pose(&mut body, &f.wrist);
        put_len(&mut body, f.theta.len());
        for a in &f.theta {
            body.write_f64::<LE>(*a).unwrap();
        }
        put_points(&mut body, &f.joints);
        match &f.object {
            Some(p) => {
                body.push(1);
                put_pose(&mut body, p);
            }
            None => body.push(0),
        }
        put_points(&mut body, &f.object_keypoints);
        put_len(&mut body, f.contact.len());
        body.extend(f.contact.iter().map(|&c| u8::from(c)));
        body.push(PHASES.iter().position(|p| *p == f.phase).unwrap() as u8);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&BINARY_MAGIC);
    out.write_u32::<LE>(FORMAT_VERSION).unwrap();
    out.write_u64::<LE>(body.len() as u64).unwrap();
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn eof(e: std::io::Error) -> String {
        format!("unexpected end of payload ({e})")
    }

    fn f64(&mut self) -> Result<f64, String> {
        self.cur.read_f64::<LE>().map_err(Self::eof)
    }

    fn u8(&mut self) -> Result<u8, String> {
        self.cur.read_u8().map_err(Self::eof)
    }

    /// A count, sanity-checked against the bytes left so corrupt lengths
    /// cannot trigger huge allocations.
    fn len(&mut self, item_bytes: usize) -> Result<usize, String> {
        let n = self.cur.read_u32::<LE>().map_err(Self::eof)? as usize;
        let left = self.cur.get_ref().len() - self.cur.position() as usize;
        if n.saturating_mul(item_bytes) > left {
            return Err(format!("count {n} exceeds the remaining {left} bytes"));
        }
        Ok(n)
    }

    fn vec3(&mut self) -> Result<Vec3, String> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn pose(&mut self) -> Result<Pose, String> {
        let p = self.vec3()?;
        let q = [self.f64()?, self.f64()?, self.f64()?, self.f64()?];
        let q = UnitQuat::try_from(q).map_err(|e| e.to_string())?;
        Ok(Pose::new(p, q))
    }

    fn points(&mut self) -> Result<Vec<Vec3>, String> {
        let n = self.len(24)?;
        (0..n).map(|_| self.vec3()).collect()
    }

    fn frame(&mut self) -> Result<Frame, String> {
        let wrist = self.pose()?;
        let n = self.len(8)?;
        let theta = (0..n).map(|_| self.f64()).collect::<Result<_, _>>()?;
        let joints = self.points()?;
        let object = match self.u8()? {
            0 => None,
            1 => Some(self.pose()?),
            b => return Err(format!("object flag must be 0 or 1, got {b}")),
        };
        let object_keypoints = self.points()?;
        let n = self.len(1)?;
        let contact = (0..n)
            .map(|_| match self.u8()? {
                0 => Ok(false),
                1 => Ok(true),
                b => Err(format!("contact flag must be 0 or 1, got {b}")),
            })
            .collect::<Result<_, _>>()?;
        let phase = *PHASES
            .get(self.u8()? as usize)
            .ok_or_else(|| "unknown phase tag".to_string())?;
        Ok(Frame {
            wrist,
            theta,
            joints,
            object,
            object_keypoints,
            contact,
            phase,
        })
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Trajectory, IoError> {
    if bytes.len() < BINARY_MAGIC.len() || bytes[..16] != BINARY_MAGIC {
        return Err(IoError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            declared: (HEADER_LEN - 16) as u64,
            available: (bytes.len() - 16) as u64,
        });
    }
    let mut head = &bytes[16..HEADER_LEN];
    let version = head.read_u32::<LE>().unwrap();
    let declared = head.read_u64::<LE>().unwrap();
    if version != FORMAT_VERSION {
        return Err(IoError::Version(version as u64));
    }
    let available = (bytes.len() - HEADER_LEN) as u64;
    if available < declared {
        return Err(IoError::Truncated { declared, available });
    }
    if available > declared {
        return Err(IoError::TrailingBytes(available - declared));
    }
    let mut r = Reader {
        cur: Cursor::new(&bytes[HEADER_LEN..]),
    };
    let n = r.len(1).map_err(IoError::Payload)?;
    let mut meta_bytes = vec![0u8; n];
    r.cur
        .read_exact(&mut meta_bytes)
        .map_err(|e| IoError::Payload(e.to_string()))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes).map_err(|e| IoError::Meta(e.to_string()))?;
    let count = r.len(1).map_err(IoError::Payload)?;
    let mut frames = Vec::with_capacity(count);
    for index in 0..count {
        frames.push(r.frame().map_err(|message| IoError::Frame { index, message })?);
    }
    let rest = declared - r.cur.position();
    if rest != 0 {
        return Err(IoError::Payload(format!("{rest} unread bytes after the last frame")));
    }
    Ok(Trajectory { meta, frames })
}
