//! `BBE1` binary recordings and the CSV debugging format.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset size  field
//!      0    4  magic "BBE1"
//!      4    2  version (u16) = 1
//!      6    2  width  (u16)
//!      8    2  height (u16)
//!     10    8  duration_us (u64)
//!     18    8  seed (u64)
//!     26   10  5 x i16 biases (diff_on, diff_off, fo, hpf, refr)
//!     36    8  event count (u64)
//!     44       records: t_us u64, x u16, y u16, polarity u8 (13 bytes each)
//! ```
//!
//! The scene id is not part of the binary stream; it lives in the manifest.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::bias::{BiasAxis, BiasSettings};
use crate::error::{Error, Result};
use crate::events::{Event, EventRecording, Polarity};

pub const MAGIC: [u8; 4] = *b"BBE1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 44;
pub const RECORD_LEN: usize = 13;

/// Header fields without the event payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingHeader {
    pub width: u16,
    pub height: u16,
    pub duration: u64,
    pub seed: u64,
    pub biases: BiasSettings,
    pub event_count: u64,
}

fn bias_i16(b: &BiasSettings) -> Result<[i16; 5]> {
    let mut out = [0i16; 5];
    for axis in BiasAxis::ALL {
        let v = b.get(axis);
        out[axis.index()] = i16::try_from(v).map_err(|_| Error::BiasOutOfRange {
            axis: axis.name(),
            value: v,
            min: i16::MIN as i32,
            max: i16::MAX as i32,
        })?;
    }
    Ok(out)
}

/// Serializes `rec` and returns the number of bytes written. Invalid
/// recordings are refused before anything is written.
pub fn write_recording<W: Write>(rec: &EventRecording, mut w: W) -> Result<u64> {
    rec.validate()?;
    let biases = bias_i16(&rec.biases)?;

    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MAGIC);
    header.write_u16::<LittleEndian>(VERSION)?;
    header.write_u16::<LittleEndian>(rec.width)?;
    header.write_u16::<LittleEndian>(rec.height)?;
    header.write_u64::<LittleEndian>(rec.duration)?;
    header.write_u64::<LittleEndian>(rec.seed)?;
    for b in biases {
        header.write_i16::<LittleEndian>(b)?;
    }
    header.write_u64::<LittleEndian>(rec.events.len() as u64)?;
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header)?;

    let mut buf = [0u8; RECORD_LEN];
    for e in &rec.events {
        buf[0..8].copy_from_slice(&e.t.to_le_bytes());
        buf[8..10].copy_from_slice(&e.x.to_le_bytes());
        buf[10..12].copy_from_slice(&e.y.to_le_bytes());
        buf[12] = e.polarity as u8;
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok((HEADER_LEN + RECORD_LEN * rec.events.len()) as u64)
}

/// Reads until `buf` is full or EOF; returns bytes read.
fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn read_header<R: Read>(r: &mut R) -> Result<RecordingHeader> {
    let mut buf = [0u8; HEADER_LEN];
    let n = fill(r, &mut buf)?;
    if n >= 4 && buf[0..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&buf[0..4]);
        return Err(Error::BadMagic {
            found,
            expected: MAGIC,
        });
    }
    if n < HEADER_LEN {
        return Err(Error::Truncated {
            offset: n as u64,
            what: "header",
        });
    }
    let mut c = &buf[4..];
    let version = c.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let width = c.read_u16::<LittleEndian>()?;
    let height = c.read_u16::<LittleEndian>()?;
    let duration = c.read_u64::<LittleEndian>()?;
    let seed = c.read_u64::<LittleEndian>()?;
    let mut b = [0i32; 5];
    for v in &mut b {
        *v = c.read_i16::<LittleEndian>()? as i32;
    }
    let event_count = c.read_u64::<LittleEndian>()?;
    Ok(RecordingHeader {
        width,
        height,
        duration,
        seed,
        biases: BiasSettings::from_array(b),
        event_count,
    })
}

/// Parses a full `BBE1` stream and validates the recording invariants.
pub fn read_recording<R: Read>(mut r: R) -> Result<EventRecording> {
    let h = read_header(&mut r)?;
    let mut events = Vec::with_capacity(h.event_count.min(1 << 24) as usize);
    let mut buf = [0u8; RECORD_LEN];
    for i in 0..h.event_count {
        let n = fill(&mut r, &mut buf)?;
        if n < RECORD_LEN {
            return Err(Error::Truncated {
                offset: HEADER_LEN as u64 + i * RECORD_LEN as u64 + n as u64,
                what: "event record",
            });
        }
        let t = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([buf[8], buf[9]]);
        let y = u16::from_le_bytes([buf[10], buf[11]]);
        let polarity = Polarity::from_u8(buf[12]).ok_or_else(|| {
            Error::InvalidRecording(format!("event {i}: polarity byte {}", buf[12]))
        })?;
        events.push(Event::new(t, x, y, polarity));
    }
    let mut extra = [0u8; 1];
    if fill(&mut r, &mut extra)? != 0 {
        return Err(Error::InvalidRecording(format!(
            "trailing data after {} events",
            h.event_count
        )));
    }
    let rec = EventRecording {
        width: h.width,
        height: h.height,
        duration: h.duration,
        biases: h.biases,
        scene_id: String::new(),
        seed: h.seed,
        events,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn save_recording(rec: &EventRecording, path: &Path) -> Result<u64> {
    let f = File::create(path).map_err(Error::io_at(path))?;
    write_recording(rec, BufWriter::new(f))
}

pub fn load_recording(path: &Path) -> Result<EventRecording> {
    let f = File::open(path).map_err(Error::io_at(path))?;
    read_recording(BufReader::new(f))
}

pub fn load_header(path: &Path) -> Result<RecordingHeader> {
    let f = File::open(path).map_err(Error::io_at(path))?;
    read_header(&mut BufReader::new(f))
}

/// CSV export with header `t_us,x,y,polarity` (polarity 0 = OFF, 1 = ON).
pub fn write_csv<W: Write>(events: &[Event], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_us", "x", "y", "polarity"])?;
    for e in events {
        wr.write_record([
            e.t.to_string(),
            e.x.to_string(),
            e.y.to_string(),
            (e.polarity as u8).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_us", "x", "y", "polarity"] {
        return Err(Error::InvalidRecording(format!("unexpected CSV header {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rd.deserialize::<(u64, u16, u16, u8)>() {
        let (t, x, y, p) = row?;
        let polarity = Polarity::from_u8(p)
            .ok_or_else(|| Error::InvalidRecording(format!("polarity {p} at t={t}")))?;
        out.push(Event::new(t, x, y, polarity));
    }
    Ok(out)
}
