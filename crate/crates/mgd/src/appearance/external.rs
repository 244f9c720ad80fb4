//! Wire protocol for out-of-process classifier/detector backends.
//!
//! The parent speaks over the child's standard streams, one request in
//! flight:
//!
//! ```text
//! parent: MGD/1 CLS\n            (or MGD/1 DET\n)
//! child:  OK\n
//! parent: CLS <id> 32 32\n       followed by exactly 1024 raw pixel bytes
//! child:  CLS <id> <score>\n
//! parent: DET <id> <w> <h>\n     followed by w*h raw pixel bytes
//! child:  DET <id> <n>\n         then n lines `<x> <y> <w> <h> <conf>\n`
//! ```
//!
//! Pixels are row-major 8-bit; detector boxes are in crop coordinates. Any
//! malformed line aborts the backend.

use super::{
    BackendError, ClassifierScore, CropClassifier, CropDetector, Detection, Stage,
    CLASSIFIER_CROP,
};
use crate::imgproc::{BoundingBox, Frame};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    Classifier,
    Detector,
}

impl ProtocolKind {
    fn handshake(&self) -> &'static str {
        match self {
            ProtocolKind::Classifier => "MGD/1 CLS",
            ProtocolKind::Detector => "MGD/1 DET",
        }
    }
}

fn read_line(reader: &mut impl BufRead) -> Result<String, BackendError> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(BackendError::Protocol("unexpected end of stream".into()));
    }
    Ok(line.trim_end_matches(['\r', '\n']).to_string())
}

fn malformed(line: &str) -> BackendError {
    BackendError::Protocol(format!("malformed line `{line}`"))
}

/// Parent-side framing over arbitrary streams.
struct ProtocolClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> ProtocolClient<R, W> {
    fn new(reader: R, writer: W) -> Self {
        Self { reader, writer, next_id: 1 }
    }

    fn handshake(&mut self, kind: ProtocolKind) -> Result<(), BackendError> {
        writeln!(self.writer, "{}", kind.handshake())?;
        self.writer.flush()?;
        let reply = read_line(&mut self.reader)?;
        if reply != "OK" {
            return Err(malformed(&reply));
        }
        Ok(())
    }

    fn classify(&mut self, crop: &Frame) -> Result<f64, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        writeln!(self.writer, "CLS {id} {0} {0}", CLASSIFIER_CROP)?;
        self.writer.write_all(crop.pixels())?;
        self.writer.flush()?;

        let line = read_line(&mut self.reader)?;
        let mut parts = line.split_ascii_whitespace();
        let ok = parts.next() == Some("CLS")
            && parts.next() == Some(id.to_string().as_str());
        let score: Option<f64> = parts.next().and_then(|s| s.parse().ok());
        match (ok, score, parts.next()) {
            (true, Some(score), None) if (0.0..=1.0).contains(&score) => Ok(score),
            _ => Err(malformed(&line)),
        }
    }

    fn detect(&mut self, crop: &Frame) -> Result<Vec<Detection>, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        writeln!(self.writer, "DET {id} {} {}", crop.width(), crop.height())?;
        self.writer.write_all(crop.pixels())?;
        self.writer.flush()?;

        let header = read_line(&mut self.reader)?;
        let mut parts = header.split_ascii_whitespace();
        let ok = parts.next() == Some("DET")
            && parts.next() == Some(id.to_string().as_str());
        let count: Option<usize> = parts.next().and_then(|s| s.parse().ok());
        let (true, Some(count), None) = (ok, count, parts.next()) else {
            return Err(malformed(&header));
        };

        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let line = read_line(&mut self.reader)?;
            let fields: Vec<f64> = line
                .split_ascii_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| malformed(&line))?;
            let [x, y, w, h, conf] = fields[..] else {
                return Err(malformed(&line));
            };
            if !(0.0..=1.0).contains(&conf) || w < 0.0 || h < 0.0 {
                return Err(malformed(&line));
            }
            out.push(Detection {
                bbox: BoundingBox::new(x, y, w, h),
                confidence: conf,
                stage: Stage::Refined,
            });
        }
        Ok(out)
    }
}

/// Handle to a spawned backend process. The handle is single-writer; a
/// protocol violation poisons it and kills the child.
pub struct ExternalBackend {
    child: Child,
    client: ProtocolClient<BufReader<ChildStdout>, BufWriter<ChildStdin>>,
    kind: ProtocolKind,
    poisoned: bool,
}

impl ExternalBackend {
    /// Spawn `program args...` and perform the handshake.
    pub fn spawn(
        program: &str,
        args: &[String],
        kind: ProtocolKind,
    ) -> Result<Self, BackendError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = ProtocolClient::new(BufReader::new(stdout), BufWriter::new(stdin));
        if let Err(e) = client.handshake(kind) {
            let _ = child.kill();
            return Err(e);
        }
        Ok(Self { child, client, kind, poisoned: false })
    }

    fn guard<T>(&mut self, r: Result<T, BackendError>) -> Result<T, BackendError> {
        if r.is_err() {
            self.poisoned = true;
            let _ = self.child.kill();
        }
        r
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl CropClassifier for ExternalBackend {
    fn classify(&mut self, crop: &Frame) -> Result<ClassifierScore, BackendError> {
        if self.poisoned {
            return Err(BackendError::Poisoned);
        }
        if self.kind != ProtocolKind::Classifier {
            return Err(BackendError::Protocol("backend spawned as detector".into()));
        }
        let score = self.client.classify(crop);
        self.guard(score).map(ClassifierScore::new)
    }
}

impl CropDetector for ExternalBackend {
    fn detect(&mut self, crop: &Frame) -> Result<Vec<Detection>, BackendError> {
        if self.poisoned {
            return Err(BackendError::Poisoned);
        }
        if self.kind != ProtocolKind::Detector {
            return Err(BackendError::Protocol("backend spawned as classifier".into()));
        }
        let dets = self.client.detect(crop);
        self.guard(dets)
    }
}

/// The backend a protocol server exposes.
pub enum ServeBackend {
    Classifier(Box<dyn CropClassifier>),
    Detector(Box<dyn CropDetector>),
}

/// Child-side loop: answer requests until the peer closes the stream.
/// Used by the CLI's `backend-stub` subcommand and by the protocol tests.
pub fn serve_protocol(
    mut reader: impl BufRead,
    mut writer: impl Write,
    mut backend: ServeBackend,
) -> Result<(), BackendError> {
    let expected = match backend {
        ServeBackend::Classifier(_) => ProtocolKind::Classifier,
        ServeBackend::Detector(_) => ProtocolKind::Detector,
    };
    let hello = read_line(&mut reader)?;
    if hello != expected.handshake() {
        return Err(malformed(&hello));
    }
    writeln!(writer, "OK")?;
    writer.flush()?;

    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            return Ok(()); // clean shutdown
        }
        let header = header.trim_end_matches(['\r', '\n']).to_string();
        let mut parts = header.split_ascii_whitespace();
        let verb = parts.next().unwrap_or_default();
        let id: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| malformed(&header))?;
        let w: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| malformed(&header))?;
        let h: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| malformed(&header))?;
        if parts.next().is_some() || w == 0 || h == 0 {
            return Err(malformed(&header));
        }
        let mut pixels = vec![0u8; w as usize * h as usize];
        reader.read_exact(&mut pixels)?;
        let crop = Frame::new(w, h, 0, pixels);

        match (&mut backend, verb) {
            (ServeBackend::Classifier(cls), "CLS") if (w, h) == (CLASSIFIER_CROP, CLASSIFIER_CROP) => {
                let score = cls.classify(&crop)?;
                writeln!(writer, "CLS {id} {}", score.value())?;
            }
            (ServeBackend::Detector(det), "DET") => {
                let dets = det.detect(&crop)?;
                writeln!(writer, "DET {id} {}", dets.len())?;
                for d in dets {
                    writeln!(
                        writer,
                        "{} {} {} {} {}",
                        d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence
                    )?;
                }
            }
            _ => return Err(malformed(&header)),
        }
        writer.flush()?;
    }
}
