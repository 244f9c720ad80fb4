//! On-disk formats: zero-padded PGM/PNG frame sequences, annotation and
//! detection CSVs, and annotated frame export.

use crate::appearance::{Detection, Stage};
use crate::eval::{DetectionRecord, GroundTruth};
use crate::imgproc::{luma_rec601, BoundingBox, Frame};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqIoError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: usize, message: String },
    #[error("missing frame {index} in {dir} (indices must be contiguous from 0)")]
    MissingFrame { dir: PathBuf, index: u64 },
    #[error("no frames found in {0}")]
    EmptySequence(PathBuf),
    #[error("{file}: {message}")]
    BadImage { file: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SeqIoError + '_ {
    move |source| SeqIoError::Io { path: path.to_path_buf(), source }
}

// --- single images ----------------------------------------------------------

/// Write a binary 8-bit PGM (P5).
pub fn save_pgm(path: &Path, frame: &Frame) -> Result<(), SeqIoError> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    let header = format!("P5\n{} {}\n255\n", frame.width(), frame.height());
    file.write_all(header.as_bytes()).map_err(io_err(path))?;
    file.write_all(frame.pixels()).map_err(io_err(path))?;
    Ok(())
}

/// Read a binary 8-bit PGM (P5), tolerating comments and whitespace in the
/// header.
pub fn load_pgm(path: &Path, index: u64) -> Result<Frame, SeqIoError> {
    let bad = |message: &str| SeqIoError::BadImage { file: path.to_path_buf(), message: message.into() };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and `#` comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| bad("bad header number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval must be in 1..=255"));
    }
    pos += 1; // single whitespace byte after maxval
    let expected = (width * height) as usize;
    let data = bytes.get(pos..pos + expected).ok_or_else(|| bad("truncated pixel data"))?;
    Ok(Frame::new(width as u32, height as u32, index, data.to_vec()))
}

fn load_png(path: &Path, index: u64) -> Result<Frame, SeqIoError> {
    let img = image::open(path)
        .map_err(|e| SeqIoError::BadImage { file: path.to_path_buf(), message: e.to_string() })?;
    let frame = match img {
        image::DynamicImage::ImageLuma8(gray) => Frame::new(
            gray.width(),
            gray.height(),
            index,
            gray.into_raw(),
        ),
        other => {
            let rgb = other.to_rgb8();
            let pixels =
                rgb.pixels().map(|p| luma_rec601(p.0[0], p.0[1], p.0[2])).collect();
            Frame::new(rgb.width(), rgb.height(), index, pixels)
        }
    };
    Ok(frame)
}

pub fn save_png(path: &Path, frame: &Frame) -> Result<(), SeqIoError> {
    let img = image::GrayImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
        .expect("frame pixel count matches dimensions");
    img.save(path)
        .map_err(|e| SeqIoError::BadImage { file: path.to_path_buf(), message: e.to_string() })
}

// --- frame sequences --------------------------------------------------------

fn frame_path(dir: &Path, index: u64) -> Option<PathBuf> {
    for ext in ["pgm", "png"] {
        let p = dir.join(format!("{index:06}.{ext}"));
        if p.exists() {
            return Some(p);
        }
    }
    None
}

/// Load `%06d.pgm` / `%06d.png` frames, contiguous from 0. A numbered frame
/// file beyond a gap is an error.
pub fn load_sequence(dir: &Path) -> Result<Vec<Frame>, SeqIoError> {
    let mut frames = Vec::new();
    let mut index = 0u64;
    while let Some(path) = frame_path(dir, index) {
        let frame = if path.extension().is_some_and(|e| e == "pgm") {
            load_pgm(&path, index)?
        } else {
            load_png(&path, index)?
        };
        frames.push(frame);
        index += 1;
    }
    if frames.is_empty() {
        return Err(SeqIoError::EmptySequence(dir.to_path_buf()));
    }
    // Reject sequences that continue after a gap.
    let max_seen = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let stem = name.strip_suffix(".pgm").or_else(|| name.strip_suffix(".png"))?;
            stem.parse::<u64>().ok()
        })
        .max();
    if let Some(max_seen) = max_seen {
        if max_seen >= index {
            return Err(SeqIoError::MissingFrame { dir: dir.to_path_buf(), index });
        }
    }
    Ok(frames)
}

/// Write frames as `%06d.pgm`, indices from 0.
pub fn save_sequence(dir: &Path, frames: &[Frame]) -> Result<(), SeqIoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, f) in frames.iter().enumerate() {
        save_pgm(&dir.join(format!("{i:06}.pgm")), f)?;
    }
    Ok(())
}

// --- CSV formats -------------------------------------------------------------

fn parse_fields<'a>(
    line: &'a str,
    expected: usize,
    file: &Path,
    line_no: usize,
) -> Result<Vec<&'a str>, SeqIoError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(SeqIoError::Parse {
            file: file.to_path_buf(),
            line: line_no,
            message: format!("expected {expected} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_num<T: std::str::FromStr>(
    s: &str,
    what: &str,
    file: &Path,
    line_no: usize,
) -> Result<T, SeqIoError> {
    s.parse().map_err(|_| SeqIoError::Parse {
        file: file.to_path_buf(),
        line: line_no,
        message: format!("bad {what} `{s}`"),
    })
}

/// Ground truth CSV: `frame,id,x,y,w,h`, no header.
pub fn load_annotations(path: &Path) -> Result<GroundTruth, SeqIoError> {
    let reader = BufReader::new(std::fs::File::open(path).map_err(io_err(path))?);
    let mut gt = GroundTruth::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(&line, 6, path, line_no)?;
        let frame: u64 = parse_num(f[0], "frame", path, line_no)?;
        let id: u64 = parse_num(f[1], "id", path, line_no)?;
        let x: f64 = parse_num(f[2], "x", path, line_no)?;
        let y: f64 = parse_num(f[3], "y", path, line_no)?;
        let w: f64 = parse_num(f[4], "w", path, line_no)?;
        let h: f64 = parse_num(f[5], "h", path, line_no)?;
        gt.push(frame, id, BoundingBox::new(x, y, w, h));
    }
    Ok(gt)
}

pub fn save_annotations(path: &Path, gt: &GroundTruth) -> Result<(), SeqIoError> {
    let mut out = String::new();
    for (frame, id, b) in gt.records() {
        writeln!(out, "{frame},{id},{},{},{},{}", b.x, b.y, b.w, b.h).unwrap();
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Detections CSV: `frame,x,y,w,h,confidence,stage`, no header.
pub fn save_detections(path: &Path, records: &[DetectionRecord]) -> Result<(), SeqIoError> {
    let mut out = String::new();
    for r in records {
        let b = r.det.bbox;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.frame, b.x, b.y, b.w, b.h, r.det.confidence, r.det.stage
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>, SeqIoError> {
    let reader = BufReader::new(std::fs::File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(&line, 7, path, line_no)?;
        let frame: u64 = parse_num(f[0], "frame", path, line_no)?;
        let x: f64 = parse_num(f[1], "x", path, line_no)?;
        let y: f64 = parse_num(f[2], "y", path, line_no)?;
        let w: f64 = parse_num(f[3], "w", path, line_no)?;
        let h: f64 = parse_num(f[4], "h", path, line_no)?;
        let confidence: f64 = parse_num(f[5], "confidence", path, line_no)?;
        let stage: Stage = f[6].parse().map_err(|e| SeqIoError::Parse {
            file: path.to_path_buf(),
            line: line_no,
            message: e,
        })?;
        out.push(DetectionRecord {
            frame,
            det: Detection { bbox: BoundingBox::new(x, y, w, h), confidence, stage },
        });
    }
    Ok(out)
}

/// Copy of `frame` with 1-px white rectangles drawn around `boxes`.
pub fn annotate_frame(frame: &Frame, boxes: &[BoundingBox]) -> Frame {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let mut pixels = frame.pixels().to_vec();
    let mut put = |x: i64, y: i64| {
        if x >= 0 && x < w && y >= 0 && y < h {
            pixels[(y * w + x) as usize] = 255;
        }
    };
    for b in boxes {
        let x0 = b.x.floor() as i64 - 1;
        let y0 = b.y.floor() as i64 - 1;
        let x1 = b.right().ceil() as i64;
        let y1 = b.bottom().ceil() as i64;
        for x in x0..=x1 {
            put(x, y0);
            put(x, y1);
        }
        for y in y0..=y1 {
            put(x0, y);
            put(x1, y);
        }
    }
    Frame::new(frame.width(), frame.height(), frame.index, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("mgd_seqio").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn sample_frame(index: u64) -> Frame {
        Frame::new(7, 5, index, (0..35).map(|i| (i * 7 % 256) as u8).collect())
    }

    #[test]
    fn pgm_round_trip_is_exact() {
        let dir = temp_dir("pgm");
        let path = dir.join("frame.pgm");
        let f = sample_frame(3);
        save_pgm(&path, &f).unwrap();
        let loaded = load_pgm(&path, 3).unwrap();
        assert_eq!(loaded, f);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = temp_dir("pgm_comments");
        let path = dir.join("c.pgm");
        let mut bytes = b"P5\n# a comment\n3 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        std::fs::write(&path, bytes).unwrap();
        let f = load_pgm(&path, 0).unwrap();
        assert_eq!((f.width(), f.height()), (3, 2));
        assert_eq!(f.pixels(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn sequence_round_trip_and_gap_detection() {
        let dir = temp_dir("seq");
        let frames: Vec<Frame> = (0..4).map(sample_frame).collect();
        save_sequence(&dir, &frames).unwrap();
        let loaded = load_sequence(&dir).unwrap();
        assert_eq!(loaded, frames);

        std::fs::remove_file(dir.join("000002.pgm")).unwrap();
        match load_sequence(&dir) {
            Err(SeqIoError::MissingFrame { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = temp_dir("png");
        let path = dir.join("000000.png");
        let f = sample_frame(0);
        save_png(&path, &f).unwrap();
        let loaded = load_sequence(&dir).unwrap();
        assert_eq!(loaded[0], f);
    }

    #[test]
    fn annotation_line_parses_per_format() {
        let dir = temp_dir("ann");
        let path = dir.join("gt.csv");
        std::fs::write(&path, "12,3,100,200,10,8\n").unwrap();
        let gt = load_annotations(&path).unwrap();
        let records: Vec<_> = gt.records().collect();
        assert_eq!(records, vec![(12, 3, BoundingBox::new(100.0, 200.0, 10.0, 8.0))]);
    }

    #[test]
    fn malformed_line_names_file_and_line() {
        let dir = temp_dir("bad");
        let path = dir.join("gt.csv");
        std::fs::write(&path, "0,1,2,3,4,5\n0,1,oops,3,4,5\n").unwrap();
        match load_annotations(&path) {
            Err(SeqIoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn detection_csv_round_trip() {
        let dir = temp_dir("det");
        let path = dir.join("det.csv");
        let records = vec![
            DetectionRecord {
                frame: 4,
                det: Detection {
                    bbox: BoundingBox::new(10.0, 20.5, 8.0, 8.0),
                    confidence: 0.75,
                    stage: Stage::Refined,
                },
            },
            DetectionRecord {
                frame: 5,
                det: Detection {
                    bbox: BoundingBox::new(1.0, 2.0, 3.0, 4.0),
                    confidence: 1.0,
                    stage: Stage::Motion,
                },
            },
        ];
        save_detections(&path, &records).unwrap();
        let loaded = load_detections(&path).unwrap();
        assert_eq!(loaded, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "4,10,20.5,8,8,0.75,refined\n5,1,2,3,4,1,motion\n");
    }

    #[test]
    fn annotate_draws_box_border() {
        let f = Frame::filled(20, 20, 0, 10);
        let out = annotate_frame(&f, &[BoundingBox::new(5.0, 5.0, 4.0, 4.0)]);
        assert_eq!(out.get(4, 4), 255);
        assert_eq!(out.get(9, 4), 255);
        assert_eq!(out.get(6, 6), 10, "interior untouched");
    }
}
