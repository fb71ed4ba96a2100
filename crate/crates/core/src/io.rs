//! Frame sequence I/O: numbered 8-bit PNG directories and YUV4MPEG2 streams.
//!
//! Only luma is kept on read. Y4M output carries neutral (128) chroma in
//! 4:2:0 so standard tools accept the stream.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::Plane;

/// Writes `frame_00000.png`, `frame_00001.png`, ... into `dir`.
pub fn write_png_sequence(dir: &Path, frames: &[Plane]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = dir.join(format!("frame_{i:05}.png"));
            write_png(&path, p)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.png` in `dir` in lexicographic filename order, converting to luma.
pub fn read_png_sequence(dir: &Path) -> Result<Vec<Plane>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no PNG frames in {}", dir.display())));
    }
    paths.iter().map(|p| read_png(p)).collect()
}

pub fn read_png(path: &Path) -> Result<Plane> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Plane::new(w as usize, h as usize, img.into_raw())
}

pub fn write_png(path: &Path, p: &Plane) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let img = image::GrayImage::from_raw(p.width() as u32, p.height() as u32, p.data().to_vec())
        .expect("plane dimensions match its buffer");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    Mono,
    C420,
    C422,
    C444,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            t if t.starts_with("420") => Ok(Chroma::C420),
            "422" => Ok(Chroma::C422),
            "444" => Ok(Chroma::C444),
            "mono" => Ok(Chroma::Mono),
            other => Err(Error::Input(format!(
                "unsupported y4m colourspace C{other}"
            ))),
        }
    }

    fn chroma_bytes(self, w: usize, h: usize) -> usize {
        let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
        match self {
            Chroma::Mono => 0,
            Chroma::C420 => 2 * cw * ch,
            Chroma::C422 => 2 * cw * h,
            Chroma::C444 => 2 * w * h,
        }
    }
}

/// Stream header fields that matter here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Y4mInfo {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl Y4mInfo {
    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den.max(1) as f64
    }
}

pub fn write_y4m<W: Write>(out: W, frames: &[Plane], fps: u32) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("cannot write an empty y4m stream".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut out = BufWriter::new(out);
    let io_err = |e| Error::io("<y4m stream>", e);
    writeln!(out, "YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 C420jpeg").map_err(io_err)?;
    let chroma = vec![128u8; Chroma::C420.chroma_bytes(w, h)];
    for (i, f) in frames.iter().enumerate() {
        if !f.same_dims(first) {
            return Err(Error::Input(format!("frame {i} has mismatched dimensions")));
        }
        out.write_all(b"FRAME\n").map_err(io_err)?;
        out.write_all(f.data()).map_err(io_err)?;
        out.write_all(&chroma).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_y4m_file(path: &Path, frames: &[Plane], fps: u32) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_y4m(file, frames, fps)
}

pub fn read_y4m<R: Read>(input: R) -> Result<(Y4mInfo, Vec<Plane>)> {
    let mut input = BufReader::new(input);
    let mut header = String::new();
    input
        .read_line(&mut header)
        .map_err(|e| Error::io("<y4m stream>", e))?;
    let mut tokens = header.trim_end().split(' ');
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(Error::Input("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height) = (0usize, 0usize);
    let (mut fps_num, mut fps_den) = (25u32, 1u32);
    let mut chroma = Chroma::C420;
    for tok in tokens {
        let (tag, val) = tok.split_at(1.min(tok.len()));
        match tag {
            "W" => {
                width = val
                    .parse()
                    .map_err(|_| Error::Input(format!("bad width {val}")))?
            }
            "H" => {
                height = val
                    .parse()
                    .map_err(|_| Error::Input(format!("bad height {val}")))?
            }
            "F" => {
                let (n, d) = val
                    .split_once(':')
                    .ok_or_else(|| Error::Input(format!("bad frame rate {val}")))?;
                fps_num = n
                    .parse()
                    .map_err(|_| Error::Input(format!("bad frame rate {val}")))?;
                fps_den = d
                    .parse()
                    .map_err(|_| Error::Input(format!("bad frame rate {val}")))?;
            }
            "C" => chroma = Chroma::parse(val)?,
            _ => {}
        }
    }
    if width == 0 || height == 0 {
        return Err(Error::Input("y4m header lacks dimensions".into()));
    }
    let skip = chroma.chroma_bytes(width, height);
    let mut frames = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = input
            .read_line(&mut line)
            .map_err(|e| Error::io("<y4m stream>", e))?;
        if n == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(Error::Input(format!(
                "expected FRAME marker, got {:?}",
                line.trim_end()
            )));
        }
        let mut luma = vec![0u8; width * height];
        input
            .read_exact(&mut luma)
            .map_err(|e| Error::Input(format!("truncated y4m frame {}: {e}", frames.len())))?;
        let mut rest = vec![0u8; skip];
        input
            .read_exact(&mut rest)
            .map_err(|e| Error::Input(format!("truncated y4m chroma {}: {e}", frames.len())))?;
        frames.push(Plane::new(width, height, luma)?);
    }
    Ok((
        Y4mInfo {
            width,
            height,
            fps_num,
            fps_den,
        },
        frames,
    ))
}

pub fn read_y4m_file(path: &Path) -> Result<(Y4mInfo, Vec<Plane>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_y4m(file)
}

/// Reads a clip from either a `.y4m` file or a PNG directory. PNG sequences
/// carry no frame rate, so `None` is returned for it.
pub fn read_frames(path: &Path) -> Result<(Option<f64>, Vec<Plane>)> {
    if path.is_dir() {
        Ok((None, read_png_sequence(path)?))
    } else if path.exists() {
        let (info, frames) = read_y4m_file(path)?;
        Ok((Some(info.fps()), frames))
    } else {
        Err(Error::Input(format!("{} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames() -> Vec<Plane> {
        (0..3)
            .map(|k| Plane::from_fn(10, 6, |x, y| (x * 20 + y * 7 + k * 3) as u8))
            .collect()
    }

    #[test]
    fn y4m_round_trip() {
        let mut buf = Vec::new();
        write_y4m(&mut buf, &frames(), 30).unwrap();
        let (info, back) = read_y4m(&buf[..]).unwrap();
        assert_eq!(info.width, 10);
        assert_eq!(info.fps(), 30.0);
        assert_eq!(back, frames());
    }

    #[test]
    fn y4m_rejects_garbage() {
        assert!(read_y4m(&b"NOTY4M W2 H2\n"[..]).is_err());
        assert!(read_y4m(&b"YUV4MPEG2 W4 H4 Cmono\nFRAME\n\x00\x01"[..]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_png_sequence(dir.path(), &frames()).unwrap();
        assert_eq!(read_png_sequence(dir.path()).unwrap(), frames());
        let (fps, f) = read_frames(dir.path()).unwrap();
        assert!(fps.is_none());
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn missing_input_is_an_input_error() {
        assert!(matches!(
            read_frames(Path::new("/definitely/not/here")),
            Err(Error::Input(_))
        ));
    }
}
