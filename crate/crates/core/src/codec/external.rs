//! Size measurement through an external FFmpeg build.
//!
//! Only the byte count of the produced elementary stream is used; the
//! stream itself is never parsed. The FFmpeg binary is taken from the
//! `ISOMER_FFMPEG` environment variable, falling back to `ffmpeg` on `PATH`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::{ClipSpec, CodecId, EncodeResult};
use crate::error::{Error, Result};
use crate::io::write_y4m_file;

pub const FFMPEG_ENV: &str = "ISOMER_FFMPEG";

/// Lossless encoder settings, passed to FFmpeg verbatim.
pub fn encoder_flags(codec: CodecId) -> Option<&'static str> {
    match codec {
        CodecId::H264 => Some("-preset medium -crf 0 -an"),
        CodecId::Hevc => Some("-preset medium -x265-params lossless=1 -crf 0 -an"),
        CodecId::Vp9 => Some("-speed 4 -cpu-used 4 -lossless 1 -qmin 0 -qmax 0 -an"),
        CodecId::Reference => None,
    }
}

/// FFmpeg encoder name and raw output muxer for each external codec.
fn encoder_and_muxer(codec: CodecId) -> Option<(&'static str, &'static str, &'static str)> {
    match codec {
        CodecId::H264 => Some(("libx264", "h264", "h264")),
        CodecId::Hevc => Some(("libx265", "hevc", "hevc")),
        CodecId::Vp9 => Some(("libvpx-vp9", "ivf", "ivf")),
        CodecId::Reference => None,
    }
}

pub fn ffmpeg_program() -> PathBuf {
    std::env::var_os(FFMPEG_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("ffmpeg"))
}

/// Full FFmpeg argument vector for encoding `input` into `output`.
pub fn ffmpeg_args(codec: CodecId, input: &Path, output: &Path) -> Result<Vec<OsString>> {
    let (encoder, muxer, _) = encoder_and_muxer(codec)
        .ok_or_else(|| Error::Config(format!("{codec} is not an external codec")))?;
    let flags = encoder_flags(codec).expect("external codecs have flags");
    let mut args: Vec<OsString> = ["-hide_banner", "-nostdin", "-loglevel", "error", "-y", "-i"]
        .iter()
        .map(OsString::from)
        .collect();
    args.push(input.into());
    args.push("-c:v".into());
    args.push(encoder.into());
    args.extend(flags.split_whitespace().map(OsString::from));
    args.push("-f".into());
    args.push(muxer.into());
    args.push(output.into());
    Ok(args)
}

/// True when the FFmpeg binary can be started.
pub fn ffmpeg_available() -> bool {
    Command::new(ffmpeg_program())
        .arg("-version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

pub fn encode_external(clip: &ClipSpec, codec: CodecId) -> Result<EncodeResult> {
    let (_, _, ext) = encoder_and_muxer(codec)
        .ok_or_else(|| Error::Config(format!("{codec} is not an external codec")))?;
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input = dir.path().join("clip.y4m");
    let output = dir.path().join(format!("clip.{ext}"));
    let fps = clip.fps.round().max(1.0) as u32;
    write_y4m_file(&input, &clip.luma_planes(), fps)?;

    let program = ffmpeg_program();
    let result = Command::new(&program)
        .args(ffmpeg_args(codec, &input, &output)?)
        .output()
        .map_err(|e| Error::Environment(format!("cannot run {}: {e}", program.display())))?;
    if !result.status.success() {
        return Err(Error::Encode {
            message: format!("{} exited with {}", program.display(), result.status),
            log: String::from_utf8_lossy(&result.stderr).into_owned(),
        });
    }
    let bytes = std::fs::metadata(&output)
        .map_err(|e| Error::io(&output, e))?
        .len();
    if bytes == 0 {
        return Err(Error::Encode {
            message: "encoder produced an empty stream".into(),
            log: String::from_utf8_lossy(&result.stderr).into_owned(),
        });
    }
    Ok(EncodeResult {
        codec,
        bytes,
        motion: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_strings_are_verbatim() {
        assert_eq!(
            encoder_flags(CodecId::H264),
            Some("-preset medium -crf 0 -an")
        );
        assert_eq!(
            encoder_flags(CodecId::Hevc),
            Some("-preset medium -x265-params lossless=1 -crf 0 -an")
        );
        assert_eq!(
            encoder_flags(CodecId::Vp9),
            Some("-speed 4 -cpu-used 4 -lossless 1 -qmin 0 -qmax 0 -an")
        );
        assert_eq!(encoder_flags(CodecId::Reference), None);
    }

    #[test]
    fn argument_vector_embeds_flags_in_order() {
        let args = ffmpeg_args(CodecId::H264, Path::new("in.y4m"), Path::new("out.h264")).unwrap();
        let joined = args
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join(" ");
        assert!(
            joined.contains("-c:v libx264 -preset medium -crf 0 -an -f h264 out.h264"),
            "{joined}"
        );
        assert!(ffmpeg_args(CodecId::Reference, Path::new("a"), Path::new("b")).is_err());
    }
}
