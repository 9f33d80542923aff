//! AMR-NB round trip through an external encoder/decoder.

use serde::{Deserialize, Serialize};

use super::{Bitrate, CodecError};
use crate::audio_io::{self, AudioClip, NARROWBAND_RATE, WIDEBAND_RATE};
use crate::tool::CommandTemplate;

/// Replaces the program of both codec templates when set.
pub const CODEC_BIN_ENV: &str = "AMRCONVNET_CODEC_BIN";

/// Encode and decode command templates. Placeholders: `{input}`, `{output}`,
/// `{bitrate}` (kbit/s, two decimals).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecTool {
    pub encode: CommandTemplate,
    pub decode: CommandTemplate,
}

impl Default for CodecTool {
    fn default() -> Self {
        Self {
            encode: CommandTemplate::new(
                "ffmpeg -hide_banner -loglevel error -y -i {input} -ar 8000 -ac 1 -c:a libopencore_amrnb -b:a {bitrate}k {output}",
            ),
            decode: CommandTemplate::new(
                "ffmpeg -hide_banner -loglevel error -y -i {input} -ar 8000 -ac 1 -c:a pcm_s16le {output}",
            ),
        }
    }
}

/// Resamples a 16 kHz clip to 8 kHz, round-trips it through the codec and
/// returns exactly half as many samples as the input.
pub fn encode_decode_amr(clip: &AudioClip, bitrate: Bitrate, tool: &CodecTool) -> Result<AudioClip, CodecError> {
    if clip.sample_rate != WIDEBAND_RATE {
        return Err(CodecError::SampleRate {
            expected: WIDEBAND_RATE,
            got: clip.sample_rate,
        });
    }
    let narrow = audio_io::resample(clip, NARROWBAND_RATE)?;
    let dir = tempfile::tempdir().map_err(|e| CodecError::Io {
        path: std::env::temp_dir(),
        source: e,
    })?;
    let pcm_in = dir.path().join("input.wav");
    let amr = dir.path().join("coded.amr");
    let pcm_out = dir.path().join("decoded.wav");
    audio_io::write_wav(&narrow, &pcm_in)?;

    let rate = format!("{:.2}", bitrate.kbps());
    let (pcm_in_s, amr_s, pcm_out_s) = (
        pcm_in.to_string_lossy(),
        amr.to_string_lossy(),
        pcm_out.to_string_lossy(),
    );
    tool.encode.run(
        &[("input", &pcm_in_s), ("output", &amr_s), ("bitrate", &rate)],
        Some(CODEC_BIN_ENV),
    )?;
    tool.decode.run(
        &[("input", &amr_s), ("output", &pcm_out_s), ("bitrate", &rate)],
        Some(CODEC_BIN_ENV),
    )?;

    let decoded = audio_io::read_wav(&pcm_out).map_err(CodecError::OutputUnparsable)?;
    let mut decoded = if decoded.sample_rate == NARROWBAND_RATE {
        decoded
    } else {
        audio_io::resample(&decoded, NARROWBAND_RATE)?
    };
    decoded.fit_to_len(clip.len() / 2);
    Ok(decoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn script(dir: &std::path::Path, name: &str, body: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn tone() -> AudioClip {
        AudioClip::new(
            (0..32001).map(|t| 0.3 * (t as f64 * 0.2).sin()).collect(),
            16000,
        )
    }

    #[test]
    fn passthrough_tool_preserves_duration() {
        let dir = tempfile::tempdir().unwrap();
        let cp = script(dir.path(), "fake.sh", "cp \"$1\" \"$2\"");
        let tool = CodecTool {
            encode: CommandTemplate::new(format!("{cp} {{input}} {{output}} {{bitrate}}")),
            decode: CommandTemplate::new(format!("{cp} {{input}} {{output}}")),
        };
        let out = encode_decode_amr(&tone(), Bitrate::Kbps12_20, &tool).unwrap();
        assert_eq!(out.sample_rate, 8000);
        assert_eq!(out.len(), 16000);
    }

    #[test]
    fn failure_kinds_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = CodecTool {
            encode: CommandTemplate::new("no-such-codec-binary {input} {output}"),
            decode: CommandTemplate::new("no-such-codec-binary {input} {output}"),
        };
        let err = encode_decode_amr(&tone(), Bitrate::Kbps4_75, &missing).unwrap_err();
        assert!(matches!(err, CodecError::Tool(crate::tool::ToolError::NotFound(_))), "{err}");

        let fails = script(dir.path(), "fail.sh", "exit 3");
        let failing = CodecTool {
            encode: CommandTemplate::new(format!("{fails} {{input}}")),
            decode: CommandTemplate::new(format!("{fails} {{input}}")),
        };
        let err = encode_decode_amr(&tone(), Bitrate::Kbps4_75, &failing).unwrap_err();
        assert!(matches!(err, CodecError::Tool(crate::tool::ToolError::Failed { .. })), "{err}");

        let junk = script(dir.path(), "junk.sh", "echo junk > \"$2\"");
        let garbage = CodecTool {
            encode: CommandTemplate::new(format!("{junk} {{input}} {{output}}")),
            decode: CommandTemplate::new(format!("{junk} {{input}} {{output}}")),
        };
        let err = encode_decode_amr(&tone(), Bitrate::Kbps4_75, &garbage).unwrap_err();
        assert!(matches!(err, CodecError::OutputUnparsable(_)), "{err}");
    }

    #[test]
    fn rejects_narrowband_input() {
        let err = encode_decode_amr(&AudioClip::silence(80, 8000), Bitrate::Kbps4_75, &CodecTool::default());
        assert!(matches!(err, Err(CodecError::SampleRate { .. })));
    }
}
