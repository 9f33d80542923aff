//! Adapter for an external PESQ (ITU-T P.862) implementation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::tool::{CommandTemplate, ToolError};

/// Replaces the program of the PESQ template when set.
pub const PESQ_BIN_ENV: &str = "AMRCONVNET_PESQ_BIN";
/// Range of the MOS-LQO mapping.
pub const MOS_LQO_RANGE: (f64, f64) = (1.02, 4.56);

/// Command template with `{ref}` and `{deg}` placeholders. The tool must
/// print a MOS-LQO value; the number on the last line mentioning `MOS-LQO`
/// is taken, or else the last number printed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PesqTool {
    pub command: CommandTemplate,
}

impl Default for PesqTool {
    fn default() -> Self {
        Self {
            command: CommandTemplate::new("pesq +16000 +wb {ref} {deg}"),
        }
    }
}

fn last_number(line: &str) -> Option<f64> {
    line.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == 'e' || c == 'E' || c == '+'))
        .filter_map(|t| t.trim_matches(|c| c == '.' || c == '-' || c == '+').parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .last()
}

pub(crate) fn parse_mos(stdout: &str) -> Result<f64, MetricError> {
    let tagged = stdout.lines().filter(|l| l.contains("MOS-LQO")).filter_map(last_number).last();
    let value = tagged
        .or_else(|| stdout.lines().filter_map(last_number).last())
        .ok_or_else(|| MetricError::Unparsable(stdout.lines().last().unwrap_or("").trim().to_string()))?;
    let (lo, hi) = MOS_LQO_RANGE;
    if !(lo..=hi).contains(&value) {
        return Err(MetricError::Unparsable(format!("score {value} outside [{lo}, {hi}]")));
    }
    Ok(value)
}

/// MOS-LQO of `test_path` against `truth_path`.
pub fn pesq_mos_lqo(truth_path: &Path, test_path: &Path, tool: &PesqTool) -> Result<f64, MetricError> {
    let (r, d) = (truth_path.to_string_lossy(), test_path.to_string_lossy());
    let out = tool
        .command
        .run(&[("ref", &r), ("deg", &d)], Some(PESQ_BIN_ENV))
        .map_err(|e| match e {
            ToolError::NotFound(p) => MetricError::ToolMissing(p),
            other => MetricError::Tool(other),
        })?;
    parse_mos(&String::from_utf8_lossy(&out.stdout))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_output() {
        let text = "Reading reference file ...\nP.862.2 Prediction (MOS-LQO):  = 3.514\n";
        assert_eq!(parse_mos(text).unwrap(), 3.514);
        assert_eq!(parse_mos("4.12\n").unwrap(), 4.12);
        assert!(matches!(parse_mos("no score"), Err(MetricError::Unparsable(_))));
        assert!(matches!(parse_mos("MOS-LQO = 7.0"), Err(MetricError::Unparsable(_))));
    }

    #[test]
    fn missing_tool_is_distinct() {
        let tool = PesqTool {
            command: CommandTemplate::new("no-such-pesq-binary {ref} {deg}"),
        };
        let err = pesq_mos_lqo(Path::new("a.wav"), Path::new("b.wav"), &tool).unwrap_err();
        assert!(matches!(err, MetricError::ToolMissing(_)));
    }
}
