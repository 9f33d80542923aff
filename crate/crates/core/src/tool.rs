//! External command templates.
//!
//! A template is a whitespace-separated command line whose tokens may contain
//! `{name}` placeholders. Tokens are substituted individually and passed to the
//! program directly, without a shell, so paths with spaces stay intact.

use std::io;
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("empty command template")]
    EmptyTemplate,
    #[error("external tool `{0}` not found")]
    NotFound(String),
    #[error("`{program}` exited with {status}: {stderr}")]
    Failed {
        program: String,
        status: String,
        stderr: String,
    },
    #[error("failed to run `{program}`: {source}")]
    Io { program: String, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandTemplate(pub String);

impl CommandTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        Self(template.into())
    }

    /// Substitutes placeholders; the program token is replaced by the value of
    /// `program_env` when that variable is set.
    pub fn render(&self, subs: &[(&str, &str)], program_env: Option<&str>) -> Result<Vec<String>, ToolError> {
        let mut argv: Vec<String> = self
            .0
            .split_whitespace()
            .map(|tok| {
                subs.iter()
                    .fold(tok.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
            })
            .collect();
        if argv.is_empty() {
            return Err(ToolError::EmptyTemplate);
        }
        if let Some(bin) = program_env.and_then(|var| std::env::var(var).ok()) {
            if !bin.is_empty() {
                argv[0] = bin;
            }
        }
        Ok(argv)
    }

    /// Runs the rendered command and returns its output when it exits with 0.
    pub fn run(&self, subs: &[(&str, &str)], program_env: Option<&str>) -> Result<Output, ToolError> {
        let argv = self.render(subs, program_env)?;
        let program = argv[0].clone();
        let output = Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => ToolError::NotFound(program.clone()),
                _ => ToolError::Io {
                    program: program.clone(),
                    source: e,
                },
            })?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(ToolError::Failed {
                program,
                status: output.status.to_string(),
                stderr: stderr.lines().last().unwrap_or("").trim().to_string(),
            });
        }
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_each_token() {
        let t = CommandTemplate::new("tool -i {input} -b:a {bitrate}k {output}");
        let argv = t
            .render(&[("input", "/a b/in.wav"), ("output", "out.amr"), ("bitrate", "4.75")], None)
            .unwrap();
        assert_eq!(argv, ["tool", "-i", "/a b/in.wav", "-b:a", "4.75k", "out.amr"]);
    }

    #[test]
    fn missing_program_is_distinct() {
        let t = CommandTemplate::new("definitely-not-a-real-program-xyz {input}");
        assert!(matches!(t.run(&[("input", "x")], None), Err(ToolError::NotFound(_))));
        assert!(matches!(CommandTemplate::new("  ").run(&[], None), Err(ToolError::EmptyTemplate)));
    }

    #[test]
    fn nonzero_exit_is_distinct() {
        let t = CommandTemplate::new("false");
        assert!(matches!(t.run(&[], None), Err(ToolError::Failed { .. })));
    }
}
