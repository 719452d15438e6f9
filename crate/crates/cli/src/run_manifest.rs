//! Provenance record written next to every output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::failure::{Context, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.txt";

/// Everything needed to re-run a subcommand: the resolved configuration
/// with defaults filled in, the paths involved, and an equivalent command
/// line with every setting spelled out.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<(String, PathBuf)>,
    pub output: PathBuf,
    pub config: Vec<(String, String)>,
    pub command: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, output: &Path) -> Self {
        Self {
            subcommand: subcommand.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            inputs: Vec::new(),
            output: output.into(),
            config: Vec::new(),
            command: vec!["camp".into(), subcommand.into(), "--out".into(), output.display().to_string()],
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.into(), path.into()));
        self.command.push(format!("--{}", name.replace('_', "-")));
        self.command.push(path.display().to_string());
    }

    /// Records a setting both as a config entry and as its command-line flag.
    pub fn setting(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        self.command.push(format!("--{}={value}", key.replace('_', "-")));
        self.config.push((key.into(), value));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand={}", self.subcommand);
        let _ = writeln!(s, "version={}", self.version);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        for (k, p) in &self.inputs {
            let _ = writeln!(s, "input.{k}={}", p.display());
        }
        let _ = writeln!(s, "output={}", self.output.display());
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}={v}");
        }
        let _ = writeln!(s, "command={}", self.command.iter().map(|a| quote(a)).collect::<Vec<_>>().join(" "));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_MANIFEST_FILE);
        std::fs::write(&path, self.to_text()).context(format!("writing {}", path.display()))
    }
}

/// POSIX shell quoting for arguments that need it.
fn quote(arg: &str) -> String {
    let plain = !arg.is_empty() && arg.chars().all(|c| c.is_ascii_alphanumeric() || "-_=./,:+@%".contains(c));
    if plain {
        arg.into()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_lists_every_field() {
        let mut m = RunManifest::new("train-ae", Path::new("out"));
        m.seed = Some(7);
        m.input("manifest", Path::new("data/manifest.csv"));
        m.setting("epochs", 3);
        m.setting("sparsity_layer", "dense1_act");
        let text = m.to_text();
        assert!(text.starts_with("subcommand=train-ae\nversion="));
        assert!(text.contains("seed=7\ninput.manifest=data/manifest.csv\noutput=out\nconfig.epochs=3\n"));
        assert!(text.ends_with(
            "command=camp train-ae --out out --manifest data/manifest.csv --epochs=3 --sparsity-layer=dense1_act\n"
        ));
    }

    #[test]
    fn quoting() {
        assert_eq!(quote("a b"), "'a b'");
        assert_eq!(quote("it's"), r"'it'\''s'");
        assert_eq!(quote("--x=1e-3"), "--x=1e-3");
    }
}
