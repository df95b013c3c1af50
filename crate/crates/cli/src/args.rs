use std::path::PathBuf;

use crate::config::FLAG_ALIASES;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forge,
    Train,
    Sample,
    Edit,
    Eval,
    Gradcheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Forge,
        Command::Train,
        Command::Sample,
        Command::Edit,
        Command::Eval,
        Command::Gradcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Forge => "forge",
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Edit => "edit",
            Command::Eval => "eval",
            Command::Gradcheck => "gradcheck",
        }
    }
}

/// A parsed command line: the command, `--config`, `--seed` and the remaining
/// `--key value` pairs as config overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub overrides: Vec<(String, String)>,
}

pub const USAGE: &str = "usage: omniflow <forge|train|sample|edit|eval|gradcheck> [--config FILE] [--seed N] [--key value ...]

Any config field can be set with a dotted key, e.g. --sampler.steps 100.
Shortcuts: --out --manifest --library --checkpoint --source --reference --candidate
--report --loss-csv --latent-out --mm-features --sync-features --instruction --transcript
--frames --dataset --steps, and --preset paper-shape --scale S for forge.";

pub fn parse(args: &[String]) -> Result<Invocation, CliError> {
    let (first, rest) = args.split_first().ok_or_else(|| CliError::Config(USAGE.into()))?;
    let command = Command::ALL
        .into_iter()
        .find(|c| c.name() == first)
        .ok_or_else(|| CliError::Config(format!("unknown command {first:?}; {USAGE}")))?;
    if rest.len() % 2 != 0 {
        return Err(CliError::Config(format!("flag {:?} has no value", rest[rest.len() - 1])));
    }
    let mut inv = Invocation {
        command,
        config: None,
        seed: None,
        overrides: Vec::new(),
    };
    let (mut preset, mut scale) = (None, None);
    for pair in rest.chunks(2) {
        let key = pair[0]
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| CliError::Config(format!("expected --key, got {:?}", pair[0])))?;
        let value = pair[1].clone();
        match key {
            "config" => inv.config = Some(value.into()),
            "seed" => {
                inv.seed = Some(
                    value
                        .parse()
                        .map_err(|_| CliError::Config(format!("--seed {value:?} is not an unsigned integer")))?,
                )
            }
            "preset" => preset = Some(value),
            "scale" => scale = Some(value),
            _ => {
                let target = FLAG_ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, k)| k);
                inv.overrides.push((target.to_string(), value));
            }
        }
    }
    match (preset, scale) {
        (Some(p), s) => {
            let scale = s.as_deref().unwrap_or("1");
            inv.overrides.push(("forge.preset".into(), format!("{{\"name\": {p:?}, \"scale\": {scale}}}")));
        }
        (None, Some(_)) => return Err(CliError::Config("--scale needs --preset".into())),
        (None, None) => {}
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_flags() {
        let inv = parse(&argv("sample --sampler.steps 100 --out a.wav --seed 7 --config c.json")).unwrap();
        assert_eq!(inv.command, Command::Sample);
        assert_eq!(inv.seed, Some(7));
        assert_eq!(inv.config, Some(PathBuf::from("c.json")));
        assert_eq!(
            inv.overrides,
            vec![("sampler.steps".into(), "100".into()), ("paths.out".into(), "a.wav".into())]
        );
        let f = parse(&argv("forge --preset paper-shape --scale 0.001")).unwrap();
        assert_eq!(f.overrides[0].1, r#"{"name": "paper-shape", "scale": 0.001}"#);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "fly", "train --out", "train out x", "train --seed -1", "forge --scale 2", "eval -- x"] {
            assert!(matches!(parse(&argv(bad)), Err(CliError::Config(_))), "{bad}");
        }
    }
}
