//! `--config FILE` support.
//!
//! The TOML file uses flag names as keys (`min_samples_leaf` or
//! `min-samples-leaf`). Top-level keys apply to whichever subcommand runs;
//! a table named after a subcommand applies only to it. The keys become
//! `--key value` tokens placed right after the subcommand, so flags given
//! on the command line override them.

use std::ffi::OsString;
use std::path::PathBuf;

use mobound_core::Error;

const SUBCOMMANDS: [&str; 6] = ["train", "certify", "check-loss", "estimate-rad", "minimax", "sweep-gamma"];

/// Returns `argv` with the config file's keys spliced in.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let mut path: Option<PathBuf> = None;
    let mut skip_next = false;
    let mut command_at = None;
    for (i, arg) in argv.iter().enumerate().skip(1) {
        if skip_next {
            skip_next = false;
            continue;
        }
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
            skip_next = true;
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if command_at.is_none() && SUBCOMMANDS.contains(&s.as_ref()) {
            command_at = Some(i);
        }
    }
    let (Some(path), Some(at)) = (path, command_at) else {
        return Ok(argv);
    };
    let command = argv[at].to_string_lossy().into_owned();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
    let tokens = config_tokens(&text, &command)?;
    let mut out = argv[..=at].to_vec();
    out.extend(tokens.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}

fn normalise(key: &str) -> String {
    key.replace('_', "-")
}

/// Flag tokens for `command` from a TOML document.
pub fn config_tokens(text: &str, command: &str) -> Result<Vec<String>, Error> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::InvalidParameter(format!("invalid config: {e}")))?;
    let mut tokens = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if normalise(key) == command {
                    for (k, v) in section {
                        push_flag(&mut tokens, k, v)?;
                    }
                }
            }
            _ => push_flag(&mut tokens, key, value)?,
        }
    }
    Ok(tokens)
}

fn push_flag(tokens: &mut Vec<String>, key: &str, value: &toml::Value) -> Result<(), Error> {
    let flag = format!("--{}", normalise(key));
    let scalar = |v: &toml::Value| -> Result<String, Error> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            _ => Err(Error::InvalidParameter(format!("config key `{key}` has an unsupported value"))),
        }
    };
    match value {
        toml::Value::Boolean(true) => tokens.push(flag),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            tokens.push(flag);
            tokens.push(parts.join(","));
        }
        other => {
            tokens.push(flag);
            tokens.push(scalar(other)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_become_flags() {
        let text = "seed = 3\nloss = \"clip(logistic,B=3)\"\nstumps = true\nn = [20, 50]\n[train]\nmin_samples_leaf = 2\n[certify]\ndelta = 0.1\n";
        let t = config_tokens(text, "train").unwrap();
        assert_eq!(
            t,
            ["--loss", "clip(logistic,B=3)", "--n", "20,50", "--seed", "3", "--stumps", "--min-samples-leaf", "2"]
        );
    }

    #[test]
    fn config_goes_before_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "trials = 10\n").unwrap();
        let argv: Vec<OsString> = ["mobound", "--config", path.to_str().unwrap(), "check-loss", "--trials", "20"]
            .iter()
            .map(OsString::from)
            .collect();
        let out: Vec<String> = expand_args(argv).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(&out[3..], ["check-loss", "--trials", "10", "--trials", "20"]);
    }

    #[test]
    fn bad_toml_is_a_usage_error() {
        let err = config_tokens("seed = ", "train").unwrap_err();
        assert_eq!(err.class(), mobound_core::ErrorClass::Usage);
    }
}
