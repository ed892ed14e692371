//! `key = value` config files. Settings fill in flags missing from the
//! command line, so explicit flags win over the file and the file wins over
//! built-in defaults.
//!
//! ```text
//! # applies to every subcommand
//! jobs = 4
//! [train-vision]
//! epochs = 10
//! baseline = true
//! ```

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    /// Subcommand the setting is scoped to; `None` for top-level keys.
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

pub fn parse_config(text: &str, file: &str) -> Result<Vec<Setting>> {
    let mut section = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{file}:{}: expected `key = value`", i + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(CliError::Usage(format!("{file}:{}: empty key", i + 1)));
        }
        out.push(Setting {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().trim_matches('"').to_string(),
        });
    }
    Ok(out)
}

fn has_flag(argv: &[String], flag: &str) -> bool {
    let eq = format!("{flag}=");
    argv.iter().any(|a| a == flag || a.starts_with(&eq))
}

/// Value of `--flag X` or `--flag=X`.
pub fn flag_value(argv: &[String], flag: &str) -> Option<String> {
    let eq = format!("{flag}=");
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == flag {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix(&eq).map(str::to_string)
        }
    })
}

/// `argv` without any occurrence of `--flag X` / `--flag=X`.
pub fn strip_flag(argv: &[String], flag: &str) -> Vec<String> {
    let eq = format!("{flag}=");
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if std::mem::take(&mut skip) {
            continue;
        }
        if a == flag {
            skip = true;
        } else if !a.starts_with(&eq) {
            out.push(a.clone());
        }
    }
    out
}

/// Appends settings whose flag is not already on the command line.
/// `true` becomes a bare switch and `false` is dropped.
pub fn merge(argv: &[String], settings: &[Setting], subcommand: Option<&str>) -> Vec<String> {
    let mut out = argv.to_vec();
    for s in settings {
        if s.section.is_some() && s.section.as_deref() != subcommand {
            continue;
        }
        let flag = format!("--{}", s.key);
        if has_flag(argv, &flag) {
            continue;
        }
        match s.value.as_str() {
            "true" => out.push(flag),
            "false" => {}
            v => out.push(format!("{flag}={v}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn flags_beat_file() {
        let cfg = parse_config("jobs = 2\n[perft]\ndepth = 3\ndivide = true\n[expand]\nfactor = 2\n", "c").unwrap();
        let merged = merge(&argv("bpu perft --depth 1"), &cfg, Some("perft"));
        assert_eq!(merged, argv("bpu perft --depth 1 --jobs=2 --divide"));
    }

    #[test]
    fn repeated_keys_and_negative_values() {
        let cfg = parse_config("modality = sight\nmodality = respiratory\ndefault-sign = -1\n", "c").unwrap();
        let merged = merge(&argv("bpu ablate"), &cfg, Some("ablate"));
        assert_eq!(merged, argv("bpu ablate --modality=sight --modality=respiratory --default-sign=-1"));
    }

    #[test]
    fn flag_helpers() {
        let a = argv("bpu --config a.cfg perft --out=x");
        assert_eq!(flag_value(&a, "--config").as_deref(), Some("a.cfg"));
        assert_eq!(flag_value(&a, "--out").as_deref(), Some("x"));
        assert_eq!(strip_flag(&a, "--config"), argv("bpu perft --out=x"));
        assert!(parse_config("no equals sign\n", "c").is_err());
    }
}
