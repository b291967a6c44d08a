//! `--config` files: flat `key = value` lines turned into flags.
//!
//! The generated flags are spliced in right after the subcommand, so any flag
//! given on the command line comes later and wins.

use std::fs;

/// Lines of `key = value`; `#` starts a comment. `true` becomes a bare flag,
/// `false` drops the key.
pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", n + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        if key == "config" {
            return Err(format!(
                "config line {}: nested config files are not supported",
                n + 1
            ));
        }
        match value.trim() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Returns `argv` with the config file's flags inserted after the subcommand.
pub fn inject(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("config file {path}: {e}"))?;
    let flags = parse(&text)?;
    let Some(sub) = argv.iter().skip(1).position(|a| !a.starts_with('-')) else {
        return Ok(argv);
    };
    let at = sub + 2;
    let mut out = argv[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_lines() {
        let f = parse("# sweep\nalpha = 0.1\nsmoothed=true\nlabel_column = y\nverbose = false\n")
            .unwrap();
        assert_eq!(
            f,
            s(&["--alpha", "0.1", "--smoothed", "--label-column", "y"])
        );
        assert!(parse("alpha 0.1").is_err());
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "alpha=0.2\n").unwrap();
        let p = path.to_str().unwrap();
        let out = inject(s(&["riskcp", "predict", "--config", p, "--alpha", "0.05"])).unwrap();
        assert_eq!(
            out,
            s(&["riskcp", "predict", "--alpha", "0.2", "--config", p, "--alpha", "0.05"])
        );
        let none = s(&["riskcp", "synth", "--dim", "2"]);
        assert_eq!(inject(none.clone()).unwrap(), none);
        assert!(inject(s(&["riskcp", "synth", "--config", "/nonexistent/x"])).is_err());
    }
}
