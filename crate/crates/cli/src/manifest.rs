//! Tab-separated dataset manifest: `clean_path reverb_path t60 direct_delay seed`.
//!
//! Lines starting with `#` are comments. Relative paths are relative to the
//! manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const HEADER: &str = "# clean_path\treverb_path\tt60\tdirect_delay\tseed";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub clean: PathBuf,
    pub reverb: PathBuf,
    pub t60: f64,
    pub direct_delay: f64,
    pub seed: u64,
}

pub fn render(records: &[Record]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.clean.display(),
            r.reverb.display(),
            r.t60,
            r.direct_delay,
            r.seed
        );
    }
    out
}

pub fn parse(text: &str, base: &Path) -> Result<Vec<Record>, String> {
    let resolve = |s: &str| {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(format!(
                "line {}: expected 5 tab-separated fields, got {}",
                n + 1,
                fields.len()
            ));
        }
        let num = |i: usize, what: &str| {
            fields[i]
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad {what} {:?}", n + 1, fields[i]))
        };
        out.push(Record {
            clean: resolve(fields[0]),
            reverb: resolve(fields[1]),
            t60: num(2, "t60")?,
            direct_delay: num(3, "direct_delay")?,
            seed: fields[4]
                .parse()
                .map_err(|_| format!("line {}: bad seed {:?}", n + 1, fields[4]))?,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Record>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let records = parse(&text, base).map_err(|reason| {
        CliError::Core(fdlp_core::Error::Malformed {
            path: path.to_path_buf(),
            reason,
        })
    })?;
    if records.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} lists no pairs",
            path.display()
        )));
    }
    Ok(records)
}
