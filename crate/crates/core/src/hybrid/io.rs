//! Delimited-text arc files.
//!
//! `<path>` holds `# key=value` metadata lines, a header `t,j,x0,…,x{n-1},<channels>`
//! and one row per sample. `<path>.jumps` holds `t,j,pre0,…,post0,…,reason`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{HybridArc, HybridTime, JumpRecord};

#[derive(Debug, Error)]
pub enum ArcIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

/// An arc together with its file metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcFile {
    pub arc: HybridArc,
    pub metadata: BTreeMap<String, String>,
}

pub fn jumps_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".jumps");
    PathBuf::from(s)
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        // `{}` on f64 prints the shortest representation that round-trips.
        let _ = write!(out, ",{v}");
    }
}

/// Render the sample table (metadata, header, rows).
pub fn format_arc(arc: &HybridArc, metadata: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("t,j");
    for i in 0..arc.dim() {
        let _ = write!(out, ",x{i}");
    }
    for c in arc.channel_names() {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for k in 0..arc.len() {
        let time = arc.time(k);
        let _ = write!(out, "{},{}", time.t, time.j);
        push_row(&mut out, arc.state(k).iter().copied());
        push_row(&mut out, arc.channel_row(k).iter().copied());
        out.push('\n');
    }
    out
}

/// Render the jump table.
pub fn format_jumps(arc: &HybridArc) -> String {
    let mut out = String::from("t,j");
    for i in 0..arc.dim() {
        let _ = write!(out, ",pre{i}");
    }
    for i in 0..arc.dim() {
        let _ = write!(out, ",post{i}");
    }
    out.push_str(",reason\n");
    for r in &arc.jumps {
        let _ = write!(out, "{},{}", r.time.t, r.time.j);
        push_row(&mut out, r.pre.iter().chain(&r.post).copied());
        let _ = writeln!(out, ",{}", r.reason);
    }
    out
}

/// Write `path` and its sibling `.jumps` file.
pub fn write_arc(
    path: &Path,
    arc: &HybridArc,
    metadata: &BTreeMap<String, String>,
) -> Result<(), ArcIoError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| ArcIoError::Io { path: p, source }
    };
    fs::write(path, format_arc(arc, metadata)).map_err(io(path))?;
    let jp = jumps_path(path);
    fs::write(&jp, format_jumps(arc)).map_err(io(&jp))?;
    Ok(())
}

fn parse_fields(
    path: &Path,
    line: usize,
    fields: &[&str],
) -> Result<Vec<f64>, ArcIoError> {
    fields
        .iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|e| ArcIoError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("bad number `{f}`: {e}"),
            })
        })
        .collect()
}

/// Read an arc written by [`write_arc`]. A missing `.jumps` file is treated as
/// an arc without jumps.
pub fn read_arc(path: &Path) -> Result<ArcFile, ArcIoError> {
    let text = fs::read_to_string(path).map_err(|source| ArcIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let perr = |line: usize, msg: String| ArcIoError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut metadata = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    let mut dim = 0;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut channels = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        match &header {
            None => {
                if fields.len() < 2 || fields[0] != "t" || fields[1] != "j" {
                    return Err(perr(line, "header must start with `t,j`".into()));
                }
                dim = fields[2..]
                    .iter()
                    .take_while(|c| {
                        c.strip_prefix('x')
                            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    })
                    .count();
                header = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(perr(
                        line,
                        format!("expected {} fields, found {}", h.len(), fields.len()),
                    ));
                }
                let t = parse_fields(path, line, &fields[..1])?[0];
                let j = fields[1]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| perr(line, format!("bad jump count: {e}")))?;
                times.push(HybridTime::new(t, j));
                let vals = parse_fields(path, line, &fields[2..])?;
                states.extend_from_slice(&vals[..dim]);
                channels.extend_from_slice(&vals[dim..]);
            }
        }
    }
    let header = header.ok_or_else(|| perr(0, "missing header".into()))?;
    let channel_names: Vec<String> = header[2 + dim..].to_vec();

    let mut jumps = Vec::new();
    let jp = jumps_path(path);
    if jp.exists() {
        let jtext = fs::read_to_string(&jp).map_err(|source| ArcIoError::Io {
            path: jp.clone(),
            source,
        })?;
        for (n, raw) in jtext.lines().enumerate().skip(1) {
            let line = n + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.trim().split(',').collect();
            if fields.len() != 3 + 2 * dim {
                return Err(ArcIoError::Parse {
                    path: jp.clone(),
                    line,
                    msg: format!("expected {} fields, found {}", 3 + 2 * dim, fields.len()),
                });
            }
            let t = parse_fields(&jp, line, &fields[..1])?[0];
            let j = fields[1].trim().parse::<usize>().map_err(|e| ArcIoError::Parse {
                path: jp.clone(),
                line,
                msg: format!("bad jump count: {e}"),
            })?;
            let vals = parse_fields(&jp, line, &fields[2..2 + 2 * dim])?;
            let time = HybridTime::new(t, j);
            let sample = times.iter().position(|&s| s == time).unwrap_or(0);
            jumps.push(JumpRecord {
                time,
                pre: vals[..dim].to_vec(),
                post: vals[dim..].to_vec(),
                reason: fields[2 + 2 * dim].trim().to_string(),
                sample,
            });
        }
    }

    Ok(ArcFile {
        arc: HybridArc::from_parts(dim, channel_names, times, states, channels, jumps),
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{solve, HybridSystemDef, SolverConfig};

    #[test]
    fn roundtrip_sawtooth() {
        let sys = HybridSystemDef::new(
            1,
            |x, tol| x[0] <= 1.0 + tol,
            |_, dx| dx[0] = 1.0,
            |x| x[0] >= 1.0,
            |_, _| vec![0.0],
        );
        let cfg = SolverConfig {
            step: 0.1,
            horizon: 3.5,
            ..Default::default()
        };
        let arc = solve(&sys, &[0.0], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arc.csv");
        let mut meta = BTreeMap::new();
        meta.insert("chi1".to_string(), "0.5".to_string());
        write_arc(&path, &arc, &meta).unwrap();
        let back = read_arc(&path).unwrap();
        assert_eq!(back.metadata, meta);
        assert_eq!(back.arc.times(), arc.times());
        assert!(back.arc.states().eq(arc.states()));
        assert_eq!(back.arc.jumps, arc.jumps);
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,j,x0\n0,0,1\n0.1,0\n").unwrap();
        assert!(matches!(read_arc(&path), Err(ArcIoError::Parse { line: 3, .. })));
    }
}
