//! Text format for externally generated channels.
//!
//! ```text
//! isac-channel-trace
//! version 1
//! k <K>
//! n_t <N_t>
//! n_r <N_r>
//! n_radar <N_R>
//! carrier_freq_hz <f64>
//! bandwidth_hz <f64>
//! matrix <section> <variant> <k>
//! <re>,<im> <re>,<im> ...        one line per matrix row
//! ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored everywhere. Header
//! keys appear exactly once, in the order shown. Matrix blocks follow in a
//! fixed order: section `user1`, `user2`, `target`; within a section variant
//! `los` then `nlos`; within a variant subcarrier `0..K`. User matrices are
//! `N_r x N_t`, target matrices `N_R x N_t`.
//!
//! Sections `user1_echo` and `user2_echo` (`N_R x N_t`, both variants) may
//! follow the target. When absent, the user downlink matrices double as
//! echo channels, which requires `N_r == N_R`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

use super::set::{LinkState, Object, ObjectChannels, SubcarrierChannelSet};

pub const MAGIC: &str = "isac-channel-trace";
pub const VERSION: u32 = 1;

const HEADER_KEYS: [&str; 7] = [
    "version",
    "k",
    "n_t",
    "n_r",
    "n_radar",
    "carrier_freq_hz",
    "bandwidth_hz",
];

/// Appends one `matrix` block.
pub fn write_matrix(out: &mut String, section: &str, variant: &str, k: usize, m: &ComplexMatrix) {
    writeln!(out, "matrix {section} {variant} {k}").unwrap();
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|c| {
                let z = m[(r, c)];
                format!("{:e},{:e}", z.re, z.im)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Serializes the raw (unblocked) matrices of a channel set.
pub fn to_trace_string(set: &SubcarrierChannelSet) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "version {VERSION}").unwrap();
    writeln!(out, "k {}", set.k_subcarriers()).unwrap();
    writeln!(out, "n_t {}", set.n_t()).unwrap();
    writeln!(out, "n_r {}", set.n_r()).unwrap();
    writeln!(out, "n_radar {}", set.n_radar()).unwrap();
    writeln!(out, "carrier_freq_hz {:e}", set.carrier_freq()).unwrap();
    writeln!(out, "bandwidth_hz {:e}", set.bandwidth()).unwrap();
    for o in Object::ALL {
        for state in [LinkState::Los, LinkState::Nlos] {
            for k in 0..set.k_subcarriers() {
                write_matrix(&mut out, o.name(), state.name(), k, set.raw(o, state, k));
            }
        }
    }
    for o in Object::USERS {
        let section = format!("{}_echo", o.name());
        for state in [LinkState::Los, LinkState::Nlos] {
            for k in 0..set.k_subcarriers() {
                write_matrix(&mut out, &section, state.name(), k, set.raw_echo(o, state, k));
            }
        }
    }
    out
}

pub fn save_channel_trace(set: &SubcarrierChannelSet, path: &Path) -> Result<()> {
    fs::write(path, to_trace_string(set)).map_err(|e| Error::io(path, e))
}

pub fn load_channel_trace(path: &Path) -> Result<SubcarrierChannelSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_channel_trace(&text)
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Lines {
            inner: it.peekable(),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.inner.next()
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        self.inner.peek().copied()
    }
}

struct Header {
    k: usize,
    n_t: usize,
    n_r: usize,
    n_radar: usize,
    carrier_freq: f64,
    bandwidth: f64,
}

fn parse_header(lines: &mut Lines<'_>) -> Result<Header> {
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((line, l)) => {
            return Err(Error::Parse {
                line,
                msg: format!("expected `{MAGIC}`, found `{l}`"),
            })
        }
        None => return Err(Error::Parse { line: 0, msg: "empty trace".into() }),
    }
    let mut values = Vec::with_capacity(HEADER_KEYS.len());
    for key in HEADER_KEYS {
        let (line, l) = lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("header ended before `{key}`"),
        })?;
        let mut parts = l.split_whitespace();
        let (Some(found), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line,
                msg: format!("expected `{key} <value>`"),
            });
        };
        if found != key {
            return Err(Error::Parse {
                line,
                msg: format!("expected header key `{key}`, found `{found}`"),
            });
        }
        values.push((line, value));
    }
    let int = |i: usize| -> Result<usize> {
        let (line, v) = values[i];
        v.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("`{}` must be a positive integer, got `{v}`", HEADER_KEYS[i]),
            })
    };
    let float = |i: usize| -> Result<f64> {
        let (line, v) = values[i];
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite() && *x > 0.0)
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("`{}` must be a positive number, got `{v}`", HEADER_KEYS[i]),
            })
    };
    let version = int(0)?;
    if version != VERSION as usize {
        return Err(Error::Schema(format!(
            "unsupported trace version {version} (expected {VERSION})"
        )));
    }
    Ok(Header {
        k: int(1)?,
        n_t: int(2)?,
        n_r: int(3)?,
        n_radar: int(4)?,
        carrier_freq: float(5)?,
        bandwidth: float(6)?,
    })
}

fn parse_entry(line: usize, tok: &str) -> Result<Complex64> {
    let (re, im) = tok.split_once(',').ok_or_else(|| Error::Parse {
        line,
        msg: format!("entry `{tok}` is not `re,im`"),
    })?;
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("`{s}` is not a finite number"),
            })
    };
    Ok(Complex64::new(parse(re)?, parse(im)?))
}

fn parse_block(
    lines: &mut Lines<'_>,
    section: &str,
    variant: &str,
    k: usize,
    rows: usize,
    cols: usize,
) -> Result<ComplexMatrix> {
    let name = format!("{section} {variant} {k}");
    let Some((line, header)) = lines.next() else {
        return Err(Error::Schema(format!("missing section `{section} {variant}` (subcarrier {k})")));
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some("matrix") {
        return Err(Error::Parse {
            line,
            msg: format!("expected `matrix {name}`, found `{header}`"),
        });
    }
    let rest: Vec<&str> = parts.collect();
    if rest.len() != 3 {
        return Err(Error::Parse {
            line,
            msg: format!("malformed block header `{header}`"),
        });
    }
    if rest[0] != section || rest[1] != variant {
        return Err(Error::Schema(format!(
            "missing section `{section} {variant}` (found `{} {}` at line {line})",
            rest[0], rest[1]
        )));
    }
    if rest[2].parse::<usize>().ok() != Some(k) {
        return Err(Error::Schema(format!(
            "line {line}: expected subcarrier {k} of `{section} {variant}`, found `{}`",
            rest[2]
        )));
    }

    let mut entries = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (line, row) = match lines.peek() {
            Some((line, l)) if !l.starts_with("matrix") => {
                lines.next();
                (line, l)
            }
            _ => {
                return Err(Error::Schema(format!(
                    "`{name}` has {r} rows, header declares {rows}"
                )))
            }
        };
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != cols {
            return Err(Error::Schema(format!(
                "line {line}: `{name}` row has {} entries, header declares {cols}",
                toks.len()
            )));
        }
        for tok in toks {
            entries.push(parse_entry(line, tok)?);
        }
    }
    if let Some((line, l)) = lines.peek() {
        if !l.starts_with("matrix") {
            return Err(Error::Schema(format!(
                "line {line}: `{name}` has more than the declared {rows} rows"
            )));
        }
    }
    ComplexMatrix::from_row_slice(rows, cols, &entries)
}

fn parse_variant(
    lines: &mut Lines<'_>,
    section: &str,
    variant: &str,
    h: &Header,
    rows: usize,
) -> Result<Vec<ComplexMatrix>> {
    (0..h.k)
        .map(|k| parse_block(lines, section, variant, k, rows, h.n_t))
        .collect()
}

/// Parses a trace. Every object starts on its LOS channel, unblocked.
pub fn parse_channel_trace(text: &str) -> Result<SubcarrierChannelSet> {
    let mut lines = Lines::new(text);
    let h = parse_header(&mut lines)?;

    let mut objects = Vec::with_capacity(3);
    for o in Object::ALL {
        let rows = if o.is_user() { h.n_r } else { h.n_radar };
        let los = parse_variant(&mut lines, o.name(), "los", &h, rows)?;
        let nlos = parse_variant(&mut lines, o.name(), "nlos", &h, rows)?;
        objects.push(ObjectChannels {
            los,
            nlos,
            echo_los: None,
            echo_nlos: None,
        });
    }
    if lines.peek().is_some() {
        for o in Object::USERS {
            let section = format!("{}_echo", o.name());
            let los = parse_variant(&mut lines, &section, "los", &h, h.n_radar)?;
            let nlos = parse_variant(&mut lines, &section, "nlos", &h, h.n_radar)?;
            objects[o.index()].echo_los = Some(los);
            objects[o.index()].echo_nlos = Some(nlos);
        }
    }
    if let Some((line, l)) = lines.next() {
        return Err(Error::Parse {
            line,
            msg: format!("unexpected trailing content `{l}`"),
        });
    }
    let target = objects.pop().unwrap();
    let user2 = objects.pop().unwrap();
    let user1 = objects.pop().unwrap();
    SubcarrierChannelSet::new(h.n_t, h.n_r, h.n_radar, h.carrier_freq, h.bandwidth, user1, user2, target)
}
