//! Line-oriented text format for [`LowRankMdp`].
//!
//! ```text
//! format lowrank-mdp/1
//! n_states 2
//! n_actions 2
//! horizon 1
//! rank 2
//! initial_state 0
//! phi <h> <s> <a> <v_1> ... <v_d>
//! mu <h> <s'> <v_1> ... <v_d>
//! reward <h> <s> <a> <v>
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so writing then parsing
//! reproduces every bit. Every table entry must appear exactly once.

use std::fmt::Write as _;

use ndarray::{Array3, Array4};
use thiserror::Error;

use super::{LowRankMdp, MdpError};

pub const FORMAT_TAG: &str = "lowrank-mdp/1";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("table `{table}` has {missing} unset entries")]
    Incomplete { table: &'static str, missing: usize },
    #[error(transparent)]
    Model(#[from] MdpError),
}

impl LowRankMdp {
    pub fn to_text(&self) -> String {
        let d = self.dims;
        let mut out = String::new();
        let _ = writeln!(out, "format {FORMAT_TAG}");
        let _ = writeln!(out, "n_states {}", d.n_states);
        let _ = writeln!(out, "n_actions {}", d.n_actions);
        let _ = writeln!(out, "horizon {}", d.horizon);
        let _ = writeln!(out, "rank {}", self.rank);
        let _ = writeln!(out, "initial_state {}", self.initial_state);
        for h in 0..d.horizon {
            for s in 0..d.n_states {
                for a in 0..d.n_actions {
                    let _ = write!(out, "phi {h} {s} {a}");
                    for v in self.phi_row(h, s, a) {
                        let _ = write!(out, " {v:e}");
                    }
                    out.push('\n');
                }
            }
        }
        for h in 0..d.horizon {
            for s in 0..d.n_states {
                let _ = write!(out, "mu {h} {s}");
                for v in self.mu_row(h, s) {
                    let _ = write!(out, " {v:e}");
                }
                out.push('\n');
            }
        }
        for ((h, s, a), r) in self.reward.indexed_iter() {
            let _ = writeln!(out, "reward {h} {s} {a} {r:e}");
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut header = Header::default();
        let mut tables: Option<Tables> = None;
        let mut saw_format = false;
        let mut saw_end = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if saw_end {
                return Err(syntax(line, "content after `end`"));
            }
            let mut parts = content.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            match key {
                "format" => {
                    if rest != [FORMAT_TAG] {
                        return Err(syntax(line, format!("unsupported format {rest:?}, expected {FORMAT_TAG}")));
                    }
                    saw_format = true;
                }
                "n_states" | "n_actions" | "horizon" | "rank" | "initial_state" => {
                    if tables.is_some() {
                        return Err(syntax(line, format!("header field `{key}` after table rows")));
                    }
                    let [v] = rest.as_slice() else {
                        return Err(syntax(line, format!("`{key}` takes one value")));
                    };
                    let v: usize = v.parse().map_err(|e| syntax(line, format!("bad integer: {e}")))?;
                    header.set(key, v);
                }
                "phi" | "mu" | "reward" => {
                    if !saw_format {
                        return Err(syntax(line, "table rows before `format` line"));
                    }
                    let t = match tables.as_mut() {
                        Some(t) => t,
                        None => tables.insert(Tables::new(&header)?),
                    };
                    t.push(key, &rest, line)?;
                }
                "end" => saw_end = true,
                other => return Err(syntax(line, format!("unknown key `{other}`"))),
            }
        }
        if !saw_format {
            return Err(ParseError::Missing("format"));
        }
        if !saw_end {
            return Err(ParseError::Missing("end"));
        }
        let tables = match tables {
            Some(t) => t,
            None => Tables::new(&header)?,
        };
        tables.finish(header.initial_state.ok_or(ParseError::Missing("initial_state"))?)
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

#[derive(Default)]
struct Header {
    n_states: Option<usize>,
    n_actions: Option<usize>,
    horizon: Option<usize>,
    rank: Option<usize>,
    initial_state: Option<usize>,
}

impl Header {
    fn set(&mut self, key: &str, v: usize) {
        let slot = match key {
            "n_states" => &mut self.n_states,
            "n_actions" => &mut self.n_actions,
            "horizon" => &mut self.horizon,
            "rank" => &mut self.rank,
            _ => &mut self.initial_state,
        };
        *slot = Some(v);
    }
}

struct Tables {
    rank: usize,
    phi: Array4<f64>,
    mu: Array3<f64>,
    reward: Array3<f64>,
    phi_set: Array3<bool>,
    mu_set: ndarray::Array2<bool>,
    reward_set: Array3<bool>,
}

impl Tables {
    fn new(h: &Header) -> Result<Self, ParseError> {
        let n_states = h.n_states.ok_or(ParseError::Missing("n_states"))?;
        let n_actions = h.n_actions.ok_or(ParseError::Missing("n_actions"))?;
        let horizon = h.horizon.ok_or(ParseError::Missing("horizon"))?;
        let rank = h.rank.ok_or(ParseError::Missing("rank"))?;
        Ok(Self {
            rank,
            phi: Array4::zeros((horizon, n_states, n_actions, rank)),
            mu: Array3::zeros((horizon, n_states, rank)),
            reward: Array3::zeros((horizon, n_states, n_actions)),
            phi_set: Array3::from_elem((horizon, n_states, n_actions), false),
            mu_set: ndarray::Array2::from_elem((horizon, n_states), false),
            reward_set: Array3::from_elem((horizon, n_states, n_actions), false),
        })
    }

    fn push(&mut self, key: &str, rest: &[&str], line: usize) -> Result<(), ParseError> {
        let (n_idx, n_vals) = match key {
            "phi" => (3, self.rank),
            "mu" => (2, self.rank),
            _ => (3, 1),
        };
        if rest.len() != n_idx + n_vals {
            return Err(syntax(
                line,
                format!("`{key}` expects {n_idx} indices and {n_vals} values, got {} fields", rest.len()),
            ));
        }
        let idx: Vec<usize> = rest[..n_idx]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| syntax(line, format!("bad index: {e}")))?;
        let vals: Vec<f64> = rest[n_idx..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| syntax(line, format!("bad number: {e}")))?;

        let set = match key {
            "phi" => self.phi_set.get_mut((idx[0], idx[1], idx[2])),
            "mu" => self.mu_set.get_mut((idx[0], idx[1])),
            _ => self.reward_set.get_mut((idx[0], idx[1], idx[2])),
        };
        let Some(set) = set else {
            return Err(syntax(line, format!("`{key}` index {idx:?} out of range")));
        };
        if std::mem::replace(set, true) {
            return Err(syntax(line, format!("duplicate `{key}` entry {idx:?}")));
        }
        match key {
            "phi" => {
                for (j, v) in vals.into_iter().enumerate() {
                    self.phi[[idx[0], idx[1], idx[2], j]] = v;
                }
            }
            "mu" => {
                for (j, v) in vals.into_iter().enumerate() {
                    self.mu[[idx[0], idx[1], j]] = v;
                }
            }
            _ => self.reward[[idx[0], idx[1], idx[2]]] = vals[0],
        }
        Ok(())
    }

    fn finish(self, initial_state: usize) -> Result<LowRankMdp, ParseError> {
        for (table, missing) in [
            ("phi", self.phi_set.iter().filter(|x| !**x).count()),
            ("mu", self.mu_set.iter().filter(|x| !**x).count()),
            ("reward", self.reward_set.iter().filter(|x| !**x).count()),
        ] {
            if missing > 0 {
                return Err(ParseError::Incomplete { table, missing });
            }
        }
        Ok(LowRankMdp::new(self.rank, self.phi, self.mu, initial_state, self.reward)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::dp::tests::chain;

    #[test]
    fn round_trip_is_exact() {
        let mut mdp = chain(3);
        mdp.mu[[1, 0, 1]] = 0.1 + 0.2;
        mdp.reward[[0, 1, 1]] = 1.0 / 3.0;
        mdp.phi[[2, 1, 0, 0]] = 1e-300;
        let text = mdp.to_text();
        let back = LowRankMdp::from_text(&text).unwrap();
        assert_eq!(back, mdp);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = chain(1).to_text().replacen("\nrank ", "\nrnak ", 1);
        assert!(matches!(LowRankMdp::from_text(&text), Err(ParseError::Syntax { line: 5, .. })));
    }

    #[test]
    fn missing_rows_detected() {
        let text: String = chain(1)
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("reward 0 1 1"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            LowRankMdp::from_text(&text),
            Err(ParseError::Incomplete { table: "reward", missing: 1 })
        );
    }

    #[test]
    fn duplicate_rows_rejected() {
        let mut text = chain(1).to_text();
        text = text.replace("end\n", "reward 0 0 0 1e0\nend\n");
        assert!(matches!(LowRankMdp::from_text(&text), Err(ParseError::Syntax { .. })));
    }
}
