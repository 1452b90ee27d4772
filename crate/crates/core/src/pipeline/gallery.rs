//! Enrolled identities and cosine matching.
//!
//! File layout, one record per line:
//!
//! ```text
//! LMCOT-GALLERY
//! version 1
//! identity <name>
//! dim <d>
//! entry <seq> <v_1> ... <v_d>
//! ```
//!
//! Values are written with 17 significant digits so they read back to the
//! same bits. `seq` is a logical enrollment counter.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView1;

use crate::angular::l2_normalize;
use crate::error::{input, Error, Result};

pub const MAX_PER_IDENTITY: usize = 5;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.5;
const MAGIC: &str = "LMCOT-GALLERY";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub embedding: Vec<f64>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub name: String,
    pub entries: Vec<Enrollment>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    identities: Vec<Identity>,
    dim: Option<usize>,
    next_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnrollStatus {
    Stored { count: usize },
    RejectedBlurry,
    RejectedFull,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    Known {
        name: String,
        similarity: f64,
    },
    /// `best` is `-inf` for an empty gallery.
    Stranger {
        best: f64,
    },
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identities(&self) -> &[Identity] {
        &self.identities
    }

    pub fn identity(&self, name: &str) -> Option<&Identity> {
        self.identities.iter().find(|i| i.name == name)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    fn check_name(name: &str) -> Result<()> {
        if name.trim().is_empty() || name.trim() != name || name.contains(['\n', '\r']) {
            return input(format!("invalid identity name {name:?}"));
        }
        Ok(())
    }

    /// Store `embedding` (re-normalized) under `name` unless the image failed
    /// the sharpness gate or the identity already holds the maximum.
    pub fn enroll(&mut self, name: &str, embedding: &[f64], sharp: bool) -> Result<EnrollStatus> {
        Self::check_name(name)?;
        if let Some(d) = self.dim {
            if embedding.len() != d {
                return input(format!("embedding dim {} but gallery holds dim {d}", embedding.len()));
            }
        }
        if !sharp {
            return Ok(EnrollStatus::RejectedBlurry);
        }
        let pos = self.identities.iter().position(|i| i.name == name);
        if pos.is_some_and(|p| self.identities[p].entries.len() >= MAX_PER_IDENTITY) {
            return Ok(EnrollStatus::RejectedFull);
        }
        let unit = l2_normalize(ArrayView1::from(embedding), 1e-12)?;
        let entry = Enrollment { embedding: unit, seq: self.next_seq };
        self.next_seq += 1;
        self.dim = Some(embedding.len());
        let ident = match pos {
            Some(p) => &mut self.identities[p],
            None => {
                self.identities.push(Identity { name: name.to_string(), entries: Vec::new() });
                self.identities.last_mut().expect("just pushed")
            }
        };
        ident.entries.push(entry);
        Ok(EnrollStatus::Stored { count: ident.entries.len() })
    }

    /// Best cosine similarity over every stored embedding; ties go to the
    /// identity enrolled first.
    pub fn match_probe(&self, probe: &[f64], threshold: f64) -> Result<MatchResult> {
        if let Some(d) = self.dim {
            if probe.len() != d {
                return input(format!("probe dim {} but gallery holds dim {d}", probe.len()));
            }
        }
        let probe = l2_normalize(ArrayView1::from(probe), 1e-12)?;
        let mut best: Option<(&str, f64)> = None;
        for ident in &self.identities {
            for e in &ident.entries {
                let s: f64 = e.embedding.iter().zip(&probe).map(|(a, b)| a * b).sum();
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((&ident.name, s));
                }
            }
        }
        Ok(match best {
            Some((name, s)) if s >= threshold => MatchResult::Known { name: name.to_string(), similarity: s },
            Some((_, s)) => MatchResult::Stranger { best: s },
            None => MatchResult::Stranger { best: f64::NEG_INFINITY },
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\nversion {VERSION}\n");
        for ident in &self.identities {
            let _ = writeln!(out, "identity {}", ident.name);
            let _ = writeln!(out, "dim {}", self.dim.unwrap_or(0));
            for e in &ident.entries {
                let _ = write!(out, "entry {}", e.seq);
                for v in &e.embedding {
                    let _ = write!(out, " {v:.16e}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |ln: usize, what: &str| Error::Format(format!("gallery line {}: {what}", ln + 1));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(bad(0, "missing gallery header")),
        }
        match lines.next() {
            Some((_, l)) if l == format!("version {VERSION}") => {}
            Some((ln, _)) => return Err(bad(ln, "unsupported version")),
            None => return Err(bad(1, "missing version")),
        }
        let mut g = Gallery::new();
        let mut current: Option<usize> = None;
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').ok_or_else(|| bad(ln, "malformed record"))?;
            match tag {
                "identity" => {
                    Self::check_name(rest).map_err(|_| bad(ln, "invalid identity name"))?;
                    if g.identity(rest).is_some() {
                        return Err(bad(ln, "duplicate identity"));
                    }
                    g.identities.push(Identity { name: rest.to_string(), entries: Vec::new() });
                    current = Some(g.identities.len() - 1);
                }
                "dim" => {
                    let d: usize = rest.parse().map_err(|_| bad(ln, "dim is not an integer"))?;
                    if current.is_none() || g.dim.is_some_and(|x| x != d) || d == 0 {
                        return Err(bad(ln, "inconsistent dim"));
                    }
                    g.dim = Some(d);
                }
                "entry" => {
                    let idx = current.ok_or_else(|| bad(ln, "entry before identity"))?;
                    let d = g.dim.ok_or_else(|| bad(ln, "entry before dim"))?;
                    let mut parts = rest.split(' ');
                    let seq: u64 =
                        parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad sequence number"))?;
                    let embedding = parts
                        .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(|| bad(ln, "bad embedding value"))?;
                    if embedding.len() != d {
                        return Err(bad(ln, "embedding length does not match dim"));
                    }
                    let entries = &mut g.identities[idx].entries;
                    if entries.len() >= MAX_PER_IDENTITY {
                        return Err(bad(ln, "identity exceeds the enrollment cap"));
                    }
                    g.next_seq = g.next_seq.max(seq + 1);
                    entries.push(Enrollment { embedding, seq });
                }
                _ => return Err(bad(ln, "unknown record")),
            }
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
