//! Ranking metrics: mAP@k over per-query result lists and GAP over a flat
//! list of confidence-scored predictions.

use std::collections::BTreeMap;

use crate::error::{input, Error, Result};

/// One query's ranked results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRanking {
    /// Relevance of the prediction at rank `k + 1`.
    pub relevant: Vec<bool>,
    /// Number of relevant gallery items for this query.
    pub n_relevant: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub confidence: f64,
    pub correct: bool,
}

/// Mean over queries of `(1 / min(m_q, k)) * sum_{r <= k} P_q(r) rel_q(r)`.
///
/// Queries with no relevant item are left out of the mean.
pub fn map_at_k(queries: &[QueryRanking], k: usize) -> Result<f64> {
    if k == 0 {
        return input("k must be positive");
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for q in queries.iter().filter(|q| q.n_relevant > 0) {
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (r, &rel) in q.relevant.iter().take(k).enumerate() {
            if rel {
                hits += 1;
                sum += hits as f64 / (r + 1) as f64;
            }
        }
        total += sum / q.n_relevant.min(k) as f64;
        counted += 1;
    }
    if counted == 0 {
        return input("no query has a relevant item");
    }
    Ok(total / counted as f64)
}

pub fn map_at_100(queries: &[QueryRanking]) -> Result<f64> {
    map_at_k(queries, 100)
}

/// `(1 / M) * sum_i P(i) rel(i)` with predictions ranked by descending
/// confidence; equal confidences keep their input order.
pub fn gap(predictions: &[Prediction], m_total: usize) -> Result<f64> {
    if m_total == 0 {
        return input("GAP needs at least one query");
    }
    if predictions.iter().any(|p| !p.confidence.is_finite()) {
        return input("non-finite confidence");
    }
    let mut order: Vec<&Prediction> = predictions.iter().collect();
    // stable sort: ties stay in insertion order
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, p) in order.iter().enumerate() {
        if p.correct {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / m_total as f64)
}

/// Rankings parsed from `query,rank,correct,confidence[,relevant]` rows.
///
/// Without the `relevant` column a query's relevant count is the number of
/// its correct rows. GAP uses each query's best-ranked row; `M` counts the
/// queries, or only those with `relevant > 0` when the column is present.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRetrieval {
    pub queries: Vec<QueryRanking>,
    pub top_predictions: Vec<Prediction>,
    pub in_gallery: usize,
}

struct Row {
    rank: usize,
    correct: bool,
    confidence: f64,
    relevant: Option<usize>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

impl RankedRetrieval {
    pub fn parse(text: &str) -> Result<Self> {
        let mut by_query: BTreeMap<String, (usize, Vec<Row>)> = BTreeMap::new();
        let mut has_relevant = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (ln == 0 && line.starts_with("query")) {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("line {}: {what}", ln + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 && f.len() != 5 {
                return Err(bad("expected 4 or 5 comma-separated fields"));
            }
            let with_rel = f.len() == 5;
            if *has_relevant.get_or_insert(with_rel) != with_rel {
                return Err(bad("inconsistent column count"));
            }
            let row = Row {
                rank: f[1].parse().map_err(|_| bad("rank is not an integer"))?,
                correct: parse_bool(f[2]).ok_or_else(|| bad("correct must be 0/1"))?,
                confidence: f[3].parse().map_err(|_| bad("confidence is not a number"))?,
                relevant: match f.get(4) {
                    Some(v) => Some(v.parse().map_err(|_| bad("relevant is not an integer"))?),
                    None => None,
                },
            };
            if !row.confidence.is_finite() {
                return Err(bad("non-finite confidence"));
            }
            let next = by_query.len();
            by_query.entry(f[0].to_string()).or_insert((next, Vec::new())).1.push(row);
        }
        if by_query.is_empty() {
            return input("ranked file has no rows");
        }

        let mut groups: Vec<(usize, Vec<Row>)> = by_query.into_values().collect();
        groups.sort_by_key(|g| g.0);
        let mut queries = Vec::with_capacity(groups.len());
        let mut top_predictions = Vec::with_capacity(groups.len());
        let mut in_gallery = 0;
        for (_, mut rows) in groups {
            rows.sort_by_key(|r| r.rank);
            let n_relevant = match rows[0].relevant {
                Some(_) => rows.iter().filter_map(|r| r.relevant).max().unwrap_or(0),
                None => rows.iter().filter(|r| r.correct).count(),
            };
            if has_relevant != Some(true) || n_relevant > 0 {
                in_gallery += 1;
            }
            top_predictions.push(Prediction { confidence: rows[0].confidence, correct: rows[0].correct });
            queries.push(QueryRanking { relevant: rows.iter().map(|r| r.correct).collect(), n_relevant });
        }
        Ok(Self { queries, top_predictions, in_gallery })
    }

    pub fn map_at_100(&self) -> Result<f64> {
        map_at_100(&self.queries)
    }

    pub fn gap(&self) -> Result<f64> {
        gap(&self.top_predictions, self.in_gallery)
    }
}
