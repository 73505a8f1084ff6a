//! Naive reference computations. Nothing here calls into the production
//! crates; inputs are plain strings and numbers so a shared bug cannot hide
//! on both sides of a differential test.

/// Nominal alpha by explicit enumeration of ordered value pairs: within each
/// unit for the observed disagreement, across all pairable values for the
/// expected one. `None` when fewer than two units hold two or more values.
/// A matrix whose pairable values are all equal gives 1.0.
pub fn oracle_alpha<V: PartialEq>(units: &[Vec<Option<V>>]) -> Option<f64> {
    let pairable: Vec<Vec<&V>> = units
        .iter()
        .map(|u| u.iter().flatten().collect::<Vec<&V>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if pairable.len() < 2 {
        return None;
    }
    let n: usize = pairable.iter().map(Vec::len).sum();

    let mut observed = 0.0;
    for unit in &pairable {
        let m = unit.len();
        let mut mismatched_pairs = 0usize;
        for i in 0..m {
            for j in 0..m {
                if i != j && unit[i] != unit[j] {
                    mismatched_pairs += 1;
                }
            }
        }
        observed += mismatched_pairs as f64 / (m as f64 - 1.0);
    }
    observed /= n as f64;

    let all: Vec<&V> = pairable.iter().flatten().copied().collect();
    let mut mismatched_pairs = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && all[i] != all[j] {
                mismatched_pairs += 1;
            }
        }
    }
    let expected = mismatched_pairs as f64 / (n as f64 * (n as f64 - 1.0));
    if expected == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - observed / expected)
}

/// Canonical string for a frame given as raw fields: entities lower-cased
/// with whitespace runs collapsed, tuples sorted and deduplicated.
pub fn frame_id(foundation: &str, roles: &[(&str, &str, &str)]) -> String {
    let mut tuples: Vec<String> = roles
        .iter()
        .map(|(entity, role, polarity)| {
            let words: Vec<&str> = entity.split_whitespace().collect();
            format!("{}/{role}/{polarity}", words.join(" ").to_lowercase())
        })
        .collect();
    tuples.sort();
    tuples.dedup();
    format!("{foundation}|{}", tuples.join(";"))
}

/// Foundation part of a [`frame_id`].
pub fn frame_id_foundation(id: &str) -> &str {
    id.split('|').next().unwrap_or(id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVote {
    Agree,
    /// Disagreement carrying the [`frame_id`] of the correction.
    Disagree(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    LlmWin,
    /// Gold is the correction with this [`frame_id`].
    HumanMajority(String),
    Adjudicated,
}

/// Majority vote by counting: more than half agree gives an LLM win; more
/// than half disagree gives the single most common correction; anything else,
/// including a tie for most common correction, needs adjudication.
pub fn oracle_majority(votes: &[OracleVote]) -> OracleOutcome {
    let total = votes.len();
    let agrees = votes.iter().filter(|v| **v == OracleVote::Agree).count();
    let disagrees = total - agrees;
    if agrees * 2 > total {
        return OracleOutcome::LlmWin;
    }
    if disagrees * 2 <= total {
        return OracleOutcome::Adjudicated;
    }
    let mut tally: Vec<(String, usize)> = Vec::new();
    for vote in votes {
        if let OracleVote::Disagree(id) = vote {
            match tally.iter_mut().find(|(seen, _)| seen == id) {
                Some(entry) => entry.1 += 1,
                None => tally.push((id.clone(), 1)),
            }
        }
    }
    let best = tally.iter().map(|(_, n)| *n).max().unwrap_or(0);
    let leaders: Vec<&String> = tally.iter().filter(|(_, n)| *n == best).map(|(id, _)| id).collect();
    if leaders.len() == 1 {
        OracleOutcome::HumanMajority(leaders[0].clone())
    } else {
        OracleOutcome::Adjudicated
    }
}

/// Overall and foundation-only accuracy over `(llm, gold)` frame ids.
pub fn oracle_accuracies(pairs: &[(String, String)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let full = pairs.iter().filter(|(p, g)| p == g).count() as f64;
    let mf = pairs
        .iter()
        .filter(|(p, g)| frame_id_foundation(p) == frame_id_foundation(g))
        .count() as f64;
    (full / n, mf / n)
}

/// Per-class F1 from confusion counts over classes seen in `gold` or `pred`,
/// and their unweighted mean.
pub fn oracle_f1(gold: &[&str], pred: &[&str]) -> (f64, Vec<(String, f64)>) {
    let mut classes: Vec<&str> = gold.iter().chain(pred.iter()).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let mut per_class = Vec::new();
    for class in &classes {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(pred) {
            match (g == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        let f1 = if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 };
        per_class.push((class.to_string(), f1));
    }
    let macro_f1 = per_class.iter().map(|(_, f)| f).sum::<f64>() / per_class.len() as f64;
    (macro_f1, per_class)
}

/// Textbook two-pass Pearson r; `None` when either vector is constant.
pub fn oracle_pearson(x: &[u8], y: &[u8]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a as f64 - mx, b as f64 - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// One resolved item for [`oracle_tuple_count`]: its foundation, the facet
/// values it belongs to, and its raw role tuples.
#[derive(Debug, Clone)]
pub struct TallyRow {
    pub foundation: String,
    pub keys: Vec<String>,
    pub tuples: Vec<(String, String, String)>,
}

/// Items under (`foundation`, `key`) whose frame contains `tuple` after
/// entity normalization.
pub fn oracle_tuple_count(rows: &[TallyRow], foundation: &str, key: &str, tuple: (&str, &str, &str)) -> usize {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    rows.iter()
        .filter(|r| r.foundation == foundation && r.keys.iter().any(|k| k == key))
        .filter(|r| {
            r.tuples
                .iter()
                .any(|(e, ro, p)| norm(e) == norm(tuple.0) && ro == tuple.1 && p == tuple.2)
        })
        .count()
}

/// Arithmetic mean.
pub fn oracle_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
