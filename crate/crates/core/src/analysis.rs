//! Framing analyses over resolved gold frames: Pearson correlations between
//! 0/1 indicator matrices (foundations, stances, reasons), the most frequent
//! entity-role tuples per (foundation, reason) and (foundation, stance), and
//! the post-study survey summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    difficulty_label, MoralFoundation, MoralityFrame, Polarity, Role, RoleKey, Stance, SurveyResponse,
    TextItem,
};

/// Key used for items without stance or reason metadata.
pub const UNLABELED: &str = "unlabeled";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("indicator matrices cover different items")]
    RowMismatch,
    #[error("malformed indicator matrix: {0}")]
    MalformedMatrix(String),
    #[error("item {item} carries reason tag {tag:?} which is not in the taxonomy")]
    UnknownReason { item: String, tag: String },
    #[error("taxonomy member {0} is not in the corpus")]
    UnknownMember(String),
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("no survey responses")]
    NoResponses,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[row][column]` is 0 or 1.
    pub cells: Vec<Vec<u8>>,
}

impl IndicatorMatrix {
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, cells: Vec<Vec<u8>>) -> Result<Self, AnalysisError> {
        if cells.len() != row_ids.len() {
            return Err(AnalysisError::MalformedMatrix(format!(
                "{} rows of cells for {} row ids",
                cells.len(),
                row_ids.len()
            )));
        }
        if let Some(row) = cells.iter().find(|r| r.len() != columns.len()) {
            return Err(AnalysisError::MalformedMatrix(format!(
                "row of width {} for {} columns",
                row.len(),
                columns.len()
            )));
        }
        if cells.iter().flatten().any(|&c| c > 1) {
            return Err(AnalysisError::MalformedMatrix("cells must be 0 or 1".into()));
        }
        let distinct: BTreeSet<&String> = row_ids.iter().collect();
        if distinct.len() != row_ids.len() {
            return Err(AnalysisError::MalformedMatrix("duplicate row id".into()));
        }
        Ok(IndicatorMatrix { row_ids, columns, cells })
    }

    /// One column per foundation (all seven); each row has exactly one 1.
    pub fn foundations(gold: &BTreeMap<String, MoralityFrame>) -> Self {
        let columns = MoralFoundation::ALL.iter().map(|f| f.display_label().to_string()).collect();
        let cells = gold
            .values()
            .map(|frame| {
                let mut row = vec![0; MoralFoundation::ALL.len()];
                row[frame.foundation.index()] = 1;
                row
            })
            .collect();
        IndicatorMatrix {
            row_ids: gold.keys().cloned().collect(),
            columns,
            cells,
        }
    }

    /// One column per stance; rows of items without a stance are all zero.
    pub fn stances(items: &[TextItem]) -> Result<Self, AnalysisError> {
        let columns = Stance::ALL.iter().map(|s| s.display_label().to_string()).collect();
        let cells = items
            .iter()
            .map(|item| {
                Stance::ALL
                    .iter()
                    .map(|s| u8::from(item.stance == Some(*s)))
                    .collect()
            })
            .collect();
        Self::new(items.iter().map(|i| i.id.clone()).collect(), columns, cells)
    }

    /// One column per taxonomy reason, in taxonomy order.
    pub fn reasons(items: &[TextItem], taxonomy: &ReasonTaxonomy) -> Result<Self, AnalysisError> {
        let memberships = taxonomy.memberships(items)?;
        let columns = taxonomy.reasons.iter().map(|r| r.display().to_string()).collect();
        let cells = items
            .iter()
            .map(|item| {
                let tags = &memberships[&item.id];
                (0..taxonomy.reasons.len()).map(|i| u8::from(tags.contains(&i))).collect()
            })
            .collect();
        Self::new(items.iter().map(|i| i.id.clone()).collect(), columns, cells)
    }

    /// Keeps only the rows in `ids`, preserving this matrix's order.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> Self {
        let (row_ids, cells) = self
            .row_ids
            .iter()
            .zip(&self.cells)
            .filter(|(id, _)| ids.contains(*id))
            .map(|(id, row)| (id.clone(), row.clone()))
            .unzip();
        IndicatorMatrix {
            row_ids,
            columns: self.columns.clone(),
            cells,
        }
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.cells.iter().map(|row| f64::from(row[c])).collect()
    }
}

/// Pearson's r, or `None` when either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson inputs differ in length");
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // one square root of the product: sqrt(fl(a * a)) == a, so r(x, x) is exactly 1
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Columns of the first matrix.
    pub row_labels: Vec<String>,
    /// Columns of the second matrix.
    pub col_labels: Vec<String>,
    /// `None` where a column is constant.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Correlates every column of `a` with every column of `b` over their shared
/// items. Both matrices must cover the same item set; row order may differ.
pub fn pearson_matrix(a: &IndicatorMatrix, b: &IndicatorMatrix) -> Result<CorrelationMatrix, AnalysisError> {
    let b_index: BTreeMap<&str, usize> = b.row_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if a.row_ids.len() != b.row_ids.len() {
        return Err(AnalysisError::RowMismatch);
    }
    let order = a
        .row_ids
        .iter()
        .map(|id| b_index.get(id.as_str()).copied().ok_or(AnalysisError::RowMismatch))
        .collect::<Result<Vec<_>, _>>()?;
    let a_cols: Vec<Vec<f64>> = (0..a.columns.len()).map(|c| a.column(c)).collect();
    let b_cols: Vec<Vec<f64>> = (0..b.columns.len())
        .map(|c| order.iter().map(|&r| f64::from(b.cells[r][c])).collect())
        .collect();
    let cells = a_cols
        .iter()
        .map(|x| b_cols.iter().map(|y| pearson(x, y)).collect())
        .collect();
    Ok(CorrelationMatrix {
        row_labels: a.columns.clone(),
        col_labels: b.columns.clone(),
        cells,
    })
}

impl CorrelationMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        self.cells[r][c]
    }

    /// Column label with the largest defined r in `row`. Ties go to the
    /// earlier column.
    pub fn argmax_in_row(&self, row: &str) -> Option<&str> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in self.cells[r].iter().enumerate() {
            if let Some(v) = *v {
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
        }
        best.map(|(c, _)| self.col_labels[c].as_str())
    }

    /// Row label with the largest defined r in `col`.
    pub fn argmax_in_column(&self, col: &str) -> Option<&str> {
        let c = self.col_labels.iter().position(|l| l == col)?;
        let mut best: Option<(usize, f64)> = None;
        for (r, row) in self.cells.iter().enumerate() {
            if let Some(v) = row[c] {
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((r, v));
                }
            }
        }
        best.map(|(r, _)| self.row_labels[r].as_str())
    }

    pub fn transpose(&self) -> Self {
        let cells = (0..self.col_labels.len())
            .map(|c| self.cells.iter().map(|row| row[c]).collect())
            .collect();
        CorrelationMatrix {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            cells,
        }
    }

    /// CSV with a `# seed:` comment line, a header of column labels and one
    /// row per row label. Missing cells are empty.
    pub fn to_csv(&self, corner: &str, seed: u64) -> Result<String, AnalysisError> {
        let mut out = format!("# seed: {seed}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec![corner.to_string()];
            header.extend(self.col_labels.iter().cloned());
            w.write_record(&header)?;
            for (label, row) in self.row_labels.iter().zip(&self.cells) {
                let mut record = vec![label.clone()];
                record.extend(row.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()));
                w.write_record(&record)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonDef {
    /// Canonical name, e.g. `VaccineWorks`.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Other spellings accepted in item reason tags.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// Item ids that carry this reason in addition to their own tags.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

impl ReasonDef {
    pub fn display(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonTaxonomy {
    pub reasons: Vec<ReasonDef>,
}

fn tag_key(tag: &str) -> String {
    tag.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl ReasonTaxonomy {
    pub fn from_toml_str(text: &str) -> Result<Self, AnalysisError> {
        let taxonomy: ReasonTaxonomy = toml::from_str(text).map_err(|e| AnalysisError::Taxonomy(e.to_string()))?;
        let mut seen = BTreeMap::new();
        for (i, r) in taxonomy.reasons.iter().enumerate() {
            for spelling in std::iter::once(&r.name).chain(&r.aliases) {
                let key = tag_key(spelling);
                if key.is_empty() {
                    return Err(AnalysisError::Taxonomy(format!("empty spelling in reason {}", r.name)));
                }
                if let Some(j) = seen.insert(key, i) {
                    if j != i {
                        return Err(AnalysisError::Taxonomy(format!("spelling {spelling:?} names two reasons")));
                    }
                }
            }
        }
        Ok(taxonomy)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("taxonomy always serializes")
    }

    /// Index of the reason a tag names, ignoring case, spaces and punctuation.
    pub fn lookup(&self, tag: &str) -> Option<usize> {
        let key = tag_key(tag);
        self.reasons
            .iter()
            .position(|r| std::iter::once(&r.name).chain(&r.aliases).any(|s| tag_key(s) == key))
    }

    /// Reason indices per item id, from item tags and taxonomy members.
    pub fn memberships(&self, items: &[TextItem]) -> Result<BTreeMap<String, BTreeSet<usize>>, AnalysisError> {
        let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for item in items {
            let entry = out.entry(item.id.clone()).or_default();
            for tag in item.reasons.iter().flatten() {
                let i = self.lookup(tag).ok_or_else(|| AnalysisError::UnknownReason {
                    item: item.id.clone(),
                    tag: tag.clone(),
                })?;
                entry.insert(i);
            }
        }
        for (i, r) in self.reasons.iter().enumerate() {
            for member in &r.members {
                out.get_mut(member)
                    .ok_or_else(|| AnalysisError::UnknownMember(member.clone()))?
                    .insert(i);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Reason,
    Stance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleCount {
    /// Most frequent surface form of the normalized entity.
    pub entity: String,
    pub role: Role,
    pub polarity: Polarity,
    pub count: usize,
    /// `count / total` of the owning tally.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRoleTally {
    pub foundation: MoralFoundation,
    pub facet: Facet,
    /// Reason name, stance label, or `unlabeled`.
    pub value: String,
    pub items: usize,
    /// Tuple occurrences under this key, over all tuples.
    pub total: usize,
    /// Fraction of the key's items per stance label.
    pub stance_shares: BTreeMap<String, f64>,
    pub tuples: Vec<TupleCount>,
}

#[derive(Default)]
struct KeyAccumulator<'a> {
    items: usize,
    stances: BTreeMap<String, usize>,
    tuples: BTreeMap<RoleKey, usize>,
    surfaces: BTreeMap<RoleKey, BTreeMap<&'a str, usize>>,
}

fn stance_key(item: &TextItem) -> String {
    item.stance.map_or(UNLABELED, |s| s.display_label()).to_string()
}

/// The `k` most frequent (entity, role, polarity) tuples for every
/// (foundation, reason) and (foundation, stance) key that has items.
/// Items missing from `gold` are skipped. Tallies are ordered by foundation,
/// facet, then value.
pub fn top_entity_roles(
    gold: &BTreeMap<String, MoralityFrame>,
    items: &[TextItem],
    taxonomy: Option<&ReasonTaxonomy>,
    k: usize,
) -> Result<Vec<EntityRoleTally>, AnalysisError> {
    let memberships = match taxonomy {
        Some(t) => Some(t.memberships(items)?),
        None => None,
    };
    let mut keys: BTreeMap<(MoralFoundation, Facet, String), KeyAccumulator> = BTreeMap::new();
    for item in items {
        let Some(frame) = gold.get(&item.id) else { continue };
        let mut reasons: Vec<String> = match (&memberships, taxonomy) {
            (Some(m), Some(t)) => m[&item.id].iter().map(|&i| t.reasons[i].name.clone()).collect(),
            _ => item.reasons.iter().flatten().cloned().collect(),
        };
        if reasons.is_empty() {
            reasons.push(UNLABELED.to_string());
        }
        let facets = reasons
            .into_iter()
            .map(|r| (Facet::Reason, r))
            .chain(std::iter::once((Facet::Stance, stance_key(item))));
        for (facet, value) in facets {
            let acc = keys.entry((frame.foundation, facet, value)).or_default();
            acc.items += 1;
            *acc.stances.entry(stance_key(item)).or_default() += 1;
            let mut seen = BTreeSet::new();
            for role in &frame.roles {
                let key = role.key();
                if !seen.insert(key.clone()) {
                    continue;
                }
                *acc.tuples.entry(key.clone()).or_default() += 1;
                *acc.surfaces.entry(key).or_default().entry(role.entity.as_str()).or_default() += 1;
            }
        }
    }
    Ok(keys
        .into_iter()
        .map(|((foundation, facet, value), acc)| {
            let total: usize = acc.tuples.values().sum();
            let mut ranked: Vec<(&RoleKey, usize)> = acc.tuples.iter().map(|(key, &n)| (key, n)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let tuples = ranked
                .into_iter()
                .take(k)
                .map(|(key, count)| {
                    let surfaces = &acc.surfaces[key];
                    let entity = surfaces
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                        .map(|(s, _)| s.to_string())
                        .unwrap_or_else(|| key.entity.clone());
                    TupleCount {
                        entity,
                        role: key.role,
                        polarity: key.polarity,
                        count,
                        share: count as f64 / total as f64,
                    }
                })
                .collect();
            let stance_shares = acc
                .stances
                .iter()
                .map(|(s, &n)| (s.clone(), n as f64 / acc.items as f64))
                .collect();
            EntityRoleTally {
                foundation,
                facet,
                value,
                items: acc.items,
                total,
                stance_shares,
                tuples,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub rows: Vec<SurveyResponse>,
    pub respondents: usize,
    /// Most common score; ties go to the easier score.
    pub modal_difficulty_without_expl: u8,
    pub modal_difficulty_with_expl: u8,
    pub helpful_count: usize,
    pub reduced_load_count: usize,
    pub helpful_fraction: f64,
    pub reduced_load_fraction: f64,
    pub mean_minutes: f64,
    pub median_minutes: f64,
}

fn mode(values: impl Iterator<Item = u8>) -> u8 {
    let mut counts = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, n)| n == top)
        .map(|(v, _)| v)
        .unwrap_or(0)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Rows sorted by annotator id plus aggregates.
pub fn survey_report(responses: &[SurveyResponse]) -> Result<SurveyReport, AnalysisError> {
    if responses.is_empty() {
        return Err(AnalysisError::NoResponses);
    }
    let mut rows = responses.to_vec();
    rows.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    let n = rows.len();
    let helpful_count = rows.iter().filter(|r| r.explanations_helpful).count();
    let reduced_load_count = rows.iter().filter(|r| r.reduced_cognitive_load).count();
    let minutes: Vec<f64> = rows.iter().map(|r| r.avg_minutes_per_batch).collect();
    Ok(SurveyReport {
        respondents: n,
        modal_difficulty_without_expl: mode(rows.iter().map(|r| r.difficulty_without_expl)),
        modal_difficulty_with_expl: mode(rows.iter().map(|r| r.difficulty_with_expl)),
        helpful_count,
        reduced_load_count,
        helpful_fraction: helpful_count as f64 / n as f64,
        reduced_load_fraction: reduced_load_count as f64 / n as f64,
        mean_minutes: minutes.iter().sum::<f64>() / n as f64,
        median_minutes: median(minutes),
        rows,
    })
}

impl SurveyReport {
    /// One row per annotator followed by an `all` summary row.
    pub fn to_csv(&self, seed: u64) -> Result<String, AnalysisError> {
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let mut out = format!("# seed: {seed}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "annotator",
                "difficulty_without_expl",
                "difficulty_with_expl",
                "explanations_helpful",
                "reduced_cognitive_load",
                "avg_minutes_per_batch",
            ])?;
            for r in &self.rows {
                w.write_record([
                    r.annotator_id.clone(),
                    format!("{} ({})", r.difficulty_without_expl, difficulty_label(r.difficulty_without_expl)),
                    format!("{} ({})", r.difficulty_with_expl, difficulty_label(r.difficulty_with_expl)),
                    yes_no(r.explanations_helpful).to_string(),
                    yes_no(r.reduced_cognitive_load).to_string(),
                    format!("{}", r.avg_minutes_per_batch),
                ])?;
            }
            w.write_record([
                "all".to_string(),
                format!("mode {}", self.modal_difficulty_without_expl),
                format!("mode {}", self.modal_difficulty_with_expl),
                format!("{}/{}", self.helpful_count, self.respondents),
                format!("{}/{}", self.reduced_load_count, self.respondents),
                format!("mean {:.4} median {}", self.mean_minutes, self.median_minutes),
            ])?;
            w.flush()?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Diverging fill: blue for negative r, red for positive, grey when missing.
fn fill(v: Option<f64>) -> String {
    match v {
        None => "#dddddd".to_string(),
        Some(r) => {
            let t = r.abs().min(1.0);
            let fade = |c: f64| (255.0 - t * (255.0 - c)).round() as u8;
            if r >= 0.0 {
                format!("#{:02x}{:02x}{:02x}", 255, fade(60.0), fade(60.0))
            } else {
                format!("#{:02x}{:02x}{:02x}", fade(60.0), fade(90.0), 255)
            }
        }
    }
}

/// Static SVG with one labeled heatmap panel per matrix, stacked vertically.
pub fn render_heatmaps(panels: &[(&str, &CorrelationMatrix)]) -> String {
    const CELL: usize = 56;
    const LABEL: usize = 190;
    const HEADER: usize = 150;
    const GAP: usize = 40;
    let width = panels
        .iter()
        .map(|(_, m)| LABEL + CELL * m.col_labels.len())
        .max()
        .unwrap_or(LABEL)
        + 20;
    let height: usize = panels
        .iter()
        .map(|(_, m)| HEADER + CELL * m.row_labels.len() + GAP)
        .sum::<usize>()
        + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let mut y0 = 10;
    for (title, m) in panels {
        let _ = writeln!(svg, r#"<text x="4" y="{}" font-size="14" font-weight="bold">{}</text>"#, y0 + 14, xml_escape(title));
        for (c, label) in m.col_labels.iter().enumerate() {
            let x = LABEL + c * CELL + CELL / 2;
            let y = y0 + HEADER - 6;
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{y}" transform="rotate(-45 {x} {y})">{}</text>"#,
                xml_escape(label)
            );
        }
        for (r, label) in m.row_labels.iter().enumerate() {
            let y = y0 + HEADER + r * CELL;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                LABEL - 6,
                y + CELL / 2 + 4,
                xml_escape(label)
            );
            for (c, v) in m.cells[r].iter().enumerate() {
                let x = LABEL + c * CELL;
                let text = v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"/><text x="{}" y="{}" text-anchor="middle">{text}</text>"##,
                    fill(*v),
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
        y0 += HEADER + CELL * m.row_labels.len() + GAP;
    }
    svg.push_str("</svg>\n");
    svg
}
