//! Generators and exhaustive checks that pit production code against the
//! oracles. Shared by the integration tests and the acceptance gate.

use moralframe_core::aggregate::{resolve_item, LabelSource};
use moralframe_core::{
    validate_frame, EntityRole, Judgment, MoralFoundation, MoralityFrame, Polarity, Role, RoleKey, TextItem,
};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::oracles::{frame_id, oracle_majority, OracleOutcome, OracleVote};

/// [`frame_id`] of a production frame.
pub fn frame_id_of(frame: &MoralityFrame) -> String {
    let roles: Vec<(&str, &str, &str)> = frame
        .roles
        .iter()
        .map(|r| (r.entity.as_str(), r.role.as_str(), r.polarity.as_str()))
        .collect();
    frame_id(frame.foundation.as_str(), &roles)
}

/// Vote symbols: `None` is agree, `Some` a disagreement with that
/// correction. Symbols 2 and 3 differ only in entity case, spacing and role
/// order, so they name the same correction.
pub fn vote_alphabet() -> Vec<Option<MoralityFrame>> {
    use Polarity::{Negative as Neg, Positive as Pos};
    use Role::{Actor, Target};
    vec![
        None,
        Some(MoralityFrame::none()),
        Some(MoralityFrame::new(
            MoralFoundation::CareHarm,
            vec![EntityRole::new("vaccine", Actor, Pos), EntityRole::new("kids", Target, Pos)],
        )),
        Some(MoralityFrame::new(
            MoralFoundation::CareHarm,
            vec![EntityRole::new("Kids", Target, Pos), EntityRole::new("  VACCINE ", Actor, Pos)],
        )),
        Some(MoralityFrame::new(MoralFoundation::CareHarm, vec![EntityRole::new("vaccine", Actor, Pos)])),
        Some(MoralityFrame::new(
            MoralFoundation::LibertyOppression,
            vec![EntityRole::new("mandate", Actor, Neg)],
        )),
    ]
}

/// Every multiset of `size` symbols from `0..symbols`, as sorted vectors.
pub fn multisets(symbols: usize, size: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, symbols: usize, left: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(acc.clone());
            return;
        }
        for s in start..symbols {
            acc.push(s);
            go(s, symbols, left - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    go(0, symbols, size, &mut Vec::new(), &mut out);
    out
}

fn judgments(votes: &[usize], alphabet: &[Option<MoralityFrame>]) -> Vec<Judgment> {
    votes
        .iter()
        .enumerate()
        .map(|(i, &v)| match &alphabet[v] {
            None => Judgment::agree("x", format!("P{i}")),
            Some(frame) => Judgment::disagree("x", format!("P{i}"), frame.clone()),
        })
        .collect()
}

/// Resolves every vote multiset of size `1..=max_size` over
/// [`vote_alphabet`], in sorted, reversed and every rotated order, and
/// compares each outcome with [`oracle_majority`]. Returns the number of
/// resolutions checked.
pub fn check_majority_exhaustive(max_size: usize) -> Result<usize, String> {
    let alphabet = vote_alphabet();
    let llm = MoralityFrame::new(MoralFoundation::FairnessCheating, vec![]);
    let mut checked = 0;
    for size in 1..=max_size {
        for votes in multisets(alphabet.len(), size) {
            let oracle_votes: Vec<OracleVote> = votes
                .iter()
                .map(|&v| match &alphabet[v] {
                    None => OracleVote::Agree,
                    Some(f) => OracleVote::Disagree(frame_id_of(f)),
                })
                .collect();
            let want = oracle_majority(&oracle_votes);
            let mut orders = vec![votes.clone(), votes.iter().rev().copied().collect()];
            for r in 1..votes.len() {
                let mut rotated = votes.clone();
                rotated.rotate_left(r);
                orders.push(rotated);
            }
            let mut first: Option<(Option<MoralityFrame>, LabelSource)> = None;
            for order in orders {
                let js = judgments(&order, &alphabet);
                let refs: Vec<&Judgment> = js.iter().collect();
                let got = resolve_item("x", &llm, &refs);
                let agrees = match (&want, &got.gold) {
                    (OracleOutcome::LlmWin, Some(g)) => got.source == LabelSource::LlmWin && *g == llm,
                    (OracleOutcome::HumanMajority(id), Some(g)) => {
                        got.source == LabelSource::HumanMajority && frame_id_of(g) == *id
                    }
                    (OracleOutcome::Adjudicated, None) => got.source == LabelSource::Adjudicated,
                    _ => false,
                };
                if !agrees {
                    return Err(format!("votes {order:?}: oracle {want:?}, resolve {:?}", got.source));
                }
                let this = (got.gold, got.source);
                match &first {
                    None => first = Some(this),
                    Some(prev) if *prev != this => return Err(format!("vote order changed the outcome for {votes:?}")),
                    Some(_) => {}
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Nominal ratings: `units` rows of `coders` cells, each missing with
/// probability `p_missing`, otherwise one of `values` categories.
pub fn random_ratings<R: Rng>(rng: &mut R, units: usize, coders: usize, values: u8, p_missing: f64) -> Vec<Vec<Option<u8>>> {
    (0..units)
        .map(|_| {
            (0..coders)
                .map(|_| (!rng.random_bool(p_missing)).then(|| rng.random_range(0..values)))
                .collect()
        })
        .collect()
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .filter(|w| w.chars().all(char::is_alphanumeric))
        .collect()
}

/// A frame that passes validation against `item`: entities are one or two
/// consecutive words of the text, role keys are distinct, and explanations
/// are single lines.
pub fn random_valid_frame<R: Rng>(rng: &mut R, item: &TextItem) -> MoralityFrame {
    let foundation = *MoralFoundation::ALL.choose(rng).expect("non-empty");
    let words = words(&item.text);
    let mut roles = Vec::new();
    if foundation != MoralFoundation::None && !words.is_empty() {
        let mut seen: Vec<RoleKey> = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let start = rng.random_range(0..words.len());
            let end = (start + rng.random_range(1..=2)).min(words.len());
            let entity = words[start..end].join(" ");
            let role = EntityRole::new(
                entity,
                if rng.random_bool(0.5) { Role::Actor } else { Role::Target },
                if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative },
            );
            if !seen.contains(&role.key()) {
                seen.push(role.key());
                roles.push(role);
            }
        }
    }
    let pick = |rng: &mut R| words.choose(rng).copied().unwrap_or("it");
    let foundation_explanation = format!("The post is about {} and {}.", pick(rng), pick(rng));
    let role_explanation = if roles.is_empty() {
        "No moral roles.".to_string()
    } else {
        format!("{} is the main actor here.", roles[0].entity)
    };
    let frame = MoralityFrame::new(foundation, roles).with_explanations(foundation_explanation, role_explanation);
    validate_frame(&frame, item).expect("generated frames fit their text")
}
