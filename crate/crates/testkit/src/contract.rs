//! Submission vectors shared with the browser client. Each names a post, a
//! verdict with optional correction, and what the service answers: `ok` or
//! the error code. Expectations follow the model invariants, and a test
//! replays every vector against the service.

use moralframe_core::{EntityRole, MoralFoundation, MoralityFrame, Polarity, Role, Verdict};
use serde::{Deserialize, Serialize};

use crate::cases::SUFFERING_TEXT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractVector {
    pub name: String,
    pub text: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<MoralityFrame>,
    pub expect: String,
}

fn vector(name: &str, verdict: Verdict, correction: Option<MoralityFrame>, expect: &str) -> ContractVector {
    ContractVector {
        name: name.into(),
        text: SUFFERING_TEXT.into(),
        verdict,
        correction,
        expect: expect.into(),
    }
}

pub fn contract_vectors() -> Vec<ContractVector> {
    use MoralFoundation as F;
    use Polarity::{Negative as Neg, Positive as Pos};
    use Role::{Actor, Target};
    let harm = |roles: Vec<EntityRole>| Some(MoralityFrame::new(F::CareHarm, roles));
    vec![
        vector("agree", Verdict::Agree, None, "ok"),
        vector(
            "agree_with_correction",
            Verdict::Agree,
            Some(MoralityFrame::none()),
            "InvalidRequest",
        ),
        vector("disagree_without_correction", Verdict::Disagree, None, "IncompleteCorrection"),
        vector("disagree_none", Verdict::Disagree, Some(MoralityFrame::none()), "ok"),
        vector(
            "disagree_none_with_roles",
            Verdict::Disagree,
            Some(MoralityFrame::new(F::None, vec![EntityRole::new("We", Actor, Neg)])),
            "IncompleteCorrection",
        ),
        vector(
            "disagree_highlighted_spans",
            Verdict::Disagree,
            harm(vec![
                EntityRole::new("pandemic", Actor, Neg).with_span(22, 30),
                EntityRole::new("We", Target, Neg).with_span(0, 2),
            ]),
            "ok",
        ),
        vector(
            "disagree_without_spans",
            Verdict::Disagree,
            harm(vec![EntityRole::new("pandemic", Actor, Neg), EntityRole::new("We", Target, Neg)]),
            "ok",
        ),
        vector("disagree_foundation_only", Verdict::Disagree, harm(Vec::new()), "ok"),
        vector(
            "disagree_duplicate_tuple",
            Verdict::Disagree,
            harm(vec![EntityRole::new("We", Target, Neg), EntityRole::new("we", Target, Neg)]),
            "IncompleteCorrection",
        ),
        vector(
            "disagree_empty_entity",
            Verdict::Disagree,
            harm(vec![EntityRole::new("  ", Actor, Neg)]),
            "IncompleteCorrection",
        ),
        vector(
            "disagree_span_text_mismatch",
            Verdict::Disagree,
            harm(vec![EntityRole::new("pandemic", Actor, Neg).with_span(0, 8)]),
            "InvalidCorrection",
        ),
        vector(
            "disagree_span_out_of_bounds",
            Verdict::Disagree,
            harm(vec![EntityRole::new("pandemic", Actor, Neg).with_span(22, 31)]),
            "InvalidCorrection",
        ),
        vector(
            "disagree_empty_span",
            Verdict::Disagree,
            harm(vec![EntityRole::new("pandemic", Actor, Neg).with_span(22, 22)]),
            "InvalidCorrection",
        ),
        vector(
            "disagree_same_entity_two_roles",
            Verdict::Disagree,
            harm(vec![EntityRole::new("We", Actor, Pos), EntityRole::new("We", Target, Neg)]),
            "ok",
        ),
    ]
}
