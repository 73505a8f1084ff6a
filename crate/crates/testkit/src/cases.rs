//! Hand-built reference cases: well-known example posts with their expected
//! frames, judgment patterns for the resolution edge cases, the nine survey
//! responses, and small metric fixtures with hand-counted expectations.

use std::collections::BTreeMap;

use moralframe_core::{
    EntityRole, Judgment, MoralFoundation, MoralityFrame, Polarity, Role, Stance, SurveyResponse, TextItem,
};

use MoralFoundation as F;
use Polarity::{Negative as Neg, Positive as Pos};
use Role::{Actor, Target};

pub type Tuple = (&'static str, Role, Polarity);

fn frame(foundation: MoralFoundation, tuples: &[Tuple]) -> MoralityFrame {
    MoralityFrame::new(foundation, tuples.iter().map(|&(e, r, p)| EntityRole::new(e, r, p)).collect())
}

/// A raw completion for a known post and the frame it must parse to.
#[derive(Debug, Clone)]
pub struct ParseCase {
    pub name: &'static str,
    pub item: TextItem,
    pub completion: &'static str,
    pub foundation: MoralFoundation,
    pub tuples: Vec<Tuple>,
}

impl ParseCase {
    pub fn expected(&self) -> MoralityFrame {
        frame(self.foundation, &self.tuples)
    }
}

pub const PFIZER_TEXT: &str = "Pfizer vaccine testing utilized cell lines from human fetus tissue. This makes it \
abhorrent, heretical and blasphemous to anyone calling themselves a Christian.";
pub const FOX_NEWS_TEXT: &str = "Surprise: Fox News Hosts Are Following Strict COVID Protocols While Telling Viewers \
Masks and Vaccines Are Liberal Plots.";
pub const MANDATE_TEXT: &str = "Mark my words, we will fight Biden's authoritative COVID-19 vaccine mandate because it \
has no place in a free country....this is tyranny and cannot stand.";
pub const GIVE_TEXT: &str = "I give to the poor";
pub const SUFFERING_TEXT: &str = "We are suffering from pandemic";
pub const PENTAGON_TEXT: &str = "Pentagon to require COVID vaccine for all troops by Sept. 15";
pub const GENE_JAB_TEXT: &str = "We were in a better situation this time last year with no vaccine. The gene jab is \
the equivalent of pouring petrol on the flames, leaky vaccines lead to more variants & the trialists have destroyed \
their immune systems. Bunch of Turkeys and xmas is coming!";

/// Five posts with known frames, each paired with a completion in a
/// different surface style the parser has to cope with.
pub fn parse_cases() -> Vec<ParseCase> {
    vec![
        ParseCase {
            name: "fetal_cell_lines",
            item: TextItem::new("ref-pfizer", PFIZER_TEXT),
            completion: "degradation\n\
Explanation: Using fetal tissue in vaccine research is presented as defiling something sacred for Christians.\n\
Actor-Target-Polarity: (Pfizer vaccine, actor, negative); (Christian, target, negative)\n\
Explanation: The vaccine is the entity that degrades; Christians are the ones offended.\n",
            foundation: F::SanctityDegradation,
            tuples: vec![("Pfizer vaccine", Actor, Neg), ("Christian", Target, Neg)],
        },
        ParseCase {
            name: "hypocritical_hosts",
            item: TextItem::new("ref-fox", FOX_NEWS_TEXT),
            completion: "Sure, here is the analysis.\n\n\
**Moral Foundation:** fairness/cheating\n\
**Explanation:** The hosts protect themselves while telling their audience the precautions are a hoax, a double standard.\n\
**Actor-Target-Polarity:**\n\
- (Fox News, actor, negative)\n\
- (viewers, target, negative)\n\
**Explanation:** Fox News misleads; the viewers bear the cost.\n",
            foundation: F::FairnessCheating,
            tuples: vec![("Fox News", Actor, Neg), ("viewers", Target, Neg)],
        },
        ParseCase {
            name: "mandate_as_tyranny",
            item: TextItem::new("ref-mandate", MANDATE_TEXT),
            completion: "Moral Foundation: Liberty / Oppression\n\
Explanation: The author treats a federal vaccine requirement as tyranny that takes away freedom.\n\
Actor-Target-Polarity: (Biden, actor, negative), (we, target, negative)\n\
Explanation: Biden imposes the mandate and \"we\" resist it.\n",
            foundation: F::LibertyOppression,
            tuples: vec![("Biden", Actor, Neg), ("we", Target, Neg)],
        },
        ParseCase {
            name: "giving_to_the_poor",
            item: TextItem::new("ref-give", GIVE_TEXT),
            completion: "Moral Foundation:\ncare\n\
Explanation: Helping people in need.\n\
Actor-Target-Polarity: (I, actor, positive); (the poor, target, positive)\n\
Explanation: The speaker helps; the poor benefit.\n",
            foundation: F::CareHarm,
            tuples: vec![("I", Actor, Pos), ("the poor", Target, Pos)],
        },
        ParseCase {
            name: "suffering_from_pandemic",
            item: TextItem::new("ref-suffering", SUFFERING_TEXT),
            completion: "harm\n\
explanation: People are hurt by the disease.\n\
actor-target-polarity: (pandemic, actor, negative); (We, target, negative)\n",
            foundation: F::CareHarm,
            tuples: vec![("pandemic", Actor, Neg), ("We", Target, Neg)],
        },
    ]
}

/// An item, the frame the model proposed, and the votes cast on it.
#[derive(Debug, Clone)]
pub struct ResolutionCase {
    pub item: TextItem,
    pub llm_frame: MoralityFrame,
    pub judgments: Vec<Judgment>,
}

/// A factual announcement the model over-reads as authority/subversion; all
/// three raters correct it to `none`.
pub fn false_positive_case() -> ResolutionCase {
    let item = TextItem::new("ref-pentagon", PENTAGON_TEXT);
    let llm_frame = frame(F::AuthoritySubversion, &[("Pentagon", Actor, Pos), ("troops", Target, Pos)])
        .with_explanations(
            "The Pentagon uses its authority to set a health rule.",
            "The Pentagon acts for the benefit of the troops.",
        );
    let judgments = ["R1", "R2", "R3"]
        .iter()
        .map(|r| Judgment::disagree(&item.id, *r, MoralityFrame::none()))
        .collect();
    ResolutionCase {
        item,
        llm_frame,
        judgments,
    }
}

/// One rater accepts sanctity/degradation, one says `none`, one says
/// care/harm: no majority correction exists.
pub fn three_way_case() -> ResolutionCase {
    let item = TextItem::new("ref-gene-jab", GENE_JAB_TEXT);
    let llm_frame = frame(F::SanctityDegradation, &[("gene jab", Actor, Neg), ("trialists", Target, Neg)]);
    let judgments = vec![
        Judgment::agree(&item.id, "R1"),
        Judgment::disagree(&item.id, "R2", MoralityFrame::none()),
        Judgment::disagree(
            &item.id,
            "R3",
            frame(F::CareHarm, &[("leaky vaccines", Actor, Neg), ("immune systems", Target, Neg)]),
        ),
    ];
    ResolutionCase {
        item,
        llm_frame,
        judgments,
    }
}

/// The nine post-study survey responses (difficulty 5 = very hard, 4 = hard,
/// 3 = okay, 2 = easy).
pub fn survey_rows() -> Vec<SurveyResponse> {
    let rows: [(&str, u8, u8, f64); 9] = [
        ("P1", 5, 2, 30.0),
        ("P2", 5, 2, 45.0),
        ("P3", 5, 2, 33.0),
        ("P4", 4, 2, 70.0),
        ("P5", 5, 2, 42.0),
        ("P6", 5, 2, 31.0),
        ("P7", 3, 2, 48.0),
        ("P8", 4, 3, 30.0),
        ("P9", 4, 2, 90.0),
    ];
    rows.iter()
        .map(|&(id, without, with, minutes)| SurveyResponse {
            annotator_id: id.into(),
            difficulty_without_expl: without,
            difficulty_with_expl: with,
            explanations_helpful: true,
            reduced_cognitive_load: true,
            avg_minutes_per_batch: minutes,
            free_comment: None,
        })
        .collect()
}

/// Ten `(llm, gold)` pairs: items 0..7 match fully, 7 and 8 share only the
/// foundation, 9 differs in foundation.
pub fn ten_item_pairs() -> Vec<(String, MoralityFrame, MoralityFrame)> {
    let matches: [(MoralFoundation, &[Tuple]); 7] = [
        (F::CareHarm, &[("nurses", Actor, Pos), ("patients", Target, Pos)]),
        (F::CareHarm, &[("covid", Actor, Neg)]),
        (F::FairnessCheating, &[("rich countries", Actor, Neg), ("poor countries", Target, Neg)]),
        (F::LoyaltyBetrayal, &[("neighbors", Actor, Pos)]),
        (F::AuthoritySubversion, &[("CDC", Actor, Pos), ("schools", Target, Pos)]),
        (F::LibertyOppression, &[("mandate", Actor, Neg), ("workers", Target, Neg)]),
        (F::None, &[]),
    ];
    let mut out: Vec<(String, MoralityFrame, MoralityFrame)> = matches
        .iter()
        .enumerate()
        .map(|(i, (f, t))| (format!("m{i:02}"), frame(*f, t), frame(*f, t)))
        .collect();
    out.push((
        "m07".into(),
        frame(F::CareHarm, &[("vaccine", Actor, Pos)]),
        frame(F::CareHarm, &[("vaccine", Actor, Pos), ("children", Target, Pos)]),
    ));
    out.push((
        "m08".into(),
        frame(F::SanctityDegradation, &[("vaccine", Actor, Neg)]),
        frame(F::SanctityDegradation, &[("vaccine", Actor, Pos)]),
    ));
    out.push((
        "m09".into(),
        frame(F::AuthoritySubversion, &[("Pentagon", Actor, Pos)]),
        MoralityFrame::none(),
    ));
    out
}

/// Gold `[A, A, B, B]` against predictions `[A, B, B, B]`.
pub fn two_class_f1() -> Vec<(MoralFoundation, MoralFoundation)> {
    let (a, b) = (F::CareHarm, F::LibertyOppression);
    vec![(a, a), (a, b), (b, b), (b, b)]
}

/// Gold `[A, A, A, B, B, C]`, every prediction `A`.
pub fn three_class_f1() -> Vec<(MoralFoundation, MoralFoundation)> {
    let (a, b, c) = (F::CareHarm, F::FairnessCheating, F::None);
    vec![(a, a), (a, a), (a, a), (b, a), (b, a), (c, a)]
}

/// Items with gold frames laid out like the published entity-role table:
/// three foundations, two reasons each, with one dominant stance per reason.
pub fn entity_role_items() -> Vec<(TextItem, MoralityFrame)> {
    struct Group {
        foundation: MoralFoundation,
        reason: &'static str,
        stances: &'static [Stance],
        texts: &'static [&'static str],
        tuples: &'static [Tuple],
    }
    use Stance::{AntiVax as Anti, ProVax as Pro};
    let groups = [
        Group {
            foundation: F::SanctityDegradation,
            reason: "VaccineAgainstReligion",
            stances: &[Anti, Anti, Anti],
            texts: &[
                "The vaccine is made with aborted cells, no Christian should accept it.",
                "As a Christian I refuse a vaccine that defiles the body God gave me.",
                "This vaccine is an insult to every Christian family.",
            ],
            tuples: &[("vaccine", Actor, Neg), ("Christian", Target, Neg)],
        },
        Group {
            foundation: F::SanctityDegradation,
            reason: "VaccineNotAgainstReligion",
            stances: &[Pro, Pro],
            texts: &[
                "My pastor says the vaccine is a blessing and I agree.",
                "Faith and the vaccine go together, I got mine after Sunday service.",
            ],
            tuples: &[("vaccine", Actor, Pos), ("I", Target, Pos)],
        },
        Group {
            foundation: F::FairnessCheating,
            reason: "GovDistrust",
            stances: &[Anti, Anti, Pro],
            texts: &[
                "Fauci lied about the trials and children are the ones paying for it.",
                "Fauci keeps moving the goalposts while children lose school years.",
                "Fauci changed the guidance again, children deserve consistency.",
            ],
            tuples: &[("Fauci", Actor, Neg), ("children", Target, Neg)],
        },
        Group {
            foundation: F::FairnessCheating,
            reason: "CovidReal",
            stances: &[Pro, Pro],
            texts: &[
                "Fox News hosts are vaccinated while they tell viewers covid is a hoax.",
                "Fox News keeps lying to its viewers about a virus that is very real.",
            ],
            tuples: &[("Fox News", Actor, Neg), ("viewers", Target, Neg)],
        },
        Group {
            foundation: F::AuthoritySubversion,
            reason: "GovDistrust",
            stances: &[Anti, Anti],
            texts: &[
                "Biden thinks he can order people to take a shot. He can't.",
                "Biden is abusing his office to force people into compliance.",
            ],
            tuples: &[("Biden", Actor, Neg), ("people", Target, Neg)],
        },
        Group {
            foundation: F::AuthoritySubversion,
            reason: "GovTrust",
            stances: &[Pro, Pro],
            texts: &[
                "The FDA did its job and Americans can trust the approval.",
                "Full approval from the FDA means Americans have a safe option.",
            ],
            tuples: &[("FDA", Actor, Pos), ("Americans", Target, Pos)],
        },
    ];
    let mut out = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for (i, (text, stance)) in group.texts.iter().zip(group.stances).enumerate() {
            let item = TextItem::new(format!("er-{g}-{i}"), *text)
                .with_stance(*stance)
                .with_reasons([group.reason]);
            out.push((item, frame(group.foundation, group.tuples)));
        }
    }
    out
}

/// Gold map of [`entity_role_items`].
pub fn entity_role_gold() -> BTreeMap<String, MoralityFrame> {
    entity_role_items().into_iter().map(|(i, f)| (i.id, f)).collect()
}
