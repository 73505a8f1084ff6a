//! Seeded synthetic corpora. Posts are filled from templates so every entity
//! of the true frame occurs verbatim in the text, and stances and reasons are
//! drawn per template so that care/harm leans pro-vax and liberty/oppression
//! leans anti-vax.

use std::collections::BTreeMap;

use moralframe_core::analysis::{ReasonDef, ReasonTaxonomy};
use moralframe_core::prompt::{render_prompt, PromptTemplate};
use moralframe_core::{EntityRole, MoralFoundation, MoralityFrame, Polarity, Role, Stance, TextItem};
use moralframe_gateway::{fingerprint, FixtureEntry};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use MoralFoundation as F;
use Polarity::{Negative as Neg, Positive as Pos};
use Stance::{AntiVax as Anti, Neutral, ProVax as Pro};

struct Template {
    weight: u32,
    foundation: MoralFoundation,
    stance: Stance,
    reasons: &'static [&'static str],
    /// `{a}` and `{t}` are replaced by the actor and target.
    text: &'static str,
    actors: &'static [&'static str],
    actor_polarity: Polarity,
    targets: &'static [&'static str],
    target_polarity: Polarity,
    why: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template {
        weight: 9,
        foundation: F::CareHarm,
        stance: Pro,
        reasons: &["CovidReal", "VaccineWorks"],
        text: "{a} are working double shifts so {t} can go home. Get the shot.",
        actors: &["Nurses", "Doctors", "ICU staff"],
        actor_polarity: Pos,
        targets: &["covid patients", "our grandparents", "sick kids"],
        target_polarity: Pos,
        why: "The post asks readers to protect people who are being cared for.",
    },
    Template {
        weight: 8,
        foundation: F::CareHarm,
        stance: Pro,
        reasons: &["CovidReal"],
        text: "{a} put {t} in the hospital again this week. The vaccine works, please get it.",
        actors: &["The virus", "Covid", "The delta variant"],
        actor_polarity: Neg,
        targets: &["my uncle", "two of my coworkers", "our neighbor"],
        target_polarity: Neg,
        why: "The post describes people being harmed by the disease.",
    },
    Template {
        weight: 6,
        foundation: F::CareHarm,
        stance: Pro,
        reasons: &["VaccineSafe", "VaccineWorks"],
        text: "{a} protected {t} from the worst of it. Safe and effective.",
        actors: &["The vaccine", "My booster"],
        actor_polarity: Pos,
        targets: &["my whole family", "my elderly parents"],
        target_polarity: Pos,
        why: "The post credits the vaccine with keeping loved ones from harm.",
    },
    Template {
        weight: 3,
        foundation: F::CareHarm,
        stance: Anti,
        reasons: &["VaccineDangerous"],
        text: "{a} sent {t} to the ER with heart inflammation.",
        actors: &["The second dose", "The jab"],
        actor_polarity: Neg,
        targets: &["my cousin", "a healthy teenager"],
        target_polarity: Neg,
        why: "The post blames the vaccine for physical harm.",
    },
    Template {
        weight: 3,
        foundation: F::CareHarm,
        stance: Neutral,
        reasons: &["vaccine-rollout"],
        text: "{a} are setting up pop-up clinics so {t} can get checked.",
        actors: &["Volunteers", "Pharmacists"],
        actor_polarity: Pos,
        targets: &["rural families", "seniors"],
        target_polarity: Pos,
        why: "The post describes people looking after others' health.",
    },
    Template {
        weight: 9,
        foundation: F::LibertyOppression,
        stance: Anti,
        reasons: &["VaccineOppression"],
        text: "{a} cannot force {t} to take an experimental shot. This is tyranny.",
        actors: &["The governor", "Biden", "The school board"],
        actor_polarity: Neg,
        targets: &["free citizens", "our children", "healthy adults"],
        target_polarity: Neg,
        why: "The post frames a vaccine requirement as domination that removes freedom.",
    },
    Template {
        weight: 8,
        foundation: F::LibertyOppression,
        stance: Anti,
        reasons: &["VaccineOppression", "GovDistrust"],
        text: "{t} are losing their jobs because {a} demands a jab. Not in a free country.",
        actors: &["the state", "my employer", "the hospital board"],
        actor_polarity: Neg,
        targets: &["Firefighters", "Teachers", "Truck drivers"],
        target_polarity: Neg,
        why: "The post objects to coercion and lost freedom of choice.",
    },
    Template {
        weight: 2,
        foundation: F::LibertyOppression,
        stance: Pro,
        reasons: &["VaccineNotOppression"],
        text: "{a} asking for proof of vaccination is not tyranny, it keeps {t} safe.",
        actors: &["Restaurants", "The university"],
        actor_polarity: Pos,
        targets: &["workers", "students"],
        target_polarity: Pos,
        why: "The post argues a requirement does not take away anyone's freedom.",
    },
    Template {
        weight: 4,
        foundation: F::FairnessCheating,
        stance: Pro,
        reasons: &["vaccine-equity"],
        text: "{a} are hoarding doses while {t} wait for a first shot.",
        actors: &["Rich countries", "Wealthy nations"],
        actor_polarity: Neg,
        targets: &["health workers in Africa", "poorer countries"],
        target_polarity: Neg,
        why: "The post calls the distribution of doses unjust.",
    },
    Template {
        weight: 3,
        foundation: F::FairnessCheating,
        stance: Pro,
        reasons: &["CovidReal"],
        text: "{a} got vaccinated in private and then told {t} the virus was a hoax.",
        actors: &["Fox News hosts", "Those pundits"],
        actor_polarity: Neg,
        targets: &["their viewers", "their listeners"],
        target_polarity: Neg,
        why: "The post points out a double standard.",
    },
    Template {
        weight: 3,
        foundation: F::FairnessCheating,
        stance: Anti,
        reasons: &["GovDistrust"],
        text: "{a} exempted themselves from the rules they wrote for {t}.",
        actors: &["Congress", "Politicians"],
        actor_polarity: Neg,
        targets: &["ordinary workers", "small businesses"],
        target_polarity: Neg,
        why: "The post complains that rule makers do not follow their own rules.",
    },
    Template {
        weight: 3,
        foundation: F::LoyaltyBetrayal,
        stance: Pro,
        reasons: &["GovTrust"],
        text: "{a} lined up together so {t} would be protected. That is what community means.",
        actors: &["Our whole town", "The team"],
        actor_polarity: Pos,
        targets: &["the most vulnerable", "our elders"],
        target_polarity: Pos,
        why: "The post celebrates the group acting together for its members.",
    },
    Template {
        weight: 2,
        foundation: F::LoyaltyBetrayal,
        stance: Anti,
        reasons: &["GovDistrust"],
        text: "{a} turned their backs on {t} the moment the mandates came.",
        actors: &["The union", "Our senator"],
        actor_polarity: Neg,
        targets: &["its own members", "the workers who voted for him"],
        target_polarity: Neg,
        why: "The post accuses a leader or group of betraying its own people.",
    },
    Template {
        weight: 4,
        foundation: F::AuthoritySubversion,
        stance: Pro,
        reasons: &["GovTrust"],
        text: "{a} approved the vaccine after a full review, so {t} can rely on it.",
        actors: &["The FDA", "The CDC"],
        actor_polarity: Pos,
        targets: &["Americans", "parents"],
        target_polarity: Pos,
        why: "The post defers to the judgment of public health institutions.",
    },
    Template {
        weight: 5,
        foundation: F::AuthoritySubversion,
        stance: Anti,
        reasons: &["GovDistrust", "VaccineDangerous"],
        text: "{a} ordered everyone to comply without showing the data to {t}.",
        actors: &["Fauci", "The health department", "The White House"],
        actor_polarity: Neg,
        targets: &["the public", "the parents"],
        target_polarity: Neg,
        why: "The post rejects the legitimacy of the officials issuing orders.",
    },
    Template {
        weight: 4,
        foundation: F::SanctityDegradation,
        stance: Anti,
        reasons: &["VaccineAgainstReligion"],
        text: "{a} was developed with fetal cell lines and that is an offense to {t}.",
        actors: &["This vaccine", "The shot"],
        actor_polarity: Neg,
        targets: &["every Christian", "people of faith"],
        target_polarity: Neg,
        why: "The post treats the vaccine as a violation of something sacred.",
    },
    Template {
        weight: 2,
        foundation: F::SanctityDegradation,
        stance: Pro,
        reasons: &["VaccineNotAgainstReligion"],
        text: "{a} is a gift and my faith tells me to protect {t}.",
        actors: &["The vaccine", "This medicine"],
        actor_polarity: Pos,
        targets: &["my neighbor", "the weak"],
        target_polarity: Pos,
        why: "The post sees vaccination as consistent with religious duty.",
    },
    Template {
        weight: 2,
        foundation: F::SanctityDegradation,
        stance: Anti,
        reasons: &["VaccineDangerous"],
        text: "{a} puts poison into {t}.",
        actors: &["The mRNA shot", "The gene jab"],
        actor_polarity: Neg,
        targets: &["healthy bodies", "our kids"],
        target_polarity: Neg,
        why: "The post describes the vaccine as contaminating the body.",
    },
];

const NONE_TEXTS: &[(&str, Stance, &[&str])] = &[
    ("The county opens four new vaccination sites on Monday.", Neutral, &["vaccine-rollout"]),
    ("Booster appointments are now available at most pharmacies.", Neutral, &["vaccine-rollout"]),
    ("Just got my second dose, arm is a little sore.", Pro, &[]),
    ("Not getting the vaccine yet, waiting to see what happens.", Anti, &[]),
    ("Clinic hours change next week, check the website before you go.", Neutral, &[]),
    ("The state reports 1,200 doses given yesterday.", Neutral, &["vaccine-rollout"]),
];

const TAILS: &[&str] = &["", " #covid", " #vaccine", " #COVID19", " Thoughts?", " Share this.", " #GetVaccinated", " #NoMandates"];

/// A post with the frame it really carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub item: TextItem,
    pub truth: MoralityFrame,
}

fn role(entity: &str, role: Role, polarity: Polarity) -> EntityRole {
    EntityRole::new(entity, role, polarity)
}

fn pick_template(rng: &mut ChaCha8Rng, none_weight: u32) -> Option<&'static Template> {
    let total: u32 = TEMPLATES.iter().map(|t| t.weight).sum::<u32>() + none_weight;
    let mut roll = rng.random_range(0..total);
    for t in TEMPLATES {
        if roll < t.weight {
            return Some(t);
        }
        roll -= t.weight;
    }
    None
}

/// `n` posts with ids `{prefix}-001`...
pub fn corpus(n: usize, seed: u64, prefix: &str) -> Vec<SynthItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n)
        .map(|i| {
            let id = format!("{prefix}-{i:03}");
            let tail = *TAILS.choose(&mut rng).expect("non-empty");
            match pick_template(&mut rng, 20) {
                Some(t) => {
                    let actor = *t.actors.choose(&mut rng).expect("non-empty");
                    let target = *t.targets.choose(&mut rng).expect("non-empty");
                    let text = format!("{}{tail}", t.text.replace("{a}", actor).replace("{t}", target));
                    let truth = MoralityFrame::new(
                        t.foundation,
                        vec![role(actor, Role::Actor, t.actor_polarity), role(target, Role::Target, t.target_polarity)],
                    )
                    .with_explanations(
                        t.why,
                        format!(
                            "{actor} is the {} actor and {target} the {} target.",
                            t.actor_polarity, t.target_polarity
                        ),
                    );
                    let item = TextItem::new(id, text).with_stance(t.stance).with_reasons(t.reasons.iter().copied());
                    SynthItem { item, truth }
                }
                None => {
                    let (text, stance, reasons) = *NONE_TEXTS.choose(&mut rng).expect("non-empty");
                    let truth = MoralityFrame::none().with_explanations(
                        "The post reports or states something without a moral judgment.",
                        "No moral roles.",
                    );
                    let item = TextItem::new(id, format!("{text}{tail}"))
                        .with_stance(stance)
                        .with_reasons(reasons.iter().copied());
                    SynthItem { item, truth }
                }
            }
        })
        .collect()
}

/// A plausible wrong foundation for `f`.
pub fn confusable(f: MoralFoundation) -> MoralFoundation {
    match f {
        F::CareHarm => F::FairnessCheating,
        F::FairnessCheating => F::CareHarm,
        F::LoyaltyBetrayal => F::AuthoritySubversion,
        F::AuthoritySubversion => F::LibertyOppression,
        F::SanctityDegradation => F::CareHarm,
        F::LibertyOppression => F::AuthoritySubversion,
        F::None => F::AuthoritySubversion,
    }
}

/// The frame a model proposes: the truth for most posts, a wrong foundation
/// with `p_wrong_foundation`, and a wrong role set with `p_wrong_roles`.
pub fn model_frames(items: &[SynthItem], seed: u64, p_wrong_foundation: f64, p_wrong_roles: f64) -> Vec<MoralityFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    items
        .iter()
        .map(|s| {
            let roll: f64 = rng.random();
            let mut frame = s.truth.clone();
            if roll < p_wrong_foundation {
                frame.foundation = confusable(s.truth.foundation);
                frame.foundation_explanation = format!("The post leans on {}.", frame.foundation.display_label());
            } else if roll < p_wrong_foundation + p_wrong_roles && !frame.roles.is_empty() {
                let last = frame.roles.len() - 1;
                frame.roles[last].polarity = match frame.roles[last].polarity {
                    Pos => Neg,
                    Neg => Pos,
                };
            }
            frame
        })
        .collect()
}

/// Completion text in one of several surface styles a chat model produces.
pub fn completion_text(frame: &MoralityFrame, style: usize) -> String {
    let roles = if frame.roles.is_empty() {
        "none".to_string()
    } else {
        frame
            .roles
            .iter()
            .map(|r| format!("({}, {}, {})", r.entity, r.role, r.polarity))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let label = frame.foundation.display_label();
    match style % 3 {
        0 => format!(
            "{label}\nExplanation: {}\nActor-Target-Polarity: {roles}\nExplanation: {}\n",
            frame.foundation_explanation, frame.role_explanation
        ),
        1 => format!(
            "Moral Foundation: {label}\nExplanation: {}\nActor-Target-Polarity: {roles}\nExplanation: {}",
            frame.foundation_explanation, frame.role_explanation
        ),
        _ => format!(
            "**Moral Foundation:** {label}\n**Explanation:** {}\n**Actor-Target-Polarity:** {roles}\n**Explanation:** {}\n",
            frame.foundation_explanation, frame.role_explanation
        ),
    }
}

/// Recorded completions for labeling `items` with `frames`. Items listed in
/// `resampled` first answer with an out-of-set label; items in `failing`
/// never produce a usable answer.
pub fn fixture_completions(
    items: &[TextItem],
    frames: &[MoralityFrame],
    template: &PromptTemplate,
    model_name: &str,
    resampled: &[&str],
    failing: &[&str],
) -> Vec<FixtureEntry> {
    let mut out = Vec::new();
    for (i, (item, frame)) in items.iter().zip(frames).enumerate() {
        let prompt = render_prompt(template, item).expect("synthetic items render");
        let fp = fingerprint(&prompt, model_name, 0.0);
        let entry = |raw_text: String| FixtureEntry {
            fingerprint: fp.clone(),
            raw_text,
        };
        if failing.contains(&item.id.as_str()) {
            out.push(entry("I cannot determine a moral foundation for this post.".into()));
            continue;
        }
        if resampled.contains(&item.id.as_str()) {
            out.push(entry("Moral Foundation: optimism\nExplanation: The post is hopeful.\n".into()));
        }
        out.push(entry(completion_text(frame, i)));
    }
    out
}

/// Reason names used by the synthetic corpus, with display labels.
pub fn taxonomy() -> ReasonTaxonomy {
    let defs: [(&str, &str, &[&str]); 13] = [
        ("CovidReal", "covid is real", &["covid-real"]),
        ("VaccineWorks", "vaccine works", &[]),
        ("VaccineSafe", "vaccine is safe", &[]),
        ("VaccineDangerous", "vaccine is dangerous", &[]),
        ("VaccineDoesNotWork", "vaccine doesn't work", &[]),
        ("GovTrust", "trust in government", &["gov-trust"]),
        ("GovDistrust", "distrust in government", &["gov-distrust"]),
        ("VaccineOppression", "vaccine mandate is oppression", &["MandateOppression"]),
        ("VaccineNotOppression", "vaccine mandate is not oppression", &[]),
        ("VaccineAgainstReligion", "vaccine is against religion", &[]),
        ("VaccineNotAgainstReligion", "vaccine is not against religion", &[]),
        ("vaccine-equity", "vaccine equity", &[]),
        ("vaccine-rollout", "vaccine rollout", &[]),
    ];
    ReasonTaxonomy {
        reasons: defs
            .iter()
            .map(|(name, label, aliases)| ReasonDef {
                name: name.to_string(),
                label: Some(label.to_string()),
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
                members: Vec::new(),
            })
            .collect(),
    }
}

/// Truth frames keyed by item id.
pub fn truth_map(items: &[SynthItem]) -> BTreeMap<String, MoralityFrame> {
    items.iter().map(|s| (s.item.id.clone(), s.truth.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_seed_determined() {
        assert_eq!(corpus(40, 7, "x"), corpus(40, 7, "x"));
        assert_ne!(corpus(40, 7, "x"), corpus(40, 8, "x"));
    }

    #[test]
    fn every_entity_occurs_in_its_post() {
        for s in corpus(300, 1, "x") {
            s.item.check().unwrap();
            s.truth.check_structure().unwrap();
            for r in &s.truth.roles {
                assert!(s.item.text.contains(&r.entity), "{} not in {}", r.entity, s.item.text);
            }
        }
    }

    #[test]
    fn taxonomy_covers_every_tag() {
        let tax = taxonomy();
        for s in corpus(300, 2, "x") {
            for tag in s.item.reasons.iter().flatten() {
                assert!(tax.lookup(tag).is_some(), "{tag}");
            }
        }
        let text = tax.to_toml_string();
        assert_eq!(ReasonTaxonomy::from_toml_str(&text).unwrap(), tax);
    }
}
