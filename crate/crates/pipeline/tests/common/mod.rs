//! Synthetic dialogs with a known causal structure: an utterance reporting
//! an event is followed, one to three turns later, by a reaction expressing
//! the emotion the event triggers. Gold pairs link the event (span = the
//! event clause) and the reaction itself (whole utterance) to the reaction.
#![allow(dead_code)]

use ecpe_core::corpus::{CharSpan, Conversation, EmotionCausePair, EmotionLabel, Utterance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use EmotionLabel::*;

struct Theme {
    emotion: EmotionLabel,
    events: &'static [&'static str],
    reactions: &'static [&'static str],
}

const THEMES: &[Theme] = &[
    Theme {
        emotion: Joy,
        events: &["my sister got the scholarship", "we won the lottery draw", "the band agreed to play at our wedding"],
        reactions: &["That is wonderful, I am so happy!", "Yay, this is the best day ever!", "I love it, how great!"],
    },
    Theme {
        emotion: Anger,
        events: &["the landlord kept our deposit", "someone scratched my new car", "he read my diary again"],
        reactions: &["I am furious about this!", "How dare they do that to me!", "This makes me so mad!"],
    },
    Theme {
        emotion: Sadness,
        events: &["my old dog passed away", "the shop where we met closed", "grandpa is in the hospital"],
        reactions: &["I feel so sad and lonely.", "This breaks my heart.", "I just want to cry."],
    },
    Theme {
        emotion: Fear,
        events: &["there is a stranger outside the window", "the brakes stopped working", "the test results came back strange"],
        reactions: &["I am really scared right now.", "Oh no, I am terrified!", "Please, I am so frightened."],
    },
    Theme {
        emotion: Surprise,
        events: &["Ross is moving to Paris", "Monica is pregnant", "the cafe is giving away free coffee"],
        reactions: &["Wait, what? Really?", "No way, seriously?", "Whoa, I did not see that coming!"],
    },
    Theme {
        emotion: Disgust,
        events: &["the fridge is full of mold", "he licked the subway pole", "the soup had a hair in it"],
        reactions: &["Ew, that is disgusting.", "Gross, I feel sick.", "Yuck, that is revolting."],
    },
];

const FILLERS: &[&str] = &[
    "Can you pass the remote?",
    "I will be at the coffee house later.",
    "Did anyone feed the duck?",
    "The meeting starts at nine.",
    "Let me get my jacket.",
    "We need more milk.",
    "Okay, sounds good.",
    "Where are my keys?",
    "I am going to take a shower.",
    "Is that the new couch?",
];

const INTROS: &[&str] = &["Guess what, ", "I just heard that ", "Did you know "];

const SPEAKERS: &[&str] = &["Rachel", "Ross", "Monica", "Chandler", "Joey", "Phoebe"];

fn chars(s: &str) -> usize {
    s.chars().count()
}

enum Slot {
    Filler,
    Event { theme: usize, pick: usize, intro: usize },
    Reaction { theme: usize, pick: usize, event: usize },
}

/// One dialog of 5 to 9 utterances with one or two event/reaction episodes.
pub fn dialog(id: &str, rng: &mut ChaCha8Rng) -> Conversation {
    let len = rng.gen_range(5..=9);
    let mut slots: Vec<Slot> = (0..len).map(|_| Slot::Filler).collect();
    let episodes = if len >= 8 { rng.gen_range(1..=2) } else { 1 };
    let mut cursor = 0usize;
    for _ in 0..episodes {
        let gap = rng.gen_range(1..=3usize);
        if cursor + gap >= len {
            break;
        }
        let event = rng.gen_range(cursor..len - gap);
        let reaction = event + gap;
        let theme = rng.gen_range(0..THEMES.len());
        slots[event] = Slot::Event {
            theme,
            pick: rng.gen_range(0..THEMES[theme].events.len()),
            intro: rng.gen_range(0..INTROS.len()),
        };
        slots[reaction] = Slot::Reaction {
            theme,
            pick: rng.gen_range(0..THEMES[theme].reactions.len()),
            event,
        };
        cursor = reaction + 1;
    }

    let cast_size = rng.gen_range(2..=4);
    let cast: Vec<&str> = SPEAKERS.choose_multiple(rng, cast_size).copied().collect();
    let mut utterances = Vec::with_capacity(len);
    let mut pairs = Vec::new();
    for (p, slot) in slots.iter().enumerate() {
        let index = p + 1;
        let (text, emotion) = match *slot {
            Slot::Filler => (FILLERS[rng.gen_range(0..FILLERS.len())].to_string(), Neutral),
            Slot::Event { theme, pick, intro } => (format!("{}{}.", INTROS[intro], THEMES[theme].events[pick]), Neutral),
            Slot::Reaction { theme, pick, event } => {
                let text = THEMES[theme].reactions[pick].to_string();
                let emotion = THEMES[theme].emotion;
                let Slot::Event { pick: ev, intro, .. } = slots[event] else { unreachable!() };
                let start = chars(INTROS[intro]);
                pairs.push(EmotionCausePair {
                    cause_index: event + 1,
                    target_index: index,
                    emotion,
                    cause_span: CharSpan::new(start, start + chars(THEMES[theme].events[ev])),
                });
                pairs.push(EmotionCausePair {
                    cause_index: index,
                    target_index: index,
                    emotion,
                    cause_span: CharSpan::new(0, chars(&text)),
                });
                (text, emotion)
            }
        };
        utterances.push(Utterance {
            index,
            speaker: cast[rng.gen_range(0..cast.len())].to_string(),
            text,
            gold_emotion: Some(emotion),
        });
    }
    Conversation {
        id: id.to_string(),
        utterances,
        gold_pairs: pairs,
    }
}

pub fn corpus(n: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n).map(|i| dialog(&i.to_string(), &mut rng)).collect()
}

/// Copy of `corpus` whose gold cause spans cover the whole cause utterance.
pub fn whole_utterance_spans(corpus: &[Conversation]) -> Vec<Conversation> {
    let mut out = corpus.to_vec();
    for conv in &mut out {
        let lens: Vec<usize> = conv.utterances.iter().map(|u| chars(&u.text)).collect();
        for p in &mut conv.gold_pairs {
            p.cause_span = CharSpan::new(0, lens[p.cause_index - 1]);
        }
    }
    out
}

/// The task-json text of `corpus`.
pub fn task_json(corpus: &[Conversation]) -> String {
    ecpe_core::corpus::to_task_json_string(corpus).expect("synthetic corpus serializes")
}

#[test]
fn synthetic_corpus_round_trips_and_is_valid() {
    let c = corpus(50, 1);
    let back = ecpe_core::corpus::from_task_json_str(&task_json(&c)).unwrap();
    assert_eq!(back, c);
    assert!(ecpe_core::corpus::validate_corpus(&c).is_empty());
    let emotions: std::collections::BTreeSet<_> = c.iter().flat_map(|d| d.gold_pairs.iter().map(|p| p.emotion)).collect();
    assert_eq!(emotions.len(), 6);
}
