//! Regenerates the shipped fixtures under `fixtures/`.
//!
//! Study A: 500 synthetic food images, curated reference terms, a mock reply
//! script with a planted overlap distribution, and three coders' rubric
//! scores for 100 items. Study B: 51 participants' questionnaires.
//!
//! Output is a pure function of the constants below; rerunning rewrites the
//! same bytes.
//!
//!     cargo run --release -p purrfessor --example build_fixtures

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use base64::Engine;
use chrono::{Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use purrfessor::backends::{MockScript, TurnImage};
use purrfessor::domain::{MediaType, Profile};
use purrfessor::eval::{extract_food_terms, krippendorff_alpha, FoodLexicon, Metric};
use purrfessor::experiment::{
    AnswerValue, Answers, BlockAssigner, ItemKind, ParticipantRecord, Phase, StudyConfig,
};
use purrfessor::jsonl;
use purrfessor::seed::SeedTree;

const SEED: u64 = 20_240_917;
const IMAGES: usize = 500;
const REFERENCE_SIZE: usize = 5;
/// (matched reference terms, image count). Mean recall 335/500 = 0.67 and
/// 100 images fall below 0.6.
const OVERLAP_PLAN: [(usize, usize); 6] = [(0, 10), (1, 20), (2, 70), (3, 145), (4, 195), (5, 60)];
const VALIDATION_ITEMS: usize = 100;
const CODERS: usize = 3;
/// (mean, interval alpha) per rubric criterion, in `Criterion::ALL` order.
const RUBRIC_TARGETS: [(f64, f64); 4] = [(7.87, 0.86), (9.4, 0.96), (9.6, 0.91), (9.0, 0.85)];
const PARTICIPANTS: usize = 51;

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    study_a(&root.join("study_a"));
    study_b(&root.join("study_b"));
    println!("fixtures written to {}", root.display());
}

/// Single-word lexicon entries that extract to exactly themselves.
fn usable_terms(lexicon: &FoodLexicon) -> Vec<String> {
    let entries = lexicon.entries();
    entries
        .iter()
        .filter(|t| !t.contains(' '))
        .filter(|t| !entries.iter().any(|o| o != *t && o.split(' ').any(|w| w == t.as_str())))
        .filter(|t| extract_food_terms(&format!("some {t} here"), lexicon) == BTreeSet::from([(*t).clone()]))
        .cloned()
        .collect()
}

fn fake_png(index: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
    bytes.extend_from_slice(&(index as u32).to_be_bytes());
    bytes.extend((0..96).map(|_| rng.random::<u8>()));
    bytes
}

fn sentence(terms: &[String]) -> String {
    match terms {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn study_a(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let lexicon = FoodLexicon::shipped();
    let terms = usable_terms(&lexicon);
    assert!(terms.len() >= 20, "lexicon too small for fixtures: {}", terms.len());
    let mut rng = SeedTree::new(SEED).child("study_a").rng();

    let mut plan: Vec<usize> = OVERLAP_PLAN.iter().flat_map(|&(k, n)| std::iter::repeat_n(k, n)).collect();
    assert_eq!(plan.len(), IMAGES);
    plan.shuffle(&mut rng);

    let b64 = base64::engine::general_purpose::STANDARD;
    let mut manifest = String::new();
    let mut references = serde_json::Map::new();
    let mut script = String::new();
    let mut check = MockScript::new();
    for (i, &matched) in plan.iter().enumerate() {
        let key = format!("img_{i:03}.png");
        let bytes = fake_png(i, &mut rng);
        let image = TurnImage::new(bytes.clone(), MediaType::Png);

        let picked: Vec<String> = terms.choose_multiple(&mut rng, REFERENCE_SIZE + 2).cloned().collect();
        let (reference, distractors) = picked.split_at(REFERENCE_SIZE);
        let mut mentioned: Vec<String> = reference[..matched].to_vec();
        mentioned.extend(distractors.iter().take(if matched == REFERENCE_SIZE { 1 } else { 2 }).cloned());
        mentioned.shuffle(&mut rng);
        let reply = format!(
            "This plate appears to hold {}. A balanced way to enjoy it is to keep portions moderate and add \
             a side of leafy greens if you can.",
            sentence(&mentioned)
        );
        let extracted = extract_food_terms(&reply, &lexicon);
        let expected: BTreeSet<String> = mentioned.iter().cloned().collect();
        assert_eq!(extracted, expected, "reply for {key} does not extract cleanly: {reply}");

        writeln!(manifest, "{}", json!({"key": key, "media_type": "image/png", "data": b64.encode(&bytes)})).unwrap();
        references.insert(key, json!(reference));
        writeln!(script, "{}", json!({"image_sha256": image.sha256(), "reply": reply})).unwrap();
        check.reply_for_image(image.sha256(), reply);
    }
    assert_eq!(check.len(), IMAGES, "image hashes collide");

    std::fs::write(dir.join("images.jsonl"), manifest).unwrap();
    std::fs::write(dir.join("references.json"), serde_json::to_string_pretty(&references).unwrap() + "\n").unwrap();
    std::fs::write(dir.join("mock_script.jsonl"), script).unwrap();

    let mut scores = vec![[0u8; 4]; VALIDATION_ITEMS * CODERS];
    for (c, &(mean, alpha)) in RUBRIC_TARGETS.iter().enumerate() {
        let mut crng = SeedTree::new(SEED).child("rubric").child(&c.to_string()).rng();
        let cells = fit_ratings(mean, alpha, &mut crng);
        for (slot, v) in scores.iter_mut().zip(cells) {
            slot[c] = v;
        }
    }
    let mut validation = String::new();
    for item in 0..VALIDATION_ITEMS {
        for coder in 0..CODERS {
            let s = scores[item * CODERS + coder];
            let line = json!({
                "item_id": format!("val_{item:03}"),
                "coder_id": format!("coder_{}", coder + 1),
                "scores": {"correctness": s[0], "relevance": s[1], "clarity": s[2], "edge_case": s[3]},
            });
            writeln!(validation, "{line}").unwrap();
        }
    }
    std::fs::write(dir.join("validation.jsonl"), validation).unwrap();

    std::fs::write(
        dir.join("job.toml"),
        "images = \"images.jsonl\"\nreferences = \"references.json\"\nvalidation = \"validation.jsonl\"\n\
         threshold = 0.6\nmode = \"recall\"\nmetric = \"interval\"\nconcurrency = 8\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("config.toml"),
        format!("seed = {SEED}\n\n[mock]\nscript = \"mock_script.jsonl\"\n"),
    )
    .unwrap();
}

fn alpha_of(cells: &[u8]) -> Option<f64> {
    let units: Vec<Vec<Option<f64>>> =
        cells.chunks(CODERS).map(|u| u.iter().map(|&v| Some(f64::from(v))).collect()).collect();
    krippendorff_alpha(&units, Metric::Interval).ok().filter(|a| !a.degenerate).map(|a| a.alpha)
}

/// Integer ratings in 1..=10 for 100 items by 3 coders whose grand mean is
/// exactly `mean` (to two decimals) and whose interval alpha is within 0.002
/// of `alpha`. Seeded hill climbing from a latent-score start.
fn fit_ratings(mean: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = VALIDATION_ITEMS * CODERS;
    let target_sum = (mean * n as f64).round() as i64;
    let mut cells = Vec::with_capacity(n);
    for _ in 0..VALIDATION_ITEMS {
        let spread: f64 = rng.random_range(-1.0..1.0);
        let latent = mean + 2.5 * spread * spread.abs();
        for _ in 0..CODERS {
            let noise: f64 = rng.random_range(-0.8..0.8);
            cells.push((latent + noise).round().clamp(1.0, 10.0) as u8);
        }
    }
    let loss = |cells: &[u8]| -> f64 {
        let sum: i64 = cells.iter().map(|&v| i64::from(v)).sum();
        let gap = (sum - target_sum).abs() as f64;
        match alpha_of(cells) {
            Some(a) => gap + (a - alpha).abs(),
            None => gap + 10.0,
        }
    };
    let mut current = loss(&cells);
    for _ in 0..400_000 {
        let sum: i64 = cells.iter().map(|&v| i64::from(v)).sum();
        if sum == target_sum && current < 0.002 {
            return cells;
        }
        let i = rng.random_range(0..n);
        let up = rng.random_bool(0.5);
        let mut next = cells.clone();
        next[i] = if up { (next[i] + 1).min(10) } else { next[i].saturating_sub(1).max(1) };
        // Sum-preserving partner move once the mean is on target.
        if sum == target_sum {
            let j = rng.random_range(0..n);
            next[j] = if up { next[j].saturating_sub(1).max(1) } else { (next[j] + 1).min(10) };
        }
        let l = loss(&next);
        if l <= current {
            cells = next;
            current = l;
        }
    }
    panic!("no rating matrix found for mean {mean} alpha {alpha}");
}

fn study_b(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let study = StudyConfig::shipped();
    let mut rng = SeedTree::new(SEED).child("study_b").rng();
    let mut assigner = BlockAssigner::new(SEED);
    let start = Utc.with_ymd_and_hms(2024, 3, 4, 15, 0, 0).unwrap();
    let mut records = Vec::new();
    for p in 0..PARTICIPANTS {
        let condition = assigner.next_condition();
        let tendency: f64 = rng.random_range(-1.0..1.0);
        // Each scale gets its own latent level so items within a scale agree.
        let latent: Vec<f64> =
            study.scales.iter().map(|_| 0.5 * tendency + 0.5 * rng.random_range(-1.0..1.0)).collect();
        let answers = |phase: Phase, rng: &mut ChaCha8Rng| -> Answers {
            let mut out = Answers::new();
            for item in &study.schema(phase).items {
                let value = match &item.kind {
                    ItemKind::Likert { min, max } => {
                        let mid = (*min + *max) as f64 / 2.0;
                        let span = (*max - *min) as f64 / 2.0;
                        let noise: f64 = rng.random_range(-1.0..1.0);
                        let scale = study.scales.iter().position(|s| s.item_ids.contains(&item.id));
                        let level = scale.map_or(tendency, |i| latent[i]);
                        let x = (mid + span * 0.7 * level + span * 0.35 * noise).round().clamp(*min as f64, *max as f64);
                        let reversed = scale.is_some_and(|i| study.scales[i].reverse_coded.contains(&item.id));
                        AnswerValue::Number(if reversed { (*min + *max) as f64 - x } else { x })
                    }
                    ItemKind::Coded { options } => AnswerValue::Text(options.choose(rng).unwrap().label.clone()),
                    ItemKind::Text { .. } => continue,
                };
                out.insert(item.id.clone(), value);
            }
            out
        };
        let pre = answers(Phase::Pre, &mut rng);
        let mut post = answers(Phase::Post, &mut rng);
        // A handful of participants misremember the persona.
        let recalled = if rng.random_bool(0.1) {
            match condition.profile() {
                Profile::Pet => Profile::Bot,
                Profile::Bot => Profile::Pet,
            }
        } else {
            condition.profile()
        };
        let (name, picture) = match recalled {
            Profile::Pet => ("Purrfessor", "a cartoon cat wearing glasses"),
            Profile::Bot => ("NutriBot", "a simple robot icon"),
        };
        post.insert("recall_name".into(), AnswerValue::Text(name.into()));
        post.insert("recall_profile".into(), AnswerValue::Text(picture.into()));
        study.schema(Phase::Pre).validate(&pre).unwrap();
        study.schema(Phase::Post).validate(&post).unwrap();
        records.push(ParticipantRecord {
            participant_id: format!("p{:03}", p + 1).into(),
            condition,
            consent_at: start + Duration::minutes(37 * p as i64),
            pre,
            post,
        });
    }
    jsonl::write(&dir.join("participants.jsonl"), &records).unwrap();
}
