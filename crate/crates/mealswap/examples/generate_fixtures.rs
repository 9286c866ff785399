//! Regenerates the bundled mini-corpus under `fixtures/mini/`: a hand-built
//! taxonomy, a seeded meal log with a realistic share of unmatched entries,
//! rank-correlated synthetic judgements covering every ranked pair, and the
//! `run.json` config tying them together. Deterministic: rerunning produces
//! byte-identical fixtures.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mealswap::corpus::{preprocess_corpus, write_meals, Dedup, MealRecord};
use mealswap::eval::{write_judgements, Judgement};
use mealswap::pipeline::{artifacts, run_pipeline, RunConfig, Stage};
use mealswap::ranker::read_rankings;
use mealswap::taxonomy::Taxonomy;

type Row = (&'static str, &'static str, &'static str, &'static [&'static str]);

#[rustfmt::skip]
const TAXONOMY: &[Row] = &[
    ("meats", "poultry", "chicken", &["chicken", "chicken breast", "chicken thigh", "chicken strips"]),
    ("meats", "poultry", "turkey", &["turkey", "turkey breast", "turkey slices"]),
    ("meats", "beef", "beef", &["beef", "ground beef", "beef mince"]),
    ("meats", "beef", "steak", &["steak", "sirloin steak", "ribeye steak"]),
    ("meats", "pork", "pork", &["pork", "pork chop", "pulled pork"]),
    ("meats", "pork", "bacon", &["bacon", "bacon rashers", "streaky bacon"]),
    ("meats", "pork", "ham", &["ham", "honey ham", "ham slices"]),
    ("meats", "fish", "tuna", &["tuna", "canned tuna", "tuna steak"]),
    ("meats", "fish", "salmon", &["salmon", "smoked salmon", "salmon fillet"]),
    ("meats", "fish", "cod", &["cod", "battered cod", "cod fillet"]),
    ("beans and legumes", "soy", "tofu", &["tofu", "firm tofu", "silken tofu"]),
    ("beans and legumes", "soy", "tempeh", &["tempeh"]),
    ("beans and legumes", "soy", "edamame", &["edamame", "edamame beans"]),
    ("beans and legumes", "pulses", "lentils", &["lentils", "lentil", "red lentils"]),
    ("beans and legumes", "pulses", "chickpeas", &["chickpeas", "chickpea", "garbanzo beans"]),
    ("beans and legumes", "pulses", "black beans", &["black beans"]),
    ("beans and legumes", "pulses", "kidney beans", &["kidney beans"]),
    ("beans and legumes", "pulses", "hummus", &["hummus", "houmous"]),
    ("nuts and seeds", "nuts", "almonds", &["almonds", "almond", "raw almonds"]),
    ("nuts and seeds", "nuts", "peanuts", &["peanuts", "peanut", "salted peanuts"]),
    ("nuts and seeds", "nuts", "cashews", &["cashews", "cashew nuts"]),
    ("nuts and seeds", "nuts", "walnuts", &["walnuts", "walnut halves"]),
    ("nuts and seeds", "nuts", "pistachios", &["pistachios", "pistachio"]),
    ("nuts and seeds", "seeds", "chia seeds", &["chia seeds", "chia"]),
    ("nuts and seeds", "seeds", "sunflower seeds", &["sunflower seeds"]),
    ("nuts and seeds", "seeds", "pumpkin seeds", &["pumpkin seeds", "pepitas"]),
    ("staple foods", "wheat", "bread", &["bread", "whole wheat bread", "toast", "sourdough"]),
    ("staple foods", "wheat", "pasta", &["pasta", "spaghetti", "penne"]),
    ("staple foods", "wheat", "wrap", &["wrap", "tortilla wrap"]),
    ("staple foods", "wheat", "couscous", &["couscous"]),
    ("staple foods", "rice", "rice", &["rice", "white rice", "brown rice", "jasmine rice"]),
    ("staple foods", "oats", "oatmeal", &["oatmeal", "oats", "porridge", "rolled oats"]),
    ("staple foods", "potato", "potato", &["potato", "potatoes", "mashed potato", "baked potato"]),
    ("staple foods", "potato", "fries", &["fries", "french fries", "chips"]),
    ("vegetables", "leafy", "spinach", &["spinach", "baby spinach"]),
    ("vegetables", "leafy", "lettuce", &["lettuce", "romaine lettuce"]),
    ("vegetables", "leafy", "kale", &["kale"]),
    ("vegetables", "cruciferous", "broccoli", &["broccoli", "broccoli florets"]),
    ("vegetables", "cruciferous", "cauliflower", &["cauliflower"]),
    ("vegetables", "root", "carrot", &["carrot", "carrots", "baby carrots"]),
    ("vegetables", "root", "onion", &["onion", "onions", "red onion"]),
    ("vegetables", "fruiting", "tomato", &["tomato", "tomatoes", "cherry tomatoes"]),
    ("vegetables", "fruiting", "bell pepper", &["bell pepper", "peppers", "capsicum"]),
    ("vegetables", "fruiting", "cucumber", &["cucumber", "cucumber slices"]),
    ("fruits", "pome", "apple", &["apple", "gala apple", "green apple"]),
    ("fruits", "tropical", "banana", &["banana", "bananas"]),
    ("fruits", "berry", "strawberries", &["strawberries", "strawberry"]),
    ("fruits", "berry", "blueberries", &["blueberries", "blueberry"]),
    ("dairy", "milk", "milk", &["milk", "whole milk", "skim milk"]),
    ("dairy", "cultured", "yogurt", &["yogurt", "greek yogurt", "yoghurt"]),
    ("dairy", "cheese", "cheese", &["cheese", "cheddar", "cheddar cheese", "mozzarella"]),
    ("dairy", "butter", "butter", &["butter", "salted butter"]),
    ("eggs", "egg", "egg", &["egg", "eggs", "scrambled eggs", "boiled egg", "fried egg"]),
    ("preparation methods", "cooked", "grilled", &["grilled"]),
    ("preparation methods", "cooked", "fried", &["fried", "pan fried", "deep fried", "stir fried"]),
    ("preparation methods", "cooked", "baked", &["baked", "oven baked"]),
    ("preparation methods", "cooked", "boiled", &["boiled", "steamed", "poached"]),
    ("preparation methods", "cooked", "roasted", &["roasted", "roast"]),
    ("beverages", "coffee", "coffee", &["coffee", "black coffee", "latte", "cappuccino"]),
    ("beverages", "tea", "tea", &["tea", "green tea", "herbal tea"]),
    ("beverages", "juice", "orange juice", &["orange juice", "oj", "fresh orange juice"]),
];

/// Entries that must not match anything in the taxonomy.
const NOISE: &[&str] = &[
    "leftovers from yesterday",
    "mystery casserole",
    "protein shake mix",
    "store brand energy drink",
    "homemade smoothie blend",
    "diet soda can",
    "multivitamin gummy",
    "takeaway surprise box",
    "sparkling water with lemon",
    "granola bar brand x",
];

const PROTEINS: &[&str] = &[
    "chicken breast", "chicken thigh", "turkey breast", "ground beef", "sirloin steak",
    "pork chop", "bacon", "ham slices", "tuna", "canned tuna", "salmon fillet", "cod fillet",
    "firm tofu", "tempeh", "lentils", "chickpeas", "black beans", "kidney beans", "eggs",
];
const SIDES: &[&str] = &[
    "white rice", "brown rice", "pasta", "spaghetti", "whole wheat bread", "toast",
    "tortilla wrap", "couscous", "mashed potato", "baked potato", "french fries",
];
const VEGGIES: &[&str] = &[
    "baby spinach", "romaine lettuce", "kale", "broccoli", "cauliflower", "carrots",
    "red onion", "cherry tomatoes", "bell pepper", "cucumber",
];
const BREAKFASTS: &[&str] = &[
    "oatmeal", "porridge", "greek yogurt", "scrambled eggs", "boiled egg", "toast", "sourdough",
];
const FRUITS: &[&str] = &["apple", "banana", "strawberries", "blueberries"];
const DRINKS: &[&str] = &["coffee", "latte", "green tea", "orange juice", "milk"];
const SNACKS: &[&str] = &[
    "almonds", "salted peanuts", "cashew nuts", "walnut halves", "pistachios", "chia seeds",
    "sunflower seeds", "pumpkin seeds", "hummus", "cheddar cheese", "greek yogurt",
];
const PREPS: &[&str] = &["grilled", "pan fried", "oven baked", "boiled", "roasted", "steamed"];
const QUANTITIES: &[&str] = &["100g", "150g", "200g", "1 cup", "half portion", "2 servings"];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn entry(rng: &mut ChaCha8Rng, pool: &[&str], prep_prob: f64) -> String {
    let food = pick(rng, pool);
    let mut text = String::new();
    if rng.gen_range(0.0..1.0) < prep_prob {
        let prep = pick(rng, PREPS);
        text.push_str(prep);
        text.push(' ');
    }
    text.push_str(food);
    if rng.gen_range(0.0..1.0) < 0.4 {
        let qty = pick(rng, QUANTITIES);
        text.push(' ');
        text.push_str(qty);
    }
    text
}

fn generate_meals(rng: &mut ChaCha8Rng) -> Vec<MealRecord> {
    let base = NaiveDate::from_ymd_opt(2015, 3, 1).expect("valid date");
    let mut records = Vec::new();
    for m in 0..250 {
        let kind = rng.gen_range(0..10);
        let (meal_name, mut entries) = match kind {
            0..=2 => {
                let mut e = vec![entry(rng, BREAKFASTS, 0.0), entry(rng, FRUITS, 0.0)];
                if rng.gen_range(0.0..1.0) < 0.6 {
                    e.push(entry(rng, DRINKS, 0.0));
                }
                ("Breakfast", e)
            }
            3..=5 => {
                let e = vec![
                    entry(rng, PROTEINS, 0.5),
                    entry(rng, SIDES, 0.2),
                    entry(rng, VEGGIES, 0.3),
                ];
                ("Lunch", e)
            }
            6..=8 => {
                let mut e = vec![
                    entry(rng, PROTEINS, 0.5),
                    entry(rng, SIDES, 0.2),
                    entry(rng, VEGGIES, 0.3),
                ];
                if rng.gen_range(0.0..1.0) < 0.3 {
                    e.push(entry(rng, DRINKS, 0.0));
                }
                ("Dinner", e)
            }
            _ => {
                let mut e = vec![entry(rng, SNACKS, 0.0)];
                if rng.gen_range(0.0..1.0) < 0.5 {
                    e.push(entry(rng, SNACKS, 0.0));
                }
                ("Snack", e)
            }
        };
        for _ in 0..2 {
            if rng.gen_range(0.0..1.0) < 0.16 {
                let noise = pick(rng, NOISE);
                entries.push(noise.to_owned());
            }
        }
        records.push(MealRecord {
            user_id: format!("user{:02}", m % 24),
            date: base + chrono::Days::new((m * 3 % 240) as u64),
            meal_name: meal_name.to_owned(),
            raw_entries: entries,
        });
    }
    records
}

fn write_taxonomy_tsv(path: &Path) {
    let mut text = String::from(
        "# category\tsubcategory\tentity\tsynonyms (pipe-separated)\n",
    );
    for (cat, sub, ent, syns) in TAXONOMY {
        text.push_str(&format!("{cat}\t{sub}\t{ent}\t{}\n", syns.join("|")));
    }
    std::fs::write(path, text).expect("write taxonomy");
}

fn fabricate_judgements(cfg: &RunConfig, out: &Path) {
    let rankings = read_rankings(cfg.out_dir.join(artifacts::RANKINGS)).expect("rankings");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut seen = HashSet::new();
    let mut judgements = Vec::new();
    for list in &rankings {
        let q_subs = list.query.subcategory_labels();
        for (rank, (cand, _)) in list.items.iter().enumerate() {
            if !seen.insert((list.query.clone(), cand.clone(), list.method)) {
                continue;
            }
            let same_sub = cand.subcategory_labels().intersection(&q_subs).count() > 0;
            let base = 6.5 - rank as f64 + if same_sub { 0.8 } else { -0.8 };
            let ratings: Vec<u8> = (0..3)
                .map(|_| (base + rng.gen_range(-1.0..1.0)).round().clamp(1.0, 7.0) as u8)
                .collect();
            judgements.push(Judgement {
                query: list.query.clone(),
                candidate: cand.clone(),
                method: list.method,
                ratings,
            });
        }
    }
    write_judgements(out, &judgements).expect("write judgements");
    println!("judgements: {} rows", judgements.len());
}

fn main() {
    let fixture_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini");
    std::fs::create_dir_all(&fixture_dir).expect("create fixture dir");

    let rows: Vec<(String, String, String, Vec<String>)> = TAXONOMY
        .iter()
        .map(|(c, s, e, syn)| {
            (
                c.to_string(),
                s.to_string(),
                e.to_string(),
                syn.iter().map(|x| x.to_string()).collect(),
            )
        })
        .collect();
    let taxonomy = Taxonomy::from_rows(rows).expect("taxonomy is unambiguous");
    assert!(taxonomy.entries().len() >= 40, "need at least 40 entities");
    for noise in NOISE {
        assert!(
            taxonomy.extract(noise).is_empty(),
            "noise entry \"{noise}\" matches the taxonomy"
        );
    }
    write_taxonomy_tsv(&fixture_dir.join("taxonomy.tsv"));
    // the written file must behave exactly like the in-memory rows
    let reloaded = Taxonomy::load(fixture_dir.join("taxonomy.tsv")).expect("reload taxonomy");
    assert_eq!(reloaded.entries().len(), taxonomy.entries().len());

    let mut rng = ChaCha8Rng::seed_from_u64(20150301);
    let records = generate_meals(&mut rng);
    let (_, stats) = preprocess_corpus(&records, &taxonomy, Dedup::Collapse);
    let (_, reload_stats) = preprocess_corpus(&records, &reloaded, Dedup::Collapse);
    assert_eq!(
        stats.entries_discarded, reload_stats.entries_discarded,
        "taxonomy round-trip changes extraction"
    );
    assert!(stats.entries_total >= 500, "only {} entries", stats.entries_total);
    let rate = stats.discard_rate();
    assert!(
        (0.05..=0.15).contains(&rate),
        "discard rate {rate:.3} outside 5-15%"
    );
    write_meals(fixture_dir.join("meals.jsonl"), &records).expect("write meals");
    println!(
        "meals: {} records, {} entries, {} discarded ({:.1}%)",
        records.len(),
        stats.entries_total,
        stats.entries_discarded,
        100.0 * rate
    );

    // run the pipeline far enough to know exactly which pairs get ranked,
    // then fabricate rank-correlated judgements for all of them
    let work = tempfile::tempdir().expect("tempdir");
    let mut cfg = RunConfig {
        taxonomy: fixture_dir.join("taxonomy.tsv"),
        meals: fixture_dir.join("meals.jsonl"),
        out_dir: work.path().to_path_buf(),
        min_row_count: 3,
        min_col_count: 1,
        svd_k: 16,
        oversampling: 8,
        rank_k: 5,
        n_queries: 12,
        ..RunConfig::default()
    };
    run_pipeline(
        &cfg,
        &[Stage::Ingest, Stage::BuildMatrix, Stage::Svd, Stage::RankAll],
    )
    .expect("pipeline through rank-all");
    fabricate_judgements(&cfg, &fixture_dir.join("judgements.csv"));

    // prove the fixture set is self-consistent end to end
    cfg.judgements = Some(fixture_dir.join("judgements.csv"));
    run_pipeline(&cfg, &[Stage::Evaluate, Stage::Heatmap]).expect("evaluate + heatmap");
    let metrics =
        std::fs::read_to_string(cfg.out_dir.join(artifacts::METRICS)).expect("metrics file");
    println!("metrics:\n{metrics}");

    // the committed config points at the fixtures relative to the repo root
    let rel = |name: &str| PathBuf::from("crates/mealswap/fixtures/mini").join(name);
    let committed = RunConfig {
        taxonomy: rel("taxonomy.tsv"),
        meals: rel("meals.jsonl"),
        judgements: Some(rel("judgements.csv")),
        out_dir: PathBuf::from("out/mini"),
        ..cfg
    };
    let text = serde_json::to_string_pretty(&committed).expect("serialize config");
    std::fs::write(fixture_dir.join("run.json"), text + "\n").expect("write run.json");
    println!("wrote {}", fixture_dir.join("run.json").display());
}
