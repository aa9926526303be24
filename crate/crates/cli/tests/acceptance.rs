//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use boundseg::boundary::{escape_field, make_targets, parse, reconstruct, serialize, BoundaryItem, OutputPattern};
use boundseg::metrics::{char_f1, default_pk_window, evaluate, exact_match_f1, f1_label, pk};
use boundseg::perturb::{apply_perturbation, best_intermediate, enumerate_perturbations, PerturbError};
use boundseg::rollout::{
    build_group, compute_advantages, run_batch, simulate, BatchDoc, GenerationRequest, NoisyOraclePolicy, Policy,
    RolloutConfig,
};
use boundseg::{Candidate, LabelSet};
use boundseg_cli::dataset::{load_dataset, Example};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_boundseg")
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`boundseg {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out.stdout)
}

fn gen_corpus(dir: &Path, name: &str, spec: &str) -> Result<PathBuf, String> {
    let spec_path = dir.join(format!("{name}.toml"));
    std::fs::write(&spec_path, spec).map_err(|e| e.to_string())?;
    let out = dir.join(format!("{name}.jsonl"));
    run_cli(&["gen-corpus", "--spec", s(&spec_path), "--out", s(&out)])?;
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn load(path: &Path) -> Result<Vec<Example>, String> {
    load_dataset(path).map_err(|e| e.to_string())
}

fn batch_docs(data: &[Example]) -> Vec<BatchDoc<'_>> {
    data.iter().map(|e| BatchDoc { doc: &e.doc, gold: &e.gold }).collect()
}

const PATTERNS: [OutputPattern; 3] = [OutputPattern::Start, OutputPattern::End, OutputPattern::StartEnd];

fn round_trip(dir: &Path) -> Outcome {
    let t0 = Instant::now();
    let path = gen_corpus(dir, "rt", "n_docs = 1000\nseed = 7\n")?;
    let data = load(&path)?;
    ensure(data.len() == 1000, || format!("corpus has {} documents", data.len()))?;
    let labels = LabelSet::default();
    let mut failures = Vec::new();
    for (i, ex) in data.iter().enumerate() {
        for pattern in PATTERNS {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let out = match make_targets(&ex.doc, &ex.gold, pattern, &mut rng) {
                Ok(o) => o,
                Err(e) => {
                    failures.push(format!("{} {pattern}: {e}", ex.doc.id()));
                    continue;
                }
            };
            let wire = serialize(&out);
            let back = parse(&wire, &labels, pattern).map_err(|e| format!("{}: {e}", ex.doc.id()))?;
            let recon = reconstruct(&ex.doc, &back);
            let r = evaluate(&ex.doc, &recon, &ex.gold, None).map_err(|e| e.to_string())?;
            let exact = recon.segments == ex.gold;
            if !(exact && r.rho_rec == 1.0 && r.em_f1 == 1.0 && r.char_f1 == 1.0 && r.pk == 0.0) {
                failures.push(format!("{} {pattern}", ex.doc.id()));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("3000 round trips, 0 failures, {secs:.2}s"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let labels = LabelSet::new(["A", "B", "C", "D"]).unwrap();
    let mut pairs = 0;
    let mut max_dev = 0.0f64;
    while pairs < 500 {
        let n_words = rng.random_range(1..45);
        let doc = random_doc(&mut rng, "m", n_words, false);
        if doc.len() > 200 || doc.len() < 2 {
            continue;
        }
        let gold = char_segmentation(&mut rng, doc.len(), 6, &labels);
        let pred = gappy_prediction(&mut rng, doc.len(), 8, &labels);
        let g = gold.segments();
        let cf = char_f1(&doc, &pred, g).map_err(|e| e.to_string())?;
        let dev = (cf - oracle_char_f1(&doc, &pred, g)).abs();
        max_dev = max_dev.max(dev);
        ensure(dev <= 1e-12, || format!("char-F1 off by {dev:e} on pair {pairs}"))?;

        let mut windows = vec![rng.random_range(1..doc.len())];
        let default = default_pk_window(doc.len(), g.len());
        if default < doc.len() {
            windows.push(default);
        }
        for k in windows {
            let p = pk(&doc, &pred, g, Some(k)).map_err(|e| e.to_string())?;
            let dev = (p - oracle_pk(&doc, &pred, g, k)).abs();
            max_dev = max_dev.max(dev);
            ensure(dev <= 1e-12, || format!("P_k off by {dev:e} on pair {pairs} (k = {k})"))?;
        }
        ensure(exact_match_f1(&doc, &pred, g).f1 == oracle_em_f1(&doc, &pred, g), || {
            format!("EM-F1 differs on pair {pairs}")
        })?;
        ensure(f1_label(&pred, g) == oracle_f1_label(&pred, g), || format!("F1_lab differs on pair {pairs}"))?;
        pairs += 1;
    }
    Ok(format!("500 pairs, max streaming deviation {max_dev:e}"))
}

fn reward_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let labels = LabelSet::new(["A", "B", "C", "D"]).unwrap();
    let mut partial = 0;
    for case in 0..1000 {
        let n_words = rng.random_range(2..30);
        let doc = random_doc(&mut rng, "r", n_words, true);
        let n_gold = rng.random_range(1..=4);
        let gold = word_aligned_segmentation(&mut rng, &doc, n_gold, &labels);
        let n_pred = rng.random_range(1..=5);
        let pred = word_aligned_segmentation(&mut rng, &doc, n_pred, &labels);
        let pattern = PATTERNS[case % 2];
        let mut out = make_targets(&doc, &pred, pattern, &mut rng).map_err(|e| e.to_string())?;
        // unlocatable sequences make some candidates lossy
        for i in 0..out.len() {
            if rng.random_bool(0.2) {
                let label = out.items()[i].label.clone();
                let item = match pattern {
                    OutputPattern::Start => BoundaryItem::start(label, "\u{2603}"),
                    _ => BoundaryItem::end(label, "\u{2603}"),
                };
                out = out.with_item(i, item).map_err(|e| e.to_string())?;
            }
        }
        let cand = Candidate::score(&doc, &gold, out).map_err(|e| e.to_string())?;
        let segs = cand.recon.segments();
        let rho = oracle_rho(&doc, segs);
        let em = oracle_em_f1(&doc, segs, gold.segments());
        let cf = oracle_char_f1(&doc, segs, gold.segments());
        let half = (em + cf) / 2.0;
        let r = cand.reward();
        ensure((r - rho * half).abs() <= 1e-12, || format!("case {case}: {r} vs {}", rho * half))?;
        ensure((0.0..=rho.min(half)).contains(&r) || (r - rho.min(half)).abs() <= 1e-12, || {
            format!("case {case}: reward {r} outside [0, {}]", rho.min(half))
        })?;
        if rho < 1.0 {
            partial += 1;
        }
    }
    Ok(format!("1000 candidates ({partial} with partial reconstruction)"))
}

fn kind_key(p: &boundseg::Perturbation) -> EditKey {
    use boundseg::PerturbationKind::*;
    let (k, l) = match &p.kind {
        ShortenLeft => ("shorten_left", None),
        ShortenRight => ("shorten_right", None),
        ExtendLeft => ("extend_left", None),
        ExtendRight => ("extend_right", None),
        Relabel(l) => ("relabel", Some(l.clone())),
    };
    (p.segment_index, k, l)
}

fn perturbation_argmax(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let labels = LabelSet::new(["A", "B", "C", "D", "E"]).unwrap();
    let mut done = 0;
    let mut improving = 0;
    while done < 200 {
        let n_words = rng.random_range(2..16);
        let doc = random_doc(&mut rng, "p", n_words, true);
        if doc.len() > 120 {
            continue;
        }
        let pattern = PATTERNS[done % 2];
        let n_pred = rng.random_range(1..=4);
        let pred = word_aligned_segmentation(&mut rng, &doc, n_pred, &labels);
        let n_gold = rng.random_range(1..=4);
        let gold = word_aligned_segmentation(&mut rng, &doc, n_gold, &labels);
        let out = make_targets(&doc, &pred, pattern, &mut rng).map_err(|e| e.to_string())?;
        let cand = Candidate::score(&doc, &gold, out).map_err(|e| e.to_string())?;

        let oracle = oracle_edits(&doc, pred.segments(), &labels, pattern);
        let pool = enumerate_perturbations(&doc, &cand, &labels);
        let keys: Vec<_> = pool.iter().map(kind_key).collect();
        let oracle_keys: Vec<_> = oracle.iter().map(|(k, _)| k.clone()).collect();
        ensure(keys == oracle_keys, || format!("instance {done}: legal edit sets differ"))?;
        for (p, (_, segs)) in pool.iter().zip(&oracle) {
            let c = apply_perturbation(&doc, &cand, p, &gold, &labels).map_err(|e| e.to_string())?;
            ensure(c.recon.segments() == segs.as_slice(), || format!("instance {done}: {p} differs"))?;
        }
        let expected = oracle_best_reward(&doc, pred.segments(), gold.segments(), &labels, pattern);
        match (best_intermediate(&doc, &cand, &gold, &labels, 1), expected) {
            (Ok(best), Some(r)) => {
                ensure((best.candidate.reward() - r).abs() <= 1e-12, || {
                    format!("instance {done}: chosen {} vs oracle {r}", best.candidate.reward())
                })?;
                if best.gain > 0.0 {
                    improving += 1;
                }
            }
            (Err(PerturbError::NoPerturbations), None) => {}
            (a, b) => return Err(format!("instance {done}: {a:?} vs {b:?}")),
        }
        done += 1;
    }

    let data = load(&gen_corpus(dir, "pa", "n_docs = 12\nseed = 4\nmin_words = 20\nmax_words = 60\n")?)?;
    let docs = batch_docs(&data);
    let labels = LabelSet::default();
    let mut accepted = 0;
    for (seed, k) in [(1u64, 1usize), (2, 2), (3, 3)] {
        let config = RolloutConfig { seed, k, batch_size: 6, ..Default::default() };
        let mut policy = NoisyOraclePolicy::new(1.0, labels.clone(), OutputPattern::Start);
        let report = simulate(&docs, &mut policy, &labels, &config, 10).map_err(|e| e.to_string())?;
        for st in &report.steps {
            ensure(st.replacements <= k, || format!("step {}: {} replacements > k = {k}", st.step, st.replacements))?;
            for r in &st.replacement_log {
                ensure(r.gain > 0.0 && (r.after - r.before - r.gain).abs() <= 1e-12, || {
                    format!("step {}: replacement with gain {}", st.step, r.gain)
                })?;
            }
            accepted += st.replacements;
        }
    }
    ensure(accepted > 0, || "no replacement was accepted".into())?;
    Ok(format!("200 instances ({improving} improving), {accepted} replacements all with positive gain"))
}

fn advantage_law(dir: &Path) -> Outcome {
    let data = load(&gen_corpus(dir, "adv", "n_docs = 10\nseed = 5\nmin_words = 20\nmax_words = 80\n")?)?;
    let docs = batch_docs(&data);
    let labels = LabelSet::default();
    let config = RolloutConfig { seed: 3, batch_size: 5, ..Default::default() };
    let mut policy = NoisyOraclePolicy::new(1.0, labels.clone(), OutputPattern::Start);
    let mut groups = 0;
    let mut max_sum = 0.0f64;
    for step in 0..50 {
        let idx: Vec<usize> = (0..config.batch_size).map(|j| (step * config.batch_size + j) % docs.len()).collect();
        let batch_docs: Vec<BatchDoc<'_>> = idx.iter().map(|&i| docs[i]).collect();
        let mut raws = Vec::new();
        for &i in &idx {
            let req = GenerationRequest {
                doc_index: i,
                doc: docs[i].doc,
                gold: docs[i].gold,
                m: config.m,
                temperature: config.temperature,
                step,
            };
            let mut rng = ChaCha8Rng::seed_from_u64((step * 1000 + i) as u64);
            raws.push(policy.generate(&req, &mut rng));
        }
        let batch = run_batch(&batch_docs, &raws, &labels, &config, step).map_err(|e| e.to_string())?;
        for (g, adv) in batch.groups.iter().zip(&batch.advantages) {
            let rewards = g.rewards();
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let sum: f64 = adv.iter().sum();
            max_sum = max_sum.max(sum.abs());
            ensure(sum.abs() <= 1e-9, || format!("step {step}: advantages sum to {sum:e}"))?;
            for (a, r) in adv.iter().zip(&rewards) {
                ensure((a - (r - mean)).abs() <= 1e-12, || format!("step {step}: advantage {a} is not r - mean"))?;
            }
            groups += 1;
        }
    }

    let ex = &data[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let target = serialize(&make_targets(&ex.doc, &ex.gold, OutputPattern::Start, &mut rng).map_err(|e| e.to_string())?);
    for raws in [vec![target; 4], vec!["no tab here".to_string(); 4]] {
        let g = build_group(&ex.doc, &ex.gold, &raws, &labels, &config).map_err(|e| e.to_string())?;
        let adv = compute_advantages(&g);
        ensure(adv.len() == 4 && adv.iter().all(|a| *a == 0.0 && !a.is_nan()), || {
            format!("degenerate group advantages {adv:?}")
        })?;
    }
    Ok(format!("{groups} groups, max |sum| {max_sum:e}; degenerate groups give zero advantages"))
}

fn full_text_output(ex: &Example) -> String {
    ex.gold
        .iter()
        .map(|sg| format!("{}\t{}\n", sg.label, escape_field(ex.doc.slice(sg.span.start(), sg.span.end()))))
        .collect()
}

fn compression(dir: &Path) -> Outcome {
    let spec = "n_docs = 60\nseed = 6\nmin_words = 500\nmax_words = 1200\nmin_segments = 2\nmax_segments = 10\n";
    let data = load(&gen_corpus(dir, "cmp", spec)?)?;
    let mut reductions = Vec::new();
    let mut ratios = Vec::new();
    for (i, ex) in data.iter().enumerate() {
        let words = ex.doc.text().split_whitespace().count();
        if words < 500 || ex.gold.len() > 10 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let out = make_targets(&ex.doc, &ex.gold, OutputPattern::Start, &mut rng).map_err(|e| e.to_string())?;
        let boundary = serialize(&out).chars().count() as f64;
        let full = full_text_output(ex).chars().count() as f64;
        ratios.push(boundary / full);
        reductions.push(1.0 - boundary / full);
    }
    ensure(!ratios.is_empty(), || "no eligible documents".into())?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (ratio, reduction) = (mean(&ratios), mean(&reductions));
    let msg = format!("{} documents, mean length ratio {:.2}%, mean reduction {:.2}%", ratios.len(), ratio * 100.0, reduction * 100.0);
    ensure(ratio <= 0.30 && reduction >= 0.70, || msg.clone())?;
    Ok(msg)
}

fn simulation_regression(dir: &Path) -> Outcome {
    let data = load(&gen_corpus(dir, "sim", "n_docs = 12\nseed = 8\nmin_words = 20\nmax_words = 80\n")?)?;
    let docs = batch_docs(&data);
    let labels = LabelSet::default();
    let mut logged = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let run = |enable: bool| {
            let config = RolloutConfig { seed, enable_intermediate: enable, ..Default::default() };
            let mut policy = NoisyOraclePolicy::new(1.0, labels.clone(), OutputPattern::Start);
            simulate(&docs, &mut policy, &labels, &config, 30).map_err(|e| e.to_string())
        };
        let (with, without) = (run(true)?, run(false)?);
        let fmt = |xs: Vec<f64>| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("    seed {seed} std with:    {}", fmt(with.reward_std_trajectory()));
        println!("    seed {seed} std without: {}", fmt(without.reward_std_trajectory()));
        ensure(with.final_best_mean() >= without.final_best_mean(), || {
            format!("seed {seed}: {} < {}", with.final_best_mean(), without.final_best_mean())
        })?;
        logged += with.total_replacements();
        lines.push(format!("{:.3}>={:.3}", with.final_best_mean(), without.final_best_mean()));
    }
    ensure(logged > 0, || "replacement log is empty".into())?;
    Ok(format!("final best means {}; {logged} replacements logged", lines.join(", ")))
}

fn determinism(dir: &Path) -> Outcome {
    let spec = dir.join("det.toml");
    std::fs::write(&spec, "n_docs = 20\nseed = 9\nmin_words = 20\nmax_words = 80\n").map_err(|e| e.to_string())?;
    let (a, b) = (dir.join("det_a.jsonl"), dir.join("det_b.jsonl"));
    let ga = run_cli(&["gen-corpus", "--spec", s(&spec), "--out", s(&a)])?;
    let gb = run_cli(&["gen-corpus", "--spec", s(&spec), "--out", s(&b)])?;
    let (fa, fb) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
    ensure(fa == fb, || "gen-corpus files differ".into())?;
    ensure(!ga.is_empty() && String::from_utf8_lossy(&ga).replace("det_a", "det_b") == String::from_utf8_lossy(&gb), || {
        "gen-corpus stdout differs".into()
    })?;

    let mut checked = 1;
    let twice = |args: &[&str]| -> Result<Vec<u8>, String> {
        let x = run_cli(args)?;
        let y = run_cli(args)?;
        ensure(x == y, || format!("`boundseg {}` is not deterministic", args.join(" ")))?;
        Ok(x)
    };

    let targets = twice(&["make-targets", "--data", s(&a), "--pattern", "start", "--seed", "3"])?;
    twice(&["make-targets", "--data", s(&a), "--pattern", "start-end", "--seed", "3"])?;
    checked += 2;

    // noisy predictions: outputs from a rollout policy run through score
    let preds = dir.join("det_pred.jsonl");
    let data = load(&a)?;
    let labels = LabelSet::default();
    let mut policy = NoisyOraclePolicy::new(1.5, labels.clone(), OutputPattern::Start);
    let mut lines = String::new();
    for (i, ex) in data.iter().enumerate() {
        let req = GenerationRequest {
            doc_index: i,
            doc: &ex.doc,
            gold: &ex.gold,
            m: 1,
            temperature: 1.0,
            step: 0,
        };
        let out = policy.generate(&req, &mut ChaCha8Rng::seed_from_u64(i as u64)).remove(0);
        lines.push_str(&serde_json::json!({ "id": ex.doc.id(), "output": out }).to_string());
        lines.push('\n');
    }
    std::fs::write(&preds, lines).map_err(|e| e.to_string())?;
    let serial = twice(&["score", "--pred", s(&preds), "--gold", s(&a)])?;
    let parallel = twice(&["score", "--pred", s(&preds), "--gold", s(&a), "--parallel"])?;
    ensure(serial == parallel, || "parallel scoring differs from serial".into())?;
    checked += 2;

    let cand = dir.join("det_cand.jsonl");
    let first_lines: String = String::from_utf8_lossy(&targets).lines().take(5).map(|l| format!("{l}\n")).collect();
    std::fs::write(&cand, first_lines).map_err(|e| e.to_string())?;
    twice(&["perturb", "--candidate", s(&cand), "--gold", s(&a), "--steps", "2"])?;
    checked += 1;

    let sim = |parallel: &str| {
        twice(&[
            "rollout-sim", "--policy", "noisy-oracle", "--data", s(&a), "--iterations", "5", "--noise", "1.0",
            "--seed", "4", "--parallel", parallel,
        ])
    };
    ensure(sim("true")? == sim("false")?, || "parallel rollout differs from serial".into())?;
    checked += 2;

    let doc = dir.join("det_doc.txt");
    let bounds = dir.join("det_bounds.txt");
    std::fs::write(&doc, data[0].doc.text()).map_err(|e| e.to_string())?;
    let first: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&targets).lines().next().unwrap_or("{}")).map_err(|e| e.to_string())?;
    std::fs::write(&bounds, first["output"].as_str().unwrap_or_default()).map_err(|e| e.to_string())?;
    twice(&["reconstruct", "--pattern", "start", "--doc", s(&doc), "--boundaries", s(&bounds)])?;
    checked += 1;

    Ok(format!("{checked} command configurations byte-identical across runs"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 round-trip fidelity", Box::new(|| round_trip(d))),
        ("2 metric oracle equivalence", Box::new(metric_oracles)),
        ("3 reward law", Box::new(reward_law)),
        ("4 perturbation argmax and selective replacement", Box::new(|| perturbation_argmax(d))),
        ("5 advantage law", Box::new(|| advantage_law(d))),
        ("6 output compression", Box::new(|| compression(d))),
        ("7 simulation regression", Box::new(|| simulation_regression(d))),
        ("8 determinism", Box::new(|| determinism(d))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
