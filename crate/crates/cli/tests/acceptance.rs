//! Acceptance gate: one PASS/FAIL/SKIP line per criterion. Every oracle used
//! here is a from-scratch brute-force reimplementation.

use argmine_core::corpus::io::read_convokit;
use argmine_core::corpus::{
    extract_threads, parse_user_token, serialize_thread, Post, SerializeConfig, SerializedThread, SpecialFlag, Thread,
};
use argmine_core::crf::{log_partition, nll, nll_with_grad, viterbi, EmissionMatrix, TransitionTable};
use argmine_core::evaluation::exact_span_scores;
use argmine_core::labels::{fine_types, group_relation};
use argmine_core::labels::{BioSequence, CorpusStats, LabeledThread, Schema, Tag};
use argmine_core::markers::{mask_thread, MarkerLexicon, MaskPolicy};
use argmine_core::synthetic::{generate, SynthConfig};
use argmine_core::tokenize::SurfaceTokenizer;
use argmine_model::prompt::build_prompt;
use argmine_model::training::{
    evaluate_rtp, split_heldout, train_downstream, train_smlm, AciExample, DownstreamData, DownstreamHead,
    Granularity, RtpExample, Task, TrainConfig,
};
use argmine_model::{AciHead, Backbone, BackboneConfig, RtpHead, RtpMode, ToyTransformer, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- CRF

/// Every label sequence of length `n` over `k` labels.
fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|p| (0..k).map(move |y| [p.clone(), vec![y]].concat())).collect();
    }
    out
}

/// Path score from the raw tables; `None` when a transition is forbidden.
fn brute_score(e: &[Vec<f64>], t: &TransitionTable, path: &[usize]) -> Option<f64> {
    let k = t.labels;
    if !t.start_allowed[path[0]] {
        return None;
    }
    let mut s = t.start[path[0]] + e[0][path[0]];
    for i in 1..path.len() {
        let (a, b) = (path[i - 1], path[i]);
        if !t.allowed[a * k + b] {
            return None;
        }
        s += t.trans[a * k + b] + e[i][b];
    }
    Some(s + t.end[*path.last().unwrap()])
}

fn random_table(rng: &mut ChaCha8Rng, k: usize, bio: bool) -> TransitionTable {
    let mut t = if bio { TransitionTable::bio_for_labels(k) } else { TransitionTable::unconstrained(k) };
    for v in t.trans.iter_mut().chain(t.start.iter_mut()).chain(t.end.iter_mut()) {
        *v = rng.random_range(-2.0..2.0);
    }
    t
}

fn random_emissions(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
}

fn crf_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let n = rng.random_range(1..=6);
        let bio = rng.random_bool(0.5);
        let k = if bio { [3, 5][rng.random_range(0..2)] } else { rng.random_range(1..=5) };
        let t = random_table(&mut rng, k, bio);
        let rows = random_emissions(&mut rng, n, k);
        let e = EmissionMatrix::from_rows(&rows).unwrap();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut scores = Vec::new();
        for p in all_paths(n, k) {
            if let Some(s) = brute_score(&rows, &t, &p) {
                scores.push(s);
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, p));
                }
            }
        }
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        let got = viterbi(&e, &t).map_err(|e| e.to_string())?;
        ensure(got == best.as_ref().unwrap().1, || format!("case {case}: viterbi {got:?} vs {:?}", best.unwrap().1))?;
        let z = log_partition(&e, &t).map_err(|e| e.to_string())?;
        ensure((z - log_z).abs() <= 1e-8, || format!("case {case}: log Z {z} vs {log_z}"))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("100 instances exact, {secs:.2}s"))
}

fn crf_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.random_range(2..=6);
        let k = 5;
        let mut t = random_table(&mut rng, k, true);
        let mut rows = random_emissions(&mut rng, n, k);
        // A gold path the BIO mask admits: O / B-0 / I-0 chain.
        let gold: Vec<usize> = (0..n).map(|i| if i == 0 { 1 } else { [0, 1, 2][rng.random_range(0..3)] }).collect();
        let gold: Vec<usize> = gold.iter().enumerate().map(|(i, &g)| if g == 2 && i > 0 && gold[i - 1] == 0 { 1 } else { g }).collect();
        let (_, g) = nll_with_grad(&EmissionMatrix::from_rows(&rows).unwrap(), &t, &gold).map_err(|e| e.to_string())?;
        let f = |rows: &Vec<Vec<f64>>, t: &TransitionTable| nll(&EmissionMatrix::from_rows(rows).unwrap(), t, &gold).unwrap();
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for i in 0..n {
            for y in 0..k {
                let orig = rows[i][y];
                rows[i][y] = orig + h;
                let up = f(&rows, &t);
                rows[i][y] = orig - h;
                let down = f(&rows, &t);
                rows[i][y] = orig;
                numeric.push((up - down) / (2.0 * h));
                analytic.push(g.emissions[i * k + y]);
            }
        }
        for idx in 0..k * k {
            if !t.allowed[idx] {
                continue;
            }
            let orig = t.trans[idx];
            t.trans[idx] = orig + h;
            let up = f(&rows, &t);
            t.trans[idx] = orig - h;
            let down = f(&rows, &t);
            t.trans[idx] = orig;
            numeric.push((up - down) / (2.0 * h));
            analytic.push(g.trans[idx]);
        }
        for (field, grad) in [(0, &g.start), (1, &g.end)] {
            for y in 0..k {
                if field == 0 && !t.start_allowed[y] {
                    continue;
                }
                let v = if field == 0 { &mut t.start } else { &mut t.end };
                let orig = v[y];
                v[y] = orig + h;
                let up = f(&rows, &t);
                let v = if field == 0 { &mut t.start } else { &mut t.end };
                v[y] = orig - h;
                let down = f(&rows, &t);
                let v = if field == 0 { &mut t.start } else { &mut t.end };
                v[y] = orig;
                numeric.push((up - down) / (2.0 * h));
                analytic.push(grad[y]);
            }
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt());
        let rel = diff / norm.max(1e-12);
        worst = worst.max(rel);
        ensure(rel < 1e-4, || format!("case {case}: relative error {rel:.2e}"))?;
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- metrics

/// Spans by definition: a maximal run starting at `B-x`, or at an `I-x` not
/// preceded by `B-x`/`I-x`, continued by `I-x`.
fn brute_spans(tags: &[Tag]) -> BTreeSet<(usize, usize, usize)> {
    let n = tags.len();
    let mut out = BTreeSet::new();
    for s in 0..n {
        for e in s + 1..=n {
            for x in 0..2 {
                let starts = match tags[s] {
                    Tag::B(y) => y == x,
                    Tag::I(y) => y == x && (s == 0 || !matches!(tags[s - 1], Tag::B(z) | Tag::I(z) if z == x)),
                    Tag::O => false,
                };
                let inner = (s + 1..e).all(|i| tags[i] == Tag::I(x));
                let closed = e == n || tags[e] != Tag::I(x);
                if starts && inner && closed {
                    out.insert((s, e, x));
                }
            }
        }
    }
    out
}

fn collapse_starts(tags: &[Tag]) -> Vec<Tag> {
    let spans = brute_spans(tags);
    let mut out = tags.to_vec();
    for (s, _, x) in spans {
        out[s] = Tag::B(x);
    }
    out
}

fn random_tags(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tag> {
    (0..n)
        .map(|_| match rng.random_range(0..5) {
            0 | 1 => Tag::O,
            2 => Tag::B(rng.random_range(0..2)),
            _ => Tag::I(rng.random_range(0..2)),
        })
        .collect()
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut relaxed = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=14);
        let gold = random_tags(&mut rng, n);
        let mut pred = if rng.random_bool(0.4) { gold.clone() } else { random_tags(&mut rng, n) };
        // Force the B-x / I-x span-start relaxation in a share of the cases.
        if rng.random_bool(0.3) {
            for i in 0..n {
                if let Tag::B(x) = gold[i] {
                    if i == 0 || !matches!(pred[i - 1], Tag::B(z) | Tag::I(z) if z == x) {
                        pred[i] = Tag::I(x);
                        relaxed += 1;
                    }
                }
            }
        }
        let (g, p) = (brute_spans(&gold), brute_spans(&pred));
        let report = exact_span_scores(&BioSequence(gold.clone()), &BioSequence(pred.clone()), Schema::Cmv).map_err(|e| e.to_string())?;
        for x in 0..2 {
            let tp = g.iter().filter(|s| s.2 == x && p.contains(s)).count();
            let fp = p.iter().filter(|s| s.2 == x && !g.contains(s)).count();
            let fn_ = g.iter().filter(|s| s.2 == x && !p.contains(s)).count();
            let got = &report.per_class[x].1;
            ensure((got.tp, got.fp, got.fn_) == (tp, fp, fn_), || {
                format!("case {case} class {x}: {:?} vs {:?}", (got.tp, got.fp, got.fn_), (tp, fp, fn_))
            })?;
        }
        let tp = g.intersection(&p).count() as f64;
        let f1 = if g.len() + p.len() == 0 { 0.0 } else { 2.0 * tp / (g.len() + p.len()) as f64 };
        ensure(report.micro.f1 == f1, || format!("case {case}: micro-F1 {} vs {f1}", report.micro.f1))?;
        let (cg, cp) = (collapse_starts(&gold), collapse_starts(&pred));
        let acc = cg.iter().zip(&cp).filter(|(a, b)| a == b).count() as f64 / n as f64;
        ensure(report.token_accuracy == acc, || format!("case {case}: token accuracy {} vs {acc}", report.token_accuracy))?;
    }
    Ok(format!("1000 pairs exact, {relaxed} relaxed span starts"))
}

// ---------------------------------------------------------------- masking

const MARKER_EXAMPLE: [&str; 2] = [
    "I think that most Jewish people would not object to a rule against it.",
    "Nobody has to attend the service. So a rule is unneeded if nobody is forced to go.",
];

fn post(id: &str, author: &str, parent: Option<&str>, body: &str) -> Post {
    Post {
        post_id: id.into(),
        author_id: author.into(),
        parent_id: parent.map(Into::into),
        body: body.into(),
        quote_ranges: vec![],
        url_ranges: vec![],
        is_submission: parent.is_none(),
    }
}

fn masking() -> Check {
    let lexicon = MarkerLexicon::default();
    let tok = SurfaceTokenizer::new();
    let cfg = SerializeConfig::default();
    let example = Thread::from_posts(
        "example",
        vec![post("p0", "u1", None, MARKER_EXAMPLE[0]), post("p1", "u2", Some("p0"), MARKER_EXAMPLE[1])],
    );
    let st = serialize_thread(&example, &tok, &cfg).map_err(|e| e.to_string())?;
    let masked = mask_thread(&lexicon, &st, MaskPolicy::Selective, 0).map_err(|e| e.to_string())?;
    let words: Vec<String> = masked.target_tokens.values().map(|t| t.trim().to_lowercase()).collect();
    ensure(words == ["i", "think", "so", "if"], || format!("example masked {words:?}"))?;
    let again = mask_thread(&lexicon, &st, MaskPolicy::Selective, 99).map_err(|e| e.to_string())?;
    ensure(again == masked, || "selective masking depends on the seed".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let t = random_thread(&mut rng, case).0;
        let st = serialize_thread(&t, &tok, &cfg).map_err(|e| e.to_string())?;
        for policy in [MaskPolicy::Selective, MaskPolicy::Random15] {
            let m = mask_thread(&lexicon, &st, policy, case as u64).map_err(|e| e.to_string())?;
            ensure(m.unmask() == st.tokens, || format!("thread {case}: unmask differs under {policy:?}"))?;
            ensure(m.masked_positions().all(|i| !st.special_flags[i].is_special()), || format!("thread {case}: special token masked"))?;
        }
    }
    Ok("example markers exact; 1000 threads round-trip under both policies".into())
}

// ---------------------------------------------------------------- serialization

const WORDS: &[&str] = &["taxes", "are", "bad", "the", "city", "needs", "roads", "and", "more", "buses", "people", "vote"];

fn push_words(body: &mut String, kept: &mut String, rng: &mut ChaCha8Rng) {
    for _ in 0..rng.random_range(1..5) {
        let w = format!(" {}", WORDS[rng.random_range(0..WORDS.len())]);
        body.push_str(&w);
        kept.push_str(&w);
    }
}

fn push_url(body: &mut String, urls: &mut Vec<(usize, usize)>, flags: &mut Vec<SpecialFlag>) {
    let s = body.chars().count();
    body.push_str("https://ex.org/a");
    urls.push((s, body.chars().count()));
    flags.push(SpecialFlag::Url);
}

/// A random chain of posts plus, per post, the expected special-token order
/// and the text expected to survive stripping.
fn random_thread(rng: &mut ChaCha8Rng, id: usize) -> (Thread, Vec<(Vec<SpecialFlag>, String)>) {
    let n_posts = rng.random_range(1..=5);
    let authors = ["ann", "bob", "cy", "dee"];
    let mut posts = Vec::new();
    let mut expect = Vec::new();
    for p in 0..n_posts {
        let mut body = String::new();
        let mut kept = String::new();
        let mut flags = vec![SpecialFlag::User];
        let (mut quotes, mut urls) = (vec![], vec![]);
        for _ in 0..rng.random_range(1..4) {
            match rng.random_range(0..4) {
                0 => {
                    body.push(' ');
                    kept.push(' ');
                    let s = body.chars().count();
                    flags.push(SpecialFlag::StartQ);
                    if rng.random_bool(0.3) {
                        // A URL opening the quote sits inside it.
                        push_url(&mut body, &mut urls, &mut flags);
                    } else {
                        body.push_str("quoted");
                        kept.push_str("quoted");
                    }
                    push_words(&mut body, &mut kept, rng);
                    quotes.push((s, body.chars().count()));
                    flags.push(SpecialFlag::EndQ);
                }
                1 => {
                    body.push(' ');
                    kept.push(' ');
                    push_url(&mut body, &mut urls, &mut flags);
                }
                _ => push_words(&mut body, &mut kept, rng),
            }
        }
        let author = authors[rng.random_range(0..authors.len())];
        let parent = if p == 0 { None } else { Some(format!("t{id}p{}", p - 1)) };
        posts.push(Post {
            post_id: format!("t{id}p{p}"),
            author_id: author.into(),
            parent_id: parent,
            body,
            quote_ranges: quotes,
            url_ranges: urls,
            is_submission: p == 0,
        });
        expect.push((flags, kept));
    }
    (Thread::from_posts(format!("t{id}"), posts), expect)
}

fn serialization() -> Check {
    let tok = SurfaceTokenizer::new();
    let cfg = SerializeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut threads = Vec::new();
    for case in 0..1000 {
        let (t, expect) = random_thread(&mut rng, case);
        let st = serialize_thread(&t, &tok, &cfg).map_err(|e| e.to_string())?;
        st.check_invariants().map_err(|e| format!("thread {case}: {e}"))?;
        let mut order: Vec<&str> = Vec::new();
        for p in &t.posts {
            if !order.contains(&p.author_id.as_str()) {
                order.push(&p.author_id);
            }
        }
        ensure(st.post_spans.len() == t.posts.len(), || format!("thread {case}: posts lost"))?;
        let mut all_kept = String::new();
        for (k, (&(s, e), (flags, kept))) in st.post_spans.iter().zip(&expect).enumerate() {
            let user = order.iter().position(|a| *a == t.posts[k].author_id).unwrap();
            ensure(parse_user_token(&st.tokens[s]) == Some(user), || format!("thread {case} post {k}: user token {}", st.tokens[s]))?;
            let got: Vec<SpecialFlag> = st.special_flags[s..e].iter().copied().filter(|f| f.is_special()).collect();
            ensure(&got == flags, || format!("thread {case} post {k}: specials {got:?} vs {flags:?}"))?;
            let text: String = (s..e).filter(|&i| !st.special_flags[i].is_special()).map(|i| st.tokens[i].as_str()).collect();
            ensure(&text == kept, || format!("thread {case} post {k}: {text:?} vs {kept:?}"))?;
            all_kept.push_str(kept);
        }
        ensure(st.strip_special() == all_kept, || format!("thread {case}: strip_special differs"))?;
        threads.push((t, st));
    }
    for pair in 0..100 {
        let (t, full) = &threads[pair];
        let a = rng.random_range(1..=full.len());
        let b = rng.random_range(a..=full.len() + 5);
        let sa = serialize_thread(t, &tok, &SerializeConfig { max_len: a, ..cfg.clone() }).map_err(|e| e.to_string())?;
        let sb = serialize_thread(t, &tok, &SerializeConfig { max_len: b, ..cfg.clone() }).map_err(|e| e.to_string())?;
        ensure(sa.tokens.len() == a.min(full.len()) && sb.tokens.starts_with(&sa.tokens), || format!("pair {pair}: ({a}, {b}) not a prefix"))?;
        ensure(sb.special_flags.starts_with(&sa.special_flags), || format!("pair {pair}: flags not a prefix"))?;
    }
    Ok("1000 threads, 100 truncation pairs".into())
}

// ---------------------------------------------------------------- prompts

fn user_of(st: &SerializedThread, i: usize) -> usize {
    let (s, _) = *st.post_spans.iter().rev().find(|&&(s, _)| s <= i).unwrap();
    parse_user_token(&st.tokens[s]).unwrap()
}

fn synthetic_threads(submissions: usize, seed: u64) -> Vec<LabeledThread> {
    generate(&SynthConfig { submissions, seed, ..Default::default() })
        .labeled_threads(&SurfaceTokenizer::new(), &SerializeConfig::default())
        .unwrap()
}

fn prompts() -> Check {
    let threads = synthetic_threads(20, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let lt = loop {
            let t = &threads[rng.random_range(0..threads.len())];
            if t.components.len() >= 2 {
                break t;
            }
        };
        let a = &lt.components[rng.random_range(0..lt.components.len())];
        let b = &lt.components[rng.random_range(0..lt.components.len())];
        let k = 2 + case % 2;
        let st = &lt.thread;
        let mut expect = st.tokens.clone();
        let template_start = expect.len();
        expect.push(format!("[USER-{}]", user_of(st, b.token_start)));
        expect.push(" said".into());
        expect.extend_from_slice(&st.tokens[b.token_start..b.token_end]);
        let masks: Vec<usize> = (expect.len()..expect.len() + k).collect();
        expect.extend(std::iter::repeat_n("[MASK]".to_string(), k));
        expect.push(format!("[USER-{}]", user_of(st, a.token_start)));
        expect.push(" said".into());
        expect.extend_from_slice(&st.tokens[a.token_start..a.token_end]);
        // Source `a` refers to target `b`.
        let p = build_prompt(st, a, b, k, 1 << 16).map_err(|e| e.to_string())?;
        ensure(p.tokens() == expect, || format!("case {case}: {:?}", &p.tokens()[template_start..]))?;
        ensure(p.mask_positions == masks, || format!("case {case}: masks {:?} vs {masks:?}", p.mask_positions))?;
    }
    Ok("100 pairs token-exact for k = 2 and 3".into())
}

// ---------------------------------------------------------------- relation grouping

fn grouping() -> Check {
    let cmv: &[(&str, &str)] = &[
        ("continue", "support"),
        ("support", "support"),
        ("agreement", "agreement"),
        ("understand", "agreement"),
        ("attack", "direct attack"),
        ("rebuttal attack", "direct attack"),
        ("rebuttal", "direct attack"),
        ("disagreement", "direct attack"),
        ("undercutter", "undercutter attack"),
        ("undercutter attack", "undercutter attack"),
        ("partial agreement", "partial"),
        ("partial attack", "partial"),
        ("partial disagreement", "partial"),
    ];
    let dr: &[(&str, &str)] =
        &[("support", "support"), ("supports", "support"), ("contradicts", "contradicts"), ("semantically same", "semantically same"), ("parts of same", "semantically same")];
    for (schema, table) in [(Schema::Cmv, cmv), (Schema::DrInventor, dr)] {
        for (fine, coarse) in table {
            let got = group_relation(fine, schema).map_err(|e| e.to_string())?;
            ensure(got == *coarse, || format!("{fine} -> {got}, expected {coarse}"))?;
        }
        let inventory: BTreeSet<&str> = fine_types(schema).into_iter().collect();
        for f in &inventory {
            ensure(table.iter().any(|(t, _)| t == f), || format!("{f} is outside the expected inventory"))?;
        }
        ensure(group_relation("no such type", schema).is_err(), || "unknown types must be rejected".into())?;
    }
    ensure(group_relation("parts-of-same", Schema::DrInventor).ok() == Some("semantically same"), || "parts-of-same spelling".into())?;
    ensure(cmv.len() == 13 && fine_types(Schema::Cmv).len() == 13, || "CMV inventory is not 13 fine types".into())?;
    Ok("13 CMV fine types onto 5 classes; Dr. Inventor total".into())
}

// ---------------------------------------------------------------- synthetic end to end

fn toy(vocab: &Vocab, seed: u64) -> ToyTransformer {
    ToyTransformer::new(BackboneConfig { ff: 128, seed, ..BackboneConfig::toy(vocab.len()) }).unwrap()
}

fn synthetic_e2e() -> Check {
    let started = Instant::now();
    let threads = synthetic_threads(40, 8);
    let lexicon = MarkerLexicon::default();
    let vocab = Vocab::build(threads.iter().map(|t| t.thread.tokens.as_slice()), &lexicon, 12);
    let err = |e: argmine_model::ModelError| e.to_string();

    let split = split_heldout(threads.iter().map(|t| t.thread.clone()).collect(), 0.1, 8);
    let b = toy(&vocab, 8);
    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: 3e-3,
        grad_accum: 1,
        tokens_per_batch: 256,
        checkpoint_every_epoch: false,
        ..TrainConfig::defaults(Task::Smlm, Granularity::Thread)
    };
    let report = train_smlm(&b, &vocab, &lexicon, &split, MaskPolicy::Selective, &cfg, &mut |_, _| Ok(None)).map_err(err)?;
    let (init, last) = (report.initial.perplexity, report.epochs.last().unwrap().heldout.perplexity);
    let drop = 1.0 - last / init;
    ensure(drop >= 0.2, || format!("held-out perplexity {init:.2} -> {last:.2}"))?;

    let n_train = threads.len() * 4 / 5;
    let ex = |ts: &[LabeledThread]| ts.iter().map(AciExample::from).collect::<Vec<_>>();
    let data = DownstreamData::Aci { train: ex(&threads[..n_train]), test: ex(&threads[n_train..]) };
    let aci_b = toy(&vocab, 9);
    let head = AciHead::new(aci_b.config().hidden, Schema::Cmv, 9).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 3e-3,
        grad_accum: 1,
        tokens_per_batch: 512,
        ..TrainConfig::defaults(Task::Aci, Granularity::Thread)
    };
    let ledger = train_downstream(&aci_b, &vocab, DownstreamHead::Aci(&head), &data, &cfg).map_err(err)?;
    let best = ledger.records.iter().map(|r| r.micro_f1).fold(0.0, f64::max);
    let first = ledger.records.iter().find(|r| r.micro_f1 >= 0.95).map(|r| r.epoch);
    let secs = started.elapsed().as_secs_f64();
    ensure(first.is_some(), || format!("best toy ACI micro-F1 {best:.3} in 30 epochs"))?;
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "perplexity {init:.1} -> {last:.1} ({:.0}% lower); ACI F1 >= 0.95 at epoch {}; {secs:.0}s",
        100.0 * drop,
        first.unwrap()
    ))
}

// ---------------------------------------------------------------- corpus statistics

fn argmine() -> Command {
    Command::new(env!("CARGO_BIN_EXE_argmine"))
}

fn prepared_stats(manifest: &str) -> Result<CorpusStats, String> {
    let out = argmine().args(["prepare-data", "--manifest", manifest]).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let loaded = argmine_cli::manifest::Loaded::from_file(manifest.as_ref()).map_err(|e| e.to_string())?;
    let path = loaded.output_dir().join("data/stats.json");
    let a: argmine_cli::artifact::Artifact<CorpusStats> = argmine_cli::artifact::read(&path).map_err(|e| e.to_string())?;
    Ok(a.data)
}

fn compare(stats: &CorpusStats, tags: &[(&str, usize)], rels: &[(&str, usize)]) -> Result<(), String> {
    for (t, n) in tags {
        ensure(stats.tag(t) == Some(*n), || format!("{t}: {:?} vs {n}", stats.tag(t)))?;
    }
    for (r, n) in rels {
        ensure(stats.relation(r) == Some(*n), || format!("{r}: {:?} vs {n}", stats.relation(r)))?;
    }
    Ok(())
}

fn table_stats() -> Outcome {
    let cmv = std::env::var("ARGMINE_CMV_MANIFEST").ok();
    let dr = std::env::var("ARGMINE_DRINVENTOR_MANIFEST").ok();
    if cmv.is_none() && dr.is_none() {
        return Outcome::Skip("set ARGMINE_CMV_MANIFEST / ARGMINE_DRINVENTOR_MANIFEST to the annotated corpora".into());
    }
    let run = || -> Check {
        let mut done = Vec::new();
        if let Some(m) = cmv {
            let s = prepared_stats(&m)?;
            compare(
                &s,
                &[("O", 28186), ("B-C", 1650), ("I-C", 26529), ("B-P", 1980), ("I-P", 36552)],
                &[("support", 1859), ("agreement", 421), ("direct attack", 283), ("undercutter attack", 330), ("partial", 215)],
            )?;
            done.push("CMV");
        }
        if let Some(m) = dr {
            let s = prepared_stats(&m)?;
            compare(&s, &[], &[("support", 4535), ("contradicts", 564), ("semantically same", 1049)])?;
            done.push("Dr. Inventor");
        }
        Ok(format!("{} statistics exact", done.join(" and ")))
    };
    match run() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

fn thread_scale() -> Outcome {
    let Ok(path) = std::env::var("ARGMINE_CONVOKIT_UTTERANCES") else {
        return Outcome::Skip("set ARGMINE_CONVOKIT_UTTERANCES to the ConvoKit utterances.jsonl".into());
    };
    let run = || -> Check {
        let posts = read_convokit(path.as_ref()).map_err(|e| e.to_string())?;
        let subs = posts.iter().filter(|p| p.is_submission).count();
        let threads = extract_threads(&posts).map_err(|e| e.to_string())?.len();
        let got = (subs, posts.len() - subs, threads);
        ensure(got == (3051, 293_297, 120_031), || format!("submissions/comments/threads {got:?}"))?;
        Ok("3051 / 293297 -> 120031 threads".into())
    };
    match run() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

// ---------------------------------------------------------------- chance level

fn chance_level() -> Check {
    let threads = synthetic_threads(60, 11);
    let vocab = Vocab::build(threads.iter().map(|t| t.thread.tokens.as_slice()), &MarkerLexicon::default(), 12);
    let classes: Vec<String> = Schema::Cmv.relation_classes().iter().map(|s| s.to_string()).collect();
    let mode = RtpMode::Prompt { k: 3 };
    let mut examples = Vec::new();
    for t in &threads {
        examples.extend(RtpExample::from_labeled(t, mode, &classes, 4096).map_err(|e| e.to_string())?);
    }
    let mut counts = vec![0usize; classes.len()];
    for e in &examples {
        counts[e.label] += 1;
    }
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    ensure((*hi as f64) <= 1.5 * (*lo as f64), || format!("class counts not balanced: {counts:?}"))?;
    let mut f1s = Vec::new();
    for seed in 0..10 {
        let b = toy(&vocab, 100 + seed);
        let head = RtpHead::new(b.config().hidden, mode, classes.clone(), 200 + seed).map_err(|e| e.to_string())?;
        let (prf, _) = evaluate_rtp(&b, &vocab, &head, &examples).map_err(|e| e.to_string())?;
        f1s.push(prf.f1);
    }
    let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
    ensure((mean - 0.2).abs() <= 0.05, || format!("mean micro-F1 {mean:.3} over 10 seeds: {f1s:.3?}"))?;
    Ok(format!("mean micro-F1 {mean:.3} over 10 seeds on {} relations", examples.len()))
}

fn main() {
    let wrap = |r: Check| match r {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("CRF oracle equivalence", Box::new(move || wrap(crf_oracle()))),
        ("CRF gradient check", Box::new(move || wrap(crf_gradient()))),
        ("span metric oracle", Box::new(move || wrap(metric_oracle()))),
        ("masking round-trip and determinism", Box::new(move || wrap(masking()))),
        ("serialization invariants", Box::new(move || wrap(serialization()))),
        ("prompt exactness", Box::new(move || wrap(prompts()))),
        ("relation grouping", Box::new(move || wrap(grouping()))),
        ("synthetic end to end", Box::new(move || wrap(synthetic_e2e()))),
        ("corpus statistics", Box::new(table_stats)),
        ("thread extraction scale", Box::new(thread_scale)),
        ("chance-level relation head", Box::new(move || wrap(chance_level()))),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|p| Outcome::Fail(format!("panicked: {:?}", p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())))));
        let (tag, msg) = match outcome {
            Outcome::Pass(m) => ("PASS", m),
            Outcome::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Outcome::Skip(m) => ("SKIP", m),
        };
        println!("{tag} {:>2} {name}: {msg}", i + 1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
