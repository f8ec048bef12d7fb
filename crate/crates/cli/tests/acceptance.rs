// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Expected values come from oracles written here, independently of the
//! library code paths they check.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use llens::geometry::{build_lens_distance_matrix, classical_mds, DistanceMatrix};
use llens::langmeter::{
    build_all_boolq_sets, default_answer_words, Answer, LanguageTokenSet, SetKind,
};
use llens::lens::{entropy_bits, logit_lens, sublayer_deltas, token_energy, NextTokenDistribution};
use llens::model::ModelWeights;
use llens::tasks::{BoolqItem, TaskKind, WordRecord};
use llens::tokenizer::{byte_token_string, DEFAULT_MARKER};
use llens::{forward, Matrix, ModelBundle, ModelConfig, Vocabulary};
use llens_cli::{emit_rows_csv, run_boolq, run_task, summarize, RunOptions, TaskSpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(d: usize, m: usize, v: usize, max_seq: usize) -> ModelConfig {
    ModelConfig {
        dim: d,
        n_layers: m,
        vocab_size: v,
        n_heads: 2,
        n_kv_heads: 1,
        ffn_hidden: 2 * d,
        rope_theta: 10000.0,
        max_seq,
        norm_eps: 1e-5,
    }
}

fn byte_vocab(extra: &[&str]) -> Vocabulary {
    let mut tokens: Vec<String> = (0..=255u8).map(byte_token_string).collect();
    tokens.extend(extra.iter().map(|s| s.to_string()));
    Vocabulary::new(tokens, DEFAULT_MARKER).unwrap()
}

/// Final RMS-norm, unembedding and softmax, written out longhand in f64.
fn oracle_head(w: &ModelWeights<f32>, eps: f64, h: &[f32]) -> Vec<f64> {
    let h: Vec<f64> = h.iter().map(|&x| f64::from(x)).collect();
    let ms = h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64;
    let inv = 1.0 / (ms + eps).sqrt();
    let x: Vec<f64> = h
        .iter()
        .zip(&w.final_norm)
        .map(|(a, &g)| a * inv * f64::from(g))
        .collect();
    let u = &w.unembedding;
    let logits: Vec<f64> = (0..u.rows())
        .map(|t| {
            u.row(t)
                .iter()
                .zip(&x)
                .map(|(&a, b)| f64::from(a) * b)
                .sum()
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn lens_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = StdRng::seed_from_u64(20);
    for i in 0..20u64 {
        let d = [8, 16][i as usize % 2];
        let m = [1, 4][(i as usize / 2) % 2];
        let v = [16, 64][(i as usize / 4) % 2];
        let c = config(d, m, v, 16);
        let model = ModelBundle::new(c.clone(), ModelWeights::<f32>::random(&c, 100 + i)).unwrap();
        let tokens: Vec<u32> = (0..rng.gen_range(1..=12))
            .map(|_| rng.gen_range(0..v as u32))
            .collect();
        let trace = forward(&model, &tokens).unwrap();
        for pos in 0..tokens.len() {
            let lens = logit_lens(&model, &trace, m, pos).unwrap();
            let head = oracle_head(model.weights(), c.norm_eps, trace.latent(m, pos));
            for (a, b) in lens.probs.iter().zip(&head) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!("max |Δp| = {worst:.2e}, {:.2?}", elapsed),
    )
}

fn entropy() -> Outcome {
    let uniform = NextTokenDistribution::from_logits(&vec![0.0f64; 32000], 0, 0);
    let h = entropy_bits(&uniform);
    let mut one_hot = vec![f64::NEG_INFINITY; 100];
    one_hot[7] = 0.0;
    let h0 = entropy_bits(&NextTokenDistribution::from_logits(&one_hot, 0, 0));
    let mut rng = StdRng::seed_from_u64(25);
    let mut bounded = true;
    for _ in 0..200 {
        let v = rng.gen_range(2..3000);
        let scale = rng.gen_range(0.0..20.0);
        let logits: Vec<f64> = (0..v).map(|_| rng.gen_range(-scale..=scale)).collect();
        let e = entropy_bits(&NextTokenDistribution::from_logits(&logits, 0, 0));
        bounded &= (0.0..=(v as f64).log2() + 1e-12).contains(&e);
    }
    check(
        (h - 14.9658).abs() <= 1e-3 && h0 == 0.0 && bounded,
        format!("uniform 32000 = {h:.6} bits, one-hot = {h0}, bounded = {bounded}"),
    )
}

/// `v · ‖Ûh‖² / (‖h‖² · ‖ÛÛᵀ‖_F²)` with the v × v Gram matrix built explicitly.
fn direct_energy(u: &Matrix<f64>, h: &[f64]) -> f64 {
    let v = u.rows();
    let rows: Vec<Vec<f64>> = (0..v)
        .map(|t| {
            let r = u.row(t);
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter()
                .map(|x| if n > 0.0 { x / n } else { 0.0 })
                .collect()
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let uh: f64 = rows.iter().map(|r| dot(r, h).powi(2)).sum();
    let mut gram_f = 0.0;
    for a in &rows {
        for b in &rows {
            gram_f += dot(a, b).powi(2);
        }
    }
    (v as f64 * uh / (dot(h, h) * gram_f)).sqrt()
}

fn energy_model(u: Matrix<f64>) -> ModelBundle<f64> {
    let [v, d] = u.shape();
    let mut c = config(d, 1, v, 4);
    c.n_heads = 1;
    c.n_kv_heads = 1;
    let mut w = ModelWeights::<f64>::zeros(&c);
    w.unembedding = u;
    ModelBundle::new(c, w).unwrap()
}

fn random_matrix(rng: &mut StdRng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Rows orthonormalised by modified Gram–Schmidt.
fn orthonormal_rows(mut a: Matrix<f64>) -> Matrix<f64> {
    for i in 0..a.rows() {
        for j in 0..i {
            let p: f64 = a.row(i).iter().zip(a.row(j)).map(|(x, y)| x * y).sum();
            let rj = a.row(j).to_vec();
            a.row_mut(i)
                .iter_mut()
                .zip(&rj)
                .for_each(|(x, y)| *x -= p * y);
        }
        let n = a.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        a.row_mut(i).iter_mut().for_each(|x| *x /= n);
    }
    a
}

fn token_energy_checks() -> Outcome {
    let mut rng = StdRng::seed_from_u64(26);
    let (mut rel_a, mut rel_b, mut abs_c, mut abs_d) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = 2 * rng.gen_range(1..=8);
        let v = rng.gen_range(2..=32);
        let model = energy_model(random_matrix(&mut rng, v, d));
        let h: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fast = token_energy(&model, &h).unwrap();
        let slow = direct_energy(model.unembedding(), &h);
        rel_a = rel_a.max((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE));

        let c = rng.gen_range(0.01..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let scaled: Vec<f64> = h.iter().map(|x| c * x).collect();
        let e_scaled = token_energy(&model, &scaled).unwrap();
        rel_b = rel_b.max((e_scaled - fast).abs() / fast.max(f64::MIN_POSITIVE));

        // rank-deficient U and a latent orthogonal to every row
        let d_big = 2 * rng.gen_range(2..=8);
        let k = rng.gen_range(1..d_big);
        let basis = orthonormal_rows(random_matrix(&mut rng, d_big, d_big));
        let rows = rng.gen_range(2..=32);
        let coeffs = random_matrix(&mut rng, rows, k);
        let mut u = Matrix::zeros(coeffs.rows(), d_big);
        for t in 0..coeffs.rows() {
            for j in 0..k {
                for a in 0..d_big {
                    u[(t, a)] += coeffs[(t, j)] * basis[(j, a)];
                }
            }
        }
        let mut h_perp = vec![0.0; d_big];
        for j in k..d_big {
            let w = rng.gen_range(-2.0..2.0);
            h_perp
                .iter_mut()
                .zip(basis.row(j))
                .for_each(|(x, b)| *x += w * b);
        }
        abs_c = abs_c.max(token_energy(&energy_model(u), &h_perp).unwrap().abs());

        // orthonormal square Û; row scaling must not matter
        let mut q = orthonormal_rows(random_matrix(&mut rng, d, d));
        for t in 0..d {
            let s = rng.gen_range(0.1..10.0);
            q.row_mut(t).iter_mut().for_each(|x| *x *= s);
        }
        abs_d = abs_d.max((token_energy(&energy_model(q), &h).unwrap() - 1.0).abs());
    }
    check(
        rel_a <= 1e-9 && rel_b <= 1e-9 && abs_c <= 1e-9 && abs_d <= 1e-9,
        format!("(a) {rel_a:.1e} rel, (b) {rel_b:.1e} rel, (c) {abs_c:.1e}, (d) {abs_d:.1e}"),
    )
}

fn brute_force_start(vocab: &Vocabulary, word: &str, bytes: bool) -> BTreeSet<u32> {
    let spaced = format!("{DEFAULT_MARKER}{word}");
    let first_byte = word.as_bytes().first().map(|&b| byte_token_string(b));
    let mut out = BTreeSet::new();
    for (id, tok) in vocab.tokens().iter().enumerate() {
        let id = id as u32;
        if vocab.is_byte_token(id) {
            if bytes && first_byte.as_deref() == Some(tok.as_str()) {
                out.insert(id);
            }
        } else if !tok.is_empty()
            && *tok != DEFAULT_MARKER.to_string()
            && (word.starts_with(tok.as_str()) || spaced.starts_with(tok.as_str()))
        {
            out.insert(id);
        }
    }
    out
}

fn names(vocab: &Vocabulary, ids: &[u32]) -> BTreeSet<String> {
    ids.iter()
        .map(|&i| vocab.token(i).unwrap().to_string())
        .collect()
}

fn start_sets() -> Outcome {
    let mut rng = StdRng::seed_from_u64(27);
    let alphabet: Vec<char> = "aeflow花ж é\u{2581}".chars().collect();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut toks = BTreeSet::new();
        for _ in 0..rng.gen_range(1..60) {
            let len = rng.gen_range(1..6);
            toks.insert(
                (0..len)
                    .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                    .collect::<String>(),
            );
        }
        let with_bytes = rng.gen_bool(0.5);
        let mut all: Vec<String> = if with_bytes {
            (0..=255u8).map(byte_token_string).collect()
        } else {
            Vec::new()
        };
        all.extend(toks);
        let vocab = Vocabulary::new(all, DEFAULT_MARKER).unwrap();
        let word: String = (0..rng.gen_range(1..7))
            .map(|_| alphabet[rng.gen_range(0..alphabet.len() - 1)])
            .collect();
        let got: BTreeSet<u32> = vocab
            .prefix_token_set(&word, with_bytes)
            .into_iter()
            .collect();
        if got != brute_force_start(&vocab, &word, with_bytes) {
            mismatches += 1;
        }
    }

    let m = DEFAULT_MARKER;
    let flower_vocab = Vocabulary::new(
        ["f", "fl", "flow", "ower", "o", "flowers"]
            .iter()
            .map(|s| s.to_string())
            .chain(
                ["f", "fl", "flo", "flow", "flower", "flowers", ""]
                    .iter()
                    .map(|s| format!("{m}{s}")),
            )
            .collect(),
        m,
    )
    .unwrap();
    let flower = names(
        &flower_vocab,
        &flower_vocab.prefix_token_set("flower", false),
    );
    let flower_expected: BTreeSet<String> = ["f", "fl", "flow"]
        .iter()
        .map(|s| s.to_string())
        .chain(
            ["f", "fl", "flo", "flow", "flower"]
                .iter()
                .map(|s| format!("{m}{s}")),
        )
        .collect();

    let hua_vocab = byte_vocab(&["花", "草"]);
    let hua = names(&hua_vocab, &hua_vocab.prefix_token_set("花", true));
    let hua_expected: BTreeSet<String> = ["花", "<0xE8>"].iter().map(|s| s.to_string()).collect();

    check(
        mismatches == 0 && flower == flower_expected && hua == hua_expected,
        format!("{mismatches}/1000 scan mismatches, flower {flower:?}, 花 {hua:?}"),
    )
}

fn boolq_sets() -> Outcome {
    let rows = [
        ("en", "Yes YES yes _Yes _YES _yes", "No NO no _No _NO _no"),
        ("de", "ja J j _Ja _ja _J _j", "Ne NE ne _nei _Ne _NE _ne"),
        ("fr", "OU ou O o _ou _O _o", "Non non _Non _non"),
        ("ru", "да Д д _Да _да _Д _д", "нет Не не Н н _Не _не _Н _н"),
    ];
    let marker = DEFAULT_MARKER.to_string();
    let mut tokens: Vec<String> = rows
        .iter()
        .flat_map(|(_, y, n)| y.split(' ').chain(n.split(' ')))
        .map(|t| t.replace('_', &marker))
        .collect();
    tokens.extend(["n", "N", "\u{2581}n", "\u{2581}N"].map(String::from));
    let vocab = Vocabulary::new(tokens, DEFAULT_MARKER).unwrap();
    let words: BTreeMap<String, _> = default_answer_words()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let sets = build_all_boolq_sets(&vocab, &words).unwrap();
    let show = |ids: &[u32]| -> BTreeSet<String> {
        names(&vocab, ids)
            .into_iter()
            .map(|t| t.replace(DEFAULT_MARKER, "_"))
            .collect()
    };
    let want = |s: &str| -> BTreeSet<String> { s.split(' ').map(String::from).collect() };
    let (y, n) = &sets["en"];
    let english_ok = show(&y.token_ids) == want(rows[0].1) && show(&n.token_ids) == want(rows[0].2);
    let shared: BTreeSet<String> = ["n", "N", "_n", "_N"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let n_absent = sets.values().all(|(y, n)| {
        show(&y.token_ids).is_disjoint(&shared) && show(&n.token_ids).is_disjoint(&shared)
    });
    check(
        english_ok && n_absent,
        format!(
            "en = {:?} | {:?}, shared 'n' absent = {n_absent}",
            show(&y.token_ids),
            show(&n.token_ids)
        ),
    )
}

fn delta_telescoping() -> Outcome {
    let mut rng = StdRng::seed_from_u64(29);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let (d, m, v) = (
            [8, 16][i as usize % 2],
            rng.gen_range(1..=4),
            [16, 64][(i as usize / 2) % 2],
        );
        let c = config(d, m, v, 16);
        let model = ModelBundle::new(c.clone(), ModelWeights::<f32>::random(&c, 200 + i)).unwrap();
        let tokens: Vec<u32> = (0..rng.gen_range(1..=10))
            .map(|_| rng.gen_range(0..v as u32))
            .collect();
        let ids: Vec<u32> = (0..v as u32).filter(|_| rng.gen_bool(0.3)).collect();
        let set = LanguageTokenSet::new("xx", ids.clone(), SetKind::WordStart);
        let trace = forward(&model, &tokens).unwrap();
        for pos in 0..tokens.len() {
            let mass = |layer| -> f64 {
                let dist = logit_lens(&model, &trace, layer, pos).unwrap();
                ids.iter().map(|&t| dist.probs[t as usize]).sum()
            };
            let total: f64 = sublayer_deltas(&model, &trace, pos, &set)
                .unwrap()
                .iter()
                .map(|s| s.attn + s.mlp)
                .sum();
            worst = worst.max((total - (mass(m) - mass(0))).abs());
        }
    }
    check(worst <= 1e-6, format!("max telescoping error {worst:.2e}"))
}

fn euclidean(points: &[Vec<f64>]) -> Matrix<f64> {
    let k = points.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    m
}

fn mds() -> Outcome {
    let mut rng = StdRng::seed_from_u64(30);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let k = rng.gen_range(2..=10);
        let r = rng.gen_range(1..=4.min(k - 1));
        let points: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..r).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let d = euclidean(&points);
        let emb = classical_mds(&DistanceMatrix::from_matrix(d.clone()).unwrap(), r).unwrap();
        let coords: Vec<Vec<f64>> = (0..k).map(|i| emb.coords.row(i).to_vec()).collect();
        let back = euclidean(&coords);
        for i in 0..k {
            for j in i + 1..k {
                worst = worst.max((back[(i, j)] - d[(i, j)]).abs() / d[(i, j)]);
            }
        }
    }

    // padding: same-kind pairs at the largest latent–token distance, or the override
    let dist: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..4).map(|_| rng.gen_range(0.0..9.0)).collect())
        .collect();
    let max = dist.iter().flatten().copied().fold(0.0, f64::max);
    let lat: Vec<String> = (0..3).map(|i| format!("h{i}")).collect();
    let tok: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
    let mut pad_ok = true;
    for (pad, expect) in [(None, max), (Some(2.5), 2.5)] {
        let m = build_lens_distance_matrix(&dist, lat.clone(), tok.clone(), pad).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let want = match (i < 3, j < 3) {
                    _ if i == j => 0.0,
                    (true, false) => dist[i][j - 3],
                    (false, true) => dist[j][i - 3],
                    _ => expect,
                };
                pad_ok &= m.get(i, j) == want;
            }
        }
    }
    check(
        worst < 1e-6 && pad_ok,
        format!("max relative pair error {worst:.2e}, padding rule = {pad_ok}"),
    )
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn rms(h: &[f64], eps: f64) -> Vec<f64> {
    let ms = h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64;
    h.iter().map(|x| x / (ms + eps).sqrt()).collect()
}

struct Pivot {
    model: ModelBundle<f32>,
    vocab: Vocabulary,
    /// Analytic lens probabilities of (A, B) at layers 1 and 2.
    expected: [(f64, f64); 2],
}

/// Two blocks, attention silenced. Block 1 writes direction `e1` (read out
/// as "flower"), block 2 erases it and writes `e2` (read out as "花").
fn pivot() -> Pivot {
    let vocab = byte_vocab(&["flower", "花"]);
    let (a, b) = (
        vocab.id("flower").unwrap() as usize,
        vocab.id("花").unwrap() as usize,
    );
    let v = vocab.len();
    let mut c = config(8, 2, v, 128);
    c.ffn_hidden = 4;
    let eps = c.norm_eps;
    let kappa = 5.0;

    let mut w = ModelWeights::<f32>::zeros(&c);
    for t in 0..v {
        w.tok_embeddings[(t, 0)] = 1.0;
    }
    let e0 = {
        let mut e = vec![0.0; 8];
        e[0] = 1.0;
        e
    };
    let x1 = rms(&e0, eps);
    let g1 = silu(x1[0]) * x1[0];
    let l1 = &mut w.layers[0];
    l1.w1[(0, 0)] = 1.0;
    l1.w3[(0, 0)] = 1.0;
    l1.w2[(1, 0)] = 1.0;
    let h1 = [1.0, g1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let x2 = rms(&h1, eps);
    let g2 = silu(x2[1]) * x2[1];
    let l2 = &mut w.layers[1];
    l2.w1[(0, 1)] = 1.0;
    l2.w3[(0, 1)] = 1.0;
    l2.w2[(1, 0)] = (-g1 / g2) as f32;
    l2.w2[(2, 0)] = (8.0 / g2) as f32;
    let h2 = [1.0, 0.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    w.unembedding[(a, 1)] = kappa as f32;
    w.unembedding[(b, 2)] = kappa as f32;

    // Start("flower") and Start("花") each add one byte token with logit 0.
    let probs = |z_a: f64, z_b: f64| {
        let total = z_a.exp() + z_b.exp() + (v - 2) as f64;
        ((z_a.exp() + 1.0) / total, (z_b.exp() + 1.0) / total)
    };
    let x3 = rms(&h2, eps);
    let expected = [probs(kappa * x2[1], 0.0), probs(0.0, kappa * x3[2])];
    Pivot {
        model: ModelBundle::new(c, w).unwrap(),
        vocab,
        expected,
    }
}

fn word(id: &str, pairs: &[(&str, &str)]) -> WordRecord {
    WordRecord {
        concept_id: id.into(),
        forms: pairs
            .iter()
            .map(|(l, w)| (l.to_string(), w.to_string()))
            .collect(),
        ..Default::default()
    }
}

fn pivot_crossover() -> Outcome {
    let start = Instant::now();
    let p = pivot();
    let records: Vec<WordRecord> = ["flower", "blossom", "bloom", "floret"]
        .iter()
        .map(|id| word(id, &[("en", "flower"), ("fr", "fleur"), ("zh", "花")]))
        .collect();
    let spec = TaskSpec {
        kind: TaskKind::Translation,
        src_lang: Some("fr".into()),
        dst_lang: "zh".into(),
        shots: 2,
    };
    let tracked = vec!["en".to_string(), "zh".to_string()];
    let csv_of = |threads: Option<usize>| {
        let opts = RunOptions {
            threads,
            ..RunOptions::default()
        };
        let run = run_task(
            &p.model,
            &p.vocab,
            &spec,
            records.clone(),
            &tracked,
            7,
            &opts,
        )
        .unwrap();
        let mut buf = Vec::new();
        emit_rows_csv(&run.curve.rows(), &mut buf).unwrap();
        (run.curve, buf)
    };
    let (curve, first) = csv_of(None);
    let (_, second) = csv_of(Some(1));
    let elapsed = start.elapsed();

    let (a1, b1) = (curve.prob(1, "en").unwrap(), curve.prob(1, "zh").unwrap());
    let b2 = curve.prob(2, "zh").unwrap();
    let analytic = (a1 - p.expected[0].0)
        .abs()
        .max((b2 - p.expected[1].1).abs());
    check(
        a1 > b1
            && b2 > 0.99
            && first == second
            && analytic < 1e-5
            && elapsed < Duration::from_secs(5),
        format!(
            "P_A(1) = {a1:.4} > P_B(1) = {b1:.2e}, P_B(2) = {b2:.6}, analytic gap {analytic:.1e}, \
             CSV identical = {}, {:.2?}",
            first == second,
            elapsed
        ),
    )
}

fn boolq_baseline() -> Outcome {
    let vocab = byte_vocab(&["Yes", "No", "\u{2581}Yes", "\u{2581}No"]);
    let c = config(8, 2, vocab.len(), 512);
    let mut w = ModelWeights::<f32>::zeros(&c);
    for t in 0..vocab.len() {
        w.tok_embeddings[(t, 0)] = 1.0;
    }
    w.unembedding[(vocab.id("Yes").unwrap() as usize, 0)] = 3.0;
    let model = ModelBundle::new(c, w).unwrap();

    let items: Vec<BoolqItem> = (0..50)
        .map(|i| BoolqItem {
            question: format!("is item {i} on the list"),
            passage: format!("Item {i} is described here."),
            answer: if (i * 7) % 50 < 31 {
                Answer::Yes
            } else {
                Answer::No
            },
            lang: "en".into(),
        })
        .collect();
    let words: BTreeMap<String, _> = default_answer_words()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let sets = build_all_boolq_sets(&vocab, &words).unwrap();
    let en_only: BTreeMap<_, _> = sets.into_iter().filter(|(l, _)| l == "en").collect();
    let run = run_boolq(
        &model,
        &vocab,
        &items,
        "en",
        &en_only,
        &[],
        &RunOptions::default(),
    )
    .unwrap();
    let accs: Vec<f64> = run.curve.layers.iter().map(|l| l.accuracy).collect();
    check(
        accs.iter().all(|&a| a == 0.62) && run.curve.final_accuracy == 0.62,
        format!(
            "accuracy per layer {accs:?}, final {}",
            run.curve.final_accuracy
        ),
    )
}

fn ci_arithmetic() -> Outcome {
    let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    check(
        s.mean == 2.5 && (s.half_width - 1.2652).abs() <= 1e-4,
        format!("mean {}, half-width {:.6}", s.mean, s.half_width),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("lens identity", lens_identity),
        ("entropy", entropy),
        ("token energy", token_energy_checks),
        ("start sets", start_sets),
        ("boolq sets", boolq_sets),
        ("sublayer deltas", delta_telescoping),
        ("mds", mds),
        ("pivot crossover", pivot_crossover),
        ("boolq baseline", boolq_baseline),
        ("ci arithmetic", ci_arithmetic),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
