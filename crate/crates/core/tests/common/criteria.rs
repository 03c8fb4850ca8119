//! Acceptance checks. Each returns a one-line detail on success and the
//! first violation on failure.

use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use serde_json::Value;
use vidfuse::ensemble::{filter_outlier_avg, filter_outlier_avg_with, remove_lowest, FilterStrategy, Summary, SummarySet};
use vidfuse::metrics::{mean_iou, recall_at_1, span_iou, spanset_iou, QueryResult};
use vidfuse::providers::{cache_load, cache_store, CacheFile, Embedder, HttpEmbedder, ProviderConfig};
use vidfuse::retrieval::FrameEmbeddingTrack;
use vidfuse::span::{Span, SpanSet};
use vidfuse::vector::{cosine_similarity, Embedding};
use vidfuse::{cli, Error};

use super::fixtures::{ablation_fixture, read_lines, synthetic_e2e, E2E_DURATION, E2E_GT_FRAMES};
use super::oracles::{self, random_unit, random_vec};
use super::rng;
use super::server::{embeddings_body, MockServer, Reply};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn track_of(rng: &mut rand_chacha::ChaCha8Rng, n: usize, dim: usize) -> FrameEmbeddingTrack {
    let vectors = (0..n).map(|_| Embedding::new(random_vec(rng, dim)).unwrap()).collect();
    FrameEmbeddingTrack::from_vectors("v", 2.0, n as f64 * 2.0, vectors).unwrap()
}

fn values(track: &FrameEmbeddingTrack) -> Vec<Vec<f64>> {
    track.frames().iter().map(|f| f.embedding.values().to_vec()).collect()
}

/// Random disjoint-or-not spans inside [0, horizon).
pub fn random_spans(r: &mut rand_chacha::ChaCha8Rng, count: usize, horizon: f64) -> Vec<(f64, f64)> {
    (0..count)
        .map(|_| {
            let s = r.random_range(0.0..horizon - 1.0);
            let e = r.random_range(s + 0.01..(s + 30.0).min(horizon));
            (s, e)
        })
        .collect()
}

fn spanset(pairs: &[(f64, f64)]) -> SpanSet {
    SpanSet::from_pairs(pairs).unwrap()
}

const INSTANCES: usize = 1000;

pub fn oracle_suite() -> Outcome {
    let started = Instant::now();
    let mut r = rng(0x5eed_0001);

    for i in 0..INSTANCES {
        let dim = r.random_range(2..64);
        let (a, b) = (random_vec(&mut r, dim), random_vec(&mut r, dim));
        let got = cosine_similarity(&Embedding::new(a.clone()).unwrap(), &Embedding::new(b.clone()).unwrap()).unwrap();
        let want = oracles::cosine(&a, &b);
        ensure((got - want).abs() <= 1e-9, || format!("cosine #{i}: {got} vs {want}"))?;
    }

    for i in 0..INSTANCES {
        let dim = r.random_range(2..32);
        let n = r.random_range(1..40);
        let track = track_of(&mut r, n, dim);
        let s = random_vec(&mut r, dim);
        let summary = Summary::new("e", "t").unwrap().with_embedding(Embedding::new(s.clone()).unwrap());
        let got = vidfuse::ensemble::average_expert_score(&summary, &track).unwrap();
        let want = oracles::average_score(&s, &values(&track));
        ensure((got - want).abs() <= 1e-9, || format!("average score #{i}: {got} vs {want}"))?;
    }

    for i in 0..INSTANCES {
        let (a, b) = (random_spans(&mut r, 5, 100.0), random_spans(&mut r, 5, 100.0));
        let got = spanset_iou(&spanset(&a), &spanset(&b));
        let grid = oracles::grid_iou(&a, &b, 100.0);
        let exact = oracles::segment_iou(&a, &b);
        ensure((got - grid).abs() <= 2e-3, || format!("spanset iou #{i}: {got} vs grid {grid}"))?;
        ensure((got - exact).abs() <= 1e-9, || format!("spanset iou #{i}: {got} vs exact {exact}"))?;
    }

    for i in 0..INSTANCES {
        let batch = random_batch(&mut r, 20);
        let t = r.random_range(0.05..1.0);
        let got = recall_at_1(&batch.results, t).unwrap();
        let want = oracles::recall_count(&batch.primaries, &batch.gts, t);
        ensure(got == want, || format!("recall@{t} #{i}: {got} vs {want}"))?;

        let got = mean_iou(&batch.results).unwrap();
        let per: Vec<f64> = batch.preds.iter().zip(&batch.gts).map(|(p, g)| oracles::segment_iou(p, g)).collect();
        let want = oracles::mean(&per);
        ensure((got - want).abs() <= 1e-12, || format!("mean iou #{i}: {got} vs {want}"))?;
    }

    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("5 x {INSTANCES} instances in {:.1}s", elapsed.as_secs_f64()))
}

pub struct Batch {
    pub results: Vec<QueryResult>,
    pub preds: Vec<Vec<(f64, f64)>>,
    pub primaries: Vec<(f64, f64)>,
    pub gts: Vec<Vec<(f64, f64)>>,
}

/// Random queries; each prediction's primary span is one of its spans.
pub fn random_batch(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Batch {
    let mut b = Batch {
        results: Vec::new(),
        preds: Vec::new(),
        primaries: Vec::new(),
        gts: Vec::new(),
    };
    for q in 0..n {
        let k = r.random_range(1..4);
        let pred = random_spans(r, k, 60.0);
        let gt_count = r.random_range(1..3);
        let gt = random_spans(r, gt_count, 60.0);
        let pred_set = spanset(&pred);
        let primary = pred_set.spans()[r.random_range(0..pred_set.len())];
        b.results.push(QueryResult {
            query_id: format!("q{q:03}"),
            predicted: pred_set.clone(),
            primary,
            ground_truth: spanset(&gt),
        });
        b.primaries.push((primary.start(), primary.end()));
        b.preds.push(pred);
        b.gts.push(spanset(&gt).spans().iter().map(|s| (s.start(), s.end())).collect());
    }
    b
}

pub fn outlier_filter_equivalence() -> Outcome {
    let mut r = rng(0x5eed_0002);
    type Transform = (&'static str, fn(f64) -> f64);
    let transforms: [Transform; 4] = [
        ("exp", f64::exp),
        ("cube", |x| x * x * x),
        ("atan", f64::atan),
        ("affine", |x| 2.5 * x + 7.0),
    ];
    let mut agreed = 0;
    for i in 0..500 {
        let dim = r.random_range(3..24);
        let n = r.random_range(5..=50);
        let track = track_of(&mut r, n, dim);
        let frames = values(&track);
        let raw: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut r, dim)).collect();
        let set = SummarySet::new(
            raw.iter()
                .enumerate()
                .map(|(j, v)| Summary::new(format!("e{j}"), format!("text {j}")).unwrap().with_embedding(Embedding::new(v.clone()).unwrap()))
                .collect(),
        )
        .unwrap();

        let scores: Vec<f64> = raw.iter().map(|s| oracles::average_score(s, &frames)).collect();
        let want = oracles::exhaustive_argmin(&scores);
        let got = filter_outlier_avg(&set, &track).unwrap();
        ensure(got.removed_index == Some(want), || format!("instance {i}: removed {:?}, oracle {want}", got.removed_index))?;

        for (name, g) in transforms {
            let mapped: Vec<f64> = got.scores.iter().map(|&x| g(x)).collect();
            let out = remove_lowest(&set, mapped, FilterStrategy::AvgClip).unwrap();
            ensure(out.removed_index == Some(want), || format!("instance {i}: {name} on scores moved removal"))?;
        }
        let affine = filter_outlier_avg_with(&set, &track, |a, b| Ok(3.0 * cosine_similarity(a, b)? + 1.0)).unwrap();
        ensure(affine.removed_index == Some(want), || format!("instance {i}: affine similarity moved removal"))?;
        agreed += 1;
    }
    Ok(format!("{agreed}/500 removals agree; invariant under 4 score transforms and affine similarity"))
}

fn span_pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..90.0, 0.01f64..20.0).prop_map(|(s, l)| (s, s + l)), 0..8)
}

fn nonempty_pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..90.0, 0.01f64..20.0).prop_map(|(s, l)| (s, s + l)), 1..8)
}

fn check(cond: bool, msg: &str) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg.to_string()))
    }
}

fn results_of(preds: &[Vec<(f64, f64)>], gts: &[Vec<(f64, f64)>], delta: f64) -> Vec<QueryResult> {
    preds
        .iter()
        .zip(gts)
        .enumerate()
        .map(|(i, (p, g))| {
            let shift = |v: &[(f64, f64)]| v.iter().map(|&(s, e)| (s + delta, e + delta)).collect::<Vec<_>>();
            let predicted = spanset(&shift(p));
            QueryResult {
                query_id: format!("q{i}"),
                primary: predicted.spans()[0],
                predicted,
                ground_truth: spanset(&shift(g)),
            }
        })
        .collect()
}

pub const PROPTEST_CASES: u32 = 512;

pub fn interval_algebra() -> Outcome {
    let run = |name: &str, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| -> Result<(), String> {
        let mut runner = TestRunner::new(Config {
            cases: PROPTEST_CASES,
            failure_persistence: None,
            ..Config::default()
        });
        f(&mut runner).map_err(|e| format!("{name}: {e}"))
    };

    run("normalization idempotence", &|runner| {
        runner
            .run(&span_pairs(), |pairs| {
                let once = spanset(&pairs);
                let twice = SpanSet::new(once.spans().to_vec());
                check(once == twice, "renormalizing changed the set")?;
                check(once.spans().windows(2).all(|w| w[0].end() < w[1].start()), "spans not disjoint and sorted")
            })
            .map_err(|e| e.to_string())
    })?;

    run("iou symmetry, bounds, identity", &|runner| {
        runner
            .run(&(nonempty_pairs(), span_pairs()), |(a, b)| {
                let (sa, sb) = (spanset(&a), spanset(&b));
                let ab = spanset_iou(&sa, &sb);
                check((ab - spanset_iou(&sb, &sa)).abs() <= 1e-12, "spanset iou not symmetric")?;
                check((0.0..=1.0).contains(&ab), "spanset iou out of [0, 1]")?;
                check((spanset_iou(&sa, &sa) - 1.0).abs() <= 1e-12, "self iou is not 1")?;
                let (x, y) = (sa.spans()[0], Span::new(a[0].0, a[0].1).unwrap());
                let xy = span_iou(&x, &y);
                check((xy - span_iou(&y, &x)).abs() <= 1e-12 && (0.0..=1.0).contains(&xy), "span iou")?;
                check(span_iou(&y, &y) == 1.0, "span self iou")
            })
            .map_err(|e| e.to_string())
    })?;

    let batch = || prop::collection::vec((nonempty_pairs(), nonempty_pairs()), 1..12);

    run("recall monotone in threshold", &|runner| {
        runner
            .run(&(batch(), 0.01f64..1.0, 0.01f64..1.0), |(rows, t1, t2)| {
                let (p, g): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
                let res = results_of(&p, &g, 0.0);
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                check(recall_at_1(&res, lo).unwrap() >= recall_at_1(&res, hi).unwrap(), "recall rose with threshold")
            })
            .map_err(|e| e.to_string())
    })?;

    run("translation invariance", &|runner| {
        runner
            .run(&(batch(), -0.0f64..500.0, 0.05f64..1.0), |(rows, delta, t)| {
                let (p, g): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
                let (a, b) = (results_of(&p, &g, 0.0), results_of(&p, &g, delta));
                let dm = (mean_iou(&a).unwrap() - mean_iou(&b).unwrap()).abs();
                check(dm <= 1e-9, "mean iou moved under translation")?;
                for (x, y) in a.iter().zip(&b) {
                    check((x.union_iou() - y.union_iou()).abs() <= 1e-9, "spanset iou moved")?;
                    check((x.primary_iou() - y.primary_iou()).abs() <= 1e-9, "primary iou moved")?;
                }
                // Exact threshold ties can flip under rounding; compare away from them.
                let near = a.iter().any(|x| (x.primary_iou() - t).abs() <= 1e-9);
                check(near || recall_at_1(&a, t).unwrap() == recall_at_1(&b, t).unwrap(), "recall moved")
            })
            .map_err(|e| e.to_string())
    })?;

    Ok(format!("4 properties x {PROPTEST_CASES} cases, no failures"))
}

/// Parses a `pipeline` command line and runs it without printing reports.
fn exit_code(args: Vec<String>, providers: &dyn vidfuse::pipeline::ProviderFactory) -> i32 {
    use clap::Parser;
    let cli::Command::Pipeline { common, force } = cli::Cli::parse_from(args).command else {
        panic!("expected a pipeline command");
    };
    let runs = common
        .resolve()
        .and_then(|cfg| vidfuse::pipeline::run_pipeline(&cfg, providers, force));
    match runs {
        Ok(runs) if runs.iter().any(|r| r.is_partial()) => cli::EXIT_PARTIAL,
        Ok(_) => cli::EXIT_OK,
        Err(_) => cli::EXIT_FATAL,
    }
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn synthetic_end_to_end() -> Outcome {
    let started = Instant::now();
    let fx = synthetic_e2e(0x5eed_0004);
    let code = exit_code(fx.ws.args("pipeline", &["--parallelism", "4"]), &fx.providers);
    ensure(code == 0, || format!("pipeline exit code {code}"))?;

    // Brute-force expected predictions from the stored frames.
    let preds = read_lines(&fx.ws.out_file("predictions.jsonl"));
    ensure(preds.len() == fx.videos.len(), || format!("{} predictions", preds.len()))?;
    let mut ious = Vec::new();
    let mut hits = 0;
    for (v, p) in fx.videos.iter().zip(&preds) {
        ensure(p["video_id"] == v.id.as_str(), || format!("prediction order at {}", v.id))?;
        let scores: Vec<f64> = v.frames.iter().map(|f| oracles::cosine(&v.fused_vec, f)).collect();
        let order = oracles::selection_order(&scores);
        let k = ((0.15 * v.frames.len() as f64) - 1e-9).ceil() as usize;
        let want = oracles::frames_to_spans(&order[..k], 2.0, E2E_DURATION, 0);
        let got: Vec<(f64, f64)> = serde_json::from_value::<Vec<[f64; 2]>>(p["predicted"].clone())
            .unwrap()
            .into_iter()
            .map(|[s, e]| (s, e))
            .collect();
        ensure(got == want, || format!("{}: predicted {got:?}, oracle {want:?}", v.id))?;
        ensure(p["k"] == k, || format!("{}: k {}", v.id, p["k"]))?;
        let iou = oracles::segment_iou(&want, &[v.gt]);
        let best = order[0];
        let primary = want.iter().find(|s| s.0 <= best as f64 * 2.0 && (best as f64 * 2.0) < s.1).copied().unwrap();
        hits += (oracles::interval_iou(primary, v.gt) >= 0.5) as usize;
        ious.push(iou);
    }
    let want_miou = oracles::mean(&ious);
    let want_r05 = hits as f64 / fx.videos.len() as f64;

    let rep = report(&fx.ws.out_file("report.json"));
    let miou = rep["miou"].as_f64().unwrap();
    let r05 = rep["recall"]["0.5"].as_f64().unwrap();
    ensure((miou - want_miou).abs() <= 1e-9, || format!("report miou {miou}, oracle {want_miou}"))?;
    ensure((r05 - want_r05).abs() <= 1e-12, || format!("report R@0.5 {r05}, oracle {want_r05}"))?;
    ensure(miou >= 0.9, || format!("mIoU {miou:.4} < 0.9"))?;
    ensure(r05 == 1.0, || format!("R@0.5 {r05:.4} != 1"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} videos, {E2E_GT_FRAMES}-frame windows: mIoU {miou:.4}, R@0.5 {r05:.4}, {:.1}s",
        fx.videos.len(),
        elapsed.as_secs_f64()
    ))
}

pub fn fast_provider(url: &str) -> ProviderConfig {
    ProviderConfig {
        timeout_sec: 2.0,
        backoff_base_sec: 0.01,
        backoff_cap_sec: 0.05,
        ..ProviderConfig::new(url, "mock-embed")
    }
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text {i}")).collect()
}

/// Deterministic vectors for `texts(n)`: input i is the basis vector e_i.
fn basis(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect()
}

pub fn provider_robustness() -> Outcome {
    // Retry through two 429s.
    let srv = MockServer::start(|n, _| if n < 2 { Reply::status(429) } else { Reply::json(embeddings_body(&basis(2), &[0, 1])) });
    let out = HttpEmbedder::new(fast_provider(&srv.url)).unwrap().embed_texts(&texts(2));
    ensure(out.is_ok() && srv.hits() == 3, || format!("429 retry: {out:?} after {} hits", srv.hits()))?;

    // A timed-out attempt is retried.
    let srv = MockServer::start(|n, _| {
        let r = Reply::json(embeddings_body(&basis(1), &[0]));
        if n == 0 {
            r.after(Duration::from_millis(800))
        } else {
            r
        }
    });
    let cfg = ProviderConfig {
        timeout_sec: 0.3,
        ..fast_provider(&srv.url)
    };
    let out = HttpEmbedder::new(cfg).unwrap().embed_texts(&texts(1));
    ensure(out.is_ok() && srv.hits() == 2, || format!("timeout retry: {out:?} after {} hits", srv.hits()))?;

    // Persistent 503 gives up after max_retries + 1 attempts.
    let srv = MockServer::start(|_, _| Reply::status(503));
    let out = HttpEmbedder::new(fast_provider(&srv.url)).unwrap().embed_texts(&texts(1));
    ensure(
        matches!(out, Err(Error::ProviderUnavailable { attempts: 4, .. })) && srv.hits() == 4,
        || format!("503 exhaustion: {out:?} after {} hits", srv.hits()),
    )?;

    // Shuffled indices come back in input order.
    let vecs = basis(6);
    let srv = MockServer::start(move |_, _| Reply::json(embeddings_body(&basis(6), &[3, 0, 5, 1, 4, 2])));
    let out = HttpEmbedder::new(fast_provider(&srv.url)).unwrap().embed_texts(&texts(6)).map_err(|e| e.to_string())?;
    ensure(out.iter().zip(&vecs).all(|(e, v)| e.values() == v.as_slice()), || "order not preserved".into())?;

    // Malformed bodies are rejected without retrying.
    for (what, body) in [
        ("count", embeddings_body(&basis(2), &[0, 1]).to_string()),
        ("non-json", "<html>oops</html>".to_string()),
        ("shape", r#"{"data": [{"index": 0}]}"#.to_string()),
    ] {
        let srv = MockServer::start(move |_, _| Reply::raw(&body));
        let out = HttpEmbedder::new(fast_provider(&srv.url)).unwrap().embed_texts(&texts(3));
        ensure(
            matches!(out, Err(Error::MalformedResponse(_))) && srv.hits() == 1,
            || format!("malformed {what}: {out:?} after {} hits", srv.hits()),
        )?;
    }

    // Cache: byte-identical round trip and detection of every corruption tried.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(0x5eed_0005);
    let vectors = (0..100).map(|_| Embedding::new(random_unit(&mut r, 512)).unwrap()).collect();
    let track = FrameEmbeddingTrack::from_vectors("big", 2.0, 200.0, vectors).unwrap().to_storage_precision().unwrap();
    let path = dir.path().join("big.mvs");
    cache_store(&track, "mock-clip", &path).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&path).unwrap();
    let loaded = cache_load(&path).map_err(|e| e.to_string())?;
    ensure(loaded == track, || "round trip changed the track".into())?;
    let again = CacheFile::new(loaded, "mock-clip").encode().unwrap();
    ensure(again == bytes, || "re-encoding is not byte-identical".into())?;

    let mut flips = 0;
    let small = small_cache_bytes();
    for at in 0..small.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut b = small.clone();
            b[at] ^= mask;
            ensure(CacheFile::decode(&b, Path::new("x")).is_err(), || format!("flip {mask:#x} at {at} loaded"))?;
            flips += 1;
        }
    }
    for _ in 0..500 {
        let at = r.random_range(0..bytes.len());
        let mut b = bytes.clone();
        b[at] ^= 1 << r.random_range(0..8);
        ensure(CacheFile::decode(&b, Path::new("x")).is_err(), || format!("flip at {at} of large cache loaded"))?;
        flips += 1;
    }
    let mut future = small.clone();
    future[4..8].copy_from_slice(&2u32.to_le_bytes());
    let err = CacheFile::decode(&future, Path::new("x")).unwrap_err();
    ensure(
        matches!(err, Error::SchemaMismatch { found: 2, supported: 1 }) && err.to_string().contains('2'),
        || format!("future version gave {err}"),
    )?;

    Ok(format!("retry, timeout, exhaustion, ordering, 3 malformed shapes, cache identity, {flips} corruptions detected"))
}

pub fn small_cache_bytes() -> Vec<u8> {
    let mut r = rng(0x5eed_0006);
    let vectors = (0..10).map(|_| Embedding::new(random_unit(&mut r, 8)).unwrap()).collect();
    let track = FrameEmbeddingTrack::from_vectors("small", 2.0, 20.0, vectors).unwrap();
    CacheFile::new(track, "m").encode().unwrap()
}

pub fn ablation_direction() -> Outcome {
    let (ws, providers) = ablation_fixture(0x5eed_0007);
    let mut miou = Vec::new();
    for filter in ["none", "avg_clip"] {
        let out = ws.out.join(filter);
        let mut args = ws.args("pipeline", &["--filter", filter]);
        let at = args.iter().position(|a| a == "--out-dir").unwrap();
        args[at + 1] = out.display().to_string();
        let code = exit_code(args, &providers);
        ensure(code == 0, || format!("--filter {filter}: exit code {code}"))?;
        miou.push(report(&out.join("report.json"))["miou"].as_f64().unwrap());
    }
    let (off, on) = (miou[0], miou[1]);
    ensure(on > off, || format!("filter on {on:.4} not above filter off {off:.4}"))?;
    Ok(format!("mIoU with filter {on:.4} > without {off:.4}"))
}
