//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use indexmap::IndexMap;
use rand::Rng as _;
use selqa_core::experiment::{
    run_selective, train_router, GammaScope, Scorer, SelectiveModels, SelectiveReport,
};
use selqa_core::features::{FeatureMode, FeatureVector, LabeledExample};
use selqa_core::forest::{read_forest, train_forest, write_forest, ForestConfig, RandomForest};
use selqa_core::qa::{Benchmark, ExpertId};
use selqa_core::rng;
use selqa_core::router::{evaluate_system, Models, Strategy, SystemReport};
use selqa_core::selective::{
    apply_policy, coverage_at_accuracy, effective_reliability, risk_coverage_auc, tune_threshold, ScoredDecision,
};
use selqa_core::simulator::{default_config, generate_benchmark, SimConfig, DATASET_IDS};

/// Tolerance on macro-averages computed from published per-dataset rows.
const MACRO_TOL: f64 = 0.05;
/// Required margin of the routed system over the best single expert, in EM points.
const SINGLE_MARGIN_POINTS: f64 = 3.0;
/// Allowed full vs. no-agreement AUC gap once agreement carries no signal, in AUC points.
const NO_SIGNAL_AUC_GAP_POINTS: f64 = 1.0;
const HELD_OUT_ACC: f64 = 0.95;
const ORACLE_SEEDS: u64 = 10;
const BRUTE_INSTANCES: usize = 1000;
const BRUTE_MAX_N: usize = 20;

struct Gate {
    failed: Vec<&'static str>,
}

impl Gate {
    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Result<String, String>) {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                println!("FAIL {name} ({secs:.1}s): {detail}");
                self.failed.push(name);
            }
        }
    }
}

fn per_dataset(row: [f64; 12]) -> IndexMap<String, f64> {
    DATASET_IDS.iter().zip(row).map(|((id, _), v)| (id.to_string(), v)).collect()
}

fn comparison_macros() -> Result<String, String> {
    let mope = [39.0, 71.8, 25.8, 37.5, 46.0, 14.0, 63.5, 80.5, 95.0, 78.9, 66.8, 72.9];
    let commonsense = [32.5, 64.0, 16.3, 31.3, 38.5, 10.8, 41.5, 72.5, 75.4, 78.4, 65.3, 68.9];
    let m = SystemReport::from_per_dataset("mope", per_dataset(mope)).map_err(|e| e.to_string())?;
    let c = SystemReport::from_per_dataset("single:commonsense", per_dataset(commonsense)).map_err(|e| e.to_string())?;
    let detail = format!("mope {:.3}, commonsense {:.3}", m.macro_average, c.macro_average);
    if (m.macro_average - 57.6).abs() <= MACRO_TOL && (c.macro_average - 49.6).abs() <= MACRO_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strategies() -> Vec<Strategy> {
    let mut v = vec![
        Strategy::Mope,
        Strategy::Majority,
        Strategy::MaxProb,
        Strategy::Random { seed: 0 },
        Strategy::QTypeOracle,
    ];
    v.extend(ExpertId::ALL.iter().map(|&e| Strategy::Single(e)));
    v
}

fn eval(b: &Benchmark, s: Strategy, f: &RandomForest) -> Result<SystemReport, String> {
    evaluate_system(b, s, s.needs_forest().then_some(f)).map_err(|e| e.to_string())
}

fn oracle_dominance() -> Result<String, String> {
    let mut checked = 0;
    for seed in 0..ORACLE_SEEDS {
        let cfg = SimConfig {
            seed,
            ..default_config()
        };
        let b = generate_benchmark(&cfg).map_err(|e| e.to_string())?;
        let f = train_router(&b, FeatureMode::Full, &ForestConfig::with_seed(seed)).map_err(|e| e.to_string())?;
        let oracle = eval(&b, Strategy::Oracle, &f)?;
        for s in strategies() {
            let r = eval(&b, s, &f)?;
            for (id, em) in &r.per_dataset_em {
                let o = oracle.per_dataset_em[id];
                if o < *em {
                    return Err(format!("seed {seed}: {s} beats oracle on {id} ({em} > {o})"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (seed, strategy, dataset) comparisons"))
}

struct Default {
    bench: Benchmark,
    full: RandomForest,
}

fn default_setup() -> Default {
    let bench = generate_benchmark(&default_config()).expect("default benchmark");
    let full = train_router(&bench, FeatureMode::Full, &ForestConfig::default()).expect("full router");
    Default { bench, full }
}

fn comparison_ordering(d: &Default) -> Result<String, String> {
    let mope = eval(&d.bench, Strategy::Mope, &d.full)?.macro_average;
    let majority = eval(&d.bench, Strategy::Majority, &d.full)?.macro_average;
    let maxprob = eval(&d.bench, Strategy::MaxProb, &d.full)?.macro_average;
    let mut best_single = f64::MIN;
    for e in ExpertId::ALL {
        best_single = best_single.max(eval(&d.bench, Strategy::Single(e), &d.full)?.macro_average);
    }
    let detail = format!(
        "mope {:.1}, best single {:.1}, majority {:.1}, maxprob {:.1}",
        100.0 * mope,
        100.0 * best_single,
        100.0 * majority,
        100.0 * maxprob
    );
    if 100.0 * (mope - best_single) >= SINGLE_MARGIN_POINTS && mope > majority && mope > maxprob {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn selective(b: &Benchmark, full: &RandomForest, seed: u64) -> Result<Vec<SelectiveReport>, String> {
    let noagr =
        train_router(b, FeatureMode::NoAgreement, &ForestConfig::with_seed(seed)).map_err(|e| e.to_string())?;
    let models = SelectiveModels {
        full: Models::Pooled(full),
        no_agreement: Models::Pooled(&noagr),
    };
    run_selective(b, &Scorer::ALL, models, GammaScope::Global)
        .map(|r| r.reports)
        .map_err(|e| e.to_string())
}

fn calibration(d: &Default) -> Result<String, String> {
    let reps = selective(&d.bench, &d.full, 0)?;
    let [maxprob, noagr, mope] = [&reps[0], &reps[1], &reps[2]];
    let mut detail = format!(
        "AUC maxprob {:.1} / no_agreement {:.1} / mope {:.1}; ER maxprob {:.1} / mope {:.1}",
        100.0 * maxprob.auc,
        100.0 * noagr.auc,
        100.0 * mope.auc,
        100.0 * maxprob.er,
        100.0 * mope.er
    );
    let direction = mope.auc < maxprob.auc && mope.er > maxprob.er && noagr.auc > mope.auc;

    let cfg = SimConfig {
        agreement_boost: 0.0,
        ..default_config()
    };
    let b0 = generate_benchmark(&cfg).map_err(|e| e.to_string())?;
    let f0 = train_router(&b0, FeatureMode::Full, &ForestConfig::default()).map_err(|e| e.to_string())?;
    let reps0 = selective(&b0, &f0, 0)?;
    let gap = 100.0 * (reps0[1].auc - reps0[2].auc).abs();
    detail.push_str(&format!("; boost 0 AUC gap {gap:.2}"));
    if direction && gap <= NO_SIGNAL_AUC_GAP_POINTS {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Rank of each decision: how many others come before it.
fn brute_ranks(ds: &[ScoredDecision]) -> Vec<usize> {
    ds.iter()
        .map(|a| {
            ds.iter()
                .filter(|b| b.score > a.score || (b.score == a.score && b.question_id < a.question_id))
                .count()
        })
        .collect()
}

fn brute_auc(ds: &[ScoredDecision]) -> f64 {
    let ranks = brute_ranks(ds);
    let n = ds.len();
    let mut total = 0.0;
    for k in 1..=n {
        let wrong = (0..n).filter(|&i| ranks[i] < k && !ds[i].correct).count();
        total += wrong as f64 / k as f64;
    }
    total / n as f64
}

fn brute_cov(ds: &[ScoredDecision], target: f64) -> f64 {
    let ranks = brute_ranks(ds);
    let n = ds.len();
    let mut best = 0;
    for k in 1..=n {
        let right = (0..n).filter(|&i| ranks[i] < k && ds[i].correct).count();
        if right as f64 / k as f64 >= target {
            best = k;
        }
    }
    best as f64 / n as f64
}

fn brute_er(ds: &[ScoredDecision], gamma: f64) -> f64 {
    let total: i64 = ds
        .iter()
        .map(|d| match (d.score >= gamma, d.correct) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => -1,
        })
        .sum();
    total as f64 / ds.len() as f64
}

fn brute_gamma(ds: &[ScoredDecision]) -> f64 {
    let mut grid: Vec<f64> = ds.iter().map(|d| d.score).collect();
    grid.push(f64::INFINITY);
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for g in grid {
        let er = brute_er(ds, g);
        if er > best.0 || (er == best.0 && g > best.1) {
            best = (er, g);
        }
    }
    best.1
}

fn selective_oracle() -> Result<String, String> {
    let mut r = rng::rng(0x5e1e);
    for inst in 0..BRUTE_INSTANCES {
        let n = r.random_range(1..=BRUTE_MAX_N);
        // A coarse score grid forces ties.
        let levels = r.random_range(1..=10u32);
        let p = r.random_range(0.0..1.0);
        let ds: Vec<ScoredDecision> = (0..n)
            .map(|i| {
                let s = f64::from(r.random_range(0..levels)) / f64::from(levels);
                ScoredDecision::new(format!("q{:02}", (i * 7) % BRUTE_MAX_N), s, r.random_bool(p))
            })
            .collect();
        let fail = |what: &str, got: f64, want: f64| Err(format!("instance {inst} {what}: {got} vs brute force {want}"));
        let auc = risk_coverage_auc(&ds).map_err(|e| e.to_string())?;
        if auc != brute_auc(&ds) {
            return fail("auc", auc, brute_auc(&ds));
        }
        for t in [0.8, 0.9] {
            let c = coverage_at_accuracy(&ds, t).map_err(|e| e.to_string())?;
            if c != brute_cov(&ds, t) {
                return fail("cov", c, brute_cov(&ds, t));
            }
        }
        let policy = tune_threshold(&ds).map_err(|e| e.to_string())?;
        if policy.gamma != brute_gamma(&ds) {
            return fail("gamma", policy.gamma, brute_gamma(&ds));
        }
        let outcomes = apply_policy(policy, &ds);
        for (o, d) in outcomes.iter().zip(&ds) {
            let want = d.score >= policy.gamma;
            if o.answered != want || o.question_id != d.question_id {
                return Err(format!("instance {inst}: apply_policy disagrees on {}", d.question_id));
            }
        }
        let er = effective_reliability(&outcomes).map_err(|e| e.to_string())?;
        if er != brute_er(&ds, policy.gamma) {
            return fail("er", er, brute_er(&ds, policy.gamma));
        }
    }
    Ok(format!("{BRUTE_INSTANCES} instances, n <= {BRUTE_MAX_N}"))
}

fn uniform_points(seed: u64, n: usize) -> Vec<LabeledExample> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..14).map(|_| r.random_range(0.0..1.0)).collect();
            let label = values[0] > 0.5;
            LabeledExample {
                features: FeatureVector::new(values, FeatureMode::QuestionOnly).unwrap(),
                label,
            }
        })
        .collect()
}

fn forest_sanity() -> Result<String, String> {
    let train = uniform_points(1, 200);
    let test = uniform_points(2, 100);
    let cfg = ForestConfig::with_seed(7);
    let f = train_forest(&train, &cfg).map_err(|e| e.to_string())?;
    let mut hits = 0;
    for ex in &test {
        let s = f.predict_score(&ex.features).map_err(|e| e.to_string())?;
        hits += usize::from((s >= 0.5) == ex.label);
    }
    let acc = hits as f64 / test.len() as f64;
    let bytes = write_forest(&f).map_err(|e| e.to_string())?;
    let again = write_forest(&train_forest(&train, &cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let loaded = read_forest(&bytes).map_err(|e| e.to_string())?;
    let preserved = test
        .iter()
        .all(|ex| f.predict_score(&ex.features).unwrap().to_bits() == loaded.predict_score(&ex.features).unwrap().to_bits());
    let detail = format!("held-out accuracy {acc:.2}, identical bytes {}, round trip {preserved}", bytes == again);
    if acc >= HELD_OUT_ACC && bytes == again && preserved {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn question_only_ordering(d: &Default) -> Result<String, String> {
    let qo = train_router(&d.bench, FeatureMode::QuestionOnly, &ForestConfig::default()).map_err(|e| e.to_string())?;
    let random = eval(&d.bench, Strategy::Random { seed: 0 }, &d.full)?.macro_average;
    let question_only = eval(&d.bench, Strategy::Mope, &qo)?.macro_average;
    let full = eval(&d.bench, Strategy::Mope, &d.full)?.macro_average;
    let detail = format!(
        "random {:.1} < question_only {:.1} < full {:.1}",
        100.0 * random,
        100.0 * question_only,
        100.0 * full
    );
    if random < question_only && question_only < full {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let mut gate = Gate { failed: Vec::new() };
    gate.check("metric arithmetic vs published macro-averages", comparison_macros);
    gate.check("oracle dominance over 10 seeds", oracle_dominance);
    let d = default_setup();
    gate.check("synthetic ensemble ordering", || comparison_ordering(&d));
    gate.check("calibration ablation direction", || calibration(&d));
    gate.check("selective metrics vs brute force", selective_oracle);
    gate.check("forest sanity", forest_sanity);
    gate.check("question-only ordering", || question_only_ordering(&d));
    if !gate.failed.is_empty() {
        println!("{} criteria failed: {}", gate.failed.len(), gate.failed.join(", "));
        std::process::exit(1);
    }
    println!("all criteria passed");
}
