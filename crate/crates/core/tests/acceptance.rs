//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Structural criteria (1-4, 9, 10) must hold and fail the target otherwise.
//! The learning comparisons (5-8) are reported; set `ACCEPTANCE_STRICT=1`
//! to make them fail the target too.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use common::{kernel, labeled, micro_gtnp, oracle};
use hlsbench::gtnp::{GtnpConfig, GtnpModel, Sequence};
use hlsbench::kernel::{build_design_space, default_config, enumerate_configs};
use hlsbench::nn::{Dropout, Tape};
use hlsbench::oracle::{run_dse, DseStrategy, LabeledDesign};
use hlsbench::surrogate::{
    build_hybrid_dataset, train_ensemble, Ensemble, EnsembleConfig, GnnConfig, GpPrior, HybridSpec, ProgramData, WeakSource,
};
use hlsbench::synthgen::{generate_corpus, GenSpec, DOMAINS};
use hlsbench::train::{best_at_k, evaluate_fewshot, pretrain, FineTuned, TrainConfig};
use hlsbench::workbench::{ExperimentConfig, Stage, Workbench};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const CONTEXT: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sequence(p: &ProgramData, order: &[usize], m: usize) -> Sequence {
    let refs: Vec<&LabeledDesign> = order.iter().map(|&i| &p.designs[i]).collect();
    Sequence::from_designs(&p.kernel, &refs, m).unwrap()
}

fn permutation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 100 {
        let seed: u64 = rng.random();
        let p = labeled(kernel(seed, rng.random_range(0..DOMAINS.len()), (1, 3)), 16, seed);
        if p.designs.len() < 5 {
            continue;
        }
        pairs += 1;
        let n = p.designs.len();
        let m = rng.random_range(2..n - 2);
        let model = GtnpModel::new(micro_gtnp(8, rng.random_range(1..=2), rng.random_range(1..=2)), seed).unwrap();
        let ident: Vec<usize> = (0..n).collect();
        let base = model.predict(&sequence(&p, &ident, m)).unwrap();

        let mut ctx: Vec<usize> = (0..m).collect();
        ctx.shuffle(&mut rng);
        let mut tperm: Vec<usize> = (m..n).collect();
        tperm.shuffle(&mut rng);
        let order: Vec<usize> = ctx.iter().chain(&tperm).copied().collect();
        let out = model.predict(&sequence(&p, &order, m)).unwrap();
        for (j, &i) in tperm.iter().enumerate() {
            worst = worst.max((out[j] - base[i - m]).abs());
        }

        let drop = rng.random_range(m..n);
        let kept: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
        if kept.len() > m {
            let out = model.predict(&sequence(&p, &kept, m)).unwrap();
            for (j, &i) in kept[m..].iter().enumerate() {
                worst = worst.max((out[j] - base[i - m]).abs());
            }
        }
    }
    outcome(worst <= 1e-5, format!("100 pairs, max deviation {worst:.2e}"))
}

fn gradient_check() -> Outcome {
    let p = labeled(kernel(7, 2, (2, 2)), 9, 7);
    let order: Vec<usize> = (0..p.designs.len()).collect();
    let s = sequence(&p, &order, 4);
    let mut model = GtnpModel::new(micro_gtnp(8, 1, 1), 3).unwrap();
    let eval = |m: &GtnpModel| {
        let mut t = Tape::new();
        let l = m.batch_loss(&mut t, &[&s], &mut Dropout::Off).unwrap();
        (t.scalar(l), t.backward(l))
    };
    let (_, grads) = eval(&model);
    let h = 1e-4;
    let (mut ok, mut total) = (0usize, 0usize);
    for (id, g) in &grads {
        for idx in ndarray::indices(model.store.get(*id).raw_dim()) {
            let orig = model.store.get(*id)[idx];
            model.store.get_mut(*id)[idx] = orig + h;
            let up = eval(&model).0;
            model.store.get_mut(*id)[idx] = orig - h;
            let down = eval(&model).0;
            model.store.get_mut(*id)[idx] = orig;
            let num = (up - down) / (2.0 * h);
            let diff = (num - g[idx]).abs();
            total += 1;
            if diff <= 1e-3 * num.abs().max(g[idx].abs()) || diff < 1e-9 {
                ok += 1;
            }
        }
    }
    outcome(ok as f64 >= 0.99 * total as f64, format!("{ok}/{total} parameters within 1e-3"))
}

fn dse_and_best_at_k() -> Outcome {
    let o = oracle();
    let mut checked = 0;
    let mut mismatches = 0;
    let mut seed = 0u64;
    while checked < 20 {
        seed += 1;
        let k = kernel(seed, seed as usize, (1, 2));
        let s = build_design_space(&k);
        if s.size() > 200 {
            continue;
        }
        checked += 1;
        let found = run_dse(&o, &k, 200, DseStrategy::Exhaustive, seed)
            .unwrap()
            .iter()
            .filter(|d| d.valid)
            .map(|d| d.latency_cycles as u64)
            .min();
        let brute = enumerate_configs(&s, None, 0)
            .iter()
            .map(|c| o.evaluate(&k, c).unwrap())
            .filter(|r| r.valid)
            .map(|r| r.latency_cycles)
            .min();
        mismatches += usize::from(found != brute);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut oracle_misses, mut monotone_violations, mut instances) = (0, 0, 0);
    while instances < 50 {
        let seed: u64 = rng.random();
        let p = labeled(kernel(seed, instances, (1, 3)), 40, seed);
        let base = p.base_latency as f64;
        let ys: Vec<f64> = p.designs.iter().map(|d| d.y).collect();
        let top = best_at_k("k", &ys, &p.designs, 1, 0.8, base).unwrap();
        if top.substituted {
            continue;
        }
        instances += 1;
        oracle_misses += usize::from(top.best_latency != top.ideal_latency);
        let preds: Vec<f64> = ys.iter().map(|y| y + rng.random_range(-2.0..2.0)).collect();
        let mut prev = f64::INFINITY;
        for kk in 1..=p.designs.len() {
            let e = best_at_k("k", &preds, &p.designs, kk, 0.8, base).unwrap();
            monotone_violations += usize::from(e.best_latency > prev);
            prev = e.best_latency;
        }
    }
    outcome(
        mismatches == 0 && oracle_misses == 0 && monotone_violations == 0,
        format!("{mismatches}/20 DSE mismatches, {oracle_misses}/50 oracle best@1 misses, {monotone_violations} monotonicity violations"),
    )
}

fn parallel_monotonicity() -> Outcome {
    let o = oracle();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut triples, mut violations) = (0, 0);
    while triples < 1000 {
        let seed: u64 = rng.random();
        let k = kernel(seed, rng.random_range(0..DOMAINS.len()), (1, 4));
        let s = build_design_space(&k);
        let c = enumerate_configs(&s, Some(1), seed).remove(0);
        let l = rng.random_range(0..k.num_loops());
        let cands = &s.per_loop[l].parallel_candidates;
        let pos = cands.iter().position(|&p| p == c.per_loop[l].parallel_factor).unwrap();
        let Some(&next) = cands.get(pos + 1) else { continue };
        triples += 1;
        let mut bumped = c.clone();
        bumped.per_loop[l].parallel_factor = next;
        let (a, b) = (o.evaluate(&k, &c).unwrap(), o.evaluate(&k, &bumped).unwrap());
        let resources_drop = a.resources.as_array().iter().zip(b.resources.as_array()).any(|(x, y)| y < *x);
        violations += usize::from(b.latency_cycles > a.latency_cycles || resources_drop);
    }
    outcome(violations == 0, format!("{violations} violations in {triples} triples"))
}

fn substitution_rule() -> Outcome {
    let p = labeled(kernel(9, 4, (2, 3)), 30, 9);
    let base = oracle().base_latency(&p.kernel) as f64;
    let preds: Vec<f64> = p.designs.iter().map(|d| d.y).collect();
    let e = best_at_k(&p.kernel.id, &preds, &p.designs, 5, 0.0, base).unwrap();
    let default = oracle()
        .evaluate(&p.kernel, &default_config(&build_design_space(&p.kernel)))
        .unwrap();
    outcome(
        e.substituted && e.best_latency == base && base == default.latency_cycles as f64,
        format!("reported {} for default {base}, flag {}", e.best_latency, e.substituted),
    )
}

const PIPELINE: &str = r#"
[corpus]
programs = 6
num_loops = [1, 2]
[dse]
budget = 24
[ensemble]
members = 2
epochs = 2
gnn = { hidden = 8, layers = 1 }
[weaklabel]
l = 4
k = 10
functions = 2
[model]
d_model = 8
layers = 1
heads = 2
ff = 8
max_seq_len = 32
gnn = { hidden = 8, layers = 1 }
[train]
preset = "Ice-H-FT"
steps = 3
batch = 2
seq_len = 12
finetune_steps = 2
[eval]
context_size = 8
test_fraction = 0.34
seeds = [1, 2]
"#;

fn pipeline_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csvs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let wb = Workbench::new(ExperimentConfig::from_toml_str(PIPELINE).unwrap(), Some(5), None, out.clone()).unwrap();
            wb.run_all(&Stage::ALL).unwrap();
            std::fs::read(out.join("eval.csv")).unwrap()
        })
        .collect();
    outcome(
        csvs[0] == csvs[1] && !csvs[0].is_empty(),
        format!("eval.csv {} bytes, identical {}", csvs[0].len(), csvs[0] == csvs[1]),
    )
}

/// Shared learning setup: a 30-program corpus, the first 18 labeled with at
/// most 100 designs each, six of those held out for evaluation.
struct Bench {
    train: Vec<ProgramData>,
    test: Vec<ProgramData>,
    ensemble: Ensemble,
    model: GtnpConfig,
    cfg: TrainConfig,
}

fn bench() -> Bench {
    {
        let o = oracle();
        let domains: Vec<&str> = DOMAINS.iter().map(|(d, _)| *d).collect();
        let kernels = generate_corpus(
            &GenSpec {
                seed: 11,
                num_loops: (1, 3),
                ..GenSpec::default()
            },
            &domains,
            30,
        )
        .unwrap();
        let programs: Vec<ProgramData> = kernels
            .into_iter()
            .enumerate()
            .map(|(i, k)| ProgramData {
                base_latency: o.base_latency(&k),
                designs: if i < 18 {
                    run_dse(&o, &k, 100, DseStrategy::Random, i as u64).unwrap()
                } else {
                    vec![]
                },
                kernel: k,
            })
            .collect();
        let gnn = GnnConfig {
            hidden: 32,
            layers: 2,
            dropout: 0.1,
        };
        let train = programs[6..].to_vec();
        let ensemble = train_ensemble(
            &train,
            &EnsembleConfig {
                members: 8,
                epochs: 20,
                gnn: gnn.clone(),
                ..EnsembleConfig::default()
            },
        )
        .unwrap();
        Bench {
            test: programs[..6].to_vec(),
            train,
            ensemble,
            model: GtnpConfig {
                gnn,
                d_model: 32,
                layers: 2,
                heads: 4,
                ff: 64,
                max_seq_len: 128,
                ..GtnpConfig::default()
            },
            cfg: TrainConfig {
                steps: 500,
                batch: 8,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy)]
enum Weak {
    None,
    Ensemble(usize),
    Gp,
}

/// Few-shot geomean MSE of a model pretrained with the given weak source
/// and ratio; optionally fine-tuned per program before predicting.
fn run(b: &Bench, weak: Weak, ratio: f64, seed: u64, finetune: bool) -> (f64, Option<f64>) {
    let (source, nf) = match weak {
        Weak::None => (None, 1),
        Weak::Ensemble(nf) => (Some(WeakSource::Functions(b.ensemble.spawn_functions(nf, seed).unwrap())), nf),
        Weak::Gp => (
            Some(WeakSource::Gp {
                prior: GpPrior::default(),
                functions: 8,
            }),
            8,
        ),
    };
    let ds = build_hybrid_dataset(
        &b.train,
        source.as_ref(),
        &HybridSpec {
            l: 24 * nf,
            k: 60,
            ratio,
            seed,
        },
    )
    .unwrap();
    let cfg = TrainConfig { seed, ..b.cfg.clone() };
    let model = pretrain(&cfg, &b.model, &ds).unwrap().model;
    let plain = evaluate_fewshot(&model, &b.test, CONTEXT, &SEEDS).unwrap().geomean;
    let tuned = finetune.then(|| {
        let ft = FineTuned {
            base: &model,
            config: cfg.clone(),
            steps: 200,
        };
        evaluate_fewshot(&ft, &b.test, CONTEXT, &SEEDS).unwrap().geomean
    });
    (plain, tuned)
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct Learning {
    ice_a: Vec<f64>,
    ice_a_ft: Vec<f64>,
    h8: Vec<f64>,
    h1: Vec<f64>,
    ens_only: Vec<f64>,
    gp_only: Vec<f64>,
}

fn learning() -> &'static Learning {
    static L: OnceLock<Learning> = OnceLock::new();
    L.get_or_init(|| {
        let b = bench();
        let (ice_a, ice_a_ft): (Vec<f64>, Vec<f64>) = SEEDS
            .iter()
            .map(|&s| {
                let (a, ft) = run(&b, Weak::None, 0.0, s, true);
                (a, ft.unwrap())
            })
            .unzip();
        let each = |weak, ratio| SEEDS.iter().map(|&s| run(&b, weak, ratio, s, false).0).collect::<Vec<_>>();
        Learning {
            ice_a,
            ice_a_ft,
            h8: each(Weak::Ensemble(8), 0.5),
            h1: each(Weak::Ensemble(1), 0.5),
            ens_only: each(Weak::Ensemble(8), 1.0),
            gp_only: each(Weak::Gp, 1.0),
        }
    })
}

fn wins(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x <= y).count()
}

fn more_functions_help() -> Outcome {
    let l = learning();
    let w = l.h8.iter().zip(&l.h1).filter(|(x, y)| x < y).count();
    outcome(
        w >= 2,
        format!("8 functions {} vs 1 function {}, {w}/3 seeds", fmt(&l.h8), fmt(&l.h1)),
    )
}

fn hybrid_not_worse() -> Outcome {
    let l = learning();
    let w = wins(&l.h8, &l.ice_a);
    outcome(w >= 2, format!("Ice-H {} vs Ice-A {}, {w}/3 seeds", fmt(&l.h8), fmt(&l.ice_a)))
}

fn finetune_not_worse() -> Outcome {
    let l = learning();
    let w = wins(&l.ice_a_ft, &l.ice_a);
    outcome(
        w >= 2,
        format!("Ice-A-FT {} vs Ice-A {}, {w}/3 seeds", fmt(&l.ice_a_ft), fmt(&l.ice_a)),
    )
}

fn gp_worse_than_ensemble() -> Outcome {
    let l = learning();
    let (g, e) = (median(l.gp_only.clone()), median(l.ens_only.clone()));
    outcome(g > e, format!("median GP-only {g:.3} vs ensemble-only {e:.3}"))
}

/// Name, check, and whether a failure fails the target.
type Criterion = (&'static str, fn() -> Outcome, bool);

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 10] = [
        ("1 permutation properties", permutation_properties, true),
        ("2 gradient check", gradient_check, true),
        ("3 exhaustive DSE and best@K", dse_and_best_at_k, true),
        ("4 parallel-factor monotonicity", parallel_monotonicity, true),
        ("5 more synthetic functions help", more_functions_help, strict),
        ("6 hybrid pretraining not worse", hybrid_not_worse, strict),
        ("7 fine-tuning not worse", finetune_not_worse, strict),
        ("8 GP weak labels worse", gp_worse_than_ensemble, strict),
        ("9 default-latency substitution", substitution_rule, true),
        ("10 pipeline replay", pipeline_replay, true),
    ];
    let mut failed = false;
    for (name, check, required) in criteria {
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {name}: {} ({:.1}s)", o.detail, t.elapsed().as_secs_f64());
        failed |= required && !o.pass;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
