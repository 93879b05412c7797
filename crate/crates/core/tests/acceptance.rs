//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! `cargo test -p dvforge --test acceptance -- 3 4` runs a subset.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use dvforge::agent::{entropy_bonus, generalized_advantage_estimate, policy_loss, value_loss, AgentConfig};
use dvforge::autodiff::gradcheck::{check, check_params};
use dvforge::autodiff::{Graph, Tensor, Var};
use dvforge::baselines::{exact_shapley, loo_values, threshold_sweep, tmc_shapley, Game, ShapleyConfig};
use dvforge::data::{
    emit_libsvm, parse_libsvm, read_csv, read_embeddings, read_libsvm, two_gaussians, write_embeddings, Dataset,
    NoiseSpec, Samples, Split, TwoGaussians,
};
use dvforge::env::ValuationEnv;
use dvforge::estimator::{InnerConfig, InnerEstimator};
use dvforge::eval::RunRecord;
use dvforge::experiment::{
    child_seed, load_dataset, run_experiment, time_bench, ExperimentConfig, MethodSpec, NoiseGrid, RunOptions,
    SCORES_FILE, VALUES_FILE,
};
use dvforge::matrix::Matrix;
use dvforge::nn::{CriticMode, Ctx, EncoderConfig, PolicyValueNet};
use dvforge::par::{self, Exec};
use dvforge::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok { Ok(detail) } else { Err(detail) }
}

fn err(e: Error) -> String {
    format!("error: {e}")
}

fn out_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn split(ds: &Dataset) -> (Samples, Samples, Samples) {
    (ds.part(Split::Train), ds.part(Split::Validation), ds.part(Split::Test))
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Scalar that touches every element of `out` with a fixed random weight.
fn weighted(g: &Graph, out: Var, seed: u64) -> dvforge::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(rand_tensor(&mut rng, &g.shape(out), -1.0, 1.0));
    Ok(g.sum(g.mul(out, w)?))
}

type Unary = fn(&Graph, Var) -> dvforge::Result<Var>;
type Binary = fn(&Graph, Var, Var) -> dvforge::Result<Var>;

fn gradcheck() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |name: &str, r: f64| {
        if r > worst.0 {
            worst = (r, name.to_string());
        }
    };
    let unary: [(&str, f64, f64, Unary); 12] = [
        ("neg", -2.0, 2.0, |g, x| Ok(g.neg(x))),
        ("exp", -2.0, 2.0, |g, x| Ok(g.exp(x))),
        ("log", 0.2, 3.0, |g, x| Ok(g.log(x))),
        ("sigmoid", -4.0, 4.0, |g, x| Ok(g.sigmoid(x))),
        ("tanh", -2.0, 2.0, |g, x| Ok(g.tanh(x))),
        ("gelu", -3.0, 3.0, |g, x| Ok(g.gelu(x))),
        ("relu", 0.1, 2.0, |g, x| Ok(g.relu(x))),
        ("sqrt", 0.3, 3.0, |g, x| Ok(g.sqrt(x))),
        ("softmax", -2.0, 2.0, |g, x| g.softmax(x)),
        ("layer_norm", -2.0, 2.0, |g, x| g.layer_norm(x, 1e-5)),
        ("mean", -1.0, 1.0, |g, x| Ok(g.exp(g.mean(x)))),
        ("sum_axis0", -1.0, 1.0, |g, x| g.sum_axis(x, 0)),
    ];
    for (name, lo, hi, op) in unary {
        for shape in [&[5][..], &[3, 4], &[2, 3, 4]] {
            let x = rand_tensor(&mut rng, shape, lo, hi);
            let r = check(&[x], 1e-5, |g, v| weighted(g, op(g, v[0])?, 3)).map_err(err)?;
            note(name, r.max_rel_err);
        }
    }
    let binary: [(&str, Binary); 4] = [("add", Graph::add), ("sub", Graph::sub), ("mul", Graph::mul), ("div", Graph::div)];
    for (sa, sb) in [(&[5][..], &[5][..]), (&[3, 4], &[4]), (&[2, 3, 4], &[3, 4])] {
        let a = rand_tensor(&mut rng, sa, 0.5, 2.0);
        let b = rand_tensor(&mut rng, sb, 0.5, 2.0);
        for (name, op) in binary {
            let r = check(&[a.clone(), b.clone()], 1e-5, |g, v| weighted(g, op(g, v[0], v[1])?, 1)).map_err(err)?;
            note(name, r.max_rel_err);
        }
    }
    for (sa, sb) in [(&[2, 3][..], &[3, 4][..]), (&[2, 4, 3], &[3, 5]), (&[2, 3, 4], &[2, 4, 2])] {
        let a = rand_tensor(&mut rng, sa, -1.0, 1.0);
        let b = rand_tensor(&mut rng, sb, -1.0, 1.0);
        let r = check(&[a, b], 1e-5, |g, v| weighted(g, g.matmul(v[0], v[1])?, 4)).map_err(err)?;
        note("matmul", r.max_rel_err);
    }
    let a = rand_tensor(&mut rng, &[2, 3, 5], -1.0, 1.0);
    let r = check(&[a], 1e-5, |g, v| weighted(g, g.transpose(v[0])?, 5)).map_err(err)?;
    note("transpose", r.max_rel_err);
    let a = rand_tensor(&mut rng, &[2, 3], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2, 1], -1.0, 1.0);
    let r = check(&[a, b], 1e-5, |g, v| weighted(g, g.concat(&[v[0], v[1]], 1)?, 6)).map_err(err)?;
    note("concat", r.max_rel_err);
    let ops_err = worst.0;

    let cfg = EncoderConfig {
        input_dim: 5,
        model_dim: 8,
        num_heads: 2,
        num_layers: 2,
        ff_hidden_dim: 16,
    };
    let net = PolicyValueNet::new(cfg, CriticMode::ClsSb, 7).map_err(err)?;
    let x = Matrix::new(4, 5, (0..20).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let full = check_params(net.params(), 1e-5, |g, p, train| {
        let ctx = Ctx::new(g, p, train);
        let out = net.forward(&ctx, &x, 0.7)?;
        let w = g.constant(Tensor::vector(vec![0.3, -1.2, 0.8, 0.5]));
        let a = g.sum(g.mul(g.log(out.probs), w)?);
        g.add(a, g.mul(out.value, out.value)?)
    })
    .map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    ensure(
        ops_err < 1e-4 && full.max_rel_err < 1e-3 && secs < 60.0,
        format!(
            "ops max rel err {:.2e} ({}), full net {:.2e}, {secs:.1}s",
            ops_err, worst.1, full.max_rel_err
        ),
    )
}

fn loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..50);
        let logp: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..-0.01)).collect();
        let advantages: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let objective: f64 = advantages
            .iter()
            .map(|&a| -policy_loss(&logp, &logp, a, 0.2).unwrap())
            .sum::<f64>()
            / advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        worst = worst.max((objective - mean).abs());
    }
    let r: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vl = value_loss(&r, &r);
    let ent = entropy_bonus(&[0.5; 8]);
    let gae = generalized_advantage_estimate(&r, 0.0, 0.95).unwrap();
    let gae_exact = gae.iter().zip(&r).all(|(a, b)| a.to_bits() == b.to_bits());
    let ent_err = (ent - std::f64::consts::LN_2).abs();
    ensure(
        worst <= 1e-9 && vl == 0.0 && ent_err <= 1e-12 && gae_exact,
        format!("objective-advantage gap {worst:.1e}, value loss {vl}, entropy-ln2 {ent_err:.1e}, gae exact {gae_exact}"),
    )
}

fn reward_boundaries() -> Check {
    let ds = two_gaussians(&TwoGaussians {
        dim: 5,
        train: 300,
        validation: 100,
        test: 10,
        seed: 3,
        ..TwoGaussians::default()
    })
    .map_err(err)?;
    let (train, val, _) = split(&ds);
    let env = ValuationEnv::new(&train, &val, InnerEstimator::default(), 40).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for _ in 0..100 {
        let state = env.sample_state(&mut rng).map_err(err)?;
        let full = env.step(&state, &vec![true; state.len()]).map_err(err)?;
        let empty = env.step(&state, &vec![false; state.len()]).map_err(err)?;
        if full.reward != 0.0 || empty.reward != -state.baseline_score {
            bad += 1;
        }
    }
    ensure(bad == 0, format!("{bad}/100 batches violated the boundary rewards"))
}

fn shapley_checks() -> Check {
    let started = Instant::now();
    let ds = two_gaussians(&TwoGaussians {
        dim: 3,
        separation: 2.0,
        train: 6,
        validation: 60,
        test: 10,
        seed: 5,
    })
    .map_err(err)?;
    let (mut train, val, _) = split(&ds);
    // two identical records make symmetry observable
    let dup = train.features.row(0).to_vec();
    train.features.row_mut(1).copy_from_slice(&dup);
    train.labels[1] = train.labels[0];
    let est = InnerEstimator::default();
    let game = Game::new(&train, &val, &est);
    let exact = exact_shapley(&game, Exec::Parallel).map_err(err)?.values;
    let all: Vec<usize> = (0..6).collect();
    let total = game.value(&all).map_err(err)? - game.value(&[]).map_err(err)?;
    let eff = (exact.iter().sum::<f64>() - total).abs();
    let sym = (exact[0] - exact[1]).abs();
    let cfg = ShapleyConfig {
        max_permutations: 2000,
        convergence_tol: f64::MIN_POSITIVE,
        seed: 17,
        ..ShapleyConfig::default()
    };
    let tmc = tmc_shapley(&game, &cfg, Exec::Parallel).map_err(err)?;
    let tmc_err = tmc
        .values
        .values
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    ensure(
        eff <= 1e-9 && sym <= 1e-9 && tmc.permutations == 2000 && tmc_err < 0.05 && secs < 300.0,
        format!(
            "efficiency gap {eff:.1e}, symmetry gap {sym:.1e}, tmc max abs err {tmc_err:.4} over {} permutations, {secs:.1}s",
            tmc.permutations
        ),
    )
}

/// Alternating labels at `±U(lo, hi)` in one dimension: class 1 on the right.
fn clusters(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Samples {
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x: Vec<f64> = labels
        .iter()
        .map(|&l| {
            let m = rng.random_range(lo..hi);
            if l == 1 { m } else { -m }
        })
        .collect();
    Samples {
        features: Matrix::new(n, 1, x).unwrap(),
        labels,
        num_classes: 2,
        ids: (0..n).collect(),
        noisy: vec![false; n],
    }
}

fn planted_mislabel() -> Check {
    let mut misses = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // tight clusters at ±1; validation covers the gap so any boundary shift costs accuracy
        let mut train = clusters(20, 0.7, 1.3, &mut rng);
        let val = clusters(4000, 0.0, 2.0, &mut rng);
        let planted = rng.random_range(0..20);
        train.labels[planted] = 1 - train.labels[planted];
        let est = InnerEstimator::default();
        let v = loo_values(&Game::new(&train, &val, &est), Exec::Parallel).map_err(err)?.values;
        if !v.iter().enumerate().all(|(i, &x)| i == planted || x > v[planted]) {
            misses.push(seed);
        }
    }
    ensure(misses.is_empty(), format!("{}/10 seeds, misses {misses:?}", 10 - misses.len()))
}

fn headline_config(dir: &Path) -> ExperimentConfig {
    let agent = AgentConfig {
        state_size: 100,
        num_layers: 2,
        model_dim: 32,
        ff_hidden_dim: 64,
        total_steps: 20_000,
        c2: 1e-3,
        lr: 1e-3,
        rollout_size: 16,
        train_batch: 16,
        ..AgentConfig::default()
    };
    ExperimentConfig {
        master_seed: 2024,
        runs_per_cell: 5,
        output_dir: dir.to_path_buf(),
        noise: NoiseGrid {
            rates: vec![0.0, 0.15, 0.3],
            ..NoiseGrid::default()
        },
        methods: vec![MethodSpec::Baseline, MethodSpec::Rlboost { agent }],
        ..ExperimentConfig::default()
    }
}

/// Shared by the detection, accuracy and sweep criteria; runs once.
struct Headline {
    cfg: ExperimentConfig,
    records: Vec<RunRecord>,
    failures: usize,
    secs: f64,
}

impl Headline {
    fn run() -> Result<Self, String> {
        let cfg = headline_config(&out_root().join("headline"));
        let started = Instant::now();
        let out = run_experiment(&cfg, RunOptions::default()).map_err(err)?;
        Ok(Headline {
            cfg,
            records: out.records,
            failures: out.failures.len(),
            secs: started.elapsed().as_secs_f64(),
        })
    }

    fn select(&self, method: &str, rate: f64) -> Vec<&RunRecord> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.noise_rate == rate)
            .collect()
    }

    fn mean_accuracy(&self, method: &str, rate: f64) -> f64 {
        let rs = self.select(method, rate);
        rs.iter().map(|r| r.test_accuracy).sum::<f64>() / rs.len().max(1) as f64
    }
}

fn noise_detection(h: &Headline) -> Check {
    let mut parts = Vec::new();
    let mut ok = h.failures == 0;
    for (rate, floor) in [(0.15, 0.70), (0.3, 0.75)] {
        let aucs: Vec<f64> = h.select("rlboost", rate).iter().filter_map(|r| r.auc).collect();
        let passing = aucs.iter().filter(|&&a| a >= floor).count();
        ok &= passing >= 4;
        let shown: Vec<String> = aucs.iter().map(|a| format!("{a:.3}")).collect();
        parts.push(format!("{rate}: {passing}/5 >= {floor} [{}]", shown.join(" ")));
    }
    let per_run = h.secs / h.records.iter().filter(|r| r.method == "rlboost").count().max(1) as f64;
    ensure(ok, format!("{}, {} failed cells, {:.1} min per run", parts.join("; "), h.failures, per_run / 60.0))
}

fn filtered_accuracy(h: &Headline) -> Check {
    let noisy = (h.mean_accuracy("rlboost", 0.3), h.mean_accuracy("baseline", 0.3));
    let clean = (h.mean_accuracy("rlboost", 0.0), h.mean_accuracy("baseline", 0.0));
    ensure(
        h.failures == 0 && noisy.0 >= noisy.1 + 0.01 && clean.0 >= clean.1 - 0.005,
        format!(
            "30%: filtered {:.4} vs baseline {:.4}; 0%: filtered {:.4} vs baseline {:.4}",
            noisy.0, noisy.1, clean.0, clean.1
        ),
    )
}

fn sweep_dominates(h: &Headline) -> Check {
    let cfg = &h.cfg;
    let base = load_dataset(&cfg.dataset, child_seed(cfg.master_seed, 0.0, "split", 0)).map_err(err)?;
    let mut runs = 0;
    let mut worst_margin = f64::INFINITY;
    for &rate in &cfg.noise.rates {
        let ds = base.clone();
        for run in 0..cfg.runs_per_cell {
            let seed = child_seed(cfg.master_seed, rate, "rlboost", run);
            let Some(rec) = h.records.iter().find(|r| r.method == "rlboost" && r.run_seed == seed) else {
                continue;
            };
            let noisy = ds
                .clone()
                .inject_noise(&NoiseSpec::new(rate, cfg.noise.kind, child_seed(cfg.master_seed, rate, "noise", run)))
                .map_err(err)?;
            let (train, val, test) = split(&noisy);
            let est = InnerEstimator::new(InnerConfig { seed, ..cfg.inner });
            let game = Game::new(&train, &val, &est);
            let sweep = threshold_sweep(&rec.values, &game, &test, Exec::Parallel).map_err(err)?;
            worst_margin = worst_margin.min(sweep.best_val_score - sweep.baseline_val_score);
            runs += 1;
        }
    }
    ensure(
        runs == 15 && worst_margin >= 0.0,
        format!("{runs} runs, smallest best-minus-baseline validation margin {worst_margin:.4}"),
    )
}

fn fit_counts() -> Check {
    let dir = out_root().join("fits");
    let agent = AgentConfig {
        state_size: 50,
        model_dim: 8,
        num_heads: 2,
        num_layers: 1,
        ff_hidden_dim: 16,
        total_steps: 64,
        ..AgentConfig::default()
    };
    let cfg = ExperimentConfig {
        output_dir: dir,
        noise: NoiseGrid {
            rates: vec![0.3],
            ..NoiseGrid::default()
        },
        methods: vec![MethodSpec::Loo, MethodSpec::Rlboost { agent }],
        ..ExperimentConfig::default()
    };
    let sizes = [100, 200, 400];
    let rows = time_bench(&cfg, &sizes, Exec::Parallel).map_err(err)?;
    let fits = |m: &str| rows.iter().filter(|r| r.method == m).map(|r| r.inner_fits).collect::<Vec<_>>();
    let loo = fits("loo");
    let rl = fits("rlboost");
    let loo_ok = loo == sizes.iter().map(|n| n + 1).collect::<Vec<_>>();
    let rl_ok = rl.len() == 3 && rl.iter().all(|&f| f == rl[0]);

    let ds = two_gaussians(&TwoGaussians {
        train: 100,
        test: 10,
        ..TwoGaussians::default()
    })
    .map_err(err)?;
    let (train, val, _) = split(&ds);
    let est = InnerEstimator::default();
    let sc = ShapleyConfig {
        max_permutations: 40,
        seed: 9,
        ..ShapleyConfig::default()
    };
    let tmc = tmc_shapley(&Game::new(&train, &val, &est), &sc, Exec::Parallel).map_err(err)?;
    let bound = tmc.permutations * train.len() + 1;
    let tmc_ok = est.fit_count() <= bound;
    ensure(
        loo_ok && rl_ok && tmc_ok,
        format!(
            "loo {loo:?}, rlboost {rl:?}, tmc {} fits <= {bound} ({} permutations)",
            est.fit_count(),
            tmc.permutations
        ),
    )
}

fn determinism() -> Check {
    let root = out_root().join("determinism");
    let agent = AgentConfig {
        state_size: 30,
        model_dim: 8,
        num_heads: 2,
        num_layers: 1,
        ff_hidden_dim: 16,
        total_steps: 64,
        ..AgentConfig::default()
    };
    let methods = vec![
        MethodSpec::Baseline,
        MethodSpec::Rlboost { agent },
        MethodSpec::Loo,
        MethodSpec::TmcShap {
            shapley: ShapleyConfig {
                max_permutations: 10,
                ..ShapleyConfig::default()
            },
        },
    ];
    let opts = RunOptions {
        exec: Exec::Sequential,
        deterministic: true,
    };
    let mut dirs = Vec::new();
    for name in ["first", "second"] {
        let mut cfg = ExperimentConfig {
            runs_per_cell: 2,
            output_dir: root.join(name),
            methods: methods.clone(),
            ..ExperimentConfig::default()
        };
        cfg.dataset.synthetic = TwoGaussians {
            dim: 5,
            train: 80,
            validation: 50,
            test: 100,
            ..TwoGaussians::default()
        };
        par::with_jobs(1, || run_experiment(&cfg, opts)).map_err(err)?;
        dirs.push(cfg.output_dir);
    }
    let mut same = Vec::new();
    for f in [SCORES_FILE, VALUES_FILE] {
        let a = std::fs::read(dirs[0].join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(f)).map_err(|e| e.to_string())?;
        same.push((f, a == b, a.len()));
    }
    ensure(same.iter().all(|s| s.1), format!("{same:?}"))
}

fn bits(m: &Matrix) -> Vec<u64> {
    m.as_slice().iter().map(|x| x.to_bits()).collect()
}

fn fixtures() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d) = (60, 7);
    let data: Vec<f64> = (0..n * d)
        .map(|i| match i % 9 {
            0 => 0.0,
            1 => -0.0,
            2 => rng.random_range(-1e-300..1e-300),
            _ => rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-12..12)),
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let ds = Dataset::new(Matrix::new(n, d, data).unwrap(), labels.clone(), None).map_err(err)?;
    let mut buf = Vec::new();
    emit_libsvm(&ds, &mut buf).map_err(err)?;
    let back = parse_libsvm(Cursor::new(&buf), Some(d)).map_err(err)?;
    // emission drops +0.0 entries, which parse back as +0.0; -0.0 is kept
    let svm_ok = bits(back.features()) == bits(ds.features()) && back.labels() == ds.labels();

    // the embedding format stores f32, so start from f32-representable values
    let narrow: Vec<f64> = ds.features().as_slice().iter().map(|&x| x as f32 as f64).collect();
    let ds32 = Dataset::new(Matrix::new(n, d, narrow).unwrap(), labels, None).map_err(err)?;
    let mut emb = Vec::new();
    write_embeddings(&ds32, &mut emb).map_err(err)?;
    let back = read_embeddings(Cursor::new(&emb)).map_err(err)?;
    let mut again = Vec::new();
    write_embeddings(&back, &mut again).map_err(err)?;
    let emb_ok = bits(back.features()) == bits(ds32.features()) && back.labels() == ds32.labels() && again == emb;

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/malformed");
    let expected = std::fs::read_to_string(dir.join("expected.txt")).map_err(|e| e.to_string())?;
    let mut cases = 0;
    let mut wrong = Vec::new();
    for line in expected.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let (file, want) = (it.next().unwrap(), it.next().unwrap().parse::<usize>().unwrap());
        let path = dir.join(file);
        let res = if file.ends_with(".svm") { read_libsvm(&path, Some(3)) } else { read_csv(&path) };
        cases += 1;
        match res {
            Err(e @ Error::Parse { line, .. }) if line == want && e.to_string().starts_with(&format!("line {want}:")) => {}
            Err(e) => wrong.push(format!("{file}: {e}")),
            Ok(_) => wrong.push(format!("{file}: parsed")),
        }
    }
    ensure(
        svm_ok && emb_ok && cases == 12 && wrong.is_empty(),
        format!("libsvm exact {svm_ok}, embedding exact {emb_ok}, {}/{cases} fixtures line-numbered {wrong:?}", cases - wrong.len()),
    )
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() -> ExitCode {
    let wanted: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let runs = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let _ = std::fs::create_dir_all(out_root());

    let headline = if (6..=8).any(runs) {
        match panic::catch_unwind(Headline::run) {
            Ok(h) => Some(h),
            Err(_) => Some(Err("headline runs panicked".to_string())),
        }
    } else {
        None
    };
    let with_headline = |f: fn(&Headline) -> Check| -> Check {
        match headline.as_ref().expect("headline requested") {
            Ok(h) => guarded(|| f(h)),
            Err(e) => Err(e.clone()),
        }
    };

    let criteria: [(usize, &str, Box<dyn Fn() -> Check + '_>); 11] = [
        (1, "gradient checks", Box::new(|| guarded(gradcheck))),
        (2, "loss identities", Box::new(|| guarded(loss_identities))),
        (3, "reward boundaries", Box::new(|| guarded(reward_boundaries))),
        (4, "shapley exact and tmc", Box::new(|| guarded(shapley_checks))),
        (5, "loo planted mislabel", Box::new(|| guarded(planted_mislabel))),
        (6, "noise detection auc", Box::new(|| with_headline(noise_detection))),
        (7, "filtered test accuracy", Box::new(|| with_headline(filtered_accuracy))),
        (8, "threshold sweep", Box::new(|| with_headline(sweep_dominates))),
        (9, "inner fit counts", Box::new(|| guarded(fit_counts))),
        (10, "deterministic reruns", Box::new(|| guarded(determinism))),
        (11, "round trips and fixtures", Box::new(|| guarded(fixtures))),
    ];
    let mut failed = 0;
    for (id, name, f) in &criteria {
        if !runs(*id) {
            continue;
        }
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {name}: {detail}");
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
