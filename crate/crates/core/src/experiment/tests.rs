use std::collections::HashSet;
use std::fs;

use super::*;
use crate::agent::AgentConfig;
use crate::data::{SplitCounts, TwoGaussians};

fn small_config(dir: &std::path::Path, methods: Vec<MethodSpec>) -> ExperimentConfig {
    ExperimentConfig {
        master_seed: 11,
        runs_per_cell: 2,
        output_dir: dir.to_path_buf(),
        dataset: DatasetSpec {
            synthetic: TwoGaussians {
                dim: 3,
                train: 40,
                validation: 30,
                test: 50,
                ..TwoGaussians::default()
            },
            ..DatasetSpec::default()
        },
        noise: NoiseGrid {
            rates: vec![0.0, 0.3],
            ..NoiseGrid::default()
        },
        methods,
        ..ExperimentConfig::default()
    }
}

#[test]
fn child_seeds_do_not_collide() {
    let mut seen = HashSet::new();
    for master in 0..4 {
        for rate in [0.0, 0.15, 0.3] {
            for method in ["baseline", "rlboost", "loo", "tmc_shap", "dvrl_lite", "noise"] {
                for run in 0..10 {
                    assert!(seen.insert(child_seed(master, rate, method, run)));
                }
            }
        }
    }
    assert_eq!(child_seed(1, 0.3, "loo", 2), child_seed(1, 0.3, "loo", 2));
}

#[test]
fn toml_round_trip_with_every_method() {
    let text = r#"
master_seed = 3
runs_per_cell = 5
output_dir = "out"

[dataset]
format = "synthetic"
[dataset.synthetic]
dim = 20
separation = 3.0

[noise]
rates = [0.0, 0.15, 0.3]
kind = "binary_flip"

[[methods]]
kind = "baseline"

[[methods]]
kind = "rlboost"
[methods.agent]
total_steps = 20000
state_size = 100

[[methods]]
kind = "loo"

[[methods]]
kind = "tmc_shap"
[methods.shapley]
max_permutations = 50

[[methods]]
kind = "dvrl_lite"
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.methods.len(), 5);
    match &cfg.methods[1] {
        MethodSpec::Rlboost { agent } => {
            assert_eq!(agent.total_steps, 20000);
            assert_eq!(agent.state_size, 100);
            assert_eq!(agent.c1, AgentConfig::default().c1);
        }
        other => panic!("{other:?}"),
    }
    let names: Vec<_> = cfg.methods.iter().map(MethodSpec::name).collect();
    assert_eq!(names, ["baseline", "rlboost", "loo", "tmc_shap", "dvrl_lite"]);
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn config_guards() {
    let mut cfg = ExperimentConfig::default();
    cfg.runs_per_cell = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.noise.rates = vec![1.0];
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.format = DataFormat::Libsvm;
    cfg.dataset.path = Some("/definitely/not/here.svm".into());
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("/definitely/not/here.svm"), "{err}");
    assert!(ExperimentConfig::from_toml("methods = [{ kind = \"magic\" }]").is_err());
    assert!(MethodSpec::by_name("magic").is_err());
}

#[test]
fn cell_arithmetic_and_method_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), vec![MethodSpec::Baseline, MethodSpec::Loo]);
    cfg.runs_per_cell = 5;
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 5);
    assert!(out.failures.is_empty());
    let aucs = out.records.iter().filter(|r| r.auc.is_some()).count();
    // only LOO at 30% noise has both clean and noisy records to rank
    assert_eq!(aucs, 5);

    let cfg = small_config(&tmp.path().join("b"), vec![MethodSpec::Baseline]);
    run_experiment(&cfg, RunOptions::default()).unwrap();
    let scores = fs::read_to_string(tmp.path().join("b").join(SCORES_FILE)).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some("method,noise_rate,seed,test_accuracy,wall_clock_s"));
    assert!(lines.all(|l| l.starts_with("baseline,")));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let methods = vec![
        MethodSpec::Loo,
        MethodSpec::TmcShap {
            shapley: crate::baselines::ShapleyConfig {
                max_permutations: 5,
                ..Default::default()
            },
        },
    ];
    let opts = RunOptions {
        deterministic: true,
        ..RunOptions::default()
    };
    let a = small_config(&tmp.path().join("a"), methods.clone());
    let b = small_config(&tmp.path().join("b"), methods);
    run_experiment(&a, opts).unwrap();
    run_experiment(&b, opts).unwrap();
    for f in [SCORES_FILE, VALUES_FILE, ROC_FILE] {
        let x = fs::read(a.output_dir.join(f)).unwrap();
        let y = fs::read(b.output_dir.join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn failing_cells_are_isolated_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let agent = AgentConfig {
        state_size: 500,
        ..AgentConfig::default()
    };
    let cfg = small_config(tmp.path(), vec![MethodSpec::Baseline, MethodSpec::Rlboost { agent }]);
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.records.len(), 4);
    assert_eq!(out.failures.len(), 4);
    assert!(out.failures.iter().all(|f| f.method == "rlboost"));
    assert!(tmp.path().join(FAILURES_FILE).exists());
    let table = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("rlboost,absent,absent")), "{table}");
}

#[test]
fn report_is_idempotent_and_needs_a_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), vec![MethodSpec::Baseline, MethodSpec::Loo]);
    run_experiment(&cfg, RunOptions::default()).unwrap();
    let first: Vec<Vec<u8>> = ["summary.csv", "summary.json", "table.csv", "roc.svg", "scores.svg"]
        .iter()
        .map(|f| fs::read(tmp.path().join(f)).unwrap())
        .collect();
    let again = report(tmp.path()).unwrap();
    assert_eq!(again.plots.len(), 2);
    let second: Vec<Vec<u8>> = ["summary.csv", "summary.json", "table.csv", "roc.svg", "scores.svg"]
        .iter()
        .map(|f| fs::read(tmp.path().join(f)).unwrap())
        .collect();
    assert_eq!(first, second);
    assert!(report(&tmp.path().join("missing")).is_err());
}

#[test]
fn ingest_libsvm_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("toy.svm");
    let mut text = String::new();
    for i in 0..30 {
        let label = if i % 2 == 0 { "+1" } else { "-1" };
        text.push_str(&format!("{label} 1:{} 3:{}\n", i as f64 * 0.1, (i % 7) as f64));
    }
    fs::write(&src, text).unwrap();
    let opts = IngestOptions {
        format: DataFormat::Libsvm,
        dim: None,
        splits: SplitCounts {
            train: 15,
            validation: 5,
            test: 10,
        },
        seed: 7,
        binarize: None,
        standardize: true,
    };
    let (m1, path) = ingest(&src, &opts, &tmp.path().join("one")).unwrap();
    assert_eq!(m1.splits, opts.splits);
    assert_eq!(m1.dim, 3);
    let (m2, _) = ingest(&src, &opts, &tmp.path().join("two")).unwrap();
    assert_eq!(m1.sha256, m2.sha256);
    let ds = crate::data::Manifest::load(&path).unwrap().open_dataset(&path).unwrap();
    assert_eq!(ds.len(), 30);

    let missing = tmp.path().join("absent.svm");
    let err = ingest(&missing, &opts, &tmp.path().join("three")).unwrap_err().to_string();
    assert!(err.contains("absent.svm"), "{err}");
}

#[test]
fn time_bench_counts_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), vec![MethodSpec::Loo]);
    let rows = time_bench(&cfg, &[10, 20, 40], crate::par::Exec::Sequential).unwrap();
    let fits: Vec<usize> = rows.iter().map(|r| r.inner_fits).collect();
    assert_eq!(fits, [11, 21, 41]);
}

#[test]
fn inject_noise_file_marks_train_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("toy.csv");
    let mut text = String::from("label,a,b\n");
    for i in 0..40 {
        text.push_str(&format!("{},{},{}\n", i % 2, i, 40 - i));
    }
    fs::write(&src, text).unwrap();
    let opts = IngestOptions {
        format: DataFormat::Csv,
        dim: None,
        splits: SplitCounts {
            train: 20,
            validation: 10,
            test: 10,
        },
        seed: 1,
        binarize: None,
        standardize: false,
    };
    let (_, clean) = ingest(&src, &opts, &tmp.path().join("clean")).unwrap();
    let spec = crate::data::NoiseSpec::new(0.3, crate::data::NoiseKind::BinaryFlip, 5);
    let (m, path) = inject_noise_file(&clean, &spec, &tmp.path().join("noisy")).unwrap();
    let ds = m.open_dataset(&path).unwrap();
    let flagged: Vec<usize> = (0..ds.len()).filter(|&r| ds.is_noisy(r)).collect();
    assert_eq!(flagged.len(), 6);
    assert!(flagged.iter().all(|&r| ds.splits()[r] == crate::data::Split::Train));
    assert!(m.transforms.last().unwrap().starts_with("noise"));
}
