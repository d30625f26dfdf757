//! File formats and command workflows.

use std::fs;
use std::path::{Path, PathBuf};

use coxconv::engine::{diagnostics, ModelKind};
use coxconv::genesis::GroundTruth;
use coxconv::metrics::{kde_intensity, poisson_loglik, predictive_loglik, Quadrature};
use coxconv::shell::*;
use coxconv::{Error, EventSet, Region};

fn quick_config(seed: u64) -> Config {
    let mut c = Config::default();
    c.seed = seed;
    c.chain.n_iters = 60;
    c.chain.burn_in = 20;
    c.chain.grid_per_axis = Some(8);
    c.generate.lambda_star = [20.0, 30.0];
    c
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

#[test]
fn unknown_config_field_is_rejected() {
    let err = Config::from_toml_str("seed = 1\n[chain]\nn_iter = 5\n").unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
    assert!(err.to_string().contains("n_iter"), "{err}");
}

#[test]
fn config_round_trips_through_toml() {
    let mut c = quick_config(3);
    c.set_halving_ladder(3).unwrap();
    let back = Config::from_toml_str(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn inconsistent_chain_lengths_fail_validation() {
    let mut c = quick_config(0);
    c.chain.burn_in = c.chain.n_iters;
    assert!(c.validate().is_err());
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = quick_config(42);
    let a = cmd_generate(&c, &dir.path().join("a")).unwrap();
    let b = cmd_generate(&c, &dir.path().join("b")).unwrap();
    assert_eq!(a.files.len(), 4);
    for (fa, fb) in a.files.iter().zip(&b.files) {
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap());
    }
    assert_eq!(
        fs::read(dir.path().join("a").join(TRUTH_FILE)).unwrap(),
        fs::read(dir.path().join("b").join(TRUTH_FILE)).unwrap()
    );
    let back = GroundTruth::from_json(&fs::read_to_string(dir.path().join("a").join(TRUTH_FILE)).unwrap()).unwrap();
    assert_eq!(back, a.truth);
}

#[test]
fn zero_rate_generates_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_config(1);
    c.generate.lambda_star = [0.0, 0.0];
    let g = cmd_generate(&c, dir.path()).unwrap();
    for f in &g.files {
        assert_eq!(fs::read_to_string(f).unwrap().trim(), "process_id,x1");
    }
}

#[test]
fn event_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let region = Region::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
    let sets = vec![
        EventSet::new(0, vec![vec![0.1, 0.2], vec![0.3, 1.9]]),
        EventSet::new(1, vec![vec![0.5, 0.5]]),
    ];
    let path = dir.path().join("ev.csv");
    write_events(&path, &sets, 2).unwrap();
    assert_eq!(load_events(&[path], &region).unwrap(), sets);
}

#[test]
fn out_of_region_event_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir.path().join("bad.csv"), "process_id,x1\n0,0.2\n0,1.5\n");
    let err = load_events(&[path], &Region::unit_interval()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("row 3"), "{err}");
}

#[test]
fn malformed_rows_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let region = Region::unit_interval();
    for (i, text) in ["process_id,x1\n0,abc\n", "process_id,x1\n0\n", "process_id,x1,x2\n0,0.1,0.2\n"]
        .iter()
        .enumerate()
    {
        let path = write(&dir.path().join(format!("m{i}.csv")), text);
        let err = load_events(&[path], &region).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text:?}: {err}");
    }
}

#[test]
fn one_file_per_process_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let region = Region::unit_interval();
    let a = write(&dir.path().join("a.csv"), "process_id,x1\n7,0.2\n");
    let b = write(&dir.path().join("b.csv"), "process_id,x1\n");
    let sets = load_events(&[a.clone(), b], &region).unwrap();
    assert_eq!(sets.len(), 2);
    assert_eq!(sets[0].points, vec![vec![0.2]]);
    assert!(sets[1].is_empty());
    let mixed = write(&dir.path().join("mixed.csv"), "process_id,x1\n0,0.2\n1,0.3\n");
    assert!(load_events(&[a, mixed], &region).is_err());
}

#[test]
fn split_is_seeded_and_complete() {
    let sets = vec![EventSet::new(0, (0..40).map(|i| vec![i as f64 / 40.0]).collect())];
    let a = split_events(&sets, 0.75, 9);
    let b = split_events(&sets, 0.75, 9);
    assert_eq!(a.train, b.train);
    assert_eq!(a.train[0].len() + a.test[0].len(), 40);
    let full = split_events(&sets, 1.0, 9);
    assert!(full.test[0].is_empty());
}

#[test]
fn empty_data_keeps_the_rate_near_its_prior_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir.path().join("empty.csv"), "process_id,x1\n");
    let mut c = quick_config(5);
    c.chain.model = ModelKind::Independent;
    c.chain.n_iters = 200;
    c.chain.burn_in = 50;
    c.evaluation.split_fraction = 1.0;
    let chain = cmd_fit(&c, &[path], &dir.path().join("arch")).unwrap();
    let mean: f64 = chain.samples.iter().map(|s| s.processes[0].lambda_star).sum::<f64>() / chain.samples.len() as f64;
    // With no events the posterior of λ* is Gamma(α + M, β + |T|) and M stays small.
    assert!(mean < c.priors.lambda_alpha / c.priors.lambda_beta / 2.0, "mean rate {mean}");
}

fn fitted_archive(dir: &Path, split: f64) -> (Config, PathBuf, Vec<PathBuf>) {
    let mut c = quick_config(11);
    c.evaluation.split_fraction = split;
    let g = cmd_generate(&c, &dir.join("data")).unwrap();
    let arch = dir.join("arch");
    cmd_fit(&c, &g.files, &arch).unwrap();
    (c, arch, g.files)
}

#[test]
fn archive_reads_back_and_reproduces_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let (c, arch, _) = fitted_archive(dir.path(), 0.75);
    let a = read_archive(&arch).unwrap();
    assert_eq!(a.config, c);
    assert!(a.truth.is_some());
    assert_eq!(a.diagnostics, diagnostics(&a.chain.samples).unwrap());
    assert_eq!(a.chain.samples.len(), 40);
    for name in DETERMINISTIC_FILES {
        assert!(arch.join(name).exists(), "{name}");
    }
}

#[test]
fn eval_reports_scores_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let (_, arch, _) = fitted_archive(dir.path(), 0.75);
    let rows = cmd_eval(&arch, &[], true).unwrap();
    for d in 0..4 {
        let dataset = format!("process_{d}");
        for model in [MODEL_OURS, MODEL_INDEPENDENT, MODEL_KDE] {
            for metric in ["predictive_ll", "l2"] {
                let row = rows
                    .iter()
                    .find(|r| r.dataset == dataset && r.model == model && r.metric == metric);
                assert!(row.is_some_and(|r| r.value.is_finite()), "{dataset} {model} {metric}");
            }
        }
    }
    let out = dir.path().join(REPORT_FILE);
    write_report(&out, &rows).unwrap();
    assert!(fs::read_to_string(out).unwrap().starts_with("dataset,model,metric,value"));
}

#[test]
fn eval_without_truth_has_no_l2_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c = quick_config(2);
    let g = cmd_generate(&c, &dir.path().join("data")).unwrap();
    fs::remove_file(dir.path().join("data").join(TRUTH_FILE)).unwrap();
    let arch = dir.path().join("arch");
    cmd_fit(&c, &g.files, &arch).unwrap();
    let rows = cmd_eval(&arch, &[], false).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.metric != "l2"));
}

#[test]
fn in_sample_kde_beats_a_uniform_rate() {
    let region = Region::unit_interval();
    let quad = Quadrature::default_for(&region);
    let points: Vec<_> = (0..30).map(|i| vec![0.3 + 0.1 * ((i as f64 + 0.5) / 30.0 - 0.5)]).collect();
    let ev = EventSet::new(0, points);
    let grid = kde_intensity(&ev, &region, &quad).unwrap();
    let kde = coxconv::metrics::Kde::fit(&ev, &region).unwrap();
    let at: Vec<f64> = ev.points.iter().map(|x| kde.eval(x)).collect();
    let n = ev.len() as f64;
    let flat = poisson_loglik(&vec![n; ev.len()], &vec![n; quad.len()], &quad).unwrap();
    assert!(poisson_loglik(&at, &grid, &quad).unwrap() > flat);
}

#[test]
fn single_draw_score_equals_its_poisson_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_config(8);
    c.chain.n_iters = 21;
    c.chain.burn_in = 20;
    let g = cmd_generate(&c, &dir.path().join("data")).unwrap();
    let chain = cmd_fit(&c, &g.files, &dir.path().join("arch")).unwrap();
    assert_eq!(chain.samples.len(), 1);
    let quad = Quadrature::new(&chain.region, 101).unwrap();
    let test = EventSet::new(0, vec![vec![0.1], vec![0.45], vec![0.9]]);
    let score = predictive_loglik(&chain, 0, &test, &quad, 1.0).unwrap();
    let at = chain.process_intensities_at(0, &test.points).unwrap();
    let grid = chain.process_intensities_at(0, quad.points()).unwrap();
    let ll = poisson_loglik(&at[0], &grid[0], &quad).unwrap();
    assert!((score.log_mean_lik - ll).abs() < 1e-9);
    assert!((score.mean_log_lik - ll).abs() < 1e-9);
}

#[test]
fn export_grid_writes_bounded_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let (_, arch, _) = fitted_archive(dir.path(), 1.0);
    let files = cmd_export_grid(&arch, 100, &dir.path().join("grid")).unwrap();
    assert_eq!(files.len(), 5);
    let a = read_archive(&arch).unwrap();
    let max_rate = a
        .chain
        .samples
        .iter()
        .flat_map(|s| s.processes.iter().map(|p| p.lambda_star))
        .fold(0.0, f64::max);
    for f in files.iter().filter(|f| f.to_string_lossy().contains("intensity_")) {
        let mut r = csv::Reader::from_path(f).unwrap();
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 100);
        for row in rows {
            assert!(row[2] >= 0.0);
            assert!(row[1] >= 0.0 && row[1] <= max_rate);
        }
    }
}

#[test]
fn refits_give_identical_archives() {
    let dir = tempfile::tempdir().unwrap();
    let c = quick_config(21);
    let g = cmd_generate(&c, &dir.path().join("data")).unwrap();
    cmd_fit(&c, &g.files, &dir.path().join("a")).unwrap();
    cmd_fit(&c, &g.files, &dir.path().join("b")).unwrap();
    assert!(archive_differences(&dir.path().join("a"), &dir.path().join("b")).unwrap().is_empty());
    let mut other = c.clone();
    other.seed = 22;
    cmd_fit(&other, &g.files, &dir.path().join("c")).unwrap();
    assert!(!archive_differences(&dir.path().join("a"), &dir.path().join("c")).unwrap().is_empty());
}

#[test]
fn default_grid_depends_on_dimension() {
    let mut c = Config::default();
    assert_eq!(c.run_config().unwrap().grid_per_axis, 20);
    c.region = RegionSpec {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
    };
    assert_eq!(c.run_config().unwrap().grid_per_axis, 8);
    c.chain.grid_per_axis = Some(5);
    assert_eq!(c.run_config().unwrap().grid_per_axis, 5);
}
