//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::path::Path;
use std::time::Instant;

use abbg_cli::config::ExperimentConfig;
use abbg_cli::report::EvalReport;
use abbg_cli::{cmd_attack, cmd_gradcheck, DEFAULT_GRADCHECK_SEED};
use abbg_core::attack::AttackConfig;
use abbg_core::data::sequence::{load_sequence, save_sequence, GROUNDTRUTH_FILE};
use abbg_core::data::{read_ppm, synth_suite, write_ppm, SuiteConfig};
use abbg_core::geometry::{generate_adversarial_boxes, select_positive, BoundingBox, BoxGenConfig};
use abbg_core::gradcheck::run_gradcheck;
use abbg_core::metrics::{l1_sparsity, ssim_gray, vot_anchor_eval, OpeReport, VotProtocolConfig};
use abbg_core::runner::{evaluate_sequence, track_from, AttackKind, RunConfig};
use abbg_core::tracker::TrackerConfig;
use abbg_core::{Error, Image};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Master seed of the benchmark suite.
const SUITE_SEED: u64 = 7;

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

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::default();
    let r = cmd_gradcheck(&cfg).expect("gradcheck runs");
    let secs = t.elapsed().as_secs_f64();
    // Informational: how often other seeds hit a near-cancelling pixel.
    let failing = (0..50u64)
        .filter(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            !run_gradcheck(&cfg.gradcheck, &TrackerConfig::default(), false, &mut rng)
                .unwrap()
                .passed
        })
        .count();
    outcome(
        r.passed && secs < 60.0 && cfg.gradcheck.states >= 5 && cfg.gradcheck.probes >= 100,
        format!(
            "seed {DEFAULT_GRADCHECK_SEED}: worst {:.3e} over {} states x {} probes at step {} in {secs:.2}s \
             (seeds 0..49: {failing} of 50 exceed the tolerance)",
            r.worst, cfg.gradcheck.states, cfg.gradcheck.probes, cfg.gradcheck.step
        ),
    )
}

fn probe_boxes() -> Vec<BoundingBox> {
    vec![
        BoundingBox::new(30.0, 40.0, 16.0, 16.0).unwrap(),
        BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        BoundingBox::new(-12.5, 7.25, 120.0, 33.0).unwrap(),
        BoundingBox::new(100.0, 3.0, 5.0, 64.0).unwrap(),
    ]
}

fn generator_conformance() -> Outcome {
    let cfg = BoxGenConfig::default();
    let mut bad = 0;
    let mut checked = 0;
    for seed in 0..25u64 {
        for b in probe_boxes() {
            let batch = generate_adversarial_boxes(&b, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            checked += 1;
            let ok = batch.boxes.len() == 1024
                && batch.ious.iter().all(|&v| v > 0.0 && v < 1.0)
                && batch.boxes.iter().all(|g| {
                    let f = g.area() / b.area();
                    (0.49 - 1e-12..=0.81 + 1e-12).contains(&f)
                });
            bad += !ok as usize;
        }
    }
    outcome(bad == 0, format!("{checked} batches of 1024 boxes, {bad} non-conforming"))
}

fn selection_conformance() -> Outcome {
    let mut bad = 0;
    let mut checked = 0;
    for seed in 0..25u64 {
        for (j, b) in probe_boxes().into_iter().enumerate() {
            let k = [1024, 1, 7, 333][j];
            let cfg = BoxGenConfig { k, ..Default::default() };
            let batch = generate_adversarial_boxes(&b, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let sel = select_positive(batch, cfg.retain_fraction).unwrap();
            let want = (0.8 * k as f64).ceil() as usize;
            let min_kept = sel.selected.iter().map(|&i| sel.ious[i]).fold(f64::INFINITY, f64::min);
            let max_rej = (0..k)
                .filter(|i| !sel.selected.contains(i))
                .map(|i| sel.ious[i])
                .fold(f64::NEG_INFINITY, f64::max);
            checked += 1;
            bad += !(sel.selected.len() == want && min_kept >= max_rej && sel.zeta == min_kept) as usize;
        }
    }
    outcome(bad == 0, format!("{checked} selections (k in 1, 7, 333, 1024), {bad} non-conforming"))
}

fn budget_conformance(suite: &[abbg_core::data::Sequence]) -> Outcome {
    let mut worst_delta: f64 = 0.0;
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for kind in [AttackKind::Abbg, AttackKind::Random, AttackKind::UntargetedPgd] {
        let cfg = RunConfig { attack: kind, ..Default::default() };
        for (i, s) in suite.iter().enumerate() {
            let r = evaluate_sequence(s, &cfg, &mut ChaCha8Rng::seed_from_u64(SUITE_SEED ^ i as u64)).unwrap();
            worst_delta = worst_delta.max(r.max_delta_linf);
            range = (range.0.min(r.input_range.0), range.1.max(r.input_range.1));
        }
    }
    let clean = RunConfig { attack: AttackKind::None, ..Default::default() };
    let zero = RunConfig {
        attack: AttackKind::Abbg,
        attack_params: AttackConfig { epsilon: 0.0, ..Default::default() },
        ..Default::default()
    };
    let identical = suite.iter().all(|s| {
        let a = track_from(s, 0, &clean, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = track_from(s, 0, &zero, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        a.boxes == b.boxes
    });
    outcome(
        worst_delta <= 10.0 && range.0 >= 0.0 && range.1 <= 255.0 && identical,
        format!(
            "max |delta| {worst_delta} over every attacked frame of every run, inputs in [{}, {}], \
             eps=0 run identical to clean: {identical}",
            range.0, range.1
        ),
    )
}

struct SuiteRuns {
    reports: Vec<(AttackKind, EvalReport, std::path::PathBuf)>,
    seconds: f64,
}

fn attack_config(kind: AttackKind, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: Some(SUITE_SEED),
        output_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    cfg.run.attack = kind;
    cfg
}

fn run_suite(root: &Path) -> SuiteRuns {
    let t = Instant::now();
    let mut reports = Vec::new();
    let none_dir = root.join("none");
    for kind in [AttackKind::None, AttackKind::Abbg, AttackKind::Random, AttackKind::UntargetedPgd] {
        let out = root.join(kind.name());
        let baseline = (kind != AttackKind::None).then(|| none_dir.join("report.json"));
        let r = cmd_attack(&attack_config(kind, &out), baseline.as_deref()).expect("attack runs");
        reports.push((kind, r, out));
    }
    SuiteRuns {
        reports,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn ao_of(runs: &SuiteRuns, kind: AttackKind) -> f64 {
    runs.reports.iter().find(|r| r.0 == kind).unwrap().1.aggregate.ao
}

fn attack_effectiveness(runs: &SuiteRuns) -> Outcome {
    let clean = ao_of(runs, AttackKind::None);
    let abbg = ao_of(runs, AttackKind::Abbg);
    let random = ao_of(runs, AttackKind::Random);
    let untargeted = ao_of(runs, AttackKind::UntargetedPgd);
    let drop = 100.0 * (clean - abbg) / clean;
    let n = runs.reports[0].1.rows.len();
    let checks = [
        (clean >= 0.70, "clean AO >= 0.70"),
        (drop >= 60.0, "drop >= 60%"),
        (abbg < random, "ABBG < random"),
        (abbg < untargeted, "ABBG < untargeted PGD"),
        (runs.seconds < 300.0, "runtime < 5 min"),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1).collect();
    let mut detail = format!(
        "{n} sequences x {} frames, seed {SUITE_SEED}: AO clean {clean:.3}, ABBG {abbg:.3} (drop {drop:.1}%), \
         random {random:.3}, untargeted PGD {untargeted:.3}; 4 runs in {:.1}s",
        runs.reports[0].1.sequences.first().map(|_| SuiteConfig::default().frames).unwrap_or(0),
        runs.seconds
    );
    if !failed.is_empty() {
        detail.push_str(&format!("; not met: {}", failed.join(", ")));
    }
    outcome(failed.is_empty(), detail)
}

fn int_box(rng: &mut ChaCha8Rng) -> (i64, i64, i64, i64) {
    (rng.random_range(0..40), rng.random_range(0..40), rng.random_range(1..30), rng.random_range(1..30))
}

fn raster_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |r: (i64, i64, i64, i64), x: i64, y: i64| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let (mut inter, mut union) = (0i64, 0i64);
    for y in 0..80 {
        for x in 0..80 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as i64;
            union += (ia || ib) as i64;
        }
    }
    inter as f64 / union as f64
}

fn metric_oracle() -> Outcome {
    let to_box = |b: (i64, i64, i64, i64)| BoundingBox::new(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64).unwrap();
    let mut mismatches = 0;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let pairs: Vec<_> = (0..10)
            .map(|i| {
                let g = int_box(&mut rng);
                let p = if i % 3 == 0 { g } else { int_box(&mut rng) };
                (p, g)
            })
            .collect();
        let ious: Vec<f64> = pairs.iter().map(|&(p, g)| raster_iou(p, g)).collect();
        let n = 10.0;
        let sr = |t: f64| ious.iter().filter(|&&v| v > t).count() as f64 / n;
        let prec = pairs
            .iter()
            .filter(|&&(p, g)| {
                let dx = (2 * p.0 + p.2) - (2 * g.0 + g.2);
                let dy = (2 * p.1 + p.3) - (2 * g.1 + g.3);
                dx * dx + dy * dy < 1600
            })
            .count() as f64
            / n;
        let want = OpeReport {
            ao: ious.iter().sum::<f64>() / n,
            sr50: sr(0.5),
            sr75: sr(0.75),
            success_auc: (0..=100).map(|i| sr(i as f64 / 100.0)).sum::<f64>() / 101.0,
            precision20: prec,
        };
        let pred: Vec<_> = pairs.iter().map(|&(p, _)| to_box(p)).collect();
        let gt: Vec<_> = pairs.iter().map(|&(_, g)| to_box(g)).collect();
        mismatches += (OpeReport::from_boxes(&pred, &gt).unwrap() != want) as usize;
    }
    let gt = vec![BoundingBox::new(10.0, 10.0, 20.0, 20.0).unwrap(); 120];
    let cfg = VotProtocolConfig { anchor_spacing: 120, ..Default::default() };
    let perfect = vot_anchor_eval(&[gt.clone()], &gt, &cfg).unwrap();
    let mut lost = gt[..10].to_vec();
    lost.extend(std::iter::repeat(BoundingBox::new(200.0, 200.0, 20.0, 20.0).unwrap()).take(110));
    let failed = vot_anchor_eval(&[lost], &gt, &cfg).unwrap();
    let vot_ok = (perfect.eao, perfect.accuracy, perfect.robustness) == (1.0, 1.0, 1.0)
        && failed.robustness == 10.0 / 120.0;
    outcome(
        mismatches == 0 && vot_ok,
        format!(
            "100 randomized 10-frame cases, {mismatches} mismatches; anchor scenarios: perfect ({}, {}, {}), \
             fail-at-10 robustness {}",
            perfect.eao, perfect.accuracy, perfect.robustness, failed.robustness
        ),
    )
}

fn perturbation_metrics(runs: &SuiteRuns) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Array2::from_shape_fn((48, 48), |_| rng.random_range(30.0..220.0f64).round());
    let self_sim = ssim_gray(a.view(), a.view()).unwrap();
    let mut last = self_sim;
    let mut monotone = true;
    for sigma in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let mut noise = ChaCha8Rng::seed_from_u64(4);
        let b = a.mapv(|v| v + sigma * noise.random_range(-1.0..1.0f64));
        let s = ssim_gray(a.view(), b.view()).unwrap();
        monotone &= s < last;
        last = s;
    }
    let img = Image::from_gray(a);
    let l1_zero = l1_sparsity(&img, &img).unwrap();
    let abbg_ssim = runs
        .reports
        .iter()
        .find(|r| r.0 == AttackKind::Abbg)
        .unwrap()
        .1
        .aggregate
        .ssim_percent;
    outcome(
        self_sim == 100.0 && monotone && l1_zero == 0.0 && abbg_ssim >= 75.0,
        format!(
            "ssim(a,a) = {self_sim}, decreasing over 7 noise levels: {monotone}, l1 of zero delta {l1_zero}, \
             ABBG window SSIM {abbg_ssim:.2}"
        ),
    )
}

fn determinism(runs: &SuiteRuns, root: &Path) -> Outcome {
    let (_, _, first) = runs.reports.iter().find(|r| r.0 == AttackKind::Abbg).unwrap();
    let again = root.join("abbg_again");
    let baseline = root.join("none").join("report.json");
    cmd_attack(&attack_config(AttackKind::Abbg, &again), Some(&baseline)).expect("attack runs");
    let same = |name: &str| std::fs::read(first.join(name)).unwrap() == std::fs::read(again.join(name)).unwrap();
    let (csv, summary) = (same("report.csv"), same("summary.csv"));
    outcome(
        csv && summary,
        format!("second ABBG run: report.csv identical {csv}, summary.csv identical {summary}"),
    )
}

fn format_round_trips(root: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ppm_ok = true;
    for i in 0..20 {
        let (h, w) = (rng.random_range(1..40), rng.random_range(1..40));
        let img = Image::new(Array3::from_shape_simple_fn((h, w, 3), || rng.random_range(0..=255u8) as f64)).unwrap();
        let p = root.join(format!("rt{i}.ppm"));
        write_ppm(&img, &p).unwrap();
        ppm_ok &= read_ppm(&p).unwrap() == img;
    }
    let seq = synth_suite(&SuiteConfig { count: 1, frames: 4, ..Default::default() }, 1).unwrap().remove(0);
    let good = "10,10,16,16\n";
    let cases = [
        (format!("{good}{good}10,10,16\n{good}"), 3),
        (format!("{good}x,10,16,16\n{good}{good}"), 2),
        (format!("{good}{good}{good}10,10,-4,16\n"), 4),
        (format!("10,10,16,16,3\n{good}{good}{good}"), 1),
        (format!("{good}{good}{good}10,10,nan,16\n"), 4),
    ];
    let mut lines_ok = 0;
    for (i, (text, line)) in cases.iter().enumerate() {
        let dir = save_sequence(&seq, root.join(format!("bad{i}"))).unwrap();
        std::fs::write(dir.join(GROUNDTRUTH_FILE), text).unwrap();
        if let Err(Error::Parse { line: got, .. }) = load_sequence(&dir) {
            lines_ok += (got == *line) as usize;
        }
    }
    outcome(
        ppm_ok && lines_ok == cases.len(),
        format!("20 PPM round trips identical: {ppm_ok}; malformed groundtruth files with the right line: {lines_ok}/5"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let suite = synth_suite(&SuiteConfig::default(), SUITE_SEED).expect("suite");
    let runs = run_suite(root);

    let results = [
        ("gradient fidelity", gradient_fidelity()),
        ("box generation", generator_conformance()),
        ("box selection", selection_conformance()),
        ("perturbation budget", budget_conformance(&suite)),
        ("attack effectiveness", attack_effectiveness(&runs)),
        ("metric oracles", metric_oracle()),
        ("perturbation metrics", perturbation_metrics(&runs)),
        ("determinism", determinism(&runs, root)),
        ("format round trips", format_round_trips(root)),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.pass;
        println!(
            "criterion {} [{}] {}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    if !all {
        std::process::exit(1);
    }
}
