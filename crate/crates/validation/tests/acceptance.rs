//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use turbo_cli::commands;
use turbo_cli::config::RunConfig;
use turbo_core::data::{generate_synthetic, Dataset, SyntheticConfig};
use turbo_core::encoder::{BoundModel, RepresentationQuad, TurboModel};
use turbo_core::losses::{info_nce, turbo_loss, ContrastiveConfig, LossBreakdown};
use turbo_core::metrics::{alignment, classification_report, equal_error_rate, uniformity};
use turbo_core::numerics::{
    grad_check, grad_check_many, sample_dropout_mask, RngState, Tape, Tensor, Var,
};
use turbo_core::trainer::{
    batch_objective, evaluate_split, fit_with_observer, plan_splits, run_comparison,
    ComparisonReport, Method, TrainConfig,
};
use turbo_validation::{binary_data, standard_data, standard_train, SEEDS};

type UnaryOp<'a> = Box<dyn Fn(&mut Tape, Var) -> turbo_core::Result<Var> + 'a>;
type BinaryOp = Box<dyn Fn(&mut Tape, Var, Var) -> turbo_core::Result<Var>>;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn random_tensor(rng: &mut RngState, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.uniform_range(lo, hi)).collect(),
    )
    .unwrap()
}

/// `Σ w ⊙ out` for a fixed random `w`, reducing any op output to a scalar.
fn weighted(tape: &mut Tape, out: Var, seed: u64) -> turbo_core::Result<Var> {
    let w = random_tensor(
        &mut RngState::new(seed, "weights"),
        tape.shape(out),
        -1.0,
        1.0,
    );
    let w = tape.constant(&w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0_f64;
    let mut worst_op = "";
    let mut note = |op: &'static str, err: f64| {
        if err > worst {
            worst = err;
            worst_op = op;
        }
    };
    for seed in 0..10u64 {
        let mut rng = RngState::new(seed, "gradient-suite");
        let a = random_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let b = random_tensor(&mut rng, &[4, 2], -2.0, 2.0);
        let c = random_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let bias = random_tensor(&mut rng, &[4], -2.0, 2.0);
        let pos = random_tensor(&mut rng, &[3, 4], 0.2, 2.0);
        let mask = sample_dropout_mask(&mut rng, &[3, 4], 0.3).unwrap();
        let h = 1e-6;
        let unary: [(&'static str, UnaryOp); 11] = [
            ("transpose", Box::new(|t: &mut Tape, x: Var| t.transpose(x))),
            (
                "scale",
                Box::new(|t: &mut Tape, x: Var| Ok(t.scale(x, -1.7))),
            ),
            ("tanh", Box::new(|t: &mut Tape, x: Var| Ok(t.tanh(x)))),
            ("square", Box::new(|t: &mut Tape, x: Var| Ok(t.square(x)))),
            (
                "apply_dropout",
                Box::new(|t: &mut Tape, x: Var| t.apply_dropout(x, &mask)),
            ),
            (
                "row_softmax",
                Box::new(|t: &mut Tape, x: Var| t.row_softmax(x)),
            ),
            (
                "log_softmax_rows",
                Box::new(|t: &mut Tape, x: Var| t.log_softmax_rows(x)),
            ),
            (
                "l2_normalize_rows",
                Box::new(|t: &mut Tape, x: Var| t.l2_normalize_rows(x, 1e-12)),
            ),
            (
                "pick_per_row",
                Box::new(|t: &mut Tape, x: Var| t.pick_per_row(x, &[3, 0, 1])),
            ),
            ("sum", Box::new(|t: &mut Tape, x: Var| Ok(t.sum(x)))),
            ("mean", Box::new(|t: &mut Tape, x: Var| Ok(t.mean(x)))),
        ];
        for (name, op) in &unary {
            let err = grad_check(
                |t, x| {
                    let y = op(t, x)?;
                    weighted(t, y, seed)
                },
                &a,
                h,
            )
            .unwrap();
            note(name, err);
        }
        let err = grad_check(
            |t, x| {
                let y = t.log_floor(x, 1e-12);
                weighted(t, y, seed)
            },
            &pos,
            h,
        )
        .unwrap();
        note("log_floor", err);
        let binary: [(&'static str, &Tensor, BinaryOp); 5] = [
            (
                "matmul",
                &b,
                Box::new(|t: &mut Tape, x: Var, y: Var| t.matmul(x, y)),
            ),
            (
                "add",
                &c,
                Box::new(|t: &mut Tape, x: Var, y: Var| t.add(x, y)),
            ),
            (
                "mul",
                &c,
                Box::new(|t: &mut Tape, x: Var, y: Var| t.mul(x, y)),
            ),
            (
                "concat_cols",
                &b,
                Box::new(|t: &mut Tape, x: Var, y: Var| {
                    let yt = t.matmul(x, y)?;
                    t.concat_cols(x, yt)
                }),
            ),
            (
                "cosine_similarity_matrix",
                &c,
                Box::new(|t: &mut Tape, x: Var, y: Var| t.cosine_similarity_matrix(x, y)),
            ),
        ];
        for (name, other, op) in &binary {
            let err = grad_check_many(
                |t, v| {
                    let y = op(t, v[0], v[1])?;
                    weighted(t, y, seed)
                },
                &[a.clone(), (*other).clone()],
                h,
            )
            .unwrap();
            note(name, err);
        }
        let err = grad_check_many(
            |t, v| {
                let y = t.add_bias(v[0], v[1])?;
                weighted(t, y, seed)
            },
            &[a.clone(), bias.clone()],
            h,
        )
        .unwrap();
        note("add_bias", err);
    }

    let ds = generate_synthetic(&SyntheticConfig {
        classes: 2,
        samples_per_class: 2,
        latent_dim: 3,
        d1: 5,
        d2: 4,
        noise: 0.5,
        seed: 3,
    })
    .unwrap();
    let idx = [0, 1, 2, 3];
    for method in Method::ALL {
        let cfg = TrainConfig {
            method,
            joint_dim: 3,
            hidden_dims: vec![6],
            temperature: 0.5,
            ..TrainConfig::default()
        };
        let (ac, tc) = cfg.encoder_configs(ds.d1, ds.d2);
        let model = TurboModel::init(ac, tc, 2, &RngState::new(1, "gc-model")).unwrap();
        let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let (audio, text, labels) = (ds.audio(&idx), ds.text(&idx), ds.labels(&idx));
        let rng = RngState::new(5, "gc-masks");
        let err = grad_check_many(
            |tape, vars| {
                let bound: BoundModel = model.bind_vars(vars)?;
                let a = tape.constant(&audio);
                let t = tape.constant(&text);
                Ok(batch_objective(tape, &bound, a, t, &labels, &cfg, &rng, true)?.total)
            },
            &params,
            1e-6,
        )
        .unwrap();
        note(
            match method {
                Method::Vanilla => "objective[vanilla]",
                Method::ClCross => "objective[cl_cross]",
                Method::Turbo => "objective[turbo]",
            },
            err,
        );
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        "gradient suite",
        worst < 1e-4 && secs < 60.0,
        format!("worst rel err {worst:.2e} ({worst_op}) in {secs:.1} s; need < 1e-4 and < 60 s"),
    )
}

fn brute_info_nce(anchor: &Tensor, cand: &Tensor, tau: f64) -> f64 {
    let n = anchor.rows();
    let cos = |i: usize, j: usize| {
        let (u, v) = (anchor.row(i), cand.row(j));
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        dot / (nu * nv)
    };
    let mut total = 0.0;
    for i in 0..n {
        let num = (cos(i, i) / tau).exp();
        let den: f64 = (0..n).map(|j| (cos(i, j) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

fn info_nce_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for tau in [0.07, 0.5, 1.0] {
        for k in 0..50u64 {
            let n = 2 + (k % 3) as usize;
            let mut rng = RngState::new(k, format!("nce/{tau}"));
            let a = random_tensor(&mut rng, &[n, 5], -1.0, 1.0);
            let c = random_tensor(&mut rng, &[n, 5], -1.0, 1.0);
            let mut tape = Tape::new();
            let (va, vc) = (tape.constant(&a), tape.constant(&c));
            let loss = info_nce(&mut tape, va, vc, tau).unwrap();
            worst = worst.max((tape.scalar(loss) - brute_info_nce(&a, &c, tau)).abs());
            cases += 1;
        }
    }
    outcome(
        "InfoNCE oracle",
        worst <= 1e-9,
        format!("{cases} batches, max abs diff {worst:.2e}; need <= 1e-9"),
    )
}

fn analytic_anchors() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = RngState::new(0, "anchors");
    let one = random_tensor(&mut rng, &[1, 4], -1.0, 1.0);
    let other = random_tensor(&mut rng, &[1, 4], -1.0, 1.0);
    let mut tape = Tape::new();
    let (x, y) = (tape.constant(&one), tape.constant(&other));
    let l = info_nce(&mut tape, x, y, 0.07).unwrap();
    if tape.scalar(l) != 0.0 {
        failures.push(format!("N=1 InfoNCE = {}", tape.scalar(l)));
    }

    let ds = generate_synthetic(&SyntheticConfig {
        classes: 3,
        samples_per_class: 4,
        latent_dim: 3,
        d1: 6,
        d2: 5,
        noise: 0.5,
        seed: 2,
    })
    .unwrap();
    let idx: Vec<usize> = (0..8).collect();
    for lambda in [1.0, 0.0] {
        let cfg = TrainConfig {
            lambda,
            joint_dim: 4,
            hidden_dims: vec![8],
            ..TrainConfig::default()
        };
        let (ac, tc) = cfg.encoder_configs(ds.d1, ds.d2);
        let model = TurboModel::init(ac, tc, 3, &RngState::new(4, "anchor-model")).unwrap();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let a = tape.constant(&ds.audio(&idx));
        let t = tape.constant(&ds.text(&idx));
        let obj = batch_objective(
            &mut tape,
            &bound,
            a,
            t,
            &ds.labels(&idx),
            &cfg,
            &RngState::new(6, "m"),
            true,
        )
        .unwrap();
        let b = obj.breakdown(&tape);
        let expected = if lambda == 1.0 { b.ce } else { b.turbo };
        if b.total != expected {
            failures.push(format!("lambda={lambda}: total {} != {expected}", b.total));
        }
    }

    let cfg = TrainConfig {
        dropout: 0.0,
        joint_dim: 4,
        hidden_dims: vec![8],
        ..TrainConfig::default()
    };
    let (ac, tc) = cfg.encoder_configs(ds.d1, ds.d2);
    let model = TurboModel::init(ac, tc, 3, &RngState::new(4, "anchor-model")).unwrap();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let a = tape.constant(&ds.audio(&idx));
    let t = tape.constant(&ds.text(&idx));
    let quad: RepresentationQuad = bound
        .dual_forward(&mut tape, a, t, &RngState::new(8, "p0"))
        .unwrap();
    if tape.value(quad.h_a1) != tape.value(quad.h_a2)
        || tape.value(quad.h_t1) != tape.value(quad.h_t2)
    {
        failures.push("p=0 passes differ".into());
    }
    let terms = turbo_loss(&mut tape, &quad, &ContrastiveConfig::default()).unwrap();
    let cross: Vec<f64> = [
        terms.cross_11,
        terms.cross_12,
        terms.cross_21,
        terms.cross_22,
    ]
    .iter()
    .map(|v| tape.scalar(*v))
    .collect();
    if cross.iter().any(|c| *c != cross[0]) {
        failures.push(format!("p=0 cross terms differ: {cross:?}"));
    }
    let pass = failures.is_empty();
    outcome(
        "analytic anchors",
        pass,
        if pass {
            "N=1 InfoNCE = 0; lambda=1 total == ce; lambda=0 total == turbo; p=0 passes and cross terms bit-equal".into()
        } else {
            failures.join("; ")
        },
    )
}

fn breakdown_identities() -> Outcome {
    let ds = generate_synthetic(&SyntheticConfig {
        samples_per_class: 100,
        ..standard_data()
    })
    .unwrap();
    let mut worst = (0.0_f64, 0.0_f64);
    let mut steps = 0;
    let mut epochs_seen = 0;
    for method in [Method::Turbo, Method::ClCross] {
        let cfg = TrainConfig {
            method,
            max_epochs: 20,
            patience: 20,
            folds: 10,
            max_folds: Some(1),
            ..TrainConfig::default()
        };
        let split = &plan_splits(ds.len(), &cfg).unwrap()[0];
        let mut observe = |r: &turbo_core::trainer::StepRecord| {
            let b: &LossBreakdown = &r.breakdown;
            let parts = [
                b.in_a, b.in_t, b.cross_11, b.cross_12, b.cross_21, b.cross_22,
            ];
            let sum: f64 = parts.iter().sum();
            let blend = cfg.lambda * b.ce + (1.0 - cfg.lambda) * b.turbo;
            worst.0 = worst.0.max((b.turbo - sum).abs());
            worst.1 = worst.1.max((b.total - blend).abs());
            steps += 1;
        };
        let (_, report) = fit_with_observer(&ds, split, 0, &cfg, &mut observe).unwrap();
        epochs_seen += report.stopped_epoch;
    }
    let pass = worst.0 <= 1e-12 && worst.1 <= 1e-12 && epochs_seen == 40;
    outcome(
        "loss breakdown identities",
        pass,
        format!(
            "{steps} steps over 2 x 20 epochs: max |turbo - sum| {:.1e}, max |total - blend| {:.1e}; need <= 1e-12",
            worst.0, worst.1
        ),
    )
}

fn exhaustive_eer(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&th| {
            let mut fa = 0.0;
            let mut fr = 0.0;
            for (s, &l) in scores.iter().zip(labels) {
                if l && *s < th {
                    fr += 1.0;
                }
                if !l && *s >= th {
                    fa += 1.0;
                }
            }
            (fa / n_neg, fr / n_pos)
        })
        .collect();
    for w in curve.windows(2) {
        let (d0, d1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if d0 == 0.0 {
            return w[0].0;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].0 + t * (w[1].0 - w[0].0);
        }
    }
    let last = curve[curve.len() - 1];
    (0.5 * (last.0 + last.1)).clamp(0.0, 1.0)
}

fn metrics_oracles() -> Outcome {
    let mut failures = Vec::new();
    let t = |rows: &[[f64; 2]]| Tensor::from_rows(rows).unwrap();
    let s3 = 3f64.sqrt() / 2.0;
    let hand = [
        (
            "alignment A == T",
            alignment(
                &t(&[[1.0, 0.0], [0.0, 1.0]]),
                &t(&[[1.0, 0.0], [0.0, 1.0]]),
                2.0,
            )
            .unwrap(),
            0.0,
        ),
        (
            "alignment orthogonal",
            alignment(&t(&[[1.0, 0.0]]), &t(&[[0.0, 1.0]]), 2.0).unwrap(),
            2.0,
        ),
        (
            "alignment antipodal",
            alignment(&t(&[[1.0, 0.0]]), &t(&[[-1.0, 0.0]]), 2.0).unwrap(),
            4.0,
        ),
        (
            "uniformity identical",
            uniformity(&t(&[[1.0, 0.0], [1.0, 0.0]]), 2.0).unwrap(),
            0.0,
        ),
        (
            "uniformity antipodal",
            uniformity(&t(&[[1.0, 0.0], [-1.0, 0.0]]), 2.0).unwrap(),
            -8.0,
        ),
        (
            "uniformity 120 degrees",
            uniformity(&t(&[[1.0, 0.0], [-0.5, s3], [-0.5, -s3]]), 2.0).unwrap(),
            -6.0,
        ),
    ];
    for (name, got, want) in hand {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    }
    let mut eer_worst = 0.0_f64;
    for k in 0..100u64 {
        let mut rng = RngState::new(k, "eer-oracle");
        let n = 2 + (rng.uniform() * 99.0) as usize;
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        let levels = 1 + (rng.uniform() * 20.0) as usize;
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.uniform() * levels as f64).floor() / levels as f64)
            .collect();
        let got = equal_error_rate(&scores, &labels).unwrap();
        eer_worst = eer_worst.max((got - exhaustive_eer(&scores, &labels)).abs());
    }
    if eer_worst > 1e-12 {
        failures.push(format!("EER max diff {eer_worst:e}"));
    }
    let mut wa_ua_bad = 0;
    for k in 0..100u64 {
        let mut rng = RngState::new(k, "wa-ua");
        let c = 2 + (rng.uniform() * 4.0) as usize;
        let n = 1 + (rng.uniform() * 60.0) as usize;
        let labels: Vec<usize> = (0..n)
            .map(|_| (rng.uniform() * c as f64) as usize)
            .collect();
        let preds: Vec<usize> = (0..n)
            .map(|_| (rng.uniform() * c as f64) as usize)
            .collect();
        let r = classification_report(&preds, &labels, c).unwrap();
        let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        let wa = correct as f64 / n as f64;
        let mut recalls = Vec::new();
        for class in 0..c {
            let total = labels.iter().filter(|&&l| l == class).count();
            if total > 0 {
                let hit = preds
                    .iter()
                    .zip(&labels)
                    .filter(|(p, l)| **l == class && **p == class)
                    .count();
                recalls.push(hit as f64 / total as f64);
            }
        }
        let ua = recalls.iter().sum::<f64>() / recalls.len() as f64;
        if (r.wa - wa).abs() > 1e-12 || (r.ua - ua).abs() > 1e-12 || r.acc != r.wa {
            wa_ua_bad += 1;
        }
    }
    if wa_ua_bad > 0 {
        failures.push(format!("{wa_ua_bad} WA/UA mismatches"));
    }
    let pass = failures.is_empty();
    outcome(
        "metrics oracles",
        pass,
        if pass {
            format!("6 hand-derived values within 1e-12; EER vs exhaustive oracle on 100 instances max diff {eer_worst:.1e}; WA/UA match counting on 100 instances")
        } else {
            failures.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        train: TrainConfig {
            max_folds: Some(2),
            ..TrainConfig::default()
        },
        data: standard_data(),
        data_path: None,
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    commands::train(&cfg, &a).unwrap();
    commands::train(&cfg, &b).unwrap();
    let same = ["report.json", "model.json"]
        .iter()
        .all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());
    let bytes = fs::metadata(a.join("report.json")).unwrap().len();
    outcome(
        "determinism",
        same,
        format!(
            "two train runs, report.json ({bytes} bytes) and model.json byte-identical: {same}"
        ),
    )
}

fn table_one(report: &ComparisonReport, secs: f64) -> Outcome {
    let (v, c, t) = (
        report.row(Method::Vanilla),
        report.row(Method::ClCross),
        report.row(Method::Turbo),
    );
    let pass = t.wa >= c.wa && c.wa >= v.wa && t.wa - v.wa >= 0.02 && secs < 300.0;
    outcome(
        "directional WA ordering",
        pass,
        format!(
            "WA turbo {:.4}, cl_cross {:.4}, vanilla {:.4} (gap {:+.4}) in {secs:.0} s; need turbo >= cl_cross >= vanilla, gap >= 0.02, < 300 s",
            t.wa,
            c.wa,
            v.wa,
            t.wa - v.wa
        ),
    )
}

fn figure_two(report: &ComparisonReport) -> Outcome {
    let (v, c, t) = (
        report.row(Method::Vanilla),
        report.row(Method::ClCross),
        report.row(Method::Turbo),
    );
    let pass = t.alignment < v.alignment
        && t.uniformity_mean < c.uniformity_mean
        && c.uniformity_mean < v.uniformity_mean;
    outcome(
        "directional alignment/uniformity ordering",
        pass,
        format!(
            "alignment turbo {:.4} vs vanilla {:.4}; uniformity turbo {:.4}, cl_cross {:.4}, vanilla {:.4}; need align(turbo) < align(vanilla), unif turbo < cl_cross < vanilla",
            t.alignment, v.alignment, t.uniformity_mean, c.uniformity_mean, v.uniformity_mean
        ),
    )
}

fn binary_path() -> Outcome {
    let ds = generate_synthetic(&binary_data()).unwrap();
    let mut eers = Vec::new();
    for &seed in &SEEDS {
        let cfg = TrainConfig {
            seed,
            method: Method::Turbo,
            ..standard_train()
        };
        let (report, _) = turbo_core::trainer::run(&ds, &cfg).unwrap();
        eers.push(report.mean.eer.expect("binary task reports EER"));
    }
    let mean_eer = eers.iter().sum::<f64>() / eers.len() as f64;

    let mut chance_ok = true;
    let (mut acc_sum, mut eer_sum) = (0.0, 0.0);
    for seed in 0..10u64 {
        let small: Dataset = generate_synthetic(&SyntheticConfig {
            seed,
            samples_per_class: 100,
            ..binary_data()
        })
        .unwrap();
        let cfg = standard_train();
        let (ac, tc) = cfg.encoder_configs(small.d1, small.d2);
        let mut model = TurboModel::init(ac, tc, 2, &RngState::new(seed, "untrained")).unwrap();
        let head = &mut model.classifier.linear;
        head.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        head.bias.data_mut().iter_mut().for_each(|b| *b = 0.0);
        let idx: Vec<usize> = (0..small.len()).collect();
        let r = evaluate_split(&model, &small, &idx).unwrap();
        let eer = r.eer.unwrap();
        chance_ok &= (r.acc - 0.5).abs() <= 0.05 && (eer - 0.5).abs() <= 0.05;
        acc_sum += r.acc;
        eer_sum += eer;
    }
    outcome(
        "binary task path",
        mean_eer < 0.15 && chance_ok,
        format!(
            "trained turbo EER {mean_eer:.4} over 5 seeds (need < 0.15); untrained uniform classifier mean ACC {:.3}, EER {:.3} over 10 seeds (need 0.5 +- 0.05 each)",
            acc_sum / 10.0,
            eer_sum / 10.0
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results = vec![
        gradient_suite(),
        info_nce_oracle(),
        analytic_anchors(),
        breakdown_identities(),
        metrics_oracles(),
        determinism(),
    ];
    let ds = generate_synthetic(&standard_data()).unwrap();
    let t0 = Instant::now();
    let report = run_comparison(&ds, &standard_train(), &SEEDS).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    for r in &report.rows {
        println!(
            "  {:<9} WA {:.4} (sd {:.4})  UA {:.4}  align {:.4}  unif_a {:.4}  unif_t {:.4}",
            r.method.as_str(),
            r.wa,
            r.wa_std,
            r.ua,
            r.alignment,
            r.uniformity_audio,
            r.uniformity_text
        );
    }
    results.push(table_one(&report, secs));
    results.push(figure_two(&report));
    results.push(binary_path());

    let failed = results.iter().filter(|r| !r.pass).count();
    for r in &results {
        println!(
            "{} {}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
