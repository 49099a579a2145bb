use super::gradcheck::{gradcheck, randomize_batch_norm, GradCheckOptions};
use super::*;
use crate::dataio::{Corpus, EmbeddingRecord, RiskClass};
use crate::numcore::{Matrix, SeededRng};
use crate::train::cross_entropy;
use crate::Error;
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn tiny() -> ArchConfig {
    ArchConfig { d_text: 5, d_image: 3, d_model: 8, layers: 1, heads: 2, ff_mult: 4, dropout: 0.2 }
}

fn gradcfg() -> ArchConfig {
    ArchConfig { d_text: 6, d_image: 5, d_model: 16, layers: 2, heads: 4, ff_mult: 4, dropout: 0.2 }
}

/// Scalar re-implementation of the eval-mode forward pass, one sample at a time.
mod oracle {
    use super::super::{BatchNorm, FusionModel, Linear};

    fn gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
    }

    fn linear(l: &Linear, x: &[f64]) -> Vec<f64> {
        let (din, dout) = l.weight.shape();
        (0..dout).map(|o| l.bias[o] + (0..din).map(|i| x[i] * l.weight[(i, o)]).sum::<f64>()).collect()
    }

    fn bn(b: &BatchNorm, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| b.gamma[j] * (v - b.running_mean[j]) / (b.running_var[j] + 1e-5).sqrt() + b.beta[j])
            .collect()
    }

    fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
        x.iter().enumerate().map(|(j, a)| g[j] * (a - m) / (v + 1e-5).sqrt() + b[j]).collect()
    }

    fn matvec(w: &crate::numcore::Matrix, x: &[f64]) -> Vec<f64> {
        let (din, dout) = w.shape();
        (0..dout).map(|o| (0..din).map(|i| x[i] * w[(i, o)]).sum()).collect()
    }

    pub fn probs(m: &FusionModel, text: &[f64], image: &[f64]) -> Vec<f64> {
        let p = &m.params;
        let d = m.cfg.d_model;
        let h = m.cfg.heads;
        let dk = d / h;
        let t: Vec<f64> = bn(&p.text_proj.bn, &linear(&p.text_proj.linear, text)).into_iter().map(gelu).collect();
        let i: Vec<f64> = bn(&p.image_proj.bn, &linear(&p.image_proj.linear, image)).into_iter().map(gelu).collect();
        let mut x = vec![t, i];
        for l in &p.layers {
            let q: Vec<Vec<f64>> = x.iter().map(|r| matvec(&l.wq, r)).collect();
            let k: Vec<Vec<f64>> = x.iter().map(|r| matvec(&l.wk, r)).collect();
            let v: Vec<Vec<f64>> = x.iter().map(|r| matvec(&l.wv, r)).collect();
            let mut ctx = vec![vec![0.0; d]; 2];
            for head in 0..h {
                for a in 0..2 {
                    let s: Vec<f64> = (0..2)
                        .map(|b| {
                            (0..dk).map(|c| q[a][head * dk + c] * k[b][head * dk + c]).sum::<f64>() / (dk as f64).sqrt()
                        })
                        .collect();
                    let e: Vec<f64> = s.iter().map(|z| z.exp()).collect();
                    let z: f64 = e.iter().sum();
                    for b in 0..2 {
                        for c in 0..dk {
                            ctx[a][head * dk + c] += e[b] / z * v[b][head * dk + c];
                        }
                    }
                }
            }
            let mut next = Vec::new();
            for a in 0..2 {
                let o = matvec(&l.wo, &ctx[a]);
                let r1: Vec<f64> = x[a].iter().zip(&o).map(|(u, w)| u + w).collect();
                let h1 = ln(&r1, &l.ln1_gamma, &l.ln1_beta);
                let f: Vec<f64> = linear(&l.ff1, &h1).into_iter().map(gelu).collect();
                let f2 = linear(&l.ff2, &f);
                let r2: Vec<f64> = h1.iter().zip(&f2).map(|(u, w)| u + w).collect();
                next.push(ln(&r2, &l.ln2_gamma, &l.ln2_beta));
            }
            x = next;
        }
        let fused: Vec<f64> = x.concat();
        let a1 = bn(&p.head.bn1, &linear(&p.head.fc1, &fused).into_iter().map(gelu).collect::<Vec<_>>());
        let a2 = bn(&p.head.bn2, &linear(&p.head.fc2, &a1).into_iter().map(gelu).collect::<Vec<_>>());
        let logits = linear(&p.head.fc3, &a2);
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }
}

fn zero_model(cfg: &ArchConfig) -> FusionModel {
    let mut m = init_model(cfg, &mut SeededRng::new(0)).unwrap();
    for (_, kind, s) in m.params.tensors_mut() {
        if kind == TensorKind::Trainable {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    m.set_mode(Mode::Eval);
    m
}

#[test]
fn zero_model_is_uniform() {
    let m = zero_model(&tiny());
    let mut rng = SeededRng::new(1);
    let out = m.forward(&random(4, 5, &mut rng), &random(4, 3, &mut rng), &mut rng).unwrap();
    for r in out.probs.row_iter() {
        for p in r {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }
    assert!(out.logits.data().iter().all(|&z| z == 0.0));
}

#[test]
fn zero_model_logit_gradient_is_uniform_minus_onehot() {
    let m = zero_model(&tiny());
    let mut rng = SeededRng::new(1);
    let out = m.forward(&random(3, 5, &mut rng), &random(3, 3, &mut rng), &mut rng).unwrap();
    // fc3 bias gradient = Σ_b dlogits_b = Σ_b (1/3 − e_k)/B.
    let labels = [0, 2, 2];
    let g = m.backward(&out.cache, &labels).unwrap();
    let expect = [1.0 / 3.0 - 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0 - 2.0 / 3.0];
    for (a, e) in g.params.head.fc3.bias.iter().zip(expect) {
        assert!((a - e).abs() < 1e-15, "{a} vs {e}");
    }
}

#[test]
fn forward_matches_scalar_oracle() {
    let mut rng = SeededRng::new(77);
    let mut m = init_model(&tiny(), &mut rng).unwrap();
    randomize_batch_norm(&mut m, &mut rng);
    for l in &mut m.params.layers {
        for v in l.ln1_gamma.iter_mut().chain(l.ln2_beta.iter_mut()) {
            *v += 0.3 * rng.normal();
        }
        for v in l.ff1.bias.iter_mut() {
            *v = 0.1 * rng.normal();
        }
    }
    m.set_mode(Mode::Eval);
    let t = random(5, 5, &mut rng);
    let i = random(5, 3, &mut rng);
    let out = m.forward(&t, &i, &mut rng).unwrap();
    for b in 0..5 {
        let o = oracle::probs(&m, t.row(b), i.row(b));
        for (x, y) in out.probs.row(b).iter().zip(&o) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }
}

#[test]
fn batch_of_one_needs_eval_mode() {
    let mut m = init_model(&tiny(), &mut SeededRng::new(1)).unwrap();
    let mut rng = SeededRng::new(2);
    let (t, i) = (random(1, 5, &mut rng), random(1, 3, &mut rng));
    assert!(matches!(m.forward(&t, &i, &mut rng), Err(Error::BatchSize(_))));
    m.set_mode(Mode::Eval);
    assert!(m.forward(&t, &i, &mut rng).is_ok());
    assert!(matches!(m.forward(&random(1, 4, &mut rng), &i, &mut rng), Err(Error::Shape(_))));
    assert!(matches!(m.forward(&t, &random(2, 3, &mut rng), &mut rng), Err(Error::Shape(_))));
}

#[test]
fn stale_cache_is_a_contract_error() {
    let m = init_model(&tiny(), &mut SeededRng::new(1)).unwrap();
    let mut rng = SeededRng::new(2);
    let out = m.forward(&random(4, 5, &mut rng), &random(4, 3, &mut rng), &mut rng).unwrap();
    assert!(matches!(m.backward(&out.cache, &[0, 1, 2]), Err(Error::Contract(_))));
}

fn check_seed(seed: u64, batch_stats: bool) {
    let mut rng = SeededRng::new(seed);
    let mut m = init_model(&gradcfg(), &mut rng).unwrap();
    randomize_batch_norm(&mut m, &mut rng);
    let b = 4;
    let t = random(b, 6, &mut rng);
    let i = random(b, 5, &mut rng);
    let labels: Vec<usize> = (0..b).map(|_| rng.below(3)).collect();
    let pass = PassConfig { batch_stats, dropout: false };
    let report = gradcheck(&m, &t, &i, &labels, pass, GradCheckOptions::default()).unwrap();
    assert_eq!(report.groups.len(), m.params.trainable().len());
    for g in &report.groups {
        assert!(
            g.passed,
            "seed {seed} batch_stats {batch_stats}: {} rel {:e} abs {:e}",
            g.name, g.max_rel_err, g.max_abs_err
        );
    }
}

#[test]
fn gradients_match_finite_differences_frozen_bn() {
    for seed in [1, 2, 3] {
        check_seed(seed, false);
    }
}

#[test]
fn gradients_match_finite_differences_batch_bn() {
    for seed in [4, 5, 6] {
        check_seed(seed, true);
    }
}

#[test]
fn perturbed_gradient_is_detected() {
    let mut rng = SeededRng::new(9);
    let m = init_model(&tiny(), &mut rng).unwrap();
    let t = random(3, 5, &mut rng);
    let i = random(3, 3, &mut rng);
    let pass = PassConfig::EVAL;
    let mut g = gradcheck::analytic_gradients(&m, &t, &i, &[0, 1, 2], pass).unwrap();
    g.params.head.fc3.weight.data_mut()[0] += 1e-2;
    let r = gradcheck::gradcheck_against(&m, &t, &i, &[0, 1, 2], pass, &g, GradCheckOptions::default()).unwrap();
    assert!(!r.passed);
    assert_eq!(r.groups.iter().filter(|g| !g.passed).count(), 1);
}

#[test]
fn duplicating_the_batch_leaves_gradients_unchanged() {
    let mut rng = SeededRng::new(12);
    let mut m = init_model(&tiny(), &mut rng).unwrap();
    randomize_batch_norm(&mut m, &mut rng);
    let t = random(3, 5, &mut rng);
    let i = random(3, 3, &mut rng);
    let y = [2, 0, 1];
    let t2 = Matrix::new(6, 5, [t.data(), t.data()].concat()).unwrap();
    let i2 = Matrix::new(6, 3, [i.data(), i.data()].concat()).unwrap();
    let y2 = [y, y].concat();
    for pass in [PassConfig::EVAL, PassConfig { batch_stats: true, dropout: false }] {
        let g1 = gradcheck::analytic_gradients(&m, &t, &i, &y, pass).unwrap();
        let g2 = gradcheck::analytic_gradients(&m, &t2, &i2, &y2, pass).unwrap();
        assert!(g1.max_abs_diff(&g2) < 1e-10, "{}", g1.max_abs_diff(&g2));
    }
}

#[test]
fn batch_permutation_permutes_outputs() {
    let mut rng = SeededRng::new(5);
    let mut m = init_model(&tiny(), &mut rng).unwrap();
    m.set_mode(Mode::Eval);
    let t = random(6, 5, &mut rng);
    let i = random(6, 3, &mut rng);
    let perm = [3, 0, 5, 1, 4, 2];
    let a = m.forward(&t, &i, &mut rng).unwrap().probs;
    let b = m.forward(&t.select_rows(&perm), &i.select_rows(&perm), &mut rng).unwrap().probs;
    for (k, &p) in perm.iter().enumerate() {
        for c in 0..3 {
            assert!((a[(p, c)] - b[(k, c)]).abs() < 1e-14);
        }
    }
}

#[test]
fn eval_mode_is_deterministic() {
    let mut rng = SeededRng::new(5);
    let mut m = init_model(&tiny(), &mut rng).unwrap();
    m.set_mode(Mode::Eval);
    let t = random(4, 5, &mut rng);
    let i = random(4, 3, &mut rng);
    let a = m.forward(&t, &i, &mut SeededRng::new(1)).unwrap();
    let b = m.forward(&t, &i, &mut SeededRng::new(2)).unwrap();
    assert_eq!(a.probs, b.probs);
    assert_eq!(a.logits, b.logits);
}

#[test]
fn modalities_are_not_interchangeable() {
    let cfg = ArchConfig { d_image: 5, ..tiny() };
    let mut rng = SeededRng::new(8);
    let mut m = init_model(&cfg, &mut rng).unwrap();
    m.set_mode(Mode::Eval);
    let x = random(3, 5, &mut rng);
    let z = random(3, 5, &mut rng);
    let a = m.forward(&x, &z, &mut rng).unwrap().probs;
    let b = m.forward(&z, &x, &mut rng).unwrap().probs;
    assert!(a.max_abs_diff(&b) > 1e-6);
}

#[test]
fn dropout_only_in_training_and_replayed_in_backward() {
    let mut rng = SeededRng::new(3);
    let m = init_model(&tiny(), &mut rng).unwrap();
    let t = random(4, 5, &mut rng);
    let i = random(4, 3, &mut rng);
    let a = m.forward(&t, &i, &mut SeededRng::new(1)).unwrap();
    let b = m.forward(&t, &i, &mut SeededRng::new(2)).unwrap();
    assert!(a.probs.max_abs_diff(&b.probs) > 0.0);
    // With masks fixed by the stream, the analytic gradient of the masked
    // network matches finite differences of the same masked network.
    let y = [0, 1, 2, 1];
    let g = m.backward(&a.cache, &y).unwrap();
    let name = "head.fc1_weight";
    let (idx, _) = m.params.trainable().iter().enumerate().find(|(_, (n, _))| n == name).unwrap();
    let theta = m.params.trainable()[idx].1.to_vec();
    let mut work = m.clone();
    let num = crate::numcore::finite_diff_grad(
        |th: &[f64]| {
            work.params.trainable_mut()[idx].1.copy_from_slice(th);
            let out = work.forward(&t, &i, &mut SeededRng::new(1)).unwrap();
            cross_entropy(&out.logits, &y).unwrap()
        },
        &theta,
        1e-5,
    )
    .unwrap();
    let an = g.tensors()[idx].1.to_vec();
    for (x, n) in an.iter().zip(&num) {
        assert!(gradcheck::relative_error(*x, *n, 1e-6) < 1e-4);
    }
}

#[test]
fn attention_rows_are_normalised() {
    let mut rng = SeededRng::new(31);
    let m = init_model(&gradcfg(), &mut rng).unwrap();
    let out = m.forward(&random(5, 6, &mut rng), &random(5, 5, &mut rng), &mut rng).unwrap();
    for l in 0..out.cache.n_layers() {
        for row in out.cache.attention(l).chunks(TOKENS) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn running_stats_update_only_on_request() {
    let mut rng = SeededRng::new(2);
    let mut m = init_model(&tiny(), &mut rng).unwrap();
    let before = m.clone();
    let out = m.forward(&random(4, 5, &mut rng), &random(4, 3, &mut rng), &mut rng).unwrap();
    assert_eq!(m, before);
    m.update_running_stats(&out.cache);
    assert_ne!(m.params.text_proj.bn.running_mean, before.params.text_proj.bn.running_mean);
}

fn corpus_from(t: &Matrix, i: Option<&Matrix>) -> Corpus {
    let recs = (0..t.rows())
        .map(|r| {
            EmbeddingRecord::new(
                format!("r{r}"),
                Some(RiskClass::new(1).unwrap()),
                t.row(r).to_vec(),
                i.map(|m| m.row(r).to_vec()),
            )
        })
        .collect();
    Corpus::new(recs, t.cols(), i.map_or(3, Matrix::cols)).unwrap()
}

#[test]
fn predict_cases() {
    let mut rng = SeededRng::new(6);
    let t = random(7, 5, &mut rng);
    let i = random(7, 3, &mut rng);
    let c = corpus_from(&t, Some(&i));
    let (labels, probs) = zero_model(&tiny()).predict(&c).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
    assert!(probs.row_iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));

    let mut m = init_model(&tiny(), &mut rng).unwrap();
    m.set_mode(Mode::Eval);
    let (labels, probs) = m.predict(&c).unwrap();
    let direct = m.forward(&t, &i, &mut rng).unwrap().probs;
    assert_eq!(probs, direct);
    assert_eq!(labels, direct.argmax_rows());

    let no_img = corpus_from(&t, None);
    assert!(matches!(m.predict(&no_img), Err(Error::Modality(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn outputs_stay_on_the_simplex(seed in 0u64..10_000, b in 2usize..6, scale in 0.1f64..50.0) {
        let mut rng = SeededRng::new(seed);
        let m = init_model(&tiny(), &mut rng).unwrap();
        let t = random(b, 5, &mut rng).scale(scale);
        let i = random(b, 3, &mut rng).scale(scale);
        let out = m.forward(&t, &i, &mut rng).unwrap();
        for r in out.probs.row_iter() {
            prop_assert!(r.iter().all(|&p| p >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for l in 0..out.cache.n_layers() {
            for row in out.cache.attention(l).chunks(TOKENS) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}
