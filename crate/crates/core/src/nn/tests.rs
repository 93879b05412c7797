use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{gradcheck, Graph, Tensor};
use crate::matrix::Matrix;

fn records(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn small_net(mode: CriticMode, seed: u64) -> PolicyValueNet {
    let cfg = EncoderConfig {
        input_dim: 5,
        model_dim: 8,
        num_heads: 2,
        num_layers: 2,
        ff_hidden_dim: 12,
    };
    PolicyValueNet::new(cfg, mode, seed).unwrap()
}

fn encode(net: &PolicyValueNet, x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let g = Graph::new();
    let ctx = Ctx::new(&g, net.params(), false);
    let (r, c) = net.encode_batch(&ctx, x).unwrap();
    (g.data(r), g.data(c))
}

#[test]
fn config_validation() {
    let mut cfg = EncoderConfig::new(4);
    assert!(cfg.validate().is_ok());
    cfg.num_heads = 5;
    assert!(cfg.validate().is_err());
    cfg.num_heads = 4;
    cfg.num_layers = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn input_dim_mismatch_is_an_error() {
    let net = small_net(CriticMode::ClsSb, 0);
    let g = Graph::new();
    let ctx = Ctx::new(&g, net.params(), false);
    assert!(net.encode_batch(&ctx, &records(3, 4, 0)).is_err());
}

#[test]
fn permutation_equivariance() {
    for seed in 0..5 {
        let net = small_net(CriticMode::ClsSb, seed);
        let x = records(7, 5, seed + 100);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let (emb, cls) = encode(&net, &x);
        let (pemb, pcls) = encode(&net, &x.select_rows(&perm));
        for (a, b) in cls.iter().zip(&pcls) {
            assert!((a - b).abs() < 1e-9);
        }
        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..8 {
                assert!((pemb[new_row * 8 + j] - emb[old_row * 8 + j]).abs() < 1e-9);
            }
        }
        let mut p = net.probabilities(&x).unwrap();
        let mut q = net.probabilities(&x.select_rows(&perm)).unwrap();
        p.sort_by(f64::total_cmp);
        q.sort_by(f64::total_cmp);
        assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

#[test]
fn single_record_attention_rows_normalised() {
    let net = small_net(CriticMode::ClsSb, 1);
    let g = Graph::new();
    let ctx = Ctx::new(&g, net.params(), false);
    let (_, _, maps) = net.encode_batch_with_attention(&ctx, &records(1, 5, 3)).unwrap();
    assert_eq!(maps.len(), 2 * 2);
    for m in maps {
        assert_eq!(g.shape(m), vec![2, 2]);
        for row in g.data(m).chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

/// Plain-loop forward pass of the encoder stack, independent of the graph.
fn reference_encode(net: &PolicyValueNet, x: &Matrix) -> Vec<Vec<f64>> {
    let p = net.params();
    let by_name = |name: &str| {
        p.iter()
            .find(|(_, n, _)| *n == name)
            .map(|(_, _, t)| t.clone())
            .unwrap_or_else(|| panic!("{name}"))
    };
    let affine = |rows: &[Vec<f64>], name: &str| -> Vec<Vec<f64>> {
        let w = by_name(&format!("{name}.weight"));
        let b = by_name(&format!("{name}.bias"));
        let (i, o) = (w.shape()[0], w.shape()[1]);
        rows.iter()
            .map(|r| (0..o).map(|c| b.data()[c] + (0..i).map(|k| r[k] * w.data()[k * o + c]).sum::<f64>()).collect())
            .collect()
    };
    let norm = |rows: Vec<Vec<f64>>, name: &str| -> Vec<Vec<f64>> {
        let gam = by_name(&format!("{name}.gamma"));
        let bet = by_name(&format!("{name}.beta"));
        rows.into_iter()
            .map(|r| {
                let n = r.len() as f64;
                let mu = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                r.iter()
                    .enumerate()
                    .map(|(j, v)| (v - mu) / (var + LAYER_NORM_EPS).sqrt() * gam.data()[j] + bet.data()[j])
                    .collect()
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    let mut h = vec![by_name("cls_token").data().to_vec()];
    h.extend(affine(&rows, "vectorizer"));
    let (d, heads) = (8, 2);
    let dk = d / heads;
    for l in 0..2 {
        let q = affine(&h, &format!("encoder{l}.attn.q"));
        let k = affine(&h, &format!("encoder{l}.attn.k"));
        let v = affine(&h, &format!("encoder{l}.attn.v"));
        let t = h.len();
        let mut merged = vec![vec![0.0; d]; t];
        for hd in 0..heads {
            for i in 0..t {
                let s: Vec<f64> = (0..t)
                    .map(|j| (0..dk).map(|c| q[i][hd * dk + c] * k[j][hd * dk + c]).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                for j in 0..t {
                    let a = (s[j] - m).exp() / z;
                    for c in 0..dk {
                        merged[i][hd * dk + c] += a * v[j][hd * dk + c];
                    }
                }
            }
        }
        let o = affine(&merged, &format!("encoder{l}.attn.o"));
        let res: Vec<Vec<f64>> = h.iter().zip(&o).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let x1 = norm(res, &format!("encoder{l}.ln1"));
        let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
        let f1: Vec<Vec<f64>> = affine(&x1, &format!("encoder{l}.ff1")).into_iter().map(|r| r.into_iter().map(gelu).collect()).collect();
        let f2 = affine(&f1, &format!("encoder{l}.ff2"));
        let res: Vec<Vec<f64>> = x1.iter().zip(&f2).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        h = norm(res, &format!("encoder{l}.ln2"));
    }
    h
}

#[test]
fn duplicated_rows_match_reference_forward() {
    let net = small_net(CriticMode::ClsSb, 4);
    let base = records(4, 5, 9);
    // rows 1 and 3 are identical
    let x = base.select_rows(&[0, 1, 2, 1]);
    let (emb, cls) = encode(&net, &x);
    let reference = reference_encode(&net, &x);
    for (j, v) in cls.iter().enumerate() {
        assert!((v - reference[0][j]).abs() < 1e-10);
    }
    for i in 0..4 {
        for j in 0..8 {
            assert!((emb[i * 8 + j] - reference[i + 1][j]).abs() < 1e-10);
        }
    }
    assert_eq!(&emb[8..16], &emb[24..32]);
}

#[test]
fn zero_actor_head_gives_half() {
    let mut net = small_net(CriticMode::ClsSb, 2);
    let (w, b) = (net.actor_head().weight, net.actor_head().bias);
    net.params_mut().get_mut(w).data_mut().fill(0.0);
    net.params_mut().get_mut(b).data_mut().fill(0.0);
    let p = net.probabilities(&records(6, 5, 1)).unwrap();
    assert!(p.iter().all(|&v| v == 0.5));
}

#[test]
fn probabilities_strictly_inside_unit_interval() {
    let net = small_net(CriticMode::ClsSb, 3);
    let mut x = records(10, 5, 2);
    x.as_mut_slice().iter_mut().for_each(|v| *v *= 50.0);
    let p = net.probabilities(&x).unwrap();
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn raising_one_score_moves_only_that_probability() {
    let g = Graph::new();
    let logits = vec![-0.3, 0.2, 1.1, -2.0];
    let mut bumped = logits.clone();
    bumped[2] += 0.5;
    let p = g.data(g.sigmoid(g.constant(Tensor::vector(logits))));
    let q = g.data(g.sigmoid(g.constant(Tensor::vector(bumped))));
    for i in 0..4 {
        if i == 2 {
            assert!(q[i] > p[i]);
        } else {
            assert_eq!(q[i], p[i]);
        }
    }
}

fn critic(net: &PolicyValueNet, cls: Vec<f64>, sb: f64) -> f64 {
    let g = Graph::new();
    let ctx = Ctx::new(&g, net.params(), false);
    let c = g.constant(Tensor::vector(cls));
    g.scalar(net.critic_value(&ctx, c, sb).unwrap())
}

#[test]
fn critic_modes_see_the_right_inputs() {
    let cls = vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4, 0.2, 0.9];
    let other: Vec<f64> = cls.iter().map(|v| v + 0.7).collect();

    let sb = small_net(CriticMode::Sb, 5);
    assert_eq!(critic(&sb, cls.clone(), 0.8), critic(&sb, other.clone(), 0.8));
    assert_ne!(critic(&sb, cls.clone(), 0.8), critic(&sb, cls.clone(), 0.6));

    let c = small_net(CriticMode::Cls, 5);
    assert_eq!(critic(&c, cls.clone(), 0.8), critic(&c, cls.clone(), 0.1));
    assert_ne!(critic(&c, cls.clone(), 0.8), critic(&c, other.clone(), 0.8));

    let both = small_net(CriticMode::ClsSb, 5);
    let v0 = critic(&both, cls.clone(), 0.8);
    assert!((critic(&both, other, 0.8) - v0).abs() > 1e-6);
    assert!((critic(&both, cls, 0.6) - v0).abs() > 1e-6);
}

#[test]
fn critic_mode_parsing() {
    assert_eq!("cls+sb".parse::<CriticMode>().unwrap(), CriticMode::ClsSb);
    assert_eq!("SB".parse::<CriticMode>().unwrap(), CriticMode::Sb);
    assert!("both".parse::<CriticMode>().is_err());
}

#[test]
fn full_network_gradient_check() {
    let net = small_net(CriticMode::ClsSb, 7);
    let x = records(4, 5, 11);
    let r = gradcheck::check_params(net.params(), 1e-5, |g, p, train| {
        let ctx = Ctx::new(g, p, train);
        let out = net.forward(&ctx, &x, 0.7)?;
        let w = g.constant(Tensor::vector(vec![0.3, -1.2, 0.8, 0.5]));
        let a = g.sum(g.mul(g.log(out.probs), w)?);
        g.add(a, g.mul(out.value, out.value)?)
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-3, "{r:?}");
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_net(CriticMode::Cls, 8);
    net.save(dir.path(), "agent").unwrap();
    let back = PolicyValueNet::load(dir.path(), "agent").unwrap();
    let x = records(3, 5, 4);
    assert_eq!(net.evaluate(&x, 0.5).unwrap(), back.evaluate(&x, 0.5).unwrap());
    assert_eq!(back.critic_mode(), CriticMode::Cls);
}
