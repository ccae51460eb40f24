//! The adapter forward pass against independent reference computations.

mod common;

use common::{random_matrix, TinyProtein};
use ses_adapter::adapter::{
    cross_attention_stage, predict, ses_forward, AdapterConfig, AdapterParams, ForwardInput, ParamNodes,
    StageParams,
};
use ses_adapter::matrix::gelu;
use ses_adapter::rng::Stream;
use ses_adapter::vocab::PAD;
use ses_adapter::{Matrix, Mode, Tape};

fn stage_output(stage: &StageParams, cfg: &AdapterConfig, query: &Matrix, kv: &Matrix, valid: usize) -> Matrix {
    let params = AdapterParams {
        stage_fs: Some(stage.clone()),
        stage_ss: None,
        head: ses_adapter::adapter::HeadParams::init(cfg.dim, 2, 0),
    };
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, &params);
    let q = tape.constant(query.clone());
    let kv = tape.constant(kv.clone());
    let out = cross_attention_stage(&mut tape, q, kv, nodes.stage_fs.as_ref().unwrap(), cfg, valid).unwrap();
    tape.value(out).clone()
}

fn identity_stage(d: usize) -> StageParams {
    StageParams {
        wq: Matrix::identity(d),
        wk: Matrix::identity(d),
        wv: Matrix::identity(d),
        wo: Matrix::identity(d),
        ..StageParams::init(d, 0, "id")
    }
}

fn random_stage(d: usize, seed: u64) -> StageParams {
    let r = |k: u64, rows: usize| random_matrix(rows, d, Stream::new(seed, "stage").split(k)).map(|v| 0.6 * v);
    StageParams {
        wq: r(0, d),
        wk: r(1, d),
        wv: r(2, d),
        wo: r(3, d),
        bq: r(4, 1),
        bk: r(5, 1),
        bv: r(6, 1),
        bo: r(7, 1),
        emb: r(8, 28),
    }
}

fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= tol, "{x} vs {y}\n{a:?}\n{b:?}");
    }
}

#[test]
fn two_by_two_identity_projections_by_hand() {
    let cfg = AdapterConfig {
        heads: 1,
        use_rope: false,
        ..AdapterConfig::new(2, 2)
    };
    let q = Matrix::from_rows(&[[1.0, 0.0], [0.5, -1.0]]);
    let kv = Matrix::from_rows(&[[2.0, 1.0], [0.0, 3.0]]);
    let out = stage_output(&identity_stage(2), &cfg, &q, &kv, 2);

    let r = 2f64.sqrt();
    // row 0: scores (2, 0)/√2 ; row 1: (1 - 1, -3)/√2 = (0, -3)/√2
    let w0 = {
        let (a, b) = ((2.0 / r).exp(), 0f64.exp());
        (a / (a + b), b / (a + b))
    };
    let w1 = {
        let (a, b) = (0f64.exp(), (-3.0 / r).exp());
        (a / (a + b), b / (a + b))
    };
    let expected = Matrix::from_rows(&[
        [w0.0 * 2.0 + w0.1 * 0.0, w0.0 * 1.0 + w0.1 * 3.0],
        [w1.0 * 2.0 + w1.1 * 0.0, w1.0 * 1.0 + w1.1 * 3.0],
    ]);
    assert_close(&out, &expected, 1e-12);
}

#[test]
fn identical_keys_give_mean_value_through_output_projection() {
    let d = 4;
    let cfg = AdapterConfig {
        heads: 2,
        use_rope: false,
        ..AdapterConfig::new(d, 2)
    };
    let mut stage = random_stage(d, 1);
    stage.wk = Matrix::zeros(d, d); // every key equals bk
    let q = random_matrix(3, d, Stream::new(2, "q"));
    let kv = random_matrix(3, d, Stream::new(3, "kv"));
    let out = stage_output(&stage, &cfg, &q, &kv, 3);

    let v = kv.matmul(&stage.wv).unwrap();
    let mut mean_v = vec![0.0; d];
    for r in 0..3 {
        for c in 0..d {
            mean_v[c] += (v.get(r, c) + stage.bv.get(0, c)) / 3.0;
        }
    }
    let row = Matrix::row_vector(&mean_v).matmul(&stage.wo).unwrap();
    for r in 0..3 {
        for c in 0..d {
            assert!((out.get(r, c) - row.get(0, c) - stage.bo.get(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn block_diagonal_two_heads_equal_two_single_head_attentions() {
    let (l, d) = (3, 4);
    let block = |seed: u64| {
        let a = random_matrix(2, 2, Stream::new(seed, "a"));
        let b = random_matrix(2, 2, Stream::new(seed, "b"));
        (a.clone(), b.clone(), Matrix::from_fn(4, 4, |r, c| match (r < 2, c < 2) {
            (true, true) => a.get(r, c),
            (false, false) => b.get(r - 2, c - 2),
            _ => 0.0,
        }))
    };
    let (qa, qb, wq) = block(10);
    let (ka, kb, wk) = block(11);
    let (va, vb, wv) = block(12);
    for use_rope in [false, true] {
        let two = AdapterConfig { heads: 2, use_rope, ..AdapterConfig::new(d, 2) };
        let one = AdapterConfig { heads: 1, use_rope, ..AdapterConfig::new(2, 2) };
        let query = random_matrix(l, d, Stream::new(13, "query"));
        let kv = random_matrix(l, d, Stream::new(14, "kv"));
        let full = stage_output(
            &StageParams { wq: wq.clone(), wk: wk.clone(), wv: wv.clone(), wo: Matrix::identity(d), ..StageParams::init(d, 0, "x") },
            &two,
            &query,
            &kv,
            l,
        );
        let half = |m: &Matrix, lo: usize| Matrix::from_fn(l, 2, |r, c| m.get(r, lo + c));
        let left = stage_output(
            &StageParams { wq: qa.clone(), wk: ka.clone(), wv: va.clone(), wo: Matrix::identity(2), ..StageParams::init(2, 0, "x") },
            &one,
            &half(&query, 0),
            &half(&kv, 0),
            l,
        );
        let right = stage_output(
            &StageParams { wq: qb.clone(), wk: kb.clone(), wv: vb.clone(), wo: Matrix::identity(2), ..StageParams::init(2, 0, "x") },
            &one,
            &half(&query, 2),
            &half(&kv, 2),
            l,
        );
        let joined = Matrix::from_fn(l, d, |r, c| if c < 2 { left.get(r, c) } else { right.get(r, c - 2) });
        assert_close(&full, &joined, 1e-12);
    }
}

/// Loop-level re-implementation: no tape, no shared matrix helpers.
mod reference {
    pub type M = Vec<Vec<f64>>;

    pub fn linear(x: &M, w: &ses_adapter::Matrix, b: &ses_adapter::Matrix) -> M {
        x.iter()
            .map(|row| {
                (0..w.cols())
                    .map(|j| b.get(0, j) + (0..row.len()).map(|i| row[i] * w.get(i, j)).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    pub fn rotate(v: &[f64], pos: usize, base: f64) -> Vec<f64> {
        let d = v.len();
        let mut out = v.to_vec();
        for i in 0..d / 2 {
            let theta = pos as f64 / base.powf(2.0 * i as f64 / d as f64);
            out[2 * i] = v[2 * i] * theta.cos() - v[2 * i + 1] * theta.sin();
            out[2 * i + 1] = v[2 * i] * theta.sin() + v[2 * i + 1] * theta.cos();
        }
        out
    }

    pub fn stage(query: &M, kv: &M, p: &ses_adapter::adapter::StageParams, heads: usize, rope: bool, valid: usize) -> M {
        let q = linear(query, &p.wq, &p.bq);
        let k = linear(kv, &p.wk, &p.bk);
        let v = linear(kv, &p.wv, &p.bv);
        let (l, d) = (q.len(), q[0].len());
        let dh = d / heads;
        let mut concat = vec![vec![0.0; d]; l];
        for h in 0..heads {
            let part = |m: &M, r: usize| -> Vec<f64> {
                let s = m[r][h * dh..(h + 1) * dh].to_vec();
                if rope { rotate(&s, r, 10_000.0) } else { s }
            };
            for i in 0..l {
                let qi = part(&q, i);
                let scores: Vec<f64> = (0..valid)
                    .map(|j| qi.iter().zip(part(&k, j)).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..dh {
                    concat[i][h * dh + c] = (0..valid).map(|j| e[j] / z * v[j][h * dh + c]).sum();
                }
            }
        }
        linear(&concat, &p.wo, &p.bo)
    }

    pub fn gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }
}

fn to_rows(m: &Matrix) -> reference::M {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn reference_logits(params: &AdapterParams, cfg: &AdapterConfig, p: &TinyProtein) -> Vec<f64> {
    let mut repr = to_rows(&p.plm);
    for (stage, tokens) in [(&params.stage_fs, &p.foldseek), (&params.stage_ss, &p.dssp)] {
        if let Some(stage) = stage {
            let query: reference::M = tokens.iter().map(|&t| stage.emb.row(t as usize).to_vec()).collect();
            repr = reference::stage(&query, &repr, stage, cfg.heads, cfg.use_rope, repr.len());
        }
    }
    let l = repr.len() as f64;
    let pooled: Vec<f64> = (0..cfg.dim).map(|c| repr.iter().map(|r| r[c]).sum::<f64>() / l).collect();
    let h = reference::linear(&vec![pooled], &params.head.w1, &params.head.b1);
    let h: reference::M = vec![h[0].iter().map(|&x| reference::gelu(x)).collect()];
    reference::linear(&h, &params.head.w2, &params.head.b2).remove(0)
}

fn random_params(cfg: &AdapterConfig, seed: u64) -> AdapterParams {
    let mut params = AdapterParams::init(cfg, seed).unwrap();
    for (k, t) in params.tensors_mut().into_iter().enumerate() {
        *t = random_matrix(t.rows(), t.cols(), Stream::new(seed, "params").split(k as u64)).map(|v| 0.5 * v);
    }
    params
}

#[test]
fn full_forward_matches_straight_line_reimplementation() {
    for use_rope in [false, true] {
        let cfg = AdapterConfig { heads: 2, use_rope, dropout: 0.1, ..AdapterConfig::new(4, 3) };
        for seed in 0..5 {
            let params = random_params(&cfg, seed);
            let p = TinyProtein::random(3, 4, seed + 100);
            let got = predict(&params, &cfg, p.input()).unwrap();
            let want = reference_logits(&params, &cfg, &p);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "rope={use_rope} seed={seed}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn tail_padding_does_not_change_logits() {
    let cfg = AdapterConfig { heads: 2, ..AdapterConfig::new(8, 2) };
    for seed in 0..5 {
        let params = random_params(&cfg, seed);
        let p = TinyProtein::random(5, 8, seed);
        let base = predict(&params, &cfg, p.input()).unwrap();
        for extra in [1, 4] {
            let l = 5 + extra;
            let plm = Matrix::from_fn(l, 8, |r, c| if r < 5 { p.plm.get(r, c) } else { 0.0 });
            let pad = |t: &[u32]| t.iter().copied().chain(std::iter::repeat_n(PAD, extra)).collect::<Vec<_>>();
            let (fs, ss) = (pad(&p.foldseek), pad(&p.dssp));
            let padded = predict(
                &params,
                &cfg,
                ForwardInput { plm: &plm, foldseek: Some(&fs), dssp: Some(&ss), valid: 5 },
            )
            .unwrap();
            for (a, b) in base.iter().zip(&padded) {
                assert!((a - b).abs() < 1e-9, "{base:?} vs {padded:?}");
            }
        }
    }
}

#[test]
fn attention_rows_are_convex_combinations_of_values() {
    let d = 8;
    for (seed, valid) in [(0, 6), (1, 3), (2, 1)] {
        let cfg = AdapterConfig { heads: 2, ..AdapterConfig::new(d, 2) };
        let mut stage = random_stage(d, seed);
        stage.wo = Matrix::identity(d);
        stage.bo = Matrix::zeros(1, d);
        let q = random_matrix(6, d, Stream::new(seed, "q")).map(|v| 3.0 * v);
        let kv = random_matrix(6, d, Stream::new(seed, "kv"));
        let out = stage_output(&stage, &cfg, &q, &kv, valid);
        let v = kv.matmul(&stage.wv).unwrap();
        for c in 0..d {
            let col: Vec<f64> = (0..valid).map(|j| v.get(j, c) + stage.bv.get(0, c)).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            for r in 0..6 {
                let x = out.get(r, c);
                assert!(x >= lo - 1e-12 && x <= hi + 1e-12, "{x} outside [{lo}, {hi}]");
            }
        }
    }
}

#[test]
fn vanilla_is_head_over_mean_pooled_embedding() {
    let structural = AdapterConfig { heads: 2, ..AdapterConfig::new(8, 3) };
    let vanilla = AdapterConfig { use_foldseek: false, use_dssp: false, ..structural.clone() };
    let params = random_params(&structural, 7);
    let p = TinyProtein::random(6, 8, 7);

    let pooled = p.plm.mean_rows(6).unwrap();
    let mut h = pooled.matmul(&params.head.w1).unwrap();
    h.add_assign(&params.head.b1);
    let mut logits = h.map(gelu).matmul(&params.head.w2).unwrap();
    logits.add_assign(&params.head.b2);

    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, &params);
    let out = ses_forward(&mut tape, &nodes, p.input(), &vanilla, Mode::Eval, Stream::new(0, "x")).unwrap();
    assert_eq!(tape.value(out.logits).data(), logits.data(), "bit-for-bit");

    let loss = tape.softmax_cross_entropy(out.logits, 1).unwrap();
    let grads = tape.backward(loss).unwrap();
    for stage in [nodes.stage_fs.as_ref().unwrap(), nodes.stage_ss.as_ref().unwrap()] {
        for id in [stage.emb, stage.wq, stage.wk, stage.wv, stage.wo, stage.bq, stage.bk, stage.bv, stage.bo] {
            assert!(!grads.is_connected(id));
            assert!(grads.wrt(id).data().iter().all(|&g| g == 0.0));
        }
    }
    assert!(grads.wrt(nodes.head.w1).data().iter().any(|&g| g != 0.0));
}

#[test]
fn rope_without_stages_matches_vanilla() {
    let a = AdapterConfig { use_foldseek: false, use_dssp: false, use_rope: false, ..AdapterConfig::new(8, 2) };
    let b = AdapterConfig { use_rope: true, ..a.clone() };
    let params = random_params(&a, 3);
    let p = TinyProtein::random(4, 8, 3);
    assert_eq!(predict(&params, &a, p.input()).unwrap(), predict(&params, &b, p.input()).unwrap());
}
