//! Kernel outputs vs independent nested-loop oracle transcriptions.

mod common;

use common::*;
use cross_cbam::attention::{Ccbam, ChannelAttention, SeBlock, SpatialAttention};
use cross_cbam::init::ParamInit;
use cross_cbam::ops::{self, PoolKind};
use cross_cbam::tensor::Shape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;
const FLOOR: f64 = 1e-9;

#[test]
fn conv2d_matches_oracle_over_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..30 {
        let n = rng.gen_range(1..3);
        let ic = rng.gen_range(1..5);
        let oc = rng.gen_range(1..5);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let stride = rng.gen_range(1..3);
        let dil = rng.gen_range(1..3);
        let pad = rng.gen_range(0..=dil * (k - 1));
        let span: usize = dil * (k - 1) + 1;
        let h = rng.gen_range(span.saturating_sub(pad).max(1)..span + 7);
        let w = rng.gen_range(span.saturating_sub(pad).max(1)..span + 7);
        if h + 2 * pad < span || w + 2 * pad < span {
            continue;
        }
        let x = rand_tensor(Shape::new(n, ic, h, w), &mut rng);
        let wt = rand_tensor(Shape::new(oc, ic, k, k), &mut rng);
        let bias = rand_tensor(Shape::new(1, oc, 1, 1), &mut rng);
        let with_bias = case % 2 == 0;
        let b = with_bias.then_some(&bias);
        let y = ops::conv2d(&x, &wt, b, stride, pad, dil).unwrap();
        let oracle = conv2d_oracle(&x, &wt, b, stride, pad, dil);
        let err = max_rel_err(&y.data(), &oracle, FLOOR);
        assert!(err <= TOL, "case {case}: conv err {err}");
    }
}

#[test]
fn pool2d_matches_oracle_over_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..30 {
        let n = rng.gen_range(1..3);
        let c = rng.gen_range(1..4);
        let k = rng.gen_range(1..4);
        let stride = rng.gen_range(1..3);
        let pad = rng.gen_range(0..k);
        let h = rng.gen_range(k..k + 8);
        let w = rng.gen_range(k..k + 8);
        let x = rand_tensor(Shape::new(n, c, h, w), &mut rng);
        for kind in [PoolKind::Max, PoolKind::Avg] {
            let y = ops::pool2d(&x, kind, k, stride, pad).unwrap();
            let oracle = pool2d_oracle(&x, kind, k, stride, pad);
            let err = max_rel_err(&y.data(), &oracle, FLOOR);
            assert!(err <= TOL, "case {case} {kind:?}: pool err {err}");
        }
    }
}

#[test]
fn global_and_channel_reduce_match_pool_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let s = Shape::new(2, rng.gen_range(2..6), rng.gen_range(2..7), rng.gen_range(2..7));
        let x = rand_tensor(s, &mut rng);
        for kind in [PoolKind::Max, PoolKind::Avg] {
            // global pool == pool2d with kernel covering everything (no pad)
            let g = ops::global_pool(&x, kind).unwrap();
            let xd = x.data();
            for n in 0..s.n {
                for c in 0..s.c {
                    let vals: Vec<f64> =
                        (0..s.h).flat_map(|y| (0..s.w).map(move |w| (y, w)))
                            .map(|(y, w)| xd[s.idx(n, c, y, w)])
                            .collect();
                    let want = match kind {
                        PoolKind::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        PoolKind::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                    };
                    let got = g.get(n, c, 0, 0);
                    assert!((got - want).abs() <= TOL * want.abs().max(1.0));
                }
            }
            let r = ops::channelwise_reduce(&x, kind).unwrap();
            for n in 0..s.n {
                for y in 0..s.h {
                    for w in 0..s.w {
                        let vals: Vec<f64> = (0..s.c).map(|c| xd[s.idx(n, c, y, w)]).collect();
                        let want = match kind {
                            PoolKind::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                            PoolKind::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                        };
                        assert!((r.get(n, 0, y, w) - want).abs() <= TOL);
                    }
                }
            }
        }
    }
}

#[test]
fn bilinear_matches_oracle_over_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..30 {
        let s = Shape::new(
            rng.gen_range(1..3),
            rng.gen_range(1..4),
            rng.gen_range(1..10),
            rng.gen_range(1..10),
        );
        let oh = rng.gen_range(1..14);
        let ow = rng.gen_range(1..14);
        let x = rand_tensor(s, &mut rng);
        let y = ops::bilinear_resize(&x, oh, ow).unwrap();
        let oracle = bilinear_oracle(&x, oh, ow);
        let err = max_rel_err(&y.data(), &oracle, FLOOR);
        assert!(err <= TOL, "case {case}: bilinear err {err}");
    }
}

#[test]
fn bilinear_identity_when_same_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(Shape::new(1, 2, 5, 9), &mut rng);
    let y = ops::bilinear_resize(&x, 5, 9).unwrap();
    assert!(x.max_abs_diff(&y) < 1e-12);
}

#[test]
fn channel_attention_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..8 {
        let c = 16 * rng.gen_range(1..3);
        let mut init = ParamInit::new(seed);
        let ca = ChannelAttention::<f64>::new(&mut init, c).unwrap();
        let x = rand_tensor(Shape::new(2, c, 4, 5), &mut rng);
        let got = ca.forward(&x).unwrap();
        let want = channel_attention_oracle(&ca, &x);
        let err = max_rel_err(&got.data(), &want, FLOOR);
        assert!(err <= TOL, "seed {seed}: CA err {err}");
        assert!(got.data().iter().all(|v| (0.0..1.0).contains(v)));
    }
}

#[test]
fn spatial_attention_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..8 {
        let mut init = ParamInit::new(seed);
        let sa = SpatialAttention::<f64>::new(&mut init);
        let x = rand_tensor(Shape::new(2, rng.gen_range(2..7), 5, 4), &mut rng);
        let got = sa.forward(&x).unwrap();
        let want = spatial_attention_oracle(&sa, &x);
        let err = max_rel_err(&got.data(), &want, FLOOR);
        assert!(err <= TOL, "seed {seed}: SA err {err}");
    }
}

#[test]
fn se_block_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..8 {
        let c = 16 * rng.gen_range(1..3);
        let mut init = ParamInit::new(seed);
        let se = SeBlock::<f64>::new(&mut init, c).unwrap();
        let x = rand_tensor(Shape::new(2, c, 3, 6), &mut rng);
        let got = se.forward(&x).unwrap();
        let want = se_oracle(&se, &x);
        let err = max_rel_err(&got.data(), &want, FLOOR);
        assert!(err <= TOL, "seed {seed}: SE err {err}");
    }
}

#[test]
fn ccbam_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..8 {
        let mut init = ParamInit::new(seed);
        let m = Ccbam::<f64>::new(&mut init, 16).unwrap();
        let hi = rand_tensor(Shape::new(1, 16, 5, 6), &mut rng);
        let lo = rand_tensor(Shape::new(1, 16, 5, 6), &mut rng);
        let got = m.forward(&hi, &lo).unwrap();
        let want = ccbam_oracle(&m, &hi, &lo);
        let err = max_rel_err(&got.data(), &want, FLOOR);
        assert!(err <= TOL, "seed {seed}: CCBAM err {err}");
    }
}

#[test]
fn softmax_ce_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..10 {
        let k = rng.gen_range(2..6);
        let s = Shape::new(1, k, 3, 4);
        let x = rand_tensor(s, &mut rng);
        let labels: Vec<i32> = (0..12)
            .map(|_| if rng.gen_bool(0.2) { 255 } else { rng.gen_range(0..k as i32) })
            .collect();
        let target = cross_cbam::tensor::LabelMap::new(1, 3, 4, labels.clone()).unwrap();
        let gamma = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
        let (loss, valid) = ops::softmax_focal_ce(&x, &target, gamma, 255).unwrap();
        // straight-line per-pixel transcription
        let xd = x.data();
        let mut want = 0.0;
        let mut count = 0usize;
        for y in 0..3 {
            for w in 0..4 {
                let t = labels[y * 4 + w];
                if t == 255 {
                    continue;
                }
                count += 1;
                let logits: Vec<f64> = (0..k).map(|c| xd[s.idx(0, c, y, w)]).collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                let p = (logits[t as usize] - m).exp() / z;
                want += -(1.0 - p).powf(gamma) * p.ln();
            }
        }
        want /= count as f64;
        assert_eq!(valid, count);
        assert!((loss.item() - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}
