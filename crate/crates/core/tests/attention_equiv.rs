//! Oracle equivalence for the chunked attention path: score accumulation
//! against the sequential per-row EMA, outputs against dense attention, and
//! the strided prefill against a one-shot dense forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cascade_kv::attention::{chunk_attend, reference_attention, AttentionParams, HeadCaches};
use cascade_kv::cascade::{CascadeConfig, HeadPolicy, HeadReduction};
use cascade_kv::mat::{max_rel_diff, Mat};
use cascade_kv::oracles::{dense_forward, sequential_ema_scores, sequential_stream_scores};
use cascade_kv::prefill::{prefill, stride_chunks, PrefillConfig, ToyModel};
use cascade_kv::ring::CacheEntry;
use cascade_kv::rope::{apply_rotary_by_cache_index, RotaryTable};
use cascade_kv::scalar::Scalar;

fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Single-head caches (independent policy, one kv head) preloaded with
/// `resident_keys` rows as tokens 0..n_res.
fn single_head_cache(
    resident_keys: &Mat<f64>,
    capacity: usize,
    d: usize,
) -> (AttentionParams, HeadCaches<f64>) {
    let params = AttentionParams::new(d, 1, 1).unwrap();
    let mut config = CascadeConfig::new(capacity, 1, 0);
    config.head_policy = HeadPolicy::Independent;
    let mut caches = HeadCaches::new(config, &params).unwrap();
    for r in 0..resident_keys.rows() {
        caches.units_mut()[0]
            .add_token(CacheEntry::new(
                resident_keys.row(r).to_vec(),
                vec![0.0; d],
                0.0,
                r as u64,
            ))
            .unwrap();
    }
    (params, caches)
}

#[test]
fn chunk_scores_match_sequential_ema_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let beta = 0.9999;
    for trial in 0..40 {
        let d = [8, 16, 32][trial % 3];
        let m = rng.random_range(1..=64);
        let n_res = rng.random_range(0..=192);
        let resident_keys = rand_mat(&mut rng, n_res, d);
        let q = rand_mat(&mut rng, m, d);
        let k = rand_mat(&mut rng, m, d);
        let v = rand_mat(&mut rng, m, d);

        let (params, caches) =
            single_head_cache(&resident_keys, (n_res + 1).next_power_of_two(), d);
        let rope = RotaryTable::new(d, n_res + m + 1).unwrap();
        let result = chunk_attend(
            &params,
            beta,
            &caches,
            n_res as u64,
            std::slice::from_ref(&q),
            std::slice::from_ref(&k),
            &[v],
            &rope,
        )
        .unwrap();

        // The oracle runs one query row at a time over pre-rotated keys and
        // queries, folding the EMA after every row.
        let res_pe: Vec<usize> = (0..n_res).collect();
        let chunk_pe: Vec<usize> = (n_res..n_res + m).collect();
        let res_rot = apply_rotary_by_cache_index(&resident_keys, &res_pe).unwrap();
        let k_rot = apply_rotary_by_cache_index(&k, &chunk_pe).unwrap();
        let q_rot = apply_rotary_by_cache_index(&q, &chunk_pe).unwrap();
        let expect = sequential_ema_scores(&q_rot, &res_rot, &k_rot, params.scale, beta);

        let got = &result.unit_scores[0].contributions;
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(expect.iter()) {
            let denom = g.abs().max(e.abs()).max(1e-12);
            assert!(
                (g - e).abs() / denom < 1e-9,
                "trial {trial}: contribution {g} vs oracle {e}"
            );
        }
    }
}

#[test]
fn reference_attention_matches_triple_loop() {
    // Dual implementation: the library path against a from-scratch
    // double-precision triple loop, no shared helpers.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (s, d) = (8usize, 16usize);
    let q = rand_mat(&mut rng, s, d);
    let k = rand_mat(&mut rng, s, d);
    let v = rand_mat(&mut rng, s, d);
    for causal in [false, true] {
        let got = reference_attention(&q, &k, &v, causal).unwrap();
        let scale = 1.0 / (d as f64).sqrt();
        for i in 0..s {
            let visible = if causal { i + 1 } else { s };
            let mut weights = vec![0.0f64; visible];
            for (j, w) in weights.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += q.get(i, c) * k.get(j, c);
                }
                *w = (dot * scale).exp();
            }
            let norm: f64 = weights.iter().sum();
            for c in 0..d {
                let mut expect = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    expect += w / norm * v.get(j, c);
                }
                assert!(
                    (got.get(i, c) - expect).abs() < 1e-12,
                    "causal={causal} ({i},{c}): {} vs {expect}",
                    got.get(i, c)
                );
            }
        }
    }
}

#[test]
fn prefill_residency_above_capacity_matches_cascade_replay() {
    // Once the stream outgrows sink+capacity the eviction walk starts; with
    // selection disabled the resident set is score-free, so a brute-force
    // replay of the same stream pins it exactly.
    let attn = AttentionParams::new(8, 1, 1).unwrap();
    let mut cache_config = CascadeConfig::new(8, 2, 2);
    cache_config.selection_enabled = false;
    let seq_len = 16usize;
    let model = ToyModel::<f64>::random(&attn, 1, 13);
    let inputs = model.random_inputs(seq_len, 14);
    let mut naive = cascade_kv::oracles::NaiveCascade::new(&cache_config);
    for origin in 0..seq_len as u64 {
        naive.add_token(origin, 0.0);
    }
    for stride in [1usize, 4, 16] {
        let config = PrefillConfig {
            stride,
            layers: 1,
            cache_config: cache_config.clone(),
            attn: attn.clone(),
        };
        let result = prefill(&config, &inputs, &model).unwrap();
        assert_eq!(
            result.caches[0].units()[0].resident_origins(),
            naive.residents(),
            "stride {stride}"
        );
    }
}

#[test]
fn single_row_chunk_is_one_ema_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 16;
    let n_res = 12;
    let beta = 0.25;
    let resident_keys = rand_mat(&mut rng, n_res, d);
    let q = rand_mat(&mut rng, 1, d);
    let k = rand_mat(&mut rng, 1, d);
    let v = rand_mat(&mut rng, 1, d);
    let (params, caches) = single_head_cache(&resident_keys, 16, d);
    let rope = RotaryTable::new(d, n_res + 2).unwrap();
    let result = chunk_attend(
        &params,
        beta,
        &caches,
        n_res as u64,
        std::slice::from_ref(&q),
        std::slice::from_ref(&k),
        &[v],
        &rope,
    )
    .unwrap();
    // One step of the EMA: contribution = (1-β) · attention row, and the
    // row (over residents plus the token itself) is stochastic.
    let contrib = &result.unit_scores[0].contributions;
    let total: f64 = contrib.iter().sum();
    assert!((total - (1.0 - beta)).abs() < 1e-12);
    assert!(contrib.iter().all(|&c| c >= 0.0));
}

#[test]
fn empty_cache_chunk_equals_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = 16;
    let s = 24;
    let q = rand_mat(&mut rng, s, d);
    let k = rand_mat(&mut rng, s, d);
    let v = rand_mat(&mut rng, s, d);
    let (params, caches) = single_head_cache(&Mat::zeros(0, d), 32, d);
    let rope = RotaryTable::new(d, s + 1).unwrap();
    let result = chunk_attend(
        &params,
        0.9999,
        &caches,
        0,
        std::slice::from_ref(&q),
        std::slice::from_ref(&k),
        std::slice::from_ref(&v),
        &rope,
    )
    .unwrap();
    // Reference: dense causal attention over position-rotated inputs.
    let pe: Vec<usize> = (0..s).collect();
    let q_rot = apply_rotary_by_cache_index(&q, &pe).unwrap();
    let k_rot = apply_rotary_by_cache_index(&k, &pe).unwrap();
    let expect = reference_attention(&q_rot, &k_rot, &v, true).unwrap();
    assert!(max_rel_diff(&result.outputs[0], &expect) < 1e-9);
}

fn below_capacity_config(head_policy: HeadPolicy) -> (PrefillConfig, usize) {
    let attn = AttentionParams::new(8, 4, 2).unwrap();
    let mut cache_config = CascadeConfig::new(64, 2, 4);
    cache_config.head_policy = head_policy;
    cache_config.head_reduction = HeadReduction::Max;
    let seq_len = 48; // ≤ sink + capacity: nothing is ever evicted
    (
        PrefillConfig {
            stride: seq_len,
            layers: 2,
            cache_config,
            attn,
        },
        seq_len,
    )
}

type PrefillSnapshot<T> = (Vec<Mat<T>>, Vec<Vec<u64>>, ToyModel<T>, Mat<T>);

fn run_prefill_generic<T: Scalar>(
    config: &PrefillConfig,
    stride: usize,
    seq_len: usize,
) -> PrefillSnapshot<T> {
    let mut config = config.clone();
    config.stride = stride;
    let model = ToyModel::<T>::random(&config.attn, config.layers, 99);
    let inputs = model.random_inputs(seq_len, 177);
    let result = prefill(&config, &inputs, &model).unwrap();
    let residents: Vec<Vec<u64>> = result
        .caches
        .iter()
        .flat_map(|hc| hc.units().iter().map(|u| u.resident_origins()))
        .collect();
    (result.layer_outputs, residents, model, inputs)
}

#[test]
fn prefill_stride_invariance_below_capacity_f64() {
    let (config, s) = below_capacity_config(HeadPolicy::Independent);
    let (base_out, base_res, model, inputs) = run_prefill_generic::<f64>(&config, 1, s);
    for stride in [7, s / 2, s] {
        let (out, res, _, _) = run_prefill_generic::<f64>(&config, stride, s);
        for layer in 0..config.layers {
            let diff = max_rel_diff(&base_out[layer], &out[layer]);
            assert!(diff < 1e-9, "stride {stride} layer {layer} diff {diff}");
        }
        assert_eq!(base_res, res, "resident sets must not depend on stride");
    }
    // And the dense one-shot forward pass agrees with all of them.
    let dense = dense_forward(&inputs, &model, &config.attn, config.layers);
    for layer in 0..config.layers {
        let diff = max_rel_diff(&base_out[layer], &dense[layer]);
        assert!(diff < 1e-9, "dense mismatch at layer {layer}: {diff}");
    }
}

#[test]
fn prefill_stride_invariance_below_capacity_f32() {
    let (config, s) = below_capacity_config(HeadPolicy::Independent);
    let (base_out, _, model, inputs) = run_prefill_generic::<f32>(&config, 1, s);
    let dense = dense_forward(&inputs, &model, &config.attn, config.layers);
    for stride in [7, s] {
        let (out, _, _, _) = run_prefill_generic::<f32>(&config, stride, s);
        for layer in 0..config.layers {
            assert!(max_rel_diff(&base_out[layer], &out[layer]) < 1e-6);
            assert!(max_rel_diff(&dense[layer], &out[layer]) < 1e-6);
        }
    }
}

#[test]
fn prefill_homogeneous_policy_matches_dense_below_capacity() {
    let (config, s) = below_capacity_config(HeadPolicy::Homogeneous);
    let (out, _, model, inputs) = run_prefill_generic::<f64>(&config, 5, s);
    let dense = dense_forward(&inputs, &model, &config.attn, config.layers);
    for layer in 0..config.layers {
        assert!(max_rel_diff(&out[layer], &dense[layer]) < 1e-9);
    }
}

#[test]
fn prefill_score_fold_matches_stream_oracle() {
    // Single head, single layer: resident scores after prefill equal the
    // closed-form per-row EMA regardless of stride.
    let attn = AttentionParams::new(8, 1, 1).unwrap();
    let cache_config = CascadeConfig::new(32, 2, 2);
    let beta = cache_config.ema_gamma;
    let seq_len = 30;
    let config = PrefillConfig {
        stride: 1,
        layers: 1,
        cache_config,
        attn: attn.clone(),
    };
    let model = ToyModel::<f64>::random(&attn, 1, 5);
    let inputs = model.random_inputs(seq_len, 6);

    // Oracle probabilities from dense rotated causal attention.
    let w = model.layer(0);
    let q = inputs.matmul(&w.wq);
    let k = inputs.matmul(&w.wk);
    let pe: Vec<usize> = (0..seq_len).collect();
    let q_rot = apply_rotary_by_cache_index(&q, &pe).unwrap();
    let k_rot = apply_rotary_by_cache_index(&k, &pe).unwrap();
    let probs: Vec<Vec<f64>> = (0..seq_len)
        .map(|i| {
            let mut logits: Vec<f64> = (0..=i)
                .map(|j| {
                    (0..8)
                        .map(|c| q_rot.get(i, c) * k_rot.get(j, c))
                        .sum::<f64>()
                        * attn.scale
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            logits.iter().map(|e| e / total).collect()
        })
        .collect();
    let expect = sequential_stream_scores(&probs, beta);

    for stride in [1usize, 4, 13, 30] {
        let mut config = config.clone();
        config.stride = stride;
        let result = prefill(&config, &inputs, &model).unwrap();
        let unit = &result.caches[0].units()[0];
        for (origin, mu) in expect.iter().enumerate() {
            let got = unit
                .score_of(origin as u64)
                .expect("below capacity keeps everyone");
            let denom = got.abs().max(mu.abs()).max(1e-12);
            assert!(
                (got - mu).abs() / denom < 1e-9,
                "stride {stride} origin {origin}: {got} vs {mu}"
            );
        }
    }
}

/// Dense causal probability rows for one head, rotary by absolute position.
fn dense_prob_rows(q: &Mat<f64>, k: &Mat<f64>, scale: f64) -> Vec<Vec<f64>> {
    let s = q.rows();
    let pe: Vec<usize> = (0..s).collect();
    let q_rot = apply_rotary_by_cache_index(q, &pe).unwrap();
    let k_rot = apply_rotary_by_cache_index(k, &pe).unwrap();
    (0..s)
        .map(|i| {
            let mut logits: Vec<f64> = (0..=i)
                .map(|j| {
                    (0..q.cols())
                        .map(|c| q_rot.get(i, c) * k_rot.get(j, c))
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            logits.iter().map(|e| e / total).collect()
        })
        .collect()
}

#[test]
fn gqa_score_reduction_matches_per_row_oracle() {
    // Four query heads over two kv heads. The reduction runs per query row
    // before the EMA weighting, which is observable for max (nonlinear).
    let attn = AttentionParams::new(8, 4, 2).unwrap();
    let seq_len = 24usize;
    for (policy, reduction) in [
        (HeadPolicy::Homogeneous, HeadReduction::Mean),
        (HeadPolicy::Homogeneous, HeadReduction::Max),
        (HeadPolicy::Independent, HeadReduction::Max),
        (HeadPolicy::Independent, HeadReduction::Median),
    ] {
        let mut cache_config = CascadeConfig::new(32, 2, 2);
        cache_config.head_policy = policy;
        cache_config.head_reduction = reduction;
        let beta = cache_config.ema_gamma;
        let model = ToyModel::<f64>::random(&attn, 1, 71);
        let inputs = model.random_inputs(seq_len, 72);
        let config = PrefillConfig {
            stride: 6,
            layers: 1,
            cache_config,
            attn: attn.clone(),
        };
        let result = prefill(&config, &inputs, &model).unwrap();

        // Per-head dense probability rows, reduced per row, then the
        // closed-form stream EMA.
        let w = model.layer(0);
        let q = cascade_kv::prefill::split_heads(&inputs.matmul(&w.wq), 4, 8);
        let k = cascade_kv::prefill::split_heads(&inputs.matmul(&w.wk), 2, 8);
        let probs: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|h| dense_prob_rows(&q[h], &k[h / 2], attn.scale))
            .collect();
        let units: Vec<Vec<usize>> = match policy {
            HeadPolicy::Homogeneous => vec![vec![0, 1, 2, 3]],
            HeadPolicy::Independent => vec![vec![0, 1], vec![2, 3]],
        };
        for (u, heads) in units.iter().enumerate() {
            let reduced: Vec<Vec<f64>> = (0..seq_len)
                .map(|i| {
                    (0..=i)
                        .map(|j| {
                            let vals: Vec<f64> = heads.iter().map(|&h| probs[h][i][j]).collect();
                            match reduction {
                                HeadReduction::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                                HeadReduction::Max => {
                                    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                                }
                                HeadReduction::Median => {
                                    let mut s = vals.clone();
                                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                                    let n = s.len();
                                    if n % 2 == 1 {
                                        s[n / 2]
                                    } else {
                                        (s[n / 2 - 1] + s[n / 2]) / 2.0
                                    }
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let expect = sequential_stream_scores(&reduced, beta);
            let unit = &result.caches[0].units()[u];
            for (origin, mu) in expect.iter().enumerate() {
                let got = unit.score_of(origin as u64).unwrap();
                let denom = got.abs().max(mu.abs()).max(1e-12);
                assert!(
                    (got - mu).abs() / denom < 1e-9,
                    "{policy:?}/{reduction:?} unit {u} origin {origin}: {got} vs {mu}"
                );
            }
        }
    }
}

#[test]
fn prefill_matches_dense_for_random_strides_below_capacity() {
    // Any chunking of any stream that fits inside sink+capacity is
    // semantically invisible.
    let attn = AttentionParams::new(8, 2, 1).unwrap();
    let cache_config = CascadeConfig::new(32, 2, 4);
    let model = ToyModel::<f64>::random(&attn, 1, 23);
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for _ in 0..24 {
        let s = rng.random_range(2..=36usize);
        let stride = rng.random_range(1..=s);
        let inputs = model.random_inputs(s, rng.random());
        let config = PrefillConfig {
            stride,
            layers: 1,
            cache_config: cache_config.clone(),
            attn: attn.clone(),
        };
        let result = prefill(&config, &inputs, &model).unwrap();
        let dense = dense_forward(&inputs, &model, &attn, 1);
        let diff = max_rel_diff(&result.layer_outputs[0], &dense[0]);
        assert!(diff < 1e-9, "S={s} stride={stride}: diff {diff}");
    }
}

#[test]
fn prefill_chunks_cover_stream_in_order() {
    for (s, stride) in [(100, 1), (100, 7), (100, 100), (5, 8)] {
        let chunks = stride_chunks(s, stride);
        assert_eq!(chunks[0].0, 0);
        assert_eq!(chunks.last().unwrap().1, s);
        for w in chunks.windows(2) {
            assert_eq!(w[0].1, w[1].0);
            assert!(w[1].1 - w[1].0 <= stride);
        }
    }
}
