use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereomem::geometry::{CameraPose, CameraView, DepthMap, Intrinsics};
use stereomem::memory::ggm::{
    ggm_train_augment, Augmentation, MASK_FRACTION_RANGE, RECT_FRACTION_RANGE,
};
use stereomem::pointcloud::SimilarityTransform;
use stereomem::stereo::{
    ssm_attention, ssm_pair_sampler, stitch, AttentionWeights, ClipPair, FeatureGrid, GridRole,
    SamplerOptions, StitchedPair,
};

use crate::oracles::masked_dense_attention;
use crate::{check, Outcome};

struct Inputs {
    t: FeatureGrid,
    r: FeatureGrid,
    pt: FeatureGrid,
    pr: FeatureGrid,
}

fn grid(
    f: usize,
    h: usize,
    w: usize,
    c: usize,
    role: GridRole,
    rng: &mut ChaCha8Rng,
) -> FeatureGrid {
    FeatureGrid::from_fn(f, h, w, c, role, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

fn pairs_of(inputs: &[Inputs]) -> Vec<StitchedPair> {
    inputs
        .iter()
        .map(|i| stitch(&i.t, Some(&i.r), Some(&i.pt), Some(&i.pr)).unwrap())
        .collect()
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn ssm_isolation() -> Outcome {
    const PAIRS: usize = 3;
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut shapes = 0;
    let mut worst_dense = 0.0f64;
    let mut worst_cross = 0.0f64;
    for f in 1..=4 {
        for hw in 1..=8 {
            for c in [1, 2, 3, 8, 16] {
                let weights = AttentionWeights::random(c, rng.gen());
                let inputs: Vec<Inputs> = (0..PAIRS)
                    .map(|_| Inputs {
                        t: grid(f, hw, hw, c, GridRole::Target, &mut rng),
                        r: grid(f, hw, hw, c, GridRole::Reference, &mut rng),
                        pt: grid(f, hw, hw, c, GridRole::PointmapTarget, &mut rng),
                        pr: grid(f, hw, hw, c, GridRole::PointmapReference, &mut rng),
                    })
                    .collect();
                let pairs = pairs_of(&inputs);
                let base = ssm_attention(&pairs, &weights).map_err(|e| e.to_string())?;

                // dense oracle over all B·F sequences with a block mask
                let mut seqs = Vec::new();
                for p in &pairs {
                    for fi in 0..f {
                        let mut seq = Vec::new();
                        for y in 0..hw {
                            for x in 0..2 * hw {
                                seq.push(
                                    (0..c)
                                        .map(|ch| p.ssm_input.at(fi, y, x, ch))
                                        .collect::<Vec<f64>>(),
                                );
                            }
                        }
                        seqs.push(seq);
                    }
                }
                let dense = masked_dense_attention(
                    &seqs,
                    &rows(&weights.wq),
                    &rows(&weights.wk),
                    &rows(&weights.wv),
                );
                for (b, out) in base.iter().enumerate() {
                    for fi in 0..f {
                        for y in 0..hw {
                            for x in 0..hw {
                                for ch in 0..c {
                                    let d = dense[b * f + fi][y * 2 * hw + x][ch];
                                    worst_dense = worst_dense.max((out.at(fi, y, x, ch) - d).abs());
                                }
                            }
                        }
                    }
                }

                // perturb one reference (or reference pointmap) cell of pair j
                for j in 0..PAIRS {
                    let mut moved: Vec<Inputs> = inputs
                        .iter()
                        .map(|i| Inputs {
                            t: i.t.clone(),
                            r: i.r.clone(),
                            pt: i.pt.clone(),
                            pr: i.pr.clone(),
                        })
                        .collect();
                    let g = if rng.gen_bool(0.5) {
                        &mut moved[j].r
                    } else {
                        &mut moved[j].pr
                    };
                    let k = rng.gen_range(0..g.data.len());
                    g.data[k] += H;
                    let out =
                        ssm_attention(&pairs_of(&moved), &weights).map_err(|e| e.to_string())?;
                    for i in (0..PAIRS).filter(|&i| i != j) {
                        check(out[i].data == base[i].data, || {
                            format!("F={f} H=W={hw} C={c}: perturbing pair {j} changed pair {i}")
                        })?;
                        for (a, b) in out[i].data.iter().zip(&base[i].data) {
                            worst_cross = worst_cross.max(((a - b) / H).abs());
                        }
                    }
                }
                shapes += 1;
            }
        }
    }
    check(worst_dense < 1e-6, || {
        format!("dense oracle differs by {worst_dense:.3e}")
    })?;
    check(worst_cross < 1e-9, || {
        format!("cross-pair sensitivity {worst_cross:.3e}")
    })?;
    Ok(format!(
        "{shapes} shapes: cross-pair outputs bit-identical, sensitivity {worst_cross:.1e}, dense oracle error {worst_dense:.2e}"
    ))
}

pub fn sampler_statistics() -> Outcome {
    let k = Intrinsics::new(40.0, 40.0, 32.0, 24.0, 64, 48).unwrap();
    let view = CameraView::new(k, CameraPose::identity(), 0);
    let depth = DepthMap::from_values(64, 48, vec![2.0; 64 * 48]).unwrap();
    let aux = [(depth, view)];
    let (mut mask, mut rect) = (Vec::new(), Vec::new());
    for seed in 0..1000 {
        let a = ggm_train_augment(&aux, &SimilarityTransform::identity(), seed)
            .map_err(|e| e.to_string())?;
        let rec = a.records[0];
        match rec.augmentation {
            Augmentation::RandomMask { .. } => mask.push(rec.measured),
            Augmentation::Rectangle { .. } => rect.push(rec.measured),
        }
    }
    let summary = |v: &[f64], (lo, hi): (f64, f64), name: &str| -> Result<f64, String> {
        let inside = v.iter().all(|x| (lo..=hi).contains(x));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let mid = 0.5 * (lo + hi);
        check(inside, || format!("{name} fraction outside [{lo}, {hi}]"))?;
        check((mean - mid).abs() <= 0.03, || {
            format!("{name} mean {mean:.4} vs midpoint {mid}")
        })?;
        Ok(mean)
    };
    let mm = summary(&mask, MASK_FRACTION_RANGE, "masking")?;
    let rm = summary(&rect, RECT_FRACTION_RANGE, "rectangle")?;

    let clip: Vec<CameraView> = (0..81)
        .map(|i| CameraView::new(k, CameraPose::identity(), i))
        .collect();
    let clips: Vec<ClipPair> = (0..4)
        .map(|_| ClipPair {
            target: clip.clone(),
            reference: clip.clone(),
        })
        .collect();
    let draws = 10_000;
    let samples: Vec<_> = ssm_pair_sampler(&clips, SamplerOptions::default(), 11)
        .map_err(|e| e.to_string())?
        .take(draws)
        .collect();
    check(samples.len() == draws, || "sampler ran dry".into())?;
    let omitted = samples.iter().filter(|s| s.omitted).count() as f64 / draws as f64;
    let (dropped, offered) = samples
        .iter()
        .filter(|s| !s.omitted)
        .fold((0usize, 0usize), |(d, o), s| (d + s.dropped, o + s.window));
    let drop_rate = dropped as f64 / offered as f64;
    check((omitted - 0.10).abs() <= 0.02, || {
        format!("omission rate {omitted:.4}")
    })?;
    check((drop_rate - 0.30).abs() <= 0.03, || {
        format!("per-frame drop {drop_rate:.4}")
    })?;
    Ok(format!(
        "mask mean {mm:.4} (n={}), rectangle mean {rm:.4} (n={}); omission {omitted:.4}, per-frame drop {drop_rate:.4}",
        mask.len(),
        rect.len()
    ))
}
