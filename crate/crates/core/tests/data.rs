mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use vidage::data::{
    generate_replica, generate_synthetic, load_dataset, make_folds, save_dataset,
    smooth_4253h_twice, SyntheticSpec, TABLE_BIN_COUNTS,
};
use vidage::{Dataset, Tensor, VideoSample};

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn smooth_once(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut a = x.to_vec();
    for i in 2..n - 2 {
        a[i] = (median(&x[i - 2..i + 2]) + median(&x[i - 1..i + 3])) / 2.0;
    }
    let mut b = a.clone();
    for i in 2..n - 2 {
        b[i] = median(&a[i - 2..i + 3]);
    }
    let mut c = b.clone();
    for i in 1..n - 1 {
        c[i] = median(&b[i - 1..i + 2]);
    }
    let mut d = c.clone();
    for i in 1..n - 1 {
        d[i] = c[i - 1] / 4.0 + c[i] / 2.0 + c[i + 1] / 4.0;
    }
    d
}

fn smooth_oracle(x: &[f64]) -> Vec<f64> {
    if x.len() < 5 {
        return x.to_vec();
    }
    let rough = smooth_once(x);
    let resid: Vec<f64> = (0..x.len()).map(|i| x[i] - rough[i]).collect();
    let fix = smooth_once(&resid);
    (0..x.len()).map(|i| rough[i] + fix[i]).collect()
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

fn region_mean(ds: &Dataset, frame: &Tensor) -> f64 {
    let mask = ds.region_mask();
    let inside: Vec<f64> = frame
        .data()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .collect();
    inside.iter().sum::<f64>() / inside.len() as f64
}

fn apex(v: &VideoSample) -> &Tensor {
    &v.frames[v.apex_frame.unwrap()]
}

#[test]
fn smoother_matches_scalar_oracle() {
    let mut r = rng(1);
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let got = smooth_4253h_twice(&x).unwrap();
        assert!(max_abs_diff(&got, &smooth_oracle(&x)) <= 1e-12, "n = {n}");
    }
    assert!(smooth_4253h_twice(&[]).is_err());
}

#[test]
fn smoother_examples() {
    let flat = vec![2.5; 20];
    assert_eq!(smooth_4253h_twice(&flat).unwrap(), flat);

    for at in [3, 9, 16] {
        let mut spiked = vec![1.0; 20];
        spiked[at] = 11.0;
        let out = smooth_4253h_twice(&spiked).unwrap();
        let dev = out.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1.0, "spike at {at}: deviation {dev}");
    }

    let ramp: Vec<f64> = (0..30).map(|i| 0.7 * i as f64 - 3.0).collect();
    let out = smooth_4253h_twice(&ramp).unwrap();
    assert!(max_abs_diff(&out[3..27], &ramp[3..27]) <= 1e-9);

    let short = [4.0, -1.0, 9.0, 0.5];
    assert_eq!(smooth_4253h_twice(&short).unwrap(), short);
}

#[test]
fn resmoothing_root_signals_is_stable() {
    let series = [
        vec![-1.5; 12],
        (0..25).map(|i| 2.0 - 0.1 * i as f64).collect(),
        (0..7).map(|i| 0.3 * i as f64).collect(),
    ];
    for x in &series {
        let once = smooth_4253h_twice(x).unwrap();
        let twice = smooth_4253h_twice(&once).unwrap();
        assert!(rms(&twice, &once) < 1e-6, "{}", rms(&twice, &once));
    }
}

#[test]
fn young_and_old_apex_frames_differ() {
    let at_age = |age| {
        generate_synthetic(&SyntheticSpec {
            n_subjects: 4,
            videos_per_subject: 1,
            min_age: age,
            max_age: age,
            noise_sigma: 0.0,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
    };
    let (young, old) = (at_age(8), at_age(76));
    let mask = young.region_mask();
    for (a, b) in young.videos.iter().zip(&old.videos) {
        assert_eq!(a.apex_frame, b.apex_frame);
        let (fa, fb) = (apex(a).data(), apex(b).data());
        let diffs: Vec<f64> = (0..mask.len())
            .filter(|&i| mask[i])
            .map(|i| (fa[i] - fb[i]).abs())
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean > 0.1, "{mean}");
    }
}

#[test]
fn generator_is_deterministic_and_valid() {
    let spec = SyntheticSpec {
        n_subjects: 6,
        seed: 9,
        ..Default::default()
    };
    let a = generate_synthetic(&spec).unwrap();
    assert_eq!(a, generate_synthetic(&spec).unwrap());
    assert_ne!(
        a,
        generate_synthetic(&SyntheticSpec { seed: 10, ..spec }).unwrap()
    );
    a.validate().unwrap();
    assert_eq!(a.len(), 12);
    assert_eq!(a.subjects().len(), 6);
    for v in &a.videos {
        assert!((6..=8).contains(&v.len()));
        assert!((8.0..=76.0).contains(&v.age));
    }
    let bad = SyntheticSpec {
        min_frames: 5,
        max_frames: 2,
        ..Default::default()
    };
    assert!(generate_synthetic(&bad).is_err());
}

#[test]
fn apex_carries_the_strongest_wrinkles() {
    let ds = generate_synthetic(&SyntheticSpec {
        n_subjects: 20,
        noise_sigma: 0.0,
        texture: 0.0,
        regions: Some(SyntheticSpec::standard_regions(16)[..2].to_vec()),
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    for v in &ds.videos {
        let depth: Vec<f64> = v.frames.iter().map(|f| -region_mean(&ds, f)).collect();
        let best = (0..depth.len())
            .max_by(|&a, &b| depth[a].total_cmp(&depth[b]))
            .unwrap();
        assert_eq!(Some(best), v.apex_frame, "{depth:?}");
    }
}

#[test]
fn apex_region_intensity_predicts_age_linearly() {
    let ds = generate_synthetic(&SyntheticSpec {
        n_subjects: 200,
        videos_per_subject: 1,
        noise_sigma: 0.02,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let xs: Vec<f64> = ds
        .videos
        .iter()
        .map(|v| region_mean(&ds, apex(v)))
        .collect();
    let ys = ds.ages();
    let (train, test) = (0..100, 100..200);
    let n = 100.0;
    let mx = xs[train.clone()].iter().sum::<f64>() / n;
    let my = ys[train.clone()].iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in train {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx).powi(2);
    }
    let slope = sxy / sxx;
    let mae = test
        .map(|i| (my + slope * (xs[i] - mx) - ys[i]).abs())
        .sum::<f64>()
        / n;
    assert!(mae < 3.0, "least-squares MAE {mae}");
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let ds = small_dataset(5, 13);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let bits = |d: &Dataset| -> Vec<u64> {
        d.videos
            .iter()
            .flat_map(|v| {
                v.frames
                    .iter()
                    .flat_map(|f| f.data().iter().map(|x| x.to_bits()))
            })
            .collect()
    };
    assert_eq!(bits(&back), bits(&ds));
}

#[test]
fn corrupted_files_are_reported() {
    let ds = small_dataset(4, 14);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let file = dir
        .path()
        .join(format!("videos/{:06}.vid", ds.videos[2].id));
    let bytes = std::fs::read(&file).unwrap();

    std::fs::write(&file, &bytes[..bytes.len() - 40]).unwrap();
    let msg = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(
        msg.contains("video 2") && msg.contains("truncated"),
        "{msg}"
    );

    let mut flipped = bytes.clone();
    flipped[40] ^= 0x10;
    std::fs::write(&file, &flipped).unwrap();
    let msg = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("checksum"), "{msg}");

    let mut magic = bytes;
    magic[0] = b'X';
    std::fs::write(&file, &magic).unwrap();
    assert!(load_dataset(dir.path()).is_err());
}

#[test]
fn replica_matches_table_counts_and_folds_evenly() {
    let ds = generate_replica(&SyntheticSpec {
        frame_size: 8,
        min_frames: 2,
        max_frames: 2,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(ds.len(), 1240);
    let mut counts = [0usize; 8];
    for v in &ds.videos {
        counts[((v.age / 10.0) as usize).min(7)] += 1;
    }
    assert_eq!(counts, TABLE_BIN_COUNTS);
    assert_eq!(ds.subjects().len(), 400);

    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap().ages(), ds.ages());

    let plan = make_folds(&ds, 10, 3).unwrap();
    assert_eq!(plan.fold_sizes(), vec![40; 10]);
}

#[test]
fn fold_plans_cover_edge_cases() {
    let ds = small_dataset(10, 15);
    let plan = make_folds(&ds, 10, 0).unwrap();
    assert_eq!(plan.fold_sizes(), vec![1; 10]);
    let roles = plan.roles(9).unwrap();
    assert_eq!(roles.validation, Some(0));
    assert_eq!(roles.train, (1..9).collect::<Vec<_>>());
    assert!(make_folds(&ds, 11, 0).is_err());
    assert!(make_folds(&ds, 1, 0).is_err());
    assert_eq!(
        make_folds(&ds, 2, 0).unwrap().roles(0).unwrap().validation,
        None
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn folds_partition_subjects(subjects in 3usize..30, k in 2usize..8, seed in 0u64..1000) {
        prop_assume!(subjects >= k);
        let ds = generate_synthetic(&SyntheticSpec {
            n_subjects: subjects,
            videos_per_subject: 2,
            min_frames: 1,
            max_frames: 1,
            frame_size: 4,
            seed,
            ..Default::default()
        }).unwrap();
        let plan = make_folds(&ds, k, seed).unwrap();
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for test in 0..k {
            let split = plan.split(&ds, test).unwrap();
            let subj = |idx: &[usize]| idx.iter().map(|&i| ds.videos[i].subject_id).collect::<BTreeSet<_>>();
            let (tr, va, te) = (subj(&split.train), subj(&split.validation), subj(&split.test));
            prop_assert!(tr.is_disjoint(&te) && tr.is_disjoint(&va) && va.is_disjoint(&te));
            prop_assert_eq!(split.train.len() + split.validation.len() + split.test.len(), ds.len());
        }
    }
}
