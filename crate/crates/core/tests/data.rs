use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};
use rand::SeedableRng;
use stlane::data::io::{load_entry, read_index, INDEX_FILE};
use stlane::data::synth::{render_mask, Scenario, SynthSpec};
use stlane::data::{
    gen_corpus, generate_split, load_all, load_dataset, make_batch, synth_scene, CorpusSpec, OCCLUDED_SPLIT,
    TRAIN_SPLIT,
};
use stlane::{Error, SeededRng};

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_round_trips_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = CorpusSpec::new(32, 8, 8, 7);
    let counts = gen_corpus(a.path(), &spec).unwrap();
    assert_eq!(counts.iter().map(|c| c.1).sum::<usize>(), 48);
    gen_corpus(b.path(), &spec).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));

    for (split, n) in counts {
        let loaded = load_all(&a.path().join(split), 5, (32, 64)).unwrap();
        assert_eq!(loaded.len(), n);
        let generated = generate_split(&spec, split).unwrap();
        for (l, g) in loaded.iter().zip(&generated) {
            assert_eq!(l.mask, g.mask);
            assert_eq!(l.frames, g.frames);
            assert_eq!(l.meta, g.meta);
        }
    }
}

#[test]
fn occluded_split_always_hides_a_lane_in_the_last_frame() {
    let spec = CorpusSpec::new(0, 0, 16, 3);
    let samples = generate_split(&spec, OCCLUDED_SPLIT).unwrap();
    assert_eq!(samples.len(), 16);
    for s in &samples {
        // Occluders are dark and absent before frame K: some lane pixel must
        // change between frame K−1 and K under the occluder.
        let last = s.frames.last().unwrap();
        let prev = &s.frames[s.k() - 2];
        let hidden = (0..s.mask.h)
            .flat_map(|y| (0..s.mask.w).map(move |x| (y, x)))
            .filter(|&(y, x)| s.mask.get(y, x) == 1)
            .any(|(y, x)| (0..3).all(|c| last.at(0, c, y, x) < 0.3) && (0..3).any(|c| prev.at(0, c, y, x) >= 0.3));
        assert!(hidden, "clip {}", s.meta.clip);
    }
    let mut rng = SeededRng::seed_from_u64(1);
    for _ in 0..50 {
        let spec = SynthSpec::random(&mut rng, (32, 64), 13, 1, 5, Scenario::OccludedLast).unwrap();
        assert!(render_mask(&spec).lane_pixels() > 0);
    }
}

#[test]
fn augmented_corpus_has_four_times_the_train_sequences() {
    let mut spec = CorpusSpec::new(3, 0, 0, 11);
    spec.augment = true;
    let samples = generate_split(&spec, TRAIN_SPLIT).unwrap();
    assert_eq!(samples.len(), 12);
    let clips: std::collections::HashSet<_> = samples.iter().map(|s| s.meta.clip.clone()).collect();
    assert_eq!(clips.len(), 12);
}

fn write_rgb(path: &Path, w: u32, h: u32, v: u8) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    RgbImage::from_pixel(w, h, image::Rgb([v, v / 2, 255 - v])).save(path).unwrap();
}

#[test]
fn loader_accepts_ppm_and_pgm_and_resizes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut line = Vec::new();
    for i in 1..=5 {
        let rel = format!("clips/a/{i:02}.ppm");
        write_rgb(&root.join(&rel), 16, 8, 40 * i as u8);
        line.push(rel);
    }
    fs::create_dir_all(root.join("masks")).unwrap();
    let mut mask = GrayImage::new(16, 8);
    for y in 0..8 {
        mask.put_pixel(3, y, image::Luma([255]));
    }
    mask.save(root.join("masks/a.pgm")).unwrap();
    line.push("masks/a.pgm".into());
    fs::write(root.join(INDEX_FILE), format!("# comment\n\n{}\n", line.join(" "))).unwrap();

    let samples: Vec<_> = load_dataset(root, INDEX_FILE, 5, (16, 32)).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(samples.len(), 1);
    let s = &samples[0];
    assert_eq!(s.hw(), (16, 32));
    assert_eq!(s.meta.frames, vec![1, 2, 3, 4, 5]);
    assert_eq!(s.meta.clip, "a");
    assert!((s.frames[0].at(0, 0, 5, 5) - 40.0 / 255.0).abs() < 1e-6);
    assert_eq!(s.mask.lane_pixels(), 2 * 16);
    assert!((0..16).all(|y| s.mask.get(y, 6) == 1 && s.mask.get(y, 7) == 1));

    let batch = make_batch(&[s, s]).unwrap();
    assert_eq!(batch.frames.len(), 5);
    assert_eq!(batch.frames[0].shape().n, 2);
    assert_eq!(batch.target.len(), 2 * 16 * 32);
}

#[test]
fn ingestion_errors_name_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    gen_corpus(root, &CorpusSpec::new(2, 0, 0, 1)).unwrap();
    let train = root.join(TRAIN_SPLIT);
    let index = fs::read_to_string(train.join(INDEX_FILE)).unwrap();
    let lines: Vec<&str> = index.lines().collect();

    // Four frame paths where five are expected.
    let mut short: Vec<&str> = lines[1].split(' ').collect();
    short.remove(0);
    fs::write(train.join("short.txt"), format!("{}\n{}\n", lines[0], short.join(" "))).unwrap();
    match load_dataset(&train, "short.txt", 5, (32, 64)) {
        Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected ingestion error, got {:?}", other.err()),
    }

    // Missing frame file.
    let mut fixed = lines[0].split(' ').collect::<Vec<_>>();
    fixed[0] = "clips/nope/01.png";
    fs::write(train.join("missing.txt"), fixed.join(" ")).unwrap();
    let err = load_dataset(&train, "missing.txt", 5, (32, 64)).unwrap().next().unwrap().unwrap_err();
    assert!(matches!(err, Error::Ingestion { line: 1, .. }), "{err}");

    // Mask with a value neither background nor lane.
    let mask_rel = lines[0].split(' ').last().unwrap();
    let mut m = image::open(train.join(mask_rel)).unwrap().to_luma8();
    m.put_pixel(0, 0, image::Luma([77]));
    m.save(train.join(mask_rel)).unwrap();
    let entries = read_index(&train.join(INDEX_FILE), 5).unwrap();
    let err = load_entry(&train, &train.join(INDEX_FILE), &entries[0], (32, 64)).unwrap_err();
    assert!(matches!(err, Error::Ingestion { line: 1, .. }), "{err}");
    assert!(err.to_string().contains("77"));
}

#[test]
fn binary_masks_threshold_to_zero_one() {
    let mut img = GrayImage::new(4, 1);
    img.put_pixel(1, 0, image::Luma([255]));
    img.put_pixel(2, 0, image::Luma([128]));
    let m = stlane::data::io::mask_from_gray(&img).unwrap();
    assert_eq!(m.data, vec![0, 1, 1, 0]);
}

#[test]
fn synthetic_scene_is_deterministic_per_seed() {
    let mut r1 = SeededRng::seed_from_u64(42);
    let mut r2 = SeededRng::seed_from_u64(42);
    let a = SynthSpec::random(&mut r1, (32, 64), 20, 3, 5, Scenario::Normal).unwrap();
    let b = SynthSpec::random(&mut r2, (32, 64), 20, 3, 5, Scenario::Normal).unwrap();
    assert_eq!(synth_scene(&a).unwrap(), synth_scene(&b).unwrap());
    assert_eq!(synth_scene(&a).unwrap().meta.frames, vec![8, 11, 14, 17, 20]);
}
