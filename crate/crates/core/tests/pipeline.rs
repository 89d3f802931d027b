use std::fs;
use std::path::Path;

use moi_mixer::cli;
use moi_mixer::dataset::{load_dataset, pad_truncate, synth_generate, SynthRule};
use moi_mixer::model::{
    load_checkpoint, rounded_millions, save_checkpoint, Arch, ModelConfig, MoiMixerModel,
};
use moi_mixer::training::{train, TrainConfig};
use tempfile::tempdir;

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["moi-mixer".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    cli::run(v)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// 20 users. u0..u15 see items A..F in a rotated order, u15 also sees Z. u16 sees A..D and Z,
/// and loses Z (two interactions) and then itself (four left). u17..u19 are too short.
fn fixture() -> String {
    let items = ["A", "B", "C", "D", "E", "F"];
    let mut out = String::new();
    for u in 0..16 {
        for t in 0..6 {
            out.push_str(&format!("u{u}\t{}\t{}\n", items[(u + t) % 6], 100 + t));
        }
    }
    out.push_str("u15\tZ\t200\n");
    for (t, i) in ["A", "B", "C", "D", "Z"].iter().enumerate() {
        out.push_str(&format!("u16\t{i}\t{t}\n"));
    }
    for (u, n) in [(17, 4), (18, 3), (19, 2)] {
        for (t, i) in items.iter().take(n).enumerate() {
            out.push_str(&format!("u{u}\t{i}\t{t}\n"));
        }
    }
    out
}

#[test]
fn prepare_matches_hand_counts() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("log.tsv"), fixture()).unwrap();
    assert_eq!(
        run(&[
            "prepare",
            "--input",
            &p(dir.path(), "log.tsv"),
            "--out",
            &p(dir.path(), "data")
        ]),
        0
    );
    let data = dir.path().join("data");
    let stats = fs::read_to_string(data.join("stats.tsv")).unwrap();
    assert_eq!(
        stats,
        "users\titems\tinteractions\tavg_interactions\n16\t6\t96\t6.0\n"
    );
    let lines = |f: &str| fs::read_to_string(data.join(f)).unwrap().lines().count();
    assert_eq!(
        (lines("train.tsv"), lines("valid.tsv"), lines("test.tsv")),
        (64, 16, 16)
    );

    let ds = load_dataset(&data).unwrap();
    assert_eq!(ds.num_items(), 6);
    // every training prefix holds four of the six items, so popularities sum to 64
    let total: u64 = (1..=6).map(|i| ds.popularity(i)).sum();
    assert_eq!(total, 64);
    let names = ds.item_names();
    for u in ds.users() {
        let rank = |i: usize| {
            ["A", "B", "C", "D", "E", "F"]
                .iter()
                .position(|n| *n == names[i - 1])
                .unwrap()
        };
        let start: usize = u.user[1..].parse().unwrap();
        assert_eq!(rank(u.test), (start + 5) % 6, "{}", u.user);
        assert_eq!(rank(u.valid), (start + 4) % 6, "{}", u.user);
    }
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let mut c = ModelConfig::default_for(15, 10);
    c.hidden = 12;
    c.channel_order = 3;
    let mut model = MoiMixerModel::new(c, 4).unwrap();
    let seqs: Vec<Vec<usize>> = (0..20)
        .map(|u| (0..8).map(|t| 1 + (u + 2 * t) % 15).collect())
        .collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        lr: 1e-2,
        ..Default::default()
    };
    train(&mut model, &seqs, &cfg, None).unwrap();
    let dir = tempdir().unwrap();
    save_checkpoint(&model, dir.path()).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back, model);
    let batch: Vec<Vec<usize>> = seqs[..3].iter().map(|q| pad_truncate(q, 10)).collect();
    assert_eq!(
        back.score_last(&batch).unwrap(),
        model.score_last(&batch).unwrap()
    );

    // a truncated parameter file is reported, not silently padded
    let bin = dir.path().join("params.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
}

#[test]
fn cli_exit_codes() {
    let dir = tempdir().unwrap();
    let data = p(dir.path(), "data");
    assert_eq!(
        run(&["synth", "--out", &data, "--items", "20", "--users", "40", "--seed", "3"]),
        0
    );
    // missing input file
    assert_eq!(
        run(&[
            "prepare",
            "--input",
            &p(dir.path(), "nope.tsv"),
            "--out",
            &p(dir.path(), "x")
        ]),
        2
    );
    // unknown key
    assert_eq!(run(&["count", "--set", "widht=4"]), 2);
    // missing --seed
    assert_eq!(
        run(&["train", "--data", &data, "--out", &p(dir.path(), "t")]),
        2
    );
    // malformed log: every line broken
    fs::write(dir.path().join("bad.tsv"), "a b c\nd e f\n").unwrap();
    assert_eq!(
        run(&[
            "prepare",
            "--input",
            &p(dir.path(), "bad.tsv"),
            "--out",
            &p(dir.path(), "y")
        ]),
        2
    );
    assert_eq!(
        run(&["count", "--out", &p(dir.path(), "c"), "--set", "max_len=50"]),
        0
    );
    let table = fs::read_to_string(dir.path().join("c/count.tsv")).unwrap();
    assert!(table.contains("812032"), "{table}");
    assert_eq!(
        run(&[
            "evaluate",
            "--data",
            &data,
            "--out",
            &p(dir.path(), "e"),
            "--seed",
            "1",
            "--pop"
        ]),
        0
    );
    assert!(dir.path().join("e/report.tsv").exists());
}

#[test]
fn gmlp_sizes_follow_the_closed_form() {
    let weights = |layers: usize, hidden: usize, s: usize| {
        let mut c = ModelConfig::default_for(10, s);
        c.arch = Arch::Gmlp;
        c.layers = layers;
        c.hidden = hidden;
        c.encoder_param_count().weights
    };
    let cases = [
        ((12, 512, 200), 19.4, 1),
        ((8, 512, 200), 12.9, 1),
        ((4, 512, 200), 6.5, 1),
        ((2, 256, 200), 0.9, 1),
        ((2, 256, 200), 0.87, 2),
        ((2, 256, 50), 0.79, 2),
        ((2, 64, 1000), 2.05, 2),
    ];
    for ((l, d, s), want, digits) in cases {
        assert_eq!(
            rounded_millions(weights(l, d, s), digits),
            want,
            "L={l} d={d} s={s}"
        );
    }
    // 4 x 256 lands at 1.73M under this count
    assert_eq!(rounded_millions(weights(4, 256, 200), 1), 1.7);

    let mut c = ModelConfig::default_for(10, 8);
    c.arch = Arch::Gmlp;
    c.hidden = 6;
    let model = MoiMixerModel::new(c.clone(), 0).unwrap();
    assert_eq!(model.encoder_param_count(), c.encoder_param_count());
}

#[test]
fn synthetic_dataset_round_trips_through_disk() {
    let ds = synth_generate(12, 30, 5, 9, SynthRule::Successor, 2).unwrap();
    let dir = tempdir().unwrap();
    moi_mixer::dataset::write_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.users(), ds.users());
    assert_eq!(back.stats(), ds.stats());
}
