//! End-to-end regime comparisons at desk scale.

use kaar::config::{ExperimentConfig, Layout};
use kaar::experiments::{compare, effdim_study};

#[test]
fn kaar_beats_ewa_on_the_smooth_preset() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ewa-compare.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml_with_overrides(
        &text,
        &["experiment.horizon=4096".into(), "experiment.n_seeds=1".into()],
    )
    .unwrap();
    let report = compare(&cfg).unwrap();
    let (kaar, ewa) = report.mean_final();
    assert!(kaar < ewa, "final regret: kaar {kaar}, ewa {ewa}");
}

#[test]
fn clustered_layout_grows_no_faster_than_equispaced() {
    let cfg = ExperimentConfig::from_toml_str(
        "[kernel]\nd = 1\ns = 1.0\n[effdim]\nlayouts = [\"equispaced\", \"clustered\"]\nn = [256, 512, 1024, 2048]\ntau = [1.0]\n",
    )
    .unwrap();
    let study = effdim_study(&cfg).unwrap();
    let slope = |l: Layout| study.fits.iter().find(|f| f.layout == l).unwrap().fit.as_ref().unwrap().slope;
    let (eq, cl) = (slope(Layout::Equispaced), slope(Layout::Clustered));
    assert!(cl <= eq + 0.1, "clustered {cl} vs equispaced {eq}");
}
