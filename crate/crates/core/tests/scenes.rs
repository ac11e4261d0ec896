mod common;

use proptest::prelude::*;

use ismf_core::ism::SimulationMode;
use ismf_core::materials;
use ismf_core::rng::{self, Stream};
use ismf_core::scenario::{
    ground_truth_doa, measured_snr, render_sample, sample_scene, NoiseConfig, Profile, SceneSpec,
};
use ismf_core::speech;

fn scenes(mode: SimulationMode, n: u64) -> Vec<SceneSpec> {
    (0..n)
        .map(|s| sample_scene(mode, Profile::Voicehome, s).unwrap())
        .collect()
}

#[test]
fn naive_and_advanced_t60_populations_overlap() {
    let t60 = |mode| -> Vec<f64> {
        scenes(mode, 10_000)
            .iter()
            .map(|s| materials::mid_band_t60(&s.room, &s.surfaces).unwrap())
            .collect()
    };
    let d = common::ks_statistic(&t60(SimulationMode::Naive), &t60(SimulationMode::Advanced));
    assert!(d < 0.15, "KS statistic {d:.3}");
}

#[test]
fn mean_room_volume_matches_product_of_uniform_means() {
    let v: Vec<f64> = scenes(SimulationMode::Naive, 10_000)
        .iter()
        .map(|s| s.room.volume())
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let want = 6.5 * 6.5 * 3.25;
    assert!((mean / want - 1.0).abs() < 0.02, "{mean} vs {want}");
}

#[test]
fn snr_draws_are_unimodal_around_forty_db() {
    let cfg = NoiseConfig::default();
    let mut rng = rng::stream(2024, Stream::Noise);
    let draws: Vec<f64> = (0..10_000).map(|_| cfg.draw_snr(&mut rng).unwrap()).collect();
    assert!(draws.iter().all(|&s| (15.0..=75.0).contains(&s)));
    // Gaussian kernel density on a 0.1 dB grid, Silverman bandwidth.
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bw = 1.06 * sd * n.powf(-0.2);
    let grid: Vec<f64> = (150..=750).map(|i| i as f64 / 10.0).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&x| draws.iter().map(|&s| (-0.5 * ((x - s) / bw).powi(2)).exp()).sum())
        .collect();
    let peaks: Vec<usize> = (1..density.len() - 1)
        .filter(|&i| density[i] > density[i - 1] && density[i] >= density[i + 1])
        .collect();
    assert_eq!(
        peaks.len(),
        1,
        "local maxima at {:?}",
        peaks.iter().map(|&i| grid[i]).collect::<Vec<_>>()
    );
    let mode = grid[peaks[0]];
    assert!((mode - 40.0).abs() <= 2.0, "mode {mode}");
}

#[test]
fn rendered_snr_is_exact_when_remeasured() {
    for seed in 0..3u64 {
        let mut scene = sample_scene(SimulationMode::Advanced, Profile::Voicehome, seed).unwrap();
        scene.max_order = 6;
        let dry = speech::synthetic_utterance(&mut rng::stream(seed, Stream::Speech), scene.fs, 3.0);
        let s = render_sample(&scene, &dry, &NoiseConfig::default(), seed).unwrap();
        assert!((measured_snr(&s.speech_image, &s.noise) - s.snr_db).abs() < 0.1);
        assert!((15.0..=75.0).contains(&s.snr_db));
        assert_eq!(s.audio.len(), 2);
        assert_eq!(s.audio[0].len(), 32_000);
        assert!(s.audio.iter().flatten().all(|v| v.is_finite()));
        assert!((s.doa_true - ground_truth_doa(&scene).unwrap()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_scenes_satisfy_invariants(seed in any::<u64>(), p in 0usize..3, advanced in any::<bool>()) {
        let mode = if advanced { SimulationMode::Advanced } else { SimulationMode::Naive };
        let scene = sample_scene(mode, Profile::ALL[p], seed).unwrap();
        scene.check_invariants().unwrap();
        let doa = ground_truth_doa(&scene).unwrap();
        prop_assert!((0.0..=180.0).contains(&doa));
        prop_assert_eq!(scene.clone(), sample_scene(mode, Profile::ALL[p], seed).unwrap());
    }

    #[test]
    fn modes_share_geometry(seed in any::<u64>(), p in 0usize..3) {
        let n = sample_scene(SimulationMode::Naive, Profile::ALL[p], seed).unwrap();
        let a = sample_scene(SimulationMode::Advanced, Profile::ALL[p], seed).unwrap();
        prop_assert_eq!(n.room, a.room);
        prop_assert_eq!(n.source, a.source);
        if !Profile::ALL[p].wall_mounted() {
            prop_assert_eq!(n.array_center, a.array_center);
            prop_assert_eq!(n.array_axis, a.array_axis);
        }
    }
}
