mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use ismf_core::directivity::{self, DirectivityPattern, Orientation, OrientedPattern};
use ismf_core::geometry::{Shoebox, Vec3};
use ismf_core::ism::{
    self, batch_rirs, rir_length, synthesize_rir, transfer_function, ArrayGeometry, Microphone, PreparedRequest,
    ReceiverMode, RirRequest, SimulationMode, SPEED_OF_SOUND,
};
use ismf_core::materials::{self, AbsorptionProfile, SurfaceSet};
use ismf_core::rng::{stream, Stream};
use ismf_core::scenario::{sample_scene, Profile};

fn random_point<R: Rng>(rng: &mut R, room: &Shoebox, margin: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(margin..room.dims.x - margin),
        rng.random_range(margin..room.dims.y - margin),
        rng.random_range(margin..room.dims.z - margin),
    )
}

fn random_room<R: Rng>(rng: &mut R) -> Shoebox {
    Shoebox::new(
        rng.random_range(3.0..8.0),
        rng.random_range(3.0..7.0),
        rng.random_range(2.5..4.0),
    )
    .unwrap()
}

/// Two-microphone advanced request with every directional feature on.
fn directional_request(seed: u64, max_order: u32) -> RirRequest {
    let mut rng = stream(seed, Stream::Auxiliary);
    let room = random_room(&mut rng);
    let source = random_point(&mut rng, &room, 0.5);
    let center = random_point(&mut rng, &room, 0.5);
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let look = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.2);
    let mics = vec![
        Microphone {
            offset: Vec3::new(-0.05, 0.0, 0.0),
            directivity: OrientedPattern::new(
                Arc::new(DirectivityPattern::Cardioid { order: 1, a: 0.5 }),
                Orientation::facing(Vec3::new(0.3, 1.0, 0.1)).unwrap(),
            ),
        },
        Microphone {
            offset: Vec3::new(0.05, 0.0, 0.0),
            directivity: OrientedPattern::new(Arc::new(directivity::baffled_capsule()), Orientation::default()),
        },
    ];
    RirRequest {
        room,
        surfaces: materials::sample_advanced_absorption(seed),
        source,
        source_directivity: OrientedPattern::new(
            Arc::new(directivity::synthetic_talker()),
            Orientation::facing(look).unwrap(),
        ),
        array: ArrayGeometry {
            mics,
            mode: ReceiverMode::PerMicrophone,
        },
        array_center: center,
        array_orientation: Orientation::horizontal(az),
        fs: 16000.0,
        max_order,
        mode: SimulationMode::Advanced,
        air_absorption: true,
        max_samples: ism::DEFAULT_MAX_SAMPLES,
        seed: Some(seed),
    }
}

fn anechoic_request(seed: u64) -> RirRequest {
    let mut rng = stream(seed, Stream::Geometry);
    let room = random_room(&mut rng);
    let source = random_point(&mut rng, &room, 0.3);
    let mut receiver = random_point(&mut rng, &room, 0.3);
    while receiver.distance(source) < 0.5 {
        receiver = random_point(&mut rng, &room, 0.3);
    }
    let mut req = RirRequest::simple(room, 1.0, source, receiver, 16000.0, 0).unwrap();
    req.air_absorption = false;
    req
}

#[test]
fn transfer_function_matches_brute_force() {
    for seed in 0..6u64 {
        for mode in [SimulationMode::Advanced, SimulationMode::Naive] {
            let mut req = directional_request(seed, (seed % 3) as u32);
            req.mode = mode;
            let n = 512;
            let got = transfer_function(&req, n).unwrap();
            let want = common::brute_force_transfer(&req, n);
            for (g, w) in got.iter().zip(&want) {
                let err = common::relative_error_complex(g, w);
                assert!(err < 1e-9, "seed {seed} {mode}: relative error {err:e}");
            }
        }
    }
}

#[test]
fn anechoic_rir_is_a_periodic_sinc() {
    for seed in 0..10u64 {
        let req = anechoic_request(seed);
        let rir = synthesize_rir(&req).unwrap();
        let r = req.source.distance(req.array_center);
        let delay = req.fs * r / SPEED_OF_SOUND;
        let n = rir.len();
        let want: Vec<f64> = (0..n).map(|t| common::periodic_sinc(t as f64, delay, n) / r).collect();
        let db = common::relative_error_db(&rir.channels[0], &want);
        assert!(db < -50.0, "seed {seed}: {db:.1} dB");
    }
}

#[test]
fn decomposition_resynthesizes_the_rir() {
    let req = directional_request(11, 2);
    let rir = synthesize_rir(&req).unwrap();
    let n = rir.len();
    let prepared = PreparedRequest::new(&req, n).unwrap();
    let mut sum = vec![vec![0.0; n]; 2];
    for k in 0..prepared.images().len() {
        for (acc, ch) in sum
            .iter_mut()
            .zip(ism::spectra_to_time(prepared.image_transfer(k).unwrap(), n))
        {
            acc.iter_mut().zip(ch).for_each(|(a, v)| *a += v);
        }
    }
    let peak = rir.channels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in sum.iter().flatten().zip(rir.channels.iter().flatten()) {
        assert!((a - b).abs() <= 1e-9 * peak);
    }
}

#[test]
fn parseval_holds() {
    for seed in 0..4u64 {
        let req = directional_request(seed, 3);
        let rir = synthesize_rir(&req).unwrap();
        let n = rir.len();
        let spectra = transfer_function(&req, n).unwrap();
        for (h, s) in rir.channels.iter().zip(&spectra) {
            let time: f64 = h.iter().map(|v| v * v).sum();
            let last = s.len() - 1;
            let mut freq = s[0].re.powi(2) + s[last].re.powi(2);
            freq += 2.0 * s[1..last].iter().map(|c| c.norm_sqr()).sum::<f64>();
            freq /= n as f64;
            assert!((time - freq).abs() <= 1e-9 * time, "{time} vs {freq}");
        }
    }
}

#[test]
fn advanced_reduces_to_naive_with_flat_omni_setup() {
    let mut rng = stream(99, Stream::Auxiliary);
    for _ in 0..20 {
        let room = random_room(&mut rng);
        let src = random_point(&mut rng, &room, 0.3);
        let rcv = random_point(&mut rng, &room, 0.3);
        let alpha = rng.random_range(0.1..0.6);
        let mut req = RirRequest::simple(room, alpha, src, rcv, 16000.0, 6).unwrap();
        req.surfaces = SurfaceSet::uniform(AbsorptionProfile::flat(alpha).unwrap());
        let naive = synthesize_rir(&req).unwrap();
        req.mode = SimulationMode::Advanced;
        let advanced = synthesize_rir(&req).unwrap();
        let db = common::relative_error_db(&advanced.channels[0], &naive.channels[0]);
        assert!(db < -60.0, "{db:.1} dB");
    }
}

/// Orders 18 to 20 carry roughly `(1 - alpha)^18` of the energy, so this
/// bound does not hold for alpha near 0.1.
#[test]
fn order_20_adds_under_one_percent_energy_in_typical_rooms() {
    let mut report = Vec::new();
    for seed in 0..6u64 {
        for mode in [SimulationMode::Naive, SimulationMode::Advanced] {
            let scene = sample_scene(mode, Profile::Voicehome, 500 + seed).unwrap();
            let mut req20 = scene.request().unwrap();
            req20.max_order = 20;
            let mut req17 = req20.clone();
            req17.max_order = 17;
            let n = rir_length(&req20).unwrap();
            let energy =
                |req: &RirRequest| -> f64 { transfer_function(req, n).unwrap()[0].iter().map(|c| c.norm_sqr()).sum() };
            let (e17, e20) = (energy(&req17), energy(&req20));
            let alpha = scene.surfaces.broadband_alpha(&scene.room);
            report.push((mode, alpha, (e20 - e17).abs() / e20));
        }
    }
    let over: Vec<String> = report
        .iter()
        .filter(|r| r.2 >= 0.01)
        .map(|(m, a, c)| format!("{m} alpha {a:.3}: {:.2}%", 100.0 * c))
        .collect();
    assert!(
        over.is_empty(),
        "{} of {} scenes change by 1 % or more: {over:?}",
        over.len(),
        report.len()
    );
}

#[test]
fn batch_is_independent_of_worker_count() {
    let requests: Vec<RirRequest> = (0..6).map(|s| directional_request(s, 4)).collect();
    let serial = batch_rirs(&requests, 1).unwrap();
    let parallel = batch_rirs(&requests, 3).unwrap();
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
    }
}

fn flat_room() -> impl Strategy<Value = (Shoebox, Vec3, Vec3)> {
    (
        3.0..8.0f64,
        3.0..7.0f64,
        2.5..4.0f64,
        prop::array::uniform6(0.1..0.9f64),
    )
        .prop_map(|(lx, ly, lz, f)| {
            let room = Shoebox::new(lx, ly, lz).unwrap();
            let p = |a: f64, b: f64, c: f64| Vec3::new(a * lx, b * ly, c * lz);
            (room, p(f[0], f[1], f[2]), p(f[3], f[4], f[5]))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_does_not_grow_with_absorption(
        (room, src, rcv) in flat_room(),
        alpha in 0.05..0.8f64,
        step in 0.05..0.2f64,
    ) {
        prop_assume!(src.distance(rcv) > 0.3);
        let energy = |a: f64| {
            let mut req = RirRequest::simple(room, a, src, rcv, 8000.0, 6).unwrap();
            req.air_absorption = false;
            transfer_function(&req, 8192).unwrap()[0].iter().map(|c| c.norm_sqr()).sum::<f64>()
        };
        prop_assert!(energy((alpha + step).min(1.0)) <= energy(alpha));
    }

    #[test]
    fn swapping_source_and_receiver_is_reciprocal(
        (room, src, rcv) in flat_room(),
        alpha in 0.1..0.9f64,
        order in 0u32..8,
    ) {
        prop_assume!(src.distance(rcv) > 0.3);
        let forward = synthesize_rir(&RirRequest::simple(room, alpha, src, rcv, 16000.0, order).unwrap()).unwrap();
        let backward = synthesize_rir(&RirRequest::simple(room, alpha, rcv, src, 16000.0, order).unwrap()).unwrap();
        prop_assert_eq!(forward.len(), backward.len());
        let db = common::relative_error_db(&backward.channels[0], &forward.channels[0]);
        prop_assert!(db < -80.0, "{} dB", db);
    }

    #[test]
    fn reflection_magnitude_never_exceeds_one(alphas in prop::array::uniform6(0.001..1.0f64)) {
        let profile = AbsorptionProfile::octave(alphas).unwrap();
        let spectrum = materials::minimum_phase(&materials::band_to_dft(&profile, 1024, 16000.0).unwrap());
        prop_assert!(spectrum.gains.iter().all(|g| g.norm() <= 1.0 + 1e-12));
    }
}
