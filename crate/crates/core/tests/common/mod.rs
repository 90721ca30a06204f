#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultralocal::augment::{build_augmented, AugmentedSystem, UltraLocalOrders};
use ultralocal::matlib::{Mat, DEFAULT_RANK_TOL};
use ultralocal::model::{transform, PlantModel, TransformedPlant};
use ultralocal::sim::{manipulator_plant, ManipulatorParams};

pub fn manipulator() -> (TransformedPlant, AugmentedSystem) {
    let tp = transform(manipulator_plant(&ManipulatorParams::default()).unwrap(), DEFAULT_RANK_TOL).unwrap();
    let aug = build_augmented(&tp, UltraLocalOrders::uniform(4).unwrap()).unwrap();
    (tp, aug)
}

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Small linear plant with full-state measurement, one matched process fault,
/// optionally one unmatched fault, and one disturbance channel.
pub fn random_small_plant(seed: u64) -> (TransformedPlant, AugmentedSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=3);
    let a = random(&mut rng, n, n);
    let s = random(&mut rng, n, 1);
    let fx = if rng.random_bool(0.5) {
        let mut fx = Mat::zeros(n, 2);
        fx.column_mut(0).copy_from(&s.column(0));
        fx.column_mut(1).copy_from(&random(&mut rng, n, 1).column(0));
        fx
    } else {
        s.clone()
    };
    let plant = PlantModel::linear(
        a,
        random(&mut rng, n, 1),
        s,
        Mat::identity(n, n),
        Mat::identity(n, n),
        fx,
        Mat::zeros(n, 0),
        random(&mut rng, n, 1),
    )
    .unwrap();
    let tp = transform(plant, DEFAULT_RANK_TOL).unwrap();
    let aug = build_augmented(&tp, UltraLocalOrders::uniform(2).unwrap()).unwrap();
    (tp, aug)
}
