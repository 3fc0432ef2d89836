//! Standard synthetic presets shared by the acceptance gate.

use turbo_core::data::SyntheticConfig;
use turbo_core::trainer::TrainConfig;

/// Seeds of every multi-seed check.
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Four classes, 2 000 samples, `d1 = d2 = 32`.
pub fn standard_data() -> SyntheticConfig {
    SyntheticConfig {
        classes: 4,
        samples_per_class: 500,
        latent_dim: 8,
        d1: 32,
        d2: 32,
        noise: 2.0,
        seed: 0,
    }
}

/// Two classes, otherwise as [`standard_data`].
pub fn binary_data() -> SyntheticConfig {
    SyntheticConfig {
        classes: 2,
        samples_per_class: 1000,
        ..standard_data()
    }
}

/// Training defaults (`d = 64`), scored on the first three folds of a
/// 10-fold plan.
pub fn standard_train() -> TrainConfig {
    TrainConfig {
        max_folds: Some(3),
        ..TrainConfig::default()
    }
}
