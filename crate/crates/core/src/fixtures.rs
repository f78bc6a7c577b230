//! Synthetic flight-price data with known structure.
//!
//! Economy fares rise by 5 per hour of flight duration; business fares do
//! not depend on duration. Noise is right-skewed with mean 0 and sd 20, so
//! residuals of a Gaussian fit are visibly skewed. Stops and days before
//! departure have no effect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::{Column, Dataset};
use crate::intent::SynonymMap;

pub const FLIGHT_SEED: u64 = 2024;
pub const FLIGHT_ROWS: usize = 200;
pub const ECONOMY_INTERCEPT: f64 = 100.0;
pub const ECONOMY_SLOPE: f64 = 5.0;
pub const BUSINESS_INTERCEPT: f64 = 600.0;
pub const BUSINESS_SLOPE: f64 = 0.0;
pub const NOISE_SD: f64 = 20.0;

const SYNONYMS_JSON: &str = include_str!("../../../fixtures/flight_synonyms.json");

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Skewed noise: sd·(G − 2)/√2 with G ~ Gamma(shape 2, scale 1).
fn noise(rng: &mut ChaCha20Rng, gamma: &Gamma<f64>) -> f64 {
    NOISE_SD * (gamma.sample(rng) - 2.0) / std::f64::consts::SQRT_2
}

/// The flight fixture: `n` rows, classes alternating economy/business.
pub fn flight_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gamma = Gamma::new(2.0, 1.0).expect("valid gamma parameters");
    let mut price = Vec::with_capacity(n);
    let mut duration = Vec::with_capacity(n);
    let mut stops = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    let mut days_left = Vec::with_capacity(n);
    for i in 0..n {
        let economy = i % 2 == 0;
        let d = round2(rng.random_range(1.0..15.0));
        let (a, b) = if economy {
            (ECONOMY_INTERCEPT, ECONOMY_SLOPE)
        } else {
            (BUSINESS_INTERCEPT, BUSINESS_SLOPE)
        };
        price.push(Some(round2(a + b * d + noise(&mut rng, &gamma))));
        duration.push(Some(d));
        stops.push(Some(rng.random_range(0..=2u8).to_string()));
        class.push(Some(if economy { "economy" } else { "business" }));
        days_left.push(Some(rng.random_range(1..=49u32) as f64));
    }
    Dataset::new(
        vec![
            Column::continuous("price", price),
            Column::continuous("duration", duration),
            Column::categorical("stops", &stops),
            Column::categorical("class", &class),
            Column::continuous("days_left", days_left),
        ],
        "flights.csv",
    )
    .expect("fixture columns are consistent")
}

/// The fixture at its default size and seed.
pub fn flights() -> Dataset {
    flight_dataset(FLIGHT_ROWS, FLIGHT_SEED)
}

/// Phrases used for the fixture's columns in everyday language.
pub fn flight_synonyms() -> SynonymMap {
    SynonymMap::from_json(SYNONYMS_JSON).expect("bundled synonym map is valid")
}
