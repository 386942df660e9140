//! Rough per-replication timings for the heavy benchmark cells.

use std::time::Instant;

use sdr::dtsir::{dtsir_fit, DtSirConfig};
use sdr::experiments::derive_seed;
use sdr::simgen::{generate, Setting, SettingSpec};

fn main() {
    for (setting, n, p, d) in [
        (Setting::IV, 2000usize, 1000usize, 1usize),
        (Setting::I, 1000, 1000, 2),
        (Setting::II, 500, 6000, 2),
    ] {
        let seed = derive_seed(42, 0, 0);
        let t0 = Instant::now();
        let spec = SettingSpec::new(setting, n, p, 0.5, seed);
        let (data, _truth) = generate(&spec).unwrap();
        let gen_time = t0.elapsed().as_secs_f64();

        let cfg = DtSirConfig::new(n, d, seed);
        // stream 1 = auxiliary-threshold draw; stream 0 belongs to the data
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rng.set_stream(1);
        let t1 = Instant::now();
        let fit = dtsir_fit(&data, &cfg, &mut rng);
        let fit_time = t1.elapsed().as_secs_f64();
        match fit {
            Ok(f) => println!(
                "{setting} n={n} p={p}: gen {gen_time:.2}s fit {fit_time:.2}s survivors={}",
                f.screening.included.len()
            ),
            Err(e) => println!("{setting} n={n} p={p}: gen {gen_time:.2}s fit FAILED: {e}"),
        }
    }
}
