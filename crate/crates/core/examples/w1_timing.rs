//! Times exact W1 solves on planar point clouds.
use std::time::Instant;

use vaecert::data::{sample_from, DatasetSpec};
use vaecert::math::{Matrix, Rng};
use vaecert::transport::w1_empirical;

fn main() -> vaecert::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2048);
    let mut rng = Rng::new(1);
    for spec in [DatasetSpec::TwoGaussians, DatasetSpec::Circle] {
        let a = sample_from(&spec, m, 0, &mut rng)?;
        // A slightly blurred copy stands in for model samples.
        let mut b = sample_from(&spec, m, 0, &mut rng)?;
        let noise = Matrix::from_vec(m, 2, rng.gaussian(2 * m))?;
        b.axpy(0.05, &noise);
        let t = Instant::now();
        let w = w1_empirical(&a, &b)?;
        println!("{} m={m}: W1 {:.5} in {:.2?}", spec.name(), w.value, t.elapsed());
    }
    Ok(())
}
