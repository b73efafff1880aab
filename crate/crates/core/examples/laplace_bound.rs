//! Both sides of the quantitative Laplace bound for a sample of
//! hyperparameters as the selection pressure grows.
//!
//!     cargo run --release --example laplace_bound

use rand::Rng;
use twoscale::fitness::{laplace_bound, LaplaceConstants};
use twoscale::metrics::EmpiricalMeasure;
use twoscale::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = stream(6, 0, 0);
    let pts: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let sample = EmpiricalMeasure::new(&pts)?;
    let fbar = |h: &[f64]| -(h[0] - 0.3).powi(2);
    let r = 0.2;
    let k = LaplaceConstants {
        c_p: 1.0,
        p: 2.0,
        r_p: 1.0,
        fbar_r: r * r,
        fbar_inf: 0.49,
    };
    for alpha in [1.0, 10.0, 100.0, 1000.0] {
        let (lhs, rhs) = laplace_bound(&sample, &fbar, &[0.3], alpha, r, 0.1, &k)?;
        println!("alpha {alpha:>6}: |m - h*| = {lhs:.4} <= {rhs:.4}");
    }
    Ok(())
}
