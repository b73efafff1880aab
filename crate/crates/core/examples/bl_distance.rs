//! Bounded-Lipschitz distance between empirical measures, next to the sorted
//! Wasserstein-1 upper bound.
//!
//!     cargo run --release --example bl_distance

use rand::Rng;
use twoscale::metrics::{bl_distance, w1_sorted_1d, EmpiricalMeasure, DEFAULT_MAX_N};
use twoscale::rng::{normal, stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = stream(4, 0, 0);
    for shift in [0.0, 0.1, 0.5, 2.0] {
        let a: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..1000).map(|_| normal(&mut rng) + shift).collect();
        let (ma, mb) = (EmpiricalMeasure::from_1d(&a)?, EmpiricalMeasure::from_1d(&b)?);
        println!(
            "shift {shift:<4}: BL {:.4}, W1 {:.4}",
            bl_distance(&ma, &mb, DEFAULT_MAX_N)?,
            w1_sorted_1d(&ma, &mb)?
        );
    }
    let pts = |rng: &mut twoscale::rng::StreamRng| -> Vec<Vec<f64>> {
        (0..500).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
    };
    let (p, q) = (pts(&mut rng), pts(&mut rng));
    let d = bl_distance(&EmpiricalMeasure::new(&p)?, &EmpiricalMeasure::new(&q)?, DEFAULT_MAX_N)?;
    println!("two uniform samples on the unit square: BL {d:.4}");
    Ok(())
}
