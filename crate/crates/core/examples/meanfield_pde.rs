//! Averaged mean-field equation on a 1D grid: the mean moves to the fitness
//! peak, mass is conserved and the equilibrium relations hold.
//!
//!     cargo run --release --example meanfield_pde

use twoscale::meanfield::{equilibrium_residual, evolve, DensityGrid, PdeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rho0 = DensityGrid::uniform(vec![-3.0], vec![3.0], vec![600])?;
    let cfg = PdeConfig::new(|h: &[f64]| -(h[0] - 0.3).powi(2))
        .alpha(100.0)
        .sigma(0.05)
        .dt(0.05);
    let (rho, records) = evolve(&rho0, &cfg, 400, 40)?;
    for r in &records {
        println!(
            "t = {:>5.2}: mean {:+.5}, energy {:.5}, mass drift {:.1e}",
            r.time, r.mean[0], r.energy, r.mass_drift
        );
    }
    let (r_mean, r_energy) = equilibrium_residual(&rho, &cfg)?;
    println!("equilibrium residuals: mean {r_mean:.2e}, second moment {r_energy:.2e}");
    Ok(())
}
