//! Moments of a shifted ReLU in both modes, checked against Monte Carlo.
//!
//!     cargo run --release --example relu_moments

use resgrad::analysis::{check_moment_oracles, MomentMode, MomentReport};

fn main() {
    println!("{:>5} {:>8} {:>9} {:>9} {:>7} {:>7} {:>9}", "a", "mode", "E(y)", "E(y^2)", "c1", "c2", "constant");
    for mode in MomentMode::ALL {
        for a in [0.0, 0.5, 1.0, 2.0] {
            let r = MomentReport::new(a, mode);
            println!(
                "{:>5.2} {:>8} {:>9.5} {:>9.5} {:>7.4} {:>7.4} {:>9.5}",
                a, mode, r.e_y, r.e_y2, r.c1, r.c2, r.eq14_constant
            );
        }
    }

    println!("\nquadrature vs Monte Carlo (200k samples)");
    for c in check_moment_oracles(&[-1.0, 0.0, 1.0], 200_000, 0) {
        println!(
            "a={:>5.2}  E(y^2) quad {:.5}  mc {:.5} +- {:.5}  ({:.2} se)",
            c.a, c.quadrature.1, c.mc.e_y2, c.mc.se_y2, c.max_z
        );
    }
}
