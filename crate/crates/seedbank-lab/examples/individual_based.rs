//! Individual-based models: the discrete Fisher-Wright chain with a seed
//! bank approaching its diffusion limit, and the multi-colour Moran model.

use seedbank_lab::ibm::{
    fw_diffusion_limit_check, moran_first_moment_check, moran_fixed_point, moran_relaxation_rate,
    FwLimitConfig, MoranParams, MoranState,
};

fn main() -> seedbank_lab::Result<()> {
    let report = fw_diffusion_limit_check(&FwLimitConfig {
        n_sweep: vec![50, 100, 200, 400],
        k_ratio: 1.0,
        c: 1,
        x0: 0.5,
        y0: 0.5,
        t: 0.5,
        replicas: 20_000,
        seed: 4,
        dt: 1e-3,
    })?;
    for p in &report.points {
        println!("N = {:>3}: W1 to the diffusion {:.5}", p.n, p.w1);
    }

    let p = MoranParams::new(90, vec![1.0, 3.0], vec![2.0, 4.0])?;
    println!(
        "Moran switching fixed point {:?}, relaxation rate {:.4}",
        moran_fixed_point(&p),
        moran_relaxation_rate(&p)
    );
    let start = MoranState {
        x: 10,
        y: vec![20, 5],
        z_d: vec![20, 30],
    };
    let m = moran_first_moment_check(&p, &start, &[0.5, 1.0, 2.0], 10_000, 1, 0.05)?;
    for (k, t) in m.times.iter().enumerate() {
        println!(
            "t = {t:.3}: x̄ {:.4} ± {:.4} vs kernel {:.4}",
            m.x[k].mean, m.x[k].stderr, m.kernel_x[k]
        );
    }
    println!("largest standardized deviation {:.2}", m.max_abs_z);
    Ok(())
}
