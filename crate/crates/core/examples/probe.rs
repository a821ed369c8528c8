use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};

// Fully independent brute-force re-implementation of the experiment loop.
fn oracle_run(seed: u64, p: [f64; 2], burn_in: u64, max_iter: u64, interval: u64, mc: usize) -> bool {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut a = [1.0f64; 2];
    let mut b = [1.0f64; 2];
    for it in 1..=max_iter {
        // thompson
        let t0 = Beta::new(a[0], b[0]).unwrap().sample(&mut rng);
        let t1 = Beta::new(a[1], b[1]).unwrap().sample(&mut rng);
        let pick = if t1 > t0 { 1 } else { 0 };
        if rng.random::<f64>() < p[pick] { a[pick] += 1.0 } else { b[pick] += 1.0 }
        if it >= burn_in && it % interval == 0 {
            let d0 = Beta::new(a[0], b[0]).unwrap();
            let d1 = Beta::new(a[1], b[1]).unwrap();
            let mut wins = [0usize; 2];
            let mut rows = Vec::with_capacity(mc);
            for _ in 0..mc {
                let x = d0.sample(&mut rng);
                let y = d1.sample(&mut rng);
                wins[if y > x { 1 } else { 0 }] += 1;
                rows.push([x, y]);
            }
            let w = if wins[1] > wins[0] { 1 } else { 0 };
            let mut vr: Vec<f64> = rows.iter().map(|r| (r[0].max(r[1]) - r[w]) / r[w]).collect();
            vr.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let q = vr[((0.95 * mc as f64 - 1e-9).ceil() as usize).clamp(1, mc) - 1];
            if q < 0.01 { return true; }
        }
    }
    false
}

fn main() {
    let mut early = 0;
    let n = 100;
    for seed in 0..n {
        if oracle_run(50_000 + seed, [0.5, 0.5], 1500, 2000, 10, 2000) { early += 1; }
    }
    println!("independent oracle: {early}/{n} identical-arm runs terminated early");
}
