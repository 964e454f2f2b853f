use rdst_core::Tensor;
use std::time::Instant;

fn main() {
    for &(m, k, n) in &[(4608usize, 48usize, 96usize), (4608, 96, 48), (1152, 60, 180), (64, 64, 10)] {
        let a = Tensor::<f32>::full(&[m, k], 0.5);
        let b = Tensor::<f32>::full(&[k, n], 0.25);
        let start = Instant::now();
        let mut reps = 0u64;
        while start.elapsed().as_secs_f64() < 1.0 {
            let c = a.matmul(&b).unwrap();
            std::hint::black_box(c.data()[0]);
            reps += 1;
        }
        let secs = start.elapsed().as_secs_f64();
        let flops = 2.0 * (m * k * n) as f64 * reps as f64 / secs;
        println!("{}x{}x{}: {:.2} GFLOP/s ({} reps)", m, k, n, flops / 1e9, reps);
    }
}
