use ddfdi_core::numkit::*;
use ddfdi_core::random_systems::uniform_matrix;
use rand::SeedableRng;
fn main() {
    let (seed, n, m, p) = (5328390423379625298u64, 4, 2, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let c = uniform_matrix(&mut rng, p, n);
    let b_u = uniform_matrix(&mut rng, n, m);
    let a = uniform_matrix(&mut rng, n, n) * 0.5;
    let uio = ddfdi_core::UioMatrices::new(a, b_u, Mat::zeros(n, p), Mat::zeros(n, p), c).unwrap();
    println!("cb sv {:?}", singular_values(&(&uio.c * &uio.b_u)));
    let st = ddfdi_core::build_markov_stack(&uio, 5).unwrap();
    println!("mn sv {:?}", singular_values(&st.m_n));
}
