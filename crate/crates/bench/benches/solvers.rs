use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlekit::catalog;
use saddlekit::continuous_game::RefinementBudget;
use saddlekit::matrix_game::{solve_fictitious_play, solve_lp, MatrixGame};
use saddlekit::measures::{c_flat, expected_payoff, MixedStrategy, Ratio};
use saddlekit::paramlab::{sweep, SweepSettings};
use saddlekit::{parse, solve, Domain, SearchBudget};

fn random_game(n: usize) -> MatrixGame {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let rows = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    MatrixGame::from_rows(rows).unwrap()
}

fn matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lp");
    group.sample_size(10);
    for n in [5, 33, 129, 257] {
        let g = random_game(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| b.iter(|| solve_lp(black_box(g), 1e-9).unwrap()));
    }
    group.finish();
    let g = random_game(5);
    c.bench_function("fictitious_play_5x5_200k", |b| b.iter(|| solve_fictitious_play(black_box(&g), 200_000)));
}

fn series(c: &mut Criterion) {
    let timing = parse("6^a*4^b*[b<a] - 6^b*4^a*[a<b]").unwrap();
    let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
    let ints = Domain::integers(1, None).unwrap();
    c.bench_function("timing_expected_payoff_a6", |b| {
        b.iter(|| expected_payoff(&timing, black_box(&MixedStrategy::point(6.0)), &pb).unwrap())
    });
    c.bench_function("timing_guaranteed_gain", |b| b.iter(|| c_flat(&timing, black_box(&pb), &ints, &SearchBudget::default()).unwrap()));
}

fn continuous(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for g in catalog::games() {
        group.bench_function(g.name, |b| {
            b.iter(|| solve(&g.payoff, &g.a_domain, &g.b_domain, 1e-4, &RefinementBudget::default()).unwrap())
        });
    }
    group.finish();
}

fn families(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for f in catalog::families() {
        let settings = SweepSettings {
            profile: f.profile,
            ..SweepSettings::default()
        };
        group.bench_function(f.name, |b| b.iter(|| sweep(&f.family, 1e-4, &settings).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, matrix, series, continuous, families);
criterion_main!(benches);
