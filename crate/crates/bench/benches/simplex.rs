use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use intergrid_bench::damaged;
use intergrid_core::interdependency::prune_to_fixed_point;
use intergrid_core::mitigation::{FlowFormulation, InjectionLp};

fn load_control_lp(c: &mut Criterion) {
    let mut group = c.benchmark_group("load_control_lp");
    group.sample_size(10);
    let (mut net, removals) = damaged(100, 0, 0.1);
    net.apply_removals(&removals).unwrap();
    prune_to_fixed_point(&mut net);
    for form in [FlowFormulation::ShiftFactors, FlowFormulation::PhaseAngles] {
        let lp = InjectionLp::with_comm_supply(&net, form).unwrap();
        let program = lp.program().clone();
        group.bench_with_input(BenchmarkId::new("solve", format!("{form:?}")), &program, |b, p| {
            b.iter(|| black_box(p.solve()))
        });
    }
    group.finish();
}

criterion_group!(benches, load_control_lp);
criterion_main!(benches);
