use chrono::{TimeZone, Utc};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use plsql_guard::admin::{AdminState, GrantWindow};
use plsql_guard::batch::{classify_all, classify_all_sequential, decide_all, decide_all_sequential, Request};
use plsql_guard::classifier::ObjectType;

fn state() -> AdminState {
    let at = Utc.with_ymd_and_hms(2026, 3, 10, 12, 0, 0).unwrap();
    let mut s = AdminState::initial("bench-password", None, at).unwrap();
    for i in 0..10_000 {
        s.add_object("HR", ObjectType::Table, &format!("T{i}"), at).unwrap();
    }
    for i in (0..10_000).step_by(10) {
        s.grant_permission("SCOTT", "HR", ObjectType::Table, &format!("T{i}"), GrantWindow::default()).unwrap();
    }
    s
}

fn texts(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i % 4 {
            0 => format!("DROP TABLE hr.t{}", i % 10_000),
            1 => format!("UPDATE hr.t{} SET c = {i}", (i * 7) % 10_000),
            2 => format!("SELECT a.x FROM hr.t{} a JOIN scott.other b ON a.id = b.id", i % 10_000),
            _ => "SELECT text FROM all_source".to_string(),
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let s = state();
    let at = Utc.with_ymd_and_hms(2026, 3, 10, 12, 0, 0).unwrap();
    let mut group = c.benchmark_group("batch");
    for n in [1_000usize, 20_000] {
        let texts = texts(n);
        let stmts = classify_all_sequential(s.classifier(), &texts, "SCOTT");
        let reqs: Vec<Request<'_>> = stmts.iter().map(|stmt| Request { user: "SCOTT", is_dba: false, stmt }).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("decide/parallel", n), &reqs, |b, r| {
            b.iter(|| black_box(decide_all(r, &s.registry, &s.grants, &s.config, at)))
        });
        group.bench_with_input(BenchmarkId::new("decide/sequential", n), &reqs, |b, r| {
            b.iter(|| black_box(decide_all_sequential(r, &s.registry, &s.grants, &s.config, at)))
        });
        group.bench_with_input(BenchmarkId::new("classify/parallel", n), &texts, |b, t| {
            b.iter(|| black_box(classify_all(s.classifier(), t, "SCOTT")))
        });
        group.bench_with_input(BenchmarkId::new("classify/sequential", n), &texts, |b, t| {
            b.iter(|| black_box(classify_all_sequential(s.classifier(), t, "SCOTT")))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
