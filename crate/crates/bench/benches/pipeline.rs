use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smartdoor_core::synth::face_frame;
use smartdoor_core::vision::{detect_and_crop, detect_face, extract_descriptor};
use smartdoor_core::{PersonGroup, Role};

fn detection(c: &mut Criterion) {
    let frame = face_frame(1, 0);
    c.bench_function("detect_face/80x64", |b| {
        b.iter(|| detect_face(black_box(&frame), 0.01).unwrap())
    });
}

fn descriptor(c: &mut Criterion) {
    let crop = detect_and_crop(&face_frame(1, 0), 0.01).unwrap().crop;
    c.bench_function("extract_descriptor", |b| {
        b.iter(|| extract_descriptor(black_box(&crop)))
    });
}

fn group_of(persons: u64) -> PersonGroup {
    let mut g = PersonGroup::new("bench");
    for i in 0..persons {
        let pid = g
            .add_person(&format!("p{i}"), Role::Resident, None, 0)
            .unwrap();
        for v in 0..3 {
            g.add_face(&pid, &face_frame(i, v), 0.01).unwrap();
        }
    }
    g.train().unwrap();
    g
}

fn identify(c: &mut Criterion) {
    let query = extract_descriptor(&detect_and_crop(&face_frame(3, 9), 0.01).unwrap().crop);
    let mut bench = c.benchmark_group("identify");
    for persons in [10u64, 100, 1000] {
        let g = group_of(persons);
        bench.bench_with_input(BenchmarkId::from_parameter(persons), &g, |b, g| {
            b.iter(|| g.identify(black_box(&query), 0.5, 5).unwrap())
        });
    }
    bench.finish();
}

criterion_group!(benches, detection, descriptor, identify);
criterion_main!(benches);
