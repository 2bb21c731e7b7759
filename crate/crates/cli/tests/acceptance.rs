//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use formtol::batch::{
    draw_pilot_batch, generate_virtual_batch, mother_shape, part_seed, run_ncr, BatchStats, Pairing, ROLE_PILOT,
    ROLE_VIRTUAL,
};
use formtol::contact::{contact_facet_2d, contact_facet_3d, Assembler, ContactFacet, MatingSetup};
use formtol::kinematics::{build_alpha, domain_contains, fr_domain, surface_center, Case, FrFace, Sdt};
use formtol::mesh::{Mesh, SurfaceField};
use formtol::modal::{beam_basis, beam_eigenpairs, beam_matrices, build_basis, ModalBasis, RIGID_RATIO};
use formtol::signature::{project, reconstruct, ModalSignature};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("eigen correctness", eigen_correctness),
        ("basis properties", basis_properties),
        ("projection round trip", projection_round_trip),
        ("contact oracle equivalence", contact_oracle),
        ("rigid reduction", rigid_reduction),
        ("domain equivalence", domain_equivalence),
        ("batch statistics", batch_statistics),
        ("ncr reproduction", ncr_reproduction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.2} s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.2} s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn grid21() -> Arc<Mesh> {
    Arc::new(Mesh::grid(40.0, 40.0, 21, 21).unwrap())
}

fn profile21() -> Arc<Mesh> {
    Arc::new(Mesh::profile(40.0, 21).unwrap())
}

fn eigen_correctness() -> Outcome {
    let start = Instant::now();
    let mesh = profile21();
    let mats = beam_matrices(&mesh).map_err(|e| e.to_string())?;
    let pairs = beam_eigenpairs(&mesh, &mats).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let max = pairs.omega2.iter().fold(0f64, |a, w| a.max(w.abs()));
    let rigid = pairs.omega2.iter().filter(|w| **w < 1e-8 * max).count();
    ensure!(rigid == 2, "{rigid} rigid modes");
    let mut worst = 0f64;
    for (k, w2) in pairs.omega2.iter().enumerate().skip(2) {
        let q = pairs.vectors.column(k);
        let kq = &mats.stiffness * q;
        let r = (&kq - &mats.mass * q * *w2).norm() / kq.norm();
        worst = worst.max(r);
    }
    // rigid shapes carry no strain energy
    let k_norm = mats.stiffness.norm();
    for k in 0..2 {
        let q = pairs.vectors.column(k);
        let e = (&mats.stiffness * q).norm() / (k_norm * q.norm());
        ensure!(e < 1e-10, "rigid mode {k} strains: {e:e}");
    }
    ensure!(worst < 1e-8, "flexible residual {worst:e}");
    ensure!(elapsed < Duration::from_secs(1), "solve took {elapsed:?}");
    ensure!(RIGID_RATIO == 1e-8, "rigid threshold {RIGID_RATIO}");
    Ok(format!("rigid=2 max residual={worst:.2e} solve={:.1} ms", elapsed.as_secs_f64() * 1e3))
}

/// Orthonormal basis of the column span (modified Gram-Schmidt, twice).
fn orthonormal(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-d, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / n);
    }
    q
}

fn inf_norm_error(basis: &ModalBasis) -> f64 {
    basis
        .modes()
        .column_iter()
        .map(|c| (c.amax() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn basis_properties() -> Outcome {
    let beam = beam_basis(&profile21(), 20).map_err(|e| e.to_string())?;
    let mesh = grid21();
    let plate = build_basis(&mesh, 20).map_err(|e| e.to_string())?;
    let err = inf_norm_error(&beam).max(inf_norm_error(&plate));
    ensure!(err <= 1e-12, "infinity norm off by {err:e}");
    ensure!(beam.n_rigid() == 2, "beam rigid count {}", beam.n_rigid());
    ensure!(plate.n_rigid() == 3, "plate rigid count {}", plate.n_rigid());
    let max = plate.omega2().iter().fold(0f64, |a, w| a.max(w.abs()));
    let rigid = plate.omega2().iter().filter(|w| **w < 1e-8 * max).count();
    ensure!(rigid == 3, "{rigid} plate eigenvalues below the rigid threshold");

    let [xc, zc] = mesh.center();
    let n = mesh.len();
    let reference = DMatrix::from_fn(n, 3, |i, j| {
        let p = mesh.node(i);
        [1.0, p[0] - xc, p[1] - zc][j]
    });
    let q_ref = orthonormal(&reference);
    let q_rigid = orthonormal(&plate.modes().columns(0, 3).into_owned());
    // sine of the largest principal angle
    let off = &q_rigid - &q_ref * (q_ref.transpose() * &q_rigid);
    let sine = off.singular_values().max();
    let angle = sine.min(1.0).asin();
    ensure!(angle < 1e-8, "rigid subspace angle {angle:e}");
    Ok(format!("inf-norm err={err:.1e} rigid angle={angle:.1e} rad"))
}

fn projection_round_trip() -> Outcome {
    let basis = build_basis(&grid21(), 20).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    for _ in 0..100 {
        let lambda: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
        let sig = ModalSignature::new(lambda.clone()).unwrap();
        let field = reconstruct(&sig, &basis).map_err(|e| e.to_string())?;
        // independent synthesis: plain sum of mode columns
        let direct = basis.modes() * DVector::from_vec(lambda.clone());
        ensure!((field.values() - &direct).amax() < 1e-12, "reconstruction differs from the mode sum");
        let back = project(&field, &basis, 20).map_err(|e| e.to_string())?;
        for (i, l) in lambda.iter().enumerate() {
            worst = worst.max((back.get(i) - l).abs());
        }
    }
    ensure!(worst < 1e-9, "max |dlambda| = {worst:e}");
    Ok(format!("max |dlambda|={worst:.2e}"))
}

const CLEAR: f64 = 1e-9;

/// Planes through node triples that hold the force point and clear every node.
fn brute_planes(mesh: &Mesh, h: &DVector<f64>, f: [f64; 2]) -> Vec<[f64; 3]> {
    let n = mesh.len();
    let nodes = mesh.nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (p, q, r) = (nodes[i], nodes[j], nodes[k]);
                let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
                if det.abs() < 1e-12 {
                    continue;
                }
                let wq = ((f[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (f[1] - p[1])) / det;
                let wr = ((q[0] - p[0]) * (f[1] - p[1]) - (f[0] - p[0]) * (q[1] - p[1])) / det;
                if wq < -1e-12 || wr < -1e-12 || 1.0 - wq - wr < -1e-12 {
                    continue;
                }
                let (dh1, dh2) = (h[j] - h[i], h[k] - h[i]);
                let b = (dh1 * (r[1] - p[1]) - dh2 * (q[1] - p[1])) / det;
                let c = ((q[0] - p[0]) * dh2 - (r[0] - p[0]) * dh1) / det;
                let a = h[i] - b * p[0] - c * p[1];
                if order.iter().all(|&m| a + b * nodes[m][0] + c * nodes[m][1] >= h[m] - CLEAR) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn brute_lines(mesh: &Mesh, h: &DVector<f64>, x_f: f64) -> Vec<[f64; 2]> {
    let x: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
    let n = x.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !(x[i] <= x_f && x_f <= x[j]) {
                continue;
            }
            let b = (h[j] - h[i]) / (x[j] - x[i]);
            let a = h[i] - b * x[i];
            if (0..n).all(|m| a + b * x[m] >= h[m] - CLEAR) {
                out.push([a, b]);
            }
        }
    }
    out
}

fn facet_checks(facet: &ContactFacet, field: &SurfaceField) -> Result<(), String> {
    for (i, p) in field.mesh().nodes().iter().enumerate() {
        let gap = facet.plane.eval(p[0], p[1]) - field.values()[i];
        ensure!(gap >= -1e-9, "node {i} penetrates by {gap:e}");
    }
    ensure!(facet.barycentric.iter().all(|w| *w >= -1e-12), "barycentric {:?}", facet.barycentric);
    Ok(())
}

fn random_field(rng: &mut ChaCha8Rng, basis: &ModalBasis, noise: bool) -> SurfaceField {
    let lambda: Vec<f64> = (1..=basis.n_modes())
        .map(|i| Normal::new(0.0, 0.02 / i as f64).unwrap().sample(rng))
        .collect();
    let mut v = reconstruct(&ModalSignature::new(lambda).unwrap(), basis).unwrap().into_values();
    if noise {
        for x in v.iter_mut() {
            *x += rng.random_range(-1e-3..1e-3);
        }
    }
    SurfaceField::new(basis.mesh().clone(), v).unwrap()
}

fn contact_oracle() -> Outcome {
    let grid = Arc::new(Mesh::grid(40.0, 40.0, 11, 11).unwrap());
    let plate = build_basis(&grid, 20).map_err(|e| e.to_string())?;
    let beam = beam_basis(&profile21(), 20).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut solver = Duration::ZERO;
    let total = Instant::now();
    for case in 0..200 {
        let field = random_field(&mut rng, &plate, case % 2 == 1);
        let f = [rng.random_range(1.0..39.0), rng.random_range(1.0..39.0)];
        let t = Instant::now();
        let facet = contact_facet_3d(&field, f).map_err(|e| e.to_string())?;
        solver += t.elapsed();
        facet_checks(&facet, &field).map_err(|e| format!("grid case {case}: {e}"))?;
        let planes = brute_planes(&grid, field.values(), f);
        let hit = planes.iter().any(|p| {
            (p[1] - facet.plane.b).abs() < 1e-9 && (p[2] - facet.plane.c).abs() < 1e-9 && (p[0] - facet.plane.a).abs() < 1e-7
        });
        ensure!(hit, "grid case {case}: plane {:?} not among {} exhaustive candidates", facet.plane, planes.len());
    }
    for case in 0..50 {
        let field = random_field(&mut rng, &beam, case % 2 == 1);
        let x_f = rng.random_range(0.5..39.5);
        let t = Instant::now();
        let facet = contact_facet_2d(&field, x_f).map_err(|e| e.to_string())?;
        solver += t.elapsed();
        facet_checks(&facet, &field).map_err(|e| format!("profile case {case}: {e}"))?;
        let lines = brute_lines(beam.mesh(), field.values(), x_f);
        let hit = lines
            .iter()
            .any(|l| (l[1] - facet.plane.b).abs() < 1e-9 && (l[0] - facet.plane.a).abs() < 1e-7);
        ensure!(hit, "profile case {case}: segment not among {} exhaustive candidates", lines.len());
    }
    let total = total.elapsed();
    ensure!(total < Duration::from_secs(30), "took {total:?}");
    Ok(format!(
        "250 fields matched; hull selection {:.1} ms, with exhaustive scans {:.1} s",
        solver.as_secs_f64() * 1e3,
        total.as_secs_f64()
    ))
}

fn rigid_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for mesh in [profile21(), grid21()] {
        let basis = build_basis(&mesh, 20).map_err(|e| e.to_string())?;
        let alpha = build_alpha(&basis, surface_center(&mesh)).map_err(|e| e.to_string())?;
        let force = [13.0, if basis.n_rigid() == 3 { 27.0 } else { 0.0 }];
        let asm = Assembler::new(&basis, &alpha, MatingSetup { force, m: 20 }).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let mut draw = || {
                let mut l = vec![0.0; 20];
                for v in l.iter_mut().take(basis.n_rigid()) {
                    *v = rng.random_range(-0.2..0.2);
                }
                ModalSignature::new(l).unwrap()
            };
            let (a, b) = (draw(), draw());
            let res = asm.assemble(&a, &b).map_err(|e| e.to_string())?;
            let (w, r) = (res.sdt_with_form, res.sdt_rigid_only);
            for k in 0..3 {
                worst = worst.max((w.translation[k] - r.translation[k]).abs());
                worst = worst.max((w.rotation[k] - r.rotation[k]).abs());
            }
        }
    }
    ensure!(worst <= 1e-10, "with-form and rigid-only torsors differ by {worst:e}");
    Ok(format!("100 rigid-only pairs, max torsor difference {worst:.1e}"))
}

/// Every summit of face B must keep its normal displacement within `t/2`.
fn summit_verdict(sdt: &Sdt, face: &FrFace, t: f64, case: Case) -> bool {
    let (hx, hz) = (0.5 * face.lx, 0.5 * face.lz);
    let corners: Vec<[f64; 2]> = match case {
        Case::Planar => vec![[-hx, 0.0], [hx, 0.0]],
        Case::Spatial => vec![[-hx, -hz], [-hx, hz], [hx, -hz], [hx, hz]],
    };
    corners.iter().all(|[dx, dz]| {
        // y component of T + R x d with d = (dx, 0, dz)
        let v = sdt.translation[1] + sdt.rotation[2] * dx - sdt.rotation[0] * dz;
        v.abs() <= 0.5 * t
    })
}

fn domain_equivalence() -> Outcome {
    let t = 0.1;
    let face = FrFace { center: [20.0, 40.0, 20.0], lx: 20.0, lz: 40.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut inside = 0;
    for case in [Case::Planar, Case::Spatial] {
        let domain = fr_domain(t, &face, case).map_err(|e| e.to_string())?;
        for i in 0..1000 {
            let ty = rng.random_range(-0.08..0.08);
            let rz = rng.random_range(-0.008..0.008);
            let rx = if case == Case::Spatial { rng.random_range(-0.004..0.004) } else { 0.0 };
            let sdt = Sdt::new(face.center, [0.0, ty, 0.0], [rx, 0.0, rz]);
            let got = domain_contains(&domain, &sdt).map_err(|e| e.to_string())?.inside;
            ensure!(got == summit_verdict(&sdt, &face, t, case), "{case:?} sample {i}: {sdt:?}");
            inside += usize::from(got);
        }
        let probe = |ty: f64, rx: f64, rz: f64| {
            domain_contains(&domain, &Sdt::new(face.center, [0.0, ty, 0.0], [rx, 0.0, rz])).unwrap().inside
        };
        ensure!(probe(0.05, 0.0, 0.0) && probe(-0.05, 0.0, 0.0), "{case:?}: |Ty| = 0.05 rejected");
        ensure!(!probe(0.05 + 1e-9, 0.0, 0.0), "{case:?}: Ty beyond 0.05 accepted");
        ensure!(probe(0.0, 0.0, 0.005) && probe(0.0, 0.0, -0.005), "{case:?}: |Rz| = 0.005 rejected");
        ensure!(!probe(0.0, 0.0, 0.005 + 1e-9), "{case:?}: Rz beyond 0.005 accepted");
    }
    Ok(format!("2000 torsors agree ({inside} inside); |Ty| <= 0.05 mm, |Rz| <= 0.005 rad"))
}

fn moments(samples: &[ModalSignature]) -> (DVector<f64>, DMatrix<f64>) {
    let m = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(m);
    for s in samples {
        mean += s.lambda();
    }
    mean /= n;
    let mut cov = DMatrix::zeros(m, m);
    for s in samples {
        let e = s.lambda() - &mean;
        cov += &e * e.transpose();
    }
    (mean, cov / (n - 1.0))
}

fn batch_statistics() -> Outcome {
    let n = 100_000;
    let m = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.01..0.01));
    let spd = &a * a.transpose() + DMatrix::identity(m, m) * 1e-6;
    let mu = DVector::from_fn(m, |i, _| 0.2 / (i + 1) as f64);
    let constructed = BatchStats::new(mu, spd, 50).map_err(|e| e.to_string())?;
    let mother = mother_shape(0.2, m).map_err(|e| e.to_string())?;
    let (_, pilot) = draw_pilot_batch(&mother, 0.01, 10, 17).map_err(|e| e.to_string())?;

    let mut detail = Vec::new();
    for (name, stats) in [("full-rank", &constructed), ("pilot n=10", &pilot)] {
        let batch = generate_virtual_batch(stats, n, 71).map_err(|e| e.to_string())?;
        ensure!(batch.len() == n, "{name}: {} parts", batch.len());
        let (mean, cov) = moments(&batch);
        for i in 0..m {
            let sigma = stats.cov()[(i, i)].max(0.0).sqrt();
            let bound = 4.0 * sigma / (n as f64).sqrt();
            let d = (mean[i] - stats.mu()[i]).abs();
            ensure!(d <= bound + 1e-15, "{name}: mean {i} off by {d:e} > {bound:e}");
        }
        let rel = (&cov - stats.cov()).norm() / stats.cov().norm();
        ensure!(rel < 0.05, "{name}: covariance off by {:.2}%", rel * 100.0);
        detail.push(format!("{name}: cov err {:.2}%", rel * 100.0));
    }
    Ok(format!("N=1e5; {}", detail.join(", ")))
}

fn sample_std(v: &[f64]) -> f64 {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
}

fn within_factor_two(std: f64, binomial: f64) -> bool {
    if binomial == 0.0 {
        return std == 0.0;
    }
    let r = std / binomial;
    (0.5..=2.0).contains(&r)
}

struct Setup {
    model: (ModalBasis, formtol::kinematics::AlphaMatrix),
    force: [f64; 2],
    domain: formtol::kinematics::Domain,
}

fn reference_setup(case: Case) -> Result<Setup, String> {
    let mesh = match case {
        Case::Planar => profile21(),
        Case::Spatial => grid21(),
    };
    let basis = build_basis(&mesh, 20).map_err(|e| e.to_string())?;
    let center = surface_center(&mesh);
    let alpha = build_alpha(&basis, center).map_err(|e| e.to_string())?;
    let face = FrFace { center: [center[0], center[1] + 40.0, center[2]], lx: 20.0, lz: 40.0 };
    let domain = fr_domain(0.1, &face, case).map_err(|e| e.to_string())?;
    Ok(Setup { model: (basis, alpha), force: [center[0], center[2]], domain })
}

/// Rates of `runs` virtual batches of 100 assemblies drawn from the pilot
/// batches of `seed`, following the seeding of `formtol simulate`.
fn production(setup: &Setup, seed: u64, runs: u64) -> Result<(Vec<f64>, Vec<f64>), String> {
    let (basis, alpha) = &setup.model;
    let asm = Assembler::new(basis, alpha, MatingSetup { force: setup.force, m: 20 }).map_err(|e| e.to_string())?;
    let mother = mother_shape(0.2, 20).map_err(|e| e.to_string())?;
    let (_, s1) = draw_pilot_batch(&mother, 0.01, 10, part_seed(seed, 1, ROLE_PILOT)).map_err(|e| e.to_string())?;
    let (_, s2) = draw_pilot_batch(&mother, 0.01, 10, part_seed(seed, 2, ROLE_PILOT)).map_err(|e| e.to_string())?;
    let (mut with_form, mut rigid_only) = (Vec::new(), Vec::new());
    for r in 0..runs {
        let v1 = generate_virtual_batch(&s1, 100, part_seed(seed, 1, ROLE_VIRTUAL + r)).map_err(|e| e.to_string())?;
        let v2 = generate_virtual_batch(&s2, 100, part_seed(seed, 2, ROLE_VIRTUAL + r)).map_err(|e| e.to_string())?;
        let rep = run_ncr(&v1, &v2, &asm, &setup.domain, Pairing::Index, seed).map_err(|e| e.to_string())?;
        ensure!(rep.len() == 100, "{} assemblies", rep.len());
        // the rates must count verdicts, not something else
        let bad = rep.records.iter().filter(|a| !a.conform_with_form()).count();
        ensure!((rep.ncr_with_form - bad as f64 / 100.0).abs() < 1e-15, "rate does not match the records");
        with_form.push(rep.ncr_with_form);
        rigid_only.push(rep.ncr_rigid_only);
    }
    Ok((with_form, rigid_only))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ncr_reproduction() -> Outcome {
    let reps = 40;
    let bin = |p: f64| (p * (1.0 - p) / 100.0).sqrt();
    let mut detail = Vec::new();
    for (case, tag, published) in [(Case::Planar, "2D", 9.0), (Case::Spatial, "3D", 14.0)] {
        let setup = reference_setup(case)?;

        // whole productions: new pilot batches and a new virtual batch each time
        let (mut w, mut r) = (Vec::new(), Vec::new());
        for seed in 0..reps {
            let (a, b) = production(&setup, 1000 + seed, 1)?;
            w.push(a[0]);
            r.push(b[0]);
        }
        let per_run = w.iter().zip(&r).filter(|(a, b)| a >= b).count();
        detail.push(format!(
            "{tag}: mean ncr with-form {:.2}% vs rigid-only {:.2}% over {reps} productions \
             (with-form >= rigid-only in {per_run}), published {published:.0}%",
            mean(&w) * 100.0,
            mean(&r) * 100.0
        ));
        ensure!(mean(&w) >= mean(&r), "{}", detail.join("; "));

        // fixed pilot batches: rates are binomial around one p
        let start = Instant::now();
        let (w, r) = production(&setup, 2024, reps)?;
        let elapsed = start.elapsed() / reps as u32;
        let (pw, pr) = (mean(&w), mean(&r));
        detail.push(format!(
            "{tag} dispersion over {reps} virtual batches: with-form std {:.2}% (binomial {:.2}%), \
             rigid-only std {:.2}% (binomial {:.2}%)",
            sample_std(&w) * 100.0,
            bin(pw) * 100.0,
            sample_std(&r) * 100.0,
            bin(pr) * 100.0
        ));
        ensure!(within_factor_two(sample_std(&w), bin(pw)), "{}", detail.join("; "));
        ensure!(within_factor_two(sample_std(&r), bin(pr)), "{}", detail.join("; "));
        if case == Case::Spatial {
            ensure!(elapsed < Duration::from_secs(60), "3D run took {elapsed:?}");
            detail.push(format!("3D 100-assembly run {:.3} s", elapsed.as_secs_f64()));
        }
    }
    Ok(detail.join("; "))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("formtol-acceptance-{}", std::process::id()));
    let cfg = dir.join("run.toml");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    fs::write(&cfg, "[batch]\nseed = 31\nruns = 3\n").map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (out, workers) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "3")] {
        let status = Command::new(env!("CARGO_BIN_EXE_formtol"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--workers", workers, "--out"])
            .arg(dir.join(out))
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "simulate failed: {}", String::from_utf8_lossy(&status.stderr));
        outputs.push(dir.join(out));
    }
    let mut files: Vec<String> = fs::read_dir(&outputs[0])
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    ensure!(files.len() >= 5, "only {files:?} written");
    for f in &files {
        let first = fs::read(outputs[0].join(f)).map_err(|e| e.to_string())?;
        for o in &outputs[1..] {
            let other = fs::read(o.join(f)).map_err(|e| e.to_string())?;
            ensure!(first == other, "{f} differs in {}", o.display());
        }
    }
    let _ = fs::remove_dir_all(&dir);
    Ok(format!("{} CSV files identical over 4 runs (workers 1, 1, 4, 3)", files.len()))
}
