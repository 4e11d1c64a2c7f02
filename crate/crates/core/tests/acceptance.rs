//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corner_radon::forward::{
    face_normal, synthesize_with, BoundaryGrid, BoundaryNode, BoundarySignal, GridSpec, SynthesisOptions,
};
use corner_radon::geometry::{
    admissible_set, truncation_radius, unit_from_angle, unit_from_spherical, Geometry, GroupElement,
};
use corner_radon::harness::{run_experiment, synthesize_for, ExperimentConfig, ExperimentOutcome};
use corner_radon::phantom::{Phantom, RadialBump};
use corner_radon::radon_core::{
    forward_radon, nonpositive_offsets, odd_radon_exact, oracle_sinogram, reconstruct_projection, symmetry_extend,
    CellMask, Directions, Mollifier,
};
use corner_radon::symmetrize::{inner_product, odd_extend, Field};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, name: &'static str, pass: bool, detail: String) -> Verdict {
    let v = Verdict { id, name, pass, detail };
    println!(
        "criterion {} ({}): {} - {}",
        v.id,
        v.name,
        if v.pass { "PASS" } else { "FAIL" },
        v.detail
    );
    v
}

fn run_preset(name: &str, dir: &Path) -> ExperimentOutcome {
    let mut cfg = ExperimentConfig::preset(name).unwrap();
    cfg.out_dir = dir.join(name);
    run_experiment(&cfg).unwrap()
}

fn seconds(o: &ExperimentOutcome) -> f64 {
    o.report.timings.iter().map(|t| t.1).sum()
}

fn criterion_1(run: &ExperimentOutcome) -> Verdict {
    let r = &run.report;
    let adm = r.region("admissible").unwrap().rel_linf;
    let outside = r.region("outside_bands").unwrap().rel_linf;
    verdict(
        1,
        "2D projection accuracy",
        adm <= 0.05 && outside <= 0.02,
        format!(
            "admissible L∞ {:.3}% (<= 5%), outside ±7° bands {:.3}% (<= 2%), unrestricted {:.2}%; {:.0}s",
            100.0 * adm,
            100.0 * outside,
            100.0 * r.rel_linf(),
            seconds(run)
        ),
    )
}

fn criterion_2(run: &ExperimentOutcome) -> Verdict {
    let e = run.report.rel_linf();
    verdict(
        2,
        "3D projection accuracy",
        e <= 0.01,
        format!("phi = 53° slice, all theta: L∞ {:.3}% (<= 1%); {:.0}s", 100.0 * e, seconds(run)),
    )
}

fn criterion_3() -> Verdict {
    let g0 = admissible_set(300.0, 1.0, &Geometry::sector(3).unwrap())
        .unwrap()
        .gamma0()
        .unwrap()
        .to_degrees();
    let exact = (1.0f64 - 2.0 / 300.0).acos().to_degrees();
    verdict(
        3,
        "admissibility bound",
        (g0 - 6.62).abs() <= 0.01 && (g0 - exact).abs() < 1e-12,
        format!("gamma0 = {g0:.4}°"),
    )
}

/// Relative difference of truncated and full reconstructions over `t ∈ [-1, 0]`.
fn truncation_gap(data: &BoundarySignal, w: &[f64], r_cut: f64) -> f64 {
    let ts: Vec<f64> = (0..=20).map(|m| -0.05 * m as f64).collect();
    let moll = Mollifier::none();
    let full: Vec<f64> = ts
        .iter()
        .map(|t| reconstruct_projection(data, w, *t, &moll, f64::INFINITY).unwrap())
        .collect();
    let cut: Vec<f64> = ts
        .iter()
        .map(|t| reconstruct_projection(data, w, *t, &moll, r_cut).unwrap())
        .collect();
    let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = full.iter().zip(&cut).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    gap / scale
}

fn criterion_4(data_2d: &BoundarySignal) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let geom2 = Geometry::sector(3).unwrap();
    let geom3 = Geometry::octant();
    let cfg3 = "geometry = octant\nr_max = 60\nfine_h = 0.02\ngrowth = 1.02\nangles = 96\n";
    let cfg3 = ExperimentConfig::parse(cfg3, "criterion-4", Path::new(".")).unwrap();
    let data_3d = synthesize_for(&cfg3, &Phantom::default_3d()).unwrap();
    let mut worst = 0.0f64;
    let mut control = f64::INFINITY;
    let mut count = 0;
    // Interior directions whose truncated radius fits inside the sampled boundary.
    while count < 10 {
        let (w, geom, data): (Vec<f64>, _, _) = if count % 2 == 0 {
            (unit_from_angle(rng.random_range(0.0..PI / 3.0)).to_vec(), &geom2, data_2d)
        } else {
            let v = unit_from_spherical(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.0..FRAC_PI_2));
            (v.to_vec(), &geom3, &data_3d)
        };
        let Ok(r) = truncation_radius(&w, 0.0, 1.0, geom) else { continue };
        if 1.05 * r > data.grid().r_max() {
            continue;
        }
        worst = worst.max(truncation_gap(data, &w, 1.05 * r));
        control = control.min(truncation_gap(data, &w, 0.5 * r));
        count += 1;
    }
    verdict(
        4,
        "truncation corollary",
        worst <= 0.005,
        format!(
            "10 directions (5 in 2D, 5 in 3D), worst gap at 1.05 R {:.2e} (<= 0.5%); smallest gap at 0.5 R {:.2e}",
            worst, control
        ),
    )
}

/// Largest `|R f|` over a coarse sweep of directions and offsets.
fn projection_peak(ph: &Phantom) -> f64 {
    let mut peak = 0.0f64;
    for i in 0..36 {
        for j in 0..18 {
            let w = match ph.dim() {
                2 => {
                    let u = unit_from_angle(i as f64 * PI / 18.0);
                    [u[0], u[1], 0.0]
                }
                _ => unit_from_spherical(i as f64 * PI / 18.0, (j as f64 + 0.5) * PI / 18.0),
            };
            for m in -100..=100 {
                peak = peak.max(ph.radon(m as f64 * 0.01, &w).abs());
            }
        }
    }
    peak
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact_gap = 0.0f64;
    let mut quad_gap = 0.0f64;
    let mut zero_gap = 0.0f64;

    // Odd extension: invariant under rotations, odd under reflections.
    for n in 2..=6u32 {
        let geom = Geometry::sector(n).unwrap();
        let f = Phantom::default_2d();
        let fo = odd_extend(&f, &geom).unwrap();
        for _ in 0..20 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let v = fo.eval(&x);
            for g in geom.group() {
                let y = geom.apply_symmetry(g, &x).unwrap();
                exact_gap = exact_gap.max((fo.eval(&y) - g.sign() * v).abs());
            }
        }
    }
    let geom3 = Geometry::octant();
    let fo3 = odd_extend(Phantom::default_3d(), &geom3).unwrap();
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = fo3.eval(&x);
        for flips in 0..8u8 {
            let g = GroupElement::Octant { flips };
            exact_gap = exact_gap.max((fo3.eval(&geom3.apply_symmetry(g, &x).unwrap()) - g.sign() * v).abs());
        }
    }

    // Projections of f_O: redundancy, rotation/reflection rules, zero on mirrors.
    let geom = Geometry::sector(3).unwrap();
    let ph = Phantom::default_2d();
    let fo = odd_extend(&ph, &geom).unwrap();
    let scale2 = projection_peak(&ph);
    for _ in 0..6 {
        let w = unit_from_angle(rng.random_range(0.0..2.0 * PI));
        let t = rng.random_range(-0.9..0.9);
        let w3 = [w[0], w[1], 0.0];
        let v = odd_radon_exact(&ph, &geom, &w3, t);
        exact_gap = exact_gap.max((odd_radon_exact(&ph, &geom, &[-w[0], -w[1], 0.0], -t) - v).abs());
        let q = forward_radon(&fo, &w, t).unwrap();
        quad_gap = quad_gap.max((q - v).abs() / scale2);
        quad_gap = quad_gap.max((forward_radon(&fo, &[-w[0], -w[1]], -t).unwrap() - q).abs() / scale2);
        for g in geom.group() {
            let gw = geom.apply_symmetry(g, &w).unwrap();
            let e = odd_radon_exact(&ph, &geom, &[gw[0], gw[1], 0.0], t);
            exact_gap = exact_gap.max((e - g.sign() * v).abs());
            quad_gap = quad_gap.max((forward_radon(&fo, &gw, t).unwrap() - g.sign() * q).abs() / scale2);
        }
    }
    let ph3 = Phantom::default_3d();
    let scale3 = projection_peak(&ph3);
    for _ in 0..3 {
        let w = unit_from_spherical(rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..PI));
        let t = rng.random_range(-0.9..0.9);
        let v = odd_radon_exact(&ph3, &geom3, &w, t);
        let q = forward_radon(&fo3, &w, t).unwrap();
        quad_gap = quad_gap.max((q - v).abs() / scale3);
        for flips in [3u8, 7] {
            let g = GroupElement::Octant { flips };
            let gw = geom3.apply_symmetry(g, &w).unwrap();
            let e = odd_radon_exact(&ph3, &geom3, &[gw[0], gw[1], gw[2]], t);
            exact_gap = exact_gap.max((e - g.sign() * v).abs());
            quad_gap = quad_gap.max((forward_radon(&fo3, &gw, t).unwrap() - g.sign() * q).abs() / scale3);
        }
    }
    for (w, t) in [([1.0, 0.0], 0.3), ([0.5, 3f64.sqrt() / 2.0], -0.4)] {
        zero_gap = zero_gap.max(forward_radon(&fo, &w, t).unwrap().abs() / scale2);
    }

    // Bookkeeping: extension of exact fundamental data reproduces the exact values.
    for geom in [Geometry::sector(3).unwrap(), Geometry::sector(4).unwrap(), geom3] {
        let (ph, dirs) = match geom {
            Geometry::Sector { .. } => (Phantom::default_2d(), Directions::sector_fan(&geom, 12).unwrap()),
            Geometry::Octant => (
                Phantom::default_3d(),
                Directions::octant_patch(6, (0..=6).map(|k| k as f64 * FRAC_PI_2 / 6.0).collect()).unwrap(),
            ),
        };
        let fund = oracle_sinogram(&ph, &geom, dirs, nonpositive_offsets(1.0, 0.1).unwrap()).unwrap();
        let full = symmetry_extend(&fund, &geom).unwrap();
        for d in 0..full.n_directions() {
            let w = full.directions().vector(d);
            for (m, t) in full.offsets().iter().enumerate() {
                let v = full.get(d, m);
                if full.mask_at(d, m) == CellMask::Zero {
                    zero_gap = zero_gap.max(v.abs());
                }
                exact_gap = exact_gap.max((v - odd_radon_exact(&ph, &geom, &w, *t)).abs());
            }
        }
        if symmetry_extend(&full, &geom).unwrap() != full {
            exact_gap = f64::INFINITY;
        }
    }
    verdict(
        5,
        "symmetry suite",
        exact_gap <= 1e-12 && quad_gap <= 1e-6 && zero_gap <= 1e-6,
        format!("bookkeeping {exact_gap:.1e} (<= 1e-12), quadrature oracle {quad_gap:.1e} (<= 1e-6), mirrors {zero_gap:.1e}"),
    )
}

fn random_field(rng: &mut ChaCha8Rng, dim: usize) -> Phantom {
    let bumps = (0..3)
        .map(|_| {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.4..0.4)).collect();
            RadialBump::new(&c, rng.random_range(0.1..0.3), rng.random_range(-1.0..1.0)).unwrap()
        })
        .collect();
    Phantom::new(dim, bumps).unwrap()
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for (geom, n) in [(Geometry::sector(3).unwrap(), 1500), (Geometry::octant(), 120)] {
        let f = random_field(&mut rng, geom.dim());
        let g = random_field(&mut rng, geom.dim());
        let lhs = inner_product(&odd_extend(&f, &geom).unwrap(), &g, 0.75, n);
        let rhs = inner_product(&f, &odd_extend(&g, &geom).unwrap(), 0.75, n);
        worst = worst.max(((lhs - rhs) / rhs.abs()).abs());
    }
    verdict(
        6,
        "adjoint pairing",
        worst <= 1e-6,
        format!("<Of, g> vs <f, Og>, 2D and 3D: {worst:.1e} (<= 1e-6)"),
    )
}

fn criterion_7(run: &ExperimentOutcome) -> Verdict {
    let e = run.report.rel_linf();
    verdict(
        7,
        "noise stability",
        e <= 0.5,
        format!("100% noise, |y| <= 300: L∞ {:.1}% (<= 50%); {:.0}s", 100.0 * e, seconds(run)),
    )
}

fn criterion_8(run_2d: &ExperimentOutcome, dir: &Path) -> Verdict {
    let e2 = run_2d.report.region("image").unwrap().rel_l2;
    let text = "\
name = round-trip-3d
geometry = octant
r_max = 20000
fine_h = 0.02
growth = 1.02
angles = 256
dt = 0.01
sino_steps = 24
sino_phi_steps = 24
image_cells = 96
";
    let mut cfg = ExperimentConfig::parse(text, "criterion-8", Path::new(".")).unwrap();
    cfg.out_dir = dir.join("round-trip-3d");
    let run_3d = run_experiment(&cfg).unwrap();
    let e3 = run_3d.report.region("image").unwrap().rel_l2;
    verdict(
        8,
        "end-to-end round trip",
        e2 <= 0.05 && e3 <= 0.08,
        format!(
            "2D 256²: L2 {:.2}% (<= 5%), 3D 96³: L2 {:.2}% (<= 8%); {:.0}s",
            100.0 * e2,
            100.0 * e3,
            seconds(run_2d) + seconds(&run_3d)
        ),
    )
}

/// `p(t, y)` for one bump in 3D: `∂_t (t M)` with `M` the spherical mean.
fn exact_pressure_3d(b: &RadialBump, y: &[f64; 3], t: f64) -> f64 {
    let h = |rho: f64| {
        let s = rho / b.radius;
        if s >= 1.0 {
            0.0
        } else {
            b.amplitude * (1.0 - s * s).powi(4)
        }
    };
    let d = ((y[0] - b.center[0]).powi(2) + (y[1] - b.center[1]).powi(2) + (y[2] - b.center[2]).powi(2)).sqrt();
    ((d + t) * h(d + t) + (d - t) * h((t - d).abs())) / (2.0 * d)
}

fn probe_grid(geom: &Geometry, points: &[[f64; 3]], faces: &[usize]) -> Arc<BoundaryGrid> {
    let nodes = points
        .iter()
        .zip(faces)
        .map(|(p, f)| BoundaryNode {
            position: *p,
            normal: face_normal(geom, *f).unwrap(),
            weight: 1.0,
            face: *f,
        })
        .collect();
    Arc::new(BoundaryGrid::from_nodes(geom, nodes).unwrap())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ")
}

fn order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

fn criterion_9() -> Verdict {
    let times = [0.36, 0.48, 0.6, 0.72, 0.84];
    let dts = [0.02, 0.01, 0.005];

    // Forward synthesis, 3D: against the closed form.
    let octant = Geometry::octant();
    let ph3 = Phantom::default_3d();
    let pts3 = [[0.0, 0.3, 0.5], [0.4, 0.0, 0.2], [0.5, 0.5, 0.0], [0.0, 0.7, 0.1], [0.3, 0.0, 0.8]];
    let grid3 = probe_grid(&octant, &pts3, &[0, 1, 2, 0, 1]);
    let fwd3: Vec<f64> = dts
        .iter()
        .map(|dt| {
            let sig = synthesize_with(&ph3, &grid3, &SynthesisOptions::new(*dt)).unwrap();
            (0..5)
                .map(|i| {
                    let k = (times[i] / dt).round() as usize;
                    let exact: f64 = ph3.bumps().iter().map(|b| exact_pressure_3d(b, &pts3[i], times[i])).sum();
                    (sig.value(i, k).unwrap() - exact).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();

    // Forward synthesis, 2D: successive differences under dt and Abel refinement.
    let sector = Geometry::sector(3).unwrap();
    let ph2 = Phantom::default_2d();
    let pts2 = [[0.3, 0.0, 0.0], [0.6, 0.0, 0.0], [0.25, 0.25 * 3f64.sqrt(), 0.0], [0.9, 0.0, 0.0], [0.4, 0.4 * 3f64.sqrt(), 0.0]];
    let grid2 = probe_grid(&sector, &pts2, &[0, 0, 1, 0, 1]);
    let levels2: Vec<Vec<f64>> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .zip([24, 48, 96, 192])
        .map(|(dt, abel)| {
            let opts = SynthesisOptions {
                abel_points: abel,
                ..SynthesisOptions::new(*dt)
            };
            let sig = synthesize_with(&ph2, &grid2, &opts).unwrap();
            (0..5).map(|i| sig.value(i, (times[i] / dt).round() as usize).unwrap()).collect()
        })
        .collect();
    let fwd2: Vec<f64> = levels2
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();

    // Reconstruction, 2D: dt, grid spacing and grading refined together.
    let probes: [(f64, f64); 5] = [(27.0, -0.3), (30.0, -0.5), (33.0, -0.62), (28.5, -0.75), (31.5, -0.4)];
    let recon: Vec<f64> = [(0.02, 1.04), (0.01, 1.02), (0.005, 1.01)]
        .iter()
        .map(|(h, growth)| {
            let grid = Arc::new(BoundaryGrid::build(&sector, &GridSpec::new(30.0, *h, 1.0, *growth)).unwrap());
            let opts = SynthesisOptions {
                horizon_radius: Some(1.0),
                ..SynthesisOptions::new(*h)
            };
            let sig = synthesize_with(&ph2, &grid, &opts).unwrap();
            probes
                .iter()
                .map(|(deg, t)| {
                    let w = unit_from_angle(deg.to_radians());
                    let got = reconstruct_projection(&sig, &w, *t, &Mollifier::none(), f64::INFINITY).unwrap();
                    (got - odd_radon_exact(&ph2, &sector, &[w[0], w[1], 0.0], *t)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();

    let (o3, o2, orr) = (order(&fwd3), order(&fwd2), order(&recon));
    verdict(
        9,
        "convergence orders",
        o3 >= 1.8 && o2 >= 1.8 && orr >= 1.8,
        format!(
            "forward 3D {o3:.2} (errors {}), forward 2D {o2:.2} (differences {}), reconstruction 2D {orr:.2} (errors {}); all >= 1.8",
            sci(&fwd3),
            sci(&fwd2),
            sci(&recon)
        ),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut verdicts = Vec::new();

    let run_2d = run_preset("paper-2d-n3", dir.path());
    verdicts.push(criterion_1(&run_2d));
    let run_3d = run_preset("paper-3d-octant", dir.path());
    verdicts.push(criterion_2(&run_3d));
    drop(run_3d);
    verdicts.push(criterion_3());
    let cfg2 = ExperimentConfig::preset("paper-2d-n3").unwrap();
    let data_2d = synthesize_for(&cfg2, &cfg2.load_phantom().unwrap()).unwrap();
    verdicts.push(criterion_4(&data_2d));
    drop(data_2d);
    verdicts.push(criterion_5());
    verdicts.push(criterion_6());
    let noisy = run_preset("paper-2d-n3-noisy", dir.path());
    verdicts.push(criterion_7(&noisy));
    drop(noisy);
    verdicts.push(criterion_8(&run_2d, dir.path()));
    verdicts.push(criterion_9());

    let failed: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{} ({}): {}", v.id, v.name, v.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
