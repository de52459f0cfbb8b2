mod common;

use common::*;
use ne_core::affinity::{binary_affinities, perplexity_calibrate, AffinityGraph, AffinityKind};
use ne_core::forces::{
    assemble_gradient, assemble_gradient_with, attraction, fa2_masses, tsne_repulsion_exact,
    umap_repulsion_exact, AttractionKernel, ForceSpec, GraphInputs, RepulsionMode,
};
use ne_core::knn::{build_knn, KnnAlgorithm, NeighborGraph};
use ne_core::quadtree::{QuadTree, RepulsionKernel};
use ne_core::Embedding;

fn gaussian_instance(n: usize, seed: u64) -> AffinityGraph {
    let x = random_data(n, 5, seed);
    let g = build_knn(&x, n - 1, KnnAlgorithm::Exact).unwrap();
    perplexity_calibrate(&g, 3.0).unwrap()
}

fn binary_instance(n: usize, seed: u64) -> (NeighborGraph, AffinityGraph) {
    let x = random_data(n, 5, seed);
    let g = build_knn(&x, 3, KnnAlgorithm::Exact)
        .unwrap()
        .symmetrize_union();
    let a = binary_affinities(&g).unwrap();
    (g, a)
}

#[test]
fn tsne_gradient_matches_loss_derivative() {
    for seed in 0..3 {
        for a in [gaussian_instance(10, seed), binary_instance(10, seed).1] {
            let v = a.to_dense();
            let y = random_embedding(10, 2.0, 100 + seed);
            for rho in [1.0, 4.0, 30.0] {
                let field =
                    assemble_gradient(&ForceSpec::tsne(rho), GraphInputs::affinities(&a), &y)
                        .unwrap();
                let scaled: Vec<[f64; 2]> = field
                    .forces
                    .iter()
                    .map(|f| [f[0] * 0.4, f[1] * 0.4])
                    .collect();
                let fd = fd_gradient(&y, 1e-5, |y| tsne_loss(&v, y, rho));
                let err = relative_error(&scaled, &fd);
                assert!(
                    err <= 1e-4,
                    "seed {seed} rho {rho} kind {}: relative error {err:e}",
                    a.kind()
                );
            }
        }
    }
}

#[test]
fn attraction_matches_log_kernel_derivative() {
    let (_, a) = binary_instance(5, 7);
    let weighted = AffinityGraph::from_pairs(
        5,
        AffinityKind::BinaryKnn,
        a.pairs()
            .iter()
            .enumerate()
            .map(|(e, &(i, j, _))| (i, j, 0.5 + e as f64)),
    )
    .unwrap();
    let v = weighted.to_dense();
    let y = random_embedding(5, 1.5, 8);
    let field = attraction(&weighted, &y, AttractionKernel::Cauchy).unwrap();
    // Unordered-pair sum, so the gradient is twice the field.
    let fd = fd_gradient(&y, 1e-6, |y| {
        let c = y.coords();
        let mut s = 0.0;
        for i in 0..5 {
            for j in i + 1..5 {
                let d2 = (c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2);
                s += v[i][j] * (1.0 + d2).ln();
            }
        }
        0.5 * s
    });
    assert!(relative_error(&field.forces, &fd) <= 1e-5);
}

#[test]
fn tsne_repulsion_matches_log_z_derivative() {
    let y = random_embedding(6, 2.0, 11);
    let rep = tsne_repulsion_exact(&y);
    let fd = fd_gradient(&y, 1e-6, |y| {
        let c = y.coords();
        let mut z = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    z += 1.0 / (1.0 + (c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2));
                }
            }
        }
        -6.0 / 4.0 * f64::ln(z)
    });
    assert!(relative_error(&rep.forces, &fd) <= 1e-5);
}

#[test]
fn umap_repulsion_matches_smoothed_log_loss() {
    let y = random_embedding(6, 2.0, 12);
    for (gamma, eps) in [(1.0, 0.001), (0.3, 0.5), (2.0, 1.0 - 1e-3)] {
        let rep = umap_repulsion_exact(&y, gamma, eps).unwrap();
        let zero = vec![vec![0.0; 6]; 6];
        let fd = fd_gradient(&y, 1e-6, |y| -0.5 * umap_loss(&zero, y, gamma, eps, 1.0));
        let err = relative_error(&rep.forces, &fd);
        assert!(err <= 1e-4, "gamma {gamma} eps {eps}: {err:e}");
    }
}

#[test]
fn umap_gradient_matches_loss_derivative() {
    let (_, a) = binary_instance(10, 3);
    let v = a.to_dense();
    let y = random_embedding(10, 2.0, 4);
    for (gamma, eps, rho) in [(1.0, 0.001, 1.0), (0.01, 0.001, 1.0), (1.0, 0.1, 4.0)] {
        let spec = ForceSpec {
            rho,
            ..ForceSpec::umap(gamma, eps)
        };
        let field = assemble_gradient(&spec, GraphInputs::affinities(&a), &y).unwrap();
        let doubled: Vec<[f64; 2]> = field
            .forces
            .iter()
            .map(|f| [2.0 * f[0], 2.0 * f[1]])
            .collect();
        let fd = fd_gradient(&y, 1e-6, |y| umap_loss(&v, y, gamma, eps, rho));
        let err = relative_error(&doubled, &fd);
        assert!(err <= 1e-4, "gamma {gamma} eps {eps} rho {rho}: {err:e}");
    }
}

#[test]
fn fa2_field_matches_energy_derivative() {
    let (g, _) = binary_instance(10, 5);
    let edges: Vec<(usize, usize)> = g
        .entries()
        .filter(|e| e.0 < e.1)
        .map(|e| (e.0, e.1))
        .collect();
    let y = random_embedding(10, 3.0, 6);
    for (edge_rep, a) in [(true, 1.0), (false, 1.0), (true, 4.0)] {
        let masses = fa2_masses(&g.degrees(), edge_rep);
        let spec = ForceSpec {
            rho: a,
            ..ForceSpec::fa2(edge_rep)
        };
        let field = assemble_gradient(&spec, GraphInputs::graph(&g), &y).unwrap();
        let fd = fd_gradient(&y, 1e-6, |y| fa2_energy(&edges, &masses, y, a));
        let err = relative_error(&field.forces, &fd);
        assert!(err <= 1e-5, "edge repulsion {edge_rep}, a {a}: {err:e}");
    }
}

#[test]
fn umap_at_unit_epsilon_equals_tsne() {
    let x = random_data(20, 4, 21);
    let a = perplexity_calibrate(&build_knn(&x, 12, KnnAlgorithm::Exact).unwrap(), 4.0).unwrap();
    let y = random_embedding(20, 3.0, 22);
    let z = tsne_repulsion_exact(&y).z_sum.unwrap();
    let t = assemble_gradient(&ForceSpec::tsne(1.0), GraphInputs::affinities(&a), &y).unwrap();
    let u = assemble_gradient(
        &ForceSpec::umap(20.0 / z, 1.0),
        GraphInputs::affinities(&a),
        &y,
    )
    .unwrap();
    for (p, q) in t.forces.iter().zip(&u.forces) {
        assert!((p[0] - q[0]).abs() <= 1e-9 && (p[1] - q[1]).abs() <= 1e-9);
    }
}

#[test]
fn exact_barnes_hut_reproduces_every_kernel() {
    let y = random_embedding(300, 5.0, 31);
    let tree = QuadTree::build(&y, None);
    let exact = tsne_repulsion_exact(&y);
    let bh = tree.repulsion(RepulsionKernel::TsneW2, 0.0);
    let (ze, zb) = (exact.z_sum.unwrap(), bh.z_sum.unwrap());
    assert!(((ze - zb) / ze).abs() <= 1e-12);
    for (p, q) in exact.forces.iter().zip(&bh.forces) {
        assert!((p[0] - q[0]).abs() <= 1e-10 && (p[1] - q[1]).abs() <= 1e-10);
    }

    let exact = umap_repulsion_exact(&y, 1.0, 0.001).unwrap();
    let bh = tree.repulsion(
        RepulsionKernel::UmapEps {
            gamma: 1.0,
            epsilon: 0.001,
        },
        0.0,
    );
    assert!(relative_error(&bh.forces, &exact.forces) <= 1e-12);

    let (g, a) = {
        let x = random_data(300, 3, 32);
        let g = build_knn(&x, 5, KnnAlgorithm::Exact)
            .unwrap()
            .symmetrize_union();
        let a = binary_affinities(&g).unwrap();
        (g, a)
    };
    let spec = ForceSpec::fa2(true);
    let exact = assemble_gradient(&spec, GraphInputs::graph(&g), &y).unwrap();
    let bh = assemble_gradient_with(
        &spec,
        GraphInputs::graph(&g),
        &y,
        RepulsionMode::BarnesHut { theta: 0.0 },
    )
    .unwrap();
    assert!(relative_error(&bh.forces, &exact.forces) <= 1e-12);
    let spec = ForceSpec::tsne(4.0);
    let exact = assemble_gradient(&spec, GraphInputs::affinities(&a), &y).unwrap();
    let bh = assemble_gradient_with(
        &spec,
        GraphInputs::affinities(&a),
        &y,
        RepulsionMode::BarnesHut { theta: 0.0 },
    )
    .unwrap();
    assert!(relative_error(&bh.forces, &exact.forces) <= 1e-12);
}

fn median_relative_error(approx: &[[f64; 2]], exact: &[[f64; 2]]) -> f64 {
    let mut errs: Vec<f64> = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| ((a[0] - e[0]).hypot(a[1] - e[1])) / e[0].hypot(e[1]))
        .collect();
    errs.sort_by(f64::total_cmp);
    errs[errs.len() / 2]
}

#[test]
fn barnes_hut_error_shrinks_with_theta() {
    for seed in 0..4 {
        let y = random_embedding(800, 10.0, 40 + seed);
        let tree = QuadTree::build(&y, None);
        for kernel in [
            RepulsionKernel::TsneW2,
            RepulsionKernel::UmapEps {
                gamma: 1.0,
                epsilon: 0.001,
            },
            RepulsionKernel::InverseSquare,
        ] {
            let exact = tree.repulsion(kernel, 0.0);
            let errs: Vec<f64> = [1.0, 0.5, 0.25]
                .iter()
                .map(|&t| median_relative_error(&tree.repulsion(kernel, t).forces, &exact.forces))
                .collect();
            assert!(
                errs[2] <= errs[1] && errs[1] <= errs[0],
                "{kernel:?} seed {seed}: {errs:?}"
            );
        }
    }
}

#[test]
fn separated_clusters_act_as_point_masses() {
    // Two tight clusters 100 apart with per-point degree masses.
    let mut r = rng(50);
    let mut coords = Vec::new();
    for c in [[0.0, 0.0], [100.0, 30.0]] {
        for _ in 0..200 {
            use rand::Rng;
            coords.push([
                c[0] + r.random_range(-0.5..0.5),
                c[1] + r.random_range(-0.5..0.5),
            ]);
        }
    }
    let y = Embedding::new(coords.clone()).unwrap();
    let degrees: Vec<usize> = (0..400).map(|i| 15 + i % 7).collect();
    let masses = fa2_masses(&degrees, true);

    let (mass_b, com_b) = {
        let m: f64 = masses[200..].iter().sum();
        let cx = (200..400).map(|j| masses[j] * coords[j][0]).sum::<f64>() / m;
        let cy = (200..400).map(|j| masses[j] * coords[j][1]).sum::<f64>() / m;
        (m, [cx, cy])
    };
    for i in 0..200 {
        let mut exact = [0.0; 2];
        for j in 200..400 {
            let d = [coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]];
            let d2 = d[0] * d[0] + d[1] * d[1];
            exact[0] += masses[i] * masses[j] / d2 * d[0];
            exact[1] += masses[i] * masses[j] / d2 * d[1];
        }
        let d = [coords[i][0] - com_b[0], coords[i][1] - com_b[1]];
        let d2 = d[0] * d[0] + d[1] * d[1];
        let approx = [
            masses[i] * mass_b / d2 * d[0],
            masses[i] * mass_b / d2 * d[1],
        ];
        assert!(relative_error(&[approx], &[exact]) <= 0.01);
    }

    let tree = QuadTree::build(&y, Some(&masses));
    let exact = tree.repulsion(RepulsionKernel::InverseSquare, 0.0);
    let bh = tree.repulsion(RepulsionKernel::InverseSquare, 0.5);
    assert!(median_relative_error(&bh.forces, &exact.forces) <= 0.01);
}

#[test]
fn cell_summaries_match_direct_aggregation() {
    let y = random_embedding(1000, 7.0, 60);
    let masses: Vec<f64> = (0..1000).map(|i| 1.0 + (i % 5) as f64).collect();
    let tree = QuadTree::build(&y, Some(&masses));
    for cell in tree.cells() {
        let members = tree.members(cell);
        assert_eq!(members.len(), cell.count);
        let m: f64 = members.iter().map(|&j| masses[j]).sum();
        let cx = members
            .iter()
            .map(|&j| masses[j] * y.coords()[j][0])
            .sum::<f64>()
            / m;
        let cy = members
            .iter()
            .map(|&j| masses[j] * y.coords()[j][1])
            .sum::<f64>()
            / m;
        assert!((cell.mass - m).abs() <= 1e-9 * m);
        assert!((cell.com[0] - cx).abs() <= 1e-9 && (cell.com[1] - cy).abs() <= 1e-9);
        for &j in members {
            let p = y.coords()[j];
            assert!(
                (p[0] - cell.center[0]).abs() <= cell.half
                    && (p[1] - cell.center[1]).abs() <= cell.half
            );
        }
    }
}

#[test]
fn huge_exaggeration_leaves_pure_attraction() {
    let (_, a) = binary_instance(30, 70);
    let y = random_embedding(30, 1e-4, 71);
    let field = assemble_gradient(&ForceSpec::tsne(1e4), GraphInputs::affinities(&a), &y).unwrap();
    let scale = 30.0 / a.normalizer();
    let linear: Vec<[f64; 2]> = attraction(&a, &y, AttractionKernel::Linear)
        .unwrap()
        .forces
        .iter()
        .map(|f| [f[0] * scale, f[1] * scale])
        .collect();
    for (f, l) in field.forces.iter().zip(&linear) {
        assert!(relative_error(&[*f], &[*l]) <= 0.01);
    }
}
