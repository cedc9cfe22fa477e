use super::*;
use crate::mesh::generate_sphere;
use crate::reference::{basis_eval, basis_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bdf_tables_satisfy_the_classical_identities() {
    for order in [1, 2] {
        let scheme = BdfScheme::new(order).unwrap();
        let dsum: f64 = scheme.delta.iter().sum();
        let gsum: f64 = scheme.gamma.iter().sum();
        assert!(dsum.abs() < 1e-15, "delta sum {dsum}");
        assert!((gsum - 1.0).abs() < 1e-15, "gamma sum {gsum}");
        // first-order consistency: sum_j j*delta_j = -1 (derivative weights)
        let deriv: f64 =
            scheme.delta.iter().enumerate().map(|(j, &d)| j as f64 * d).sum();
        assert!((deriv + 1.0).abs() < 1e-15);
    }
    assert!(BdfScheme::new(3).is_err());
}

#[test]
fn dziuk_zero_step_is_the_identity() {
    let mesh = generate_sphere(1, 1).unwrap();
    let (x, _) = dziuk_step(&mesh, 0.0).unwrap();
    assert_eq!(x, mesh.nodes);
}

#[test]
fn dziuk_area_decays_monotonically() {
    let mesh = generate_sphere(2, 1).unwrap();
    let opts = FlowOptions::new(FlowAlgorithm::Dziuk, 1e-3, 0.01);
    let result = flow_driver(&mesh, &opts).unwrap();
    assert!(result.completed);
    assert_eq!(result.rows.len(), 11);
    for w in result.rows.windows(2) {
        assert!(w[1].area < w[0].area, "area not decreasing: {} -> {}", w[0].area, w[1].area);
    }
}

#[test]
fn constant_normal_field_has_zero_nonlinear_term() {
    let mesh = generate_sphere(1, 2).unwrap();
    let n = mesh.num_nodes();
    let mut u = vec![0.0; 4 * n];
    for j in 0..n {
        u[j] = 0.6;
        u[n + j] = 0.8;
        // third component zero, H arbitrary
        u[3 * n + j] = 1.7;
    }
    let f = kll_nonlinear_rhs(&mesh, &u).unwrap();
    // alpha^2 vanishes up to the rounding of the gradient partition sums
    for &v in &f {
        assert!(v.abs() < 1e-25, "{v}");
    }
}

#[test]
fn sphere_nonlinear_term_matches_the_analytic_value() {
    // n = x, H = 2 on the unit sphere: |grad nu|^2 = 2, so f2 = 4 M 1
    let mesh = generate_sphere(3, 2).unwrap();
    let n = mesh.num_nodes();
    let state = kll_sphere_data(&mesh);
    let f = kll_nonlinear_rhs(&mesh, &state.u).unwrap();
    let (m, _) = crate::assembly::mass_and_stiffness(&mesh).unwrap();
    let m1 = m.spmv(&vec![1.0; n]).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        let want = 4.0 * m1[j];
        num += (f[3 * n + j] - want) * (f[3 * n + j] - want);
        den += want * want;
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.02, "relative deviation {rel}");
}

/// Independent per-element loop: reference basis evaluated from scratch,
/// physical gradients via Gaussian elimination on the Jacobian rows.
fn naive_kll_rhs(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    let n = mesh.num_nodes();
    let nref = mesh.nref();
    let rule = crate::quadrature::quadrature_rule(2).unwrap();
    let mut f = vec![0.0; 4 * n];
    for e in 0..mesh.num_elements() {
        let elem = mesh.element(e);
        for i in 0..rule.len() {
            let xi = rule.node(i);
            let phi = basis_eval(2, mesh.p, xi).unwrap();
            let grad = basis_grad(2, mesh.p, xi).unwrap();
            // rows of L: two tangents plus their cross product
            let mut l = [[0.0f64; 3]; 3];
            for j in 0..nref {
                let p = mesh.node(elem[j] as usize);
                for r in 0..2 {
                    for c in 0..3 {
                        l[r][c] += p[c] * grad[j * 2 + r];
                    }
                }
            }
            l[2] = [
                l[0][1] * l[1][2] - l[0][2] * l[1][1],
                l[0][2] * l[1][0] - l[0][0] * l[1][2],
                l[0][0] * l[1][1] - l[0][1] * l[1][0],
            ];
            let det = l[2].iter().map(|v| v * v).sum::<f64>().sqrt();
            // solve L b_j = (grad_j; 0) by elimination for every basis fn
            let mut b = vec![[0.0f64; 3]; nref];
            for (j, bj) in b.iter_mut().enumerate() {
                let rhs = [grad[j * 2], grad[j * 2 + 1], 0.0];
                *bj = solve3(&l, &rhs);
            }
            let mut alpha2 = 0.0;
            for k in 0..3 {
                let mut col = [0.0f64; 3];
                for j in 0..nref {
                    for c in 0..3 {
                        col[c] += b[j][c] * u[k * n + elem[j] as usize];
                    }
                }
                alpha2 += col.iter().map(|v| v * v).sum::<f64>();
            }
            let mut uq = [0.0f64; 4];
            for j in 0..nref {
                for k in 0..4 {
                    uq[k] += phi[j] * u[k * n + elem[j] as usize];
                }
            }
            let scale = rule.weights[i] * det * alpha2;
            for j in 0..nref {
                for k in 0..4 {
                    f[k * n + elem[j] as usize] += scale * uq[k] * phi[j];
                }
            }
        }
    }
    f
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> [f64; 3] {
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&a[r]);
        m[r][3] = b[r];
    }
    for k in 0..3 {
        let piv = (k..3).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, piv);
        for i in k + 1..3 {
            let f = m[i][k] / m[k][k];
            for j in k..4 {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][3] - s) / m[i][i];
    }
    x
}

#[test]
fn nonlinear_term_matches_the_naive_loop_on_random_meshes() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = generate_sphere(1, if seed % 2 == 0 { 2 } else { 1 }).unwrap();
        for v in mesh.nodes.iter_mut() {
            *v += rng.gen_range(-0.03..0.03);
        }
        let n = mesh.num_nodes();
        let u: Vec<f64> = (0..4 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = kll_nonlinear_rhs(&mesh, &u).unwrap();
        let naive = naive_kll_rhs(&mesh, &u);
        let scale = naive.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for (a, b) in fast.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12 * scale, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn single_small_step_changes_state_at_first_order() {
    let mesh = generate_sphere(1, 2).unwrap();
    let state = kll_sphere_data(&mesh);
    let scheme = BdfScheme::new(1).unwrap();
    let mut change = Vec::new();
    for tau in [1e-3, 5e-4] {
        let (next, _) = kll_step(&mesh, std::slice::from_ref(&state), tau, &scheme).unwrap();
        let diff = next
            .u
            .iter()
            .zip(&state.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        change.push(diff);
    }
    assert!(change[0] < 0.1, "step change too large: {}", change[0]);
    let ratio = change[0] / change[1];
    assert!((1.5..2.5).contains(&ratio), "not O(tau): ratio {ratio}");
}

#[test]
fn kll_step_requires_enough_history() {
    let mesh = generate_sphere(0, 1).unwrap();
    let state = kll_sphere_data(&mesh);
    let scheme = BdfScheme::new(2).unwrap();
    assert!(matches!(
        kll_step(&mesh, std::slice::from_ref(&state), 0.01, &scheme),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn zero_final_time_keeps_only_the_initial_state() {
    let mesh = generate_sphere(1, 2).unwrap();
    let opts = FlowOptions::new(FlowAlgorithm::Kll, 0.002, 0.0);
    let result = flow_driver(&mesh, &opts).unwrap();
    assert_eq!(result.rows.len(), 1);
    assert_eq!(result.snapshots.len(), 1);
    assert!(result.completed);
}

#[test]
fn discrete_initial_data_recovers_sphere_normals_and_curvature() {
    // pointwise H is noisy at the twelve irregular icosahedron vertices;
    // check alignment everywhere and H in the mass-weighted mean
    let mesh = generate_sphere(3, 1).unwrap();
    let state = kll_discrete_data(&mesh).unwrap();
    let n = mesh.num_nodes();
    for j in 0..n {
        let x = mesh.node(j);
        let dot: f64 = (0..3).map(|k| state.u[k * n + j] * x[k]).sum();
        assert!(dot > 0.999, "normal at node {j} misaligned: {dot}");
    }
    let (m, _) = crate::assembly::mass_and_stiffness(&mesh).unwrap();
    let mh = m.spmv(&state.u[3 * n..]).unwrap();
    let ones = vec![1.0; n];
    let area: f64 = m.spmv(&ones).unwrap().iter().sum();
    let mean_h: f64 = mh.iter().sum::<f64>() / area;
    assert!((mean_h - 2.0).abs() < 0.02, "mean H = {mean_h}");

    // the quadratic mesh resolves H pointwise
    let mesh = generate_sphere(2, 2).unwrap();
    let state = kll_discrete_data(&mesh).unwrap();
    let n = mesh.num_nodes();
    for j in 0..n {
        let h = state.u[3 * n + j];
        assert!((h - 2.0).abs() < 0.15, "H at node {j}: {h}");
    }
}

#[test]
fn open_surface_is_rejected() {
    let mut mesh = generate_sphere(0, 1).unwrap();
    mesh.elements.truncate(19 * 3);
    assert!(dziuk_step(&mesh, 0.01).is_err());
    let opts = FlowOptions::new(FlowAlgorithm::Kll, 0.01, 0.1);
    assert!(flow_driver(&mesh, &opts).is_err());
}

#[test]
fn per_step_assembly_matches_the_naive_oracle_during_a_flow() {
    let mesh = generate_sphere(1, 2).unwrap();
    let mut history = vec![kll_sphere_data(&mesh)];
    let mut current = mesh.clone();
    let scheme = BdfScheme::new(1).unwrap();
    for _ in 0..3 {
        let (mb, ab) =
            crate::assembly::assemble_batched(&current, &Default::default())
                .unwrap()
                .finalize()
                .unwrap();
        let (mn, an) =
            crate::assembly::assemble_naive(&current).unwrap().finalize().unwrap();
        let scale = mb.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, y) in mb.vals.iter().zip(&mn.vals) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
        let scale = ab.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, y) in ab.vals.iter().zip(&an.vals) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
        let (state, _) = kll_step(&current, &history, 0.002, &scheme).unwrap();
        current = current.with_nodes(state.x.clone()).unwrap();
        history.push(state);
    }
}

#[test]
fn flow_csv_schema_is_stable() {
    let rows = vec![FlowRow {
        step: 0,
        t: 0.0,
        assembly_s: 0.0,
        solve_s: 0.0,
        area: 12.56,
        mean_radius: 1.0,
        normal_drift: 0.0,
    }];
    let mut buf = Vec::new();
    write_flow_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), FLOW_CSV_HEADER);
}
