mod common;

use std::collections::BTreeMap;

use hessiometric::expr::{eval_jet, eval_scalar, parse, Ast, BinOp, Func, Scope};
use hessiometric::geometry::{hessian_metric, kernel};
use hessiometric::jet::{layout, Jet, MultiIndex};
use hessiometric::linalg::{symmetric_eigen, Mat};
use hessiometric::submanifold::{dual_coordinates, make_slice};
use hessiometric::{builtin, Builtin};
use proptest::prelude::*;

fn jet_strategy(dim: usize, order: usize) -> impl Strategy<Value = Jet<f64>> {
    let len = layout(dim, order).unwrap().len();
    prop::collection::vec(-2.0f64..2.0, len)
        .prop_map(move |c| Jet::from_coeffs(dim, order, c).unwrap())
}

fn dims_and_orders() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 0usize..=4)
}

/// Truncated product by explicit double loop over monomials.
fn convolution(a: &Jet<f64>, b: &Jet<f64>) -> Vec<f64> {
    let lay = a.layout();
    let mut out = vec![0.0; lay.len()];
    for (i, ia) in lay.indices().iter().enumerate() {
        for (j, ib) in lay.indices().iter().enumerate() {
            let sum: Vec<u8> = ia
                .exponents()
                .iter()
                .zip(ib.exponents())
                .map(|(x, y)| x + y)
                .collect();
            let idx = MultiIndex::new(sum);
            if idx.order() <= lay.order() {
                out[lay.rank(&idx).unwrap()] += a.coeffs()[i] * b.coeffs()[j];
            }
        }
    }
    out
}

const NAMES: [&str; 3] = ["x", "y", "z"];

fn ast_strategy() -> impl Strategy<Value = Ast> {
    let leaf = prop_oneof![
        (0.0f64..10.0).prop_map(Ast::Number),
        (0usize..3).prop_map(|i| Ast::Ident(NAMES[i].to_string())),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Ast::Neg(Box::new(a))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Ast::Binary(op, Box::new(a), Box::new(b))),
            (
                prop_oneof![Just(Func::Ln), Just(Func::Exp), Just(Func::Sqrt)],
                inner
            )
                .prop_map(|(f, a)| Ast::Call(f, Box::new(a))),
        ]
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn jet_product_matches_convolution(
        (a, b) in dims_and_orders().prop_flat_map(|(d, o)| (jet_strategy(d, o), jet_strategy(d, o)))
    ) {
        let got = a.mul(&b).unwrap();
        for (x, y) in got.coeffs().iter().zip(convolution(&a, &b)) {
            prop_assert!(close(*x, y, 1e-13), "{x} vs {y}");
        }
    }

    #[test]
    fn ln_inverts_exp(a in dims_and_orders().prop_flat_map(|(d, o)| jet_strategy(d, o))) {
        let back = a.exp().ln().unwrap();
        for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
            prop_assert!(close(*x, *y, 1e-11), "{x} vs {y}");
        }
    }

    #[test]
    fn printed_ast_parses_back(ast in ast_strategy()) {
        let text = ast.to_string();
        prop_assert_eq!(parse(&text).unwrap(), ast, "{}", text);
    }

    #[test]
    fn order_zero_jet_matches_scalar(ast in ast_strategy(), p in prop::collection::vec(0.1f64..3.0, 3)) {
        let vars: Vec<String> = NAMES.iter().map(|s| s.to_string()).collect();
        let params = BTreeMap::new();
        let scope = Scope::new(&vars, &params);
        let jet = eval_jet(&ast, &p, &scope, 0);
        let scalar = eval_scalar(&ast, &p, &scope);
        match (jet, scalar) {
            (Ok(j), Ok(s)) => prop_assert!(
                j.value() == s || (j.value().is_nan() && s.is_nan()) || close(j.value(), s, 1e-12),
                "{} vs {s} for {ast}", j.value()
            ),
            (Err(_), Err(_)) => {}
            (j, s) => prop_assert!(false, "jet {j:?} vs scalar {s:?} for {ast}"),
        }
    }

    #[test]
    fn metric_is_homogeneous_of_degree_minus_one(
        which in 0usize..3,
        lambda in 0.2f64..5.0,
        seed in any::<u64>(),
    ) {
        let b = [Builtin::IdealGas, Builtin::Paramagnet, Builtin::KerrNewmanRadiant][which];
        let model = builtin(b.name(), &[]).unwrap();
        let p = common::builtin_point(b, &mut common::rng(seed));
        let scaled: Vec<f64> = p.iter().map(|x| x * lambda).collect();
        let g = hessian_metric(&model, &p).unwrap();
        let gs = hessian_metric(&model, &scaled).unwrap();
        let scale = g.g().max_abs();
        for (a, b) in gs.g().data().iter().zip(g.g().data()) {
            prop_assert!((a * lambda - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn kernel_is_scale_equivariant(which in 0usize..3, lambda in 0.2f64..5.0, seed in any::<u64>()) {
        let b = [Builtin::IdealGas, Builtin::Paramagnet, Builtin::KerrNewmanRadiant][which];
        let model = builtin(b.name(), &[]).unwrap();
        let p = common::builtin_point(b, &mut common::rng(seed));
        let scaled: Vec<f64> = p.iter().map(|x| x * lambda).collect();
        let k = kernel(&hessian_metric(&model, &p).unwrap(), 1e-9);
        let ks = kernel(&hessian_metric(&model, &scaled).unwrap(), 1e-9);
        prop_assert_eq!(k.rank, ks.rank);
        for (u, v) in k.basis.iter().zip(&ks.basis) {
            for (a, b) in u.iter().zip(v) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_eigen_residual(n in 1usize..=6, entries in prop::collection::vec(-5.0f64..5.0, 36)) {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = entries[i * 6 + j];
                m[(j, i)] = entries[i * 6 + j];
            }
        }
        let eig = symmetric_eigen(&m);
        let scale = m.frobenius().max(1.0);
        for k in 0..n {
            let v = eig.vector(k);
            let mv = m.matvec(&v);
            for (a, b) in mv.iter().zip(&v) {
                prop_assert!((a - eig.values[k] * b).abs() <= 1e-12 * scale);
            }
        }
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn radiant_domains_are_scale_closed(which in 0usize..3, lambda in 0.01f64..100.0, seed in any::<u64>()) {
        let b = [Builtin::IdealGas, Builtin::Paramagnet, Builtin::KerrNewmanRadiant][which];
        let model = builtin(b.name(), &[]).unwrap();
        let p = common::builtin_point(b, &mut common::rng(seed));
        let scaled: Vec<f64> = p.iter().map(|x| x * lambda).collect();
        prop_assert!(model.domain_check(&p) && model.domain_check(&scaled));
    }
}

#[test]
fn paramagnet_internal_energy_round_trip() {
    let params = [("R", 1.3), ("T0", 0.7), ("I0", 1.9)];
    let pm = builtin("paramagnet", &params).unwrap();
    let (r, t0, i0) = (1.3, 0.7, 1.9);
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let p = common::builtin_point(Builtin::Paramagnet, &mut rng);
        let (u, i, n) = (p[0], p[1], p[2]);
        let s = pm.entropy(&p).unwrap();
        let back = n * r * t0 * (s / (n * r) + i * i / (n * n * i0 * i0)).exp();
        assert!((back - u).abs() <= 1e-12 * u, "{back} vs {u}");
    }
}

#[test]
fn dual_coordinates_are_constant_along_rays() {
    let ig = builtin("ideal_gas", &[]).unwrap();
    let slice = make_slice(&Mat::from_rows(&[vec![0.0, 0.0, 1.0]]), &[1.0], 3).unwrap();
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let z = common::box_point(&mut rng, 2, 0.5, 3.0);
        let a = dual_coordinates(&ig, &slice, &z).unwrap();
        // doubling (U, V) at fixed N moves off the ray, so scale N too
        let doubled = make_slice(&Mat::from_rows(&[vec![0.0, 0.0, 1.0]]), &[2.0], 3).unwrap();
        let b = dual_coordinates(&ig, &doubled, &[2.0 * z[0], 2.0 * z[1]]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
        }
    }
}
