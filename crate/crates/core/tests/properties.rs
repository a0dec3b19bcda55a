use std::sync::OnceLock;

use proptest::prelude::*;

use twoparam_sl::coeffexpr::CoeffExpr;
use twoparam_sl::ivp::{solve_ivp, solve_ivp_with, IvpOptions};
use twoparam_sl::pipeline::{eigenpairs_csv, parse_eigenpairs_csv, EigenPairRecord};
use twoparam_sl::problem::{Problem, Weight};
use twoparam_sl::sampling::{build_sample_table, FillMode, RegularizerConfig, SampleTable};
use twoparam_sl::solver::{dedup, eigenpair_order, EigenPair};

// Reference evaluator for constant expressions: + - lowest, then * /, then
// unary minus, then right-associative ^ whose exponent may carry a sign.
struct RefParser<'a> {
    s: &'a [u8],
    i: usize,
}

impl RefParser<'_> {
    fn peek(&mut self) -> Option<u8> {
        while self.i < self.s.len() && self.s[self.i] == b' ' {
            self.i += 1;
        }
        self.s.get(self.i).copied()
    }

    fn finite(v: f64) -> Option<f64> {
        v.is_finite().then_some(v)
    }

    fn sum(&mut self) -> Option<f64> {
        let mut acc = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let rhs = self.product()?;
            acc = Self::finite(if c == b'+' { acc + rhs } else { acc - rhs })?;
        }
        Some(acc)
    }

    fn product(&mut self) -> Option<f64> {
        let mut acc = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.i += 1;
            let rhs = self.unary()?;
            acc = if c == b'*' {
                Self::finite(acc * rhs)?
            } else if rhs == 0.0 {
                return None;
            } else {
                Self::finite(acc / rhs)?
            };
        }
        Some(acc)
    }

    fn unary(&mut self) -> Option<f64> {
        if self.peek() == Some(b'-') {
            self.i += 1;
            return Some(-self.unary()?);
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.i += 1;
            let exponent = self.unary()?;
            return Self::finite(base.powf(exponent));
        }
        Some(base)
    }

    fn atom(&mut self) -> Option<f64> {
        if self.peek() == Some(b'(') {
            self.i += 1;
            let v = self.sum()?;
            assert_eq!(self.peek(), Some(b')'));
            self.i += 1;
            return Some(v);
        }
        let start = self.i;
        while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
            self.i += 1;
        }
        std::str::from_utf8(&self.s[start..self.i]).unwrap().parse().ok()
    }
}

fn reference_eval(text: &str) -> Option<f64> {
    let mut p = RefParser { s: text.as_bytes(), i: 0 };
    let v = p.sum()?;
    assert_eq!(p.peek(), None, "reference parser stopped early in {text}");
    Some(v)
}

fn literal() -> impl Strategy<Value = String> {
    prop_oneof![(0u32..10).prop_map(|d| d.to_string()), (0u32..100).prop_map(|d| format!("{}.{}", d / 10, d % 10)),]
}

fn constant_expression() -> impl Strategy<Value = String> {
    literal().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]), inner.clone())
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.prop_map(|a| format!("({a})")),
        ]
    })
}

fn expression_in_x() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![literal(), Just("x".to_string())];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]), inner.clone())
                .prop_map(|(a, op, b)| format!("{a}{op}{b}")),
            (prop::sample::select(vec!["sin", "cos", "exp", "sqrt", "abs"]), inner.clone())
                .prop_map(|(f, a)| format!("{f}({a})")),
            inner.prop_map(|a| format!("(-{a})")),
        ]
    })
}

proptest! {
    #[test]
    fn precedence_matches_reference_evaluator(text in constant_expression()) {
        let parsed = CoeffExpr::parse(&text).unwrap();
        match reference_eval(&text) {
            Some(v) => prop_assert_eq!(parsed.eval(0.0).unwrap().to_bits(), v.to_bits(), "{}", text),
            None => prop_assert!(parsed.eval(0.0).is_err(), "{}", text),
        }
    }

    #[test]
    fn evaluation_is_repeatable(text in expression_in_x(), x in 0.0f64..1.0) {
        let e = CoeffExpr::parse(&text).unwrap();
        let a = e.eval(x);
        let b = e.eval(x);
        prop_assert_eq!(a.as_ref().ok().map(|v| v.to_bits()), b.as_ref().ok().map(|v| v.to_bits()));
        prop_assert_eq!(a.is_err(), b.is_err());
    }

    #[test]
    fn printed_form_reparses_to_the_same_function(text in expression_in_x(), x in 0.0f64..1.0) {
        let e = CoeffExpr::parse(&text).unwrap();
        let again = CoeffExpr::parse(&e.ast().to_string()).unwrap();
        prop_assert_eq!(again.ast(), e.ast());
        prop_assert_eq!(again.eval(x).ok().map(f64::to_bits), e.eval(x).ok().map(f64::to_bits));
    }
}

fn quadratic_problem(a: f64, b: f64, c: f64) -> Problem {
    format!("w1 = {a} + {b}*x + {c}*x^2\nw2 = {c} + {a}*x\nq = 0\nc = 0.5\n").parse().unwrap()
}

fn quadratic_sigma(a: f64, b: f64, c: f64, x: f64) -> f64 {
    2.0 * (x * (a * x + b * x * x / 2.0 + c * x * x * x / 3.0)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_is_nondecreasing(a in 0.01f64..5.0, b in 0.0f64..5.0, c in 0.01f64..5.0) {
        let p = quadratic_problem(a, b, c);
        let tb = p.type_bounds().unwrap();
        for which in [Weight::W1, Weight::W2] {
            let mut prev = 0.0;
            for i in 0..=400 {
                let s = tb.sigma(which, i as f64 / 400.0);
                prop_assert!(s >= prev, "{which:?} at step {i}: {s} < {prev}");
                prev = s;
            }
        }
    }

    #[test]
    fn sigma_matches_polynomial_integral(a in 0.01f64..5.0, b in 0.0f64..5.0, c in 0.01f64..5.0, x in 0.01f64..=1.0) {
        let p = quadratic_problem(a, b, c);
        let exact = quadratic_sigma(a, b, c, x);
        let direct = p.sigma(Weight::W1, x).unwrap();
        let cached = p.type_bounds().unwrap().sigma(Weight::W1, x);
        prop_assert!((direct - exact).abs() <= 1e-10 * exact, "direct {direct} vs {exact}");
        prop_assert!((cached - exact).abs() <= 1e-10 * exact, "cached {cached} vs {exact}");
    }

    #[test]
    fn shooting_is_even_in_each_parameter(mu1 in 0.0f64..50.0, mu2 in 0.0f64..50.0) {
        let p = Problem::airy_example();
        let y = |a: f64, b: f64| solve_ivp(&p, a, b, &[1.0]).unwrap().last().y;
        let base = y(mu1, mu2);
        prop_assert!((base - y(-mu1, mu2)).abs() <= 1e-10);
        prop_assert!((base - y(mu1, -mu2)).abs() <= 1e-10);
    }

    #[test]
    fn wronskian_stays_minus_one(mu1 in 0.0f64..20.0, mu2 in 0.0f64..20.0) {
        let p = Problem::airy_example();
        let opts = IvpOptions::default();
        let a = *solve_ivp_with(&p, mu1, mu2, [0.0, 1.0], &[1.0], opts).unwrap().last();
        let b = *solve_ivp_with(&p, mu1, mu2, [1.0, 0.0], &[1.0], opts).unwrap().last();
        let w = a.y * b.yprime - a.yprime * b.y;
        prop_assert!((w + 1.0).abs() <= 1e-10, "wronskian {w}");
    }
}

fn small_table() -> &'static SampleTable {
    static TABLE: OnceLock<SampleTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        build_sample_table(&Problem::airy_example(), 1.0, 8, RegularizerConfig::default(), FillMode::Mirrored)
            .unwrap()
            .0
    })
}

proptest! {
    #[test]
    fn series_reproduces_lattice_samples(j in -8i64..=8, k in -8i64..=8) {
        let t = small_table();
        let (a, b) = t.lattice_point(j, k);
        let s = t.sample(j, k);
        prop_assert!((t.cardinal_eval(a, b) - s).abs() <= 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn series_is_even_per_axis(mu1 in -20.0f64..20.0, mu2 in -20.0f64..20.0) {
        let t = small_table();
        let v = t.cardinal_eval(mu1, mu2);
        prop_assert!((v - t.cardinal_eval(-mu1, mu2)).abs() <= 1e-10);
        prop_assert!((v - t.cardinal_eval(mu1, -mu2)).abs() <= 1e-10);
    }

    #[test]
    fn series_is_linear_in_the_samples(mu1 in -20.0f64..20.0, mu2 in -20.0f64..20.0, k in -4.0f64..4.0) {
        let t = small_table();
        let v = t.cardinal_eval(mu1, mu2);
        let w = t.scaled(k).cardinal_eval(mu1, mu2);
        prop_assert!((w - k * v).abs() <= 1e-12 * (1.0 + (k * v).abs()));
    }
}

fn pair() -> impl Strategy<Value = EigenPair> {
    (-60.0f64..60.0, -60.0f64..60.0, 0.0f64..1e-6, 0.0f64..1e-6, any::<bool>()).prop_map(|(a, b, r1, r2, refined)| {
        EigenPair::new((a, b), (r1, r2), (a, b), false, refined)
    })
}

proptest! {
    #[test]
    fn eigenvalues_are_squares(p in pair()) {
        prop_assert_eq!(p.lambda1, p.mu1 * p.mu1);
        prop_assert_eq!(p.lambda2, p.mu2 * p.mu2);
    }

    #[test]
    fn eigenpair_csv_round_trips(pairs in prop::collection::vec(pair(), 0..12)) {
        let back = parse_eigenpairs_csv(&eigenpairs_csv(&pairs)).unwrap();
        let expected: Vec<EigenPairRecord> = pairs.iter().map(EigenPairRecord::from).collect();
        prop_assert_eq!(back, expected);
    }

    #[test]
    fn dedup_is_sorted_separated_and_idempotent(pairs in prop::collection::vec(pair(), 0..20), tol in 0.0f64..5.0) {
        let once = dedup(pairs, tol);
        prop_assert!(once.windows(2).all(|w| eigenpair_order(&w[0], &w[1]).is_le()));
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                prop_assert!((a.mu1 - b.mu1).hypot(a.mu2 - b.mu2) >= tol);
            }
        }
        let twice = dedup(once.clone(), tol);
        prop_assert_eq!(twice, once);
    }
}
