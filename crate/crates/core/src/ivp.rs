//! Shooting solutions of `y'' + (mu1^2 w1 + mu2^2 w2) y = q y`, `y(0) = 0`, `y'(0) = 1`.
//!
//! The first-order system `(y, y')` is integrated with the Dormand–Prince 8(5,3)
//! pair. Steps are clipped so that every requested abscissa is hit exactly;
//! no dense output is needed.

use thiserror::Error;

use crate::coeffexpr::EvalError;
use crate::problem::{Problem, Weight};

#[derive(Debug, Clone, Copy)]
pub struct IvpOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions { rtol: 1e-12, atol: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvpError {
    #[error("abscissae must be nonempty, strictly increasing and within (0, 1]")]
    BadAbscissae,
    #[error("coefficient evaluation failed at x = {x}: {source}")]
    Coefficient { x: f64, source: EvalError },
    #[error("step size underflow at x = {x} (h = {h:e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("step limit of {0} exceeded")]
    TooManySteps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpRecord {
    pub x: f64,
    pub y: f64,
    pub yprime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvpSolution {
    pub mu1: f64,
    pub mu2: f64,
    /// Starts with the initial record at x = 0, then one record per requested abscissa.
    pub values: Vec<IvpRecord>,
    /// Sum of the accepted local error estimates (absolute units).
    pub tol_achieved: f64,
    pub steps: usize,
}

impl IvpSolution {
    /// Record at a requested abscissa (exact match).
    pub fn at(&self, x: f64) -> Option<&IvpRecord> {
        self.values.iter().find(|r| r.x == x)
    }

    pub fn last(&self) -> &IvpRecord {
        self.values.last().expect("solution always holds the initial record")
    }
}

/// `y(0) = 0, y'(0) = 1` at the requested abscissae.
pub fn solve_ivp(problem: &Problem, mu1: f64, mu2: f64, xs: &[f64]) -> Result<IvpSolution, IvpError> {
    solve_ivp_with(problem, mu1, mu2, [0.0, 1.0], xs, IvpOptions::default())
}

/// General initial data `[y(0), y'(0)]` and tolerances.
pub fn solve_ivp_with(
    problem: &Problem,
    mu1: f64,
    mu2: f64,
    initial: [f64; 2],
    xs: &[f64],
    opts: IvpOptions,
) -> Result<IvpSolution, IvpError> {
    if xs.is_empty() || xs[0] <= 0.0 || *xs.last().unwrap() > 1.0 || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IvpError::BadAbscissae);
    }
    let (a1, a2) = (mu1 * mu1, mu2 * mu2);
    let rhs = |x: f64, s: [f64; 2]| -> Result<[f64; 2], IvpError> {
        let ev = |r: Result<f64, EvalError>| r.map_err(|source| IvpError::Coefficient { x, source });
        let w1 = ev(problem.w1().eval(x))?;
        let w2 = ev(problem.w2().eval(x))?;
        let q = ev(problem.q().eval(x))?;
        Ok([s[1], (q - a1 * w1 - a2 * w2) * s[0]])
    };

    let freq = (a1 * problem.weight_max(Weight::W1) + a2 * problem.weight_max(Weight::W2)).sqrt();
    let h_max = 0.25 / (1.0 + freq);

    let mut values = Vec::with_capacity(xs.len() + 1);
    values.push(IvpRecord { x: 0.0, y: initial[0], yprime: initial[1] });

    let mut x = 0.0;
    let mut state = initial;
    let mut k0 = rhs(x, state)?;
    let mut h = h_max * 0.1;
    let mut steps = 0usize;
    let mut err_sum = 0.0;

    for &target in xs {
        while x < target {
            if steps >= opts.max_steps {
                return Err(IvpError::TooManySteps(opts.max_steps));
            }
            let remaining = target - x;
            let hits_target = h >= remaining;
            let h_try = if hits_target { remaining } else { h.min(h_max) };
            if h_try < 1e-15 * (1.0 + x.abs()) && !hits_target {
                return Err(IvpError::StepUnderflow { x, h: h_try });
            }
            let x_new = if hits_target { target } else { x + h_try };
            let (next, k_next, err_norm, err_abs) = dop853_step(&rhs, x, x_new, state, k0, &opts)?;
            if err_norm <= 1.0 {
                x = x_new;
                state = next;
                k0 = k_next;
                steps += 1;
                err_sum += err_abs;
                let factor = if err_norm == 0.0 { 10.0 } else { (0.9 * err_norm.powf(-1.0 / 8.0)).clamp(0.2, 10.0) };
                // a step shortened to land on the target says nothing about the next one
                if !hits_target || factor < 1.0 {
                    h = (h_try * factor).min(h_max);
                }
            } else {
                let factor = (0.9 * err_norm.powf(-1.0 / 8.0)).clamp(0.2, 1.0);
                h = h_try * factor;
                if h < 1e-15 * (1.0 + x.abs()) {
                    return Err(IvpError::StepUnderflow { x, h });
                }
            }
        }
        values.push(IvpRecord { x: target, y: state[0], yprime: state[1] });
    }

    Ok(IvpSolution { mu1, mu2, values, tol_achieved: err_sum, steps })
}

type StepOutput = ([f64; 2], [f64; 2], f64, f64);

/// One DOP853 step. Returns (new state, f at new state, scaled error norm, absolute error size).
fn dop853_step<F>(
    rhs: &F,
    x: f64,
    x_new: f64,
    y: [f64; 2],
    k0: [f64; 2],
    opts: &IvpOptions,
) -> Result<StepOutput, IvpError>
where
    F: Fn(f64, [f64; 2]) -> Result<[f64; 2], IvpError>,
{
    let h = x_new - x;
    let mut k = [[0.0f64; 2]; 13];
    k[0] = k0;
    for s in 1..12 {
        let mut yi = y;
        for (j, a) in A[s].iter().enumerate().take(s) {
            if *a != 0.0 {
                yi[0] += h * a * k[j][0];
                yi[1] += h * a * k[j][1];
            }
        }
        k[s] = rhs(x + C[s] * h, yi)?;
    }
    let mut y_new = y;
    for (j, b) in B.iter().enumerate() {
        if *b != 0.0 {
            y_new[0] += h * b * k[j][0];
            y_new[1] += h * b * k[j][1];
        }
    }
    k[12] = rhs(x_new, y_new)?;

    let mut err5 = [0.0f64; 2];
    let mut err3 = [0.0f64; 2];
    for j in 0..12 {
        for c in 0..2 {
            err5[c] += E5[j] * k[j][c];
            err3[c] += E3[j] * k[j][c];
        }
    }
    let (mut n5, mut n3) = (0.0, 0.0);
    let mut abs5 = 0.0f64;
    for c in 0..2 {
        let scale = opts.atol + opts.rtol * y[c].abs().max(y_new[c].abs());
        n5 += (err5[c] / scale).powi(2);
        n3 += (err3[c] / scale).powi(2);
        abs5 = abs5.max(err5[c].abs());
    }
    let err_norm = if n5 == 0.0 && n3 == 0.0 {
        0.0
    } else {
        h.abs() * n5 / ((n5 + 0.01 * n3) * 2.0).sqrt()
    };
    let abs_err = if n5 == 0.0 { 0.0 } else { err_norm / (n5 / 2.0).sqrt() * abs5 };
    Ok((y_new, k[12], err_norm, abs_err))
}

const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A: [[f64; 12]; 12] = {
    let mut a = [[0.0; 12]; 12];
    a[1][0] = 5.26001519587677318785587544488e-2;

    a[2][0] = 1.97250569845378994544595329183e-2;
    a[2][1] = 5.91751709536136983633785987549e-2;

    a[3][0] = 2.95875854768068491816892993775e-2;
    a[3][2] = 8.87627564304205475450678981324e-2;

    a[4][0] = 2.41365134159266685502369798665e-1;
    a[4][2] = -8.84549479328286085344864962717e-1;
    a[4][3] = 9.24834003261792003115737966543e-1;

    a[5][0] = 3.7037037037037037037037037037e-2;
    a[5][3] = 1.70828608729473871279604482173e-1;
    a[5][4] = 1.25467687566822425016691814123e-1;

    a[6][0] = 3.7109375e-2;
    a[6][3] = 1.70252211019544039314978060272e-1;
    a[6][4] = 6.02165389804559606850219397283e-2;
    a[6][5] = -1.7578125e-2;

    a[7][0] = 3.70920001185047927108779319836e-2;
    a[7][3] = 1.70383925712239993810214054705e-1;
    a[7][4] = 1.07262030446373284651809199168e-1;
    a[7][5] = -1.53194377486244017527936158236e-2;
    a[7][6] = 8.27378916381402288758473766002e-3;

    a[8][0] = 6.24110958716075717114429577812e-1;
    a[8][3] = -3.36089262944694129406857109825;
    a[8][4] = -8.68219346841726006818189891453e-1;
    a[8][5] = 2.75920996994467083049415600797e1;
    a[8][6] = 2.01540675504778934086186788979e1;
    a[8][7] = -4.34898841810699588477366255144e1;

    a[9][0] = 4.77662536438264365890433908527e-1;
    a[9][3] = -2.48811461997166764192642586468;
    a[9][4] = -5.90290826836842996371446475743e-1;
    a[9][5] = 2.12300514481811942347288949897e1;
    a[9][6] = 1.52792336328824235832596922938e1;
    a[9][7] = -3.32882109689848629194453265587e1;
    a[9][8] = -2.03312017085086261358222928593e-2;

    a[10][0] = -9.3714243008598732571704021658e-1;
    a[10][3] = 5.18637242884406370830023853209;
    a[10][4] = 1.09143734899672957818500254654;
    a[10][5] = -8.14978701074692612513997267357;
    a[10][6] = -1.85200656599969598641566180701e1;
    a[10][7] = 2.27394870993505042818970056734e1;
    a[10][8] = 2.49360555267965238987089396762;
    a[10][9] = -3.0467644718982195003823669022;

    a[11][0] = 2.27331014751653820792359768449;
    a[11][3] = -1.05344954667372501984066689879e1;
    a[11][4] = -2.00087205822486249909675718444;
    a[11][5] = -1.79589318631187989172765950534e1;
    a[11][6] = 2.79488845294199600508499808837e1;
    a[11][7] = -2.85899827713502369474065508674;
    a[11][8] = -8.87285693353062954433549289258;
    a[11][9] = 1.23605671757943030647266201528e1;
    a[11][10] = 6.43392746015763530355970484046e-1;
    a
};

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.8012039600105847814672114227,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

const E3: [f64; 12] = {
    let mut e = B;
    e[0] -= 0.244094488188976377952755905512;
    e[8] -= 0.733846688281611857341361741547;
    e[11] -= 0.220588235294117647058823529412e-1;
    e
};

const E5: [f64; 12] = [
    0.1312004499419488073250102996e-1,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753e+1,
    -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1,
    -0.3503288487499736816886487290,
    0.3341791187130174790297318841,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffexpr::CoeffExpr;

    fn problem(w1: &str, w2: &str, q: &str) -> Problem {
        Problem::new(CoeffExpr::parse(w1).unwrap(), CoeffExpr::parse(w2).unwrap(), CoeffExpr::parse(q).unwrap(), 0.7)
            .unwrap()
    }

    #[test]
    fn tableau_row_sums_match_nodes() {
        for s in 1..12 {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-14, "stage {s}");
        }
        let b: f64 = B.iter().sum();
        assert!((b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_parameters_give_identity() {
        let sol = solve_ivp(&Problem::airy_example(), 0.0, 0.0, &[0.5, 1.0]).unwrap();
        assert_eq!(sol.values[0], IvpRecord { x: 0.0, y: 0.0, yprime: 1.0 });
        let end = sol.last();
        assert!((end.y - 1.0).abs() < 1e-14 && (end.yprime - 1.0).abs() < 1e-14);
        assert!((sol.at(0.5).unwrap().y - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_coefficient_closed_form() {
        let p = problem("1", "x", "0");
        let end = *solve_ivp(&p, 2.0, 0.0, &[1.0]).unwrap().last();
        assert!((end.y - 0.454_648_713_412_840_85).abs() < 1e-12, "{}", end.y);
        assert!((end.yprime + 0.416_146_836_547_142_4).abs() < 1e-12);
    }

    #[test]
    fn potential_only_gives_sinh() {
        let p = problem("1", "1", "1");
        let end = *solve_ivp(&p, 0.0, 0.0, &[1.0]).unwrap().last();
        assert!((end.y - 1.175_201_193_643_801_4).abs() < 1e-12);
    }

    #[test]
    fn exact_hits_at_requested_points() {
        let p = Problem::airy_example();
        let xs = [0.1, 0.35, 0.7, 1.0];
        let sol = solve_ivp(&p, 12.0, 9.0, &xs).unwrap();
        let got: Vec<f64> = sol.values.iter().map(|r| r.x).collect();
        assert_eq!(got, vec![0.0, 0.1, 0.35, 0.7, 1.0]);
        // requesting a subset must not change the value at a shared point
        let alone = solve_ivp(&p, 12.0, 9.0, &[0.7]).unwrap();
        assert!((alone.last().y - sol.at(0.7).unwrap().y).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_abscissae() {
        let p = Problem::airy_example();
        assert_eq!(solve_ivp(&p, 1.0, 1.0, &[]), Err(IvpError::BadAbscissae));
        assert_eq!(solve_ivp(&p, 1.0, 1.0, &[0.0, 1.0]), Err(IvpError::BadAbscissae));
        assert_eq!(solve_ivp(&p, 1.0, 1.0, &[0.5, 0.5]), Err(IvpError::BadAbscissae));
        assert_eq!(solve_ivp(&p, 1.0, 1.0, &[1.5]), Err(IvpError::BadAbscissae));
    }

    #[test]
    fn coefficient_errors_report_location() {
        // 0.3 is off the validation grid, so the problem validates
        let p = problem("1", "1", "1/(x - 0.3)");
        match solve_ivp(&p, 1.0, 1.0, &[0.3, 1.0]) {
            Err(IvpError::Coefficient { x, source: EvalError::DivisionByZero { .. } }) => assert_eq!(x, 0.3),
            // the pole usually collapses the step size before x = 0.3 is reached
            Err(IvpError::StepUnderflow { x, .. }) => assert!((x - 0.3).abs() < 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wronskian_is_conserved() {
        let p = problem("1 + x^2", "exp(x)", "0");
        for (mu1, mu2) in [(3.0, 4.0), (20.0, 11.0), (0.5, 40.0)] {
            let phi1 = *solve_ivp_with(&p, mu1, mu2, [0.0, 1.0], &[1.0], IvpOptions::default()).unwrap().last();
            let phi2 = *solve_ivp_with(&p, mu1, mu2, [1.0, 0.0], &[1.0], IvpOptions::default()).unwrap().last();
            let w = phi1.y * phi2.yprime - phi1.yprime * phi2.y;
            assert!((w + 1.0).abs() < 1e-10, "mu=({mu1},{mu2}) W={w}");
        }
    }

    #[test]
    fn fixed_step_error_has_eighth_order() {
        // y'' = -w^2 y, y(0) = 0, y'(0) = 1 on [0, 1] with n equal steps
        let omega = 10.0f64;
        let rhs = |_x: f64, s: [f64; 2]| -> Result<[f64; 2], IvpError> { Ok([s[1], -omega * omega * s[0]]) };
        let opts = IvpOptions::default();
        let run = |n: usize| {
            let mut s = [0.0, 1.0];
            let mut k0 = rhs(0.0, s).unwrap();
            for i in 0..n {
                let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                let (next, k, _, _) = dop853_step(&rhs, a, b, s, k0, &opts).unwrap();
                s = next;
                k0 = k;
            }
            (s[0] - omega.sin() / omega).abs()
        };
        let (e1, e2) = (run(20), run(40));
        let order = (e1 / e2).log2();
        assert!(order > 7.0, "observed order {order} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn tighter_tolerance_never_hurts() {
        let p = problem("1", "1", "0");
        let omega = 50.0f64 * 2f64.sqrt();
        let exact = omega.sin() / omega;
        let err = |rtol: f64| {
            let opts = IvpOptions { rtol, atol: rtol * 1e-2, ..IvpOptions::default() };
            (solve_ivp_with(&p, 50.0, 50.0, [0.0, 1.0], &[1.0], opts).unwrap().last().y - exact).abs()
        };
        assert!(err(1e-12) <= err(1e-6).max(1e-13));
        assert!(err(1e-12) < 1e-11);
    }
}
