//! Adaptive Gauss–Kronrod (7/15) quadrature with global interval bisection.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use thiserror::Error;

// Kronrod abscissae (positive half, descending); odd indices are the Gauss points.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError<E> {
    #[error("quadrature did not converge: estimate {value} with error {error} after {intervals} intervals")]
    NotConverged { value: f64, error: f64, intervals: usize },
    #[error(transparent)]
    Integrand(E),
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-14, rel: 1e-12, max_intervals: 2000 }
    }
}

/// One 15-point Kronrod panel: (integral, error estimate).
pub fn gk15<F, E>(f: &F, a: f64, b: f64) -> Result<(f64, f64), E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx)? + f(center + dx)?;
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

/// Integrate `f` over `[a, b]`, bisecting the worst panel until the summed error
/// estimate meets `max(tol.abs, tol.rel * |I|)`.
pub fn integrate<F, E>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64), QuadratureError<E>>
where
    F: Fn(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (value, error) = gk15(&f, a, b).map_err(QuadratureError::Integrand)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    loop {
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok((total, total_err));
        }
        if heap.len() >= tol.max_intervals {
            return Err(QuadratureError::NotConverged { value: total, error: total_err, intervals: heap.len() });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel cannot be split further in floating point
            return Err(QuadratureError::NotConverged { value: total, error: total_err, intervals: heap.len() + 1 });
        }
        let (lv, le) = gk15(&f, worst.a, mid).map_err(QuadratureError::Integrand)?;
        let (rv, re) = gk15(&f, mid, worst.b).map_err(QuadratureError::Integrand)?;
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, error: re });
        // re-sum to keep the running totals from drifting
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
}
