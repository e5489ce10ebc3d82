//! Adaptive Gauss–Kronrod quadrature over finite intervals.
//!
//! A 7-point Gauss / 15-point Kronrod pair scores each subinterval; the
//! subinterval with the largest error estimate is bisected until the combined
//! estimate meets the requested tolerance or the subdivision budget runs out.
//! Callers integrating over half-lines apply their own change of variables
//! first (see the asymptotic-risk module) and pass known awkward points —
//! breakpoints, kernel modes — as initial split locations so the first
//! partition already isolates them.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

/// Compensated (Kahan) accumulator for long sums.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn new() -> Self {
        Kahan::default()
    }

    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum
    }
}

/// Outcome of a numerical integration: the value together with how hard the
/// integrator worked and how much it thinks the value can be off.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QuadratureReport {
    /// Estimated integral value.
    pub value: f64,
    /// Estimated absolute error (conservative, from the Gauss/Kronrod gap).
    pub abs_error_estimate: f64,
    /// Number of interval bisections performed.
    pub subdivisions: usize,
    /// Which evaluation route produced the value.
    pub method: String,
}

/// Abscissae of the 15-point Kronrod rule on [−1, 1]: the odd-indexed entries
/// are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

/// Weights of the embedded 7-point Gauss rule.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Weights of the 15-point Kronrod rule.
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

/// One scored subinterval: Kronrod value plus error estimate.
#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap by error estimate; NaN sorts last so it never blocks
        // refinement of healthy panels.
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(std::cmp::Ordering::Less)
    }
}

/// QUADPACK's error rescaling: the raw |Kronrod − Gauss| gap is sharpened by
/// a 1.5-power law against the scale of the integrand's variation, and
/// floored at machine noise relative to the absolute integral.
fn rescale_error(err: f64, result_abs: f64, result_asc: f64) -> f64 {
    let mut err = err.abs();
    if result_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / result_asc).powf(1.5);
        err = if scale < 1.0 {
            result_asc * scale
        } else {
            result_asc
        };
    }
    let min_val = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if result_abs > min_val {
        err = err.max(50.0 * f64::EPSILON * result_abs);
    }
    err
}

/// Evaluate the G7/K15 pair on [lo, hi].
fn qk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let f_center = f(center);
    let mut result_gauss = WG[3] * f_center;
    let mut result_kronrod = WGK[7] * f_center;
    let mut result_abs = result_kronrod.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = f_center;

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        let fsum = f1 + f2;
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * fsum;
        }
        result_kronrod += WGK[j] * fsum;
        result_abs += WGK[j] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * result_kronrod;
    let mut result_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let value = result_kronrod * half;
    let error = rescale_error(
        (result_kronrod - result_gauss) * half,
        result_abs * half.abs(),
        result_asc * half.abs(),
    );
    Panel {
        lo,
        hi,
        value,
        error,
    }
}

/// Adaptively integrate `f` over `[lo, hi]`.
///
/// Refinement stops once the summed error estimate drops below
/// `max(abs_tol, rel_tol·|value|)`. `initial_splits` seeds the partition —
/// points outside `(lo, hi)` are ignored. Exhausting `max_subdivisions`
/// without meeting the tolerance yields [`Error::NonConvergence`] carrying
/// the best value and its error bound so callers can decide for themselves.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
    initial_splits: &[f64],
) -> Result<QuadratureReport> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::domain(format!(
            "integration interval must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(abs_tol >= 0.0 && rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0) {
        return Err(Error::domain(
            "at least one of abs_tol, rel_tol must be positive",
        ));
    }

    let mut cuts: Vec<f64> = initial_splits
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut start = lo;
    for &c in cuts.iter().chain(std::iter::once(&hi)) {
        heap.push(qk15(&f, start, c));
        start = c;
    }

    let mut subdivisions = 0usize;
    loop {
        let mut value = Kahan::new();
        let mut err_total = 0.0f64;
        for p in heap.iter() {
            value.add(p.value);
            err_total += p.error;
        }
        let value = value.total();
        let target = abs_tol.max(rel_tol * value.abs());
        if err_total <= target {
            return Ok(QuadratureReport {
                value,
                abs_error_estimate: err_total,
                subdivisions,
                method: "adaptive-gk15".to_string(),
            });
        }
        if subdivisions >= max_subdivisions {
            return Err(Error::NonConvergence {
                what: format!(
                    "adaptive quadrature on [{lo:.6e}, {hi:.6e}]: \
                     error {err_total:.3e} above target {target:.3e} \
                     after {subdivisions} subdivisions"
                ),
                value,
                error_bound: err_total,
            });
        }

        let worst = heap.pop().expect("heap cannot be empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        // Below ulp resolution bisection produces an empty half; treat the
        // panel as final rather than looping forever.
        if mid <= worst.lo || mid >= worst.hi {
            let mut frozen = worst;
            frozen.error = 0.0;
            heap.push(frozen);
            subdivisions += 1;
            continue;
        }
        heap.push(qk15(&f, worst.lo, mid));
        heap.push(qk15(&f, mid, worst.hi));
        subdivisions += 1;
    }
}
