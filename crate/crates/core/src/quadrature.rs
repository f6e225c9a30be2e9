//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets the requested tolerance or the subdivision budget runs out.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::Result;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5]` and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integral estimate with its absolute error bound.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl std::ops::Add for Quadrature {
    type Output = Quadrature;

    fn add(self, other: Quadrature) -> Quadrature {
        Quadrature {
            value: self.value + other.value,
            error: self.error + other.error,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

/// One Gauss–Kronrod 7/15 panel on `[a, b]`.
pub fn gauss_kronrod_15<F>(f: &mut F, a: f64, b: f64) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(centre - dx)? + f(centre + dx)?;
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Ok(Quadrature {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        evaluations: 15,
    })
}

struct Panel {
    a: f64,
    b: f64,
    estimate: Quadrature,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.estimate.error == other.estimate.error
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
        self.estimate.error.total_cmp(&other.estimate.error)
    }
}

/// Integrate `f` over `[a, b]` to `max(absolute, relative * |I|)`.
///
/// Stops after `max_subdivisions` bisections and returns the best estimate;
/// the caller should inspect `error`.
///
/// ```
/// use datamarket::quadrature::integrate;
/// let q = integrate(|x: f64| Ok(x * x), 0.0, 3.0, 1e-12, 0.0, 50).unwrap();
/// assert!((q.value - 9.0).abs() < 1e-12);
/// ```
pub fn integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    relative: f64,
    absolute: f64,
    max_subdivisions: usize,
) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Quadrature::default());
    }
    let first = gauss_kronrod_15(&mut f, a, b)?;
    let mut evaluations = first.evaluations;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        estimate: first,
    });
    let (mut value, mut error) = (first.value, first.error);
    for _ in 0..max_subdivisions {
        if error <= absolute.max(relative * value.abs()) {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gauss_kronrod_15(&mut f, worst.a, mid)?;
        let right = gauss_kronrod_15(&mut f, mid, worst.b)?;
        evaluations += left.evaluations + right.evaluations;
        value += left.value + right.value - worst.estimate.value;
        error += left.error + right.error - worst.estimate.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            estimate: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            estimate: right,
        });
    }
    // re-sum to shed the drift of the running updates
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| {
        (v + p.estimate.value, e + p.estimate.error)
    });
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}
