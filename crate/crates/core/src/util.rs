//! Small numeric helpers shared across modules (crate-private).

/// Neumaier-compensated accumulator: like Kahan summation but also correct
/// when the addend exceeds the running sum in magnitude. Used wherever many
/// same-sign or cancelling terms are reduced (MMD pair sums, weight
/// normalisation), keeping the error independent of the term count.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice.
#[inline]
pub(crate) fn sum_compensated(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.total()
}
