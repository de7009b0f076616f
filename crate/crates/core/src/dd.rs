//! Double-double arithmetic and a scaled variant with an explicit binary
//! exponent.
//!
//! The spectral sums evaluated in this crate are alternating series whose
//! terms span hundreds of orders of magnitude (factorial ratios against
//! geometrically small invariant weights). Plain `f64` loses them to
//! overflow long before it loses them to cancellation, so the crate carries
//! such sums as [`Sdd`] values: a double-double mantissa in `[1, 2)` times a
//! power of two. This gives ~31 significant digits over an essentially
//! unbounded exponent range, which is enough for every tolerance the
//! verification suites pin.
//!
//! The error-free transformations are the classical ones (Knuth two-sum,
//! FMA two-product, Dekker-style renormalization).

/// Unevaluated sum of two doubles, `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // requires |a| >= |b|
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, other: f64) -> Dd {
        let (s, e) = two_sum(self.hi, other);
        let e = e + self.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, other: f64) -> Dd {
        let (p, e) = two_prod(self.hi, other);
        let e = e + self.lo * other;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r2 = r.sub(other.mul_f64(q2));
        let q3 = r2.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add_f64(q3)
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }
}

/// Multiply by an exact power of two, splitting the shift so no
/// intermediate over/underflows.
pub fn ldexp(x: f64, e: i64) -> f64 {
    if x == 0.0 || e == 0 {
        return x;
    }
    let mut v = x;
    let mut rem = e;
    while rem != 0 {
        let step = rem.clamp(-1000, 1000);
        v *= 2f64.powi(step as i32);
        if v == 0.0 || v.is_infinite() {
            return v;
        }
        rem -= step;
    }
    v
}

/// Signed scaled double-double: `m * 2^e` with `|m.hi| ∈ [1, 2)` or zero.
#[derive(Debug, Clone, Copy)]
pub struct Sdd {
    m: Dd,
    e: i64,
}

const LN2_HI: f64 = 0.693_147_180_559_945_3;
const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;

impl Sdd {
    pub const ZERO: Sdd = Sdd { m: Dd::ZERO, e: 0 };
    pub const ONE: Sdd = Sdd { m: Dd::ONE, e: 0 };

    fn normalized(m: Dd, e: i64) -> Sdd {
        if m.hi == 0.0 {
            return Sdd::ZERO;
        }
        let bits = m.hi.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let k = if biased == 0 {
            // subnormal mantissa; rescale into the normal range first
            m.hi.abs().log2().floor() as i64
        } else {
            biased - 1023
        };
        let scale = ldexp(1.0, -k);
        Sdd {
            m: Dd {
                hi: m.hi * scale,
                lo: m.lo * scale,
            },
            e: e + k,
        }
    }

    pub fn from_f64(x: f64) -> Sdd {
        Sdd::normalized(Dd::from_f64(x), 0)
    }

    pub fn from_u64(x: u64) -> Sdd {
        // split so both halves are exact in f64
        let hi = (x >> 32) as f64 * 4294967296.0;
        let lo = (x & 0xffff_ffff) as f64;
        Sdd::normalized(Dd::from_f64(hi).add_f64(lo), 0)
    }

    /// Build `±exp(ln_abs)` from a natural-log magnitude.
    pub fn from_ln(sign: f64, ln_abs: f64) -> Sdd {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            return Sdd::ZERO;
        }
        let e = (ln_abs / LN2_HI).floor();
        let r = Dd::from_f64(ln_abs)
            .sub(Dd::from_f64(e).mul(Dd {
                hi: LN2_HI,
                lo: LN2_LO,
            }))
            .to_f64();
        let m = r.exp() * sign.signum();
        Sdd::normalized(Dd::from_f64(m), e as i64)
    }

    pub fn is_zero(self) -> bool {
        self.m.hi == 0.0
    }

    pub fn neg(self) -> Sdd {
        Sdd {
            m: self.m.neg(),
            e: self.e,
        }
    }

    pub fn abs(self) -> Sdd {
        Sdd {
            m: self.m.abs(),
            e: self.e,
        }
    }

    pub fn mul(self, other: Sdd) -> Sdd {
        if self.is_zero() || other.is_zero() {
            return Sdd::ZERO;
        }
        Sdd::normalized(self.m.mul(other.m), self.e + other.e)
    }

    pub fn mul_f64(self, x: f64) -> Sdd {
        if self.is_zero() || x == 0.0 {
            return Sdd::ZERO;
        }
        Sdd::normalized(self.m.mul_f64(x), self.e)
    }

    pub fn div(self, other: Sdd) -> Sdd {
        assert!(!other.is_zero(), "Sdd division by zero");
        if self.is_zero() {
            return Sdd::ZERO;
        }
        Sdd::normalized(self.m.div(other.m), self.e - other.e)
    }

    pub fn add(self, other: Sdd) -> Sdd {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.e >= other.e {
            (self, other)
        } else {
            (other, self)
        };
        let shift = small.e - big.e;
        if shift < -120 {
            return big;
        }
        let scale = ldexp(1.0, shift);
        let aligned = Dd {
            hi: small.m.hi * scale,
            lo: small.m.lo * scale,
        };
        Sdd::normalized(big.m.add(aligned), big.e)
    }

    pub fn sub(self, other: Sdd) -> Sdd {
        self.add(other.neg())
    }

    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.e > 1030 {
            return f64::INFINITY * self.m.hi.signum();
        }
        if self.e < -1080 {
            return 0.0;
        }
        ldexp(self.m.hi, self.e) + ldexp(self.m.lo, self.e)
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn ln_abs(self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let m = self.m.abs();
        // ln(m) + e*ln(2), with the exponent part in double-double
        let lnm = m.hi.ln() + m.lo / m.hi;
        let e2 = Dd::from_f64(self.e as f64).mul(Dd {
            hi: LN2_HI,
            lo: LN2_LO,
        });
        e2.add_f64(lnm).to_f64()
    }

    pub fn signum(self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.m.hi.signum()
        }
    }

    /// Compare magnitudes.
    pub fn abs_cmp(self, other: Sdd) -> std::cmp::Ordering {
        if self.is_zero() || other.is_zero() {
            return self
                .is_zero()
                .cmp(&other.is_zero())
                .reverse()
                .then(std::cmp::Ordering::Equal);
        }
        self.e
            .cmp(&other.e)
            .then_with(|| self.m.hi.abs().partial_cmp(&other.m.hi.abs()).unwrap())
    }

    pub fn powi(self, mut k: u32) -> Sdd {
        let mut base = self;
        let mut acc = Sdd::ONE;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            k >>= 1;
        }
        acc
    }
}

/// Sum signed terms smallest-magnitude first.
pub fn sum_sorted(terms: &mut [Sdd]) -> Sdd {
    terms.sort_unstable_by(|a, b| a.abs_cmp(*b));
    terms.iter().fold(Sdd::ZERO, |acc, t| acc.add(*t))
}

use std::sync::OnceLock;

const FACTORIAL_CAP: usize = 4096;

fn factorial_table() -> &'static Vec<Sdd> {
    static TABLE: OnceLock<Vec<Sdd>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(FACTORIAL_CAP + 1);
        t.push(Sdd::ONE);
        for n in 1..=FACTORIAL_CAP {
            let prev = t[n - 1];
            t.push(prev.mul_f64(n as f64));
        }
        t
    })
}

/// `n!` as a scaled double-double. Panics beyond the internal cap (4096),
/// which is far above any truncation the crate accepts.
pub fn factorial(n: usize) -> Sdd {
    factorial_table()[n]
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> Sdd {
    if k > n {
        return Sdd::ZERO;
    }
    factorial(n).div(factorial(k).mul(factorial(n - k)))
}

/// Falling factorial `n (n-1) ... (n-k+1)`, zero when `k > n`.
///
/// Built by direct product so `n` is not limited by the factorial table
/// (scaling-limit checks evaluate it at `n` in the tens of thousands).
pub fn falling(n: usize, k: usize) -> Sdd {
    if k > n {
        return Sdd::ZERO;
    }
    let mut acc = Sdd::ONE;
    for j in 0..k {
        acc = acc.mul_f64((n - j) as f64);
    }
    acc
}
