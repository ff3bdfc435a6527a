use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Gray-mapped square QAM constellation with unit average symbol power.
///
/// QPSK maps bit pair `b0 b1` to `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`, so
/// `00` lands on `(+1/sqrt2, +1/sqrt2)`. 16-QAM uses two bits per axis: the
/// first selects the sign (0 positive) and the second the amplitude
/// (0 inner, 1 outer), levels `{1, 3} / sqrt(10)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
    Qam16,
}

impl Constellation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    fn bits_per_axis(self) -> usize {
        self.bits_per_symbol() / 2
    }

    fn axis_scale(self) -> f64 {
        match self {
            Constellation::Qpsk => std::f64::consts::FRAC_1_SQRT_2,
            Constellation::Qam16 => 1.0 / 10f64.sqrt(),
        }
    }

    fn axis_level(self, bits: &[u8]) -> f64 {
        let sign = if bits[0] == 0 { 1.0 } else { -1.0 };
        let amp = match self {
            Constellation::Qpsk => 1.0,
            Constellation::Qam16 => {
                if bits[1] == 0 {
                    1.0
                } else {
                    3.0
                }
            }
        };
        sign * amp * self.axis_scale()
    }

    fn axis_bits(self, x: f64, out: &mut Vec<u8>) {
        out.push(u8::from(x < 0.0));
        if self == Constellation::Qam16 {
            out.push(u8::from(x.abs() > 2.0 * self.axis_scale()));
        }
    }

    /// All constellation points, indexed by the symbol's bits read MSB first.
    pub fn points<T: Real>(self) -> Vec<Complex<T>> {
        let bps = self.bits_per_symbol();
        (0..self.order())
            .map(|idx| {
                let bits: Vec<u8> = (0..bps)
                    .map(|b| ((idx >> (bps - 1 - b)) & 1) as u8)
                    .collect();
                self.map_symbol(&bits)
            })
            .collect()
    }

    fn map_symbol<T: Real>(self, bits: &[u8]) -> Complex<T> {
        let h = self.bits_per_axis();
        Complex::new(
            T::lit(self.axis_level(&bits[..h])),
            T::lit(self.axis_level(&bits[h..])),
        )
    }

    /// Maps a bit sequence onto constellation symbols.
    pub fn modulate<T: Real>(self, bits: &[u8]) -> Result<Vec<Complex<T>>> {
        let bps = self.bits_per_symbol();
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::invalid(format!(
                "{} bits is not a multiple of {bps} bits per symbol",
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
        }
        Ok(bits.chunks_exact(bps).map(|c| self.map_symbol(c)).collect())
    }

    /// Hard-decision demodulation (nearest constellation point).
    pub fn demodulate<T: Real>(self, symbols: &[Complex<T>]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            self.axis_bits(s.re.as_f64(), &mut out);
            self.axis_bits(s.im.as_f64(), &mut out);
        }
        out
    }

    /// Ideal constellation point closest to `s`.
    pub fn decide<T: Real>(self, s: Complex<T>) -> Complex<T> {
        let mut bits = Vec::with_capacity(self.bits_per_symbol());
        self.axis_bits(s.re.as_f64(), &mut bits);
        self.axis_bits(s.im.as_f64(), &mut bits);
        self.map_symbol(&bits)
    }
}
