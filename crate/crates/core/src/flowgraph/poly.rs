use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Number of gain symbols `k_0..k_12`; index 0 is unused.
pub const SYMBOLS: usize = 13;

type Monomial = [u8; SYMBOLS];

/// Polynomial with integer coefficients in the gain symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Monomial, i64>,
}

impl Poly {
    /// The symbol `k_i`.
    pub fn var(i: usize) -> Self {
        let mut m = [0u8; SYMBOLS];
        m[i] = 1;
        Self {
            terms: BTreeMap::from([(m, 1)]),
        }
    }

    pub fn constant(c: i64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0 {
            terms.insert([0u8; SYMBOLS], c);
        }
        Self { terms }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, k: &[f64; SYMBOLS]) -> f64 {
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.iter()
                    .enumerate()
                    .fold(c as f64, |acc, (i, &e)| acc * k[i].powi(e as i32))
            })
            .sum()
    }

    fn insert(terms: &mut BTreeMap<Monomial, i64>, m: Monomial, c: i64) {
        let entry = terms.entry(m).or_insert(0);
        *entry += c;
        if *entry == 0 {
            terms.remove(&m);
        }
    }
}

impl From<i32> for Poly {
    fn from(c: i32) -> Self {
        Poly::constant(c as i64)
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (m, c) in rhs.terms {
            Poly::insert(&mut self.terms, m, c);
        }
        self
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(mut self) -> Poly {
        for c in self.terms.values_mut() {
            *c = -*c;
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut terms = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                let mut m = *a;
                for i in 0..SYMBOLS {
                    m[i] += b[i];
                }
                Poly::insert(&mut terms, m, ca * cb);
            }
        }
        Poly { terms }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (m, c)) in self.terms.iter().enumerate() {
            match (n, *c < 0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let factors: Vec<String> = m
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { format!("k{i}") } else { format!("k{i}^{e}") })
                .collect();
            let mag = c.abs();
            match (mag, factors.is_empty()) {
                (_, true) => write!(f, "{mag}")?,
                (1, false) => write!(f, "{}", factors.join("*"))?,
                _ => write!(f, "{mag}*{}", factors.join("*"))?,
            }
        }
        Ok(())
    }
}
