//! Words over a finite alphabet, periodic and eventually periodic symbol
//! sequences, ergodic sums, and the empirical bounded-distortion constant.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ifs_geometry::IfsSystem;
use crate::thermodynamics::Potential;

pub const MAX_ALPHABET: usize = 64;
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

/// A finite word. Symbols are validated against an alphabet size at the
/// points where an alphabet is known.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>, alphabet: usize) -> Result<Self> {
        check_alphabet(alphabet)?;
        if let Some(&s) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::InvalidWord(format!(
                "symbol {s} out of range for alphabet size {alphabet}"
            )));
        }
        Ok(Word(symbols))
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Parses a word written as digits (`"0101"`), or as comma or dot
    /// separated integers (`"10.3.0"`) for alphabets wider than ten.
    pub fn parse(text: &str, alphabet: usize) -> Result<Self> {
        let text = text.trim();
        let symbols: Option<Vec<u8>> = if text.contains(['.', ',']) {
            text.split(['.', ',']).map(|s| s.trim().parse::<u8>().ok()).collect()
        } else {
            text.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect()
        };
        let symbols = symbols.ok_or_else(|| Error::InvalidWord(format!("cannot parse {text:?}")))?;
        Word::new(symbols, alphabet)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn repeat(&self, times: usize) -> Word {
        Word(self.0.repeat(times))
    }

    pub fn push(&mut self, symbol: u8) {
        self.0.push(symbol);
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    /// Number of distinct symbols.
    pub fn distinct_symbols(&self) -> usize {
        let mut seen = 0u64;
        for &s in &self.0 {
            seen |= 1 << s;
        }
        seen.count_ones() as usize
    }

    /// Base-`alphabet` integer value, most significant symbol first.
    pub fn index(&self, alphabet: usize) -> usize {
        self.0.iter().fold(0, |acc, &s| acc * alphabet + s as usize)
    }

    pub fn from_index(mut index: usize, len: usize, alphabet: usize) -> Word {
        let mut v = vec![0u8; len];
        for slot in v.iter_mut().rev() {
            *slot = (index % alphabet) as u8;
            index /= alphabet;
        }
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&s| s < 10) {
            for s in &self.0 {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// The infinite periodic sequence with a given nonempty period block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PeriodicWord(Word);

impl PeriodicWord {
    pub fn new(period: Word) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidWord("period block must be nonempty".into()));
        }
        Ok(PeriodicWord(period))
    }

    pub fn period(&self) -> &Word {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, i: usize) -> u8 {
        self.0 .0[i % self.0.len()]
    }

    /// Block of the shifted sequence `σ^k w̄`.
    pub fn rotate(&self, k: usize) -> PeriodicWord {
        let n = self.0.len();
        let k = k % n;
        let mut v = self.0 .0[k..].to_vec();
        v.extend_from_slice(&self.0 .0[..k]);
        PeriodicWord(Word(v))
    }

    /// The single repeated symbol, if the period is constant.
    pub fn constant_symbol(&self) -> Option<u8> {
        let first = self.0 .0[0];
        self.0 .0.iter().all(|&s| s == first).then_some(first)
    }
}

/// An eventually periodic sequence `prefix · tail̄`. Every point of the
/// attractor that the toolkit manipulates is addressed this way.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    prefix: Word,
    tail: PeriodicWord,
}

impl Sequence {
    pub fn new(prefix: Word, tail: PeriodicWord) -> Self {
        Sequence { prefix, tail }
    }

    pub fn periodic(tail: PeriodicWord) -> Self {
        Sequence {
            prefix: Word::empty(),
            tail,
        }
    }

    pub fn prefix(&self) -> &Word {
        &self.prefix
    }

    pub fn tail(&self) -> &PeriodicWord {
        &self.tail
    }

    pub fn symbol(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            self.prefix.0[i]
        } else {
            self.tail.symbol(i - self.prefix.len())
        }
    }

    /// `ω|ₙ`.
    pub fn head(&self, n: usize) -> Word {
        Word((0..n).map(|i| self.symbol(i)).collect())
    }

    /// `σⁿω`.
    pub fn shift(&self, n: usize) -> Sequence {
        if n <= self.prefix.len() {
            Sequence {
                prefix: Word(self.prefix.0[n..].to_vec()),
                tail: self.tail.clone(),
            }
        } else {
            Sequence::periodic(self.tail.rotate(n - self.prefix.len()))
        }
    }

    /// If the sequence ends in `a^∞`, returns `a` and the index from which
    /// the sequence is constant.
    pub fn eventually_constant(&self) -> Option<(u8, usize)> {
        let a = self.tail.constant_symbol()?;
        let start = self.prefix.0.iter().rposition(|&s| s != a).map_or(0, |p| p + 1);
        Some((a, start))
    }

    pub fn max_symbol(&self) -> u8 {
        self.prefix
            .0
            .iter()
            .chain(self.tail.0 .0.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.prefix, self.tail.0)
    }
}

pub(crate) fn check_alphabet(alphabet: usize) -> Result<()> {
    if !(2..=MAX_ALPHABET).contains(&alphabet) {
        return Err(Error::InvalidWord(format!(
            "alphabet size {alphabet} outside [2, {MAX_ALPHABET}]"
        )));
    }
    Ok(())
}

/// Number of words of length `depth`, or a capacity error.
pub fn word_count(alphabet: usize, depth: usize, cap: u64) -> Result<usize> {
    let too_many = Error::Capacity { alphabet, depth, cap };
    let d = u32::try_from(depth).map_err(|_| too_many.clone())?;
    match (alphabet as u64).checked_pow(d) {
        Some(c) if c <= cap => Ok(c as usize),
        _ => Err(too_many),
    }
}

/// Lexicographic iterator over all words of a fixed length.
#[derive(Debug, Clone)]
pub struct WordIter {
    alphabet: u8,
    current: Option<Vec<u8>>,
}

impl Iterator for WordIter {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] + 1 < self.alphabet {
                next[i] += 1;
                self.current = Some(next);
                break;
            }
            next[i] = 0;
        }
        Some(Word(out))
    }
}

pub fn enumerate_words(alphabet: usize, depth: usize) -> Result<WordIter> {
    enumerate_words_capped(alphabet, depth, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_words_capped(alphabet: usize, depth: usize, cap: u64) -> Result<WordIter> {
    check_alphabet(alphabet)?;
    word_count(alphabet, depth, cap)?;
    Ok(WordIter {
        alphabet: alphabet as u8,
        current: Some(vec![0; depth]),
    })
}

pub fn lex_compare(u: &Word, v: &Word) -> Result<Ordering> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.0.cmp(&v.0))
}

/// `Sₙψ(w̄)`.
pub fn ergodic_sum(psi: &Potential, w: &PeriodicWord, n: usize) -> Result<f64> {
    psi.ergodic_sum_at(&Sequence::periodic(w.clone()), n)
}

/// Empirical bounded-distortion constant at depth `n`: the largest
/// `|Sₙψ(wρ) − Sₙψ(wτ)|` over every word `w` of length `n` and
/// `sample_budget` continuation pairs. The first pair is always the two
/// constant sequences on the extreme symbols; the rest are random periodic
/// sequences drawn from a fixed seed, so the same pairs are used at every `n`.
pub fn distortion_bound(psi: &Potential, ifs: &IfsSystem, n: usize, sample_budget: usize) -> Result<f64> {
    let pairs = continuation_pairs(ifs.alphabet(), sample_budget.max(1));
    distortion_over(psi, ifs.alphabet(), n, &pairs)
}

/// Distortion over explicit continuation pairs.
pub fn distortion_over(
    psi: &Potential,
    alphabet: usize,
    n: usize,
    pairs: &[(PeriodicWord, PeriodicWord)],
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition {
            module: "symbolic",
            message: "distortion depth must be at least 1".into(),
        });
    }
    let mut worst: f64 = 0.0;
    for w in enumerate_words(alphabet, n)? {
        for (rho, tau) in pairs {
            let a = psi.ergodic_sum_at(&Sequence::new(w.clone(), rho.clone()), n)?;
            let b = psi.ergodic_sum_at(&Sequence::new(w.clone(), tau.clone()), n)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn continuation_pairs(alphabet: usize, budget: usize) -> Vec<(PeriodicWord, PeriodicWord)> {
    let constant = |s: u8| PeriodicWord(Word(vec![s]));
    let mut pairs = vec![(constant(0), constant((alphabet - 1) as u8))];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d157);
    let random_word = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=6);
        PeriodicWord(Word((0..len).map(|_| rng.gen_range(0..alphabet) as u8).collect()))
    };
    while pairs.len() < budget {
        let a = random_word(&mut rng);
        let b = random_word(&mut rng);
        pairs.push((a, b));
    }
    pairs
}
