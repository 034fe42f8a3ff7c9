//! Index-modulation codec.
//!
//! Every pulse carries four bit fields, consumed in this order:
//!
//! 1. phase-modulation symbols, `K` digits of base `J` (digit `k` has weight `J^k`),
//! 2. the frequency subset (`K` of `M`), ranked in the combinatorial number system
//!    (colexicographic order),
//! 3. the antenna subset (`K` of `P`), same ranking,
//! 4. the waveform-to-antenna permutation, ranked by its Lehmer code.
//!
//! Each field is a big-endian unsigned integer of `floor(log2(#choices))` bits.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::config::RadarConfig;
use crate::error::{FracError, Result};

const RANK_LIMIT: u128 = 1 << 63;

/// One pulse's transmit selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PulseSelection {
    /// Sorted active antenna indices in `[0, P)`.
    pub antennas: Vec<usize>,
    /// Sorted active frequency indices in `[0, M)`.
    pub frequencies: Vec<usize>,
    /// `perm[k]` is the position in `antennas` that transmits `frequencies[k]`.
    pub perm: Vec<usize>,
    /// PM symbol indices in `[0, J)`; symbol `j` is the phase `2πj/J`.
    pub phases: Vec<usize>,
}

impl PulseSelection {
    /// The all-rank-zero selection: first `K` antennas and frequencies, identity pairing.
    pub fn identity(k: usize) -> Self {
        Self { antennas: (0..k).collect(), frequencies: (0..k).collect(), perm: (0..k).collect(), phases: vec![0; k] }
    }

    /// `(frequency index, antenna index, phase index)` for each waveform `k`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.frequencies
            .iter()
            .zip(self.perm.iter())
            .zip(self.phases.iter())
            .map(move |((&m, &pi), &ph)| (m, self.antennas[pi], ph))
    }

    pub fn validate(&self, cfg: &RadarConfig, j: usize) -> Result<()> {
        let k = cfg.k;
        let bad = |msg: String| Err(FracError::InvalidSelection(msg));
        if self.antennas.len() != k || self.frequencies.len() != k || self.perm.len() != k || self.phases.len() != k {
            return bad(format!("every field must have K={k} entries"));
        }
        check_subset(&self.antennas, cfg.p, "antenna")?;
        check_subset(&self.frequencies, cfg.m, "frequency")?;
        let mut seen = vec![false; k];
        for &x in &self.perm {
            if x >= k || seen[x] {
                return bad(format!("perm {:?} is not a permutation of 0..{k}", self.perm));
            }
            seen[x] = true;
        }
        if let Some(&ph) = self.phases.iter().find(|&&ph| ph >= j) {
            return bad(format!("phase symbol {ph} outside [0, {j})"));
        }
        Ok(())
    }
}

fn check_subset(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    for w in idx.windows(2) {
        if w[0] >= w[1] {
            return Err(FracError::InvalidSelection(format!("{what} indices {idx:?} not strictly increasing")));
        }
    }
    if let Some(&x) = idx.last() {
        if x >= bound {
            return Err(FracError::InvalidSelection(format!("{what} index {x} outside [0, {bound})")));
        }
    }
    Ok(())
}

impl fmt::Display for PulseSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(
            f,
            "p:{} m:{} perm:{} phi:{}",
            join(&self.antennas),
            join(&self.frequencies),
            join(&self.perm),
            join(&self.phases)
        )
    }
}

impl FromStr for PulseSelection {
    type Err = FracError;

    fn from_str(line: &str) -> Result<Self> {
        let mut fields: [Option<Vec<usize>>; 4] = Default::default();
        for tok in line.split_whitespace() {
            let (key, val) =
                tok.split_once(':').ok_or_else(|| FracError::Parse(format!("expected key:value, got {tok:?}")))?;
            let slot = match key {
                "p" => 0,
                "m" => 1,
                "perm" => 2,
                "phi" => 3,
                _ => return Err(FracError::Parse(format!("unknown pulse field {key:?}"))),
            };
            let list = if val.is_empty() {
                Vec::new()
            } else {
                val.split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| FracError::Parse(format!("{key}: {e}"))))
                    .collect::<Result<Vec<_>>>()?
            };
            fields[slot] = Some(list);
        }
        let [p, m, perm, phi] = fields;
        let take =
            |f: Option<Vec<usize>>, name: &str| f.ok_or_else(|| FracError::Parse(format!("missing field {name}")));
        Ok(Self {
            antennas: take(p, "p")?,
            frequencies: take(m, "m")?,
            perm: take(perm, "perm")?,
            phases: take(phi, "phi")?,
        })
    }
}

/// Selections for all `N` pulses of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSelection {
    pub pulses: Vec<PulseSelection>,
}

impl FrameSelection {
    pub fn identity(cfg: &RadarConfig) -> Self {
        Self { pulses: vec![PulseSelection::identity(cfg.k); cfg.n] }
    }

    /// Frame produced by encoding uniformly random bits.
    pub fn random<R: Rng + ?Sized>(cfg: &RadarConfig, j: usize, rng: &mut R) -> Result<Self> {
        let total = cfg.n * bits_per_pulse(cfg.p, cfg.m, cfg.k, j)? as usize;
        let bits: Vec<bool> = (0..total).map(|_| rng.random()).collect();
        encode(&bits, cfg, j)
    }

    pub fn validate(&self, cfg: &RadarConfig, j: usize) -> Result<()> {
        if self.pulses.len() != cfg.n {
            return Err(FracError::InvalidSelection(format!(
                "frame has {} pulses, config expects {}",
                self.pulses.len(),
                cfg.n
            )));
        }
        self.pulses.iter().try_for_each(|p| p.validate(cfg, j))
    }

    /// Text form: one pulse per line.
    pub fn to_text(&self) -> String {
        self.pulses.iter().map(|p| format!("{p}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pulses = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pulses })
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n-i) is divisible by (i+1)
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).fold(1u128, |a, x| a.saturating_mul(x))
}

fn floor_log2(x: u128) -> u32 {
    if x == 0 {
        0
    } else {
        127 - x.leading_zeros()
    }
}

fn checked_count(x: u128, what: &str) -> Result<u128> {
    if x > RANK_LIMIT {
        Err(FracError::Overflow(format!("{what} has more than 2^63 choices")))
    } else {
        Ok(x)
    }
}

/// Field widths `[pm, frequency, antenna, permutation]` in bits.
pub fn field_widths(p: usize, m: usize, k: usize, j: usize) -> Result<[u32; 4]> {
    if k == 0 || k > m || k > p || j == 0 {
        return Err(FracError::InvalidConfig(format!(
            "bit budget needs 1 <= K <= min(M, P) and J >= 1 (P={p}, M={m}, K={k}, J={j})"
        )));
    }
    let pm = (0..k).try_fold(1u128, |a, _| a.checked_mul(j as u128));
    let pm = checked_count(pm.unwrap_or(u128::MAX), "PM symbol block")?;
    let freq = checked_count(binomial(m, k), "C(M,K)")?;
    let ant = checked_count(binomial(p, k), "C(P,K)")?;
    let perm = checked_count(factorial(k), "K!")?;
    Ok([floor_log2(pm), floor_log2(freq), floor_log2(ant), floor_log2(perm)])
}

/// Bits carried by one pulse.
pub fn bits_per_pulse(p: usize, m: usize, k: usize, j: usize) -> Result<u32> {
    Ok(field_widths(p, m, k, j)?.iter().sum())
}

/// Colexicographic rank of a sorted subset: `Σ_i C(c_i, i+1)`.
pub fn subset_rank(subset: &[usize]) -> u128 {
    subset.iter().enumerate().map(|(i, &c)| binomial(c, i + 1)).sum()
}

/// Inverse of [`subset_rank`] for subsets of size `k`.
pub fn subset_unrank(mut rank: u128, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for i in (0..k).rev() {
        // largest c with C(c, i+1) <= rank
        let mut c = i;
        while binomial(c + 1, i + 1) <= rank {
            c += 1;
        }
        rank -= binomial(c, i + 1);
        out[i] = c;
    }
    out
}

/// Lehmer-code rank of a permutation of `0..k` (identity has rank 0).
pub fn perm_rank(perm: &[usize]) -> u128 {
    let k = perm.len();
    let mut rank = 0u128;
    for i in 0..k {
        let smaller = perm[i + 1..].iter().filter(|&&x| x < perm[i]).count() as u128;
        rank = rank * (k - i) as u128 + smaller;
    }
    rank
}

pub fn perm_unrank(mut rank: u128, k: usize) -> Vec<usize> {
    let mut digits = vec![0usize; k];
    for i in (0..k).rev() {
        let base = (k - i) as u128;
        digits[i] = (rank % base) as usize;
        rank /= base;
    }
    let mut pool: Vec<usize> = (0..k).collect();
    digits.into_iter().map(|d| pool.remove(d)).collect()
}

fn read_field(bits: &[bool], pos: &mut usize, width: u32) -> u128 {
    let mut v = 0u128;
    for _ in 0..width {
        v = (v << 1) | bits[*pos] as u128;
        *pos += 1;
    }
    v
}

fn write_field(out: &mut Vec<bool>, value: u128, width: u32) {
    for b in (0..width).rev() {
        out.push((value >> b) & 1 == 1);
    }
}

/// Map a bit string onto a frame of `N` pulse selections.
pub fn encode(bits: &[bool], cfg: &RadarConfig, j: usize) -> Result<FrameSelection> {
    let widths = field_widths(cfg.p, cfg.m, cfg.k, j)?;
    let per_pulse: usize = widths.iter().map(|&w| w as usize).sum();
    let expected = per_pulse * cfg.n;
    if bits.len() != expected {
        return Err(FracError::LengthMismatch { expected, got: bits.len() });
    }
    let k = cfg.k;
    let mut pos = 0;
    let mut pulses = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut pm = read_field(bits, &mut pos, widths[0]);
        let phases = (0..k)
            .map(|_| {
                let d = (pm % j as u128) as usize;
                pm /= j as u128;
                d
            })
            .collect();
        let frequencies = subset_unrank(read_field(bits, &mut pos, widths[1]), k);
        let antennas = subset_unrank(read_field(bits, &mut pos, widths[2]), k);
        let perm = perm_unrank(read_field(bits, &mut pos, widths[3]), k);
        pulses.push(PulseSelection { antennas, frequencies, perm, phases });
    }
    Ok(FrameSelection { pulses })
}

/// Exact inverse of [`encode`].
pub fn decode(frame: &FrameSelection, cfg: &RadarConfig, j: usize) -> Result<Vec<bool>> {
    let widths = field_widths(cfg.p, cfg.m, cfg.k, j)?;
    frame.validate(cfg, j)?;
    let mut out = Vec::new();
    for pulse in &frame.pulses {
        let pm = pulse.phases.iter().rev().fold(0u128, |a, &d| a * j as u128 + d as u128);
        let values = [pm, subset_rank(&pulse.frequencies), subset_rank(&pulse.antennas), perm_rank(&pulse.perm)];
        for (name, (&v, &w)) in
            ["PM", "frequency", "antenna", "permutation"].iter().zip(values.iter().zip(widths.iter()))
        {
            if v >> w != 0 {
                return Err(FracError::InvalidSelection(format!("{name} rank {v} does not fit the {w}-bit field")));
            }
            write_field(&mut out, v, w);
        }
    }
    Ok(out)
}

/// Parse a hexadecimal string into `len` bits, most significant bit first.
pub fn bits_from_hex(hex: &str, len: usize) -> Result<Vec<bool>> {
    let hex = hex.trim().trim_start_matches("0x");
    let need = len.div_ceil(4);
    if hex.len() != need {
        return Err(FracError::LengthMismatch { expected: need * 4, got: hex.len() * 4 });
    }
    let mut bits = Vec::with_capacity(need * 4);
    for ch in hex.chars() {
        let d = ch.to_digit(16).ok_or_else(|| FracError::Parse(format!("invalid hex digit {ch:?}")))?;
        for b in (0..4).rev() {
            bits.push((d >> b) & 1 == 1);
        }
    }
    if bits[len..].iter().any(|&b| b) {
        return Err(FracError::Parse("non-zero padding bits after the payload".into()));
    }
    bits.truncate(len);
    Ok(bits)
}

/// Hexadecimal form of a bit string, zero-padded at the end to a whole nibble.
pub fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|c| {
            let v = (0..4).fold(0u32, |a, i| (a << 1) | c.get(i).copied().unwrap_or(false) as u32);
            char::from_digit(v, 16).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_budget_examples() {
        assert_eq!(bits_per_pulse(8, 4, 4, 2).unwrap(), 14);
        assert_eq!(bits_per_pulse(1, 1, 1, 1).unwrap(), 0);
        assert_eq!(bits_per_pulse(2, 2, 1, 2).unwrap(), 3);
        assert_eq!(field_widths(8, 4, 4, 2).unwrap(), [4, 0, 6, 4]);
    }

    #[test]
    fn bit_budget_overflow() {
        assert!(bits_per_pulse(200, 4, 4, 2).is_ok());
        assert!(matches!(bits_per_pulse(200, 100, 100, 2), Err(FracError::Overflow(_))));
    }

    #[test]
    fn all_zero_bits_give_rank_zero_objects() {
        let cfg = RadarConfig::standard();
        let frame = encode(&vec![false; 14 * cfg.n], &cfg, 2).unwrap();
        for p in &frame.pulses {
            assert_eq!(*p, PulseSelection::identity(4));
        }
    }

    #[test]
    fn colex_unrank_matches_brute_force_enumeration() {
        // enumerate all 4-subsets of 0..8 and order them colexicographically
        let mut all = Vec::new();
        for mask in 0u32..256 {
            if mask.count_ones() == 4 {
                all.push((0..8).filter(|b| mask >> b & 1 == 1).collect::<Vec<usize>>());
            }
        }
        all.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
        assert_eq!(all.len(), 70);
        for (rank, subset) in all.iter().enumerate() {
            assert_eq!(subset_unrank(rank as u128, 4), *subset);
            assert_eq!(subset_rank(subset), rank as u128);
        }
        assert_eq!(subset_unrank(69, 4), vec![4, 5, 6, 7]);
        assert_eq!(subset_rank(&[0, 1, 2, 3]), 0);
    }

    #[test]
    fn lehmer_identity_and_bijection() {
        assert_eq!(perm_rank(&[0, 1, 2, 3]), 0);
        let mut seen = std::collections::HashSet::new();
        for r in 0..24u128 {
            let p = perm_unrank(r, 4);
            assert_eq!(perm_rank(&p), r);
            assert!(seen.insert(p));
        }
    }

    #[test]
    fn length_mismatch() {
        let cfg = RadarConfig::standard();
        assert_eq!(encode(&[true; 5], &cfg, 2), Err(FracError::LengthMismatch { expected: 280, got: 5 }));
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let cfg = RadarConfig::standard();
        let mut frame = FrameSelection::identity(&cfg);
        frame.pulses[3].antennas = vec![0, 1, 2, 8];
        assert!(matches!(decode(&frame, &cfg, 2), Err(FracError::InvalidSelection(_))));
        let mut frame = FrameSelection::identity(&cfg);
        frame.pulses[0].perm = vec![0, 0, 1, 2];
        assert!(matches!(decode(&frame, &cfg, 2), Err(FracError::InvalidSelection(_))));
        // C(8,4)=70 exceeds the 6-bit field: rank 69 is a valid subset but not encodable
        let mut frame = FrameSelection::identity(&cfg);
        frame.pulses[0].antennas = vec![4, 5, 6, 7];
        assert!(matches!(decode(&frame, &cfg, 2), Err(FracError::InvalidSelection(_))));
    }

    #[test]
    fn round_trip_random_strings() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let bits: Vec<bool> = (0..14 * cfg.n).map(|_| rng.random()).collect();
            let frame = encode(&bits, &cfg, 2).unwrap();
            assert_eq!(decode(&frame, &cfg, 2).unwrap(), bits);
        }
    }

    #[test]
    fn frame_text_round_trip() {
        let cfg = RadarConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = FrameSelection::random(&cfg, 2, &mut rng).unwrap();
        assert_eq!(FrameSelection::from_text(&frame.to_text()).unwrap(), frame);
        assert_eq!(PulseSelection::identity(4).to_string(), "p:0,1,2,3 m:0,1,2,3 perm:0,1,2,3 phi:0,0,0,0");
    }

    #[test]
    fn hex_round_trip() {
        let bits = vec![true, false, true, true, false, true];
        let hex = bits_to_hex(&bits);
        assert_eq!(hex, "b4");
        assert_eq!(bits_from_hex(&hex, 6).unwrap(), bits);
        assert!(bits_from_hex("b5", 6).is_err());
    }

    proptest! {
        #[test]
        fn encode_output_is_valid_and_invertible(
            bits in proptest::collection::vec(any::<bool>(), 14 * 20),
        ) {
            let cfg = RadarConfig::standard();
            let frame = encode(&bits, &cfg, 2).unwrap();
            prop_assert!(frame.validate(&cfg, 2).is_ok());
            prop_assert_eq!(decode(&frame, &cfg, 2).unwrap(), bits);
        }

        #[test]
        fn odd_alphabets_round_trip(p in 3usize..9, m in 3usize..7, j in 1usize..6, seed in any::<u64>()) {
            let k = 3;
            let cfg = RadarConfig { p, m, k, n: 3, qr: 1, d_t: 1.0, d_r: 1.0, ..RadarConfig::standard() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = FrameSelection::random(&cfg, j, &mut rng).unwrap();
            let bits = decode(&frame, &cfg, j).unwrap();
            prop_assert_eq!(encode(&bits, &cfg, j).unwrap(), frame);
        }
    }
}
