//! Rate-1/3 parallel concatenated convolutional (turbo) code built from two
//! (13, 15) octal RSC encoders, decoded iteratively with SOVA.
//!
//! LLRs follow `L = ln P(b = 0) / P(b = 1)`, so positive means bit 0 and the
//! matching BPSK symbol is `1 - 2b`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const BLOCK_LEN: usize = 512;
pub const MEMORY: usize = 3;
pub const NUM_STATES: usize = 1 << MEMORY;
pub const TAIL_BITS: usize = 2 * MEMORY;
pub const CODEWORD_LEN: usize = 3 * BLOCK_LEN + TAIL_BITS;
pub const ITERATIONS: usize = 5;
pub const EXTRINSIC_SCALE: f64 = 0.7;
pub const INTERLEAVER_SEED: u64 = 0xC0DE;
/// Soft-output magnitude assigned when no competing path disagrees.
const MAX_RELIABILITY: f64 = 1e6;

/// State is the register `[a_{k-1}, a_{k-2}, a_{k-3}]` packed MSB-first.
/// Feedback 13 (1 + D^2 + D^3), feedforward 15 (1 + D + D^3).
#[derive(Debug, Clone)]
pub struct Trellis {
    /// `next[s][u]`
    next: [[usize; 2]; NUM_STATES],
    /// parity bit on the branch leaving `s` with input `u`
    parity: [[u8; 2]; NUM_STATES],
    /// input that drives `s` toward the zero state
    flush: [u8; NUM_STATES],
    /// `(prev_state, input)` pairs entering each state
    prev: [[(usize, u8); 2]; NUM_STATES],
}

impl Default for Trellis {
    fn default() -> Self {
        Self::new()
    }
}

impl Trellis {
    pub fn new() -> Self {
        let mut next = [[0; 2]; NUM_STATES];
        let mut parity = [[0; 2]; NUM_STATES];
        let mut flush = [0; NUM_STATES];
        let mut prev = [[(0, 0); 2]; NUM_STATES];
        let mut fill = [0usize; NUM_STATES];
        for s in 0..NUM_STATES {
            let a1 = ((s >> 2) & 1) as u8;
            let a2 = ((s >> 1) & 1) as u8;
            let a3 = (s & 1) as u8;
            let fb = a2 ^ a3;
            flush[s] = fb;
            for u in 0..2u8 {
                let a = u ^ fb;
                let ns = ((a as usize) << 2) | ((a1 as usize) << 1) | a2 as usize;
                next[s][u as usize] = ns;
                parity[s][u as usize] = a ^ a1 ^ a3;
                prev[ns][fill[ns]] = (s, u);
                fill[ns] += 1;
            }
        }
        debug_assert!(fill.iter().all(|&f| f == 2));
        Self {
            next,
            parity,
            flush,
            prev,
        }
    }

    /// Encodes from the zero state. Returns parity bits and the final state.
    pub fn encode(&self, bits: &[u8]) -> (Vec<u8>, usize) {
        let mut s = 0;
        let parity = bits
            .iter()
            .map(|&u| {
                let p = self.parity[s][u as usize];
                s = self.next[s][u as usize];
                p
            })
            .collect();
        (parity, s)
    }

    /// Tail (systematic, parity) pairs that return `state` to zero.
    pub fn terminate(&self, mut state: usize) -> Vec<(u8, u8)> {
        (0..MEMORY)
            .map(|_| {
                let u = self.flush[state];
                let p = self.parity[state][u as usize];
                state = self.next[state][u as usize];
                (u, p)
            })
            .collect()
    }
}

/// Fixed pseudorandom permutation: `out[i] = in[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut inverse = vec![0; len];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Self { perm, inverse }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.inverse.iter().map(|&i| x[i]).collect()
    }
}

/// Soft-output Viterbi decoding of one RSC component code.
///
/// `sys`, `par` and `apriori` are LLRs for each trellis step; `apriori` only
/// covers the first `apriori.len()` steps (information bits). A terminated
/// code must end in state 0. Returns soft outputs for the information bits.
pub fn sova(trellis: &Trellis, sys: &[f64], par: &[f64], apriori: &[f64], terminated: bool) -> Vec<f64> {
    let steps = sys.len();
    let info = apriori.len();
    const NEG: f64 = f64::NEG_INFINITY;

    let mut metric = [NEG; NUM_STATES];
    metric[0] = 0.0;
    // survivor input and predecessor per (step, state); delta = metric gap
    let mut surv_prev = vec![[0usize; NUM_STATES]; steps];
    let mut surv_bit = vec![[0u8; NUM_STATES]; steps];
    let mut delta = vec![[0f64; NUM_STATES]; steps];

    for k in 0..steps {
        let la = if k < info { apriori[k] } else { 0.0 };
        let ls = 0.5 * (la + sys[k]);
        let lp = 0.5 * par[k];
        let mut next = [NEG; NUM_STATES];
        for ns in 0..NUM_STATES {
            let mut cand = [(NEG, 0usize, 0u8); 2];
            for (c, &(ps, u)) in cand.iter_mut().zip(&trellis.prev[ns]) {
                let xu = if u == 0 { ls } else { -ls };
                let xp = if trellis.parity[ps][u as usize] == 0 { lp } else { -lp };
                *c = (metric[ps] + xu + xp, ps, u);
            }
            let (best, other) = if cand[0].0 >= cand[1].0 {
                (cand[0], cand[1])
            } else {
                (cand[1], cand[0])
            };
            next[ns] = best.0;
            surv_prev[k][ns] = best.1;
            surv_bit[k][ns] = best.2;
            delta[k][ns] = if other.0 == NEG { f64::INFINITY } else { best.0 - other.0 };
        }
        metric = next;
    }

    let end = if terminated {
        0
    } else {
        (0..NUM_STATES)
            .max_by(|&a, &b| metric[a].total_cmp(&metric[b]))
            .expect("non-empty state set")
    };

    // ML path: path_state[k] is the state after step k
    let mut path_state = vec![0usize; steps + 1];
    let mut bits = vec![0u8; steps];
    path_state[steps] = end;
    for k in (0..steps).rev() {
        let s = path_state[k + 1];
        bits[k] = surv_bit[k][s];
        path_state[k] = surv_prev[k][s];
    }

    let mut rel = vec![f64::INFINITY; steps];
    for k in 0..steps {
        let s = path_state[k + 1];
        let d = delta[k][s];
        if !d.is_finite() {
            continue;
        }
        // the discarded branch into s at step k
        let &(mut cs, cu) = trellis.prev[s]
            .iter()
            .find(|&&(ps, u)| !(ps == path_state[k] && u == bits[k]))
            .expect("two branches per state");
        if cu != bits[k] && d < rel[k] {
            rel[k] = d;
        }
        let mut j = k;
        while j > 0 && cs != path_state[j] {
            j -= 1;
            let cb = surv_bit[j][cs];
            if cb != bits[j] && d < rel[j] {
                rel[j] = d;
            }
            cs = surv_prev[j][cs];
        }
    }

    (0..info)
        .map(|k| {
            let r = rel[k].min(MAX_RELIABILITY);
            if bits[k] == 0 {
                r
            } else {
                -r
            }
        })
        .collect()
}

/// Encoder and iterative decoder for one block length.
#[derive(Debug, Clone)]
pub struct TurboCodec {
    trellis: Trellis,
    interleaver: Interleaver,
    pub block_len: usize,
    pub iterations: usize,
    pub extrinsic_scale: f64,
}

impl Default for TurboCodec {
    fn default() -> Self {
        Self::new(BLOCK_LEN, INTERLEAVER_SEED)
    }
}

impl TurboCodec {
    pub fn new(block_len: usize, interleaver_seed: u64) -> Self {
        Self {
            trellis: Trellis::new(),
            interleaver: Interleaver::new(block_len, interleaver_seed),
            block_len,
            iterations: ITERATIONS,
            extrinsic_scale: EXTRINSIC_SCALE,
        }
    }

    pub fn codeword_len(&self) -> usize {
        3 * self.block_len + TAIL_BITS
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    pub fn trellis(&self) -> &Trellis {
        &self.trellis
    }

    /// `[systematic | parity1 | parity2 | tail systematic (3) | tail parity1 (3)]`.
    pub fn encode(&self, bits: &[u8]) -> Result<Vec<u8>> {
        if bits.len() != self.block_len {
            return Err(Error::Contract(format!(
                "turbo block needs {} bits, got {}",
                self.block_len,
                bits.len()
            )));
        }
        let (p1, end) = self.trellis.encode(bits);
        let (p2, _) = self.trellis.encode(&self.interleaver.interleave(bits));
        let tail = self.trellis.terminate(end);
        let mut out = Vec::with_capacity(self.codeword_len());
        out.extend_from_slice(bits);
        out.extend(p1);
        out.extend(p2);
        out.extend(tail.iter().map(|t| t.0));
        out.extend(tail.iter().map(|t| t.1));
        Ok(out)
    }

    /// Decodes a codeword of LLRs; hard decisions after the final iteration.
    pub fn decode(&self, llrs: &[f64]) -> Result<Vec<u8>> {
        let mut trace = self.decode_trace(llrs, self.iterations)?;
        Ok(trace.pop().expect("at least one iteration"))
    }

    /// Hard decisions after each of `iterations` full iterations.
    pub fn decode_trace(&self, llrs: &[f64], iterations: usize) -> Result<Vec<Vec<u8>>> {
        let k = self.block_len;
        if llrs.len() != self.codeword_len() {
            return Err(Error::Contract(format!(
                "turbo decoder needs {} LLRs, got {}",
                self.codeword_len(),
                llrs.len()
            )));
        }
        if iterations == 0 {
            return Err(Error::Contract("at least one decoding iteration".into()));
        }
        let sys = &llrs[..k];
        let p1 = &llrs[k..2 * k];
        let p2 = &llrs[2 * k..3 * k];
        let tail_sys = &llrs[3 * k..3 * k + MEMORY];
        let tail_par = &llrs[3 * k + MEMORY..];

        let sys1: Vec<f64> = sys.iter().chain(tail_sys).copied().collect();
        let par1: Vec<f64> = p1.iter().chain(tail_par).copied().collect();
        let sys2 = self.interleaver.interleave(sys);

        let mut apriori1 = vec![0.0; k];
        let mut trace = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let out1 = sova(&self.trellis, &sys1, &par1, &apriori1, true);
            let ext1: Vec<f64> = (0..k)
                .map(|i| self.extrinsic_scale * (out1[i] - apriori1[i] - sys[i]))
                .collect();
            let apriori2 = self.interleaver.interleave(&ext1);
            let out2 = sova(&self.trellis, &sys2, p2, &apriori2, false);
            let ext2: Vec<f64> = (0..k)
                .map(|i| self.extrinsic_scale * (out2[i] - apriori2[i] - sys2[i]))
                .collect();
            apriori1 = self.interleaver.deinterleave(&ext2);
            let posterior = self.interleaver.deinterleave(&out2);
            trace.push(posterior.iter().map(|&l| u8::from(l < 0.0)).collect());
        }
        Ok(trace)
    }
}
