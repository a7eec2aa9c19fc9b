use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::GenerateError;

/// Anything that scores the next character given a history.
pub trait NextTokenModel {
    /// Size of the output distribution.
    fn vocab_size(&self) -> usize;
    fn bos(&self) -> usize;
    fn eos(&self) -> usize;
    /// Tokens never emitted (padding, BOS, unknown).
    fn is_blocked(&self, token: usize) -> bool;
    /// Log-probabilities over the vocabulary after `history` (which starts with BOS).
    fn next_log_probs(&self, history: &[usize]) -> Result<Vec<f64>, GenerateError>;
    /// Surface string of emitted tokens (no BOS/EOS).
    fn render(&self, tokens: &[usize]) -> String;
}

/// Beam-search knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    /// Children kept per expansion.
    pub c: usize,
    /// Active nodes kept per step.
    pub k: usize,
    /// Depth beyond the phoneme count.
    pub extra_depth: usize,
    /// Surfaces dropped from the output.
    pub exclude: BTreeSet<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            c: 2,
            k: 64,
            extra_depth: 6,
            exclude: BTreeSet::new(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.c == 0 || self.k == 0 {
            return Err(GenerateError::InvalidParams("C and K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn depth(&self, phonemes: usize) -> usize {
        phonemes + self.extra_depth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamNode {
    /// Emitted tokens including the leading BOS.
    pub prefix: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface: String,
    pub joint_logprob: f64,
    pub rank: usize,
}

/// Indices of the `c` largest allowed entries, ties to the lower index.
fn top_children(lp: &[f64], c: usize, blocked: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lp.len())
        .filter(|&i| !blocked(i) && lp[i] > f64::NEG_INFINITY)
        .collect();
    idx.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
    idx.truncate(c);
    idx
}

/// Run the search for `depth` steps and return every finished node plus the
/// surviving leaves.
pub fn beam_search<M: NextTokenModel + ?Sized>(
    model: &M,
    depth: usize,
    params: &GenerationParams,
) -> Result<Vec<BeamNode>, GenerateError> {
    params.validate()?;
    let eos = model.eos();
    let mut active = vec![BeamNode {
        prefix: vec![model.bos()],
        logprob: 0.0,
        finished: false,
    }];
    let mut done = Vec::new();
    for _ in 0..depth {
        let mut children = Vec::with_capacity(active.len() * params.c);
        for node in &active {
            let lp = model.next_log_probs(&node.prefix)?;
            for tok in top_children(&lp, params.c, |t| model.is_blocked(t)) {
                let mut prefix = node.prefix.clone();
                prefix.push(tok);
                let child = BeamNode {
                    prefix,
                    logprob: node.logprob + lp[tok],
                    finished: tok == eos,
                };
                if child.finished {
                    done.push(child);
                } else {
                    children.push(child);
                }
            }
        }
        children.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.prefix.cmp(&b.prefix)));
        children.truncate(params.k);
        active = children;
        if active.is_empty() {
            break;
        }
    }
    done.extend(active);
    Ok(done)
}

/// Turn search leaves into ranked, deduplicated candidates.
pub fn rank_candidates<M: NextTokenModel + ?Sized>(
    model: &M,
    nodes: &[BeamNode],
    exclude: &BTreeSet<String>,
) -> Vec<Candidate> {
    let (bos, eos) = (model.bos(), model.eos());
    let mut best: HashMap<String, f64> = HashMap::new();
    for n in nodes {
        let body: Vec<usize> = n.prefix.iter().copied().filter(|&t| t != bos && t != eos).collect();
        let surface = model.render(&body);
        if surface.is_empty() || exclude.contains(&surface) {
            continue;
        }
        let e = best.entry(surface).or_insert(f64::NEG_INFINITY);
        if n.logprob > *e {
            *e = n.logprob;
        }
    }
    let mut out: Vec<Candidate> = best
        .into_iter()
        .map(|(surface, joint_logprob)| Candidate {
            surface,
            joint_logprob,
            rank: 0,
        })
        .collect();
    out.sort_by(|a, b| {
        b.joint_logprob
            .total_cmp(&a.joint_logprob)
            .then_with(|| a.surface.cmp(&b.surface))
    });
    for (i, c) in out.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    out
}

/// Sum of per-step log-probabilities of `tokens` (EOS included if present).
pub fn replay_logprob<M: NextTokenModel + ?Sized>(model: &M, tokens: &[usize]) -> Result<f64, GenerateError> {
    let mut history = vec![model.bos()];
    let mut total = 0.0;
    for &t in tokens {
        total += model.next_log_probs(&history)?[t];
        history.push(t);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed table model: next distribution depends on history length only.
    struct Table {
        rows: Vec<Vec<f64>>,
    }

    impl NextTokenModel for Table {
        fn vocab_size(&self) -> usize {
            4
        }
        fn bos(&self) -> usize {
            3
        }
        fn eos(&self) -> usize {
            0
        }
        fn is_blocked(&self, t: usize) -> bool {
            t == 3
        }
        fn next_log_probs(&self, h: &[usize]) -> Result<Vec<f64>, GenerateError> {
            Ok(self.rows[(h.len() - 1).min(self.rows.len() - 1)]
                .iter()
                .map(|p: &f64| p.ln())
                .collect())
        }
        fn render(&self, t: &[usize]) -> String {
            t.iter().map(|&i| (b'a' + i as u8 - 1) as char).collect()
        }
    }

    fn table() -> Table {
        Table {
            rows: vec![
                vec![0.1, 0.6, 0.3, 0.0],
                vec![0.5, 0.2, 0.3, 0.0],
                vec![0.7, 0.2, 0.1, 0.0],
            ],
        }
    }

    #[test]
    fn greedy_degenerate_beam() {
        let p = GenerationParams {
            c: 1,
            k: 1,
            ..Default::default()
        };
        let m = table();
        let nodes = beam_search(&m, 5, &p).unwrap();
        let c = rank_candidates(&m, &nodes, &BTreeSet::new());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].surface, "a");
        assert!((c[0].joint_logprob - (0.6f64.ln() + 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn finished_nodes_free_their_slot() {
        let p = GenerationParams {
            c: 2,
            k: 1,
            ..Default::default()
        };
        let m = table();
        let nodes = beam_search(&m, 2, &p).unwrap();
        // step 1: a (kept), b (pruned); step 2 from a: EOS (done) and b
        let surfaces: Vec<_> = rank_candidates(&m, &nodes, &BTreeSet::new())
            .into_iter()
            .map(|c| c.surface)
            .collect();
        assert_eq!(surfaces, vec!["a", "ab"]);
    }

    #[test]
    fn exclusion_and_ranks() {
        let m = table();
        let p = GenerationParams::default();
        let nodes = beam_search(&m, 3, &p).unwrap();
        let all = rank_candidates(&m, &nodes, &BTreeSet::new());
        let ex: BTreeSet<String> = [all[0].surface.clone()].into();
        let rest = rank_candidates(&m, &nodes, &ex);
        assert_eq!(rest.len(), all.len() - 1);
        assert!(rest.iter().enumerate().all(|(i, c)| c.rank == i + 1));
        assert!(rest.windows(2).all(|w| w[0].joint_logprob >= w[1].joint_logprob));
    }

    #[test]
    fn invalid_params() {
        let p = GenerationParams {
            c: 0,
            ..Default::default()
        };
        assert!(beam_search(&table(), 3, &p).is_err());
    }
}
