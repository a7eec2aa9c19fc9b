use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{GenerateError, TargetResult};

/// One output row: `{target, ipa, candidate, joint_logprob, rank}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub target: String,
    pub ipa: String,
    pub candidate: String,
    pub joint_logprob: f64,
    pub rank: usize,
}

fn records(results: &[TargetResult], top: Option<usize>) -> impl Iterator<Item = CandidateRecord> + '_ {
    results.iter().flat_map(move |r| {
        r.candidates
            .iter()
            .take(top.unwrap_or(usize::MAX))
            .map(|c| CandidateRecord {
                target: r.target.clone(),
                ipa: r.ipa.clone(),
                candidate: c.surface.clone(),
                joint_logprob: c.joint_logprob,
                rank: c.rank,
            })
    })
}

pub fn write_candidates_jsonl<W: Write>(
    mut out: W,
    results: &[TargetResult],
    top: Option<usize>,
) -> Result<(), GenerateError> {
    for rec in records(results, top) {
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_candidates_csv<W: Write>(
    out: W,
    results: &[TargetResult],
    top: Option<usize>,
) -> Result<(), GenerateError> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records(results, top) {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Candidate;

    #[test]
    fn formats_agree() {
        let r = vec![TargetResult {
            target: "by".into(),
            ipa: "bˈaɪ".into(),
            candidates: vec![
                Candidate {
                    surface: "bye".into(),
                    joint_logprob: -0.5,
                    rank: 1,
                },
                Candidate {
                    surface: "bi".into(),
                    joint_logprob: -1.25,
                    rank: 2,
                },
            ],
        }];
        let mut j = Vec::new();
        write_candidates_jsonl(&mut j, &r, None).unwrap();
        let lines: Vec<CandidateRecord> = String::from_utf8(j)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let mut c = Vec::new();
        write_candidates_csv(&mut c, &r, None).unwrap();
        let rows: Vec<CandidateRecord> = csv::Reader::from_reader(&c[..])
            .deserialize()
            .map(Result::unwrap)
            .collect();
        assert_eq!(lines, rows);
        assert_eq!(rows[0].candidate, "bye");
        let mut top1 = Vec::new();
        write_candidates_jsonl(&mut top1, &r, Some(1)).unwrap();
        assert_eq!(String::from_utf8(top1).unwrap().lines().count(), 1);
    }
}
