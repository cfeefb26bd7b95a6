//! Seed tracks: linking seeds across frames by cumulative embedding
//! similarity and ranking the tracks by objectness and motion saliency.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{similarity_from_sq, squared_distance, SeedSet};
use crate::error::{Error, Result};

/// One seed per tracked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTrack {
    /// `(frame index, seed index)` in time order.
    pub members: Vec<(usize, usize)>,
    embeddings: Vec<Vec<f32>>,
}

impl SeedTrack {
    pub fn start(frame: usize, seed: usize, embedding: Vec<f32>) -> Self {
        SeedTrack {
            members: vec![(frame, seed)],
            embeddings: vec![embedding],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn last_frame(&self) -> usize {
        self.members.last().map(|m| m.0).unwrap_or(0)
    }

    pub fn member_embeddings(&self) -> &[Vec<f32>] {
        &self.embeddings
    }

    /// Seed index on `frame`, if the track covers it.
    pub fn seed_on(&self, frame: usize) -> Option<usize> {
        self.members.iter().find(|m| m.0 == frame).map(|m| m.1)
    }

    pub fn push(&mut self, frame: usize, seed: usize, embedding: Vec<f32>) {
        self.members.push((frame, seed));
        self.embeddings.push(embedding);
    }
}

/// Index of the next-frame seed with the largest summed similarity to all
/// current track members. Ties go to the lowest index.
pub fn extend_track(track: &SeedTrack, next: &SeedSet) -> Result<usize> {
    if next.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let scores = next.seeds.iter().map(|s| {
        track
            .embeddings
            .iter()
            .map(|t| similarity_from_sq(squared_distance(&s.embedding, t)))
            .sum::<f64>()
    });
    Ok(argmax_first(scores).expect("non-empty"))
}

pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// One track per seed of the first set, each greedily extended through
/// every later set. Tracks may converge on the same seed.
pub fn build_tracks(per_frame: &[SeedSet]) -> Result<Vec<SeedTrack>> {
    let first = per_frame.first().ok_or(Error::EmptySeeds)?;
    if first.is_empty() {
        return Err(Error::EmptySeeds.at_frame(first.frame));
    }
    let mut tracks: Vec<SeedTrack> = first
        .seeds
        .iter()
        .enumerate()
        .map(|(j, s)| SeedTrack::start(0, j, s.embedding.clone()))
        .collect();

    // Similarity rows between an earlier (frame, seed) and every seed of the
    // set being linked. Tracks share members, so rows are computed once per
    // distinct member and summed per track in member order.
    let mut history: Vec<&SeedSet> = vec![first];
    for next in &per_frame[1..] {
        if next.is_empty() {
            return Err(Error::EmptySeeds.at_frame(next.frame));
        }
        let mut needed: Vec<(usize, usize)> = tracks
            .iter()
            .flat_map(|t| t.members.iter().copied())
            .collect();
        needed.sort_unstable();
        needed.dedup();
        let rows: HashMap<(usize, usize), Vec<f64>> = needed
            .par_iter()
            .map(|&(step, seed)| {
                let anchor = &history[step].seeds[seed].embedding;
                let row = next
                    .seeds
                    .iter()
                    .map(|s| similarity_from_sq(squared_distance(&s.embedding, anchor)))
                    .collect();
                ((step, seed), row)
            })
            .collect();
        let step = history.len();
        for track in tracks.iter_mut() {
            let mut total = vec![0.0f64; next.len()];
            for &(st, seed) in &track.members {
                for (acc, v) in total.iter_mut().zip(&rows[&(st, seed)]) {
                    *acc += v;
                }
            }
            let r = argmax_first(total).expect("non-empty");
            track.push(step, r, next.seeds[r].embedding.clone());
        }
        history.push(next);
    }
    // Member frames were recorded as positions in `per_frame`; map them back
    // to the frame indices carried by each set.
    for track in tracks.iter_mut() {
        for m in track.members.iter_mut() {
            m.0 = per_frame[m.0].frame;
        }
    }
    Ok(tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingMode {
    /// Mean of objectness × motion saliency.
    #[default]
    Combined,
    #[serde(rename = "motion", alias = "motion-only")]
    MotionOnly,
    #[serde(rename = "objectness", alias = "objectness-only")]
    ObjectnessOnly,
}

impl std::str::FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(RankingMode::Combined),
            "motion" | "motion-only" => Ok(RankingMode::MotionOnly),
            "objectness" | "objectness-only" => Ok(RankingMode::ObjectnessOnly),
            _ => Err(Error::Config(format!("unknown ranking mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for RankingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankingMode::Combined => "combined",
            RankingMode::MotionOnly => "motion",
            RankingMode::ObjectnessOnly => "objectness",
        })
    }
}

/// Mean per-member cue over the track. `objectness` and `saliency` are
/// looked up by `(frame, seed)`.
pub fn score_track(
    track: &SeedTrack,
    objectness: impl Fn(usize, usize) -> f64,
    saliency: impl Fn(usize, usize) -> f64,
    mode: RankingMode,
) -> f64 {
    if track.is_empty() {
        return 0.0;
    }
    let total: f64 = track
        .members
        .iter()
        .map(|&(f, s)| match mode {
            RankingMode::Combined => objectness(f, s) * saliency(f, s),
            RankingMode::MotionOnly => saliency(f, s),
            RankingMode::ObjectnessOnly => objectness(f, s),
        })
        .sum();
    total / track.len() as f64
}

/// Highest-scoring track; ties go to the lowest index.
pub fn select_foreground_track(scores: &[f64]) -> Result<usize> {
    argmax_first(scores.iter().copied()).ok_or(Error::EmptySeeds)
}
