//! Random node sampling and the subgraphs it induces.
//!
//! A sample draws `n` units uniformly without replacement and observes every
//! tie among them (the recruitment subgraph). Each recruited unit also reports
//! its population degree. The population-induced subgraph adds the unrecruited
//! neighbors of the sample and the ties linking them to recruited units.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{induced_subgraph, Graph, GraphError, VertexSet};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("sample size {n} out of range 1..={n_vertices}")]
    SizeOutOfRange { n: usize, n_vertices: usize },
    #[error("sample fraction {0} out of range (0, 1]")]
    FractionOutOfRange(f64),
    #[error("unit data has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("every sampled unit is isolated in the recruitment subgraph")]
    AllIsolated,
    #[error("unit {unit}: observed degree {observed} exceeds reported degree {reported}")]
    DegreeExceedsReport {
        unit: usize,
        observed: usize,
        reported: usize,
    },
    #[error("unit {unit}: d_obs column says {column}, recruitment edges give {edges}")]
    ObservedDegreeMismatch { unit: usize, column: usize, edges: usize },
    #[error("sample CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Requested sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSize {
    Count(usize),
    Fraction(f64),
}

impl SampleSize {
    /// Resolves against a population of `n_vertices`; fractions round half up.
    pub fn resolve(self, n_vertices: usize) -> Result<usize, SamplingError> {
        let n = match self {
            SampleSize::Count(n) => n,
            SampleSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(SamplingError::FractionOutOfRange(f));
                }
                (f * n_vertices as f64 + 0.5).floor() as usize
            }
        };
        if n == 0 || n > n_vertices {
            return Err(SamplingError::SizeOutOfRange { n, n_vertices });
        }
        Ok(n)
    }
}

/// Observed data of one random node sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RecruitmentSample {
    sampled_ids: VertexSet,
    g_r: Graph,
    observed_degrees: Vec<usize>,
    reported_degrees: Vec<usize>,
    x_obs: Vec<f64>,
    y_obs: Option<Vec<f64>>,
}

impl RecruitmentSample {
    /// Assembles a sample from its parts, checking the degree and length
    /// invariants. `sampled_ids` are population ids; `g_r` uses local indices.
    pub fn from_parts(
        sampled_ids: Vec<usize>,
        g_r: Graph,
        reported_degrees: Vec<usize>,
        x_obs: Vec<f64>,
        y_obs: Option<Vec<f64>>,
    ) -> Result<Self, SamplingError> {
        let n = g_r.n_vertices();
        let population_bound = sampled_ids.iter().max().map_or(0, |&m| m + 1);
        let sampled_ids = VertexSet::new(sampled_ids, population_bound)?;
        for len in [
            sampled_ids.len(),
            reported_degrees.len(),
            x_obs.len(),
            y_obs.as_ref().map_or(n, Vec::len),
        ] {
            if len != n {
                return Err(SamplingError::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let observed_degrees = crate::graph::degrees(&g_r);
        for (unit, (&observed, &reported)) in observed_degrees.iter().zip(&reported_degrees).enumerate() {
            if observed > reported {
                return Err(SamplingError::DegreeExceedsReport {
                    unit,
                    observed,
                    reported,
                });
            }
        }
        Ok(RecruitmentSample {
            sampled_ids,
            g_r,
            observed_degrees,
            reported_degrees,
            x_obs,
            y_obs,
        })
    }

    pub fn len(&self) -> usize {
        self.g_r.n_vertices()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sampled_ids(&self) -> &[usize] {
        self.sampled_ids.members()
    }

    pub fn recruitment_graph(&self) -> &Graph {
        &self.g_r
    }

    /// `d^R_j`: ties within the recruitment subgraph.
    pub fn observed_degrees(&self) -> &[usize] {
        &self.observed_degrees
    }

    /// `d_j`: population degrees as reported by the units.
    pub fn reported_degrees(&self) -> &[usize] {
        &self.reported_degrees
    }

    pub fn x(&self) -> &[f64] {
        &self.x_obs
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y_obs.as_deref()
    }

    /// Number of units with no tie inside the sample.
    pub fn isolated_count(&self) -> usize {
        self.observed_degrees.iter().filter(|&&d| d == 0).count()
    }
}

/// Draws a uniform simple random sample of `n` units and observes their ties.
///
/// `x` (and `y`, when given) are population-length unit data; the sample keeps
/// the entries of recruited units. Recruited units are ordered by population id.
pub fn rns_sample<R: Rng + ?Sized>(
    g: &Graph,
    n: usize,
    rng: &mut R,
    x: &[f64],
    y: Option<&[f64]>,
) -> Result<RecruitmentSample, SamplingError> {
    let n_vertices = g.n_vertices();
    if n == 0 || n > n_vertices {
        return Err(SamplingError::SizeOutOfRange { n, n_vertices });
    }
    for len in std::iter::once(x.len()).chain(y.map(<[f64]>::len)) {
        if len != n_vertices {
            return Err(SamplingError::LengthMismatch {
                expected: n_vertices,
                found: len,
            });
        }
    }
    let mut ids = rand::seq::index::sample(rng, n_vertices, n).into_vec();
    ids.sort_unstable();
    let set = VertexSet::new(ids, n_vertices)?;
    let (g_r, _) = induced_subgraph(g, &set)?;
    let ids = set.members();
    Ok(RecruitmentSample {
        observed_degrees: crate::graph::degrees(&g_r),
        reported_degrees: ids.iter().map(|&j| g.degree(j)).collect(),
        x_obs: ids.iter().map(|&j| x[j]).collect(),
        y_obs: y.map(|y| ids.iter().map(|&j| y[j]).collect()),
        g_r,
        sampled_ids: set,
    })
}

/// Recruited units plus their unrecruited neighbors, and the ties touching
/// recruited units.
///
/// Local indices `0..n` are the recruited units in sample order; `n..n+u` are
/// the unrecruited neighbors in increasing population id.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationInducedSubgraph {
    pub g_p: Graph,
    pub n_recruited: usize,
    /// Population id of every local vertex.
    pub origin: Vec<usize>,
}

impl PopulationInducedSubgraph {
    /// Local indices of the unrecruited set.
    pub fn boundary(&self) -> std::ops::Range<usize> {
        self.n_recruited..self.g_p.n_vertices()
    }

    /// Population ids of the unrecruited set.
    pub fn boundary_ids(&self) -> &[usize] {
        &self.origin[self.n_recruited..]
    }
}

/// Builds the population-induced subgraph of `s` within `g`.
pub fn population_induced(g: &Graph, s: &RecruitmentSample) -> PopulationInducedSubgraph {
    let n = s.len();
    let mut local: Vec<Option<usize>> = vec![None; g.n_vertices()];
    for (i, &id) in s.sampled_ids().iter().enumerate() {
        local[id] = Some(i);
    }
    let mut boundary: Vec<usize> = s
        .sampled_ids()
        .iter()
        .flat_map(|&id| g.neighbors(id))
        .copied()
        .filter(|&k| local[k].is_none())
        .collect();
    boundary.sort_unstable();
    boundary.dedup();
    for (i, &id) in boundary.iter().enumerate() {
        local[id] = Some(n + i);
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n + boundary.len()];
    for (i, &id) in s.sampled_ids().iter().enumerate() {
        for &k in g.neighbors(id) {
            let lk = local[k].expect("every neighbor of a recruited unit is local");
            adjacency[i].push(lk);
            if lk >= n {
                adjacency[lk].push(i);
            }
        }
    }
    for nb in &mut adjacency {
        nb.sort_unstable();
    }
    let mut origin = s.sampled_ids().to_vec();
    origin.extend(boundary);
    PopulationInducedSubgraph {
        g_p: Graph::from_sorted_adjacency(adjacency),
        n_recruited: n,
        origin,
    }
}

/// Empirical degree-ratio scaling factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactor {
    pub value: f64,
    /// Units left out of both harmonic sums because `d^R_j = 0`.
    pub excluded: usize,
}

/// `Σ 1/d_j ÷ Σ 1/d^R_j` over units with `d^R_j > 0`.
pub fn scaling_factor(s: &RecruitmentSample) -> Result<ScalingFactor, SamplingError> {
    scaling_factor_from_degrees(s.reported_degrees(), s.observed_degrees())
}

/// Same as [`scaling_factor`] on raw degree vectors.
///
/// The harmonic sums are accumulated per distinct degree in increasing order,
/// so the result does not depend on unit order.
pub fn scaling_factor_from_degrees(reported: &[usize], observed: &[usize]) -> Result<ScalingFactor, SamplingError> {
    let mut reported_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut observed_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut excluded = 0;
    for (&d, &d_r) in reported.iter().zip(observed) {
        if d_r == 0 {
            excluded += 1;
            continue;
        }
        *reported_counts.entry(d).or_default() += 1;
        *observed_counts.entry(d_r).or_default() += 1;
    }
    if observed_counts.is_empty() {
        return Err(SamplingError::AllIsolated);
    }
    let harmonic = |counts: &BTreeMap<usize, usize>| -> f64 { counts.iter().map(|(&d, &c)| c as f64 / d as f64).sum() };
    Ok(ScalingFactor {
        value: harmonic(&reported_counts) / harmonic(&observed_counts),
        excluded,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    unit_id: usize,
    d_true: usize,
    d_obs: usize,
    x: f64,
    y: Option<f64>,
}

/// Writes the sample CSV: `unit_id,d_true,d_obs,x,y`, one row per recruited
/// unit in local order. `y` is empty when outcomes are absent.
pub fn write_sample_csv<W: Write>(s: &RecruitmentSample, out: W) -> Result<(), SamplingError> {
    let mut writer = csv::Writer::from_writer(out);
    for j in 0..s.len() {
        writer.serialize(SampleRow {
            unit_id: s.sampled_ids()[j],
            d_true: s.reported_degrees[j],
            d_obs: s.observed_degrees[j],
            x: s.x_obs[j],
            y: s.y_obs.as_ref().map(|y| y[j]),
        })?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a sample CSV together with its recruitment edge list (local indices).
///
/// The `d_obs` column must agree with the edge list.
pub fn read_sample<R: Read, E: std::io::BufRead>(csv_input: R, edges: E) -> Result<RecruitmentSample, SamplingError> {
    let g_r = crate::graph::read_edge_list(edges)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_input);
    let rows: Vec<SampleRow> = reader.deserialize().collect::<Result<_, _>>()?;
    let all_y = rows.iter().all(|r| r.y.is_some());
    let y = all_y.then(|| rows.iter().map(|r| r.y.unwrap_or_default()).collect());
    let s = RecruitmentSample::from_parts(
        rows.iter().map(|r| r.unit_id).collect(),
        g_r,
        rows.iter().map(|r| r.d_true).collect(),
        rows.iter().map(|r| r.x).collect(),
        y,
    )?;
    for (j, row) in rows.iter().enumerate() {
        if row.d_obs != s.observed_degrees[j] {
            return Err(SamplingError::ObservedDegreeMismatch {
                unit: j,
                column: row.d_obs,
                edges: s.observed_degrees[j],
            });
        }
    }
    Ok(s)
}
