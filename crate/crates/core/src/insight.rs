//! Physics-interpretation tooling: first-layer weight extraction from a
//! single-encoder-layer pseudo-encoder, dominant-node analysis per design
//! parameter group, and the weighted-sum invariance experiment run against
//! the surrogate alone.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DesignRanges};
use crate::dr_design::{train_pseudo_encoder, PseudoEncoder};
use crate::dr_response::ResponseAutoencoder;
use crate::error::{Error, Result};
use crate::materials::{CrystallizationFraction, MaterialDb, LC_LEVELS};
use crate::nnet::{mse_single, TrainConfig, TrainReport};
use crate::surrogate::{simulate, DesignVector, ResponseSpectrum, DESIGN_DIM, PARAM_NAMES};

/// The interpretable pseudo-encoder reduces the design space with a single
/// encoder layer so its weights can be read directly.
pub const INTERPRETABLE_ARCHITECTURE: [usize; 6] = [10, 4, 10, 50, 20, 10];

/// Trains the fixed single-encoder-layer pseudo-encoder (10-4-10-50-20-10).
pub fn train_interpretable_pe(
    train: &Dataset,
    val: &Dataset,
    response_ae: &ResponseAutoencoder,
    config: &TrainConfig,
) -> Result<(PseudoEncoder, TrainReport)> {
    train_pseudo_encoder(train, val, response_ae, &INTERPRETABLE_ARCHITECTURE, config)
}

/// First-layer weights of a single-encoder-layer pseudo-encoder:
/// one row per bottleneck node, one column per design parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    weights: Array2<f64>,
}

impl WeightMap {
    pub fn nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// |weight| per (node, parameter).
    pub fn magnitudes(&self) -> Array2<f64> {
        self.weights.mapv(f64::abs)
    }

    /// Signed weight connecting `node` to design parameter `param`.
    pub fn weight(&self, node: usize, param: usize) -> f64 {
        self.weights[[node, param]]
    }

    /// Long-form CSV: node,parameter,weight.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,parameter,weight\n");
        for node in 0..self.nodes() {
            for (param, name) in PARAM_NAMES.iter().enumerate() {
                out.push_str(&format!("{node},{name},{}\n", self.weights[[node, param]]));
            }
        }
        out
    }

    /// Parses the long-form CSV back into a map.
    pub fn from_csv(text: &str) -> Result<WeightMap> {
        let mut lines = text.lines();
        match lines.next() {
            Some("node,parameter,weight") => {}
            _ => return Err(Error::format("<csv>", "bad weight-map header")),
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::format("<csv>", format!("row {}: expected 3 fields", i + 2)));
            }
            let node: usize = parts[0]
                .parse()
                .map_err(|_| Error::format("<csv>", format!("row {}: bad node", i + 2)))?;
            let param = crate::surrogate::param_index(parts[1])
                .ok_or_else(|| Error::format("<csv>", format!("row {}: bad parameter", i + 2)))?;
            let w: f64 = parts[2]
                .parse()
                .map_err(|_| Error::format("<csv>", format!("row {}: bad weight", i + 2)))?;
            entries.push((node, param, w));
        }
        let k = entries.iter().map(|e| e.0).max().map_or(0, |m| m + 1);
        if entries.len() != k * DESIGN_DIM {
            return Err(Error::format(
                "<csv>",
                format!("expected {} entries for {k} nodes", k * DESIGN_DIM),
            ));
        }
        let mut weights = Array2::zeros((k, DESIGN_DIM));
        for (node, param, w) in entries {
            weights[[node, param]] = w;
        }
        Ok(WeightMap { weights })
    }
}

/// Extracts the weight map; the design encoder must be exactly one layer.
pub fn extract_weight_map(pe: &PseudoEncoder) -> Result<WeightMap> {
    if pe.bottleneck_index() != 1 {
        return Err(Error::InvalidConfig(format!(
            "weight map needs a single-layer design encoder; bottleneck sits at layer {}",
            pe.bottleneck_index()
        )));
    }
    Ok(WeightMap {
        weights: pe.mlp().weights()[0].clone(),
    })
}

/// The bottleneck node drawing the largest total |weight| from the given
/// parameter group, with its share of the group total. Ties go to the
/// lowest node index.
pub fn dominant_node(map: &WeightMap, group: &[usize]) -> Result<(usize, f64)> {
    if group.is_empty() {
        return Err(Error::Empty("parameter group".into()));
    }
    for &p in group {
        if p >= DESIGN_DIM {
            return Err(Error::OutOfRange(format!("parameter index {p}")));
        }
    }
    let mags = map.magnitudes();
    let node_sum: Vec<f64> = (0..map.nodes())
        .map(|n| group.iter().map(|&p| mags[[n, p]]).sum())
        .collect();
    let total: f64 = node_sum.iter().sum();
    let mut best = 0;
    for (n, &s) in node_sum.iter().enumerate() {
        if s > node_sum[best] {
            best = n;
        }
    }
    let ratio = if total > 0.0 { node_sum[best] / total } else { 1.0 / map.nodes() as f64 };
    Ok((best, ratio))
}

/// All lc-level triples whose weighted sum under `weights` lies within
/// `tol` of `target_sum`.
fn feasible_lc_triples(weights: [f64; 3], target_sum: f64, tol: f64) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for l1 in 0..LC_LEVELS {
        for l2 in 0..LC_LEVELS {
            for l3 in 0..LC_LEVELS {
                let s = weights[0] * (l1 as f64 / 10.0)
                    + weights[1] * (l2 as f64 / 10.0)
                    + weights[2] * (l3 as f64 / 10.0);
                if (s - target_sum).abs() <= tol {
                    out.push([l1, l2, l3]);
                }
            }
        }
    }
    out
}

/// Relative tolerance on the weighted sum; the 11-level grid cannot hit
/// arbitrary sums exactly.
pub const WEIGHTED_SUM_TOLERANCE: f64 = 0.02;

fn node_lc_weights(pe: &PseudoEncoder, node: usize) -> Result<[f64; 3]> {
    let map = extract_weight_map(pe)?;
    if node >= map.nodes() {
        return Err(Error::OutOfRange(format!("node {node} of {}", map.nodes())));
    }
    // columns 1..4 are lc1..lc3; weights act on scaled inputs but the scale
    // map for lc is affine with slope 2, so grid sums differ only by an
    // affine transform and the equal-sum sets coincide
    Ok([map.weight(node, 1), map.weight(node, 2), map.weight(node, 3)])
}

/// Designs identical to `base` except for (lc1, lc2, lc3), each keeping the
/// node's weighted lc sum within the quantization tolerance of the base
/// design's sum. The base design itself is returned first.
pub fn equal_weighted_sum_designs<R: Rng>(
    pe: &PseudoEncoder,
    base: &DesignVector,
    node: usize,
    n_sets: usize,
    rng: &mut R,
) -> Result<Vec<DesignVector>> {
    if n_sets == 0 {
        return Err(Error::InvalidConfig("n_sets must be >= 1".into()));
    }
    let weights = node_lc_weights(pe, node)?;
    let target_sum: f64 = weights
        .iter()
        .zip(base.lc.iter())
        .map(|(w, lc)| w * lc.value())
        .sum();
    let tol = WEIGHTED_SUM_TOLERANCE * target_sum.abs();
    let mut feasible = feasible_lc_triples(weights, target_sum, tol);
    let base_levels = [base.lc[0].level(), base.lc[1].level(), base.lc[2].level()];
    feasible.retain(|t| *t != base_levels);
    if feasible.len() + 1 < n_sets {
        return Err(Error::Empty(format!(
            "only {} lc triples within {tol:.4} of weighted sum {target_sum:.4}; {n_sets} requested",
            feasible.len() + 1
        )));
    }
    let mut out = vec![*base];
    feasible.shuffle(rng);
    for levels in feasible.into_iter().take(n_sets - 1) {
        let lc = [
            CrystallizationFraction::from_level(levels[0])?,
            CrystallizationFraction::from_level(levels[1])?,
            CrystallizationFraction::from_level(levels[2])?,
        ];
        out.push(DesignVector::new(base.h, lc, base.p, base.w)?);
    }
    Ok(out)
}

/// Builds `n_groups` equal-weighted-sum groups at well-separated sum values
/// (quantiles of the achievable sum range), each of `n_sets` designs that
/// differ only in their lc triples.
pub fn invariance_groups<R: Rng>(
    pe: &PseudoEncoder,
    base: &DesignVector,
    node: usize,
    n_groups: usize,
    n_sets: usize,
    rng: &mut R,
) -> Result<Vec<Vec<DesignVector>>> {
    if n_groups < 2 {
        return Err(Error::InvalidConfig("need at least 2 groups".into()));
    }
    let weights = node_lc_weights(pe, node)?;
    // distribution of achievable sums over the whole lc grid
    let mut sums: Vec<f64> = Vec::with_capacity(LC_LEVELS.pow(3));
    let mut triples: Vec<[usize; 3]> = Vec::with_capacity(LC_LEVELS.pow(3));
    for l1 in 0..LC_LEVELS {
        for l2 in 0..LC_LEVELS {
            for l3 in 0..LC_LEVELS {
                triples.push([l1, l2, l3]);
                sums.push(
                    weights[0] * (l1 as f64 / 10.0)
                        + weights[1] * (l2 as f64 / 10.0)
                        + weights[2] * (l3 as f64 / 10.0),
                );
            }
        }
    }
    let mut order: Vec<usize> = (0..sums.len()).collect();
    order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap());

    let mut groups = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let q = (g + 1) as f64 / (n_groups + 1) as f64;
        let pick = order[((sums.len() - 1) as f64 * q).round() as usize];
        let levels = triples[pick];
        let lc = [
            CrystallizationFraction::from_level(levels[0])?,
            CrystallizationFraction::from_level(levels[1])?,
            CrystallizationFraction::from_level(levels[2])?,
        ];
        let group_base = DesignVector::new(base.h, lc, base.p, base.w)?;
        groups.push(equal_weighted_sum_designs(pe, &group_base, node, n_sets, rng)?);
    }
    Ok(groups)
}

/// Within- and cross-group spectral similarity, computed from surrogate
/// simulations only (no trained model touches the spectra).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub group_sizes: Vec<usize>,
    /// Mean pairwise spectral MSE inside each group.
    pub within_group_mse: Vec<f64>,
    pub mean_within_mse: f64,
    pub mean_cross_mse: f64,
}

pub fn invariance_experiment(
    groups: &[Vec<DesignVector>],
    materials: &MaterialDb,
) -> Result<InvarianceReport> {
    if groups.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::InvalidConfig("every group needs at least 2 designs".into()));
    }
    let spectra: Vec<Vec<ResponseSpectrum>> = groups
        .par_iter()
        .map(|g| g.par_iter().map(|d| simulate(d, materials)).collect())
        .collect::<Result<_>>()?;

    let pair_mse = |a: &ResponseSpectrum, b: &ResponseSpectrum| -> Result<f64> {
        mse_single(
            ndarray::ArrayView1::from(a.values()),
            ndarray::ArrayView1::from(b.values()),
        )
    };

    let mut within_group_mse = Vec::with_capacity(groups.len());
    let mut within_sum = 0.0;
    let mut within_count = 0usize;
    for group in &spectra {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                sum += pair_mse(&group[i], &group[j])?;
                count += 1;
            }
        }
        within_group_mse.push(sum / count as f64);
        within_sum += sum;
        within_count += count;
    }

    let mut cross_sum = 0.0;
    let mut cross_count = 0usize;
    for gi in 0..spectra.len() {
        for gj in gi + 1..spectra.len() {
            for a in &spectra[gi] {
                for b in &spectra[gj] {
                    cross_sum += pair_mse(a, b)?;
                    cross_count += 1;
                }
            }
        }
    }

    Ok(InvarianceReport {
        group_sizes: groups.iter().map(|g| g.len()).collect(),
        within_group_mse,
        mean_within_mse: within_sum / within_count as f64,
        mean_cross_mse: cross_sum / cross_count as f64,
    })
}

/// Surrogate spectra for a one-parameter sweep around a base design; all
/// other parameters stay fixed.
pub fn parameter_sweep(
    base: &DesignVector,
    parameter: &str,
    values: &[f64],
    ranges: &DesignRanges,
    materials: &MaterialDb,
) -> Result<Vec<(f64, ResponseSpectrum)>> {
    let param = crate::surrogate::param_index(parameter).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown parameter {parameter:?} (expected one of {PARAM_NAMES:?})"
        ))
    })?;
    if values.is_empty() {
        return Err(Error::Empty("sweep values".into()));
    }
    values
        .par_iter()
        .map(|&v| {
            let mut vals = base.to_values();
            vals[param] = v;
            let design = DesignVector::from_values(&vals)?;
            if !ranges.contains(&design) {
                return Err(Error::OutOfRange(format!(
                    "{parameter} = {v} leaves the design ranges"
                )));
            }
            Ok((v, simulate(&design, materials)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate;
    use crate::dr_design::default_architecture;
    use crate::dr_response::train_response_autoencoder;
    use crate::nnet::{ActivationKind, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lc(level: usize) -> CrystallizationFraction {
        CrystallizationFraction::from_level(level).unwrap()
    }

    fn base_design() -> DesignVector {
        DesignVector::new(
            190.0,
            [lc(5), lc(6), lc(7)],
            [650.0, 650.0, 550.0],
            [350.0, 500.0, 200.0],
        )
        .unwrap()
    }

    /// A pseudo-encoder with hand-set first-layer weights; the rest random.
    fn pe_with_first_layer(rows: Vec<Vec<f64>>) -> PseudoEncoder {
        let sizes = INTERPRETABLE_ARCHITECTURE;
        let acts = [
            ActivationKind::Identity,
            ActivationKind::Tanh,
            ActivationKind::Tanh,
            ActivationKind::Tanh,
            ActivationKind::Identity,
        ];
        let mlp = Mlp::init(&sizes, &acts, 3).unwrap();
        let mut weights: Vec<_> = mlp.weights().to_vec();
        let mut first = Array2::zeros((4, 10));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                first[[i, j]] = *v;
            }
        }
        weights[0] = first;
        let rebuilt = Mlp::from_parts(
            sizes.to_vec(),
            weights,
            mlp.biases().to_vec(),
            mlp.activations().to_vec(),
        )
        .unwrap();
        PseudoEncoder::from_parts(rebuilt, DesignRanges::default()).unwrap()
    }

    fn unit_lc_pe() -> PseudoEncoder {
        // node 2 takes (1,1,1) on the lc columns; everything else zero
        let mut rows = vec![vec![0.0; 10]; 4];
        rows[2][1] = 1.0;
        rows[2][2] = 1.0;
        rows[2][3] = 1.0;
        pe_with_first_layer(rows)
    }

    #[test]
    fn interpretable_architecture_trains_with_4x10_first_layer() {
        let ds = generate(60, 55, &DesignRanges::default(), &MaterialDb::default(), "t").unwrap();
        let (train, val) = ds.split(0.75, 1).unwrap();
        let config = TrainConfig {
            max_epochs: 10,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (ae, _) = train_response_autoencoder(
            &train.spectrum_matrix(),
            &val.spectrum_matrix(),
            &[200, 30, 10, 30, 200],
            &config,
        )
        .unwrap();
        let (pe, report) = train_interpretable_pe(&train, &val, &ae, &config).unwrap();
        assert_eq!(pe.mlp().layer_sizes(), &INTERPRETABLE_ARCHITECTURE);
        assert_eq!(pe.mlp().weights()[0].dim(), (4, 10));
        assert!(report.final_val_mse.is_finite());
        // determinism
        let (pe2, _) = train_interpretable_pe(&train, &val, &ae, &config).unwrap();
        assert_eq!(pe.mlp(), pe2.mlp());

        let map = extract_weight_map(&pe).unwrap();
        assert_eq!(map.weights().len(), 40);
        assert_eq!(map.magnitudes(), map.weights().mapv(f64::abs));
    }

    #[test]
    fn weight_map_requires_single_layer_encoder() {
        let acts = [
            ActivationKind::Tanh,
            ActivationKind::Tanh,
            ActivationKind::Identity,
            ActivationKind::Tanh,
            ActivationKind::Tanh,
            ActivationKind::Tanh,
            ActivationKind::Identity,
        ];
        let mlp = Mlp::init(&default_architecture(5, 10), &acts, 3).unwrap();
        let pe = PseudoEncoder::from_parts(mlp, DesignRanges::default()).unwrap();
        assert!(extract_weight_map(&pe).is_err());
    }

    #[test]
    fn weight_map_csv_round_trip_is_exact() {
        let pe = unit_lc_pe();
        let map = extract_weight_map(&pe).unwrap();
        let csv = map.to_csv();
        let parsed = WeightMap::from_csv(&csv).unwrap();
        assert_eq!(parsed, map);
    }

    #[test]
    fn dominant_node_rules() {
        let pe = unit_lc_pe();
        let map = extract_weight_map(&pe).unwrap();
        let (node, ratio) = dominant_node(&map, &[1, 2, 3]).unwrap();
        assert_eq!(node, 2);
        assert!((ratio - 1.0).abs() < 1e-15);

        // uniform weights: ratio 1/k, argmax at the lowest index
        let uniform = pe_with_first_layer(vec![vec![0.5; 10]; 4]);
        let map = extract_weight_map(&uniform).unwrap();
        let (node, ratio) = dominant_node(&map, &[1, 2, 3]).unwrap();
        assert_eq!(node, 0);
        assert!((ratio - 0.25).abs() < 1e-15);

        // argmax invariance under positive scaling
        let scaled = pe_with_first_layer(vec![vec![5.0; 10], vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]]);
        let map2 = extract_weight_map(&scaled).unwrap();
        assert_eq!(dominant_node(&map2, &[0, 4]).unwrap().0, 0);

        assert!(dominant_node(&map, &[]).is_err());
        assert!(dominant_node(&map, &[12]).is_err());
    }

    #[test]
    fn equal_weighted_sum_enumeration_matches_hand_cases() {
        // unit weights: S = 0.5 + 0.6 + 0.7 = 1.8; tolerance 0.036
        let pe = unit_lc_pe();
        let weights = node_lc_weights(&pe, 2).unwrap();
        assert_eq!(weights, [1.0, 1.0, 1.0]);

        // the spec's catalogue for S = 1.5: these triples all sum exactly
        let feasible = feasible_lc_triples([1.0, 1.0, 1.0], 1.5, 0.02 * 1.5);
        for want in [[5, 5, 5], [3, 5, 7], [1, 6, 8]] {
            assert!(feasible.contains(&want), "missing {want:?}");
        }
        // everything in the set respects the tolerance
        for t in &feasible {
            let s = (t[0] + t[1] + t[2]) as f64 / 10.0;
            assert!((s - 1.5).abs() <= 0.03 + 1e-12);
        }
    }

    #[test]
    fn equal_weighted_sum_designs_contract() {
        let pe = unit_lc_pe();
        let base = base_design();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // n_sets = 1: the base itself
        let sets = equal_weighted_sum_designs(&pe, &base, 2, 1, &mut rng).unwrap();
        assert_eq!(sets, vec![base]);

        let sets = equal_weighted_sum_designs(&pe, &base, 2, 3, &mut rng).unwrap();
        assert_eq!(sets.len(), 3);
        assert_eq!(sets[0], base);
        let s0: f64 = base.lc.iter().map(|l| l.value()).sum();
        for d in &sets {
            // only the lc triple moved
            assert_eq!(d.h, base.h);
            assert_eq!(d.p, base.p);
            assert_eq!(d.w, base.w);
            let s: f64 = d.lc.iter().map(|l| l.value()).sum();
            assert!((s - s0).abs() <= 0.02 * s0 + 1e-12, "sum {s} vs {s0}");
        }
        // distinct triples
        assert_ne!(sets[1].lc, sets[0].lc);
        assert_ne!(sets[2].lc, sets[0].lc);
        assert_ne!(sets[2].lc, sets[1].lc);
    }

    #[test]
    fn invariance_experiment_identical_groups_have_zero_within_mse() {
        let materials = MaterialDb::default();
        let d1 = base_design();
        let mut vals = d1.to_values();
        vals[0] = 120.0;
        let d2 = DesignVector::from_values(&vals).unwrap();
        let groups = vec![vec![d1, d1], vec![d2, d2]];
        let report = invariance_experiment(&groups, &materials).unwrap();
        assert_eq!(report.group_sizes, vec![2, 2]);
        assert!(report.within_group_mse.iter().all(|&m| m == 0.0));
        assert!(report.mean_within_mse == 0.0);
        assert!(report.mean_cross_mse > 0.0);

        // symmetric under relabeling
        let swapped = vec![groups[1].clone(), groups[0].clone()];
        let report2 = invariance_experiment(&swapped, &materials).unwrap();
        assert_eq!(report.mean_cross_mse, report2.mean_cross_mse);
        assert_eq!(report.mean_within_mse, report2.mean_within_mse);

        assert!(invariance_experiment(&groups[..1], &materials).is_err());
        assert!(invariance_experiment(&[vec![d1], vec![d2]], &materials).is_err());
    }

    #[test]
    fn parameter_sweep_contract() {
        let materials = MaterialDb::default();
        let ranges = DesignRanges::default();
        let base = base_design();
        let sweep = parameter_sweep(&base, "h", &[100.0, 150.0, 200.0], &ranges, &materials)
            .unwrap();
        assert_eq!(sweep.len(), 3);
        // pairwise distinct spectra
        for i in 0..3 {
            for j in i + 1..3 {
                let d = mse_single(
                    ndarray::ArrayView1::from(sweep[i].1.values()),
                    ndarray::ArrayView1::from(sweep[j].1.values()),
                )
                .unwrap();
                assert!(d > 1e-6, "h spectra {i} and {j} coincide");
            }
        }

        // single value matches simulate()
        let single = parameter_sweep(&base, "h", &[base.h], &ranges, &materials).unwrap();
        assert_eq!(single[0].1, simulate(&base, &materials).unwrap());

        // lc sweep over all 11 levels
        let levels: Vec<f64> = (0..11).map(|l| l as f64 / 10.0).collect();
        let sweep = parameter_sweep(&base, "lc1", &levels, &ranges, &materials).unwrap();
        assert_eq!(sweep.len(), 11);

        // out-of-range and unknown parameters rejected
        assert!(parameter_sweep(&base, "h", &[1000.0], &ranges, &materials).is_err());
        assert!(parameter_sweep(&base, "q", &[100.0], &ranges, &materials).is_err());
        assert!(parameter_sweep(&base, "h", &[], &ranges, &materials).is_err());
    }
}
