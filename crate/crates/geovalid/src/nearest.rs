use gradcore::Tensor;

use crate::error::{Result, ValidError};
use crate::swd::{SetDescriptor, SwdSettings};

/// Index and `d_W` of the training sample closest to `query`; ties go to
/// the lowest index. All comparisons share the settings' seed.
pub fn nearest_training_sample(query: &Tensor<f64>, training: &[Tensor<f64>], settings: &SwdSettings) -> Result<(usize, f64)> {
    let q = SetDescriptor::new(std::slice::from_ref(query), settings)?;
    let cands = training
        .iter()
        .map(|t| SetDescriptor::new(std::slice::from_ref(t), settings))
        .collect::<Result<Vec<_>>>()?;
    nearest_among(&q, &cands, settings)
}

/// Nearest sample for many queries, describing each training sample once.
pub fn nearest_training_samples(queries: &[Tensor<f64>], training: &[Tensor<f64>], settings: &SwdSettings) -> Result<Vec<(usize, f64)>> {
    let cands = training
        .iter()
        .map(|t| SetDescriptor::new(std::slice::from_ref(t), settings))
        .collect::<Result<Vec<_>>>()?;
    queries
        .iter()
        .map(|q| nearest_among(&SetDescriptor::new(std::slice::from_ref(q), settings)?, &cands, settings))
        .collect()
}

fn nearest_among(q: &SetDescriptor, cands: &[SetDescriptor], settings: &SwdSettings) -> Result<(usize, f64)> {
    if cands.is_empty() {
        return Err(ValidError::EmptyTrainingSet);
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in cands.iter().enumerate() {
        let d = q.distance(c, settings)?.mean;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}
