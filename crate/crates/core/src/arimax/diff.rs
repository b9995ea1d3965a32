//! Order-d differencing and its inverse for forecast reconstruction.

use super::ArimaxError;

/// The d-th order difference of `series`; output length is `len - d`.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>, ArimaxError> {
    if series.len() <= d {
        return Err(ArimaxError::SeriesTooShort {
            len: series.len(),
            d,
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        for i in 0..out.len() - 1 {
            out[i] = out[i + 1] - out[i];
        }
        out.pop();
    }
    Ok(out)
}

/// Reconstructs level-space values from d-th difference forecasts.
///
/// `last_levels` holds the final `d` observed values in level space; they
/// anchor the cumulative sums. With d = 0 the forecasts are already levels.
pub fn undifference(diff_forecasts: &[f64], last_levels: &[f64]) -> Result<Vec<f64>, ArimaxError> {
    let d = last_levels.len();
    if d == 0 {
        return Ok(diff_forecasts.to_vec());
    }
    // anchors[k] = latest value of the k-th difference of the observed tail.
    let mut anchors = Vec::with_capacity(d);
    let mut tail = last_levels.to_vec();
    for _ in 0..d {
        anchors.push(*tail.last().unwrap());
        tail = match difference(&tail, 1) {
            Ok(t) => t,
            Err(_) => break, // tail exhausted: anchors for all orders collected
        };
    }
    if anchors.len() != d {
        return Err(ArimaxError::DimensionMismatch(format!(
            "need {d} level anchors, derived {}",
            anchors.len()
        )));
    }

    let mut out = Vec::with_capacity(diff_forecasts.len());
    for &w in diff_forecasts {
        let mut cur = w;
        for k in (0..d).rev() {
            cur += anchors[k];
            anchors[k] = cur;
        }
        out.push(cur);
    }
    Ok(out)
}
