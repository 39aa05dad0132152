//! Small summary-statistics helpers shared by the metric and decomposition
//! code.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Arithmetic mean, computed as a shift from the first value so that a
/// constant sample returns that constant exactly.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator); zero for fewer than two
/// values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Standard error of the mean; zero for fewer than two values.
pub fn std_error(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (sample_variance(values) / values.len() as f64).sqrt()
}

/// Delete-one jackknife standard error of `statistic` over `count`
/// replications. `statistic(k)` evaluates the statistic with replication `k`
/// left out.
pub fn jackknife_std_error(count: usize, statistic: impl Fn(usize) -> f64) -> f64 {
    if count < 2 {
        return 0.0;
    }
    let leave_out: Vec<f64> = (0..count).map(statistic).collect();
    let m = mean(&leave_out);
    let ss: f64 = leave_out.iter().map(|v| (v - m) * (v - m)).sum();
    ((count - 1) as f64 / count as f64 * ss).sqrt()
}
