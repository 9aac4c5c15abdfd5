//! Five-number summaries with Tukey hinges and 1.5 IQR outlier fences.

#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotStats {
    pub label: String,
    pub n: usize,
    /// Lower whisker: smallest value inside the fences.
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Upper whisker: largest value inside the fences.
    pub max: f64,
    /// Values outside the fences, ascending.
    pub outliers: Vec<f64>,
}

impl BoxplotStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn fences(&self) -> (f64, f64) {
        let reach = 1.5 * self.iqr();
        (self.q1 - reach, self.q3 + reach)
    }
}

fn median_of_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// `None` for an empty group.
pub fn boxplot_stats(label: &str, values: &[f64]) -> Option<BoxplotStats> {
    if values.is_empty() {
        return None;
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    // the halves share the median when n is odd
    let half = n.div_ceil(2);
    let q1 = median_of_sorted(&xs[..half]);
    let q3 = median_of_sorted(&xs[n - half..]);
    let reach = 1.5 * (q3 - q1);
    let (lo, hi) = (q1 - reach, q3 + reach);
    let inside = |x: &f64| *x >= lo && *x <= hi;
    Some(BoxplotStats {
        label: label.to_string(),
        n,
        min: *xs.iter().find(|x| inside(x)).expect("the median is always inside"),
        q1,
        median: median_of_sorted(&xs),
        q3,
        max: *xs.iter().rev().find(|x| inside(x)).expect("the median is always inside"),
        outliers: xs.iter().copied().filter(|x| !inside(x)).collect(),
    })
}

/// Stats for every non-empty group, plus the labels of the empty ones.
pub fn boxplot<'a, I>(groups: I) -> (Vec<BoxplotStats>, Vec<String>)
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    for (label, values) in groups {
        match boxplot_stats(label, values) {
            Some(s) => stats.push(s),
            None => skipped.push(label.to_string()),
        }
    }
    (stats, skipped)
}
