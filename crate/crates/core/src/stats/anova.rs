use statrs::function::beta::beta_reg;

use super::{Result, StatsError};

/// Real-valued samples split into at least two groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSamples {
    groups: Vec<Vec<f64>>,
}

impl GroupedSamples {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(StatsError::Precondition("need at least two groups".into()));
        }
        if groups.iter().any(Vec::is_empty) {
            return Err(StatsError::Precondition("empty group".into()));
        }
        let n: usize = groups.iter().map(Vec::len).sum();
        if n < groups.len() + 1 {
            return Err(StatsError::Precondition("too few samples for the F test".into()));
        }
        Ok(Self { groups })
    }

    /// Groups values by integer label; labels need not be contiguous.
    pub fn from_assignments(values: &[f64], labels: &[usize]) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(StatsError::Dimension("values and labels differ in length".into()));
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for (&v, &l) in values.iter().zip(labels) {
            groups.entry(l).or_default().push(v);
        }
        Self::new(groups.into_values().collect())
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub p_value: f64,
    pub eta2: f64,
}

/// Upper tail of the F distribution through the regularised incomplete beta.
pub fn f_survival(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// One-way ANOVA with the fraction of variance explained by group membership.
pub fn anova_f_eta2(g: &GroupedSamples) -> AnovaResult {
    let all: Vec<f64> = g.groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let grand = all.iter().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for grp in &g.groups {
        let m = grp.iter().sum::<f64>() / grp.len() as f64;
        ssb += grp.len() as f64 * (m - grand).powi(2);
        ssw += grp.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    // rounding residue of constant data counts as zero
    let floor = 1e-20 * all.iter().map(|x| x * x).sum::<f64>();
    if ssb <= floor {
        ssb = 0.0;
    }
    if ssw <= floor {
        ssw = 0.0;
    }
    let sst = ssb + ssw;
    let eta2 = if sst == 0.0 { 0.0 } else { ssb / sst };
    let df_b = (g.groups.len() - 1) as f64;
    let df_w = n - g.groups.len() as f64;
    if ssw == 0.0 {
        let f = if ssb == 0.0 { 0.0 } else { f64::INFINITY };
        let p_value = if ssb == 0.0 { 1.0 } else { 0.0 };
        return AnovaResult { f, p_value, eta2 };
    }
    let f = (ssb / df_b) / (ssw / df_w);
    AnovaResult { f, p_value: f_survival(f, df_b, df_w), eta2 }
}
