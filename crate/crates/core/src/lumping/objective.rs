use crate::corpus::{physical_counts, StateNetwork};
use crate::error::{Error, Result};

/// Out-weight of a (lumped) state aggregated by physical target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutProfile {
    pub weight: f64,
    /// `(physical target, raw weight)` sorted by target.
    pub counts: Vec<(u32, f64)>,
}

impl OutProfile {
    pub fn of_state(net: &StateNetwork, u: u32) -> Self {
        Self {
            weight: net.out_weight(u),
            counts: physical_counts(net, u),
        }
    }

    pub fn is_dangling(&self) -> bool {
        self.weight <= 0.0
    }

    /// Profile of the lumped state: weights add target by target.
    pub fn merged(&self, other: &Self) -> Self {
        let mut counts = Vec::with_capacity(self.counts.len() + other.counts.len());
        let (a, b) = (&self.counts, &other.counts);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                counts.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                counts.push(b[j]);
                j += 1;
            } else {
                counts.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
        Self {
            weight: self.weight + other.weight,
            counts,
        }
    }

    /// `w * H(P)` in bits, computed from raw counts.
    pub fn weighted_entropy(&self) -> f64 {
        if self.weight <= 0.0 {
            return 0.0;
        }
        let s: f64 = self.counts.iter().filter(|c| c.1 > 0.0).map(|&(_, c)| c * c.log2()).sum();
        self.weight * self.weight.log2() - s
    }
}

/// Kullback-Leibler divergence `D(p || q)` in bits between sparse distributions sorted by
/// key. Fails if `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[(u32, f64)], q: &[(u32, f64)]) -> Result<f64> {
    let mut d = 0.0;
    let mut j = 0;
    for &(x, px) in p {
        if px <= 0.0 {
            continue;
        }
        while j < q.len() && q[j].0 < x {
            j += 1;
        }
        match q.get(j) {
            Some(&(y, qx)) if y == x && qx > 0.0 => d += px * (px / qx).log2(),
            _ => return Err(Error::SupportMismatch(x)),
        }
    }
    Ok(d.max(0.0))
}

/// Entropy-rate increase, in bits per step, of lumping two states of one physical node:
/// `(w_u D(P_u || P_uv) + w_v D(P_v || P_uv)) / W` over physical targets, where `P_uv`
/// is the weight-averaged distribution and `W` the total network weight.
pub fn lump_delta(a: &OutProfile, b: &OutProfile, total_weight: f64) -> f64 {
    if a.is_dangling() || b.is_dangling() {
        return 0.0;
    }
    let t = a.weight + b.weight;
    let (ca, cb) = (&a.counts, &b.counts);
    let mut acc = 0.0;
    let (mut i, mut j) = (0, 0);
    // sum over targets of c log2(c T / (w m)) for each side, m = merged count
    while i < ca.len() || j < cb.len() {
        let (x, y) = if j == cb.len() || (i < ca.len() && ca[i].0 < cb[j].0) {
            i += 1;
            (ca[i - 1].1, 0.0)
        } else if i == ca.len() || cb[j].0 < ca[i].0 {
            j += 1;
            (0.0, cb[j - 1].1)
        } else {
            i += 1;
            j += 1;
            (ca[i - 1].1, cb[j - 1].1)
        };
        let m = x + y;
        if x > 0.0 {
            acc += x * (x * t / (a.weight * m)).log2();
        }
        if y > 0.0 {
            acc += y * (y * t / (b.weight * m)).log2();
        }
    }
    (acc / total_weight).max(0.0)
}

/// [`lump_delta`] for two states of a network; fails if they belong to different
/// physical nodes or coincide.
pub fn lump_delta_states(net: &StateNetwork, u: u32, v: u32) -> Result<f64> {
    if u == v || net.physical(u) != net.physical(v) {
        return Err(Error::InvalidParameter(format!(
            "states {u} and {v} are not distinct states of one physical node"
        )));
    }
    Ok(lump_delta(
        &OutProfile::of_state(net, u),
        &OutProfile::of_state(net, v),
        net.total_weight(),
    ))
}

/// `H = sum_u (w_u / W) H(P_u)` over physical targets; dangling states contribute 0,
/// and an all-dangling network has rate 0.
pub fn entropy_rate(net: &StateNetwork) -> f64 {
    let total = net.total_weight();
    if total <= 0.0 {
        return 0.0;
    }
    let s: f64 = (0..net.state_count() as u32)
        .filter(|&u| !net.is_dangling(u))
        .map(|u| OutProfile::of_state(net, u).weighted_entropy())
        .sum();
    s / total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(w: &[(u32, f64)]) -> OutProfile {
        OutProfile {
            weight: w.iter().map(|x| x.1).sum(),
            counts: w.to_vec(),
        }
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = [(0, 0.2), (3, 0.5), (7, 0.3)];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_point_mass_vs_uniform() {
        let d = kl_divergence(&[(0, 1.0)], &[(0, 0.5), (1, 0.5)]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_three_quarters() {
        // 0.75 log2 1.5 + 0.25 log2 0.5
        let expected = 0.75 * 1.5f64.log2() + 0.25 * 0.5f64.log2();
        let d = kl_divergence(&[(0, 0.75), (1, 0.25)], &[(0, 0.5), (1, 0.5)]).unwrap();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.188722).abs() < 1e-6);
    }

    #[test]
    fn kl_support_violation() {
        assert!(matches!(kl_divergence(&[(2, 1.0)], &[(1, 1.0)]), Err(Error::SupportMismatch(2))));
    }

    #[test]
    fn delta_of_identical_profiles_is_zero() {
        let a = profile(&[(0, 2.0), (1, 6.0)]);
        let b = profile(&[(0, 1.0), (1, 3.0)]);
        assert_eq!(lump_delta(&a, &b, 12.0), 0.0);
    }

    #[test]
    fn delta_of_disjoint_point_masses() {
        let a = profile(&[(0, 1.0)]);
        let b = profile(&[(1, 1.0)]);
        assert!((lump_delta(&a, &b, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_with_dangling_member_is_zero() {
        let a = profile(&[(0, 1.0)]);
        assert_eq!(lump_delta(&a, &OutProfile::default(), 5.0), 0.0);
    }

    #[test]
    fn delta_equals_weighted_entropy_increase() {
        let a = profile(&[(0, 3.0), (2, 1.0)]);
        let b = profile(&[(1, 2.0), (2, 5.0)]);
        let m = a.merged(&b);
        let direct = (m.weighted_entropy() - a.weighted_entropy() - b.weighted_entropy()) / 20.0;
        assert!((lump_delta(&a, &b, 20.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn merged_profile_adds_counts() {
        let m = profile(&[(0, 1.0), (4, 2.0)]).merged(&profile(&[(1, 1.0), (4, 1.0)]));
        assert_eq!(m.counts, vec![(0, 1.0), (1, 1.0), (4, 3.0)]);
        assert_eq!(m.weight, 5.0);
    }
}
