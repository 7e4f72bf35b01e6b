//! Aggregation of sweep rows into per-point statistics and criterion flags.

use std::fmt;

use super::sweep::SweepRow;
use crate::sim::ProtocolKind;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single observation.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Statistics of one protocol at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub parameter: String,
    pub value: f64,
    pub protocol: ProtocolKind,
    pub success_ratio: Stat,
    pub delivered: Stat,
    /// Over runs that delivered at least one packet.
    pub mean_delay: Stat,
    pub p95_delay: Stat,
    pub control_packets: Stat,
    pub energy_total: Stat,
    pub jump_transmissions: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flag {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub groups: Vec<GroupStats>,
    pub flags: Vec<Flag>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }

    pub fn group(&self, value: f64, protocol: ProtocolKind) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.value == value && g.protocol == protocol)
    }
}

fn stats(parameter: &str, value: f64, protocol: ProtocolKind, rows: &[&SweepRow]) -> GroupStats {
    let col = |f: &dyn Fn(&SweepRow) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    let delivering: Vec<&&SweepRow> = rows.iter().filter(|r| r.metrics.delivered > 0).collect();
    let dcol = |f: &dyn Fn(&SweepRow) -> f64| Stat::of(&delivering.iter().map(|r| f(r)).collect::<Vec<_>>());
    GroupStats {
        parameter: parameter.to_string(),
        value,
        protocol,
        success_ratio: col(&|r| r.metrics.success_ratio()),
        delivered: col(&|r| r.metrics.delivered as f64),
        mean_delay: dcol(&|r| r.metrics.mean_delay),
        p95_delay: dcol(&|r| r.metrics.p95_delay),
        control_packets: col(&|r| r.metrics.control_packets as f64),
        energy_total: col(&|r| r.metrics.energy_total),
        jump_transmissions: col(&|r| r.metrics.jump_transmissions as f64),
    }
}

/// Least-squares fit `y = a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

fn flag(flags: &mut Vec<Flag>, name: impl Into<String>, pass: bool, detail: String) {
    flags.push(Flag { name: name.into(), pass, detail });
}

const GREEDY: [ProtocolKind; 2] = [ProtocolKind::GreedyMinDelay, ProtocolKind::GreedyMaxRate];

fn void_flags(s: &Summary, flags: &mut Vec<Flag>) {
    use ProtocolKind::*;
    if let Some(g) = s.group(7.0, Dmrf) {
        let m = g.success_ratio.mean;
        flag(flags, "dmrf success >= 0.90 at void radius 7", m >= 0.90, format!("{m:.4}"));
    }
    let values: Vec<f64> = s.groups.iter().map(|g| g.value).filter(|&v| v >= 7.0).collect();
    for p in GREEDY {
        let worst = s
            .groups
            .iter()
            .filter(|g| g.protocol == p && values.contains(&g.value))
            .map(|g| g.success_ratio.mean)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
        if let Some(w) = worst {
            flag(flags, format!("{} success <= 0.05 at void radius >= 7", p.as_str()), w <= 0.05, format!("{w:.4}"));
        }
    }
    if let (Some(a), Some(b)) = (s.group(0.0, Dmrf), s.group(7.0, Dmrf)) {
        let change = (b.mean_delay.mean - a.mean_delay.mean).abs() / a.mean_delay.mean;
        flag(flags, "dmrf delay change < 25% over void radius 0..7", change < 0.25, format!("{:.1}%", change * 100.0));
    }
    if let (Some(a), Some(b)) = (s.group(0.0, Bypass), s.group(7.0, Bypass)) {
        let rise = b.mean_delay.mean / a.mean_delay.mean - 1.0;
        flag(flags, "bypass delay rise > 50% from void radius 0 to 7", rise > 0.5, format!("{:.1}%", rise * 100.0));
    }
    if let Some(base) = s.group(0.0, Dmrf) {
        let peak = s
            .groups
            .iter()
            .filter(|g| g.protocol == Dmrf)
            .map(|g| g.control_packets.mean)
            .fold(0.0, f64::max);
        let bound = base.control_packets.mean;
        flag(
            flags,
            "dmrf control packets never exceed the void-free count",
            peak <= bound,
            format!("peak {peak:.1}, void-free {bound:.1}"),
        );
    }
}

fn fill_flags(s: &Summary, flags: &mut Vec<Flag>) {
    let mut every = true;
    let mut strict = true;
    let mut seen = false;
    for g in s.groups.iter().filter(|g| g.protocol == ProtocolKind::Dmrf) {
        if let Some(b) = s.group(g.value, ProtocolKind::GreedyMinDelay) {
            seen = true;
            every &= g.delivered.mean >= b.delivered.mean;
            if g.value >= 0.6 - 1e-9 {
                strict &= g.delivered.mean > b.delivered.mean;
            }
        }
    }
    if seen {
        flag(flags, "dmrf delivered >= greedy_min_delay at every fill", every, String::new());
        flag(flags, "dmrf delivered > greedy_min_delay at fill >= 0.6", strict, String::new());
    }
}

fn fault_flags(s: &Summary, flags: &mut Vec<Flag>) {
    for p in GREEDY {
        let mut seen = false;
        let mut ok = true;
        for g in s.groups.iter().filter(|g| g.protocol == ProtocolKind::Dmrf) {
            if let Some(b) = s.group(g.value, p) {
                seen = true;
                ok &= g.success_ratio.mean >= b.success_ratio.mean;
            }
        }
        if seen {
            flag(flags, format!("dmrf success >= {} at every fault ratio", p.as_str()), ok, String::new());
        }
    }
}

fn scale_flags(s: &Summary, flags: &mut Vec<Flag>) {
    let pts: Vec<(f64, f64)> = s
        .groups
        .iter()
        .filter(|g| g.protocol == ProtocolKind::Dmrf)
        .map(|g| (g.value, g.control_packets.mean))
        .collect();
    if pts.len() < 2 {
        return;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, _, r2) = linear_fit(&xs, &ys);
    flag(flags, "dmrf control packets linear in node count (r² >= 0.9)", r2 >= 0.9, format!("r² {r2:.4}"));
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    if lo.1 > 0.0 {
        let ratio = hi.1 / lo.1;
        let bound = 1.25 * hi.0 / lo.0;
        flag(
            flags,
            format!("dmrf control ratio at {}/{} nodes <= {bound:.2}", hi.0, lo.0),
            ratio <= bound,
            format!("{ratio:.3}"),
        );
    }
}

pub fn summarize(rows: &[SweepRow]) -> Summary {
    let mut keys: Vec<(String, f64, ProtocolKind)> = Vec::new();
    for r in rows {
        let k = (r.parameter.clone(), r.value, r.protocol);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let groups: Vec<GroupStats> = keys
        .iter()
        .map(|(param, value, protocol)| {
            let members: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| &r.parameter == param && r.value == *value && r.protocol == *protocol)
                .collect();
            stats(param, *value, *protocol, &members)
        })
        .collect();
    let mut summary = Summary { groups, flags: Vec::new() };
    let mut flags = Vec::new();
    let conserved = rows.iter().filter(|r| !r.metrics.is_conserved()).count();
    flag(&mut flags, "every run conserves packets", conserved == 0, format!("{conserved} violations"));
    match rows.first().map(|r| r.parameter.as_str()) {
        Some("void_radius") => void_flags(&summary, &mut flags),
        Some("buffer_fill") => fill_flags(&summary, &mut flags),
        Some("fault_ratio") => fault_flags(&summary, &mut flags),
        Some("node_count") => scale_flags(&summary, &mut flags),
        _ => {}
    }
    summary.flags = flags;
    summary
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>8} {:<18} {:>18} {:>20} {:>20} {:>22}",
            "parameter", "value", "protocol", "success", "delivered", "mean_delay", "control"
        )?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<12} {:>8} {:<18} {:>18} {:>20} {:>20} {:>22}",
                g.parameter,
                g.value,
                g.protocol.as_str(),
                g.success_ratio.to_string(),
                g.delivered.to_string(),
                g.mean_delay.to_string(),
                g.control_packets.to_string(),
            )?;
        }
        for fl in &self.flags {
            let mark = if fl.pass { "PASS" } else { "FAIL" };
            if fl.detail.is_empty() {
                writeln!(f, "{mark} {}", fl.name)?;
            } else {
                writeln!(f, "{mark} {} ({})", fl.name, fl.detail)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MetricsRecord;

    fn row(protocol: ProtocolKind, value: f64, rep: usize, delivered: u64, control: u64) -> SweepRow {
        SweepRow {
            protocol,
            parameter: "buffer_fill".into(),
            value,
            repetition: rep,
            seed: 0,
            metrics: MetricsRecord {
                injected: 10,
                delivered,
                expired: 10 - delivered,
                control_packets: control,
                mean_delay: 5.0,
                ..Default::default()
            },
        }
    }

    #[test]
    fn stat_of_known_sample() {
        let s = Stat::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[3.0]).std, 0.0);
    }

    #[test]
    fn identical_repetitions_have_zero_spread() {
        let rows: Vec<_> = (0..5).map(|r| row(ProtocolKind::Dmrf, 0.0, r, 8, 40)).collect();
        let s = summarize(&rows);
        assert_eq!(s.groups.len(), 1);
        let g = &s.groups[0];
        for st in [g.success_ratio, g.delivered, g.mean_delay, g.control_packets, g.energy_total] {
            assert_eq!(st.std, 0.0);
        }
    }

    #[test]
    fn fill_ordering_flags() {
        let rows = vec![
            row(ProtocolKind::Dmrf, 0.0, 0, 10, 1),
            row(ProtocolKind::GreedyMinDelay, 0.0, 0, 10, 0),
            row(ProtocolKind::Dmrf, 0.6, 0, 9, 1),
            row(ProtocolKind::GreedyMinDelay, 0.6, 0, 9, 0),
        ];
        let s = summarize(&rows);
        let get = |n: &str| s.flags.iter().find(|f| f.name.contains(n)).unwrap().pass;
        assert!(get("at every fill"));
        assert!(!get("fill >= 0.6"));
        assert!(!s.all_pass());
    }

    #[test]
    fn linear_fit_exact_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
