//! Labeled pressure-stream generation: demand seasonality, blockage and leak
//! event timelines, sensor noise, and ground-truth labels.
//!
//! Blockage steps carry `anomaly_label = 1`; leak steps carry
//! `drift_label = 1`. Event intervals are half-open `[start_step, end_step)`.

use crate::error::{Error, Result};
use crate::hydronet::{solve_with_guess, LeakSpec, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Deterministic 64-bit mixer used to derive independent sub-streams from
/// one scenario seed.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

const SUBSTREAM_DEMAND: u64 = 1;
const SUBSTREAM_SENSOR_LIVE: u64 = 2;
const SUBSTREAM_SENSOR_HISTORICAL: u64 = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockageEvent {
    pub pipe_id: String,
    pub start_step: usize,
    pub end_step: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakEvent {
    #[serde(flatten)]
    pub leak: LeakSpec,
    pub start_step: usize,
    pub end_step: usize,
}

/// Multiplicative demand seasonality: daily plus weekly sinusoid with
/// per-node Gaussian jitter, floored away from zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandPattern {
    #[serde(default = "default_daily_amp")]
    pub daily_amplitude: f64,
    #[serde(default = "default_weekly_amp")]
    pub weekly_amplitude: f64,
    #[serde(default = "default_demand_noise")]
    pub noise_std: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_daily_amp() -> f64 {
    0.3
}
fn default_weekly_amp() -> f64 {
    0.1
}
fn default_demand_noise() -> f64 {
    0.02
}
fn default_floor() -> f64 {
    0.05
}

impl Default for DemandPattern {
    fn default() -> Self {
        DemandPattern {
            daily_amplitude: default_daily_amp(),
            weekly_amplitude: default_weekly_amp(),
            noise_std: default_demand_noise(),
            floor: default_floor(),
        }
    }
}

impl DemandPattern {
    /// Demand multiplier at a step for one node.
    ///
    /// `steps_per_day` fixes the sinusoid periods (48/day and 336/week at
    /// 30-minute sampling). The jitter is a pure function of
    /// `(seed, step, node_index)`, so evaluation order is irrelevant.
    pub fn multiplier(&self, step: usize, node_index: usize, steps_per_day: usize, seed: u64) -> f64 {
        let day = steps_per_day as f64;
        let week = 7.0 * day;
        let t = step as f64;
        let mut m = 1.0
            + self.daily_amplitude * (2.0 * std::f64::consts::PI * t / day).sin()
            + self.weekly_amplitude * (2.0 * std::f64::consts::PI * t / week).sin();
        if self.noise_std > 0.0 {
            let key = splitmix64(seed ^ splitmix64((step as u64) << 24 ^ node_index as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            let eps: f64 = StandardNormal.sample(&mut rng);
            m += self.noise_std * eps;
        }
        m.max(self.floor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Path of the network file, resolved relative to the scenario file.
    pub network: String,
    #[serde(default = "default_horizon")]
    pub horizon_steps: usize,
    #[serde(default = "default_step_minutes")]
    pub step_minutes: usize,
    #[serde(default)]
    pub blockage_events: Vec<BlockageEvent>,
    #[serde(default)]
    pub leak_events: Vec<LeakEvent>,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub sensor_nodes: Vec<String>,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    #[serde(default)]
    pub demand: DemandPattern,
}

fn default_horizon() -> usize {
    17520
}
fn default_step_minutes() -> usize {
    30
}
fn default_noise_std() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    42
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Scenario> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Scenario> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Load the referenced network, resolving its path against the
    /// scenario file's directory.
    pub fn load_network(&self, scenario_path: impl AsRef<Path>) -> Result<Network> {
        let base = scenario_path
            .as_ref()
            .parent()
            .unwrap_or_else(|| Path::new("."));
        Network::from_json_file(base.join(&self.network))
    }

    pub fn steps_per_day(&self) -> usize {
        1440 / self.step_minutes
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::InvalidScenario("horizon_steps is zero".into()));
        }
        if self.step_minutes == 0 || 1440 % self.step_minutes != 0 {
            return Err(Error::InvalidScenario(format!(
                "step_minutes {} must divide a day",
                self.step_minutes
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidScenario("negative noise_std".into()));
        }
        if self.sensor_nodes.is_empty() {
            return Err(Error::InvalidScenario("no sensor nodes".into()));
        }
        for s in &self.sensor_nodes {
            if net.junction_index(s).is_none() {
                return Err(Error::UnknownNode(s.clone()));
            }
        }
        for b in &self.blockage_events {
            if net.pipe_index(&b.pipe_id).is_none() {
                return Err(Error::UnknownPipe(b.pipe_id.clone()));
            }
            check_interval(b.start_step, b.end_step, self.horizon_steps)?;
        }
        for l in &self.leak_events {
            if net.junction_index(&l.leak.node_id).is_none() {
                return Err(Error::UnknownNode(l.leak.node_id.clone()));
            }
            if l.leak.hole_diameter < 0.0
                || l.leak.discharge_coefficient <= 0.0
                || l.leak.discharge_coefficient > 1.0
            {
                return Err(Error::InvalidScenario(format!(
                    "leak at `{}` has invalid geometry",
                    l.leak.node_id
                )));
            }
            check_interval(l.start_step, l.end_step, self.horizon_steps)?;
        }
        Ok(())
    }

    /// Generate the labeled stream, events included.
    pub fn generate(&self, net: &Network) -> Result<LabeledStream> {
        self.run(net, true, SUBSTREAM_SENSOR_LIVE)
    }

    /// Generate the anomaly-free companion year: identical demand
    /// sub-stream, no events, its own sensor-noise sub-stream.
    pub fn generate_historical(&self, net: &Network) -> Result<LabeledStream> {
        self.run(net, false, SUBSTREAM_SENSOR_HISTORICAL)
    }

    fn run(&self, net: &Network, with_events: bool, sensor_tag: u64) -> Result<LabeledStream> {
        self.validate(net)?;
        let demand_seed = splitmix64(self.rng_seed ^ SUBSTREAM_DEMAND);
        let mut sensor_rng =
            ChaCha8Rng::seed_from_u64(splitmix64(self.rng_seed ^ sensor_tag));

        let n_junctions = net.junctions.len();
        let sensors: Vec<usize> = self
            .sensor_nodes
            .iter()
            .map(|s| net.junction_index(s).expect("validated"))
            .collect();
        let steps_per_day = self.steps_per_day();

        // Topology / leak sets only change at event boundaries; solve per
        // phase against a prebuilt network.
        let mut boundaries = vec![0, self.horizon_steps];
        if with_events {
            for b in &self.blockage_events {
                boundaries.push(b.start_step);
                boundaries.push(b.end_step);
            }
            for l in &self.leak_events {
                boundaries.push(l.start_step);
                boundaries.push(l.end_step);
            }
        }
        boundaries.sort_unstable();
        boundaries.dedup();

        let mut stream = LabeledStream {
            sensor_ids: self.sensor_nodes.clone(),
            pressures: Vec::with_capacity(self.horizon_steps),
            anomaly_label: vec![0; self.horizon_steps],
            drift_label: vec![0; self.horizon_steps],
        };
        let mut multipliers = vec![1.0; n_junctions];
        let mut warm: Option<Vec<f64>> = None;

        for phase in boundaries.windows(2) {
            let (lo, hi) = (phase[0], phase[1]);
            let mut phase_net = net.clone();
            let mut leaks: Vec<LeakSpec> = Vec::new();
            if with_events {
                for b in &self.blockage_events {
                    if b.start_step <= lo && hi <= b.end_step {
                        phase_net = phase_net.apply_blockage(&b.pipe_id)?;
                    }
                }
                for l in &self.leak_events {
                    if l.start_step <= lo && hi <= l.end_step {
                        leaks.push(l.leak.clone());
                    }
                }
            }
            for step in lo..hi {
                for (j, m) in multipliers.iter_mut().enumerate() {
                    *m = self.demand.multiplier(step, j, steps_per_day, demand_seed);
                }
                let state =
                    solve_with_guess(&phase_net, &leaks, Some(&multipliers), warm.as_deref())
                        .map_err(|e| e.at_step(step))?;
                let mut row = Vec::with_capacity(sensors.len());
                for &j in &sensors {
                    let p = state.junction_heads[j] - net.junctions[j].elevation;
                    let noise: f64 = StandardNormal.sample(&mut sensor_rng);
                    row.push(p + self.noise_std * noise);
                }
                stream.pressures.push(row);
                warm = Some(state.junction_heads);
            }
        }

        if with_events {
            for b in &self.blockage_events {
                for s in b.start_step..b.end_step {
                    stream.anomaly_label[s] = 1;
                }
            }
            for l in &self.leak_events {
                for s in l.start_step..l.end_step {
                    stream.drift_label[s] = 1;
                }
            }
        }
        Ok(stream)
    }
}

fn check_interval(start: usize, end: usize, horizon: usize) -> Result<()> {
    if start >= end || end > horizon {
        return Err(Error::InvalidScenario(format!(
            "event interval [{start}, {end}) outside stream of {horizon} steps"
        )));
    }
    Ok(())
}

/// Generated sensor stream plus per-step ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub sensor_ids: Vec<String>,
    /// One row per step, one column per sensor, pressure head in metres.
    pub pressures: Vec<Vec<f64>>,
    pub anomaly_label: Vec<u8>,
    pub drift_label: Vec<u8>,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.pressures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pressures.is_empty()
    }

    pub fn sensor_index(&self, id: &str) -> Option<usize> {
        self.sensor_ids.iter().position(|s| s == id)
    }

    /// Single sensor's series as a column.
    pub fn column(&self, sensor: usize) -> Vec<f64> {
        self.pressures.iter().map(|row| row[sensor]).collect()
    }

    /// `step,<sensor ids...>,anomaly_label,drift_label` with one row per step.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        write!(w, "step")?;
        for id in &self.sensor_ids {
            write!(w, ",{id}")?;
        }
        writeln!(w, ",anomaly_label,drift_label")?;
        for (step, row) in self.pressures.iter().enumerate() {
            write!(w, "{step}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", self.anomaly_label[step], self.drift_label[step])?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv(r: impl BufRead) -> Result<LabeledStream> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedData("empty stream file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[0] != "step" {
            return Err(Error::MalformedData("bad stream header".into()));
        }
        let n_sensors = cols.len() - 3;
        let sensor_ids: Vec<String> = cols[1..1 + n_sensors].iter().map(|s| s.to_string()).collect();
        let mut stream = LabeledStream {
            sensor_ids,
            pressures: Vec::new(),
            anomaly_label: Vec::new(),
            drift_label: Vec::new(),
        };
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::MalformedData(format!(
                    "row has {} fields, expected {}",
                    fields.len(),
                    cols.len()
                )));
            }
            let mut row = Vec::with_capacity(n_sensors);
            for f in &fields[1..1 + n_sensors] {
                row.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::MalformedData(e.to_string()))?,
                );
            }
            stream.pressures.push(row);
            let parse_label = |s: &str| -> Result<u8> {
                s.parse::<u8>().map_err(|e| Error::MalformedData(e.to_string()))
            };
            stream.anomaly_label.push(parse_label(fields[cols.len() - 2])?);
            stream.drift_label.push(parse_label(fields[cols.len() - 1])?);
        }
        Ok(stream)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<LabeledStream> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn short_scenario() -> (Network, Scenario) {
        let net = data::hanoi_like();
        let mut scn = data::paper_timeline_scenario();
        scn.horizon_steps = 64;
        scn.blockage_events = vec![BlockageEvent {
            pipe_id: "P07".into(),
            start_step: 20,
            end_step: 40,
        }];
        scn.leak_events.clear();
        (net, scn)
    }

    #[test]
    fn multiplier_is_one_when_disabled() {
        let pat = DemandPattern {
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            noise_std: 0.0,
            floor: 0.05,
        };
        for t in [0, 7, 100, 17519] {
            assert_eq!(pat.multiplier(t, 3, 48, 1), 1.0);
        }
    }

    #[test]
    fn multiplier_weekly_periodicity() {
        let pat = DemandPattern {
            noise_std: 0.0,
            ..DemandPattern::default()
        };
        for t in 0..336 {
            let a = pat.multiplier(t, 0, 48, 1);
            let b = pat.multiplier(t + 336, 0, 48, 1);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_mean_over_week_is_one() {
        let pat = DemandPattern {
            noise_std: 0.0,
            ..DemandPattern::default()
        };
        let mean: f64 = (0..336).map(|t| pat.multiplier(t, 0, 48, 1)).sum::<f64>() / 336.0;
        assert!((mean - 1.0).abs() <= 1e-9, "mean = {mean}");
    }

    #[test]
    fn stationary_scenario_repeats_exactly() {
        let (net, mut scn) = short_scenario();
        scn.blockage_events.clear();
        scn.noise_std = 0.0;
        scn.demand = DemandPattern {
            daily_amplitude: 0.0,
            weekly_amplitude: 0.0,
            noise_std: 0.0,
            floor: 0.05,
        };
        let stream = scn.generate(&net).unwrap();
        for row in &stream.pressures[1..] {
            for (a, b) in row.iter().zip(&stream.pressures[0]) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (net, scn) = short_scenario();
        let a = scn.generate(&net).unwrap();
        let b = scn.generate(&net).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_match_intervals_exactly() {
        let (net, mut scn) = short_scenario();
        scn.leak_events = vec![LeakEvent {
            leak: LeakSpec {
                node_id: "N14".into(),
                hole_diameter: 0.05,
                discharge_coefficient: 0.75,
            },
            start_step: 30,
            end_step: 50,
        }];
        let stream = scn.generate(&net).unwrap();
        for t in 0..scn.horizon_steps {
            assert_eq!(stream.anomaly_label[t], u8::from((20..40).contains(&t)));
            assert_eq!(stream.drift_label[t], u8::from((30..50).contains(&t)));
        }
    }

    #[test]
    fn blockage_shifts_downstream_sensor_mean() {
        let (net, mut scn) = short_scenario();
        scn.horizon_steps = 80;
        scn.blockage_events[0].start_step = 40;
        scn.blockage_events[0].end_step = 80;
        let stream = scn.generate(&net).unwrap();
        let col = stream.column(stream.sensor_index("N10").unwrap());
        let pre: f64 = col[..40].iter().sum::<f64>() / 40.0;
        let during: f64 = col[40..].iter().sum::<f64>() / 40.0;
        assert!(
            (during - pre).abs() > 3.0 * scn.noise_std,
            "pre {pre} during {during}"
        );
    }

    #[test]
    fn historical_shares_demand_but_not_events() {
        let (net, scn) = short_scenario();
        let live = scn.generate(&net).unwrap();
        let hist = scn.generate_historical(&net).unwrap();
        assert_eq!(hist.anomaly_label.iter().map(|&x| x as u32).sum::<u32>(), 0);
        // Outside events the two streams differ only by sensor noise.
        let s = live.sensor_index("N10").unwrap();
        for t in 0..10 {
            let d = (live.pressures[t][s] - hist.pressures[t][s]).abs();
            assert!(d < 6.0 * scn.noise_std, "step {t}: {d}");
        }
        // During the blockage they differ structurally.
        let d = (live.pressures[30][s] - hist.pressures[30][s]).abs();
        assert!(d > 3.0 * scn.noise_std);
    }

    #[test]
    fn noise_variance_near_configured() {
        let (net, mut scn) = short_scenario();
        scn.horizon_steps = 800;
        scn.blockage_events.clear();
        let noisy = scn.generate(&net).unwrap();
        let mut clean = scn.clone();
        clean.noise_std = 0.0;
        let clean = clean.generate(&net).unwrap();
        let mut diffs = Vec::new();
        for t in 0..noisy.len() {
            for s in 0..noisy.sensor_ids.len() {
                diffs.push(noisy.pressures[t][s] - clean.pressures[t][s]);
            }
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (diffs.len() - 1) as f64;
        assert!((0.008..=0.012).contains(&var), "var = {var}");
    }

    #[test]
    fn noiseless_stream_equals_direct_solver_calls() {
        let (net, mut scn) = short_scenario();
        scn.horizon_steps = 12;
        scn.blockage_events.clear();
        scn.noise_std = 0.0;
        let stream = scn.generate(&net).unwrap();

        let demand_seed = splitmix64(scn.rng_seed ^ 1);
        let sensors: Vec<usize> = scn
            .sensor_nodes
            .iter()
            .map(|s| net.junction_index(s).unwrap())
            .collect();
        let mut warm: Option<Vec<f64>> = None;
        for step in 0..scn.horizon_steps {
            let mult: Vec<f64> = (0..net.junctions.len())
                .map(|j| scn.demand.multiplier(step, j, 48, demand_seed))
                .collect();
            let st = crate::hydronet::solve_with_guess(&net, &[], Some(&mult), warm.as_deref())
                .unwrap();
            for (k, &j) in sensors.iter().enumerate() {
                let p = st.junction_heads[j] - net.junctions[j].elevation;
                assert_eq!(stream.pressures[step][k], p, "step {step} sensor {k}");
            }
            warm = Some(st.junction_heads);
        }
    }

    #[test]
    fn csv_round_trip() {
        let (net, scn) = short_scenario();
        let stream = scn.generate(&net).unwrap();
        let mut buf = Vec::new();
        stream.write_csv(&mut buf).unwrap();
        let back = LabeledStream::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(stream, back);
    }

    #[test]
    fn rejects_bad_intervals() {
        let (net, mut scn) = short_scenario();
        scn.blockage_events[0].end_step = 20;
        assert!(scn.generate(&net).is_err());
        scn.blockage_events[0].end_step = 1000;
        assert!(scn.generate(&net).is_err());
    }
}
