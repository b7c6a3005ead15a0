// SPDX-License-Identifier: Apache-2.0

//! KPI catalog, per-series ingestion with bounded retention, and windows.

mod catalog;

pub use catalog::{Badness, KpiKey, KpiSample, ResourceId, ResourceKind, SeriesKey, UnknownKpi};

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::sync::{Arc, RwLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("out-of-order tick {tick} for {resource}/{kpi} (last {last})")]
    OutOfOrderTick { resource: ResourceId, kpi: KpiKey, tick: u64, last: u64 },
    #[error(transparent)]
    UnknownKpi(#[from] UnknownKpi),
    #[error("unknown series {0}/{1}")]
    UnknownSeries(ResourceId, KpiKey),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed csv row {row}: {detail}")]
    BadRow { row: usize, detail: String },
}

/// The most recent samples of one series, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiWindow {
    pub resource: ResourceId,
    pub kpi: KpiKey,
    pub samples: Vec<(u64, f64)>,
    pub length: usize,
}

impl KpiWindow {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(_, v)| *v)
    }

    pub fn latest(&self) -> Option<(u64, f64)> {
        self.samples.last().copied()
    }
}

#[derive(Debug, Default)]
struct Series {
    samples: VecDeque<(u64, f64)>,
}

/// In-memory series store. Samples older than the retention horizon are
/// spilled, in order, to an optional CSV sink.
pub struct TelemetryStore {
    retention: usize,
    series: BTreeMap<SeriesKey, Series>,
    spill: Option<csv::Writer<Box<dyn Write + Send + Sync>>>,
    rejected: u64,
}

impl std::fmt::Debug for TelemetryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TelemetryStore")
            .field("retention", &self.retention)
            .field("series", &self.series.len())
            .field("rejected", &self.rejected)
            .finish()
    }
}

impl TelemetryStore {
    pub fn new(retention: usize) -> Self {
        Self { retention: retention.max(1), series: BTreeMap::new(), spill: None, rejected: 0 }
    }

    /// Sends evicted samples to `sink` as CSV (header written immediately).
    pub fn with_spill(mut self, sink: Box<dyn Write + Send + Sync>) -> Self {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(CSV_HEADER).expect("header write to fresh sink");
        self.spill = Some(w);
        self
    }

    pub fn ingest(&mut self, sample: &KpiSample) -> Result<(), TelemetryError> {
        let key = (sample.resource_id.clone(), sample.kpi);
        let series = self.series.entry(key).or_default();
        if let Some(&(last, _)) = series.samples.back() {
            if sample.tick <= last {
                self.rejected += 1;
                return Err(TelemetryError::OutOfOrderTick {
                    resource: sample.resource_id.clone(),
                    kpi: sample.kpi,
                    tick: sample.tick,
                    last,
                });
            }
        }
        series.samples.push_back((sample.tick, sample.value));
        while series.samples.len() > self.retention {
            let (tick, value) = series.samples.pop_front().expect("non-empty");
            if let Some(w) = self.spill.as_mut() {
                w.write_record([
                    sample.resource_id.as_str(),
                    sample.kpi.as_str(),
                    &tick.to_string(),
                    &value.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    /// Parses the raw KPI name, then ingests.
    pub fn ingest_raw(&mut self, resource: ResourceId, kpi: &str, tick: u64, value: f64) -> Result<(), TelemetryError> {
        let kpi: KpiKey = kpi.parse()?;
        self.ingest(&KpiSample { resource_id: resource, kpi, tick, value })
    }

    pub fn window(&self, resource: &ResourceId, kpi: KpiKey, length: usize) -> Result<KpiWindow, TelemetryError> {
        let series = self
            .series
            .get(&(resource.clone(), kpi))
            .ok_or_else(|| TelemetryError::UnknownSeries(resource.clone(), kpi))?;
        let skip = series.samples.len().saturating_sub(length);
        Ok(KpiWindow {
            resource: resource.clone(),
            kpi,
            samples: series.samples.iter().skip(skip).copied().collect(),
            length,
        })
    }

    pub fn latest(&self, resource: &ResourceId, kpi: KpiKey) -> Option<(u64, f64)> {
        self.series.get(&(resource.clone(), kpi)).and_then(|s| s.samples.back().copied())
    }

    pub fn len(&self, resource: &ResourceId, kpi: KpiKey) -> usize {
        self.series.get(&(resource.clone(), kpi)).map_or(0, |s| s.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        match self.spill.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    /// Every retained sample in (resource, kpi, tick) order.
    pub fn retained(&self) -> Vec<KpiSample> {
        self.series
            .iter()
            .flat_map(|((r, k), s)| {
                s.samples.iter().map(move |&(tick, value)| KpiSample { resource_id: r.clone(), kpi: *k, tick, value })
            })
            .collect()
    }
}

/// Many readers, one writer. Readers always copy out a whole window under
/// the read lock, so they never observe a partially applied ingest.
#[derive(Debug, Clone)]
pub struct SharedTelemetry(Arc<RwLock<TelemetryStore>>);

impl SharedTelemetry {
    pub fn new(store: TelemetryStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn ingest(&self, sample: &KpiSample) -> Result<(), TelemetryError> {
        self.0.write().expect("telemetry lock poisoned").ingest(sample)
    }

    pub fn window(&self, resource: &ResourceId, kpi: KpiKey, length: usize) -> Result<KpiWindow, TelemetryError> {
        self.0.read().expect("telemetry lock poisoned").window(resource, kpi, length)
    }
}

pub const CSV_HEADER: [&str; 4] = ["resource_id", "kpi", "tick", "value"];

/// Writes samples in the export format (`resource_id,kpi,tick,value`).
pub fn write_csv<W: Write>(out: W, samples: &[KpiSample]) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in samples {
        w.write_record([s.resource_id.as_str(), s.kpi.as_str(), &s.tick.to_string(), &s.value.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads an exported or externally captured KPI CSV.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<KpiSample>, TelemetryError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |detail: &str| TelemetryError::BadRow { row, detail: detail.to_string() };
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let resource_id = ResourceId::parse(&rec[0]).ok_or_else(|| bad("bad resource id"))?;
        let kpi: KpiKey = rec[1].parse()?;
        let tick = rec[2].parse().map_err(|_| bad("bad tick"))?;
        let value = rec[3].parse().map_err(|_| bad("bad value"))?;
        out.push(KpiSample { resource_id, kpi, tick, value });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn s(tick: u64, value: f64) -> KpiSample {
        KpiSample { resource_id: ResourceId::node("n1"), kpi: KpiKey::CpuUtil, tick, value }
    }

    #[derive(Clone, Default)]
    struct Sink(Arc<Mutex<Vec<u8>>>);

    impl Write for Sink {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn duplicate_tick_is_rejected_and_series_unchanged() {
        let mut store = TelemetryStore::new(10);
        store.ingest(&s(1, 1.0)).unwrap();
        let err = store.ingest(&s(1, 2.0)).unwrap_err();
        assert!(matches!(err, TelemetryError::OutOfOrderTick { tick: 1, last: 1, .. }));
        assert_eq!(store.len(&ResourceId::node("n1"), KpiKey::CpuUtil), 1);
        assert_eq!(store.rejected(), 1);
    }

    #[test]
    fn unknown_kpi_is_rejected() {
        let mut store = TelemetryStore::new(10);
        let err = store.ingest_raw(ResourceId::node("n1"), "jitter", 0, 1.0).unwrap_err();
        assert!(matches!(err, TelemetryError::UnknownKpi(_)));
    }

    #[test]
    fn windows_return_most_recent_samples() {
        let mut store = TelemetryStore::new(5000);
        for t in 0..100 {
            store.ingest(&s(t, t as f64)).unwrap();
        }
        let w = store.window(&ResourceId::node("n1"), KpiKey::CpuUtil, 30).unwrap();
        assert_eq!(w.samples.len(), 30);
        assert_eq!(w.samples.first().unwrap().0, 70);
        assert_eq!(w.latest().unwrap(), (99, 99.0));

        let mut short = TelemetryStore::new(5000);
        for t in 0..10 {
            short.ingest(&s(t, 0.0)).unwrap();
        }
        let w = short.window(&ResourceId::node("n1"), KpiKey::CpuUtil, 30).unwrap();
        assert_eq!(w.samples.len(), 10);

        assert!(matches!(
            short.window(&ResourceId::node("n9"), KpiKey::CpuUtil, 30),
            Err(TelemetryError::UnknownSeries(..))
        ));
    }

    #[test]
    fn retention_spills_oldest_and_replay_is_lossless() {
        let sink = Sink::default();
        let mut store = TelemetryStore::new(5000).with_spill(Box::new(sink.clone()));
        for t in 0..5001 {
            store.ingest(&s(t, (t % 7) as f64 * 0.5)).unwrap();
        }
        store.flush().unwrap();
        assert_eq!(store.len(&ResourceId::node("n1"), KpiKey::CpuUtil), 5000);

        let spilled = read_csv(sink.0.lock().unwrap().as_slice()).unwrap();
        assert_eq!(spilled.len(), 1);
        assert_eq!(spilled[0].tick, 0);

        let mut replayed = spilled;
        replayed.extend(store.retained());
        assert_eq!(replayed.len(), 5001);
        for (t, smp) in replayed.iter().enumerate() {
            assert_eq!(smp, &s(t as u64, (t % 7) as f64 * 0.5));
        }
    }

    #[test]
    fn csv_round_trip() {
        let samples = vec![s(0, 40.25), s(1, 1e-7)];
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples).unwrap();
        assert!(buf.starts_with(b"resource_id,kpi,tick,value\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn concurrent_reads_see_contiguous_windows() {
        let shared = SharedTelemetry::new(TelemetryStore::new(200));
        let writer = {
            let shared = shared.clone();
            std::thread::spawn(move || {
                for t in 0..20_000 {
                    shared.ingest(&s(t, t as f64)).unwrap();
                }
            })
        };
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let shared = shared.clone();
                std::thread::spawn(move || {
                    let mut seen = 0;
                    while seen < 2_000 {
                        if let Ok(w) = shared.window(&ResourceId::node("n1"), KpiKey::CpuUtil, 30) {
                            for pair in w.samples.windows(2) {
                                assert_eq!(pair[1].0, pair[0].0 + 1, "torn window");
                            }
                            assert!(w.samples.len() <= 30);
                        }
                        seen += 1;
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
    }
}
