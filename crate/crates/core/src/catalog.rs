//! Multi-modal content universe and per-class QoS requirements.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentId(pub u32);

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
    Haptic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Video, Modality::Audio, Modality::Haptic];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Haptic => "haptic",
        }
    }

    /// Position in the (video, audio, haptic) one-hot layout.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "video" => Ok(Modality::Video),
            "audio" => Ok(Modality::Audio),
            "haptic" => Ok(Modality::Haptic),
            other => Err(Error::Parse(format!("unknown modality `{other}`"))),
        }
    }
}

/// Bandwidth range and latency bound a delivery must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosRequirement {
    pub min_bandwidth_bps: f64,
    pub max_bandwidth_bps: f64,
    pub max_latency_s: f64,
}

impl QosRequirement {
    const fn new(min_bandwidth_bps: f64, max_bandwidth_bps: f64, max_latency_s: f64) -> Self {
        QosRequirement {
            min_bandwidth_bps,
            max_bandwidth_bps,
            max_latency_s,
        }
    }
}

/// The eleven content classes and their QoS requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModalityClass {
    Video1080p30,
    Video1080p60,
    Video4k30,
    Video4k60,
    Video8k30,
    Video8k60,
    AudioMp3,
    AudioBluRay,
    AudioHomeTheater,
    HapticLowFidelity,
    HapticHighFidelity,
}

impl ModalityClass {
    pub const ALL: [ModalityClass; 11] = [
        ModalityClass::Video1080p30,
        ModalityClass::Video1080p60,
        ModalityClass::Video4k30,
        ModalityClass::Video4k60,
        ModalityClass::Video8k30,
        ModalityClass::Video8k60,
        ModalityClass::AudioMp3,
        ModalityClass::AudioBluRay,
        ModalityClass::AudioHomeTheater,
        ModalityClass::HapticLowFidelity,
        ModalityClass::HapticHighFidelity,
    ];

    pub fn modality(self) -> Modality {
        use ModalityClass::*;
        match self {
            Video1080p30 | Video1080p60 | Video4k30 | Video4k60 | Video8k30 | Video8k60 => {
                Modality::Video
            }
            AudioMp3 | AudioBluRay | AudioHomeTheater => Modality::Audio,
            HapticLowFidelity | HapticHighFidelity => Modality::Haptic,
        }
    }

    /// Human-readable class name.
    pub fn name(self) -> &'static str {
        use ModalityClass::*;
        match self {
            Video1080p30 => "1080p 30 fps video",
            Video1080p60 => "1080p 60 fps video",
            Video4k30 => "4K 30 fps video",
            Video4k60 => "4K 60 fps video",
            Video8k30 => "8K 30 fps video",
            Video8k60 => "8K 60 fps video",
            AudioMp3 => "MP3 audio",
            AudioBluRay => "Blu-ray quality audio",
            AudioHomeTheater => "home theater quality audio",
            HapticLowFidelity => "low-fidelity haptic",
            HapticHighFidelity => "high-fidelity haptic",
        }
    }

    /// Stable machine name used in CSV files and configuration.
    pub fn slug(self) -> &'static str {
        use ModalityClass::*;
        match self {
            Video1080p30 => "video_1080p30",
            Video1080p60 => "video_1080p60",
            Video4k30 => "video_4k30",
            Video4k60 => "video_4k60",
            Video8k30 => "video_8k30",
            Video8k60 => "video_8k60",
            AudioMp3 => "audio_mp3",
            AudioBluRay => "audio_bluray",
            AudioHomeTheater => "audio_home_theater",
            HapticLowFidelity => "haptic_low_fidelity",
            HapticHighFidelity => "haptic_high_fidelity",
        }
    }

    /// Requirement row for this class. Rows that only publish an upper
    /// bandwidth bound use a tenth of it as the floor.
    pub fn qos(self) -> QosRequirement {
        use ModalityClass::*;
        const KBPS: f64 = 1e3;
        const MBPS: f64 = 1e6;
        const MS: f64 = 1e-3;
        match self {
            Video1080p30 => QosRequirement::new(8.0 * MBPS, 15.0 * MBPS, 100.0 * MS),
            Video1080p60 => QosRequirement::new(12.0 * MBPS, 24.0 * MBPS, 100.0 * MS),
            Video4k30 => QosRequirement::new(25.0 * MBPS, 50.0 * MBPS, 100.0 * MS),
            Video4k60 => QosRequirement::new(50.0 * MBPS, 100.0 * MBPS, 100.0 * MS),
            Video8k30 => QosRequirement::new(100.0 * MBPS, 150.0 * MBPS, 100.0 * MS),
            Video8k60 => QosRequirement::new(150.0 * MBPS, 200.0 * MBPS, 100.0 * MS),
            AudioMp3 => QosRequirement::new(64.0 * KBPS, 320.0 * KBPS, 100.0 * MS),
            AudioBluRay => QosRequirement::new(448.0 * KBPS, 448.0 * KBPS, 10.0 * MS),
            AudioHomeTheater => QosRequirement::new(1.0 * MBPS, 6.0 * MBPS, 50.0 * MS),
            HapticLowFidelity => QosRequirement::new(10.0 * KBPS, 100.0 * KBPS, 10.0 * MS),
            HapticHighFidelity => QosRequirement::new(100.0 * KBPS, 1.0 * MBPS, 1.0 * MS),
        }
    }

    pub fn of_modality(modality: Modality) -> impl Iterator<Item = ModalityClass> {
        Self::ALL.into_iter().filter(move |c| c.modality() == modality)
    }
}

impl fmt::Display for ModalityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_class_name(s: &str) -> String {
    s.trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

impl FromStr for ModalityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize_class_name(s);
        for class in Self::ALL {
            if key == normalize_class_name(class.name()) || key == normalize_class_name(class.slug())
            {
                return Ok(class);
            }
        }
        let alias = match key.as_str() {
            "mpeg1audiolayeriiimp3audio" | "mpeg1audiolayeriii" | "mp3" => {
                Some(ModalityClass::AudioMp3)
            }
            "bluerayqualityaudio" | "bluerayaudio" | "blurayaudio" => {
                Some(ModalityClass::AudioBluRay)
            }
            "hometheateraudio" => Some(ModalityClass::AudioHomeTheater),
            _ => None,
        };
        alias.ok_or_else(|| Error::UnknownModalityClass(s.to_string()))
    }
}

impl TryFrom<String> for ModalityClass {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ModalityClass> for String {
    fn from(value: ModalityClass) -> Self {
        value.slug().to_string()
    }
}

/// Looks up the QoS row for a class given by name.
pub fn qos_profile(modality_class: &str) -> Result<QosRequirement> {
    modality_class.parse::<ModalityClass>().map(ModalityClass::qos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Content {
    pub id: ContentId,
    pub modality_class: ModalityClass,
    pub modality: Modality,
    pub size: u64,
    pub qos: QosRequirement,
}

impl Content {
    pub fn new(id: ContentId, modality_class: ModalityClass, size: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidContentSize(size));
        }
        Ok(Content {
            id,
            modality_class,
            modality: modality_class.modality(),
            size,
            qos: modality_class.qos(),
        })
    }
}

/// Fractions of the catalog drawn from each modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityMix {
    pub video: f64,
    pub audio: f64,
    pub haptic: f64,
}

impl Default for ModalityMix {
    fn default() -> Self {
        ModalityMix {
            video: 0.4,
            audio: 0.3,
            haptic: 0.3,
        }
    }
}

impl ModalityMix {
    pub fn fraction(&self, modality: Modality) -> f64 {
        match modality {
            Modality::Video => self.video,
            Modality::Audio => self.audio,
            Modality::Haptic => self.haptic,
        }
    }
}

/// Inclusive byte range content sizes are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min_bytes: u64,
    pub max_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRanges {
    pub video: SizeRange,
    pub audio: SizeRange,
    pub haptic: SizeRange,
}

pub const KB: u64 = 1_000;
pub const MB: u64 = 1_000_000;

impl Default for SizeRanges {
    fn default() -> Self {
        SizeRanges {
            video: SizeRange {
                min_bytes: 50 * MB,
                max_bytes: 500 * MB,
            },
            audio: SizeRange {
                min_bytes: MB,
                max_bytes: 10 * MB,
            },
            haptic: SizeRange {
                min_bytes: 10 * KB,
                max_bytes: 500 * KB,
            },
        }
    }
}

impl SizeRanges {
    pub fn range(&self, modality: Modality) -> SizeRange {
        match modality {
            Modality::Video => self.video,
            Modality::Audio => self.audio,
            Modality::Haptic => self.haptic,
        }
    }

    pub fn largest(&self) -> u64 {
        self.video
            .max_bytes
            .max(self.audio.max_bytes)
            .max(self.haptic.max_bytes)
    }

    /// Draws a size for a newly created content of the given modality.
    pub fn sample<R: Rng + ?Sized>(&self, modality: Modality, rng: &mut R) -> u64 {
        let r = self.range(modality);
        rng.random_range(r.min_bytes..=r.max_bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub count: usize,
    #[serde(default)]
    pub modality_mix: ModalityMix,
    #[serde(default)]
    pub size_ranges: SizeRanges,
    pub seed: u64,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            count: 50,
            modality_mix: ModalityMix::default(),
            size_ranges: SizeRanges::default(),
            seed: 1,
        }
    }
}

impl CatalogSpec {
    pub fn validate(&self) -> Result<()> {
        let m = &self.modality_mix;
        for (name, f) in [("video", m.video), ("audio", m.audio), ("haptic", m.haptic)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidCatalogSpec(format!(
                    "{name} fraction {f} is outside [0, 1]"
                )));
            }
        }
        let sum = m.video + m.audio + m.haptic;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCatalogSpec(format!(
                "modality mix sums to {sum}, expected 1"
            )));
        }
        for modality in Modality::ALL {
            let r = self.size_ranges.range(modality);
            if r.min_bytes == 0 || r.min_bytes > r.max_bytes {
                return Err(Error::InvalidCatalogSpec(format!(
                    "{modality} size range {}..={} is empty or includes zero",
                    r.min_bytes, r.max_bytes
                )));
            }
        }
        Ok(())
    }
}

/// Splits `count` across modalities by largest remainder.
fn apportion(count: usize, mix: &ModalityMix) -> [usize; 3] {
    let quotas: Vec<f64> = Modality::ALL
        .iter()
        .map(|&m| mix.fraction(m) * count as f64)
        .collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut rest = count - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    contents: Vec<Content>,
    next_id: u32,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog {
            contents: Vec::new(),
            next_id: 1,
        }
    }
}

impl Catalog {
    pub fn contents(&self) -> &[Content] {
        &self.contents
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn next_id(&self) -> ContentId {
        ContentId(self.next_id)
    }

    pub fn get(&self, id: ContentId) -> Option<&Content> {
        self.contents
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.contents[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = ContentId> + '_ {
        self.contents.iter().map(|c| c.id)
    }

    /// Appends a new content with the next free id.
    pub fn release_content(
        &mut self,
        modality_class: ModalityClass,
        size: u64,
        _slot: u32,
    ) -> Result<Content> {
        let content = Content::new(ContentId(self.next_id), modality_class, size)?;
        self.next_id += 1;
        self.contents.push(content.clone());
        Ok(content)
    }

    /// Builds a catalog from parts; ids must be unique.
    pub fn from_contents(mut contents: Vec<Content>) -> Result<Self> {
        contents.sort_by_key(|c| c.id);
        if contents.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidCatalogSpec("duplicate content id".into()));
        }
        let next_id = contents.last().map_or(1, |c| c.id.0 + 1);
        Ok(Catalog { contents, next_id })
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        w.write_record([
            "id",
            "modality",
            "modality_class",
            "size_bytes",
            "min_bw_bps",
            "max_bw_bps",
            "max_latency_s",
        ])?;
        for c in &self.contents {
            w.write_record([
                c.id.to_string(),
                c.modality.to_string(),
                c.modality_class.slug().to_string(),
                c.size.to_string(),
                c.qos.min_bandwidth_bps.to_string(),
                c.qos.max_bandwidth_bps.to_string(),
                c.qos.max_latency_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a catalog CSV. QoS columns must agree with the class table.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut contents = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != 7 {
                return Err(Error::Parse(format!(
                    "expected 7 catalog columns, found {}",
                    record.len()
                )));
            }
            let field = |i: usize| record.get(i).unwrap_or_default();
            let id: u32 = field(0)
                .parse()
                .map_err(|_| Error::Parse(format!("bad content id `{}`", field(0))))?;
            let class: ModalityClass = field(2).parse()?;
            let modality: Modality = field(1).parse()?;
            if modality != class.modality() {
                return Err(Error::Parse(format!(
                    "content {id}: modality {modality} does not match class {class}"
                )));
            }
            let size: u64 = field(3)
                .parse()
                .map_err(|_| Error::Parse(format!("bad size `{}`", field(3))))?;
            let content = Content::new(ContentId(id), class, size)?;
            let listed = [field(4), field(5), field(6)]
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{v}`"))));
            let expected = [
                content.qos.min_bandwidth_bps,
                content.qos.max_bandwidth_bps,
                content.qos.max_latency_s,
            ];
            for (got, want) in listed.into_iter().zip(expected) {
                if got? != want {
                    return Err(Error::Parse(format!(
                        "content {id}: QoS columns disagree with the {class} row"
                    )));
                }
            }
            contents.push(content);
        }
        Self::from_contents(contents)
    }
}

/// Generates a catalog deterministically from its spec.
///
/// Modality counts are apportioned exactly (largest remainder), then
/// shuffled across ids; classes are uniform within a modality and sizes
/// uniform within the modality's byte range.
pub fn build_catalog(spec: &CatalogSpec) -> Result<Catalog> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, "catalog");
    let counts = apportion(spec.count, &spec.modality_mix);
    let mut modalities: Vec<Modality> = Modality::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&m, n)| std::iter::repeat(m).take(n))
        .collect();
    modalities.shuffle(&mut rng);

    let mut catalog = Catalog::default();
    for modality in modalities {
        let classes: Vec<ModalityClass> = ModalityClass::of_modality(modality).collect();
        let class = classes[rng.random_range(0..classes.len())];
        let size = spec.size_ranges.sample(modality, &mut rng);
        catalog.release_content(class, size, 0)?;
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_catalog_has_500_contents() {
        let spec = CatalogSpec {
            count: 500,
            seed: 1,
            ..CatalogSpec::default()
        };
        let catalog = build_catalog(&spec).unwrap();
        assert_eq!(catalog.len(), 500);
        assert_eq!(catalog.next_id(), ContentId(501));
        for modality in Modality::ALL {
            let n = catalog
                .contents()
                .iter()
                .filter(|c| c.modality == modality)
                .count() as f64;
            let expected = 500.0 * spec.modality_mix.fraction(modality);
            assert!((n - expected).abs() <= 2.0, "{modality}: {n} vs {expected}");
        }
    }

    #[test]
    fn empty_catalog() {
        let spec = CatalogSpec {
            count: 0,
            ..CatalogSpec::default()
        };
        let catalog = build_catalog(&spec).unwrap();
        assert!(catalog.is_empty());
        assert_eq!(catalog.next_id(), ContentId(1));
    }

    #[test]
    fn seeded_builds_are_identical() {
        let spec = CatalogSpec {
            count: 3,
            seed: 42,
            ..CatalogSpec::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        build_catalog(&spec).unwrap().write_csv(&mut a).unwrap();
        build_catalog(&spec).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mix_must_sum_to_one() {
        let spec = CatalogSpec {
            modality_mix: ModalityMix {
                video: 0.5,
                audio: 0.3,
                haptic: 0.3,
            },
            ..CatalogSpec::default()
        };
        assert!(matches!(
            build_catalog(&spec),
            Err(Error::InvalidCatalogSpec(_))
        ));
    }

    #[test]
    fn negative_count_is_rejected_at_parse() {
        let parsed: std::result::Result<CatalogSpec, _> = toml::from_str("count = -3\nseed = 1\n");
        assert!(parsed.is_err());
    }

    #[test]
    fn qos_rows() {
        let haptic = qos_profile("high-fidelity haptic").unwrap();
        assert_eq!(haptic.max_bandwidth_bps, 1e6);
        assert_eq!(haptic.max_latency_s, 1e-3);

        let uhd = qos_profile("4K 60 fps video").unwrap();
        assert_eq!(uhd.min_bandwidth_bps, 50e6);
        assert_eq!(uhd.max_bandwidth_bps, 100e6);
        assert_eq!(uhd.max_latency_s, 0.1);

        assert!(matches!(
            qos_profile("3D hologram"),
            Err(Error::UnknownModalityClass(_))
        ));
    }

    #[test]
    fn qos_table_is_well_formed() {
        for class in ModalityClass::ALL {
            let q = class.qos();
            assert!(q.min_bandwidth_bps <= q.max_bandwidth_bps, "{class}");
            assert!(q.max_latency_s > 0.0, "{class}");
            assert_eq!(class.name().parse::<ModalityClass>().unwrap(), class);
            assert_eq!(class.slug().parse::<ModalityClass>().unwrap(), class);
        }
    }

    #[test]
    fn every_content_carries_its_class_row() {
        let catalog = build_catalog(&CatalogSpec {
            count: 200,
            seed: 9,
            ..CatalogSpec::default()
        })
        .unwrap();
        for c in catalog.contents() {
            assert_eq!(c.qos, c.modality_class.qos());
            assert_eq!(c.modality, c.modality_class.modality());
            let r = CatalogSpec::default().size_ranges.range(c.modality);
            assert!((r.min_bytes..=r.max_bytes).contains(&c.size));
        }
    }

    #[test]
    fn release_appends_without_touching_existing() {
        let mut catalog = build_catalog(&CatalogSpec {
            count: 500,
            ..CatalogSpec::default()
        })
        .unwrap();
        let before = catalog.clone();
        let released = catalog
            .release_content("MPEG-1 Audio Layer III".parse().unwrap(), 4 * MB, 10)
            .unwrap();
        assert_eq!(released.id, ContentId(501));
        assert_eq!(released.qos.max_latency_s, 0.1);
        assert_eq!(catalog.len(), 501);
        assert_eq!(&catalog.contents()[..500], before.contents());

        let a = catalog
            .release_content(ModalityClass::HapticLowFidelity, 20 * KB, 11)
            .unwrap();
        let b = catalog
            .release_content(ModalityClass::HapticLowFidelity, 20 * KB, 11)
            .unwrap();
        assert_ne!(a.id, b.id);
    }

    #[test]
    fn release_rejects_zero_size() {
        let mut catalog = Catalog::default();
        assert!(matches!(
            catalog.release_content(ModalityClass::AudioMp3, 0, 0),
            Err(Error::InvalidContentSize(0))
        ));
        assert!(catalog.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let catalog = build_catalog(&CatalogSpec::default()).unwrap();
        let mut buf = Vec::new();
        catalog.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "id,modality,modality_class,size_bytes,min_bw_bps,max_bw_bps,max_latency_s\n"
        ));
        let back = Catalog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, catalog);
    }
}
