use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One sampled intensity of a scene point in one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point_id: u64,
    pub image_id: u32,
    /// Gray level / 255, in [0, 1].
    pub intensity: f64,
    /// Lens vignetting evaluated at the sample, in (0, 1].
    pub vignette_factor: f64,
}

impl Observation {
    pub fn new(point_id: u64, image_id: u32, intensity: f64) -> Self {
        Observation {
            point_id,
            image_id,
            intensity,
            vignette_factor: 1.0,
        }
    }
}

/// Validated set of observations, sorted by `(point_id, image_id)`.
///
/// Points seen in fewer than two images carry no scale information and are
/// dropped on construction; each drop is recorded in `warnings`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    observations: Vec<Observation>,
    pub warnings: Vec<String>,
}

impl ObservationSet {
    pub fn new(mut observations: Vec<Observation>) -> Result<Self> {
        for (i, o) in observations.iter().enumerate() {
            check_observation(o).map_err(|m| Error::InvalidInput(format!("observation {i}: {m}")))?;
        }
        observations.sort_by_key(|o| (o.point_id, o.image_id));
        if let Some(w) = observations
            .windows(2)
            .find(|w| (w[0].point_id, w[0].image_id) == (w[1].point_id, w[1].image_id))
        {
            return Err(Error::InvalidInput(format!(
                "duplicate observation of point {} in image {}",
                w[0].point_id, w[0].image_id
            )));
        }
        let mut set = ObservationSet {
            observations,
            warnings: Vec::new(),
        };
        set.drop_single_view_points();
        Ok(set)
    }

    pub(crate) fn from_sorted_unchecked(observations: Vec<Observation>, warnings: Vec<String>) -> Self {
        let mut set = ObservationSet { observations, warnings };
        set.drop_single_view_points();
        set
    }

    fn drop_single_view_points(&mut self) {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for o in &self.observations {
            *counts.entry(o.point_id).or_default() += 1;
        }
        let single: BTreeSet<u64> = counts.iter().filter(|(_, &c)| c < 2).map(|(&id, _)| id).collect();
        if !single.is_empty() {
            self.observations.retain(|o| !single.contains(&o.point_id));
            self.warnings.push(format!(
                "dropped {} point(s) observed in fewer than 2 images",
                single.len()
            ));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    pub fn as_slice(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn point_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.observations.iter().map(|o| o.point_id).collect();
        ids.dedup();
        ids
    }

    pub fn image_ids(&self) -> Vec<u32> {
        let ids: BTreeSet<u32> = self.observations.iter().map(|o| o.image_id).collect();
        ids.into_iter().collect()
    }

    pub fn n_points(&self) -> usize {
        self.point_ids().len()
    }

    pub fn n_images(&self) -> usize {
        self.image_ids().len()
    }

    pub fn for_image(&self, image_id: u32) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(move |o| o.image_id == image_id)
    }

    /// Keep observations matching `keep`, re-applying the two-view rule.
    pub fn retain(&self, mut keep: impl FnMut(&Observation) -> bool) -> Self {
        let obs = self.observations.iter().copied().filter(|o| keep(o)).collect();
        Self::from_sorted_unchecked(obs, self.warnings.clone())
    }
}

fn check_observation(o: &Observation) -> std::result::Result<(), String> {
    if !(0.0..=1.0).contains(&o.intensity) {
        return Err(format!("intensity {} outside [0, 1]", o.intensity));
    }
    if !(o.vignette_factor > 0.0 && o.vignette_factor <= 1.0) {
        return Err(format!("vignette_factor {} outside (0, 1]", o.vignette_factor));
    }
    Ok(())
}

const SRC: &str = "observations.csv";

/// Parse the `point_id,image_id,intensity[,vignette_factor]` table.
pub fn parse_observations<R: Read>(reader: R) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (pid, iid, int) = match (col("point_id"), col("image_id"), col("intensity")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::parse(
                SRC,
                1,
                "header must contain point_id,image_id,intensity[,vignette_factor]",
            ))
        }
    };
    let vig = col("vignette_factor");
    let mut warnings = Vec::new();
    for h in headers.iter() {
        if !["point_id", "image_id", "intensity", "vignette_factor"].contains(&h) {
            warnings.push(format!("ignored unknown column '{h}'"));
        }
    }

    let mut observations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |idx: usize, name: &str| -> Result<&str> {
            rec.get(idx)
                .ok_or_else(|| Error::parse(SRC, line, format!("missing {name}")))
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            let s = get(idx, name)?;
            s.parse::<f64>()
                .map_err(|_| Error::parse(SRC, line, format!("invalid {name} '{s}'")))
        };
        let point_id: u64 = get(pid, "point_id")?
            .parse()
            .map_err(|_| Error::parse(SRC, line, "invalid point_id"))?;
        let image_id: u32 = get(iid, "image_id")?
            .parse()
            .map_err(|_| Error::parse(SRC, line, "invalid image_id"))?;
        let o = Observation {
            point_id,
            image_id,
            intensity: num(int, "intensity")?,
            vignette_factor: match vig {
                Some(v) => num(v, "vignette_factor")?,
                None => 1.0,
            },
        };
        check_observation(&o).map_err(|m| Error::parse(SRC, line, m))?;
        observations.push(o);
    }
    let mut set = ObservationSet::new(observations)?;
    warnings.append(&mut set.warnings);
    set.warnings = warnings;
    Ok(set)
}

pub fn write_observations<W: Write>(obs: &ObservationSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["point_id", "image_id", "intensity", "vignette_factor"])?;
    for o in obs.iter() {
        w.write_record([
            o.point_id.to_string(),
            o.image_id.to_string(),
            o.intensity.to_string(),
            o.vignette_factor.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
