//! Points, ℓ_p^q cost models, instance containers, spread, normalization and
//! seeded generators.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Point = Vec<f64>;

/// `cost(u, v) = ‖u − v‖_p^q`. `p = f64::INFINITY` is the max-coordinate norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub p: f64,
    pub q: f64,
}

impl CostModel {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p >= 1.0) || !(q >= 1.0) || q.is_infinite() {
            return Err(Error::Input(format!("cost model needs p >= 1 and finite q >= 1, got p={p}, q={q}")));
        }
        Ok(CostModel { p, q })
    }
    pub fn l1() -> Self {
        CostModel { p: 1.0, q: 1.0 }
    }
    pub fn l2() -> Self {
        CostModel { p: 2.0, q: 1.0 }
    }
    pub fn l2_pow(q: f64) -> Self {
        CostModel { p: 2.0, q }
    }

    pub fn is_metric(&self) -> bool {
        self.q == 1.0
    }

    /// Unchecked cost between equal-length coordinate slices.
    #[inline]
    pub fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        let r = if self.p == 1.0 {
            u.iter().zip(v).map(|(x, y)| (x - y).abs()).sum::<f64>()
        } else if self.p == 2.0 {
            u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        } else if self.p.is_infinite() {
            u.iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        } else {
            u.iter().zip(v).map(|(x, y)| (x - y).abs().powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        };
        self.raise(r)
    }

    /// Cost from `u` to the nearest point of an axis-parallel box.
    #[inline]
    pub fn distance_to_box(&self, u: &[f64], bbox: &[(f64, f64)]) -> f64 {
        let gap = |(x, (lo, hi)): (&f64, &(f64, f64))| {
            if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        };
        let g = u.iter().zip(bbox).map(gap);
        let r = if self.p == 1.0 {
            g.sum::<f64>()
        } else if self.p == 2.0 {
            g.map(|t| t * t).sum::<f64>().sqrt()
        } else if self.p.is_infinite() {
            g.fold(0.0, f64::max)
        } else {
            g.map(|t| t.powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        };
        self.raise(r)
    }

    /// Norm length raised to the cost exponent.
    #[inline]
    pub fn raise(&self, r: f64) -> f64 {
        if self.q == 1.0 {
            r
        } else if self.q == 2.0 {
            r * r
        } else {
            r.powf(self.q)
        }
    }

    /// Length of the all-ones vector in ℓ_p, raised to q: the cost across
    /// the unit hypercube diagonal.
    pub fn unit_diagonal_cost(&self, d: usize) -> f64 {
        let r = if self.p.is_infinite() { 1.0 } else { (d as f64).powf(1.0 / self.p) };
        self.raise(r)
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::l2()
    }
}

pub fn cost(u: &[f64], v: &[f64], model: &CostModel) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Input(format!("dimension mismatch: {} vs {}", u.len(), v.len())));
    }
    Ok(model.distance(u, v))
}

/// JSON encoding of p: a number, or the string "inf".
pub(crate) mod p_value {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum PRepr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match PRepr::deserialize(d)? {
            PRepr::Num(x) => Ok(x),
            PRepr::Str(s) if s.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            PRepr::Str(s) => Err(serde::de::Error::custom(format!("invalid p value {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KspInstance {
    pub d: usize,
    pub model: CostModel,
    pub requests: Vec<Point>,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KspiInstance {
    pub base: KspInstance,
    pub servers: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Ksp(KspInstance),
    Kspi(KspiInstance),
}

/// A bichromatic point set for the perfect-matching (grs / reduction) modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingInstance {
    pub d: usize,
    #[serde(with = "p_value")]
    pub p: f64,
    pub q: f64,
    pub a: Vec<Point>,
    pub b: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    d: usize,
    #[serde(with = "p_value")]
    p: f64,
    q: f64,
    k: usize,
    requests: Vec<Point>,
    #[serde(default)]
    servers: Option<Vec<Point>>,
}

fn check_points(what: &str, pts: &[Point], d: usize) -> Result<()> {
    for (i, p) in pts.iter().enumerate() {
        if p.len() != d {
            return Err(Error::Input(format!("{what}[{i}] has dimension {}, expected {d}", p.len())));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input(format!("{what}[{i}] has a non-finite coordinate")));
        }
    }
    Ok(())
}

impl KspInstance {
    pub fn n(&self) -> usize {
        self.requests.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Input("dimension must be >= 1".into()));
        }
        CostModel::new(self.model.p, self.model.q)?;
        if self.requests.is_empty() {
            return Err(Error::Input("instance has no requests".into()));
        }
        if self.k < 1 || self.k > self.n() {
            return Err(Error::Input(format!("k = {} outside 1..={}", self.k, self.n())));
        }
        check_points("requests", &self.requests, self.d)
    }
}

impl KspiInstance {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.servers.len() != self.base.k {
            return Err(Error::Input(format!(
                "k-SPI needs exactly k = {} servers, got {}",
                self.base.k,
                self.servers.len()
            )));
        }
        check_points("servers", &self.servers, self.base.d)
    }
}

impl MatchingInstance {
    pub fn model(&self) -> CostModel {
        CostModel { p: self.p, q: self.q }
    }
    pub fn n(&self) -> usize {
        self.a.len()
    }
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Input("dimension must be >= 1".into()));
        }
        CostModel::new(self.p, self.q)?;
        if self.a.len() != self.b.len() {
            return Err(Error::Input(format!("|A| = {} differs from |B| = {}", self.a.len(), self.b.len())));
        }
        check_points("a", &self.a, self.d)?;
        check_points("b", &self.b, self.d)
    }
    pub fn from_json(s: &str) -> Result<Self> {
        let m: MatchingInstance = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

impl Instance {
    pub fn base(&self) -> &KspInstance {
        match self {
            Instance::Ksp(i) => i,
            Instance::Kspi(i) => &i.base,
        }
    }
    pub fn servers(&self) -> Option<&[Point]> {
        match self {
            Instance::Ksp(_) => None,
            Instance::Kspi(i) => Some(&i.servers),
        }
    }
    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Ksp(i) => i.validate(),
            Instance::Kspi(i) => i.validate(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(s)?;
        let base = KspInstance { d: f.d, model: CostModel { p: f.p, q: f.q }, requests: f.requests, k: f.k };
        let inst = match f.servers {
            None => Instance::Ksp(base),
            Some(servers) => Instance::Kspi(KspiInstance { base, servers }),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let b = self.base();
        let f = InstanceFile {
            d: b.d,
            p: b.model.p,
            q: b.model.q,
            k: b.k,
            requests: b.requests.clone(),
            servers: self.servers().map(|s| s.to_vec()),
        };
        serde_json::to_string_pretty(&f).expect("instance serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub diameter: f64,
    pub closest_pair: f64,
    pub spread: f64,
}

pub fn spread(points: &[Point], model: &CostModel) -> Result<SpreadReport> {
    let mut diameter = 0.0f64;
    let mut closest = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let c = cost(&points[i], &points[j], model)?;
            diameter = diameter.max(c);
            if c > 0.0 {
                closest = closest.min(c);
            }
        }
    }
    if !closest.is_finite() {
        return Err(Error::DegenerateSpread);
    }
    Ok(SpreadReport { diameter, closest_pair: closest, spread: diameter / closest })
}

/// Spread over requests only, and over requests plus servers (k-SPI).
pub fn instance_spread(inst: &Instance) -> Result<(SpreadReport, Option<SpreadReport>)> {
    let b = inst.base();
    let req = spread(&b.requests, &b.model)?;
    let with_servers = match inst.servers() {
        Some(s) => {
            let mut all = b.requests.clone();
            all.extend_from_slice(s);
            Some(spread(&all, &b.model)?)
        }
        None => None,
    };
    Ok((req, with_servers))
}

/// Uniform scale + translation into [0,1]^d. `original = normalized * scale + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vec<f64>,
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Normalization { scale: 1.0, offset: vec![0.0; d] }
    }

    pub fn fit<'a>(d: usize, points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut any = false;
        for p in points {
            any = true;
            for t in 0..d {
                lo[t] = lo[t].min(p[t]);
                hi[t] = hi[t].max(p[t]);
            }
        }
        if !any || (lo.iter().all(|&x| x >= 0.0) && hi.iter().all(|&x| x <= 1.0)) {
            return Normalization::identity(d);
        }
        let extent = (0..d).map(|t| hi[t] - lo[t]).fold(0.0, f64::max);
        let scale = if extent > 0.0 { extent } else { 1.0 };
        Normalization { scale, offset: lo }
    }

    pub fn apply(&self, p: &[f64]) -> Point {
        p.iter().zip(&self.offset).map(|(x, o)| ((x - o) / self.scale).clamp(0.0, 1.0)).collect()
    }

    /// Factor converting normalized costs back to original units.
    pub fn cost_factor(&self, model: &CostModel) -> f64 {
        model.raise(self.scale)
    }
}

pub fn normalize(inst: &Instance) -> (Instance, Normalization) {
    let b = inst.base();
    let all = b.requests.iter().chain(inst.servers().unwrap_or(&[]).iter());
    let norm = Normalization::fit(b.d, all);
    let map = |v: &[Point]| v.iter().map(|p| norm.apply(p)).collect::<Vec<_>>();
    let base = KspInstance { d: b.d, model: b.model, requests: map(&b.requests), k: b.k };
    let out = match inst {
        Instance::Ksp(_) => Instance::Ksp(base),
        Instance::Kspi(i) => Instance::Kspi(KspiInstance { base, servers: map(&i.servers) }),
    };
    (out, norm)
}

/// Moves later copies of coincident points by multiples of 2^-40 · diameter
/// along the first axis. Returns the number of moved points.
pub fn jitter_duplicates(points: &mut [Point]) -> usize {
    let d = points.first().map_or(0, |p| p.len());
    if d == 0 {
        return 0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points.iter() {
        for &x in p {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let step = ((hi - lo).max(1.0)) * 2f64.powi(-40);
    let key = |p: &Point| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(points.len());
    let mut moved = 0;
    for p in points.iter_mut() {
        let mut m = 0;
        while !seen.insert(key(p)) {
            m += 1;
            p[0] += step * m as f64;
        }
        if m > 0 {
            moved += 1;
        }
    }
    if moved > 0 {
        log::warn!("jittered {moved} duplicate point(s) by multiples of {step:e}; costs are perturbed");
    }
    moved
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Uniform,
    Clustered,
    Collinear,
}

impl std::str::FromStr for GenKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GenKind::Uniform),
            "clustered" => Ok(GenKind::Clustered),
            "collinear" => Ok(GenKind::Collinear),
            _ => Err(Error::Input(format!("unknown generator kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenOptions {
    pub kind: GenKind,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub model: CostModel,
    /// Round coordinates to integers in `0..=grid`.
    pub integer_grid: Option<u32>,
    /// Also draw k server locations (k-SPI instance).
    pub servers: bool,
}

impl GenOptions {
    pub fn new(kind: GenKind, n: usize, d: usize, k: usize, seed: u64) -> Self {
        GenOptions { kind, n, d, k, seed, model: CostModel::l2(), integer_grid: None, servers: false }
    }
}

pub fn generate(kind: GenKind, n: usize, d: usize, k: usize, seed: u64) -> KspInstance {
    match generate_with(&GenOptions::new(kind, n, d, k, seed)).expect("valid generator arguments") {
        Instance::Ksp(i) => i,
        Instance::Kspi(i) => i.base,
    }
}

pub fn generate_with(o: &GenOptions) -> Result<Instance> {
    if o.n == 0 || o.d == 0 || o.k == 0 || o.k > o.n {
        return Err(Error::Input(format!("generator needs n >= 1, d >= 1, 1 <= k <= n (n={}, d={}, k={})", o.n, o.d, o.k)));
    }
    let total = o.n + if o.servers { o.k } else { 0 };
    if let Some(g) = o.integer_grid {
        if ((g as f64) + 1.0).powi(o.d as i32) < total as f64 {
            return Err(Error::Input(format!("integer grid 0..={g} cannot hold {total} distinct points")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let centers: Vec<Point> = match o.kind {
        GenKind::Clustered => {
            let c = ((o.n as f64).sqrt().ceil() as usize).max(1);
            (0..c).map(|_| (0..o.d).map(|_| rng.gen_range(0.1..0.9)).collect()).collect()
        }
        _ => Vec::new(),
    };
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(total);
    let mut draw = |rng: &mut ChaCha8Rng| -> Point {
        loop {
            let mut p: Point = match o.kind {
                GenKind::Uniform => (0..o.d).map(|_| rng.gen::<f64>()).collect(),
                GenKind::Clustered => {
                    let c = &centers[rng.gen_range(0..centers.len())];
                    c.iter().map(|x| (x + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0)).collect()
                }
                GenKind::Collinear => {
                    let mut p = vec![0.0; o.d];
                    p[0] = rng.gen::<f64>();
                    p
                }
            };
            if let Some(g) = o.integer_grid {
                for x in p.iter_mut() {
                    *x = (*x * g as f64).round();
                }
            }
            if seen.insert(p.iter().map(|x| x.to_bits()).collect()) {
                return p;
            }
        }
    };
    let mut requests: Vec<Point> = (0..o.n).map(|_| draw(&mut rng)).collect();
    if o.kind == GenKind::Collinear {
        requests.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    let base = KspInstance { d: o.d, model: o.model, requests, k: o.k };
    if o.servers {
        let servers = (0..o.k).map(|_| draw(&mut rng)).collect();
        Ok(Instance::Kspi(KspiInstance { base, servers }))
    } else {
        Ok(Instance::Ksp(base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cost_examples() {
        let o = vec![0.0, 0.0];
        let v = vec![3.0, 4.0];
        assert_eq!(cost(&o, &o, &CostModel::l1()).unwrap(), 0.0);
        assert_eq!(cost(&o, &v, &CostModel::l2()).unwrap(), 5.0);
        assert_eq!(cost(&o, &v, &CostModel { p: 1.0, q: 2.0 }).unwrap(), 49.0);
        assert_eq!(cost(&o, &v, &CostModel { p: f64::INFINITY, q: 1.0 }).unwrap(), 4.0);
        assert!(cost(&o, &[1.0], &CostModel::l1()).is_err());
    }

    #[test]
    fn spread_examples() {
        let line = |xs: &[f64]| xs.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let r = spread(&line(&[0.0, 1.0, 3.0]), &CostModel::l1()).unwrap();
        assert_eq!((r.diameter, r.closest_pair, r.spread), (3.0, 1.0, 3.0));
        let r = spread(&line(&[0.0, 1.0]), &CostModel::l1()).unwrap();
        assert_eq!((r.diameter, r.closest_pair, r.spread), (1.0, 1.0, 1.0));
        let r = spread(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]], &CostModel::l1()).unwrap();
        assert_eq!((r.diameter, r.closest_pair, r.spread), (1.0, 1.0, 1.0));
        assert!(matches!(spread(&line(&[2.0, 2.0]), &CostModel::l1()), Err(Error::DegenerateSpread)));
    }

    #[test]
    fn normalize_examples() {
        let inst = Instance::Ksp(KspInstance { d: 1, model: CostModel::l1(), requests: vec![vec![-2.0], vec![2.0]], k: 1 });
        let (n, norm) = normalize(&inst);
        assert_eq!(n.base().requests, vec![vec![0.0], vec![1.0]]);
        assert_eq!(norm.scale, 4.0);
        let unit = Instance::Ksp(KspInstance { d: 2, model: CostModel::l2(), requests: vec![vec![0.2, 0.3], vec![0.5, 0.9]], k: 1 });
        let (n2, norm2) = normalize(&unit);
        assert_eq!(n2, unit);
        assert_eq!(norm2, Normalization::identity(2));
        let single = Instance::Ksp(KspInstance { d: 2, model: CostModel::l2(), requests: vec![vec![5.0, 7.0]], k: 1 });
        assert_eq!(normalize(&single).0.base().requests, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn generator_contracts() {
        let a = generate(GenKind::Uniform, 5, 2, 2, 7);
        let b = generate(GenKind::Uniform, 5, 2, 2, 7);
        assert_eq!(a, b);
        let c = generate(GenKind::Collinear, 20, 1, 1, 3);
        assert!(c.requests.windows(2).all(|w| w[0][0] <= w[1][0]));
        for kind in [GenKind::Uniform, GenKind::Clustered, GenKind::Collinear] {
            let g = generate(kind, 30, 2, 3, 11);
            spread(&g.requests, &g.model).unwrap();
            g.validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip_and_inf() {
        let s = r#"{"d":2,"p":"inf","q":1,"k":1,"requests":[[0,0],[1,2]],"servers":[[3,3]]}"#;
        let inst = Instance::from_json(s).unwrap();
        assert!(inst.base().model.p.is_infinite());
        assert!(matches!(inst, Instance::Kspi(_)));
        assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);
        assert!(Instance::from_json(r#"{"d":2,"p":1,"q":1,"k":3,"requests":[[0,0]]}"#).is_err());
    }

    #[test]
    fn jitter_separates_duplicates() {
        let mut pts = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.1, 0.2]];
        assert_eq!(jitter_duplicates(&mut pts), 2);
        spread(&pts, &CostModel::l2()).unwrap();
        assert!((pts[2][0] - 0.5).abs() < 1e-10);
    }

    fn pt(d: usize) -> impl Strategy<Value = Point> {
        prop::collection::vec(-10.0f64..10.0, d)
    }

    fn model() -> impl Strategy<Value = CostModel> {
        (prop_oneof![Just(1.0), Just(2.0), Just(3.5), Just(f64::INFINITY)], 1.0f64..3.0)
            .prop_map(|(p, q)| CostModel { p, q })
    }

    proptest! {
        #[test]
        fn cost_symmetric_and_identity(u in pt(3), v in pt(3), m in model()) {
            let a = m.distance(&u, &v);
            prop_assert_eq!(a, m.distance(&v, &u));
            prop_assert_eq!(m.distance(&u, &u), 0.0);
            if u != v { prop_assert!(a > 0.0); }
        }

        #[test]
        fn triangle_inequality_for_metrics(u in pt(2), v in pt(2), w in pt(2),
                                           p in prop_oneof![Just(1.0), Just(2.0), Just(f64::INFINITY), 1.0f64..6.0]) {
            let m = CostModel { p, q: 1.0 };
            prop_assert!(m.distance(&u, &w) <= m.distance(&u, &v) + m.distance(&v, &w) + 1e-9);
        }

        #[test]
        fn normalize_idempotent(pts in prop::collection::vec(pt(2), 1..20)) {
            let inst = Instance::Ksp(KspInstance { d: 2, model: CostModel::l2(), requests: pts, k: 1 });
            let (once, _) = normalize(&inst);
            let (twice, n2) = normalize(&once);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(n2, Normalization::identity(2));
            for p in &once.base().requests {
                prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }
}
