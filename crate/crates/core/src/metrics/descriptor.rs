use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::Design;
use crate::error::{CoreError, Result};
use crate::program::NUM_TYPES;

pub const DESCRIPTOR_DIM: usize = 128;
pub const MAX_RESOLUTION: usize = 64;
pub const DEFAULT_RESOLUTION: usize = 16;

/// Maps a design to a fixed-length feature vector for Fréchet scoring.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, design: &Design) -> Result<Vec<f64>>;
}

/// Dense `[channels][d][h][w]` volume.
#[derive(Debug, Clone)]
struct Volume {
    c: usize,
    n: usize,
    data: Vec<f64>,
}

impl Volume {
    fn zeros(c: usize, n: usize) -> Self {
        Volume {
            c,
            n,
            data: vec![0.0; c * n * n * n],
        }
    }

    fn at(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        ((c * self.n + z) * self.n + y) * self.n + x
    }
}

#[derive(Debug, Clone)]
struct Conv3 {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    /// `[cout][cin][k][k][k]`
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Conv3 {
    fn new(
        rng: &mut impl Rng,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = (cin * k * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let w = (0..cout * cin * k * k * k)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Conv3 {
            cin,
            cout,
            k,
            stride,
            pad,
            w,
            b: vec![0.0; cout],
        }
    }

    fn forward(&self, x: &Volume) -> Volume {
        assert_eq!(x.c, self.cin);
        let n_out = (x.n + 2 * self.pad - self.k) / self.stride + 1;
        let mut y = Volume::zeros(self.cout, n_out);
        let (k, s, p, n) = (self.k, self.stride, self.pad as isize, x.n as isize);
        for o in 0..self.cout {
            let base = y.at(o, 0, 0, 0);
            y.data[base..base + n_out * n_out * n_out].fill(self.b[o]);
            for i in 0..self.cin {
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let w = self.w[(((o * self.cin + i) * k + kz) * k + ky) * k + kx];
                            if w == 0.0 {
                                continue;
                            }
                            for z in 0..n_out {
                                let zi = (z * s + kz) as isize - p;
                                if zi < 0 || zi >= n {
                                    continue;
                                }
                                for yy in 0..n_out {
                                    let yi = (yy * s + ky) as isize - p;
                                    if yi < 0 || yi >= n {
                                        continue;
                                    }
                                    let row_out = y.at(o, z, yy, 0);
                                    let row_in = x.at(i, zi as usize, yi as usize, 0);
                                    for xx in 0..n_out {
                                        let xi = (xx * s + kx) as isize - p;
                                        if xi < 0 || xi >= n {
                                            continue;
                                        }
                                        y.data[row_out + xx] += w * x.data[row_in + xi as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }
}

fn relu(v: &mut Volume) {
    v.data.iter_mut().for_each(|x| *x = x.max(0.0));
}

#[derive(Debug, Clone)]
struct ResBlock {
    a: Conv3,
    b: Conv3,
    skip: Option<Conv3>,
}

impl ResBlock {
    fn new(rng: &mut impl Rng, cin: usize, cout: usize, stride: usize) -> Self {
        let skip = (cin != cout || stride != 1).then(|| Conv3::new(rng, cin, cout, 1, stride, 0));
        ResBlock {
            a: Conv3::new(rng, cin, cout, 3, stride, 1),
            b: Conv3::new(rng, cout, cout, 3, 1, 1),
            skip,
        }
    }

    fn forward(&self, x: &Volume) -> Volume {
        let mut h = self.a.forward(x);
        relu(&mut h);
        let mut h = self.b.forward(&h);
        match &self.skip {
            Some(s) => {
                let sk = s.forward(x);
                h.data.iter_mut().zip(&sk.data).for_each(|(a, b)| *a += b);
            }
            None => h.data.iter_mut().zip(&x.data).for_each(|(a, b)| *a += b),
        }
        relu(&mut h);
        h
    }
}

/// 3D residual descriptor network with fixed seeded weights.
///
/// The input is a per-type occupancy grid over the bounding box of the
/// design's voxels; six residual blocks downsample it by four and a final
/// full-extent convolution flattens it to [`DESCRIPTOR_DIM`] features.
#[derive(Debug, Clone)]
pub struct DescriptorNet {
    resolution: usize,
    stem: Conv3,
    blocks: Vec<ResBlock>,
    head: Conv3,
}

impl DescriptorNet {
    pub fn new(seed: u64, resolution: usize) -> Result<Self> {
        if resolution < 4 || !resolution.is_multiple_of(4) || resolution > MAX_RESOLUTION {
            return Err(CoreError::invalid(
                "resolution",
                format!(
                    "resolution must be a multiple of 4 in [4, {MAX_RESOLUTION}], got {resolution}"
                ),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv3::new(&mut rng, NUM_TYPES, 8, 3, 1, 1);
        let blocks = [
            (8, 8, 1),
            (8, 8, 1),
            (8, 16, 2),
            (16, 16, 1),
            (16, 32, 2),
            (32, 32, 1),
        ]
        .into_iter()
        .map(|(i, o, s)| ResBlock::new(&mut rng, i, o, s))
        .collect();
        let head = Conv3::new(&mut rng, 32, DESCRIPTOR_DIM, resolution / 4, 1, 0);
        Ok(DescriptorNet {
            resolution,
            stem,
            blocks,
            head,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// One-hot type grid sampled at cell centres; unused space stays zero.
    fn rasterize(&self, design: &Design) -> Volume {
        let r = self.resolution;
        let mut v = Volume::zeros(NUM_TYPES, r);
        let nodes = &design.voxel_graph.nodes;
        if nodes.is_empty() {
            return v;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for n in nodes {
            let m = n.cuboid.max_corner();
            for a in 0..3 {
                lo[a] = lo[a].min(n.cuboid.position[a]);
                hi[a] = hi[a].max(m[a]);
            }
        }
        let centre = |a: usize, i: usize| lo[a] + (i as f64 + 0.5) / r as f64 * (hi[a] - lo[a]);
        let used: Vec<_> = nodes
            .iter()
            .filter_map(|n| n.label.map(|t| (n, t)))
            .collect();
        for z in 0..r {
            for y in 0..r {
                for x in 0..r {
                    let p = [centre(0, x), centre(1, y), centre(2, z)];
                    let hit = used.iter().find(|(n, _)| {
                        let m = n.cuboid.max_corner();
                        (0..3).all(|a| p[a] >= n.cuboid.position[a] && p[a] < m[a])
                    });
                    if let Some((_, t)) = hit {
                        let idx = v.at(t.index(), z, y, x);
                        v.data[idx] = 1.0;
                    }
                }
            }
        }
        v
    }
}

impl Embedder for DescriptorNet {
    fn dim(&self) -> usize {
        DESCRIPTOR_DIM
    }

    fn embed(&self, design: &Design) -> Result<Vec<f64>> {
        let mut h = self.stem.forward(&self.rasterize(design));
        relu(&mut h);
        for b in &self.blocks {
            h = b.forward(&h);
        }
        let out = self.head.forward(&h);
        debug_assert_eq!(out.data.len(), DESCRIPTOR_DIM);
        Ok(out.data)
    }
}
