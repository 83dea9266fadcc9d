//! Quadrant crop/uncrop of BEV maps, channel-wise fusion, and the analytic
//! FLOP model for the compute saved by cropping.

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::bev::{BevMap, VoxelVolume};
use crate::error::{Error, Result};
use crate::slicing::SliceSpec;

/// One quarter of the BEV grid, ego at the center. Indices walk the
/// quadrants counterclockwise from (+x, +y), so quadrant `q` covers
/// azimuths `[90q, 90(q+1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    PosXPosY,
    NegXPosY,
    NegXNegY,
    PosXNegY,
}

pub const ALL_QUADRANTS: [Quadrant; 4] =
    [Quadrant::PosXPosY, Quadrant::NegXPosY, Quadrant::NegXNegY, Quadrant::PosXNegY];

impl Quadrant {
    pub fn index(self) -> usize {
        match self {
            Quadrant::PosXPosY => 0,
            Quadrant::NegXPosY => 1,
            Quadrant::NegXNegY => 2,
            Quadrant::PosXNegY => 3,
        }
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        ALL_QUADRANTS
            .get(idx)
            .copied()
            .ok_or_else(|| Error::config(format!("quadrant index {idx} outside 0..4")))
    }

    pub fn azimuth_start_deg(self) -> f64 {
        90.0 * self.index() as f64
    }

    /// Grid offset of the quadrant's low corner. Cells at exactly the
    /// midline belong to the upper half (half-open split).
    pub fn grid_offset(self, nx: usize, ny: usize) -> (usize, usize) {
        match self {
            Quadrant::PosXPosY => (nx / 2, ny / 2),
            Quadrant::NegXPosY => (0, ny / 2),
            Quadrant::NegXNegY => (0, 0),
            Quadrant::PosXNegY => (nx / 2, 0),
        }
    }
}

/// Quadrants whose 90° span intersects the sector.
pub fn quadrants_of_slice(spec: &SliceSpec) -> Vec<Quadrant> {
    ALL_QUADRANTS
        .iter()
        .copied()
        .filter(|q| {
            angle::half_open_arcs_intersect(
                q.azimuth_start_deg(),
                90.0,
                spec.az_start_deg,
                spec.width_deg(),
            )
        })
        .collect()
}

fn require_even(nx: usize, ny: usize) -> Result<()> {
    if !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
        return Err(Error::config(format!("grid {nx}x{ny} must have even dims to crop")));
    }
    Ok(())
}

/// Copies out one quadrant as an `(X/2, Y/2, C)` map.
pub fn crop(map: &BevMap, q: Quadrant) -> Result<BevMap> {
    require_even(map.nx(), map.ny())?;
    let (hx, hy) = (map.nx() / 2, map.ny() / 2);
    let (i0, j0) = q.grid_offset(map.nx(), map.ny());
    let mut out = BevMap::zeros(hx, hy, map.channels());
    for i in 0..hx {
        for j in 0..hy {
            out.cell_mut(i, j).copy_from_slice(map.cell(i0 + i, j0 + j));
            out.set_occupied(i, j, map.occupied(i0 + i, j0 + j));
        }
    }
    Ok(out)
}

/// Copies out one quadrant of a voxel volume (`Z` and channels unchanged).
pub fn crop_volume(vol: &VoxelVolume, q: Quadrant) -> Result<VoxelVolume> {
    require_even(vol.nx(), vol.ny())?;
    let (hx, hy) = (vol.nx() / 2, vol.ny() / 2);
    let (i0, j0) = q.grid_offset(vol.nx(), vol.ny());
    let mut out = VoxelVolume::zeros(hx, hy, vol.nz(), vol.channels());
    for i in 0..hx {
        for j in 0..hy {
            for k in 0..vol.nz() {
                out.voxel_mut(i, j, k).copy_from_slice(vol.voxel(i0 + i, j0 + j, k));
                for _ in 0..vol.count(i0 + i, j0 + j, k) {
                    out.add_count(i, j, k);
                }
            }
        }
    }
    Ok(out)
}

/// Zero-pads a quadrant map back to the full grid size.
pub fn uncrop(map: &BevMap, q: Quadrant, full_nx: usize, full_ny: usize) -> Result<BevMap> {
    require_even(full_nx, full_ny)?;
    if map.nx() != full_nx / 2 || map.ny() != full_ny / 2 {
        return Err(Error::config(format!(
            "quadrant map {}x{} does not fit {full_nx}x{full_ny}",
            map.nx(),
            map.ny()
        )));
    }
    let (i0, j0) = q.grid_offset(full_nx, full_ny);
    let mut out = BevMap::zeros(full_nx, full_ny, map.channels());
    for i in 0..map.nx() {
        for j in 0..map.ny() {
            out.cell_mut(i0 + i, j0 + j).copy_from_slice(map.cell(i, j));
            out.set_occupied(i0 + i, j0 + j, map.occupied(i, j));
        }
    }
    Ok(out)
}

/// Channel-wise concatenation: `[0, C)` from the point stream, `[C, 2C)`
/// from the image stream. The mask is the union of both occupancies.
pub fn fuse(p_bev: &BevMap, i_bev: &BevMap) -> Result<BevMap> {
    if p_bev.nx() != i_bev.nx() || p_bev.ny() != i_bev.ny() {
        return Err(Error::config(format!(
            "spatial dims differ: {}x{} vs {}x{}",
            p_bev.nx(),
            p_bev.ny(),
            i_bev.nx(),
            i_bev.ny()
        )));
    }
    let (pc, ic) = (p_bev.channels(), i_bev.channels());
    let mut out = BevMap::zeros(p_bev.nx(), p_bev.ny(), pc + ic);
    for i in 0..p_bev.nx() {
        for j in 0..p_bev.ny() {
            let cell = out.cell_mut(i, j);
            cell[..pc].copy_from_slice(p_bev.cell(i, j));
            cell[pc..].copy_from_slice(i_bev.cell(i, j));
            out.set_occupied(i, j, p_bev.occupied(i, j) || i_bev.occupied(i, j));
        }
    }
    Ok(out)
}

/// One convolution layer of a cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvCostSpec {
    pub name: String,
    pub in_channels: u64,
    pub out_channels: u64,
    /// Kernel extent `(kx, ky, kz)`.
    pub kernel: (u64, u64, u64),
    /// Output extent `(dx, dy, dz)`.
    pub output: (u64, u64, u64),
}

impl ConvCostSpec {
    pub fn new(
        name: impl Into<String>,
        in_channels: u64,
        out_channels: u64,
        kernel: (u64, u64, u64),
        output: (u64, u64, u64),
    ) -> Result<Self> {
        let spec = ConvCostSpec { name: name.into(), in_channels, out_channels, kernel, output };
        let all = [
            spec.in_channels,
            spec.out_channels,
            spec.kernel.0,
            spec.kernel.1,
            spec.kernel.2,
            spec.output.0,
            spec.output.1,
            spec.output.2,
        ];
        if all.contains(&0) {
            return Err(Error::config(format!("conv spec {} has a zero dimension", spec.name)));
        }
        Ok(spec)
    }
}

/// FLOPs of a layer at full spatial extent, counting one multiply-add as
/// two FLOPs.
pub fn conv_flops(spec: &ConvCostSpec) -> u128 {
    2u128
        * spec.in_channels as u128
        * spec.out_channels as u128
        * (spec.kernel.0 * spec.kernel.1 * spec.kernel.2) as u128
        * (spec.output.0 * spec.output.1 * spec.output.2) as u128
}

/// FLOPs of the cropped variant: the BEV quadrant halves both spatial
/// output extents.
pub fn conv_flops_cropped(spec: &ConvCostSpec) -> u128 {
    2u128
        * spec.in_channels as u128
        * spec.out_channels as u128
        * (spec.kernel.0 * spec.kernel.1 * spec.kernel.2) as u128
        * ((spec.output.0 / 2) * (spec.output.1 / 2) * spec.output.2) as u128
}

/// Full and cropped totals of a stage.
pub fn stage_flops(stage: &[ConvCostSpec]) -> (u128, u128) {
    stage.iter().fold((0, 0), |(f, c), s| (f + conv_flops(s), c + conv_flops_cropped(s)))
}

/// The 3D-convolution stack shapes used for the bundled cost report: a 1x1x1
/// channel projection, a residual 3x3x3 convolution, and a stride-2-in-z
/// 3x3x3 convolution, all on the default 512x512x16 volume at 64 channels.
pub fn volume_conv_stage() -> Vec<ConvCostSpec> {
    vec![
        ConvCostSpec::new("proj_1x1x1", 64, 64, (1, 1, 1), (512, 512, 16)).unwrap(),
        ConvCostSpec::new("residual_3x3x3", 64, 64, (3, 3, 3), (512, 512, 16)).unwrap(),
        ConvCostSpec::new("stride2z_3x3x3", 64, 64, (3, 3, 3), (512, 512, 8)).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered_map(nx: usize, ny: usize, c: usize) -> BevMap {
        let mut m = BevMap::zeros(nx, ny, c);
        for i in 0..nx {
            for j in 0..ny {
                for ch in 0..c {
                    m.cell_mut(i, j)[ch] = (i * ny * c + j * c + ch) as f32;
                }
                m.set_occupied(i, j, (i + j) % 2 == 0);
            }
        }
        m
    }

    #[test]
    fn quadrant_selection_narrow_sector() {
        let spec = SliceSpec::new(8, 0).unwrap(); // [0, 45)
        assert_eq!(quadrants_of_slice(&spec), vec![Quadrant::PosXPosY]);
    }

    #[test]
    fn quadrant_selection_straddling_sector() {
        // [80, 125) crosses the 90° boundary.
        let spec = SliceSpec {
            n_slices: 8,
            index: 0,
            az_start_deg: 80.0,
            az_end_deg: 125.0,
        };
        assert_eq!(quadrants_of_slice(&spec), vec![Quadrant::PosXPosY, Quadrant::NegXPosY]);
    }

    #[test]
    fn full_sweep_touches_all_quadrants() {
        let spec = SliceSpec::new(1, 0).unwrap();
        assert_eq!(quadrants_of_slice(&spec).len(), 4);
    }

    #[test]
    fn narrow_sectors_touch_at_most_two_quadrants() {
        for n in [4u32, 8, 16, 32] {
            for i in 0..n {
                let spec = SliceSpec::new(n, i).unwrap();
                let qs = quadrants_of_slice(&spec);
                assert!(
                    (1..=2).contains(&qs.len()),
                    "sector {i}/{n} hit {} quadrants",
                    qs.len()
                );
            }
        }
    }

    #[test]
    fn crop_extracts_the_corner_block() {
        let m = numbered_map(4, 4, 1);
        // Quadrant 0 is the (+x, +y) block: i in [2,4), j in [2,4).
        let c = crop(&m, Quadrant::PosXPosY).unwrap();
        assert_eq!(c.at(0, 0, 0), m.at(2, 2, 0));
        assert_eq!(c.at(1, 1, 0), m.at(3, 3, 0));
        assert_eq!(c.occupied(0, 0), m.occupied(2, 2));
    }

    #[test]
    fn uncrop_restores_quadrant_and_zeros_the_rest() {
        let m = numbered_map(8, 8, 2);
        for q in ALL_QUADRANTS {
            let small = crop(&m, q).unwrap();
            let back = uncrop(&small, q, 8, 8).unwrap();
            let (i0, j0) = q.grid_offset(8, 8);
            for i in 0..8 {
                for j in 0..8 {
                    let inside =
                        (i0..i0 + 4).contains(&i) && (j0..j0 + 4).contains(&j);
                    for ch in 0..2 {
                        let expect = if inside { m.at(i, j, ch) } else { 0.0 };
                        assert_eq!(back.at(i, j, ch), expect);
                    }
                    assert_eq!(back.occupied(i, j), inside && m.occupied(i, j));
                }
            }
            // crop of uncrop is the identity on the small map.
            assert_eq!(crop(&back, q).unwrap(), small);
        }
    }

    #[test]
    fn uncrop_of_zeros_is_zeros() {
        let z = BevMap::zeros(4, 4, 3);
        let u = uncrop(&z, Quadrant::NegXNegY, 8, 8).unwrap();
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_uncropped_quadrants_sum_to_a_scatter() {
        let m = numbered_map(8, 8, 1);
        let a = uncrop(&crop(&m, Quadrant::PosXPosY).unwrap(), Quadrant::PosXPosY, 8, 8).unwrap();
        let b = uncrop(&crop(&m, Quadrant::NegXNegY).unwrap(), Quadrant::NegXNegY, 8, 8).unwrap();
        // Independent bookkeeping: walk all cells and place values directly.
        for i in 0..8 {
            for j in 0..8 {
                let expect = if (i >= 4 && j >= 4) || (i < 4 && j < 4) { m.at(i, j, 0) } else { 0.0 };
                assert_eq!(a.at(i, j, 0) + b.at(i, j, 0), expect, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn odd_dims_cannot_crop() {
        let m = BevMap::zeros(5, 4, 1);
        assert!(crop(&m, Quadrant::PosXPosY).is_err());
    }

    #[test]
    fn fuse_concatenates_channels() {
        let p = numbered_map(4, 4, 2);
        let z = BevMap::zeros(4, 4, 3);
        let f = fuse(&p, &z).unwrap();
        assert_eq!(f.channels(), 5);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(&f.cell(i, j)[..2], p.cell(i, j));
                assert!(f.cell(i, j)[2..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn fuse_is_recoverable() {
        let a = numbered_map(4, 4, 2);
        let mut b = numbered_map(4, 4, 2);
        for v in b.data_mut() {
            *v += 100.0;
        }
        let f = fuse(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(&f.cell(i, j)[..2], a.cell(i, j));
                assert_eq!(&f.cell(i, j)[2..], b.cell(i, j));
            }
        }
    }

    #[test]
    fn fuse_commutes_with_crop() {
        let a = numbered_map(8, 8, 2);
        let b = numbered_map(8, 8, 3);
        for q in ALL_QUADRANTS {
            let crop_then_fuse = fuse(&crop(&a, q).unwrap(), &crop(&b, q).unwrap()).unwrap();
            let fuse_then_crop = crop(&fuse(&a, &b).unwrap(), q).unwrap();
            assert_eq!(crop_then_fuse, fuse_then_crop);
        }
    }

    #[test]
    fn flops_closed_form() {
        let spec = ConvCostSpec::new("proj", 64, 64, (1, 1, 1), (512, 512, 16)).unwrap();
        assert_eq!(conv_flops(&spec), 2 * 64 * 64 * 512 * 512 * 16);
        assert_eq!(conv_flops(&spec), 34_359_738_368);
    }

    #[test]
    fn cropped_ratio_is_exactly_one_quarter() {
        for spec in volume_conv_stage() {
            let full = conv_flops(&spec);
            let cropped = conv_flops_cropped(&spec);
            assert_eq!(cropped * 4, full, "layer {}", spec.name);
        }
        let (full, cropped) = stage_flops(&volume_conv_stage());
        assert_eq!(cropped * 4, full);
    }

    #[test]
    fn flops_linear_in_channels_and_volume() {
        let base = ConvCostSpec::new("a", 16, 32, (3, 3, 3), (64, 64, 8)).unwrap();
        let double_in = ConvCostSpec::new("b", 32, 32, (3, 3, 3), (64, 64, 8)).unwrap();
        let double_out = ConvCostSpec::new("c", 16, 64, (3, 3, 3), (64, 64, 8)).unwrap();
        let double_vol = ConvCostSpec::new("d", 16, 32, (3, 3, 3), (64, 64, 16)).unwrap();
        assert_eq!(conv_flops(&double_in), 2 * conv_flops(&base));
        assert_eq!(conv_flops(&double_out), 2 * conv_flops(&base));
        assert_eq!(conv_flops(&double_vol), 2 * conv_flops(&base));
    }
}
