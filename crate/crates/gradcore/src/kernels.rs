//! Convolution kernels: im2col/col2im lowering onto GEMM.
//!
//! All three kernels share one geometry describing the forward
//! cross-correlation `x[N, c_in, in] -> y[N, c_out, out]`. Batch items are
//! packed side by side into the column matrix in chunks bounded by
//! [`COL_BUDGET`] elements, so small deep layers still get wide GEMMs, and
//! large items are split into output slabs so the columns stay in cache.
//! The chunking depends only on shapes, which keeps results deterministic.

use crate::ops::ConvGeom;
use crate::scalar::{gemm, Scalar, Trans};

const COL_BUDGET: usize = 1 << 17;

fn valid_range(i_ext: usize, o_ext: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    // output positions o with 0 <= o*s + k - p < i_ext
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi_num = i_ext + p;
    let hi = if hi_num > k { (hi_num - k).div_ceil(s) } else { 0 };
    (lo.min(o_ext), hi.min(o_ext).max(lo.min(o_ext)))
}

/// Writes the column block of output slabs `ox_lo..ox_hi` of one item.
/// `col` rows have stride `ld`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T], ld: usize, ox_lo: usize, ox_hi: usize) {
    let [i0, i1, i2] = g.in_ext;
    let [k0, k1, k2] = g.kernel;
    let [s0, s1, s2] = g.stride;
    let [p0, p1, p2] = g.pad;
    let [_, o1, o2] = g.out_ext;
    let in_vol = i0 * i1 * i2;
    let slab = o1 * o2;
    let same_plane = s1 == 1 && s2 == 1 && i1 == o1 && i2 == o2;
    for ci in 0..g.c_in {
        let xc = &x[ci * in_vol..(ci + 1) * in_vol];
        for kx in 0..k0 {
            for ky in 0..k1 {
                for kz in 0..k2 {
                    let row = ((ci * k0 + kx) * k1 + ky) * k2 + kz;
                    let dst = &mut col[row * ld..row * ld + (ox_hi - ox_lo) * slab];
                    let (zlo, zhi) = valid_range(i2, o2, kz, s2, p2);
                    let (ylo, yhi) = valid_range(i1, o1, ky, s1, p1);
                    for ox in ox_lo..ox_hi {
                        let ix = (ox * s0 + kx) as isize - p0 as isize;
                        let seg = &mut dst[(ox - ox_lo) * slab..(ox - ox_lo + 1) * slab];
                        if ix < 0 || ix >= i0 as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        if same_plane {
                            // One shifted copy of the (y, z) plane, then zero the
                            // padded rows and the wrapped z entries.
                            let plane = &xc[ix as usize * i1 * i2..(ix as usize + 1) * i1 * i2];
                            let shift = (ky as isize - p1 as isize) * i2 as isize + kz as isize - p2 as isize;
                            let lo = ((ylo * o2) as isize).max(-shift) as usize;
                            let hi = (((yhi * o2) as isize).min(slab as isize - shift)).max(lo as isize) as usize;
                            if hi > lo {
                                let from = (lo as isize + shift) as usize;
                                seg[lo..hi].copy_from_slice(&plane[from..from + (hi - lo)]);
                            }
                            seg[..ylo * o2].fill(T::zero());
                            seg[yhi * o2..].fill(T::zero());
                            for oy in ylo..yhi {
                                let row = &mut seg[oy * o2..(oy + 1) * o2];
                                row[..zlo].fill(T::zero());
                                row[zhi..].fill(T::zero());
                            }
                            continue;
                        }
                        for oy in 0..o1 {
                            let iy = (oy * s1 + ky) as isize - p1 as isize;
                            let row_seg = &mut seg[oy * o2..(oy + 1) * o2];
                            if iy < 0 || iy >= i1 as isize {
                                row_seg.fill(T::zero());
                                continue;
                            }
                            let src = &xc[(ix as usize * i1 + iy as usize) * i2..];
                            row_seg[..zlo].fill(T::zero());
                            row_seg[zhi..].fill(T::zero());
                            if s2 == 1 {
                                let start = zlo + kz - p2;
                                row_seg[zlo..zhi].copy_from_slice(&src[start..start + (zhi - zlo)]);
                            } else {
                                for (oz, d) in row_seg.iter_mut().enumerate().take(zhi).skip(zlo) {
                                    *d = src[oz * s2 + kz - p2];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds one item's column block for slabs `ox_lo..ox_hi` into `x`.
fn col2im<T: Scalar>(col: &[T], ld: usize, g: &ConvGeom, x: &mut [T], ox_lo: usize, ox_hi: usize) {
    let [i0, i1, i2] = g.in_ext;
    let [k0, k1, k2] = g.kernel;
    let [s0, s1, s2] = g.stride;
    let [p0, p1, p2] = g.pad;
    let [_, o1, o2] = g.out_ext;
    let in_vol = i0 * i1 * i2;
    let slab = o1 * o2;
    for ci in 0..g.c_in {
        let xc = &mut x[ci * in_vol..(ci + 1) * in_vol];
        for kx in 0..k0 {
            for ky in 0..k1 {
                for kz in 0..k2 {
                    let row = ((ci * k0 + kx) * k1 + ky) * k2 + kz;
                    let src = &col[row * ld..row * ld + (ox_hi - ox_lo) * slab];
                    let (zlo, zhi) = valid_range(i2, o2, kz, s2, p2);
                    for ox in ox_lo..ox_hi {
                        let ix = (ox * s0 + kx) as isize - p0 as isize;
                        if ix < 0 || ix >= i0 as isize {
                            continue;
                        }
                        for oy in 0..o1 {
                            let iy = (oy * s1 + ky) as isize - p1 as isize;
                            if iy < 0 || iy >= i1 as isize {
                                continue;
                            }
                            let base = (ix as usize * i1 + iy as usize) * i2;
                            let s = &src[((ox - ox_lo) * o1 + oy) * o2..];
                            for oz in zlo..zhi {
                                xc[base + oz * s2 + kz - p2] += s[oz];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A block of work: items `s..e` and output slabs `ox_lo..ox_hi` of each.
#[derive(Debug, Clone, Copy)]
struct Unit {
    s: usize,
    e: usize,
    ox_lo: usize,
    ox_hi: usize,
}

impl Unit {
    /// Column-matrix width.
    fn ld(&self, g: &ConvGeom) -> usize {
        (self.e - self.s) * self.len(g)
    }

    /// Output values per item and channel covered by the unit.
    fn len(&self, g: &ConvGeom) -> usize {
        (self.ox_hi - self.ox_lo) * g.out_ext[1] * g.out_ext[2]
    }

    fn offset(&self, g: &ConvGeom) -> usize {
        self.ox_lo * g.out_ext[1] * g.out_ext[2]
    }

    fn whole_items(&self, g: &ConvGeom) -> bool {
        self.ox_lo == 0 && self.ox_hi == g.out_ext[0]
    }
}

/// Splits the work so each column matrix holds at most about `budget`
/// elements: several whole items when they fit, output slabs of one item
/// otherwise.
fn units(g: &ConvGeom, n: usize, budget: usize) -> Vec<Unit> {
    let o0 = g.out_ext[0];
    let per_slab = (g.c_in * g.kvol() * g.out_ext[1] * g.out_ext[2]).max(1);
    let per_item = per_slab * o0;
    let mut out = Vec::new();
    if per_item <= budget || o0 <= 1 {
        let per_chunk = (budget / per_item.max(1)).clamp(1, n.max(1));
        for s in (0..n).step_by(per_chunk) {
            out.push(Unit { s, e: (s + per_chunk).min(n), ox_lo: 0, ox_hi: o0 });
        }
    } else {
        let slabs = (budget / per_slab).clamp(1, o0);
        for item in 0..n {
            for lo in (0..o0).step_by(slabs) {
                out.push(Unit { s: item, e: item + 1, ox_lo: lo, ox_hi: (lo + slabs).min(o0) });
            }
        }
    }
    out
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.kernel == [1, 1, 1] && g.stride == [1, 1, 1] && g.pad == [0, 0, 0]
}

/// Fills the `[rows, ld]` column matrix of a unit.
fn build_cols<T: Scalar>(x: &[T], g: &ConvGeom, u: Unit, col: &mut Vec<T>) -> usize {
    let ld = u.ld(g);
    let len = u.len(g);
    let off = u.offset(g);
    let rows = g.c_in * g.kvol();
    col.resize(rows * ld, T::zero());
    let in_item = g.c_in * g.in_vol();
    for (j, n) in (u.s..u.e).enumerate() {
        let xn = &x[n * in_item..(n + 1) * in_item];
        if is_pointwise(g) {
            let iv = g.in_vol();
            for ci in 0..g.c_in {
                col[ci * ld + j * len..ci * ld + (j + 1) * len].copy_from_slice(&xn[ci * iv + off..ci * iv + off + len]);
            }
        } else {
            im2col(xn, g, &mut col[j * len..], ld, u.ox_lo, u.ox_hi);
        }
    }
    ld
}

/// Packs the unit's part of `[N, c, vol]` into `[c, ld]`.
fn pack_channels<T: Scalar>(y: &[T], c: usize, vol: usize, g: &ConvGeom, u: Unit, out: &mut Vec<T>) {
    let (ld, len, off) = (u.ld(g), u.len(g), u.offset(g));
    out.resize(c * ld, T::zero());
    for (j, n) in (u.s..u.e).enumerate() {
        for ch in 0..c {
            let src = &y[(n * c + ch) * vol + off..(n * c + ch) * vol + off + len];
            out[ch * ld + j * len..ch * ld + (j + 1) * len].copy_from_slice(src);
        }
    }
}

fn unpack_channels<T: Scalar>(packed: &[T], c: usize, vol: usize, g: &ConvGeom, u: Unit, y: &mut [T]) {
    let (ld, len, off) = (u.ld(g), u.len(g), u.offset(g));
    for (j, n) in (u.s..u.e).enumerate() {
        for ch in 0..c {
            y[(n * c + ch) * vol + off..(n * c + ch) * vol + off + len]
                .copy_from_slice(&packed[ch * ld + j * len..ch * ld + (j + 1) * len]);
        }
    }
}

/// Direct kernels are used for stride-1 convolutions preserving the `(y, z)`
/// extent with at most this many output channels; im2col would expand the
/// input `kvol` times for very little arithmetic.
const DIRECT_MAX_OUT: usize = 4;

fn direct_ok(g: &ConvGeom) -> bool {
    g.stride == [1, 1, 1]
        && g.in_ext[1] == g.out_ext[1]
        && g.in_ext[2] == g.out_ext[2]
        && g.c_out <= DIRECT_MAX_OUT
        && !is_pointwise(g)
}

/// One `(ky, kz)` tap of a same-extent plane: output position `f` reads input
/// position `f + shift` where `mask[f]` is one.
struct Tap<T> {
    shift: isize,
    lo: usize,
    hi: usize,
    mask: Vec<T>,
}

fn taps<T: Scalar>(g: &ConvGeom) -> Vec<Tap<T>> {
    let [_, n1, n2] = g.out_ext;
    let slab = (n1 * n2) as isize;
    let mut out = Vec::with_capacity(g.kernel[1] * g.kernel[2]);
    for ky in 0..g.kernel[1] {
        for kz in 0..g.kernel[2] {
            let dy = ky as isize - g.pad[1] as isize;
            let dz = kz as isize - g.pad[2] as isize;
            let shift = dy * n2 as isize + dz;
            let mut mask = vec![T::zero(); n1 * n2];
            for oy in 0..n1 {
                for oz in 0..n2 {
                    let (iy, iz) = (oy as isize + dy, oz as isize + dz);
                    if iy >= 0 && iy < n1 as isize && iz >= 0 && iz < n2 as isize {
                        mask[oy * n2 + oz] = T::one();
                    }
                }
            }
            let lo = (-shift).clamp(0, slab) as usize;
            let hi = (slab - shift).clamp(lo as isize, slab) as usize;
            let (shift, lo, hi) = if hi > lo { (shift, lo, hi) } else { (0, 0, 0) };
            out.push(Tap { shift, lo, hi, mask });
        }
    }
    out
}

fn direct_f<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    let slab = g.out_ext[1] * g.out_ext[2];
    let (i0, o0, k0) = (g.in_ext[0], g.out_ext[0], g.kernel[0]);
    let kt = g.kernel[1] * g.kernel[2];
    let taps = taps::<T>(g);
    let mut y = vec![T::zero(); n * g.c_out * o0 * slab];
    for ni in 0..n {
        for co in 0..g.c_out {
            for ox in 0..o0 {
                let out = &mut y[((ni * g.c_out + co) * o0 + ox) * slab..][..slab];
                for ci in 0..g.c_in {
                    for kx in 0..k0 {
                        let ix = (ox + kx) as isize - g.pad[0] as isize;
                        if ix < 0 || ix >= i0 as isize {
                            continue;
                        }
                        let inp = &x[((ni * g.c_in + ci) * i0 + ix as usize) * slab..][..slab];
                        let wb = ((co * g.c_in + ci) * k0 + kx) * kt;
                        for (t, tap) in taps.iter().enumerate() {
                            let wv = w[wb + t];
                            let from = (tap.lo as isize + tap.shift) as usize;
                            let src = &inp[from..from + (tap.hi - tap.lo)];
                            for ((o, &v), &m) in out[tap.lo..tap.hi].iter_mut().zip(src).zip(&tap.mask[tap.lo..tap.hi]) {
                                *o += wv * v * m;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

fn direct_t<T: Scalar>(gy: &[T], w: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    let slab = g.out_ext[1] * g.out_ext[2];
    let (i0, o0, k0) = (g.in_ext[0], g.out_ext[0], g.kernel[0]);
    let kt = g.kernel[1] * g.kernel[2];
    let taps = taps::<T>(g);
    let mut dx = vec![T::zero(); n * g.c_in * i0 * slab];
    for ni in 0..n {
        for ci in 0..g.c_in {
            for ox in 0..o0 {
                for kx in 0..k0 {
                    let ix = (ox + kx) as isize - g.pad[0] as isize;
                    if ix < 0 || ix >= i0 as isize {
                        continue;
                    }
                    let dst = &mut dx[((ni * g.c_in + ci) * i0 + ix as usize) * slab..][..slab];
                    for co in 0..g.c_out {
                        let src = &gy[((ni * g.c_out + co) * o0 + ox) * slab..][..slab];
                        let wb = ((co * g.c_in + ci) * k0 + kx) * kt;
                        for (t, tap) in taps.iter().enumerate() {
                            let wv = w[wb + t];
                            let from = (tap.lo as isize + tap.shift) as usize;
                            let d = &mut dst[from..from + (tap.hi - tap.lo)];
                            for ((o, &v), &m) in d.iter_mut().zip(&src[tap.lo..tap.hi]).zip(&tap.mask[tap.lo..tap.hi]) {
                                *o += wv * v * m;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn direct_w<T: Scalar>(x: &[T], gy: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    let slab = g.out_ext[1] * g.out_ext[2];
    let (i0, o0, k0) = (g.in_ext[0], g.out_ext[0], g.kernel[0]);
    let kt = g.kernel[1] * g.kernel[2];
    let taps = taps::<T>(g);
    let mut dw = vec![T::zero(); g.c_out * g.c_in * k0 * kt];
    for ni in 0..n {
        for co in 0..g.c_out {
            for ox in 0..o0 {
                let gsl = &gy[((ni * g.c_out + co) * o0 + ox) * slab..][..slab];
                for ci in 0..g.c_in {
                    for kx in 0..k0 {
                        let ix = (ox + kx) as isize - g.pad[0] as isize;
                        if ix < 0 || ix >= i0 as isize {
                            continue;
                        }
                        let inp = &x[((ni * g.c_in + ci) * i0 + ix as usize) * slab..][..slab];
                        let wb = ((co * g.c_in + ci) * k0 + kx) * kt;
                        for (t, tap) in taps.iter().enumerate() {
                            let from = (tap.lo as isize + tap.shift) as usize;
                            let src = &inp[from..from + (tap.hi - tap.lo)];
                            dw[wb + t] += masked_dot(&gsl[tap.lo..tap.hi], src, &tap.mask[tap.lo..tap.hi]);
                        }
                    }
                }
            }
        }
    }
    dw
}

fn masked_dot<T: Scalar>(a: &[T], b: &[T], m: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut cm = m.chunks_exact(8);
    for ((a8, b8), m8) in (&mut ca).zip(&mut cb).zip(&mut cm) {
        for l in 0..8 {
            lanes[l] += a8[l] * b8[l] * m8[l];
        }
    }
    let mut acc = lanes.iter().fold(T::zero(), |s, &v| s + v);
    for ((&x, &y), &z) in ca.remainder().iter().zip(cb.remainder()).zip(cm.remainder()) {
        acc += x * y * z;
    }
    acc
}

/// Cross-correlation: `y[N, c_out, out] = W * x`.
pub fn conv_f<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    if direct_ok(g) {
        return direct_f(x, w, g, n);
    }
    conv_f_with(x, w, g, n, COL_BUDGET)
}

fn conv_f_with<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom, n: usize, budget: usize) -> Vec<T> {
    let ov = g.out_vol();
    let rows = g.c_in * g.kvol();
    let mut y = vec![T::zero(); n * g.c_out * ov];
    let mut col = Vec::new();
    let mut tmp = Vec::new();
    for u in units(g, n, budget) {
        let ld = build_cols(x, g, u, &mut col);
        tmp.resize(g.c_out * ld, T::zero());
        gemm(g.c_out, rows, ld, T::one(), w, Trans::No, &col, Trans::No, T::zero(), &mut tmp);
        unpack_channels(&tmp, g.c_out, ov, g, u, &mut y);
    }
    y
}

/// Adjoint of [`conv_f`] in `x`: maps `[N, c_out, out]` to `[N, c_in, in]`.
pub fn conv_t<T: Scalar>(gy: &[T], w: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    if direct_ok(g) {
        return direct_t(gy, w, g, n);
    }
    conv_t_with(gy, w, g, n, COL_BUDGET)
}

fn conv_t_with<T: Scalar>(gy: &[T], w: &[T], g: &ConvGeom, n: usize, budget: usize) -> Vec<T> {
    let ov = g.out_vol();
    let iv = g.in_vol();
    let rows = g.c_in * g.kvol();
    let mut x = vec![T::zero(); n * g.c_in * iv];
    let mut packed = Vec::new();
    let mut col = Vec::new();
    for u in units(g, n, budget) {
        pack_channels(gy, g.c_out, ov, g, u, &mut packed);
        let ld = u.ld(g);
        col.resize(rows * ld, T::zero());
        gemm(rows, g.c_out, ld, T::one(), w, Trans::Yes, &packed, Trans::No, T::zero(), &mut col);
        if is_pointwise(g) && u.whole_items(g) {
            unpack_channels(&col, g.c_in, iv, g, u, &mut x);
        } else {
            let item = g.c_in * iv;
            let len = u.len(g);
            for (j, nn) in (u.s..u.e).enumerate() {
                col2im(&col[j * len..], ld, g, &mut x[nn * item..(nn + 1) * item], u.ox_lo, u.ox_hi);
            }
        }
    }
    x
}

/// Adjoint of [`conv_f`] in `W`: `dW[c_out, c_in*kvol] = sum_n gy_n * col(x_n)^T`.
pub fn conv_w<T: Scalar>(x: &[T], gy: &[T], g: &ConvGeom, n: usize) -> Vec<T> {
    if direct_ok(g) {
        return direct_w(x, gy, g, n);
    }
    conv_w_with(x, gy, g, n, COL_BUDGET)
}

fn conv_w_with<T: Scalar>(x: &[T], gy: &[T], g: &ConvGeom, n: usize, budget: usize) -> Vec<T> {
    let ov = g.out_vol();
    let rows = g.c_in * g.kvol();
    let mut dw = vec![T::zero(); g.c_out * rows];
    let mut col = Vec::new();
    let mut packed = Vec::new();
    for u in units(g, n, budget) {
        let ld = build_cols(x, g, u, &mut col);
        pack_channels(gy, g.c_out, ov, g, u, &mut packed);
        gemm(g.c_out, ld, rows, T::one(), &packed, Trans::No, &col, Trans::Yes, T::one(), &mut dw);
    }
    dw
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()))
    }

    #[test]
    fn slab_chunking_matches_whole_items() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let k: [usize; 3] = std::array::from_fn(|_| 2 * rng.random_range(0..=1) + 1);
            let p: [usize; 3] = std::array::from_fn(|d| rng.random_range(0..k[d]));
            let s: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..=2));
            let same = rng.random_bool(0.5);
            let p: [usize; 3] = if same { std::array::from_fn(|d| k[d] / 2) } else { p };
            let s = if same { [1; 3] } else { s };
            let ext: [usize; 3] = std::array::from_fn(|d| rng.random_range(k[d]..k[d] + 6));
            let (ci, co, n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
            let ext = if same { std::array::from_fn(|d| rng.random_range(1..k[d] + 4)) } else { ext };
            let g = ConvGeom::forward(ci, co, ext, k, s, p).unwrap();
            let x: Vec<f64> = (0..n * ci * g.in_vol()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..co * ci * g.kvol()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gy: Vec<f64> = (0..n * co * g.out_vol()).map(|_| rng.random_range(-1.0..1.0)).collect();
            if direct_ok(&g) {
                assert!(close(&direct_f(&x, &w, &g, n), &conv_f_with(&x, &w, &g, n, usize::MAX)));
                assert!(close(&direct_t(&gy, &w, &g, n), &conv_t_with(&gy, &w, &g, n, usize::MAX)));
                assert!(close(&direct_w(&x, &gy, &g, n), &conv_w_with(&x, &gy, &g, n, usize::MAX)));
            }
            for budget in [1, 7, 50] {
                assert!(close(&conv_f_with(&x, &w, &g, n, budget), &conv_f_with(&x, &w, &g, n, usize::MAX)));
                assert!(close(&conv_t_with(&gy, &w, &g, n, budget), &conv_t_with(&gy, &w, &g, n, usize::MAX)));
                assert!(close(&conv_w_with(&x, &gy, &g, n, budget), &conv_w_with(&x, &gy, &g, n, usize::MAX)));
            }
        }
    }
}
