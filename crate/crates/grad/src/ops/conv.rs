use crate::element::{gemm, Element};
use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Reflect an out-of-range coordinate back into `0..n` (edge not repeated).
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Source coordinate of every output coordinate, per kernel tap.
struct AxisMap {
    /// `map[tap * out_len + o]`
    map: Vec<usize>,
    out_len: usize,
    /// For each tap, the output range `lo..hi` whose sources are contiguous
    /// and unreflected (`src = o + tap - pad`).
    interior: Vec<(usize, usize)>,
}

impl AxisMap {
    fn new(in_len: usize, k: usize, pad: usize) -> Self {
        let out_len = in_len + 2 * pad + 1 - k;
        let mut map = Vec::with_capacity(k * out_len);
        let mut interior = Vec::with_capacity(k);
        for tap in 0..k {
            for o in 0..out_len {
                map.push(reflect(o as isize + tap as isize - pad as isize, in_len));
            }
            let lo = pad.saturating_sub(tap).min(out_len);
            let hi = (in_len + pad).saturating_sub(tap).min(out_len).max(lo);
            interior.push((lo, hi));
        }
        Self { map, out_len, interior }
    }

    fn src(&self, tap: usize, o: usize) -> usize {
        self.map[tap * self.out_len + o]
    }
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    ys: AxisMap,
    xs: AxisMap,
}

impl ConvGeom {
    fn out_hw(&self) -> usize {
        self.ys.out_len * self.xs.out_len
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.ys.out_len == self.h && self.xs.out_len == self.w
    }

    /// Unfold one image `[Cin, H, W]` into `[Cin·k·k, Ho·Wo]`.
    fn im2col<T: Element>(&self, x: &[T], col: &mut [T]) {
        let (ho, wo, k) = (self.ys.out_len, self.xs.out_len, self.k);
        let plane = self.h * self.w;
        let mut row = 0;
        for c in 0..self.cin {
            let src = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                for kj in 0..k {
                    let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                    let (lo, hi) = self.xs.interior[kj];
                    for oy in 0..ho {
                        let s = &src[self.ys.src(ki, oy) * self.w..][..self.w];
                        let d = &mut dst[oy * wo..(oy + 1) * wo];
                        for ox in 0..lo {
                            d[ox] = s[self.xs.src(kj, ox)];
                        }
                        if hi > lo {
                            let start = self.xs.src(kj, lo);
                            d[lo..hi].copy_from_slice(&s[start..start + (hi - lo)]);
                        }
                        for ox in hi..wo {
                            d[ox] = s[self.xs.src(kj, ox)];
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: accumulate `col` into `dx`.
    fn col2im_add<T: Element>(&self, col: &[T], dx: &mut [T]) {
        let (ho, wo, k) = (self.ys.out_len, self.xs.out_len, self.k);
        let plane = self.h * self.w;
        let mut row = 0;
        for c in 0..self.cin {
            let dst_plane = &mut dx[c * plane..(c + 1) * plane];
            for ki in 0..k {
                for kj in 0..k {
                    let src = &col[row * ho * wo..(row + 1) * ho * wo];
                    let (lo, hi) = self.xs.interior[kj];
                    for oy in 0..ho {
                        let d = &mut dst_plane[self.ys.src(ki, oy) * self.w..][..self.w];
                        let s = &src[oy * wo..(oy + 1) * wo];
                        for ox in 0..lo {
                            d[self.xs.src(kj, ox)] += s[ox];
                        }
                        if hi > lo {
                            let start = self.xs.src(kj, lo);
                            for (dv, &sv) in d[start..start + (hi - lo)].iter_mut().zip(&s[lo..hi]) {
                                *dv += sv;
                            }
                        }
                        for ox in hi..wo {
                            d[self.xs.src(kj, ox)] += s[ox];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

impl<T: Element> Var<T> {
    /// Stride-1 2-D convolution of `[N, Cin, H, W]` by `[Cout, Cin, k, k]`
    /// with `pad` pixels of reflection padding on every side and an
    /// optional per-channel bias.
    pub fn conv2d(&self, weight: &Var<T>, bias: Option<&Var<T>>, pad: usize) -> Result<Var<T>> {
        let (n, cin, h, w) = self.value().dims4("conv2d")?;
        let (cout, wcin, kh, kw) = weight.value().dims4("conv2d")?;
        if wcin != cin || kh != kw {
            return shape_err(
                "conv2d",
                format!("input {:?} vs kernel {:?}", self.shape(), weight.shape()),
            );
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return shape_err("conv2d", format!("bias {:?} for {cout} outputs", b.shape()));
            }
        }
        let k = kh;
        if h == 0 || w == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return shape_err("conv2d", format!("input {h}x{w} too small for {k}x{k} kernel"));
        }
        let geom = ConvGeom {
            cin,
            h,
            w,
            k,
            ys: AxisMap::new(h, k, pad),
            xs: AxisMap::new(w, k, pad),
        };
        let (ho, wo) = (geom.ys.out_len, geom.xs.out_len);
        let hw = geom.out_hw();
        let kdim = cin * k * k;
        let in_plane = cin * h * w;

        let mut out = vec![T::zero(); n * cout * hw];
        let wdata = weight.value().data();
        let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); kdim * hw] };
        for i in 0..n {
            let x = &self.value().data()[i * in_plane..(i + 1) * in_plane];
            let col_ref: &[T] = if geom.is_pointwise() {
                x
            } else {
                geom.im2col(x, &mut col);
                &col
            };
            let o = &mut out[i * cout * hw..(i + 1) * cout * hw];
            gemm(false, false, cout, hw, kdim, T::one(), wdata, col_ref, T::zero(), o);
            if let Some(b) = bias {
                for (row, &bv) in o.chunks_mut(hw).zip(b.value().data()) {
                    for v in row {
                        *v += bv;
                    }
                }
            }
        }
        drop(col);
        let value = Tensor::new([n, cout, ho, wo], out)?;

        // Keep only what the backward pass will read.
        let saved_x = weight.is_tracked().then(|| self.value().clone());
        let saved_w = self.is_tracked().then(|| weight.value().clone());
        let x_shape = self.shape().to_vec();
        let w_shape = weight.shape().to_vec();
        let inputs: Vec<&Var<T>> = match bias {
            Some(b) => vec![self, weight, b],
            None => vec![self, weight],
        };
        Ok(Var::record(value, &inputs, move |g, needs| {
            let g = g.data();
            let mut gx = needs[0].then(|| vec![T::zero(); n * in_plane]);
            let mut gw = needs[1].then(|| vec![T::zero(); cout * kdim]);
            let gb = needs.get(2).copied().unwrap_or(false).then(|| {
                let mut acc = vec![T::zero(); cout];
                for i in 0..n {
                    for (o, row) in g[i * cout * hw..(i + 1) * cout * hw].chunks(hw).enumerate() {
                        acc[o] += row.iter().copied().sum::<T>();
                    }
                }
                Tensor::new([cout], acc).expect("bias grad")
            });
            let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); kdim * hw] };
            for i in 0..n {
                let gi = &g[i * cout * hw..(i + 1) * cout * hw];
                if let Some(gw) = gw.as_mut() {
                    let x = &saved_x.as_ref().expect("saved input").data()[i * in_plane..(i + 1) * in_plane];
                    let col_ref: &[T] = if geom.is_pointwise() {
                        x
                    } else {
                        geom.im2col(x, &mut col);
                        &col
                    };
                    gemm(false, true, cout, kdim, hw, T::one(), gi, col_ref, T::one(), gw);
                }
                if let Some(gx) = gx.as_mut() {
                    let wd = saved_w.as_ref().expect("saved weight").data();
                    let dx = &mut gx[i * in_plane..(i + 1) * in_plane];
                    if geom.is_pointwise() {
                        gemm(true, false, kdim, hw, cout, T::one(), wd, gi, T::zero(), dx);
                    } else {
                        gemm(true, false, kdim, hw, cout, T::one(), wd, gi, T::zero(), &mut col);
                        geom.col2im_add(&col, dx);
                    }
                }
            }
            let mut grads = vec![
                gx.map(|d| Tensor::new(x_shape.clone(), d).expect("input grad")),
                gw.map(|d| Tensor::new(w_shape.clone(), d).expect("weight grad")),
            ];
            if needs.len() == 3 {
                grads.push(gb);
            }
            grads
        }))
    }

    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&self) -> Result<Var<T>> {
        let (n, c, h, w) = self.value().dims4("max_pool2")?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return shape_err("max_pool2", format!("input {h}x{w} too small to pool"));
        }
        let planes = n * c;
        let x = self.value().data();
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax: Vec<u32> = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let src = &x[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let value = Tensor::new([n, c, ho, wo], out)?;
        Ok(Var::record(value, &[self], move |g, _| {
            let mut gx = vec![T::zero(); planes * h * w];
            let g = g.data();
            for p in 0..planes {
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for j in 0..ho * wo {
                    let idx = p * ho * wo + j;
                    dst[argmax[idx] as usize] += g[idx];
                }
            }
            vec![Some(Tensor::new([n, c, h, w], gx).expect("pool grad"))]
        }))
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample_nearest2(&self) -> Result<Var<T>> {
        let (n, c, h, w) = self.value().dims4("upsample_nearest2")?;
        let (ho, wo) = (2 * h, 2 * w);
        let x = self.value().data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for (p, dst) in out.chunks_mut(ho * wo).enumerate() {
            let src = &x[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                let srow = &src[(oy / 2) * w..(oy / 2 + 1) * w];
                for (ox, d) in dst[oy * wo..(oy + 1) * wo].iter_mut().enumerate() {
                    *d = srow[ox / 2];
                }
            }
        }
        let value = Tensor::new([n, c, ho, wo], out)?;
        Ok(Var::record(value, &[self], move |g, _| {
            let g = g.data();
            let mut gx = vec![T::zero(); n * c * h * w];
            for (p, dst) in gx.chunks_mut(h * w).enumerate() {
                let src = &g[p * ho * wo..(p + 1) * ho * wo];
                for oy in 0..ho {
                    for ox in 0..wo {
                        dst[(oy / 2) * w + ox / 2] += src[oy * wo + ox];
                    }
                }
            }
            vec![Some(Tensor::new([n, c, h, w], gx).expect("upsample grad"))]
        }))
    }
}
