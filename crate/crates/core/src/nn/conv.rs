//! Strided 2-D convolutions lowered to GEMM through im2col.

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, MatRef, Scalar, Tensor};

/// Geometry of a square-kernel convolution mapping a `big` spatial grid onto a
/// `small` one. A transposed convolution uses the same geometry backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub small_h: usize,
    pub small_w: usize,
}

impl ConvGeom {
    /// Geometry of a forward convolution over a `h x w` input.
    pub fn forward(kernel: usize, stride: usize, pad: usize, h: usize, w: usize) -> Self {
        assert!(h + 2 * pad >= kernel && w + 2 * pad >= kernel);
        ConvGeom {
            kernel,
            stride,
            pad,
            big_h: h,
            big_w: w,
            small_h: (h + 2 * pad - kernel) / stride + 1,
            small_w: (w + 2 * pad - kernel) / stride + 1,
        }
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }

    pub fn small_len(&self) -> usize {
        self.small_h * self.small_w
    }

    pub fn big_len(&self) -> usize {
        self.big_h * self.big_w
    }

    /// Input coordinate read by output coordinate `o` at kernel offset `k`.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unfold `x` (`channels x big_h x big_w`) into `cols`
/// (`channels * k * k` rows by `small_h * small_w` columns).
pub fn im2col<T: Scalar>(x: &[T], channels: usize, g: &ConvGeom, cols: &mut [T]) {
    let (k, p) = (g.kernel, g.small_len());
    debug_assert_eq!(x.len(), channels * g.big_len());
    debug_assert_eq!(cols.len(), channels * k * k * p);
    for c in 0..channels {
        let plane = &x[c * g.big_len()..(c + 1) * g.big_len()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..g.small_h {
                    let dst = &mut row[oy * g.small_w..(oy + 1) * g.small_w];
                    match g.source(oy, ky, g.big_h) {
                        None => dst.fill(T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * g.big_w..(iy + 1) * g.big_w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = match g.source(ox, kx, g.big_w) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back onto `x`.
pub fn col2im<T: Scalar>(cols: &[T], channels: usize, g: &ConvGeom, x: &mut [T]) {
    let (k, p) = (g.kernel, g.small_len());
    debug_assert_eq!(x.len(), channels * g.big_len());
    for c in 0..channels {
        let plane = &mut x[c * g.big_len()..(c + 1) * g.big_len()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..g.small_h {
                    let Some(iy) = g.source(oy, ky, g.big_h) else {
                        continue;
                    };
                    let src = &row[oy * g.small_w..(oy + 1) * g.small_w];
                    let dst = &mut plane[iy * g.big_w..(iy + 1) * g.big_w];
                    for (ox, &v) in src.iter().enumerate() {
                        if let Some(ix) = g.source(ox, kx, g.big_w) {
                            dst[ix] = dst[ix] + v;
                        }
                    }
                }
            }
        }
    }
}

/// Tap validity matrix (`k * k` by `small_h * small_w`): 1 where the tap reads
/// inside the input, 0 where it reads zero padding.
pub fn tap_validity<T: Scalar>(g: &ConvGeom) -> Vec<T> {
    let (k, p) = (g.kernel, g.small_len());
    let mut v = vec![T::zero(); k * k * p];
    for ky in 0..k {
        for kx in 0..k {
            let row = &mut v[(ky * k + kx) * p..][..p];
            for oy in 0..g.small_h {
                if g.source(oy, ky, g.big_h).is_none() {
                    continue;
                }
                for ox in 0..g.small_w {
                    if g.source(ox, kx, g.big_w).is_some() {
                        row[oy * g.small_w + ox] = T::one();
                    }
                }
            }
        }
    }
    v
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v = *v + b;
        }
    }
}

fn accumulate_bias_grad<T: Scalar>(dy: &Tensor<T>, grad: &mut [T]) {
    let plane = dy.height() * dy.width();
    for n in 0..dy.batch() {
        for (chunk, g) in dy.sample(n).chunks(plane).zip(grad.iter_mut()) {
            *g = *g + chunk.iter().copied().sum::<T>();
        }
    }
}

/// Standard convolution, weight laid out `(out, in, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    geom: ConvGeom,
    batch: usize,
    cols: Vec<T>,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
        init_std: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let (kernel, stride, pad) = (5, 2, 2);
        let weight = store.push_normal(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel, kernel],
            init_std,
            rng,
        );
        let bias =
            bias.then(|| store.push_const(format!("{name}.bias"), vec![out_channels], 0.0, true));
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight,
            bias,
        }
    }

    pub fn geometry(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom::forward(self.kernel, self.stride, self.pad, h, w)
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> (Tensor<T>, ConvCache<T>) {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let g = self.geometry(x.height(), x.width());
        let rows = self.in_channels * g.taps();
        let p = g.small_len();
        let n = x.batch();
        let mut cols = vec![T::zero(); n * rows * p];
        let mut out = Tensor::zeros([n, self.out_channels, g.small_h, g.small_w]);
        let w = MatRef::new(store.get(self.weight), self.out_channels, rows);
        for i in 0..n {
            let c = &mut cols[i * rows * p..(i + 1) * rows * p];
            im2col(x.sample(i), self.in_channels, &g, c);
            gemm(
                T::one(),
                w,
                MatRef::new(c, rows, p),
                T::zero(),
                out.sample_mut(i),
                p,
            );
            if let Some(b) = self.bias {
                add_channel_bias(out.sample_mut(i), store.get(b), p);
            }
        }
        (
            out,
            ConvCache {
                geom: g,
                batch: n,
                cols,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        grads: Option<&mut Grads<T>>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let g = cache.geom;
        let rows = self.in_channels * g.taps();
        let p = g.small_len();
        if let Some(grads) = grads {
            let dw = grads.get_mut(self.weight);
            for i in 0..cache.batch {
                let c = &cache.cols[i * rows * p..(i + 1) * rows * p];
                gemm(
                    T::one(),
                    MatRef::new(dy.sample(i), self.out_channels, p),
                    MatRef::new(c, rows, p).t(),
                    T::one(),
                    dw,
                    rows,
                );
            }
            if let Some(b) = self.bias {
                accumulate_bias_grad(dy, grads.get_mut(b));
            }
        }
        if !need_dx {
            return None;
        }
        let w = MatRef::new(store.get(self.weight), self.out_channels, rows);
        let mut dx = Tensor::zeros([cache.batch, self.in_channels, g.big_h, g.big_w]);
        let mut dcols = vec![T::zero(); rows * p];
        for i in 0..cache.batch {
            gemm(
                T::one(),
                w.t(),
                MatRef::new(dy.sample(i), self.out_channels, p),
                T::zero(),
                &mut dcols,
                p,
            );
            col2im(&dcols, self.in_channels, &g, dx.sample_mut(i));
        }
        Some(dx)
    }
}

/// Fractionally strided convolution doubling the spatial size
/// (kernel 5, stride 2, padding 2, output padding 1). Weight laid out
/// `(in, out, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct ConvTCache<T> {
    geom: ConvGeom,
    input: Tensor<T>,
}

impl ConvTranspose2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
        init_std: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let (kernel, stride, pad) = (5, 2, 2);
        let weight = store.push_normal(
            format!("{name}.weight"),
            vec![in_channels, out_channels, kernel, kernel],
            init_std,
            rng,
        );
        let bias =
            bias.then(|| store.push_const(format!("{name}.bias"), vec![out_channels], 0.0, true));
        ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight,
            bias,
        }
    }

    /// Geometry of the adjoint convolution mapping the doubled grid back to `h x w`.
    pub fn geometry(&self, h: usize, w: usize) -> ConvGeom {
        let g = ConvGeom::forward(self.kernel, self.stride, self.pad, 2 * h, 2 * w);
        debug_assert_eq!((g.small_h, g.small_w), (h, w));
        g
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> (Tensor<T>, ConvTCache<T>) {
        assert_eq!(
            x.channels(),
            self.in_channels,
            "transposed conv input channels"
        );
        let g = self.geometry(x.height(), x.width());
        let rows = self.out_channels * g.taps();
        let p = g.small_len();
        let n = x.batch();
        let w = MatRef::new(store.get(self.weight), self.in_channels, rows);
        let mut out = Tensor::zeros([n, self.out_channels, g.big_h, g.big_w]);
        let mut cols = vec![T::zero(); rows * p];
        for i in 0..n {
            gemm(
                T::one(),
                w.t(),
                MatRef::new(x.sample(i), self.in_channels, p),
                T::zero(),
                &mut cols,
                p,
            );
            col2im(&cols, self.out_channels, &g, out.sample_mut(i));
            if let Some(b) = self.bias {
                add_channel_bias(out.sample_mut(i), store.get(b), g.big_len());
            }
        }
        (
            out,
            ConvTCache {
                geom: g,
                input: x.clone(),
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &ConvTCache<T>,
        dy: &Tensor<T>,
        grads: Option<&mut Grads<T>>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let g = cache.geom;
        let rows = self.out_channels * g.taps();
        let p = g.small_len();
        let n = cache.input.batch();
        let mut dcols = vec![T::zero(); n * rows * p];
        for i in 0..n {
            im2col(
                dy.sample(i),
                self.out_channels,
                &g,
                &mut dcols[i * rows * p..(i + 1) * rows * p],
            );
        }
        if let Some(grads) = grads {
            let dw = grads.get_mut(self.weight);
            for i in 0..n {
                gemm(
                    T::one(),
                    MatRef::new(cache.input.sample(i), self.in_channels, p),
                    MatRef::new(&dcols[i * rows * p..(i + 1) * rows * p], rows, p).t(),
                    T::one(),
                    dw,
                    rows,
                );
            }
            if let Some(b) = self.bias {
                accumulate_bias_grad(dy, grads.get_mut(b));
            }
        }
        if !need_dx {
            return None;
        }
        let w = MatRef::new(store.get(self.weight), self.in_channels, rows);
        let mut dx = Tensor::zeros([n, self.in_channels, g.small_h, g.small_w]);
        for i in 0..n {
            gemm(
                T::one(),
                w,
                MatRef::new(&dcols[i * rows * p..(i + 1) * rows * p], rows, p),
                T::zero(),
                dx.sample_mut(i),
                p,
            );
        }
        Some(dx)
    }
}

/// First generator layer: a convolution over `[tile(z), map]`.
///
/// Because the tiled latent is spatially constant, its contribution at each
/// output site is `sum_t (sum_k W[o,k,t] z_k) * valid(t, site)`. This is the
/// same linear map as convolving the explicitly tiled tensor, at a fraction of
/// the cost. The weight keeps the ordinary `(out, latent + map, k, k)` layout
/// with latent channels first.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMapConv {
    pub latent_dim: usize,
    pub map_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: ParamId,
}

#[derive(Debug, Clone)]
pub struct LatentMapCache<T> {
    geom: ConvGeom,
    z: Vec<T>,
    batch: usize,
    map_cols: Vec<T>,
    validity: Vec<T>,
}

impl LatentMapConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        latent_dim: usize,
        map_channels: usize,
        out_channels: usize,
        init_std: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let kernel = 5;
        let weight = store.push_normal(
            format!("{name}.weight"),
            vec![out_channels, latent_dim + map_channels, kernel, kernel],
            init_std,
            rng,
        );
        LatentMapConv {
            latent_dim,
            map_channels,
            out_channels,
            kernel,
            stride: 2,
            pad: 2,
            weight,
        }
    }

    fn row_len(&self) -> usize {
        (self.latent_dim + self.map_channels) * self.kernel * self.kernel
    }

    /// `z` is `batch x latent_dim` row-major; `map` is NCHW with `map_channels`.
    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z: &[T],
        map: &Tensor<T>,
    ) -> (Tensor<T>, LatentMapCache<T>) {
        let n = map.batch();
        assert_eq!(z.len(), n * self.latent_dim, "latent batch");
        assert_eq!(map.channels(), self.map_channels, "map channels");
        let g = ConvGeom::forward(
            self.kernel,
            self.stride,
            self.pad,
            map.height(),
            map.width(),
        );
        let taps = g.taps();
        let p = g.small_len();
        let (k, oc) = (self.latent_dim, self.out_channels);
        let wdata = store.get(self.weight);
        let row_len = self.row_len();
        let map_rows = self.map_channels * taps;

        // a[n, o, t] = sum_k W[o, k, t] z[n, k]
        let mut a = vec![T::zero(); n * oc * taps];
        for o in 0..oc {
            let w_o = MatRef::strided(&wdata[o * row_len..], k, taps, taps, 1);
            gemm(
                T::one(),
                MatRef::new(z, n, k),
                w_o,
                T::zero(),
                &mut a[o * taps..],
                oc * taps,
            );
        }
        let validity = tap_validity::<T>(&g);
        let w_map = MatRef::strided(&wdata[k * taps..], oc, map_rows, row_len, 1);
        let mut map_cols = vec![T::zero(); n * map_rows * p];
        let mut out = Tensor::zeros([n, oc, g.small_h, g.small_w]);
        for i in 0..n {
            let cols = &mut map_cols[i * map_rows * p..(i + 1) * map_rows * p];
            im2col(map.sample(i), self.map_channels, &g, cols);
            let o = out.sample_mut(i);
            gemm(
                T::one(),
                w_map,
                MatRef::new(cols, map_rows, p),
                T::zero(),
                o,
                p,
            );
            gemm(
                T::one(),
                MatRef::new(&a[i * oc * taps..(i + 1) * oc * taps], oc, taps),
                MatRef::new(&validity, taps, p),
                T::one(),
                o,
                p,
            );
        }
        (
            out,
            LatentMapCache {
                geom: g,
                z: z.to_vec(),
                batch: n,
                map_cols,
                validity,
            },
        )
    }

    /// Returns the gradient with respect to `z` (`batch x latent_dim`) when requested.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &LatentMapCache<T>,
        dy: &Tensor<T>,
        grads: Option<&mut Grads<T>>,
        need_dz: bool,
    ) -> Option<Vec<T>> {
        let g = cache.geom;
        let taps = g.taps();
        let p = g.small_len();
        let (n, k, oc) = (cache.batch, self.latent_dim, self.out_channels);
        let row_len = self.row_len();
        let map_rows = self.map_channels * taps;

        // b[n, o, t] = sum_site dy[n, o, site] * valid(t, site)
        let mut b = vec![T::zero(); n * oc * taps];
        for i in 0..n {
            gemm(
                T::one(),
                MatRef::new(dy.sample(i), oc, p),
                MatRef::new(&cache.validity, taps, p).t(),
                T::zero(),
                &mut b[i * oc * taps..],
                taps,
            );
        }
        if let Some(grads) = grads {
            let dw = grads.get_mut(self.weight);
            for o in 0..oc {
                gemm(
                    T::one(),
                    MatRef::new(&cache.z, n, k).t(),
                    MatRef::strided(&b[o * taps..], n, taps, oc * taps, 1),
                    T::one(),
                    &mut dw[o * row_len..],
                    taps,
                );
            }
            for i in 0..n {
                gemm(
                    T::one(),
                    MatRef::new(dy.sample(i), oc, p),
                    MatRef::new(
                        &cache.map_cols[i * map_rows * p..(i + 1) * map_rows * p],
                        map_rows,
                        p,
                    )
                    .t(),
                    T::one(),
                    &mut dw[k * taps..],
                    row_len,
                );
            }
        }
        if !need_dz {
            return None;
        }
        let wdata = store.get(self.weight);
        let mut dz = vec![T::zero(); n * k];
        for o in 0..oc {
            gemm(
                T::one(),
                MatRef::strided(&b[o * taps..], n, taps, oc * taps, 1),
                MatRef::strided(&wdata[o * row_len..], k, taps, taps, 1).t(),
                T::one(),
                &mut dz,
                k,
            );
        }
        Some(dz)
    }
}
