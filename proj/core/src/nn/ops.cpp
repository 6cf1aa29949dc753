#include "hwm/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace hwm::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw ShapeError(op + ": " + what);
}

template <class T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw std::logic_error("operands belong to different graphs");
  return *a.graph;
}

/// Adds `delta` into the gradient of node `id` when that node participates in
/// differentiation.
template <class T, class F>
void accumulate(Graph<T>& g, std::uint32_t id, F&& fn) {
  if (!g.requires_grad(id)) return;
  fn(g.grad(id));
}

template <class T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) + dy;
          T* out = row + y * w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* src = img + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) + dx;
            out[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, T* img) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) + dy;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = img + (c * h + static_cast<std::size_t>(iy)) * w;
          const T* in = row + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) + dx;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += in[x];
          }
        }
      }
    }
  }
}

template <class T, class Fwd, class Deriv>
Var<T> unary(Var<T> x, Fwd fwd, Deriv deriv, std::string_view op) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::uint32_t xi = x.id;
  return g.record(std::move(out), {xi},
                  [xi, deriv](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    const Tensor<T>& xv2 = gr.value(xi);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv2[i]);
                    });
                  },
                  op);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Graph<T>& g = graph_of(x, weight);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  const Tensor<T>& bv = bias.value();
  require<T>(xv.rank() == 2 && wv.rank() == 2, "linear",
             "expected x [N,in] and W [out,in], got " + shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
  const std::size_t n = xv.dim(0), in = xv.dim(1), out_f = wv.dim(0);
  require<T>(wv.dim(1) == in, "linear", "input width " + std::to_string(in) + " vs weight " + shape_str(wv.shape()));
  require<T>(bv.size() == out_f, "linear", "bias " + shape_str(bv.shape()) + " vs " + std::to_string(out_f) + " outputs");

  Tensor<T> out({n, out_f});
  MapMat<T> y(out.ptr(), n, out_f);
  y.noalias() = CMapMat<T>(xv.ptr(), n, in) * CMapMat<T>(wv.ptr(), out_f, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bv.ptr(), out_f);

  const std::uint32_t xi = x.id, wi = weight.id, bi = bias.id;
  return g.record(std::move(out), {xi, wi, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gyt = gr.grad(self);
                    CMapMat<T> gy(gyt.ptr(), n, out_f);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      MapMat<T>(gx.ptr(), n, in).noalias() += gy * CMapMat<T>(gr.value(wi).ptr(), out_f, in);
                    });
                    accumulate(gr, wi, [&](Tensor<T>& gw) {
                      MapMat<T>(gw.ptr(), out_f, in).noalias() += gy.transpose() * CMapMat<T>(gr.value(xi).ptr(), n, in);
                    });
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      // Plain loop: Eigen's vectorised reductions pick their order from pointer alignment.
                      for (std::size_t o = 0; o < out_f; ++o) {
                        T acc = 0;
                        for (std::size_t r = 0; r < n; ++r) acc += gyt[r * out_f + o];
                        gb[o] += acc;
                      }
                    });
                  },
                  "linear");
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias) {
  Graph<T>& g = graph_of(x, weight);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  require<T>(xv.rank() == 4 && wv.rank() == 4, "conv2d",
             "expected x [N,C,H,W] and W [Co,Ci,K,K], got " + shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
  const std::size_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t co = wv.dim(0), k = wv.dim(2);
  require<T>(wv.dim(1) == ci, "conv2d", "input has " + std::to_string(ci) + " channels, weight " + shape_str(wv.shape()));
  require<T>(wv.dim(3) == k && k % 2 == 1, "conv2d", "kernel must be odd and square, got " + shape_str(wv.shape()));
  require<T>(bias.value().size() == co, "conv2d", "bias " + shape_str(bias.value().shape()) + " vs " + std::to_string(co));

  const std::size_t hw = h * w, kk = ci * k * k;
  Tensor<T> out({n, co, h, w});
  std::vector<T> cols(kk * hw);
  CMapMat<T> wm(wv.ptr(), co, kk);
  const T* bp = bias.value().ptr();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(xv.ptr() + s * ci * hw, ci, h, w, k, cols.data());
    MapMat<T> y(out.ptr() + s * co * hw, co, hw);
    y.noalias() = wm * CMapMat<T>(cols.data(), kk, hw);
    for (std::size_t c = 0; c < co; ++c) y.row(static_cast<Eigen::Index>(c)).array() += bp[c];
  }

  const std::uint32_t xi = x.id, wi = weight.id, bi = bias.id;
  return g.record(std::move(out), {xi, wi, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gyt = gr.grad(self);
                    const Tensor<T>& xin = gr.value(xi);
                    CMapMat<T> wmat(gr.value(wi).ptr(), co, kk);
                    const bool need_x = gr.requires_grad(xi);
                    const bool need_w = gr.requires_grad(wi);
                    std::vector<T> buf(kk * hw);
                    std::vector<T> dcols(need_x ? kk * hw : 0);
                    for (std::size_t s = 0; s < n; ++s) {
                      CMapMat<T> gy(gyt.ptr() + s * co * hw, co, hw);
                      if (need_w) {
                        im2col(xin.ptr() + s * ci * hw, ci, h, w, k, buf.data());
                        MapMat<T>(gr.grad(wi).ptr(), co, kk).noalias() += gy * CMapMat<T>(buf.data(), kk, hw).transpose();
                      }
                      if (need_x) {
                        MapMat<T>(dcols.data(), kk, hw).noalias() = wmat.transpose() * gy;
                        col2im_add(dcols.data(), ci, h, w, k, gr.grad(xi).ptr() + s * ci * hw);
                      }
                    }
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t c = 0; c < co; ++c) {
                          const T* row = gyt.ptr() + (s * co + c) * hw;
                          T acc = 0;
                          for (std::size_t i = 0; i < hw; ++i) acc += row[i];
                          gb[c] += acc;
                        }
                    });
                  },
                  "conv2d");
}

template <class T>
Var<T> film(Var<T> x, Var<T> gamma, Var<T> beta) {
  Graph<T>& g = graph_of(x, gamma);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  require<T>(xv.rank() >= 2, "film", "x must be [N,C,...], got " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  require<T>(gv.shape() == Shape{n, c} && bv.shape() == Shape{n, c}, "film",
             "x " + shape_str(xv.shape()) + " needs gamma/beta [" + std::to_string(n) + "x" + std::to_string(c) +
                 "], got " + shape_str(gv.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t inner = xv.size() / (n * c);
  Tensor<T> out(xv.shape());
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const T gm = gv[nc], bt = bv[nc];
    const T* src = xv.ptr() + nc * inner;
    T* dst = out.ptr() + nc * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] = gm * src[i] + bt;
  }
  const std::uint32_t xi = x.id, gi = gamma.id, bi = beta.id;
  return g.record(std::move(out), {xi, gi, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    const Tensor<T>& xin = gr.value(xi);
                    const Tensor<T>& gmv = gr.value(gi);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t nc = 0; nc < n * c; ++nc)
                        for (std::size_t i = 0; i < inner; ++i) gx[nc * inner + i] += gmv[nc] * gy[nc * inner + i];
                    });
                    accumulate(gr, gi, [&](Tensor<T>& gg) {
                      for (std::size_t nc = 0; nc < n * c; ++nc) {
                        T acc = 0;
                        for (std::size_t i = 0; i < inner; ++i) acc += gy[nc * inner + i] * xin[nc * inner + i];
                        gg[nc] += acc;
                      }
                    });
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      for (std::size_t nc = 0; nc < n * c; ++nc) {
                        T acc = 0;
                        for (std::size_t i = 0; i < inner; ++i) acc += gy[nc * inner + i];
                        gb[nc] += acc;
                      }
                    });
                  },
                  "film");
}

template <class T>
Var<T> silu(Var<T> x) {
  return unary<T>(
      x, [](T v) { return v * sigmoid(v); },
      [](T v) {
        const T s = sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      },
      "silu");
}

template <class T>
Var<T> relu(Var<T> x) {
  return unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <class T>
Var<T> add_scalar(Var<T> x, T c) {
  return unary<T>(x, [c](T v) { return v + c; }, [](T) { return T(1); }, "add_scalar");
}

template <class T>
Var<T> scale(Var<T> x, T c) {
  return unary<T>(x, [c](T v) { return v * c; }, [c](T) { return c; }, "scale");
}

namespace {

template <class T>
Var<T> binary_same_shape(Var<T> a, Var<T> b, int kind, std::string_view op) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require<T>(av.shape() == bv.shape(), std::string(op),
             "operand shapes differ: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = kind == 0 ? av[i] + bv[i] : kind == 1 ? av[i] - bv[i] : av[i] * bv[i];
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return g.record(std::move(out), {ai, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, ai, [&](Tensor<T>& ga) {
                      if (kind == 2) {
                        const Tensor<T>& bw = gr.value(bi);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bw[i];
                      } else {
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                      }
                    });
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      if (kind == 2) {
                        const Tensor<T>& aw = gr.value(ai);
                        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * aw[i];
                      } else if (kind == 1) {
                        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
                      } else {
                        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i];
                      }
                    });
                  },
                  op);
}

}  // namespace

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary_same_shape(a, b, 0, "add");
}
template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary_same_shape(a, b, 1, "sub");
}
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary_same_shape(a, b, 2, "mul");
}

template <class T>
Var<T> avg_pool2(Var<T> x) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  require<T>(xv.rank() == 4 && xv.dim(2) % 2 == 0 && xv.dim(3) % 2 == 0, "avg_pool2",
             "expected [N,C,H,W] with even H and W, got " + shape_str(xv.shape()));
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3), ho = h / 2, wo = w / 2;
  Tensor<T> out({xv.dim(0), xv.dim(1), ho, wo});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.ptr() + p * h * w;
    T* dst = out.ptr() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const T* q = src + 2 * y * w + 2 * xx;
        dst[y * wo + xx] = T(0.25) * (q[0] + q[1] + q[w] + q[w + 1]);
      }
  }
  const std::uint32_t xi = x.id;
  return g.record(std::move(out), {xi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t p = 0; p < nc; ++p) {
                        T* dst = gx.ptr() + p * h * w;
                        const T* src = gy.ptr() + p * ho * wo;
                        for (std::size_t y = 0; y < ho; ++y)
                          for (std::size_t xx = 0; xx < wo; ++xx) {
                            const T v = T(0.25) * src[y * wo + xx];
                            T* q = dst + 2 * y * w + 2 * xx;
                            q[0] += v;
                            q[1] += v;
                            q[w] += v;
                            q[w + 1] += v;
                          }
                      }
                    });
                  },
                  "avg_pool2");
}

template <class T>
Var<T> upsample_nearest2(Var<T> x) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  require<T>(xv.rank() == 4, "upsample_nearest2", "expected [N,C,H,W], got " + shape_str(xv.shape()));
  const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3), ho = 2 * h, wo = 2 * w;
  Tensor<T> out({xv.dim(0), xv.dim(1), ho, wo});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.ptr() + p * h * w;
    T* dst = out.ptr() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) dst[y * wo + xx] = src[(y / 2) * w + xx / 2];
  }
  const std::uint32_t xi = x.id;
  return g.record(std::move(out), {xi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t p = 0; p < nc; ++p) {
                        T* dst = gx.ptr() + p * h * w;
                        const T* src = gy.ptr() + p * ho * wo;
                        for (std::size_t y = 0; y < ho; ++y)
                          for (std::size_t xx = 0; xx < wo; ++xx) dst[(y / 2) * w + xx / 2] += src[y * wo + xx];
                      }
                    });
                  },
                  "upsample_nearest2");
}

template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require<T>(av.rank() >= 2 && av.rank() == bv.rank() && av.dim(0) == bv.dim(0), "concat_channels",
             "incompatible operands " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  for (std::size_t d = 2; d < av.rank(); ++d) {
    require<T>(av.dim(d) == bv.dim(d), "concat_channels",
               "spatial extents differ: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0);
  const std::size_t sa = av.size() / n, sb = bv.size() / n;
  Shape shape = av.shape();
  shape[1] = av.dim(1) + bv.dim(1);
  Tensor<T> out(shape);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(av.ptr() + s * sa, sa, out.ptr() + s * (sa + sb));
    std::copy_n(bv.ptr() + s * sb, sb, out.ptr() + s * (sa + sb) + sa);
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return g.record(std::move(out), {ai, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, ai, [&](Tensor<T>& ga) {
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t i = 0; i < sa; ++i) ga[s * sa + i] += gy[s * (sa + sb) + i];
                    });
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t i = 0; i < sb; ++i) gb[s * sb + i] += gy[s * (sa + sb) + sa + i];
                    });
                  },
                  "concat_channels");
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t offset, std::size_t len) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  require<T>(xv.rank() == 2 && offset + len <= xv.dim(1) && len > 0, "slice_cols",
             "columns [" + std::to_string(offset) + "," + std::to_string(offset + len) + ") out of " +
                 shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), f = xv.dim(1);
  Tensor<T> out({n, len});
  for (std::size_t s = 0; s < n; ++s) std::copy_n(xv.ptr() + s * f + offset, len, out.ptr() + s * len);
  const std::uint32_t xi = x.id;
  return g.record(std::move(out), {xi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t i = 0; i < len; ++i) gx[s * f + offset + i] += gy[s * len + i];
                    });
                  },
                  "slice_cols");
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Graph<T>& g = *x.graph;
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::uint32_t xi = x.id;
  return g.record(std::move(out), {xi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const Tensor<T>& gy = gr.grad(self);
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
                    });
                  },
                  "reshape");
}

template <class T>
Var<T> sum(Var<T> x) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  T acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  const std::uint32_t xi = x.id;
  return g.record(Tensor<T>({1}, {acc}), {xi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const T gy = gr.grad(self)[0];
                    accumulate(gr, xi, [&](Tensor<T>& gx) {
                      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
                    });
                  },
                  "sum");
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require<T>(av.shape() == bv.shape(), "mse", "operand shapes differ: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const std::size_t n = av.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = av[i] - bv[i];
    acc += d * d;
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return g.record(Tensor<T>({1}, {acc / static_cast<T>(n)}), {ai, bi},
                  [=](Graph<T>& gr, std::uint32_t self) {
                    const T k = T(2) * gr.grad(self)[0] / static_cast<T>(n);
                    const Tensor<T>& a2 = gr.value(ai);
                    const Tensor<T>& b2 = gr.value(bi);
                    accumulate(gr, ai, [&](Tensor<T>& ga) {
                      for (std::size_t i = 0; i < n; ++i) ga[i] += k * (a2[i] - b2[i]);
                    });
                    accumulate(gr, bi, [&](Tensor<T>& gb) {
                      for (std::size_t i = 0; i < n; ++i) gb[i] -= k * (a2[i] - b2[i]);
                    });
                  },
                  "mse");
}

#define HWM_INSTANTIATE_OPS(T)                                                   \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>);                                \
  template Var<T> film(Var<T>, Var<T>, Var<T>);                                  \
  template Var<T> silu(Var<T>);                                                  \
  template Var<T> relu(Var<T>);                                                  \
  template Var<T> add(Var<T>, Var<T>);                                           \
  template Var<T> sub(Var<T>, Var<T>);                                           \
  template Var<T> mul(Var<T>, Var<T>);                                           \
  template Var<T> add_scalar(Var<T>, T);                                         \
  template Var<T> scale(Var<T>, T);                                              \
  template Var<T> avg_pool2(Var<T>);                                             \
  template Var<T> upsample_nearest2(Var<T>);                                     \
  template Var<T> concat_channels(Var<T>, Var<T>);                               \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                  \
  template Var<T> reshape(Var<T>, Shape);                                        \
  template Var<T> sum(Var<T>);                                                   \
  template Var<T> mean(Var<T>);                                                  \
  template Var<T> mse(Var<T>, Var<T>);

HWM_INSTANTIATE_OPS(float)
HWM_INSTANTIATE_OPS(double)

}  // namespace hwm::nn
