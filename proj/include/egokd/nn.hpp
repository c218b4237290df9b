#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "egokd/errors.hpp"
#include "egokd/rng.hpp"
#include "egokd/tensor.hpp"

namespace egokd {

// Plain-loop layers templated on the scalar type: training runs in float,
// finite-difference checks instantiate the same code in double.

template <typename T>
struct Conv3d {
  int in_channels = 0, out_channels = 0;
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  Tensor<T> weight;  // [oc, ic, kt, kh, kw]
  Tensor<T> bias;    // [oc]

  static Conv3d make(int ic, int oc, std::array<int, 3> kernel, std::array<int, 3> stride,
                     std::array<int, 3> pad) {
    Conv3d conv;
    conv.in_channels = ic;
    conv.out_channels = oc;
    conv.kernel = kernel;
    conv.stride = stride;
    conv.pad = pad;
    conv.weight = Tensor<T>({oc, ic, kernel[0], kernel[1], kernel[2]});
    conv.bias = Tensor<T>({oc});
    return conv;
  }

  std::array<int, 4> out_shape(const std::array<int, 4>& in) const {
    const auto dim = [](int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
    return {out_channels, dim(in[1], kernel[0], stride[0], pad[0]),
            dim(in[2], kernel[1], stride[1], pad[1]), dim(in[3], kernel[2], stride[2], pad[2])};
  }

  // The input is copied into a zero-padded scratch buffer so the inner loops
  // run branch-free; zero taps contribute exactly nothing, so results match
  // the bounds-checked formulation bit for bit.
  void forward(const Tensor<T>& x, Tensor<T>& y) const {
    const int it = x.shape[1], ih = x.shape[2], iw = x.shape[3];
    const auto os = out_shape({x.shape[0], it, ih, iw});
    if (y.shape != std::vector<int>{os[0], os[1], os[2], os[3]}) {
      y = Tensor<T>({os[0], os[1], os[2], os[3]});
    }
    const int ot_n = os[1], oh_n = os[2], ow_n = os[3];
    const int itp = it + 2 * pad[0], ihp = ih + 2 * pad[1], iwp = iw + 2 * pad[2];
    const size_t pad_plane = static_cast<size_t>(ihp) * iwp;
    const size_t out_plane = static_cast<size_t>(oh_n) * ow_n;

    static thread_local std::vector<T> xp;
    pad_input(x, xp, itp, ihp, iwp);

    static thread_local std::vector<T> acc;
    acc.resize(ow_n);

    const int st = stride[0], sh = stride[1], sw = stride[2];
    acc.resize(out_plane);
    for (int oc = 0; oc < out_channels; ++oc) {
      T* ybase = y.ptr() + static_cast<size_t>(oc) * ot_n * out_plane;
      const T* wbase =
          weight.ptr() + static_cast<size_t>(oc) * in_channels * kernel[0] * kernel[1] * kernel[2];
      for (int ot = 0; ot < ot_n; ++ot) {
        T* __restrict__ aplane = acc.data();
        for (size_t i = 0; i < out_plane; ++i) aplane[i] = bias.data[oc];
        const T* wtap = wbase;
        for (int ic = 0; ic < in_channels; ++ic) {
          const T* xc = xp.data() + static_cast<size_t>(ic) * itp * pad_plane;
          for (int kt = 0; kt < kernel[0]; ++kt) {
            const T* xt = xc + static_cast<size_t>(ot * st + kt) * pad_plane;
            for (int kh = 0; kh < kernel[1]; ++kh) {
              for (int kw = 0; kw < kernel[2]; ++kw) {
                const T w = *wtap++;
                const T* xkh = xt + static_cast<size_t>(kh) * iwp + kw;
                if (sh == 1 && sw == 1) {
                  for (int oh = 0; oh < oh_n; ++oh) {
                    const T* __restrict__ xk = xkh + static_cast<size_t>(oh) * iwp;
                    T* __restrict__ arow = aplane + static_cast<size_t>(oh) * ow_n;
                    for (int ow = 0; ow < ow_n; ++ow) arow[ow] += w * xk[ow];
                  }
                } else if (sh == 2 && sw == 2) {
                  for (int oh = 0; oh < oh_n; ++oh) {
                    const T* __restrict__ xk = xkh + static_cast<size_t>(2 * oh) * iwp;
                    T* __restrict__ arow = aplane + static_cast<size_t>(oh) * ow_n;
                    for (int ow = 0; ow < ow_n; ++ow) arow[ow] += w * xk[2 * ow];
                  }
                } else {
                  for (int oh = 0; oh < oh_n; ++oh) {
                    const T* __restrict__ xk = xkh + static_cast<size_t>(oh * sh) * iwp;
                    T* __restrict__ arow = aplane + static_cast<size_t>(oh) * ow_n;
                    for (int ow = 0; ow < ow_n; ++ow) arow[ow] += w * xk[ow * sw];
                  }
                }
              }
            }
          }
        }
        T* yplane = ybase + static_cast<size_t>(ot) * out_plane;
        for (size_t i = 0; i < out_plane; ++i) yplane[i] = aplane[i];
      }
    }
  }

  // Accumulates into dx (when non-null) and into grad.weight / grad.bias.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx, Conv3d& grad) const {
    const int it = x.shape[1], ih = x.shape[2], iw = x.shape[3];
    const int ot_n = dy.shape[1], oh_n = dy.shape[2], ow_n = dy.shape[3];
    const int itp = it + 2 * pad[0], ihp = ih + 2 * pad[1], iwp = iw + 2 * pad[2];
    const size_t pad_plane = static_cast<size_t>(ihp) * iwp;
    const size_t in_plane = static_cast<size_t>(ih) * iw;
    const size_t out_plane = static_cast<size_t>(oh_n) * ow_n;

    static thread_local std::vector<T> xp;
    pad_input(x, xp, itp, ihp, iwp);
    static thread_local std::vector<T> dxp;
    if (dx) {
      dxp.assign(static_cast<size_t>(in_channels) * itp * pad_plane, T(0));
    }

    const int st = stride[0], sh = stride[1], sw = stride[2];
    for (int oc = 0; oc < out_channels; ++oc) {
      const T* dybase = dy.ptr() + static_cast<size_t>(oc) * ot_n * out_plane;
      T bsum = T(0);
      for (size_t i = 0; i < static_cast<size_t>(ot_n) * out_plane; ++i) bsum += dybase[i];
      grad.bias.data[oc] += bsum;

      const size_t w_oc =
          static_cast<size_t>(oc) * in_channels * kernel[0] * kernel[1] * kernel[2];
      for (int ic = 0; ic < in_channels; ++ic) {
        const T* xc = xp.data() + static_cast<size_t>(ic) * itp * pad_plane;
        T* dxc = dx ? dxp.data() + static_cast<size_t>(ic) * itp * pad_plane : nullptr;
        for (int kt = 0; kt < kernel[0]; ++kt) {
          for (int kh = 0; kh < kernel[1]; ++kh) {
            for (int kw = 0; kw < kernel[2]; ++kw) {
              const size_t w_idx =
                  w_oc + ((static_cast<size_t>(ic) * kernel[0] + kt) * kernel[1] + kh) *
                             kernel[2] +
                  kw;
              const T w = weight.data[w_idx];
              // four fixed-order partial sums break the add latency chain
              T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
              for (int ot = 0; ot < ot_n; ++ot) {
                for (int oh = 0; oh < oh_n; ++oh) {
                  const size_t off = static_cast<size_t>(ot * st + kt) * pad_plane +
                                     static_cast<size_t>(oh * sh + kh) * iwp + kw;
                  const T* __restrict__ xr = xc + off;
                  const T* __restrict__ dyr = dybase + static_cast<size_t>(ot) * out_plane +
                                              static_cast<size_t>(oh) * ow_n;
                  const int quads = ow_n & ~3;
                  if (sw == 1) {
                    for (int ow = 0; ow < quads; ow += 4) {
                      s0 += xr[ow] * dyr[ow];
                      s1 += xr[ow + 1] * dyr[ow + 1];
                      s2 += xr[ow + 2] * dyr[ow + 2];
                      s3 += xr[ow + 3] * dyr[ow + 3];
                    }
                    for (int ow = quads; ow < ow_n; ++ow) s0 += xr[ow] * dyr[ow];
                  } else {
                    for (int ow = 0; ow < quads; ow += 4) {
                      s0 += xr[ow * sw] * dyr[ow];
                      s1 += xr[(ow + 1) * sw] * dyr[ow + 1];
                      s2 += xr[(ow + 2) * sw] * dyr[ow + 2];
                      s3 += xr[(ow + 3) * sw] * dyr[ow + 3];
                    }
                    for (int ow = quads; ow < ow_n; ++ow) s0 += xr[ow * sw] * dyr[ow];
                  }
                  if (dxc) {
                    T* __restrict__ dxrow = dxc + off;
                    if (sw == 1) {
                      for (int ow = 0; ow < ow_n; ++ow) dxrow[ow] += w * dyr[ow];
                    } else if (sw == 2) {
                      for (int ow = 0; ow < ow_n; ++ow) dxrow[2 * ow] += w * dyr[ow];
                    } else {
                      for (int ow = 0; ow < ow_n; ++ow) dxrow[ow * sw] += w * dyr[ow];
                    }
                  }
                }
              }
              grad.weight.data[w_idx] += (s0 + s1) + (s2 + s3);
            }
          }
        }
      }
    }

    if (dx) {
      for (int ic = 0; ic < in_channels; ++ic) {
        for (int t = 0; t < it; ++t) {
          for (int h = 0; h < ih; ++h) {
            const T* src = dxp.data() + (static_cast<size_t>(ic) * itp + t + pad[0]) * pad_plane +
                           static_cast<size_t>(h + pad[1]) * iwp + pad[2];
            T* dst = dx->ptr() + (static_cast<size_t>(ic) * it + t) * in_plane +
                     static_cast<size_t>(h) * iw;
            for (int w = 0; w < iw; ++w) dst[w] += src[w];
          }
        }
      }
    }
  }

 private:
  void pad_input(const Tensor<T>& x, std::vector<T>& xp, int itp, int ihp, int iwp) const {
    const int it = x.shape[1], ih = x.shape[2], iw = x.shape[3];
    const size_t pad_plane = static_cast<size_t>(ihp) * iwp;
    xp.assign(static_cast<size_t>(in_channels) * itp * pad_plane, T(0));
    for (int ic = 0; ic < in_channels; ++ic) {
      for (int t = 0; t < it; ++t) {
        for (int h = 0; h < ih; ++h) {
          const T* src = x.ptr() + (static_cast<size_t>(ic) * it + t) * ih * iw +
                         static_cast<size_t>(h) * iw;
          T* dst = xp.data() + (static_cast<size_t>(ic) * itp + t + pad[0]) * pad_plane +
                   static_cast<size_t>(h + pad[1]) * iwp + pad[2];
          for (int w = 0; w < iw; ++w) dst[w] = src[w];
        }
      }
    }
  }
};

template <typename T>
struct Linear {
  int in_features = 0, out_features = 0;
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  static Linear make(int in, int out) {
    Linear l;
    l.in_features = in;
    l.out_features = out;
    l.weight = Tensor<T>({out, in});
    l.bias = Tensor<T>({out});
    return l;
  }

  void forward(const std::vector<T>& x, std::vector<T>& y) const {
    y.assign(out_features, T(0));
    for (int o = 0; o < out_features; ++o) {
      const T* wrow = weight.ptr() + static_cast<size_t>(o) * in_features;
      T acc = bias.data[o];
      for (int i = 0; i < in_features; ++i) acc += wrow[i] * x[i];
      y[o] = acc;
    }
  }

  void backward(const std::vector<T>& x, const std::vector<T>& dy, std::vector<T>* dx,
                Linear& grad) const {
    for (int o = 0; o < out_features; ++o) {
      const T g = dy[o];
      grad.bias.data[o] += g;
      T* gw = grad.weight.ptr() + static_cast<size_t>(o) * in_features;
      const T* wrow = weight.ptr() + static_cast<size_t>(o) * in_features;
      for (int i = 0; i < in_features; ++i) {
        gw[i] += g * x[i];
        if (dx) (*dx)[i] += wrow[i] * g;
      }
    }
  }
};

template <typename T>
void relu_forward(const Tensor<T>& z, Tensor<T>& a) {
  if (!a.same_shape(z)) a = Tensor<T>(z.shape);
  for (size_t i = 0; i < z.numel(); ++i) a.data[i] = z.data[i] > T(0) ? z.data[i] : T(0);
}

// dz += da where z > 0
template <typename T>
void relu_backward(const Tensor<T>& z, const Tensor<T>& da, Tensor<T>& dz) {
  for (size_t i = 0; i < z.numel(); ++i) {
    if (z.data[i] > T(0)) dz.data[i] += da.data[i];
  }
}

template <typename T>
void log_softmax_vec(const std::vector<T>& z, std::vector<T>& out) {
  T m = z[0];
  for (T v : z) m = std::max(m, v);
  T sum = T(0);
  for (T v : z) sum += std::exp(v - m);
  const T lse = m + std::log(sum);
  out.resize(z.size());
  for (size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
}

// dz_i += dlp_i - softmax_i * sum(dlp)
template <typename T>
void log_softmax_backward(const std::vector<T>& logprobs, const std::vector<T>& dlp,
                          std::vector<T>& dz) {
  T total = T(0);
  for (T v : dlp) total += v;
  dz.resize(logprobs.size(), T(0));
  for (size_t i = 0; i < logprobs.size(); ++i) {
    dz[i] += dlp[i] - std::exp(logprobs[i]) * total;
  }
}

template <typename T>
std::vector<T> softmax_vec(const std::vector<T>& z) {
  std::vector<T> lp;
  log_softmax_vec(z, lp);
  for (T& v : lp) v = std::exp(v);
  return lp;
}

}  // namespace egokd
