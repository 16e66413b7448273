#include "p2at/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace p2at::kernels {

namespace {

template <typename T>
inline T sigmoid_v(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T hardswish_v(T x) {
  T c = std::clamp(x + T(3), T(0), T(6));
  return x * c / T(6);
}

}  // namespace

template <typename T>
void conv2d_fwd(const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
                const T* weight, int64_t cout, const T* bias, const KernelSpec& ks,
                T* out, int64_t oh, int64_t ow) {
  const int64_t cpg = cin / ks.groups;        // input channels per group
  const int64_t opg = cout / ks.groups;       // output channels per group
  const int64_t rows = n * cout * oh;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t oy = row % oh;
    const int64_t co = (row / oh) % cout;
    const int64_t b = row / (oh * cout);
    const int64_t g = co / opg;
    T* orow = out + (((b * cout + co) * oh + oy)) * ow;
    const T bv = bias ? bias[co] : T(0);
    for (int64_t ox = 0; ox < ow; ++ox) orow[ox] = bv;
    for (int64_t cl = 0; cl < cpg; ++cl) {
      const int64_t ci = g * cpg + cl;
      const T* iplane = in + ((b * cin + ci) * h) * w;
      const T* wbase = weight + ((co * cpg + cl) * ks.kh) * ks.kw;
      for (int64_t ky = 0; ky < ks.kh; ++ky) {
        const int64_t iy = oy * ks.sh - ks.ph + ky;
        if (iy < 0 || iy >= h) continue;
        const T* irow = iplane + iy * w;
        for (int64_t kx = 0; kx < ks.kw; ++kx) {
          const T wv = wbase[ky * ks.kw + kx];
          // valid ox range so that ix = ox*sw - pw + kx lands in [0, w)
          int64_t x0 = 0, x1 = ow;
          if (ks.sw == 1) {
            x0 = std::max<int64_t>(0, ks.pw - kx);
            x1 = std::min<int64_t>(ow, w + ks.pw - kx);
            const T* ir = irow - ks.pw + kx;
            for (int64_t ox = x0; ox < x1; ++ox) orow[ox] += wv * ir[ox];
          } else {
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * ks.sw - ks.pw + kx;
              if (ix < 0 || ix >= w) continue;
              orow[ox] += wv * irow[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_bwd_input(const T* gout, const T* weight, int64_t n, int64_t cin, int64_t h, int64_t w,
                      int64_t cout, const KernelSpec& ks, int64_t oh, int64_t ow, T* gin) {
  const int64_t cpg = cin / ks.groups;
  const int64_t opg = cout / ks.groups;
  const int64_t rows = n * cin * h;
  // gather form: each input element sums the output positions it fed
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t iy = row % h;
    const int64_t ci = (row / h) % cin;
    const int64_t b = row / (h * cin);
    const int64_t g = ci / cpg;
    const int64_t cl = ci % cpg;
    T* grow = gin + ((b * cin + ci) * h + iy) * w;
    for (int64_t ix = 0; ix < w; ++ix) {
      T acc = T(0);
      for (int64_t oc = 0; oc < opg; ++oc) {
        const int64_t co = g * opg + oc;
        const T* gplane = gout + ((b * cout + co) * oh) * ow;
        const T* wbase = weight + ((co * cpg + cl) * ks.kh) * ks.kw;
        for (int64_t ky = 0; ky < ks.kh; ++ky) {
          const int64_t ty = iy + ks.ph - ky;
          if (ty < 0 || ty % ks.sh) continue;
          const int64_t oy = ty / ks.sh;
          if (oy >= oh) continue;
          for (int64_t kx = 0; kx < ks.kw; ++kx) {
            const int64_t tx = ix + ks.pw - kx;
            if (tx < 0 || tx % ks.sw) continue;
            const int64_t ox = tx / ks.sw;
            if (ox >= ow) continue;
            acc += wbase[ky * ks.kw + kx] * gplane[oy * ow + ox];
          }
        }
      }
      grow[ix] += acc;
    }
  }
}

template <typename T>
void conv2d_bwd_weight(const T* gout, const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
                       int64_t cout, const KernelSpec& ks, int64_t oh, int64_t ow, T* gweight) {
  const int64_t cpg = cin / ks.groups;
  const int64_t opg = cout / ks.groups;
  const int64_t rows = cout * cpg;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t cl = row % cpg;
    const int64_t co = row / cpg;
    const int64_t ci = (co / opg) * cpg + cl;
    T* wbase = gweight + row * ks.kh * ks.kw;
    for (int64_t ky = 0; ky < ks.kh; ++ky) {
      for (int64_t kx = 0; kx < ks.kw; ++kx) {
        T acc = T(0);
        for (int64_t b = 0; b < n; ++b) {
          const T* gplane = gout + ((b * cout + co) * oh) * ow;
          const T* iplane = in + ((b * cin + ci) * h) * w;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * ks.sh - ks.ph + ky;
            if (iy < 0 || iy >= h) continue;
            const T* irow = iplane + iy * w;
            const T* grow = gplane + oy * ow;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * ks.sw - ks.pw + kx;
              if (ix < 0 || ix >= w) continue;
              acc += grow[ox] * irow[ix];
            }
          }
        }
        wbase[ky * ks.kw + kx] += acc;
      }
    }
  }
}

template <typename T>
void conv2d_bwd_bias(const T* gout, int64_t n, int64_t cout, int64_t oh, int64_t ow, T* gbias) {
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < cout; ++co) {
    T acc = T(0);
    for (int64_t b = 0; b < n; ++b) {
      const T* plane = gout + ((b * cout + co) * oh) * ow;
      for (int64_t i = 0; i < oh * ow; ++i) acc += plane[i];
    }
    gbias[co] += acc;
  }
}

template <typename T>
void avgpool_fwd(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                 const KernelSpec& ks, T* out, int64_t oh, int64_t ow) {
  const int64_t planes = n * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* iplane = in + p * h * w;
    T* oplane = out + p * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const int64_t y0 = std::max<int64_t>(0, oy * ks.sh - ks.ph);
      const int64_t y1 = std::min<int64_t>(h, oy * ks.sh - ks.ph + ks.kh);
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t x0 = std::max<int64_t>(0, ox * ks.sw - ks.pw);
        const int64_t x1 = std::min<int64_t>(w, ox * ks.sw - ks.pw + ks.kw);
        // Double accumulator keeps constant inputs exact after the divide.
        double acc = 0.0;
        for (int64_t y = y0; y < y1; ++y)
          for (int64_t x = x0; x < x1; ++x) acc += static_cast<double>(iplane[y * w + x]);
        const int64_t cnt = (y1 - y0) * (x1 - x0);
        oplane[oy * ow + ox] = static_cast<T>(acc / static_cast<double>(cnt));
      }
    }
  }
}

template <typename T>
void avgpool_bwd(const T* gout, int64_t n, int64_t c, int64_t h, int64_t w,
                 const KernelSpec& ks, int64_t oh, int64_t ow, T* gin) {
  const int64_t planes = n * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* gplane = gout + p * oh * ow;
    T* iplane = gin + p * h * w;
    for (int64_t iy = 0; iy < h; ++iy) {
      for (int64_t ix = 0; ix < w; ++ix) {
        T acc = T(0);
        for (int64_t ky = 0; ky < ks.kh; ++ky) {
          const int64_t ty = iy + ks.ph - ky;
          if (ty < 0 || ty % ks.sh) continue;
          const int64_t oy = ty / ks.sh;
          if (oy >= oh) continue;
          const int64_t y0 = std::max<int64_t>(0, oy * ks.sh - ks.ph);
          const int64_t y1 = std::min<int64_t>(h, oy * ks.sh - ks.ph + ks.kh);
          for (int64_t kx = 0; kx < ks.kw; ++kx) {
            const int64_t tx = ix + ks.pw - kx;
            if (tx < 0 || tx % ks.sw) continue;
            const int64_t ox = tx / ks.sw;
            if (ox >= ow) continue;
            const int64_t x0 = std::max<int64_t>(0, ox * ks.sw - ks.pw);
            const int64_t x1 = std::min<int64_t>(w, ox * ks.sw - ks.pw + ks.kw);
            acc += gplane[oy * ow + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
          }
        }
        iplane[iy * w + ix] += acc;
      }
    }
  }
}

namespace {

struct LerpIdx {
  int64_t i0, i1;
  double f;
};

inline LerpIdx lerp_idx(int64_t dst, int64_t out, int64_t in) {
  const double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  const double s = std::clamp(src, 0.0, static_cast<double>(in - 1));
  const int64_t i0 = static_cast<int64_t>(std::floor(s));
  const int64_t i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, s - static_cast<double>(i0)};
}

}  // namespace

template <typename T>
void bilinear_fwd(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                  T* out, int64_t oh, int64_t ow) {
  std::vector<LerpIdx> ys(static_cast<size_t>(oh)), xs(static_cast<size_t>(ow));
  for (int64_t y = 0; y < oh; ++y) ys[static_cast<size_t>(y)] = lerp_idx(y, oh, h);
  for (int64_t x = 0; x < ow; ++x) xs[static_cast<size_t>(x)] = lerp_idx(x, ow, w);
  const int64_t planes = n * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in + p * h * w;
    T* op = out + p * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      const auto& ly = ys[static_cast<size_t>(y)];
      for (int64_t x = 0; x < ow; ++x) {
        const auto& lx = xs[static_cast<size_t>(x)];
        const double top = static_cast<double>(ip[ly.i0 * w + lx.i0]) * (1.0 - lx.f) +
                           static_cast<double>(ip[ly.i0 * w + lx.i1]) * lx.f;
        const double bot = static_cast<double>(ip[ly.i1 * w + lx.i0]) * (1.0 - lx.f) +
                           static_cast<double>(ip[ly.i1 * w + lx.i1]) * lx.f;
        op[y * ow + x] = static_cast<T>(top * (1.0 - ly.f) + bot * ly.f);
      }
    }
  }
}

template <typename T>
void bilinear_bwd(const T* gout, int64_t n, int64_t c, int64_t h, int64_t w,
                  int64_t oh, int64_t ow, T* gin) {
  std::vector<LerpIdx> ys(static_cast<size_t>(oh)), xs(static_cast<size_t>(ow));
  for (int64_t y = 0; y < oh; ++y) ys[static_cast<size_t>(y)] = lerp_idx(y, oh, h);
  for (int64_t x = 0; x < ow; ++x) xs[static_cast<size_t>(x)] = lerp_idx(x, ow, w);
  const int64_t planes = n * c;
  // scatter is serialized per plane; planes are disjoint
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const T* gp = gout + p * oh * ow;
    T* ip = gin + p * h * w;
    for (int64_t y = 0; y < oh; ++y) {
      const auto& ly = ys[static_cast<size_t>(y)];
      for (int64_t x = 0; x < ow; ++x) {
        const auto& lx = xs[static_cast<size_t>(x)];
        const T g = gp[y * ow + x];
        ip[ly.i0 * w + lx.i0] += g * static_cast<T>((1.0 - ly.f) * (1.0 - lx.f));
        ip[ly.i0 * w + lx.i1] += g * static_cast<T>((1.0 - ly.f) * lx.f);
        ip[ly.i1 * w + lx.i0] += g * static_cast<T>(ly.f * (1.0 - lx.f));
        ip[ly.i1 * w + lx.i1] += g * static_cast<T>(ly.f * lx.f);
      }
    }
  }
}

template <typename T>
void softmax_fwd(const T* in, int64_t outer, int64_t axis, int64_t inner, T* out) {
  const int64_t slices = outer * inner;
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < slices; ++s) {
    const int64_t o = s / inner;
    const int64_t i = s % inner;
    const T* x = in + o * axis * inner + i;
    T* y = out + o * axis * inner + i;
    T mx = x[0];
    for (int64_t a = 1; a < axis; ++a) mx = std::max(mx, x[a * inner]);
    T sum = T(0);
    for (int64_t a = 0; a < axis; ++a) {
      const T e = std::exp(x[a * inner] - mx);
      y[a * inner] = e;
      sum += e;
    }
    const T invs = T(1) / sum;
    for (int64_t a = 0; a < axis; ++a) y[a * inner] *= invs;
  }
}

template <typename T>
void softmax_bwd(const T* y, const T* gout, int64_t outer, int64_t axis, int64_t inner, T* gin) {
  const int64_t slices = outer * inner;
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < slices; ++s) {
    const int64_t o = s / inner;
    const int64_t i = s % inner;
    const T* ys = y + o * axis * inner + i;
    const T* gs = gout + o * axis * inner + i;
    T* gi = gin + o * axis * inner + i;
    T dot = T(0);
    for (int64_t a = 0; a < axis; ++a) dot += ys[a * inner] * gs[a * inner];
    for (int64_t a = 0; a < axis; ++a) gi[a * inner] += ys[a * inner] * (gs[a * inner] - dot);
  }
}

template <typename T>
void act_fwd(Act f, const T* in, int64_t numel, T* out) {
  switch (f) {
    case Act::Sigmoid:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) out[i] = sigmoid_v(in[i]);
      break;
    case Act::Hardswish:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) out[i] = hardswish_v(in[i]);
      break;
    case Act::Relu:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) out[i] = std::max(in[i], T(0));
      break;
  }
}

template <typename T>
void act_bwd(Act f, const T* in, const T* out, const T* gout, int64_t numel, T* gin) {
  switch (f) {
    case Act::Sigmoid:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) gin[i] += gout[i] * out[i] * (T(1) - out[i]);
      break;
    case Act::Hardswish:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) {
        const T x = in[i];
        T d;
        if (x <= T(-3))
          d = T(0);
        else if (x >= T(3))
          d = T(1);
        else
          d = (T(2) * x + T(3)) / T(6);
        gin[i] += gout[i] * d;
      }
      break;
    case Act::Relu:
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < numel; ++i) gin[i] += in[i] > T(0) ? gout[i] : T(0);
      break;
  }
}

template <typename T>
void bn_stats(const T* in, int64_t n, int64_t c, int64_t hw, T* mean, T* var) {
#pragma omp parallel for schedule(static)
  for (int64_t ch = 0; ch < c; ++ch) {
    T sum = T(0);
    for (int64_t b = 0; b < n; ++b) {
      const T* p = in + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) sum += p[i];
    }
    const T m = sum / static_cast<T>(n * hw);
    T sq = T(0);
    for (int64_t b = 0; b < n; ++b) {
      const T* p = in + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const T d = p[i] - m;
        sq += d * d;
      }
    }
    mean[ch] = m;
    var[ch] = sq / static_cast<T>(n * hw);
  }
}

template <typename T>
void bn_fwd(const T* in, int64_t n, int64_t c, int64_t hw, const T* mean, const T* var,
            const T* gamma, const T* beta, T eps, T* out) {
  const int64_t planes = n * c;
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < planes; ++p) {
    const int64_t ch = p % c;
    const T inv = T(1) / std::sqrt(var[ch] + eps);
    const T a = gamma[ch] * inv;
    const T b = beta[ch] - mean[ch] * a;
    const T* x = in + p * hw;
    T* y = out + p * hw;
    for (int64_t i = 0; i < hw; ++i) y[i] = a * x[i] + b;
  }
}

template <typename T>
void bn_bwd_train(const T* in, const T* gout, int64_t n, int64_t c, int64_t hw,
                  const T* mean, const T* var, const T* gamma, T eps,
                  T* gin, T* ggamma, T* gbeta) {
  const T m = static_cast<T>(n * hw);
#pragma omp parallel for schedule(static)
  for (int64_t ch = 0; ch < c; ++ch) {
    const T inv = T(1) / std::sqrt(var[ch] + eps);
    T gsum = T(0), gdot = T(0);
    for (int64_t b = 0; b < n; ++b) {
      const T* g = gout + (b * c + ch) * hw;
      const T* x = in + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        gsum += g[i];
        gdot += g[i] * (x[i] - mean[ch]) * inv;
      }
    }
    gbeta[ch] += gsum;
    ggamma[ch] += gdot;
    const T k = gamma[ch] * inv / m;
    for (int64_t b = 0; b < n; ++b) {
      const T* g = gout + (b * c + ch) * hw;
      const T* x = in + (b * c + ch) * hw;
      T* gi = gin + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const T xh = (x[i] - mean[ch]) * inv;
        gi[i] += k * (m * g[i] - gsum - xh * gdot);
      }
    }
  }
}

template <typename T>
void bn_bwd_eval(const T* in, const T* gout, int64_t n, int64_t c, int64_t hw,
                 const T* mean, const T* var, const T* gamma, T eps,
                 T* gin, T* ggamma, T* gbeta) {
#pragma omp parallel for schedule(static)
  for (int64_t ch = 0; ch < c; ++ch) {
    const T inv = T(1) / std::sqrt(var[ch] + eps);
    T gsum = T(0), gdot = T(0);
    const T a = gamma[ch] * inv;
    for (int64_t b = 0; b < n; ++b) {
      const T* g = gout + (b * c + ch) * hw;
      const T* x = in + (b * c + ch) * hw;
      T* gi = gin + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        gsum += g[i];
        gdot += g[i] * (x[i] - mean[ch]) * inv;
        gi[i] += g[i] * a;
      }
    }
    gbeta[ch] += gsum;
    ggamma[ch] += gdot;
  }
}

template <typename T>
void matmul(const T* a, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool trans_a, bool trans_b, T* c, bool accumulate) {
  const int64_t rows = batch * m;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t i = row % m;
    const int64_t bt = row / m;
    const T* ab = a + bt * m * k;
    const T* bb = b + bt * k * n;
    T* cr = c + (bt * m + i) * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) cr[j] = T(0);
    if (!trans_b) {
      for (int64_t p = 0; p < k; ++p) {
        const T av = trans_a ? ab[p * m + i] : ab[i * k + p];
        const T* br = bb + p * n;
        for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    } else {
      // B stored [n, k]
      for (int64_t j = 0; j < n; ++j) {
        T acc = T(0);
        const T* br = bb + j * k;
        if (trans_a) {
          for (int64_t p = 0; p < k; ++p) acc += ab[p * m + i] * br[p];
        } else {
          const T* ar = ab + i * k;
          for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
        }
        cr[j] += acc;
      }
    }
  }
}

namespace {

inline void strides_of(const Shape& s, std::vector<int64_t>& st) {
  st.assign(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
}

}  // namespace

template <typename T>
void permute_copy(const T* in, const Shape& in_shape, const std::vector<int>& axes, T* out) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<int64_t> ist;
  strides_of(in_shape, ist);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = in_shape[static_cast<size_t>(axes[static_cast<size_t>(i)])];
  std::vector<int64_t> ost;
  strides_of(out_shape, ost);
  const int64_t total = shape_numel(in_shape);
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < total; ++o) {
    int64_t rem = o, src = 0;
    for (int i = 0; i < r; ++i) {
      const int64_t idx = rem / ost[static_cast<size_t>(i)];
      rem %= ost[static_cast<size_t>(i)];
      src += idx * ist[static_cast<size_t>(axes[static_cast<size_t>(i)])];
    }
    out[o] = in[src];
  }
}

template <typename T>
void permute_acc(const T* gout, const Shape& in_shape, const std::vector<int>& axes, T* gin) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<int64_t> ist;
  strides_of(in_shape, ist);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = in_shape[static_cast<size_t>(axes[static_cast<size_t>(i)])];
  std::vector<int64_t> ost;
  strides_of(out_shape, ost);
  const int64_t total = shape_numel(in_shape);
  // parallel over the *input* (gin) index space: disjoint writes
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < total; ++s) {
    int64_t rem = s, dst = 0;
    for (int i = 0; i < r; ++i) {
      const int64_t idx = rem / ist[static_cast<size_t>(i)];
      rem %= ist[static_cast<size_t>(i)];
      // position of input axis i in the output ordering
      int pos = 0;
      while (axes[static_cast<size_t>(pos)] != i) ++pos;
      dst += idx * ost[static_cast<size_t>(pos)];
    }
    gin[s] += gout[dst];
  }
}

template <typename T>
void relbias_fwd(T* scores, int64_t batch, int64_t len, const T* table, int64_t heads, int64_t span) {
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    const T* tb = table + (b % heads) * (2 * span - 1);
    T* sb = scores + b * len * len;
    for (int64_t i = 0; i < len; ++i)
      for (int64_t j = 0; j < len; ++j) {
        const int64_t rel = std::clamp(i - j, -(span - 1), span - 1) + span - 1;
        sb[i * len + j] += tb[rel];
      }
  }
}

template <typename T>
void relbias_bwd(const T* gscores, int64_t batch, int64_t len, int64_t heads, int64_t span, T* gtable) {
#pragma omp parallel for schedule(static)
  for (int64_t hd = 0; hd < heads; ++hd) {
    T* tb = gtable + hd * (2 * span - 1);
    for (int64_t b = hd; b < batch; b += heads) {
      const T* sb = gscores + b * len * len;
      for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < len; ++j) {
          const int64_t rel = std::clamp(i - j, -(span - 1), span - 1) + span - 1;
          tb[rel] += sb[i * len + j];
        }
    }
  }
}

template <typename T>
T reduce_sum(const T* x, int64_t numel) {
  constexpr int64_t kChunk = 4096;
  const int64_t nchunks = (numel + kChunk - 1) / kChunk;
  std::vector<T> partial(static_cast<size_t>(nchunks));
#pragma omp parallel for schedule(static)
  for (int64_t ci = 0; ci < nchunks; ++ci) {
    const int64_t lo = ci * kChunk;
    const int64_t hi = std::min(numel, lo + kChunk);
    T acc = T(0);
    for (int64_t i = lo; i < hi; ++i) acc += x[i];
    partial[static_cast<size_t>(ci)] = acc;
  }
  T total = T(0);
  for (T v : partial) total += v;
  return total;
}

#define P2AT_INSTANTIATE(T)                                                                        \
  template void conv2d_fwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*, int64_t,    \
                              const T*, const KernelSpec&, T*, int64_t, int64_t);                  \
  template void conv2d_bwd_input<T>(const T*, const T*, int64_t, int64_t, int64_t, int64_t,       \
                                    int64_t, const KernelSpec&, int64_t, int64_t, T*);            \
  template void conv2d_bwd_weight<T>(const T*, const T*, int64_t, int64_t, int64_t, int64_t,      \
                                     int64_t, const KernelSpec&, int64_t, int64_t, T*);           \
  template void conv2d_bwd_bias<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);             \
  template void avgpool_fwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, const KernelSpec&,   \
                               T*, int64_t, int64_t);                                              \
  template void avgpool_bwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, const KernelSpec&,   \
                               int64_t, int64_t, T*);                                              \
  template void bilinear_fwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*, int64_t,        \
                                int64_t);                                                          \
  template void bilinear_bwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,   \
                                T*);                                                               \
  template void softmax_fwd<T>(const T*, int64_t, int64_t, int64_t, T*);                           \
  template void softmax_bwd<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);                \
  template void act_fwd<T>(Act, const T*, int64_t, T*);                                            \
  template void act_bwd<T>(Act, const T*, const T*, const T*, int64_t, T*);                        \
  template void bn_stats<T>(const T*, int64_t, int64_t, int64_t, T*, T*);                          \
  template void bn_fwd<T>(const T*, int64_t, int64_t, int64_t, const T*, const T*, const T*,      \
                          const T*, T, T*);                                                        \
  template void bn_bwd_train<T>(const T*, const T*, int64_t, int64_t, int64_t, const T*,          \
                                const T*, const T*, T, T*, T*, T*);                                \
  template void bn_bwd_eval<T>(const T*, const T*, int64_t, int64_t, int64_t, const T*, const T*, \
                               const T*, T, T*, T*, T*);                                           \
  template void matmul<T>(const T*, const T*, int64_t, int64_t, int64_t, int64_t, bool, bool, T*, \
                          bool);                                                                   \
  template void permute_copy<T>(const T*, const Shape&, const std::vector<int>&, T*);             \
  template void permute_acc<T>(const T*, const Shape&, const std::vector<int>&, T*);              \
  template void relbias_fwd<T>(T*, int64_t, int64_t, const T*, int64_t, int64_t);                 \
  template void relbias_bwd<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);                 \
  template T reduce_sum<T>(const T*, int64_t);

P2AT_INSTANTIATE(float)
P2AT_INSTANTIATE(double)

#undef P2AT_INSTANTIATE

}  // namespace p2at::kernels
