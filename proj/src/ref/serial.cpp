#include "serial.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace p2at::ref {

template <typename T>
void conv2d(const T* in, int64_t n, int64_t cin, int64_t h, int64_t w,
            const T* weight, int64_t cout, const T* bias, const KernelSpec& ks,
            T* out, int64_t oh, int64_t ow) {
  const int64_t cpg = cin / ks.groups;
  const int64_t opg = cout / ks.groups;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t co = 0; co < cout; ++co) {
      const int64_t g = co / opg;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[co] : T(0);
          for (int64_t ci = 0; ci < cpg; ++ci)
            for (int64_t ky = 0; ky < ks.kh; ++ky)
              for (int64_t kx = 0; kx < ks.kw; ++kx) {
                const int64_t iy = oy * ks.sh - ks.ph + ky;
                const int64_t ix = ox * ks.sw - ks.pw + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += in[((ni * cin + g * cpg + ci) * h + iy) * w + ix] *
                       weight[((co * cpg + ci) * ks.kh + ky) * ks.kw + kx];
              }
          out[((ni * cout + co) * oh + oy) * ow + ox] = acc;
        }
    }
}

template <typename T>
void avg_pool2d(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
                const KernelSpec& ks, T* out, int64_t oh, int64_t ow) {
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        int64_t cnt = 0;
        for (int64_t ky = 0; ky < ks.kh; ++ky)
          for (int64_t kx = 0; kx < ks.kw; ++kx) {
            const int64_t iy = oy * ks.sh - ks.ph + ky;
            const int64_t ix = ox * ks.sw - ks.pw + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            acc += static_cast<double>(in[p * h * w + iy * w + ix]);
            ++cnt;
          }
        out[p * oh * ow + oy * ow + ox] = static_cast<T>(acc / static_cast<double>(cnt));
      }
}

template <typename T>
void bilinear(const T* in, int64_t n, int64_t c, int64_t h, int64_t w,
              T* out, int64_t oh, int64_t ow) {
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double sy = std::clamp(
            (static_cast<double>(oy) + 0.5) * static_cast<double>(h) / static_cast<double>(oh) -
                0.5,
            0.0, static_cast<double>(h - 1));
        const double sx = std::clamp(
            (static_cast<double>(ox) + 0.5) * static_cast<double>(w) / static_cast<double>(ow) -
                0.5,
            0.0, static_cast<double>(w - 1));
        const int64_t y0 = static_cast<int64_t>(sy), x0 = static_cast<int64_t>(sx);
        const int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const T fy = static_cast<T>(sy - static_cast<double>(y0));
        const T fx = static_cast<T>(sx - static_cast<double>(x0));
        const T* pl = in + p * h * w;
        const T top = pl[y0 * w + x0] + fx * (pl[y0 * w + x1] - pl[y0 * w + x0]);
        const T bot = pl[y1 * w + x0] + fx * (pl[y1 * w + x1] - pl[y1 * w + x0]);
        out[p * oh * ow + oy * ow + ox] = top + fy * (bot - top);
      }
}

template <typename T>
void softmax(const T* in, int64_t outer, int64_t axis, int64_t inner, T* out) {
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const T* src = in + o * axis * inner + i;
      T* dst = out + o * axis * inner + i;
      T mx = src[0];
      for (int64_t a = 1; a < axis; ++a) mx = std::max(mx, src[a * inner]);
      T sum = T(0);
      for (int64_t a = 0; a < axis; ++a) sum += std::exp(src[a * inner] - mx);
      for (int64_t a = 0; a < axis; ++a) dst[a * inner] = std::exp(src[a * inner] - mx) / sum;
    }
}

template <typename T>
void matmul(const T* a, const T* b, int64_t batch, int64_t m, int64_t k, int64_t n,
            bool trans_a, bool trans_b, T* c) {
  for (int64_t bi = 0; bi < batch; ++bi) {
    const T* ab = a + bi * m * k;
    const T* bb = b + bi * k * n;
    T* cb = c + bi * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (int64_t p = 0; p < k; ++p) {
          const T av = trans_a ? ab[p * m + i] : ab[i * k + p];
          const T bv = trans_b ? bb[j * k + p] : bb[p * n + j];
          acc += av * bv;
        }
        cb[i * n + j] = acc;
      }
  }
}

template <typename T>
void batch_norm(const T* in, int64_t n, int64_t c, int64_t hw, const T* mean, const T* var,
                const T* gamma, const T* beta, T eps, T* out) {
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      const T inv = T(1) / std::sqrt(var[ci] + eps);
      for (int64_t p = 0; p < hw; ++p) {
        const int64_t at = (ni * c + ci) * hw + p;
        out[at] = gamma[ci] * (in[at] - mean[ci]) * inv + beta[ci];
      }
    }
}

template <typename T>
void mha_seq(const T* x, int64_t len, int64_t c, int64_t heads,
             const T* wq, const T* bq, const T* wk, const T* bk,
             const T* wv, const T* bv, const T* wo, const T* bo,
             const T* pos_table, int64_t span, T* out) {
  const int64_t dh = c / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  auto project = [&](const T* wm, const T* bm, std::vector<T>& dst) {
    dst.assign(static_cast<size_t>(len * c), T(0));
    for (int64_t i = 0; i < len; ++i)
      for (int64_t o = 0; o < c; ++o) {
        T acc = bm[o];
        for (int64_t ci = 0; ci < c; ++ci) acc += wm[o * c + ci] * x[i * c + ci];
        dst[static_cast<size_t>(i * c + o)] = acc;
      }
  };
  std::vector<T> q, k, v;
  project(wq, bq, q);
  project(wk, bk, k);
  project(wv, bv, v);

  std::vector<T> mixed(static_cast<size_t>(len * c), T(0));
  std::vector<T> logits(static_cast<size_t>(len));
  for (int64_t hd = 0; hd < heads; ++hd) {
    const T* tb = pos_table + hd * (2 * span - 1);
    for (int64_t i = 0; i < len; ++i) {
      for (int64_t j = 0; j < len; ++j) {
        T acc = T(0);
        for (int64_t d = 0; d < dh; ++d)
          acc += scale * q[static_cast<size_t>(i * c + hd * dh + d)] *
                 k[static_cast<size_t>(j * c + hd * dh + d)];
        const int64_t rel = std::clamp(i - j, -(span - 1), span - 1) + span - 1;
        logits[static_cast<size_t>(j)] = acc + tb[rel];
      }
      T mx = logits[0];
      for (int64_t j = 1; j < len; ++j) mx = std::max(mx, logits[static_cast<size_t>(j)]);
      T sum = T(0);
      for (int64_t j = 0; j < len; ++j) sum += std::exp(logits[static_cast<size_t>(j)] - mx);
      for (int64_t d = 0; d < dh; ++d) {
        T acc = T(0);
        for (int64_t j = 0; j < len; ++j)
          acc += std::exp(logits[static_cast<size_t>(j)] - mx) / sum *
                 v[static_cast<size_t>(j * c + hd * dh + d)];
        mixed[static_cast<size_t>(i * c + hd * dh + d)] = acc;
      }
    }
  }

  for (int64_t i = 0; i < len; ++i)
    for (int64_t o = 0; o < c; ++o) {
      T acc = bo[o];
      for (int64_t ci = 0; ci < c; ++ci) acc += wo[o * c + ci] * mixed[static_cast<size_t>(i * c + ci)];
      out[i * c + o] = x[i * c + o] + acc;
    }
}

#define P2AT_REF_INSTANTIATE(T)                                                                    \
  template void conv2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*, int64_t,        \
                          const T*, const KernelSpec&, T*, int64_t, int64_t);                      \
  template void avg_pool2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, const KernelSpec&,    \
                              T*, int64_t, int64_t);                                               \
  template void bilinear<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*, int64_t, int64_t);  \
  template void softmax<T>(const T*, int64_t, int64_t, int64_t, T*);                              \
  template void matmul<T>(const T*, const T*, int64_t, int64_t, int64_t, int64_t, bool, bool,     \
                          T*);                                                                     \
  template void batch_norm<T>(const T*, int64_t, int64_t, int64_t, const T*, const T*, const T*,  \
                              const T*, T, T*);                                                    \
  template void mha_seq<T>(const T*, int64_t, int64_t, int64_t, const T*, const T*, const T*,     \
                           const T*, const T*, const T*, const T*, const T*, const T*, int64_t,   \
                           T*);

P2AT_REF_INSTANTIATE(float)
P2AT_REF_INSTANTIATE(double)

#undef P2AT_REF_INSTANTIATE

}  // namespace p2at::ref
