#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dani/config.hpp"
#include "dani/error.hpp"
#include "dani/io.hpp"
#include "dani/kernels.hpp"
#include "dani/rng.hpp"
#include "dani/tensor.hpp"

// Encoder E, generator G and the two discriminators D_z / D_b, with forward
// passes and exact reverse-mode gradients. Everything is templated on the
// scalar type: float for training speed, double for finite-difference
// verification of the same code paths.
//
// Feature maps are laid out HWC so the innermost loops are contiguous
// dot/axpy kernels over the channel axis.

namespace dani::nets {

enum class Act { none, relu, tanh_, sigmoid };

template <typename T>
void apply_act(Act act, const Tensor<T>& pre, Tensor<T>& out) {
  out = pre;
  switch (act) {
    case Act::none:
      break;
    case Act::relu:
      for (auto& v : out.v) v = v > T(0) ? v : T(0);
      break;
    case Act::tanh_:
      for (auto& v : out.v) v = std::tanh(v);
      break;
    case Act::sigmoid:
      for (auto& v : out.v) v = T(1) / (T(1) + std::exp(-v));
      break;
  }
}

// dpre = dout * act'(pre), using the cached activation output
template <typename T>
void act_backward(Act act, const Tensor<T>& out, const Tensor<T>& dout,
                  Tensor<T>& dpre) {
  dpre = dout;
  switch (act) {
    case Act::none:
      break;
    case Act::relu:
      for (std::size_t i = 0; i < out.count(); ++i)
        if (out[i] <= T(0)) dpre[i] = T(0);
      break;
    case Act::tanh_:
      for (std::size_t i = 0; i < out.count(); ++i)
        dpre[i] *= (T(1) - out[i] * out[i]);
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < out.count(); ++i)
        dpre[i] *= out[i] * (T(1) - out[i]);
      break;
  }
}

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double std_dev) {
  for (auto& v : t.v) v = T(std_dev * rng.gaussian());
}

// ---------------------------------------------------------------------------

template <typename T>
struct Dense {
  int in_n = 0, out_n = 0;
  Act act = Act::none;
  Tensor<T> w;  // [in_n, out_n]
  Tensor<T> b;  // [out_n]
  Tensor<T> gw, gb;

  struct Trace {
    Tensor<T> in, out, dpre;
  };

  void configure(int in, int out, Act a, Rng& rng) {
    in_n = in;
    out_n = out;
    act = a;
    w.resize({in, out});
    b.resize({out});
    gw.resize({in, out});
    gb.resize({out});
    init_normal(w, rng, 0.02);
  }

  void forward(const Tensor<T>& in, Trace& tr) const {
    tr.in = in;
    Tensor<T> pre({out_n});
    for (int o = 0; o < out_n; ++o) pre[o] = b[o];
    const T* x = in.data();
    for (int i = 0; i < in_n; ++i)
      if (x[i] != T(0)) kern::axpy(x[i], &w[std::size_t(i) * out_n], pre.data(), out_n);
    apply_act(act, pre, tr.out);
  }

  // returns d(loss)/d(in); accumulates gw/gb
  Tensor<T> backward(Trace& tr, const Tensor<T>& dout) {
    act_backward(act, tr.out, dout, tr.dpre);
    const T* dp = tr.dpre.data();
    for (int o = 0; o < out_n; ++o) gb[o] += dp[o];
    Tensor<T> din;
    din.rank = tr.in.rank;
    din.dims = tr.in.dims;
    din.v.assign(tr.in.count(), T(0));
    for (int i = 0; i < in_n; ++i) {
      const T* wrow = &w[std::size_t(i) * out_n];
      din[i] = kern::dot(wrow, dp, out_n);
      kern::axpy(tr.in[i], dp, &gw[std::size_t(i) * out_n], out_n);
    }
    return din;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
};

// strided 5x5 convolution, stride 2, pad 2: out = in/2 per side
template <typename T>
struct Conv2d {
  static constexpr int K = 5, S = 2, P = 2;
  int in_h = 0, in_w = 0, in_c = 0, out_c = 0;
  int out_h = 0, out_w = 0;
  Act act = Act::none;
  Tensor<T> w;  // [K*K, in_c, out_c]
  Tensor<T> b;  // [out_c]
  Tensor<T> gw, gb;

  struct Trace {
    Tensor<T> in, out, dpre;
  };

  void configure(int h, int wdt, int ci, int co, Act a, Rng& rng) {
    in_h = h;
    in_w = wdt;
    in_c = ci;
    out_c = co;
    act = a;
    out_h = (h + 2 * P - K) / S + 1;
    out_w = (wdt + 2 * P - K) / S + 1;
    w.resize({K * K, ci, co});
    b.resize({co});
    gw.resize({K * K, ci, co});
    gb.resize({co});
    init_normal(w, rng, 0.02);
  }

  void forward(const Tensor<T>& in, Trace& tr) const {
    tr.in = in;
    Tensor<T> pre({out_h, out_w, out_c});
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int oc = 0; oc < out_c; ++oc)
          pre[(std::size_t(oy) * out_w + ox) * out_c + oc] = b[oc];
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const T* wtap = &w[std::size_t(ky * K + kx) * in_c * out_c];
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = S * oy + ky - P;
          if (iy < 0 || iy >= in_h) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = S * ox + kx - P;
            if (ix < 0 || ix >= in_w) continue;
            const T* xin = &in[(std::size_t(iy) * in_w + ix) * in_c];
            T* po = &pre[(std::size_t(oy) * out_w + ox) * out_c];
            if (out_c >= 8) {
              for (int ic = 0; ic < in_c; ++ic)
                kern::axpy(xin[ic], wtap + std::size_t(ic) * out_c, po, out_c);
            } else {
              for (int oc = 0; oc < out_c; ++oc) {
                T acc = T(0);
                for (int ic = 0; ic < in_c; ++ic)
                  acc += xin[ic] * wtap[std::size_t(ic) * out_c + oc];
                po[oc] += acc;
              }
            }
          }
        }
      }
    }
    apply_act(act, pre, tr.out);
  }

  Tensor<T> backward(Trace& tr, const Tensor<T>& dout) {
    act_backward(act, tr.out, dout, tr.dpre);
    const Tensor<T>& dpre = tr.dpre;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int oc = 0; oc < out_c; ++oc)
          gb[oc] += dpre[(std::size_t(oy) * out_w + ox) * out_c + oc];

    Tensor<T> din({in_h, in_w, in_c});
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const T* wtap = &w[std::size_t(ky * K + kx) * in_c * out_c];
        T* gtap = &gw[std::size_t(ky * K + kx) * in_c * out_c];
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = S * oy + ky - P;
          if (iy < 0 || iy >= in_h) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = S * ox + kx - P;
            if (ix < 0 || ix >= in_w) continue;
            const T* xin = &tr.in[(std::size_t(iy) * in_w + ix) * in_c];
            T* dx = &din[(std::size_t(iy) * in_w + ix) * in_c];
            const T* dp = &dpre[(std::size_t(oy) * out_w + ox) * out_c];
            for (int ic = 0; ic < in_c; ++ic) {
              dx[ic] += kern::dot(wtap + std::size_t(ic) * out_c, dp, out_c);
              kern::axpy(xin[ic], dp, gtap + std::size_t(ic) * out_c, out_c);
            }
          }
        }
      }
    }
    return din;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
};

// transposed 5x5 convolution, stride 2 (output = 2 * input per side)
template <typename T>
struct TConv2d {
  static constexpr int K = 5, S = 2, P = 2;
  int in_h = 0, in_w = 0, in_c = 0, out_c = 0;
  int out_h = 0, out_w = 0;
  Act act = Act::none;
  Tensor<T> w;  // [K*K, in_c, out_c]
  Tensor<T> b;  // [out_c]
  Tensor<T> gw, gb;

  struct Trace {
    Tensor<T> in, out, dpre;
  };

  void configure(int h, int wdt, int ci, int co, Act a, Rng& rng) {
    in_h = h;
    in_w = wdt;
    in_c = ci;
    out_c = co;
    act = a;
    out_h = 2 * h;
    out_w = 2 * wdt;
    w.resize({K * K, ci, co});
    b.resize({co});
    gw.resize({K * K, ci, co});
    gb.resize({co});
    init_normal(w, rng, 0.02);
  }

  void forward(const Tensor<T>& in, Trace& tr) const {
    tr.in = in;
    Tensor<T> pre({out_h, out_w, out_c});
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int oc = 0; oc < out_c; ++oc)
          pre[(std::size_t(oy) * out_w + ox) * out_c + oc] = b[oc];
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const T* wtap = &w[std::size_t(ky * K + kx) * in_c * out_c];
        for (int y = 0; y < in_h; ++y) {
          const int oy = S * y + ky - P;
          if (oy < 0 || oy >= out_h) continue;
          for (int x = 0; x < in_w; ++x) {
            const int ox = S * x + kx - P;
            if (ox < 0 || ox >= out_w) continue;
            const T* xin = &in[(std::size_t(y) * in_w + x) * in_c];
            T* po = &pre[(std::size_t(oy) * out_w + ox) * out_c];
            if (out_c >= 8) {
              for (int ic = 0; ic < in_c; ++ic)
                kern::axpy(xin[ic], wtap + std::size_t(ic) * out_c, po, out_c);
            } else {
              for (int oc = 0; oc < out_c; ++oc) {
                T acc = T(0);
                for (int ic = 0; ic < in_c; ++ic)
                  acc += xin[ic] * wtap[std::size_t(ic) * out_c + oc];
                po[oc] += acc;
              }
            }
          }
        }
      }
    }
    apply_act(act, pre, tr.out);
  }

  Tensor<T> backward(Trace& tr, const Tensor<T>& dout) {
    act_backward(act, tr.out, dout, tr.dpre);
    const Tensor<T>& dpre = tr.dpre;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int oc = 0; oc < out_c; ++oc)
          gb[oc] += dpre[(std::size_t(oy) * out_w + ox) * out_c + oc];

    Tensor<T> din({in_h, in_w, in_c});
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const T* wtap = &w[std::size_t(ky * K + kx) * in_c * out_c];
        T* gtap = &gw[std::size_t(ky * K + kx) * in_c * out_c];
        for (int y = 0; y < in_h; ++y) {
          const int oy = S * y + ky - P;
          if (oy < 0 || oy >= out_h) continue;
          for (int x = 0; x < in_w; ++x) {
            const int ox = S * x + kx - P;
            if (ox < 0 || ox >= out_w) continue;
            const T* xin = &tr.in[(std::size_t(y) * in_w + x) * in_c];
            T* dx = &din[(std::size_t(y) * in_w + x) * in_c];
            const T* dp = &dpre[(std::size_t(oy) * out_w + ox) * out_c];
            for (int ic = 0; ic < in_c; ++ic) {
              dx[ic] += kern::dot(wtap + std::size_t(ic) * out_c, dp, out_c);
              kern::axpy(xin[ic], dp, gtap + std::size_t(ic) * out_c, out_c);
            }
          }
        }
      }
    }
    return din;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
};

// ---------------------------------------------------------------------------

// age one-hot (A entries) followed by 10 copies of d/3; zeroed when the
// diagnosis conditioning is ablated
template <typename T>
Tensor<T> make_conditioning(int a, int d, int bins, bool enable_c) {
  if (a < 1 || a > bins) throw DataError("make_conditioning: bin out of range");
  if (d < 0 || d > 3) throw DataError("make_conditioning: diagnosis out of range");
  Tensor<T> cond({bins + 10});
  cond[a - 1] = T(1);
  const T dv = enable_c ? T(d) / T(3) : T(0);
  for (int i = 0; i < 10; ++i) cond[bins + i] = dv;
  return cond;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out({int(a.count() + b.count())});
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.count());
  return out;
}

template <typename T>
struct Encoder {
  int grid = 0, latent = 0;
  Conv2d<T> c1, c2, c3, c4;
  Dense<T> fc;

  struct Trace {
    typename Conv2d<T>::Trace t1, t2, t3, t4;
    typename Dense<T>::Trace tf;
  };

  void configure(int g, int s, Rng& rng) {
    grid = g;
    latent = s;
    c1.configure(g, g, 1, 32, Act::relu, rng);
    c2.configure(g / 2, g / 2, 32, 64, Act::relu, rng);
    c3.configure(g / 4, g / 4, 64, 128, Act::relu, rng);
    c4.configure(g / 8, g / 8, 128, 256, Act::relu, rng);
    fc.configure((g / 16) * (g / 16) * 256, s, Act::tanh_, rng);
  }

  // img: rank-2 [g, g] in [-1, 1]; returns latent [s] in (-1, 1)
  Tensor<T> forward(const Tensor<T>& img, Trace& tr) const {
    if (img.dims[0] != grid || img.dims[1] != grid)
      throw DataError("encoder: input shape mismatch");
    Tensor<T> x = img;
    x.rank = 3;
    x.dims = {grid, grid, 1};
    c1.forward(x, tr.t1);
    c2.forward(tr.t1.out, tr.t2);
    c3.forward(tr.t2.out, tr.t3);
    c4.forward(tr.t3.out, tr.t4);
    Tensor<T> flat = tr.t4.out;
    flat.rank = 1;
    flat.dims = {int(tr.t4.out.count()), 1, 1, 1};
    fc.forward(flat, tr.tf);
    return tr.tf.out;
  }

  void backward(Trace& tr, const Tensor<T>& dz) {
    Tensor<T> d = fc.backward(tr.tf, dz);
    d.rank = 3;
    d.dims = tr.t4.out.dims;
    d = c4.backward(tr.t4, d);
    d = c3.backward(tr.t3, d);
    d = c2.backward(tr.t2, d);
    c1.backward(tr.t1, d);
  }

  template <typename F>
  void visit(F&& f) {
    c1.visit("E.c1", f);
    c2.visit("E.c2", f);
    c3.visit("E.c3", f);
    c4.visit("E.c4", f);
    fc.visit("E.fc", f);
  }
};

template <typename T>
struct Generator {
  int grid = 0, latent = 0, bins = 0;
  Dense<T> fc;
  TConv2d<T> t1, t2, t3, t4;

  struct Trace {
    typename Dense<T>::Trace tf;
    typename TConv2d<T>::Trace tt1, tt2, tt3, tt4;
  };

  void configure(int g, int s, int a_bins, Rng& rng) {
    grid = g;
    latent = s;
    bins = a_bins;
    const int g0 = g / 16;
    fc.configure(s + a_bins + 10, g0 * g0 * 256, Act::relu, rng);
    t1.configure(g0, g0, 256, 128, Act::relu, rng);
    t2.configure(2 * g0, 2 * g0, 128, 64, Act::relu, rng);
    t3.configure(4 * g0, 4 * g0, 64, 32, Act::relu, rng);
    t4.configure(8 * g0, 8 * g0, 32, 1, Act::tanh_, rng);
  }

  // zcond: [s + A + 10]; returns rank-2 [g, g] image in (-1, 1)
  Tensor<T> forward(const Tensor<T>& zcond, Trace& tr) const {
    if (int(zcond.count()) != latent + bins + 10)
      throw DataError("generator: conditioning vector size mismatch");
    fc.forward(zcond, tr.tf);
    const int g0 = grid / 16;
    Tensor<T> x = tr.tf.out;
    x.rank = 3;
    x.dims = {g0, g0, 256, 1};
    t1.forward(x, tr.tt1);
    t2.forward(tr.tt1.out, tr.tt2);
    t3.forward(tr.tt2.out, tr.tt3);
    t4.forward(tr.tt3.out, tr.tt4);
    Tensor<T> img = tr.tt4.out;
    img.rank = 2;
    img.dims = {grid, grid, 1, 1};
    return img;
  }

  // dimg: [g, g]; returns gradient w.r.t. zcond
  Tensor<T> backward(Trace& tr, const Tensor<T>& dimg) {
    Tensor<T> d = dimg;
    d.rank = 3;
    d.dims = {grid, grid, 1, 1};
    d = t4.backward(tr.tt4, d);
    d = t3.backward(tr.tt3, d);
    d = t2.backward(tr.tt2, d);
    d = t1.backward(tr.tt1, d);
    d.rank = 1;
    d.dims = {int(d.count()), 1, 1, 1};
    return fc.backward(tr.tf, d);
  }

  template <typename F>
  void visit(F&& f) {
    fc.visit("G.fc", f);
    t1.visit("G.t1", f);
    t2.visit("G.t2", f);
    t3.visit("G.t3", f);
    t4.visit("G.t4", f);
  }
};

template <typename T>
struct DiscZ {
  Dense<T> d1, d2, d3, d4;

  struct Trace {
    typename Dense<T>::Trace t1, t2, t3, t4;
  };

  void configure(int s, Rng& rng) {
    d1.configure(s, 64, Act::relu, rng);
    d2.configure(64, 32, Act::relu, rng);
    d3.configure(32, 16, Act::relu, rng);
    d4.configure(16, 1, Act::sigmoid, rng);
  }

  T forward(const Tensor<T>& z, Trace& tr) const {
    d1.forward(z, tr.t1);
    d2.forward(tr.t1.out, tr.t2);
    d3.forward(tr.t2.out, tr.t3);
    d4.forward(tr.t3.out, tr.t4);
    return tr.t4.out[0];
  }

  // dprob: scalar gradient at the probability output; returns d/d(z)
  Tensor<T> backward(Trace& tr, T dprob) {
    Tensor<T> d({1});
    d[0] = dprob;
    d = d4.backward(tr.t4, d);
    d = d3.backward(tr.t3, d);
    d = d2.backward(tr.t2, d);
    return d1.backward(tr.t1, d);
  }

  template <typename F>
  void visit(F&& f) {
    d1.visit("Dz.d1", f);
    d2.visit("Dz.d2", f);
    d3.visit("Dz.d3", f);
    d4.visit("Dz.d4", f);
  }
};

template <typename T>
struct DiscB {
  int grid = 0;
  Conv2d<T> c1, c2, c3;
  Dense<T> fc;

  struct Trace {
    typename Conv2d<T>::Trace t1, t2, t3;
    typename Dense<T>::Trace tf;
  };

  void configure(int g, Rng& rng) {
    grid = g;
    c1.configure(g, g, 1, 32, Act::relu, rng);
    c2.configure(g / 2, g / 2, 32, 64, Act::relu, rng);
    c3.configure(g / 4, g / 4, 64, 128, Act::relu, rng);
    fc.configure((g / 8) * (g / 8) * 128, 1, Act::sigmoid, rng);
  }

  T forward(const Tensor<T>& img, Trace& tr) const {
    if (img.dims[0] != grid || img.dims[1] != grid)
      throw DataError("disc_b: input shape mismatch");
    Tensor<T> x = img;
    x.rank = 3;
    x.dims = {grid, grid, 1, 1};
    c1.forward(x, tr.t1);
    c2.forward(tr.t1.out, tr.t2);
    c3.forward(tr.t2.out, tr.t3);
    Tensor<T> flat = tr.t3.out;
    flat.rank = 1;
    flat.dims = {int(tr.t3.out.count()), 1, 1, 1};
    fc.forward(flat, tr.tf);
    return tr.tf.out[0];
  }

  // returns d/d(img) as a rank-2 [g, g] tensor
  Tensor<T> backward(Trace& tr, T dprob) {
    Tensor<T> d({1});
    d[0] = dprob;
    d = fc.backward(tr.tf, d);
    d.rank = 3;
    d.dims = tr.t3.out.dims;
    d = c3.backward(tr.t3, d);
    d = c2.backward(tr.t2, d);
    d = c1.backward(tr.t1, d);
    d.rank = 2;
    d.dims = {grid, grid, 1, 1};
    return d;
  }

  template <typename F>
  void visit(F&& f) {
    c1.visit("Db.c1", f);
    c2.visit("Db.c2", f);
    c3.visit("Db.c3", f);
    fc.visit("Db.fc", f);
  }
};

// ---------------------------------------------------------------------------

template <typename T>
struct Model {
  Encoder<T> enc;
  Generator<T> gen;
  DiscZ<T> dz;
  DiscB<T> db;

  static Model init(int grid, int latent, int bins, std::uint64_t seed) {
    if (grid % 16 != 0 || grid < 16)
      throw DataError("model: grid size must be a multiple of 16");
    Model m;
    Rng re(Rng::derive(seed, 1)), rg(Rng::derive(seed, 2));
    Rng rz(Rng::derive(seed, 3)), rb(Rng::derive(seed, 4));
    m.enc.configure(grid, latent, re);
    m.gen.configure(grid, latent, bins, rg);
    m.dz.configure(latent, rz);
    m.db.configure(grid, rb);
    return m;
  }

  template <typename F>
  void visit(F&& f) {
    enc.visit(f);
    gen.visit(f);
    dz.visit(f);
    db.visit(f);
  }

  template <typename F>
  void visit_eg(F&& f) {  // encoder + generator parameters only
    enc.visit(f);
    gen.visit(f);
  }

  void zero_grads() {
    visit([](const std::string&, Tensor<T>&, Tensor<T>& g) { g.zero(); });
  }

  io::Checkpoint to_checkpoint(const std::string& config_echo) {
    io::Checkpoint ckpt;
    visit([&](const std::string& name, Tensor<T>& w, Tensor<T>&) {
      ckpt.tensors.emplace_back(name, w.template cast<float>());
    });
    ckpt.config_echo = config_echo;
    return ckpt;
  }

  static Model from_checkpoint(const io::Checkpoint& ckpt, int grid, int latent,
                               int bins) {
    Model m = init(grid, latent, bins, 0);
    std::size_t used = 0;
    m.visit([&](const std::string& name, Tensor<T>& w, Tensor<T>&) {
      const TensorF* src = ckpt.find(name);
      if (!src) throw DataError("checkpoint missing tensor: " + name);
      if (src->count() != w.count())
        throw DataError("checkpoint tensor size mismatch: " + name);
      for (std::size_t i = 0; i < w.count(); ++i) w[i] = T(src->v[i]);
      ++used;
    });
    if (used != ckpt.tensors.size())
      throw DataError("checkpoint holds unexpected extra tensors");
    return m;
  }
};

}  // namespace dani::nets
