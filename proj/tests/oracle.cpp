#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace sts::oracle {

namespace {

// y = W x for W given as `rows` x `cols` row-major.
Vec matvec(const Vec& w, std::size_t rows, std::size_t cols, const Vec& x) {
  Vec y(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k) y[i] += w[i * cols + k] * x[k];
  return y;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec softmax(const Vec& s) {
  const double top = *std::max_element(s.begin(), s.end());
  Vec e(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (e[i] = std::exp(s[i] - top));
  for (double& v : e) v /= z;
  return e;
}

Vec cell(const Features& f, std::size_t r, std::size_t t, std::size_t c) {
  return Vec(f.v.begin() + static_cast<std::ptrdiff_t>(((r * f.t + t) * f.c + c) * f.d),
             f.v.begin() + static_cast<std::ptrdiff_t>(((r * f.t + t) * f.c + c + 1) * f.d));
}

std::vector<std::size_t> support(const RegionGraph& g, std::size_t i, bool self_loop) {
  std::vector<std::size_t> s;
  for (std::size_t j = 0; j < g.size(); ++j)
    if (g.adjacent(i, j) || (self_loop && i == j)) s.push_back(j);
  return s;
}

double activate(double x, stc::Activation a) {
  switch (a) {
    case stc::Activation::kSigmoid:
      return sigmoid(x);
    case stc::Activation::kTanh:
      return std::tanh(x);
    case stc::Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace

Features from_tensor(const Tensor& x) {
  Features f(x.extent(0), x.extent(1), x.extent(2), x.extent(3));
  f.v = x.to_vector();
  return f;
}

MsaOut msa(const Features& e, const stc::MsaParams& p, std::size_t heads) {
  const std::size_t d = e.d, C = e.c, dh = d / heads;
  const Vec wq = p.query.to_vector(), wk = p.key.to_vector(), wv = p.value.to_vector(), wo = p.out.to_vector();
  MsaOut res{Features(e.n, e.t, e.c, e.d), {}};
  for (std::size_t r = 0; r < e.n; ++r) {
    for (std::size_t t = 0; t < e.t; ++t) {
      std::vector<Vec> q(C), k(C), v(C);
      for (std::size_t c = 0; c < C; ++c) {
        const Vec x = cell(e, r, t, c);
        q[c] = matvec(wq, d, d, x);
        k[c] = matvec(wk, d, d, x);
        v[c] = matvec(wv, d, d, x);
      }
      std::vector<Vec> merged(C, Vec(d, 0.0));
      for (std::size_t h = 0; h < heads; ++h) {
        Vec alpha(C * C);
        for (std::size_t ci = 0; ci < C; ++ci) {
          Vec s(C, 0.0);
          for (std::size_t cj = 0; cj < C; ++cj) {
            for (std::size_t a = 0; a < dh; ++a) s[cj] += q[ci][h * dh + a] * k[cj][h * dh + a];
            s[cj] /= std::sqrt(static_cast<double>(dh));
          }
          const Vec w = softmax(s);
          for (std::size_t cj = 0; cj < C; ++cj) {
            alpha[ci * C + cj] = w[cj];
            for (std::size_t a = 0; a < dh; ++a) merged[ci][h * dh + a] += w[cj] * v[cj][h * dh + a];
          }
        }
        res.alpha.push_back(std::move(alpha));
      }
      for (std::size_t c = 0; c < C; ++c) {
        const Vec o = matvec(wo, d, d, merged[c]);
        for (std::size_t i = 0; i < d; ++i) res.out.at(r, t, c, i) = o[i];
      }
    }
  }
  return res;
}

Features trr(const Features& m, const stc::TrrParams& p) {
  const std::size_t d = m.d;
  const Vec wr = p.reset.to_vector(), wz = p.update.to_vector(), wc = p.candidate.to_vector(),
            wo = p.output.to_vector();
  Features out(m.n, m.t, m.c, m.d);
  for (std::size_t r = 0; r < m.n; ++r) {
    for (std::size_t c = 0; c < m.c; ++c) {
      Vec h(d, 0.0);
      for (std::size_t t = 0; t < m.t; ++t) {
        const Vec x = cell(m, r, t, c);
        Vec hx(h);
        hx.insert(hx.end(), x.begin(), x.end());
        Vec rg = matvec(wr, d, 2 * d, hx), zg = matvec(wz, d, 2 * d, hx);
        for (std::size_t i = 0; i < d; ++i) {
          rg[i] = sigmoid(rg[i]);
          zg[i] = sigmoid(zg[i]);
        }
        Vec rh(2 * d);
        for (std::size_t i = 0; i < d; ++i) {
          rh[i] = rg[i] * h[i];
          rh[d + i] = x[i];
        }
        const Vec cand = matvec(wc, d, 2 * d, rh);
        for (std::size_t i = 0; i < d; ++i) h[i] = (1.0 - zg[i]) * h[i] + zg[i] * std::tanh(cand[i]);
        const Vec o = matvec(wo, d, d, h);
        for (std::size_t i = 0; i < d; ++i) out.at(r, t, c, i) = sigmoid(o[i]);
      }
    }
  }
  return out;
}

Vec gat(const Features& mt, const RegionGraph& g, const stc::GatParams& p, bool self_loop, double slope) {
  const std::size_t N = mt.n, d = mt.d;
  const Vec w = p.weight.to_vector(), a = p.attention.to_vector();
  std::vector<Vec> proj(N);
  for (std::size_t r = 0; r < N; ++r) {
    Vec pooled(d, 0.0);
    for (std::size_t t = 0; t < mt.t; ++t)
      for (std::size_t c = 0; c < mt.c; ++c)
        for (std::size_t i = 0; i < d; ++i) pooled[i] += mt.at(r, t, c, i);
    for (double& v : pooled) v /= static_cast<double>(mt.t * mt.c);
    proj[r] = matvec(w, d, d, pooled);
  }
  Vec out(N * N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto sup = support(g, i, self_loop);
    if (sup.empty()) continue;
    Vec s;
    for (std::size_t j : sup) {
      double e = 0.0;
      for (std::size_t k = 0; k < d; ++k) e += a[k] * proj[i][k] + a[d + k] * proj[j][k];
      s.push_back(e >= 0.0 ? e : slope * e);
    }
    const Vec wts = softmax(s);
    for (std::size_t q = 0; q < sup.size(); ++q) out[i * N + sup[q]] = wts[q];
  }
  return out;
}

std::map<std::pair<std::size_t, std::size_t>, PairOut> nta(const Features& mt, const RegionGraph& g, const Vec& pe,
                                                           const stc::NtaParams& p, std::size_t heads,
                                                           bool self_loop) {
  const std::size_t N = mt.n, T = mt.t, C = mt.c, d = mt.d, dh = d / heads;
  const Vec wq = p.query.to_vector(), wk = p.key.to_vector(), wv = p.value.to_vector(), wo = p.out.to_vector();
  auto encoded = [&](std::size_t r, std::size_t t, std::size_t c) {
    Vec x = cell(mt, r, t, c);
    for (std::size_t i = 0; i < d; ++i) x[i] += pe[t * d + i];
    return x;
  };
  std::map<std::pair<std::size_t, std::size_t>, PairOut> res;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j : support(g, i, self_loop)) {
      PairOut po{Features(1, T, C, d), std::vector<Vec>(C * heads, Vec(T * T, 0.0))};
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<Vec> q(T), k(T), v(T);
        for (std::size_t t = 0; t < T; ++t) {
          q[t] = matvec(wq, d, d, encoded(i, t, c));
          k[t] = matvec(wk, d, d, encoded(j, t, c));
          v[t] = matvec(wv, d, d, encoded(j, t, c));
        }
        for (std::size_t t = 0; t < T; ++t) {
          Vec merged(d, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            Vec s(T, 0.0);
            for (std::size_t u = 0; u < T; ++u) {
              for (std::size_t a = 0; a < dh; ++a) s[u] += q[t][h * dh + a] * k[u][h * dh + a];
              s[u] /= std::sqrt(static_cast<double>(dh));
            }
            const Vec w = softmax(s);
            for (std::size_t u = 0; u < T; ++u) {
              po.alpha[c * heads + h][t * T + u] = w[u];
              for (std::size_t a = 0; a < dh; ++a) merged[h * dh + a] += w[u] * v[u][h * dh + a];
            }
          }
          const Vec o = matvec(wo, d, d, merged);
          for (std::size_t x = 0; x < d; ++x) po.out.at(0, t, c, x) = o[x];
        }
      }
      res.emplace(std::make_pair(i, j), std::move(po));
    }
  }
  return res;
}

Features dsa(const Features& mt, const RegionGraph& g, const Vec& pe, const stc::GatParams& gat_p,
             const stc::NtaParams& nta_p, std::size_t heads, bool self_loop, stc::Activation act) {
  const std::size_t N = mt.n;
  const Vec alpha = gat(mt, g, gat_p, self_loop);
  const auto pairs = nta(mt, g, pe, nta_p, heads, self_loop);
  Features out(mt.n, mt.t, mt.c, mt.d);
  for (const auto& [key, po] : pairs) {
    const auto [i, j] = key;
    for (std::size_t t = 0; t < mt.t; ++t)
      for (std::size_t c = 0; c < mt.c; ++c)
        for (std::size_t x = 0; x < mt.d; ++x) out.at(i, t, c, x) += alpha[i * N + j] * po.out.at(0, t, c, x);
  }
  for (double& v : out.v) v = activate(v, act);
  return out;
}

Features layer(const Features& e, const RegionGraph& g, const Vec& pe, const stc::StcLayerParams& p,
               std::size_t heads, bool self_loop, stc::Activation act) {
  Features m = p.has_msa() ? msa(e, p.msa, heads).out : e;
  Features mt = p.has_trr() ? trr(m, p.trr) : m;
  return p.has_dsa() ? dsa(mt, g, pe, p.gat, p.nta, heads, self_loop, act) : mt;
}

Vec positional(std::size_t t_len, std::size_t d) {
  Vec pe(t_len * d);
  for (std::size_t pos = 0; pos < t_len; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / d);
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  return pe;
}

}  // namespace sts::oracle
