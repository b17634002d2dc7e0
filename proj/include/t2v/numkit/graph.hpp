#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "t2v/numkit/losses.hpp"
#include "t2v/numkit/tensor.hpp"

namespace t2v {

struct Var {
  std::size_t id = 0;
};

// Tape-based reverse-mode differentiation over 2-D values. Nodes are appended
// in evaluation order, so reverse creation order is a valid backward order.
// The op set is deliberately small: affine pieces, tanh/sigmoid, elementwise
// arithmetic, row gathers/slices/concats, segment pooling, clamped cosine and
// the softmax-log losses used by the two models.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  std::span<const T> value(Var v) const { return nodes_[v.id].value; }
  std::span<const T> grad(Var v) const { return nodes_[v.id].grad; }
  T scalar(Var v) const { return nodes_[v.id].value.at(0); }
  std::size_t node_count() const { return nodes_.size(); }

  BasicTensor<T> tensor(Var v) const {
    const Node& n = nodes_[v.id];
    return BasicTensor<T>::matrix(n.rows, n.cols, n.value);
  }

  Var input(const BasicTensor<T>& t, std::string name = "input") {
    return push(t.rows(), t.cols(), t.data, std::move(name), {});
  }
  Var input(std::size_t rows, std::size_t cols, std::vector<T> values, std::string name = "input") {
    return push(rows, cols, std::move(values), std::move(name), {});
  }

  // Leaf bound to a named parameter. Requesting the same name twice returns the
  // same node, so weights shared across paths accumulate one gradient.
  Var param(const std::string& name, const BasicTensor<T>& t) {
    if (auto it = params_.find(name); it != params_.end()) return it->second;
    Var v = push(t.rows(), t.cols(), t.data, "param:" + name, {});
    params_.emplace(name, v);
    return v;
  }
  Var param(const BasicParamSet<T>& ps, const std::string& name) { return param(name, ps.at(name)); }

  Var matmul(Var a, Var b) {
    const std::size_t m = rows(a), k = cols(a), n = cols(b);
    check(rows(b) == k, "matmul", a, b);
    std::vector<T> out(m * n, T{0});
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const T x = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * B[p * n + j];
      }
    }
    return push(m, n, std::move(out), "matmul", [this, a, b, m, k, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& A = nodes_[a.id].value;
      const auto& B = nodes_[b.id].value;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T s{0};
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += s;
          const T x = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += x * G[i * n + j];
        }
      }
    });
  }

  // a·bᵀ for a: m×k, b: n×k.
  Var matmul_nt(Var a, Var b) {
    const std::size_t m = rows(a), k = cols(a), n = rows(b);
    check(cols(b) == k, "matmul_nt", a, b);
    std::vector<T> out(m * n);
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T s{0};
        for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
        out[i * n + j] = s;
      }
    }
    return push(m, n, std::move(out), "matmul_nt", [this, a, b, m, k, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& A = nodes_[a.id].value;
      const auto& B = nodes_[b.id].value;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const T g = G[i * n + j];
          if (g == T{0}) continue;
          for (std::size_t p = 0; p < k; ++p) {
            dA[i * k + p] += g * B[j * k + p];
            dB[j * k + p] += g * A[i * k + p];
          }
        }
      }
    });
  }

  // a + broadcast row bias.
  Var add_bias(Var a, Var bias) {
    const std::size_t m = rows(a), n = cols(a);
    check(rows(bias) == 1 && cols(bias) == n, "add_bias", a, bias);
    std::vector<T> out = nodes_[a.id].value;
    const auto& b = nodes_[bias.id].value;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
    }
    return push(m, n, std::move(out), "add_bias", [this, a, bias, m, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& da = nodes_[a.id].grad;
      auto& db = nodes_[bias.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          da[i * n + j] += G[i * n + j];
          db[j] += G[i * n + j];
        }
      }
    });
  }

  Var affine(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

  Var add(Var a, Var b) { return binary(a, b, "add", [](T x, T y) { return x + y; }, T{1}, T{1}); }
  Var sub(Var a, Var b) { return binary(a, b, "sub", [](T x, T y) { return x - y; }, T{1}, T{-1}); }

  Var mul(Var a, Var b) {
    check(same_shape(a, b), "mul", a, b);
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    std::vector<T> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    return push(rows(a), cols(a), std::move(out), "mul", [this, a, b](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& A = nodes_[a.id].value;
      const auto& B = nodes_[b.id].value;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) {
        dA[i] += G[i] * B[i];
        dB[i] += G[i] * A[i];
      }
    });
  }

  Var scale(Var a, T c) {
    std::vector<T> out = nodes_[a.id].value;
    for (auto& x : out) x *= c;
    return push(rows(a), cols(a), std::move(out), "scale", [this, a, c](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) dA[i] += c * G[i];
    });
  }

  Var tanh(Var a) {
    std::vector<T> out = nodes_[a.id].value;
    for (auto& x : out) x = std::tanh(x);
    return push(rows(a), cols(a), std::move(out), "tanh", [this, a](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& Y = nodes_[self].value;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * (T{1} - Y[i] * Y[i]);
    });
  }

  Var sigmoid(Var a) {
    std::vector<T> out = nodes_[a.id].value;
    for (auto& x : out) x = T{1} / (T{1} + std::exp(-x));
    return push(rows(a), cols(a), std::move(out), "sigmoid", [this, a](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& Y = nodes_[self].value;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * Y[i] * (T{1} - Y[i]);
    });
  }

  // Columns [c0, c1).
  Var col_slice(Var a, std::size_t c0, std::size_t c1) {
    const std::size_t m = rows(a), n = cols(a), w = c1 - c0;
    check(c0 < c1 && c1 <= n, "col_slice", a, a);
    const auto& A = nodes_[a.id].value;
    std::vector<T> out(m * w);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(A.begin() + i * n + c0, w, out.begin() + i * w);
    }
    return push(m, w, std::move(out), "col_slice", [this, a, m, n, c0, w](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) dA[i * n + c0 + j] += G[i * w + j];
      }
    });
  }

  Var concat_cols(Var a, Var b) {
    const std::size_t m = rows(a), na = cols(a), nb = cols(b), n = na + nb;
    check(rows(b) == m, "concat_cols", a, b);
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(A.begin() + i * na, na, out.begin() + i * n);
      std::copy_n(B.begin() + i * nb, nb, out.begin() + i * n + na);
    }
    return push(m, n, std::move(out), "concat_cols", [this, a, b, m, na, nb, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) dA[i * na + j] += G[i * n + j];
        for (std::size_t j = 0; j < nb; ++j) dB[i * nb + j] += G[i * n + na + j];
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows", Var{}, Var{});
    const std::size_t n = cols(parts[0]);
    std::size_t m = 0;
    std::vector<T> out;
    for (Var p : parts) {
      check(cols(p) == n, "concat_rows", parts[0], p);
      const auto& P = nodes_[p.id].value;
      out.insert(out.end(), P.begin(), P.end());
      m += rows(p);
    }
    return push(m, n, std::move(out), "concat_rows", [this, parts](std::size_t self) {
      const auto& G = nodes_[self].grad;
      std::size_t off = 0;
      for (Var p : parts) {
        auto& dP = nodes_[p.id].grad;
        for (std::size_t i = 0; i < dP.size(); ++i) dP[i] += G[off + i];
        off += dP.size();
      }
    });
  }

  Var gather_rows(Var a, std::vector<std::size_t> index) {
    const std::size_t n = cols(a), m = index.size();
    const auto& A = nodes_[a.id].value;
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      check(index[i] < rows(a), "gather_rows", a, a);
      std::copy_n(A.begin() + index[i] * n, n, out.begin() + i * n);
    }
    return push(m, n, std::move(out), "gather_rows", [this, a, n, index = std::move(index)](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < index.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) dA[index[i] * n + j] += G[i * n + j];
      }
    });
  }

  // Mean over row segments; offsets has one more entry than segments.
  Var segment_mean(Var a, std::vector<std::size_t> offsets) {
    const std::size_t n = cols(a), s = offsets.size() - 1;
    check(offsets.size() >= 2 && offsets.back() == rows(a), "segment_mean", a, a);
    const auto& A = nodes_[a.id].value;
    std::vector<T> out(s * n, T{0});
    for (std::size_t g = 0; g < s; ++g) {
      check(offsets[g + 1] > offsets[g], "segment_mean(empty segment)", a, a);
      const T inv = T{1} / static_cast<T>(offsets[g + 1] - offsets[g]);
      for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r) {
        for (std::size_t j = 0; j < n; ++j) out[g * n + j] += A[r * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) out[g * n + j] *= inv;
    }
    return push(s, n, std::move(out), "segment_mean", [this, a, n, s, offsets = std::move(offsets)](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t g = 0; g < s; ++g) {
        const T inv = T{1} / static_cast<T>(offsets[g + 1] - offsets[g]);
        for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r) {
          for (std::size_t j = 0; j < n; ++j) dA[r * n + j] += inv * G[g * n + j];
        }
      }
    });
  }

  // Columnwise max over row segments; ties go to the first row.
  Var segment_max(Var a, std::vector<std::size_t> offsets) {
    const std::size_t n = cols(a), s = offsets.size() - 1;
    check(offsets.size() >= 2 && offsets.back() == rows(a), "segment_max", a, a);
    const auto& A = nodes_[a.id].value;
    std::vector<T> out(s * n);
    std::vector<std::size_t> arg(s * n);
    for (std::size_t g = 0; g < s; ++g) {
      check(offsets[g + 1] > offsets[g], "segment_max(empty segment)", a, a);
      for (std::size_t j = 0; j < n; ++j) {
        std::size_t best = offsets[g];
        for (std::size_t r = offsets[g] + 1; r < offsets[g + 1]; ++r) {
          if (A[r * n + j] > A[best * n + j]) best = r;
        }
        arg[g * n + j] = best;
        out[g * n + j] = A[best * n + j];
      }
    }
    return push(s, n, std::move(out), "segment_max", [this, a, n, arg = std::move(arg)](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) dA[arg[i] * n + i % n] += G[i];
    });
  }

  // Per-row max(0, cos(a_i, b_i)) as an m×1 column; 0 when either norm < 1e-12.
  Var row_cos_clamped(Var a, Var b) {
    check(same_shape(a, b), "row_cos_clamped", a, b);
    const std::size_t m = rows(a), n = cols(a);
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    std::vector<T> out(m, T{0});
    for (std::size_t i = 0; i < m; ++i) {
      out[i] = cos_clamped<T>(std::span<const T>(A).subspan(i * n, n), std::span<const T>(B).subspan(i * n, n));
    }
    return push(m, 1, std::move(out), "row_cos_clamped", [this, a, b, m, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& Y = nodes_[self].value;
      const auto& A = nodes_[a.id].value;
      const auto& B = nodes_[b.id].value;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        if (Y[i] <= T{0}) continue;
        auto ai = std::span<const T>(A).subspan(i * n, n);
        auto bi = std::span<const T>(B).subspan(i * n, n);
        const T na = l2_norm(ai), nb = l2_norm(bi);
        const T c = Y[i];
        for (std::size_t j = 0; j < n; ++j) {
          dA[i * n + j] += G[i] * (bi[j] / (na * nb) - c * ai[j] / (na * na));
          dB[i * n + j] += G[i] * (ai[j] / (na * nb) - c * bi[j] / (nb * nb));
        }
      }
    });
  }

  // Row i of a (m×n) multiplied by s_i (s: m×1).
  Var scale_rows(Var a, Var s) {
    const std::size_t m = rows(a), n = cols(a);
    check(rows(s) == m && cols(s) == 1, "scale_rows", a, s);
    const auto& A = nodes_[a.id].value;
    const auto& S = nodes_[s.id].value;
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] * S[i];
    }
    return push(m, n, std::move(out), "scale_rows", [this, a, s, m, n](std::size_t self) {
      const auto& G = nodes_[self].grad;
      const auto& A = nodes_[a.id].value;
      const auto& S = nodes_[s.id].value;
      auto& dA = nodes_[a.id].grad;
      auto& dS = nodes_[s.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          dA[i * n + j] += G[i * n + j] * S[i];
          dS[i] += G[i * n + j] * A[i * n + j];
        }
      }
    });
  }

  Var sum(Var a) {
    T s{0};
    for (T x : nodes_[a.id].value) s += x;
    return push(1, 1, {s}, "sum", [this, a](std::size_t self) {
      const T g = nodes_[self].grad[0];
      for (auto& d : nodes_[a.id].grad) d += g;
    });
  }

  // Mean MIL-NCE over bags. logits is bags×texts (clip i · text t) and owner[t]
  // is the bag that text t belongs to.
  Var mil_nce(Var logits, std::vector<std::size_t> owner) {
    const std::size_t n = rows(logits), T_ = cols(logits);
    check(owner.size() == T_ && n >= 2, "mil_nce", logits, logits);
    const auto& L = nodes_[logits.id].value;
    std::vector<double> pos, neg;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      collect_bag_logits(L, n, T_, owner, i, pos, neg);
      total += mil_nce_loss(pos, neg);
    }
    const T loss = static_cast<T>(total / static_cast<double>(n));
    return push(1, 1, {loss}, "mil_nce", [this, logits, n, T_, owner = std::move(owner)](std::size_t self) {
      const T g = nodes_[self].grad[0] / static_cast<T>(n);
      const auto& L = nodes_[logits.id].value;
      auto& dL = nodes_[logits.id].grad;
      for (std::size_t i = 0; i < n; ++i) {
        // lse(all) - lse(pos): d/dx = softmax_all(x) - [x in pos]·softmax_pos(x)
        T mx = -std::numeric_limits<T>::infinity(), mp = mx;
        for_bag(n, T_, owner, i, [&](std::size_t idx, bool is_pos) {
          mx = std::max(mx, L[idx]);
          if (is_pos) mp = std::max(mp, L[idx]);
        });
        T z_all{0}, z_pos{0};
        for_bag(n, T_, owner, i, [&](std::size_t idx, bool is_pos) {
          z_all += std::exp(L[idx] - mx);
          if (is_pos) z_pos += std::exp(L[idx] - mp);
        });
        for_bag(n, T_, owner, i, [&](std::size_t idx, bool is_pos) {
          T d = std::exp(L[idx] - mx) / z_all;
          if (is_pos) d -= std::exp(L[idx] - mp) / z_pos;
          dL[idx] += g * d;
        });
      }
    });
  }

  // Sum over texts i of Σ_{j≠i} [s_ji − s_ii]_+ (VSE) or max_{j≠i} (VSE++),
  // with s[clip][text].
  Var vse(Var sim, bool hardest) {
    const std::size_t n = rows(sim);
    check(cols(sim) == n, "vse(non-square)", sim, sim);
    const auto& S = nodes_[sim.id].value;
    BasicTensor<T> mat = BasicTensor<T>::matrix(n, n, S);
    const T loss = hardest ? vsepp_loss(mat) : vse_loss(mat);
    return push(1, 1, {loss}, hardest ? "vsepp" : "vse", [this, sim, n, hardest](std::size_t self) {
      const T g = nodes_[self].grad[0];
      const auto& S = nodes_[sim.id].value;
      auto& dS = nodes_[sim.id].grad;
      for (std::size_t i = 0; i < n; ++i) {
        const T diag = S[i * n + i];
        if (hardest) {
          std::size_t best = n;
          for (std::size_t j = 0; j < n; ++j) {
            if (j != i && (best == n || S[j * n + i] > S[best * n + i])) best = j;
          }
          if (best < n && S[best * n + i] - diag > T{0}) {
            dS[best * n + i] += g;
            dS[i * n + i] -= g;
          }
        } else {
          for (std::size_t j = 0; j < n; ++j) {
            if (j != i && S[j * n + i] - diag > T{0}) {
              dS[j * n + i] += g;
              dS[i * n + i] -= g;
            }
          }
        }
      }
    });
  }

  // Mean softmax cross-entropy over rows.
  Var softmax_xent(Var logits, std::vector<std::size_t> labels) {
    const std::size_t m = rows(logits), c = cols(logits);
    check(labels.size() == m && m > 0, "softmax_xent", logits, logits);
    const auto& L = nodes_[logits.id].value;
    std::vector<T> probs(m * c);
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      check(labels[i] < c, "softmax_xent(label)", logits, logits);
      auto row = std::span<const T>(L).subspan(i * c, c);
      softmax_into(row, std::span<T>(probs).subspan(i * c, c));
      T mx = *std::max_element(row.begin(), row.end());
      T z{0};
      for (T x : row) z += std::exp(x - mx);
      total += static_cast<double>(std::log(z) + mx - row[labels[i]]);
    }
    const T loss = static_cast<T>(total / static_cast<double>(m));
    return push(1, 1, {loss}, "softmax_xent",
                [this, logits, m, c, labels = std::move(labels), probs = std::move(probs)](std::size_t self) {
                  const T g = nodes_[self].grad[0] / static_cast<T>(m);
                  auto& dL = nodes_[logits.id].grad;
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                      dL[i * c + j] += g * (probs[i * c + j] - (j == labels[i] ? T{1} : T{0}));
                    }
                  }
                });
  }

  void backward(Var loss) {
    check(rows(loss) == 1 && cols(loss) == 1, "backward(non-scalar)", loss, loss);
    for (auto& n : nodes_) n.grad.assign(n.value.size(), T{0});
    nodes_[loss.id].grad[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(i);
    }
    for (std::size_t i = 0; i <= loss.id; ++i) {
      for (T g : nodes_[i].grad) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient at node " + describe(i));
      }
    }
  }

  // Gradients for every tensor in `params`, zero for those not on the graph.
  BasicParamSet<T> param_grads(const BasicParamSet<T>& params) const {
    BasicParamSet<T> out;
    out.version = params.version;
    for (const auto& [name, t] : params) {
      BasicTensor<T> g(t.shape, T{0});
      if (auto it = params_.find(name); it != params_.end() && !nodes_[it->second.id].grad.empty()) {
        g.data = nodes_[it->second.id].grad;
      }
      out.add(name, std::move(g));
    }
    return out;
  }

 private:
  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    std::string name;
    std::function<void(std::size_t)> back;
  };

  Var push(std::size_t r, std::size_t c, std::vector<T> value, std::string name,
           std::function<void(std::size_t)> back) {
    for (T x : value) {
      if (!std::isfinite(x)) {
        throw NumericError("non-finite value produced by node #" + std::to_string(nodes_.size()) + " (" + name + ")");
      }
    }
    nodes_.push_back(Node{r, c, std::move(value), {}, std::move(name), std::move(back)});
    return Var{nodes_.size() - 1};
  }

  std::string describe(std::size_t i) const { return "#" + std::to_string(i) + " (" + nodes_[i].name + ")"; }

  bool same_shape(Var a, Var b) const { return rows(a) == rows(b) && cols(a) == cols(b); }

  void check(bool ok, const char* op, Var a, Var b) const {
    if (ok) return;
    std::string msg = std::string("shape mismatch in ") + op;
    if (a.id < nodes_.size() && b.id < nodes_.size()) {
      msg += ": " + std::to_string(rows(a)) + "x" + std::to_string(cols(a)) + " vs " + std::to_string(rows(b)) + "x" +
             std::to_string(cols(b));
    }
    throw ValidationError(msg);
  }

  template <typename F>
  Var binary(Var a, Var b, const char* op, F f, T da, T db) {
    check(same_shape(a, b), op, a, b);
    const auto& A = nodes_[a.id].value;
    const auto& B = nodes_[b.id].value;
    std::vector<T> out(A.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(A[i], B[i]);
    return push(rows(a), cols(a), std::move(out), op, [this, a, b, da, db](std::size_t self) {
      const auto& G = nodes_[self].grad;
      auto& dA = nodes_[a.id].grad;
      auto& dB = nodes_[b.id].grad;
      for (std::size_t i = 0; i < G.size(); ++i) {
        dA[i] += da * G[i];
        dB[i] += db * G[i];
      }
    });
  }

  // Visits every logit of bag i: positives are L[i][t] with owner[t]==i;
  // negatives are L[i][t'] for foreign texts and L[j][t] for foreign clips.
  template <typename F>
  static void for_bag(std::size_t n, std::size_t cols, const std::vector<std::size_t>& owner, std::size_t i, F&& f) {
    for (std::size_t t = 0; t < cols; ++t) f(i * cols + t, owner[t] == i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (std::size_t t = 0; t < cols; ++t) {
        if (owner[t] == i) f(j * cols + t, false);
      }
    }
  }

  static void collect_bag_logits(const std::vector<T>& L, std::size_t n, std::size_t cols,
                                 const std::vector<std::size_t>& owner, std::size_t i, std::vector<double>& pos,
                                 std::vector<double>& neg) {
    pos.clear();
    neg.clear();
    for_bag(n, cols, owner, i, [&](std::size_t idx, bool is_pos) {
      (is_pos ? pos : neg).push_back(static_cast<double>(L[idx]));
    });
  }

  std::vector<Node> nodes_;
  std::map<std::string, Var> params_;
};

}  // namespace t2v
