#include <algorithm>
#include <cmath>
#include <map>

#include "t2v/numkit/losses.hpp"
#include "t2v/tcm/tcm.hpp"

namespace t2v::tcm {

TcmConfig TcmConfig::full(std::size_t n_classes) {
  TcmConfig c;
  c.d_v = 512;
  c.d_h = 384;
  c.mlp_hidden = 128;
  c.n_classes = n_classes;
  return c;
}

void TcmConfig::validate() const {
  if (d_v == 0 || d_h == 0 || mlp_hidden == 0) throw ConfigError("tcm config: dimensions must be >= 1");
  if (d_h % 3 != 0) throw ConfigError("tcm config: d_h=" + std::to_string(d_h) + " must be divisible by 3");
  if (n_classes != 2 && n_classes != 3) throw ConfigError("tcm config: n_classes must be 2 or 3");
}

nlohmann::json TcmConfig::to_json() const {
  return {{"d_v", d_v}, {"d_h", d_h}, {"mlp_hidden", mlp_hidden}, {"n_classes", n_classes}};
}

TcmConfig TcmConfig::from_json(const nlohmann::json& j) {
  TcmConfig c;
  c.d_v = j.value("d_v", c.d_v);
  c.d_h = j.value("d_h", c.d_h);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.validate();
  return c;
}

namespace {

constexpr std::size_t kLayers = 2;

struct Spec {
  std::string name;
  Shape shape;
};

std::vector<Spec> specs(const TcmConfig& c) {
  std::vector<Spec> out;
  for (const auto& [stream, d] : {std::pair<const char*, std::size_t>{"lstm_vis", c.d_v}, {"lstm_hist", c.d_h}}) {
    for (std::size_t l = 0; l < kLayers; ++l) {
      const std::string p = std::string(stream) + ".l" + std::to_string(l);
      out.push_back({p + ".wx", {d, 4 * d}});
      out.push_back({p + ".wh", {d, 4 * d}});
      out.push_back({p + ".b", {4 * d}});
    }
  }
  out.push_back({"mlp.w1", {c.d_v + c.d_h, c.mlp_hidden}});
  out.push_back({"mlp.b1", {c.mlp_hidden}});
  out.push_back({"mlp.w2", {c.mlp_hidden, c.n_classes}});
  out.push_back({"mlp.b2", {c.n_classes}});
  return out;
}

}  // namespace

std::vector<std::string> param_names(const TcmConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : specs(cfg)) out.push_back(s.name);
  return out;
}

ParamSet zero_params(const TcmConfig& cfg) {
  cfg.validate();
  ParamSet ps;
  for (const auto& s : specs(cfg)) ps.add(s.name, Tensor(s.shape));
  return ps;
}

ParamSet init_params(const TcmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::derive(seed, 0x7c3);
  ParamSet ps;
  for (const auto& s : specs(cfg)) {
    Tensor t(s.shape);
    const bool lstm = s.name.rfind("lstm", 0) == 0;
    if (s.name == "mlp.w2" || s.name == "mlp.b2") {
      // zero: uniform output before training
    } else if (s.shape.size() == 2) {
      const double a = lstm ? 1.0 / std::sqrt(static_cast<double>(s.shape[0]))
                            : std::sqrt(6.0 / static_cast<double>(s.shape[0] + s.shape[1]));
      for (auto& x : t.data) x = static_cast<float>(rng.uniform(-a, a));
    } else if (lstm) {
      const std::size_t h = s.shape[0] / 4;
      for (std::size_t j = h; j < 2 * h; ++j) t.data[j] = 1.0f;  // forget gate
    }
    ps.add(s.name, std::move(t));
  }
  return ps;
}

void check_params(const ParamSet& params, const TcmConfig& cfg) {
  params.require(param_names(cfg));
  for (const auto& s : specs(cfg)) {
    const auto& t = params.at(s.name);
    if (t.shape != s.shape) {
      throw ValidationError("tcm tensor '" + s.name + "' has shape " + shape_str(t.shape) + ", config implies " +
                            shape_str(s.shape));
    }
  }
}

template <typename T>
BasicTensor<T> temporal_prior(const BasicTensor<T>& seq) {
  const std::size_t k = seq.rows(), d = seq.cols();
  BasicTensor<T> out = seq;
  if (k <= 1) return out;
  for (std::size_t i = 0; i < k; ++i) {
    T s{0};
    int n = 0;
    if (i > 0) {
      s += cos_clamped<T>(seq.row(i), seq.row(i - 1));
      ++n;
    }
    if (i + 1 < k) {
      s += cos_clamped<T>(seq.row(i), seq.row(i + 1));
      ++n;
    }
    s /= static_cast<T>(n);
    for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] *= s;
  }
  return out;
}

template <typename T>
std::vector<Var> lstm_forward(Graph<T>& g, const BasicParamSet<T>& ps, const std::string& prefix, std::size_t layers,
                              const std::vector<Var>& steps) {
  if (steps.empty()) throw ValidationError("lstm_forward: empty sequence");
  std::vector<Var> xs = steps;
  const std::size_t b = g.rows(steps[0]);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    Var wx = g.param(ps, p + ".wx"), wh = g.param(ps, p + ".wh"), bias = g.param(ps, p + ".b");
    const std::size_t h = g.cols(wh) / 4;
    if (g.rows(wh) != h || g.cols(wx) != 4 * h) throw ValidationError("lstm_forward: malformed layer " + p);
    Var hs = g.input(b, h, std::vector<T>(b * h, T{0}), "h0");
    Var cs = g.input(b, h, std::vector<T>(b * h, T{0}), "c0");
    std::vector<Var> out;
    for (Var x : xs) {
      if (g.cols(x) != g.rows(wx)) {
        throw ValidationError("lstm_forward: input width " + std::to_string(g.cols(x)) + " but layer " + p +
                              " expects " + std::to_string(g.rows(wx)));
      }
      Var z = g.add(g.affine(x, wx, bias), g.matmul(hs, wh));
      Var i = g.sigmoid(g.col_slice(z, 0, h));
      Var f = g.sigmoid(g.col_slice(z, h, 2 * h));
      Var o = g.sigmoid(g.col_slice(z, 2 * h, 3 * h));
      Var c = g.tanh(g.col_slice(z, 3 * h, 4 * h));
      cs = g.add(g.mul(f, cs), g.mul(i, c));
      hs = g.mul(o, g.tanh(cs));
      out.push_back(hs);
    }
    xs = std::move(out);
  }
  return xs;
}

template <typename T>
BasicTensor<T> lstm_forward(const BasicTensor<T>& seq, const BasicParamSet<T>& ps, const std::string& prefix,
                            std::size_t layers) {
  Graph<T> g;
  std::vector<Var> steps;
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    auto r = seq.row(t);
    steps.push_back(g.input(1, r.size(), std::vector<T>(r.begin(), r.end())));
  }
  auto hs = lstm_forward(g, ps, prefix, layers, steps);
  const std::size_t h = g.cols(hs[0]);
  BasicTensor<T> out(Shape{hs.size(), h});
  for (std::size_t t = 0; t < hs.size(); ++t) {
    std::copy(g.value(hs[t]).begin(), g.value(hs[t]).end(), out.data.begin() + static_cast<std::ptrdiff_t>(t * h));
  }
  return out;
}

template <typename T>
Var tcm_logits(Graph<T>& g, const BasicParamSet<T>& ps, std::span<const SequenceSample* const> batch) {
  if (batch.empty()) throw ValidationError("tcm_logits: empty batch");
  const std::size_t k = batch[0]->length();
  const std::size_t b = batch.size();
  std::vector<BasicTensor<T>> vis, hist;
  for (const auto* s : batch) {
    if (s->length() != k || s->hist.rows() != k) throw ValidationError("tcm_logits: sequence lengths differ");
    vis.push_back(temporal_prior(s->vis.template cast<T>()));
    hist.push_back(temporal_prior(s->hist.template cast<T>()));
  }
  auto stream = [&](const std::vector<BasicTensor<T>>& xs, const char* prefix) {
    const std::size_t d = xs[0].cols();
    std::vector<Var> steps;
    for (std::size_t t = 0; t < k; ++t) {
      std::vector<T> rows(b * d);
      for (std::size_t i = 0; i < b; ++i) {
        if (xs[i].cols() != d) throw ValidationError("tcm_logits: feature widths differ within a batch");
        auto r = xs[i].row(t);
        std::copy(r.begin(), r.end(), rows.begin() + static_cast<std::ptrdiff_t>(i * d));
      }
      steps.push_back(g.input(b, d, std::move(rows)));
    }
    return lstm_forward(g, ps, prefix, kLayers, steps).back();
  };
  Var joint = g.concat_cols(stream(vis, "lstm_vis"), stream(hist, "lstm_hist"));
  Var hid = g.tanh(g.affine(joint, g.param(ps, "mlp.w1"), g.param(ps, "mlp.b1")));
  return g.affine(hid, g.param(ps, "mlp.w2"), g.param(ps, "mlp.b2"));
}

namespace {

Score unit_score(std::size_t n_classes) {
  Score s;
  s.probs.assign(n_classes, 0.0);
  s.probs[0] = 1.0;
  s.coherence = 1.0;
  return s;
}

}  // namespace

std::vector<Score> score_batch(std::span<const SequenceSample> samples, const ParamSet& ps) {
  const std::size_t c = ps.at("mlp.b2").size();
  std::vector<Score> out(samples.size());
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.vis.rows() != s.hist.rows()) {
      throw ValidationError("score_sequence: visual and histogram streams have different lengths");
    }
    if (s.length() <= 1) {
      out[i] = unit_score(c);
    } else {
      by_len[s.length()].push_back(i);
    }
  }
  for (const auto& [len, idx] : by_len) {
    std::vector<const SequenceSample*> group;
    for (std::size_t i : idx) group.push_back(&samples[i]);
    Graph<float> g;
    Var logits = tcm_logits<float>(g, ps, group);
    const auto& L = g.value(logits);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::vector<double> row(L.begin() + static_cast<std::ptrdiff_t>(r * c),
                              L.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
      Score s;
      s.probs.resize(c);
      softmax_into<double>(row, s.probs);
      s.coherence = s.probs[0];
      out[idx[r]] = std::move(s);
    }
  }
  return out;
}

Score score_sequence(const SequenceSample& s, const ParamSet& ps) {
  return score_batch(std::span<const SequenceSample>(&s, 1), ps)[0];
}

Score score_sequence(const Tensor& vis, const Tensor& hist, const ParamSet& ps) {
  SequenceSample s;
  s.vis = vis;
  s.hist = hist;
  return score_sequence(s, ps);
}

#define T2V_TCM_INSTANTIATE(T)                                                                                     \
  template BasicTensor<T> temporal_prior(const BasicTensor<T>&);                                                  \
  template std::vector<Var> lstm_forward(Graph<T>&, const BasicParamSet<T>&, const std::string&, std::size_t,     \
                                         const std::vector<Var>&);                                                \
  template BasicTensor<T> lstm_forward(const BasicTensor<T>&, const BasicParamSet<T>&, const std::string&,        \
                                       std::size_t);                                                              \
  template Var tcm_logits(Graph<T>&, const BasicParamSet<T>&, std::span<const SequenceSample* const>);

T2V_TCM_INSTANTIATE(float)
T2V_TCM_INSTANTIATE(double)

}  // namespace t2v::tcm
