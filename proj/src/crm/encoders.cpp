#include <algorithm>
#include <cmath>

#include "t2v/crm/crm.hpp"

namespace t2v::crm {

const char* to_string(Mode m) { return m == Mode::parallel ? "parallel" : "adaptive"; }

Mode parse_mode(std::string_view s) {
  if (s == "parallel") return Mode::parallel;
  if (s == "adaptive") return Mode::adaptive;
  throw ConfigError("unknown encoder mode '" + std::string(s) + "' (expected parallel|adaptive)");
}

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::mil_nce: return "mil_nce";
    case LossKind::vse: return "vse";
    case LossKind::vsepp: return "vsepp";
  }
  return "?";
}

LossKind parse_loss(std::string_view s) {
  if (s == "mil_nce") return LossKind::mil_nce;
  if (s == "vse") return LossKind::vse;
  if (s == "vsepp") return LossKind::vsepp;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mil_nce|vse|vsepp)");
}

CrmConfig CrmConfig::full() {
  CrmConfig c;
  c.d_v = 512;
  c.shot_hidden = 2048;
  c.d_e = 512;
  c.vocab_size = 8192;
  c.word_dim = 300;
  c.text_hidden = 2048;
  return c;
}

void CrmConfig::validate() const {
  if (d_v == 0 || shot_hidden == 0 || d_e == 0 || vocab_size == 0 || word_dim == 0 || text_hidden == 0) {
    throw ConfigError("crm config: all dimensions must be >= 1");
  }
}

nlohmann::json CrmConfig::to_json() const {
  return {{"d_v", d_v},         {"shot_hidden", shot_hidden}, {"d_e", d_e},
          {"vocab_size", vocab_size}, {"word_dim", word_dim},   {"text_hidden", text_hidden}};
}

CrmConfig CrmConfig::from_json(const nlohmann::json& j) {
  CrmConfig c;
  c.d_v = j.value("d_v", c.d_v);
  c.shot_hidden = j.value("shot_hidden", c.shot_hidden);
  c.d_e = j.value("d_e", c.d_e);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.word_dim = j.value("word_dim", c.word_dim);
  c.text_hidden = j.value("text_hidden", c.text_hidden);
  c.validate();
  return c;
}

namespace {

struct Spec {
  const char* name;
  Shape shape;
};

std::vector<Spec> specs(const CrmConfig& c) {
  return {
      {"shot.w1", {c.d_v, c.shot_hidden}},
      {"shot.b1", {c.shot_hidden}},
      {"shot.w2", {c.shot_hidden, c.d_e}},
      {"shot.b2", {c.d_e}},
      {"text.embed", {c.vocab_size, c.word_dim}},
      {"text.w1", {c.word_dim, c.text_hidden}},
      {"text.b1", {c.text_hidden}},
      {"text.w2", {c.text_hidden, c.d_e}},
      {"text.b2", {c.d_e}},
      {"interact.w", {c.d_e, c.d_e}},
      {"head.w1", {c.d_e, c.d_e}},
      {"head.b1", {c.d_e}},
      {"head.w2", {c.d_e, c.d_e}},
      {"head.b2", {c.d_e}},
  };
}

template <typename T>
Var mlp2(Graph<T>& g, const BasicParamSet<T>& ps, Var x, const std::string& prefix) {
  Var h = g.tanh(g.affine(x, g.param(ps, prefix + ".w1"), g.param(ps, prefix + ".b1")));
  return g.affine(h, g.param(ps, prefix + ".w2"), g.param(ps, prefix + ".b2"));
}

}  // namespace

std::vector<std::string> param_names() {
  std::vector<std::string> out;
  for (const auto& s : specs(CrmConfig{})) out.emplace_back(s.name);
  return out;
}

ParamSet init_params(const CrmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::derive(seed, 0xc7a);
  ParamSet ps;
  for (const auto& s : specs(cfg)) {
    Tensor t(s.shape);
    const std::string name = s.name;
    if (s.shape.size() == 2) {
      double scale;
      if (name == "text.embed") {
        scale = 1.0;
      } else {
        scale = std::sqrt(6.0 / static_cast<double>(s.shape[0] + s.shape[1]));
      }
      for (auto& x : t.data) x = static_cast<float>(name == "text.embed" ? scale * rng.normal() : rng.uniform(-scale, scale));
      // W and the head start as identities: σ begins by subtracting the
      // context itself and the head passes g through (up to tanh).
      if (name == "interact.w" || name == "head.w1" || name == "head.w2") {
        std::fill(t.data.begin(), t.data.end(), 0.0f);
        for (std::size_t i = 0; i < s.shape[0]; ++i) t(i, i) = 1.0f;
      }
    }
    ps.add(name, std::move(t));
  }
  return ps;
}

void check_params(const ParamSet& params, const CrmConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& s : specs(cfg)) names.emplace_back(s.name);
  params.require(names);
  for (const auto& s : specs(cfg)) {
    const auto& t = params.at(s.name);
    if (t.shape != s.shape) {
      throw ValidationError(std::string("crm tensor '") + s.name + "' has shape " + shape_str(t.shape) +
                            ", config implies " + shape_str(s.shape));
    }
  }
}

template <typename T>
Var shot_mlp(Graph<T>& g, const BasicParamSet<T>& ps, Var x) {
  return mlp2(g, ps, x, "shot");
}

template <typename T>
Var encode_shots(Graph<T>& g, const BasicParamSet<T>& ps, Var shots, std::vector<std::size_t> offsets) {
  return g.segment_mean(shot_mlp(g, ps, shots), std::move(offsets));
}

template <typename T>
Var encode_texts(Graph<T>& g, const BasicParamSet<T>& ps, const std::vector<std::vector<std::uint32_t>>& texts) {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> offsets{0};
  const std::size_t vocab = ps.at("text.embed").rows();
  for (const auto& t : texts) {
    if (t.empty()) throw ValidationError("encode_text: empty token list");
    for (auto tok : t) {
      if (tok >= vocab) throw ValidationError("encode_text: token id " + std::to_string(tok) + " outside vocabulary");
      tokens.push_back(tok);
    }
    offsets.push_back(tokens.size());
  }
  Var words = g.gather_rows(g.param(ps, "text.embed"), std::move(tokens));
  return mlp2(g, ps, g.segment_max(words, std::move(offsets)), "text");
}

template <typename T>
Var interact(Graph<T>& g, const BasicParamSet<T>& ps, Var context, Var text) {
  Var m = g.row_cos_clamped(context, text);
  Var projected = g.matmul(context, g.param(ps, "interact.w"));
  return g.sub(text, g.scale_rows(projected, m));
}

template <typename T>
Var head(Graph<T>& g, const BasicParamSet<T>& ps, Var x) {
  return mlp2(g, ps, x, "head");
}

template <typename T>
BasicTensor<T> encode_shot_sequence(const BasicTensor<T>& shots, const BasicParamSet<T>& ps) {
  if (shots.size() == 0 || shots.rows() == 0) throw ValidationError("encode_shot_sequence: empty shot list");
  Graph<T> g;
  Var x = g.input(shots);
  Var f = encode_shots(g, ps, x, {0, shots.rows()});
  return BasicTensor<T>::vector(std::vector<T>(g.value(f).begin(), g.value(f).end()));
}

template <typename T>
BasicTensor<T> encode_text(std::span<const std::uint32_t> tokens, const BasicParamSet<T>& ps) {
  Graph<T> g;
  Var t = encode_texts(g, ps, {std::vector<std::uint32_t>(tokens.begin(), tokens.end())});
  return BasicTensor<T>::vector(std::vector<T>(g.value(t).begin(), g.value(t).end()));
}

template <typename T>
BasicTensor<T> context_interact(std::span<const T> context, std::span<const T> text, const BasicParamSet<T>& ps) {
  const auto& w = ps.at("interact.w");
  const std::size_t d = text.size();
  if (context.size() != d || w.rows() != d || w.cols() != d) {
    throw ValidationError("context_interact: dimension mismatch");
  }
  const T m = cos_clamped<T>(context, text);
  std::vector<T> out(text.begin(), text.end());
  if (m == T{0}) return BasicTensor<T>::vector(std::move(out));
  for (std::size_t j = 0; j < d; ++j) {
    T proj{0};
    for (std::size_t i = 0; i < d; ++i) proj += w(i, j) * context[i];
    out[j] -= m * proj;
  }
  return BasicTensor<T>::vector(std::move(out));
}

template <typename T>
BasicTensor<T> apply_head(std::span<const T> x, const BasicParamSet<T>& ps) {
  Graph<T> g;
  Var in = g.input(1, x.size(), std::vector<T>(x.begin(), x.end()));
  Var out = head(g, ps, in);
  return BasicTensor<T>::vector(std::vector<T>(g.value(out).begin(), g.value(out).end()));
}

template <typename T>
BasicTensor<T> query_feature(std::span<const std::uint32_t> tokens, std::span<const T> context,
                             const BasicParamSet<T>& ps) {
  BasicTensor<T> text = encode_text(tokens, ps);
  if (!context.empty()) text = context_interact<T>(context, text.data, ps);
  return apply_head<T>(text.data, ps);
}

#define T2V_CRM_INSTANTIATE(T)                                                                                  \
  template Var shot_mlp(Graph<T>&, const BasicParamSet<T>&, Var);                                             \
  template Var encode_shots(Graph<T>&, const BasicParamSet<T>&, Var, std::vector<std::size_t>);               \
  template Var encode_texts(Graph<T>&, const BasicParamSet<T>&, const std::vector<std::vector<std::uint32_t>>&); \
  template Var interact(Graph<T>&, const BasicParamSet<T>&, Var, Var);                                        \
  template Var head(Graph<T>&, const BasicParamSet<T>&, Var);                                                 \
  template BasicTensor<T> encode_shot_sequence(const BasicTensor<T>&, const BasicParamSet<T>&);               \
  template BasicTensor<T> encode_text(std::span<const std::uint32_t>, const BasicParamSet<T>&);               \
  template BasicTensor<T> context_interact(std::span<const T>, std::span<const T>, const BasicParamSet<T>&);  \
  template BasicTensor<T> apply_head(std::span<const T>, const BasicParamSet<T>&);                            \
  template BasicTensor<T> query_feature(std::span<const std::uint32_t>, std::span<const T>, const BasicParamSet<T>&);

T2V_CRM_INSTANTIATE(float)
T2V_CRM_INSTANTIATE(double)

}  // namespace t2v::crm
