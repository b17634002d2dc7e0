// t2v: corpus generation, training, indexing, querying, evaluation and
// benchmarking from one config file.
//
// Exit codes: 0 success, 2 invalid input (bad config, flags or data), 1 any
// other failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "t2v/datagen/formats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace t2v;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool json = false;
  bool quiet = false;
};

cli::RunConfig load_config(const Globals& g) {
  cli::RunConfig c = g.config_path.empty() ? cli::RunConfig::defaults()
                                           : cli::RunConfig::from_doc(cli::ConfigDoc::load(g.config_path));
  if (g.seed) c.set_seed(*g.seed);
  c.validate();
  return c;
}

void print_human(const json& j, const std::string& indent = "") {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (v.is_object()) {
        std::cout << indent << k << ":\n";
        print_human(v, indent + "  ");
      } else {
        std::cout << indent << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
      }
    }
  } else if (j.is_array()) {
    for (const auto& v : j) std::cout << indent << "- " << v.dump() << "\n";
  } else {
    std::cout << indent << j.dump() << "\n";
  }
}

void emit(const Globals& g, const json& j) {
  if (g.json) {
    std::cout << j.dump() << "\n";
  } else {
    print_human(j);
  }
}

std::function<void(const json&)> log_sink(const Globals& g) {
  if (g.quiet) return {};
  return [](const json& j) { std::cerr << j.dump() << "\n"; };
}

data::Corpus load_corpus(const cli::RunConfig& c) {
  data::Corpus corpus = data::load_corpus(c.data_dir);
  if (corpus.d_v() != c.corpus.d_v || corpus.d_h() != c.corpus.d_h) {
    throw ValidationError("corpus in '" + c.data_dir + "' has d_v=" + std::to_string(corpus.d_v()) +
                          ", d_h=" + std::to_string(corpus.d_h()) + " but the config expects d_v=" +
                          std::to_string(c.corpus.d_v) + ", d_h=" + std::to_string(c.corpus.d_h));
  }
  return corpus;
}

std::vector<std::string> split_videos(const data::Corpus& corpus, const std::string& which) {
  if (which == "all") return corpus.video_ids();
  const auto s = data::split_videos(corpus, corpus.config.seed);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw ValidationError("unknown split '" + which + "' (train, val, test, all)");
}

ParamSet load_model(const std::string& path, const char* kind, const std::function<void(const json&, const ParamSet&)>& check) {
  if (!fs::exists(path)) throw ValidationError(std::string(kind) + " checkpoint '" + path + "' does not exist");
  auto ck = data::load_checkpoint(path);
  if (ck.config.value("kind", "") != kind) {
    throw ValidationError("'" + path + "' is not a " + kind + " checkpoint");
  }
  check(ck.config.at("model"), ck.params);
  return std::move(ck.params);
}

ParamSet load_crm(const cli::RunConfig& c) {
  return load_model(c.crm_checkpoint, "crm", [&](const json& m, const ParamSet& ps) {
    const auto model = crm::CrmConfig::from_json(m);
    crm::check_params(ps, model);
    if (model.d_v != c.corpus.d_v || model.vocab_size != c.corpus.vocab_size) {
      throw ValidationError("crm checkpoint dims (d_v=" + std::to_string(model.d_v) + ", vocab=" +
                            std::to_string(model.vocab_size) + ") do not match the config profile");
    }
  });
}

ParamSet load_tcm(const cli::RunConfig& c) {
  return load_model(c.tcm_checkpoint, "tcm", [&](const json& m, const ParamSet& ps) {
    const auto model = tcm::TcmConfig::from_json(m);
    tcm::check_params(ps, model);
    if (model.d_v != c.corpus.d_v || model.d_h != c.corpus.d_h) {
      throw ValidationError("tcm checkpoint dims (d_v=" + std::to_string(model.d_v) + ", d_h=" +
                            std::to_string(model.d_h) + ") do not match the config profile");
    }
  });
}

std::vector<std::uint32_t> query_tokens(const std::string& text, std::uint32_t vocab) {
  auto tokens = data::tokenize(text, vocab);
  if (tokens.empty()) throw ValidationError("query text has no words");
  if (tokens.size() > data::kMaxTextLen) tokens.resize(data::kMaxTextLen);
  return tokens;
}

engine::GalleryIndex load_index_for(const cli::RunConfig& c) {
  auto index = engine::load_index(c.index_dir);
  const std::string h = data::file_hash(c.crm_checkpoint);
  if (!index.crm_checkpoint_hash.empty() && index.crm_checkpoint_hash != h) {
    throw ValidationError("index in '" + c.index_dir + "' was built with a different crm checkpoint (" +
                          index.crm_checkpoint_hash + " vs " + h + "); rebuild it");
  }
  return index;
}

std::vector<std::uint64_t> parse_ids(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError("bad shot id '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"t2v: text to shot-sequence retrieval on a planted corpus"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("-c,--config", g.config_path, "TOML config file (see `t2v config-doc`)");
  auto* seed_opt = app.add_option("--seed", seed_value, "Override every seed in the config");
  app.add_flag("--json", g.json, "Print results as one JSON document");
  app.add_flag("-q,--quiet", g.quiet, "Suppress training logs on stderr");

  auto* gen = app.add_subcommand("gen-data", "Generate the planted corpus into data.dir");

  std::string mode_override;
  auto* train_crm = app.add_subcommand("train-crm", "Train the content retrieval model");
  train_crm->add_option("--mode", mode_override, "parallel or adaptive (default: model.mode)")
      ->check(CLI::IsMember({"parallel", "adaptive"}));
  auto* train_tcm = app.add_subcommand("train-tcm", "Train the temporal coherence model");

  auto* index = app.add_subcommand("index", "Gallery index commands");
  index->require_subcommand(1);
  std::string index_split = "all";
  auto* index_build = index->add_subcommand("build", "Encode shots into model.index_dir");
  index_build->add_option("--split", index_split, "Which videos to index")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* query = app.add_subcommand("query", "Query a built index");
  query->require_subcommand(1);
  std::string text;
  std::size_t q_m = 0, q_b1 = 0, q_b2 = 0;
  std::string q_mode;
  bool q_rerank = true;
  bool q_rerank_set = false;
  auto* q_seq = query->add_subcommand("sequence", "Generate a shot sequence for a text");
  q_seq->add_option("--text", text, "Query text")->required();
  q_seq->add_option("-M", q_m, "Sequence length (default: beam.M)");
  q_seq->add_option("--b1", q_b1, "Candidates per step (default: beam.B1)");
  q_seq->add_option("--b2", q_b2, "Sequences kept per step (default: beam.B2)");
  q_seq->add_option("--mode", q_mode, "parallel or adaptive query (default: model.mode)")
      ->check(CLI::IsMember({"parallel", "adaptive"}));
  q_seq->add_flag("--rerank,!--no-rerank", q_rerank, "Re-rank by coherence (default: beam.rerank)")
      ->each([&](const std::string&) { q_rerank_set = true; });
  std::string prefix;
  auto* q_comp = query->add_subcommand("complete", "Pick the next shot after a given prefix");
  q_comp->add_option("--text", text, "Query text")->required();
  q_comp->add_option("--prefix", prefix, "Comma-separated shot ids already in the sequence")->required();
  q_comp->add_option("--b1", q_b1, "Candidates (default: eval.completion_B1)");
  q_comp->add_option("--mode", q_mode, "parallel or adaptive query (default: model.mode)")
      ->check(CLI::IsMember({"parallel", "adaptive"}));
  q_comp->add_flag("--rerank,!--no-rerank", q_rerank, "Re-rank by coherence (default: beam.rerank)")
      ->each([&](const std::string&) { q_rerank_set = true; });

  auto* ev = app.add_subcommand("eval", "Run an evaluation task on eval.split");
  std::string task;
  std::string ev_split;
  bool untrained = false;
  ev->add_option("task", task, "retrieval, seqgen, seqcomp, distcls or ranking")
      ->required()
      ->check(CLI::IsMember({"retrieval", "seqgen", "seqcomp", "distcls", "ranking"}));
  ev->add_option("--split", ev_split, "Override eval.split")->check(CLI::IsMember({"train", "val", "test", "all"}));
  ev->add_option("--mode", q_mode, "parallel or adaptive query (default: model.mode)")
      ->check(CLI::IsMember({"parallel", "adaptive"}));
  ev->add_flag("--rerank,!--no-rerank", q_rerank, "Re-rank by coherence (default: beam.rerank)")
      ->each([&](const std::string&) { q_rerank_set = true; });
  ev->add_flag("--untrained", untrained, "Use freshly initialized models instead of the checkpoints");

  auto* bench = app.add_subcommand("bench", "Time the query path on synthetic galleries");
  std::vector<std::size_t> sizes;
  std::string csv_path;
  bench->add_option("--sizes", sizes, "Gallery sizes (default: bench.sizes)")->delimiter(',');
  bench->add_option("--csv", csv_path, "Also write N,ms_median,ms_p90 to this file");
  bench->add_flag("--untrained", untrained, "Use freshly initialized models instead of the checkpoints");

  auto* doc = app.add_subcommand("config-doc", "Print the config key reference (markdown)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*doc) {
      std::cout << cli::config_reference();
      return 0;
    }
    cli::RunConfig c = load_config(g);
    const crm::Mode mode = q_mode.empty() ? c.mode : crm::parse_mode(q_mode);
    const bool rerank = q_rerank_set ? q_rerank : c.beam.rerank;

    if (*gen) {
      const auto corpus = data::generate_corpus(c.corpus);
      data::save_corpus(c.data_dir, corpus);
      emit(g, {{"dir", c.data_dir},
               {"videos", corpus.video_ids().size()},
               {"shots", corpus.shots.size()},
               {"clips", corpus.clips.size()},
               {"transcripts", corpus.transcripts.size()}});
      return 0;
    }

    if (*train_crm) {
      if (!mode_override.empty()) c.mode = crm::parse_mode(mode_override);
      const auto corpus = load_corpus(c);
      const auto train_videos = split_videos(corpus, "train");
      const std::set<std::string> keep(train_videos.begin(), train_videos.end());
      auto report = data::build_positive_bags(corpus.shots, corpus.clips, corpus.transcripts, c.bags);
      std::vector<data::PositiveBag> bags;
      for (auto& b : report.bags) {
        if (keep.count(corpus.clips[b.clip.clip_index].video_id)) bags.push_back(std::move(b));
      }
      crm::TrainConfig t = c.crm_train;
      t.mode = c.mode;
      t.checkpoint_path = c.crm_checkpoint;
      if (const auto dir = fs::path(t.checkpoint_path).parent_path(); !dir.empty()) fs::create_directories(dir);
      const auto res = crm::train_crm(c.crm_model(), t, bags, corpus.shots, nullptr, log_sink(g));
      emit(g, {{"checkpoint", c.crm_checkpoint},
               {"hash", data::file_hash(c.crm_checkpoint)},
               {"mode", crm::to_string(t.mode)},
               {"bags", bags.size()},
               {"final_loss", res.log.empty() ? 0.0 : res.log.back().loss}});
      return 0;
    }

    if (*train_tcm) {
      const auto corpus = load_corpus(c);
      const auto videos = split_videos(corpus, "train");
      tcm::TcmTrainConfig t = c.tcm_train;
      t.checkpoint_path = c.tcm_checkpoint;
      if (const auto dir = fs::path(t.checkpoint_path).parent_path(); !dir.empty()) fs::create_directories(dir);
      const auto res = tcm::train_tcm(c.tcm_model(), t, corpus.shots, videos, log_sink(g));
      emit(g, {{"checkpoint", c.tcm_checkpoint},
               {"hash", data::file_hash(c.tcm_checkpoint)},
               {"classes", t.n_classes()},
               {"final_loss", res.log.empty() ? 0.0 : res.log.back().loss},
               {"final_acc", res.log.empty() ? 0.0 : res.log.back().acc}});
      return 0;
    }

    if (*index_build) {
      const auto corpus = load_corpus(c);
      const ParamSet crm_params = load_crm(c);
      std::vector<std::size_t> rows;
      if (index_split != "all") {
        for (const auto& v : split_videos(corpus, index_split)) {
          for (std::size_t r : corpus.shots_of_video(v)) rows.push_back(r);
        }
      }
      const auto idx = engine::build_index(corpus.shots, crm_params, rows, data::file_hash(c.crm_checkpoint));
      engine::save_index(c.index_dir, idx);
      emit(g, {{"dir", c.index_dir}, {"shots", idx.size()}, {"dim", idx.dim()}, {"crm_hash", idx.crm_checkpoint_hash}});
      return 0;
    }

    if (*q_seq) {
      engine::SearchConfig sc = c.beam;
      if (q_m) sc.M = q_m;
      if (q_b1) sc.B1 = q_b1;
      if (q_b2) sc.B2 = q_b2;
      sc.mode = mode;
      sc.rerank = rerank;
      sc.threads = engine::default_threads();
      sc.validate();
      const ParamSet crm_params = load_crm(c);
      std::optional<ParamSet> tcm_params;
      if (sc.rerank) tcm_params = load_tcm(c);
      const auto idx = load_index_for(c);
      const auto tokens = query_tokens(text, static_cast<std::uint32_t>(crm_params.at("text.embed").rows()));
      const engine::Models models{&crm_params, tcm_params ? &*tcm_params : nullptr};
      json out = json::array();
      for (const auto& s : engine::beam_sequence(tokens, sc, idx, models)) out.push_back(engine::to_json(s));
      if (g.json) {
        std::cout << out.dump() << "\n";
      } else {
        std::size_t rank = 1;
        for (const auto& s : out) {
          std::cout << rank++ << ". shots " << s["shots"].dump() << "  sim " << s["sim"].get<double>() << "  coh "
                    << s["coh"].get<double>() << "\n";
        }
      }
      return 0;
    }

    if (*q_comp) {
      const std::size_t b1 = q_b1 ? q_b1 : c.completion_b1;
      const ParamSet crm_params = load_crm(c);
      std::optional<ParamSet> tcm_params;
      if (rerank) tcm_params = load_tcm(c);
      const auto idx = load_index_for(c);
      std::vector<std::size_t> rows;
      for (auto id : parse_ids(prefix)) {
        const auto it = std::find(idx.shot_ids.begin(), idx.shot_ids.end(), id);
        if (it == idx.shot_ids.end()) throw ValidationError("shot id " + std::to_string(id) + " is not in the index");
        rows.push_back(static_cast<std::size_t>(it - idx.shot_ids.begin()));
      }
      const auto tokens = query_tokens(text, static_cast<std::uint32_t>(crm_params.at("text.embed").rows()));
      const engine::Models models{&crm_params, tcm_params ? &*tcm_params : nullptr};
      const auto comp = engine::complete_sequence(tokens, rows, idx, models, b1, mode, rerank);
      json cands = json::array();
      for (const auto& s : comp.candidates) cands.push_back(engine::to_json(s));
      emit(g, {{"shot_id", comp.shot_id}, {"candidates", cands}});
      return 0;
    }

    if (*ev) {
      const auto corpus = load_corpus(c);
      const auto videos = split_videos(corpus, ev_split.empty() ? c.eval_split : ev_split);
      const bool needs_crm = task == "retrieval" || task == "seqgen" || task == "seqcomp";
      const bool needs_tcm = task == "distcls" || task == "ranking" || (needs_crm && task != "retrieval" && rerank);
      std::optional<ParamSet> crm_params, tcm_params;
      if (needs_crm) crm_params = untrained ? crm::init_params(c.crm_model(), c.crm_train.seed) : load_crm(c);
      if (needs_tcm) tcm_params = untrained ? tcm::init_params(c.tcm_model(), c.tcm_train.seed) : load_tcm(c);
      const engine::Models models{crm_params ? &*crm_params : nullptr, tcm_params ? &*tcm_params : nullptr};
      json out;
      if (task == "retrieval") {
        out = eval::eval_clip_retrieval(corpus, videos, *crm_params).to_json();
      } else if (task == "seqgen") {
        engine::SearchConfig sc = c.beam;
        sc.mode = mode;
        sc.rerank = rerank;
        sc.threads = engine::default_threads();
        out = eval::eval_sequence_generation(corpus, videos, models, sc).to_json();
      } else if (task == "seqcomp") {
        out = eval::eval_sequence_completion(corpus, videos, models, c.completion_b1, mode, rerank).to_json();
      } else if (task == "distcls") {
        out = eval::eval_distortion_cls(*tcm_params, corpus.shots, videos, c.distcls_samples, c.eval_seed,
                                        c.tcm_train.crop_min, c.tcm_train.crop_max)
                  .to_json();
      } else {
        static const std::size_t ks[] = {1, 2, 3};
        out = eval::eval_sequence_ranking(*tcm_params, corpus.shots, videos, c.ranking_m, c.eval_seed).to_json(ks);
      }
      out["task"] = task;
      emit(g, out);
      return 0;
    }

    if (*bench) {
      eval::BenchConfig bc = c.bench;
      if (!sizes.empty()) bc.sizes = sizes;
      const ParamSet crm_params = untrained ? crm::init_params(c.crm_model(), c.crm_train.seed) : load_crm(c);
      const ParamSet tcm_params = untrained ? tcm::init_params(c.tcm_model(), c.tcm_train.seed) : load_tcm(c);
      const auto rep = eval::bench_runtime(bc, crm_params, tcm_params, [&](const eval::BenchRow& r) {
        if (!g.quiet) std::cerr << "N=" << r.n << " median " << r.ms_median << " ms\n";
      });
      if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw Error("cannot write '" + csv_path + "'");
        f << rep.csv();
      }
      if (g.json) {
        std::cout << rep.to_json().dump() << "\n";
      } else {
        std::cout << rep.csv() << "fit: " << rep.slope * 1000.0 << " ms per 1k shots + " << rep.intercept
                  << " ms, R^2 " << rep.r2 << "\n";
        for (const auto& [n, ratio] : rep.doubling) std::cout << "t(" << 2 * n << ")/t(" << n << ") = " << ratio << "\n";
      }
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
