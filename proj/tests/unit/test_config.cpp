#include <doctest.h>

#include <string>

#include "config.hpp"

using namespace t2v;
using namespace t2v::cli;

TEST_CASE("config parsing") {
  const auto doc = ConfigDoc::parse(R"(
# comment
[data]
n_videos = 12   # trailing
style_drift = 0.5
dir = "x/y"

[model]
mode = "parallel"
distortions = ["replacement", "jitter"]

[beam]
B1 = 7
rerank = false
)");
  const auto c = RunConfig::from_doc(doc);
  CHECK(c.corpus.n_videos == 12);
  CHECK(c.corpus.style_drift == 0.5);
  CHECK(c.data_dir == "x/y");
  CHECK(c.mode == crm::Mode::parallel);
  CHECK(c.tcm_train.distortions.size() == 2);
  CHECK(c.beam.B1 == 7);
  CHECK(c.beam.B2 == 2);
  CHECK(!c.beam.rerank);
  c.validate();
}

TEST_CASE("config errors name the line") {
  auto msg = [](const std::string& text) {
    try {
      RunConfig::from_doc(ConfigDoc::parse(text, "t.toml")).validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(msg("[data]\nn_video = 3\n") == "t.toml:2: unknown key 'data.n_video'");
  CHECK(msg("[data]\n\nn_videos = \"a\"\n").rfind("t.toml:3: data.n_videos", 0) == 0);
  CHECK(msg("n_videos = 3\n").rfind("t.toml:1:", 0) == 0);
  CHECK(msg("[data]\nseed = 1\nseed = 2\n").rfind("t.toml:3: duplicate key", 0) == 0);
  CHECK(msg("[model]\nmode = \"sideways\"\n").rfind("t.toml:2:", 0) == 0);
  CHECK(msg("[model]\nprofile = \"huge\"\n").rfind("t.toml:2:", 0) == 0);
  CHECK(msg("[data]\nn_videos = -4\n").rfind("t.toml:2:", 0) == 0);
  CHECK(msg("[eval]\nsplit = \"dev\"\n") != "no error");
  CHECK_THROWS_AS(ConfigDoc::load("/nonexistent/t2v.toml"), ConfigError);
}

TEST_CASE("seed override and profiles") {
  auto c = RunConfig::defaults();
  c.set_seed(99);
  CHECK(c.corpus.seed == 99);
  CHECK(c.crm_train.seed == 99);
  CHECK(c.tcm_train.seed == 99);
  CHECK(c.eval_seed == 99);
  const auto full = RunConfig::from_doc(ConfigDoc::parse("[model]\nprofile = \"full\"\n"));
  CHECK(full.crm_model().d_v == 512);
  CHECK(full.tcm_model().d_h == 384);
}

TEST_CASE("config reference lists every section") {
  const auto ref = config_reference();
  for (const char* s : {"[data]", "[model]", "[train]", "[tcm_train]", "[beam]", "[eval]", "[bench]"}) {
    CHECK(ref.find(s) != std::string::npos);
  }
}
