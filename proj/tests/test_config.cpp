#include <set>
#include <string>

#include <json.hpp>

#include "doctest.h"
#include "support.hpp"
#include "tsum/checkpoint.hpp"
#include "tsum/config.hpp"
#include "tsum/errors.hpp"
#include "tsum/experiment.hpp"

using namespace tsum;

namespace {

Checkpoint small_checkpoint(ModelMode mode) {
  SynthSpec spec;
  spec.num_examples = 200;
  spec.num_hours = 8;
  spec.trend.window = 4;
  spec.threshold.window = 6;
  const auto raw = generate(spec).cohort;
  TrainConfig config;
  config.mode = mode;
  config.learning_rate = 0.01;
  config.max_epochs = 4;
  config.eval_interval = 2;
  config.duration_lr = 0.1;
  const auto result = run_experiment(raw, config, 0.2);
  return make_checkpoint(result, raw, config, 0.2, {"sex"});
}

}  // namespace

TEST_CASE("parse_config: comments, blanks, whitespace and order") {
  const auto kv = parse_config("# header\n\nalpha = 0.5  # trailing\n  seeds=1, 2 ,3\nalpha=0.25\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::pair<std::string, std::string>{"alpha", "0.5"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"seeds", "1, 2 ,3"});
  CHECK(kv[2].second == "0.25");
  CHECK_THROWS_AS(parse_config("alpha 0.5\n"), UsageError);
  CHECK_THROWS_AS(parse_config(" = 3\n"), UsageError);
}

TEST_CASE("build_run_config: defaults") {
  const auto c = build_run_config({});
  CHECK(c.train.tau_temp == 0.1);
  CHECK(c.train.alpha == 1e-5);
  CHECK(c.train.tau_hs == 1.0);
  CHECK(c.train.learning_rate == 1e-5);
  CHECK(c.train.batch_size == 256);
  CHECK(c.train.max_epochs == 5000);
  CHECK(c.train.mode == ModelMode::relaxed);
  CHECK(c.train.penalty == Penalty::horseshoe);
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK(c.top_k == 15);
  CHECK(c.gradcheck.epsilon == 1e-5);
  CHECK(c.gradcheck.tolerance == 1e-4);
  CHECK(!c.csv);
  CHECK(!c.synth);
}

TEST_CASE("build_run_config: later values win and keys map to fields") {
  const auto c = build_run_config(parse_config(
      "alpha = 0.5\nalpha = 0\nmode = hard\nseeds = 3,1,2\nn_list = 5, 1\npenalty = ridge\n"
      "duration_lr = 0.1\nsynth.N = 100\nsynth.trend.window = 4\ngradcheck.epsilon = 1e-6\n"));
  CHECK(c.train.alpha == 0.0);
  CHECK(c.train.mode == ModelMode::hard);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 1, 2});
  CHECK(c.n_list == std::vector<std::size_t>{5, 1});
  CHECK(c.train.penalty == Penalty::ridge);
  CHECK(*c.train.duration_lr == 0.1);
  CHECK(!c.train.threshold_lr);
  REQUIRE(c.synth);
  CHECK(c.synth->num_examples == 100);
  CHECK(c.synth->trend.window == 4);
  CHECK(c.gradcheck.epsilon == 1e-6);
  CHECK(build_run_config({{"seeds", "1,2"}, {"seed", "7"}}).seeds == std::vector<std::uint64_t>{7});
}

TEST_CASE("build_run_config: bad keys and values are usage errors") {
  CHECK_THROWS_AS(build_run_config({{"no_such_key", "1"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"alpha", "abc"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"batch_size", "-3"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"mode", "lstm"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"test_fraction", "1.5"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"alpha", "-1"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"synth.p_obs", "0"}}), UsageError);
  CHECK_THROWS_AS(build_run_config({{"seeds", ","}}), UsageError);
}

TEST_CASE("RunConfig::check_source: exactly one data source") {
  auto c = build_run_config({});
  CHECK_THROWS_AS(c.check_source(true), UsageError);
  CHECK_NOTHROW(c.check_source(false));
  c = build_run_config({{"synth", "true"}});
  CHECK_NOTHROW(c.check_source(true));
  c = build_run_config({{"synth", "true"}, {"timeseries", "a.csv"}});
  CHECK_THROWS_AS(c.check_source(true), UsageError);
  c = build_run_config({{"timeseries", "a.csv"}});
  CHECK_THROWS_AS(c.check_source(true), UsageError);
}

TEST_CASE("config_keys: every key is documented") {
  const auto keys = config_keys();
  CHECK(keys.size() > 40);
  std::set<std::string> seen;
  for (const auto& [key, help] : keys) {
    CHECK(!help.empty());
    CHECK(seen.insert(key).second);
  }
}

TEST_CASE("checkpoint: document round-trips") {
  for (auto mode : {ModelMode::relaxed, ModelMode::time_of_prediction_only}) {
    const auto ck = small_checkpoint(mode);
    const auto text = checkpoint_to_json(ck);
    const auto back = checkpoint_from_json(text);
    CHECK(back.mode == mode);
    CHECK(back.model_params.coeffs == ck.model_params.coeffs);
    CHECK(back.model_params.bias == ck.model_params.bias);
    CHECK(back.model_params.feature_names == ck.model_params.feature_names);
    CHECK(back.summary_params.durations == ck.summary_params.durations);
    CHECK(back.summary_params.phi_plus == ck.summary_params.phi_plus);
    CHECK(back.summary_params.temperature == ck.summary_params.temperature);
    CHECK(back.stats.mean == ck.stats.mean);
    CHECK(back.stats.population_median == ck.stats.population_median);
    CHECK(back.categorical == ck.categorical);
    CHECK(back.config.duration_lr == ck.config.duration_lr);
    CHECK(back.config.threshold_lr == ck.config.threshold_lr);
    CHECK(checkpoint_to_json(back) == text);
  }
}

TEST_CASE("checkpoint: missing fields and version mismatches are format errors") {
  const auto text = checkpoint_to_json(small_checkpoint(ModelMode::relaxed));
  for (const char* key : {"coeffs", "C", "phi_plus", "bias", "normalization", "version", "T"}) {
    auto j = nlohmann::json::parse(text);
    j.erase(key);
    CAPTURE(key);
    try {
      (void)checkpoint_from_json(j.dump());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  }
  auto j = nlohmann::json::parse(text);
  j["version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), FormatError);
  j = nlohmann::json::parse(text);
  j["coeffs"].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), FormatError);
  CHECK_THROWS_AS(checkpoint_from_json("{"), FormatError);

  support::TempDir dir("ckpt");
  CHECK_THROWS(load_checkpoint(dir / "absent.ckpt"));
}
