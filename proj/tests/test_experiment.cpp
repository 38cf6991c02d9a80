// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "penabc/abc.hpp"
#include "penabc/dataset_io.hpp"
#include "penabc/experiment.hpp"
#include "penabc/presets.hpp"
#include "penabc/summary.hpp"

using namespace penabc;
using namespace penabc::experiment;
using models::ModelId;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("penabc_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return files;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

int cli(const std::string& args) {
  const std::string cmd = std::string(PENABC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig smoke_ar2(const fs::path& out) {
  ExperimentConfig c = defaults(ModelId::Ar2, Scale::Smoke);
  c.methods = {{summary::Method::Handpicked, 0}, {summary::Method::MlpSmall, 0}, {summary::Method::Pen, 2}};
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parsing") {
  SUBCASE("defaults and overrides") {
    const ExperimentConfig c = parse_config("model = ar2\nscale = desk\n# comment\nn_train = 1e3, 1e4\nrepetitions = 20\n");
    CHECK(c.model == ModelId::Ar2);
    CHECK(c.series_len == 100);
    CHECK(c.n_train == std::vector<std::size_t>{1000, 10000});
    CHECK(c.repetitions == 20);
    CHECK(c.n_tilde == 100000);
  }
  SUBCASE("desk and paper settings") {
    const ExperimentConfig d = defaults(ModelId::GAndK, Scale::Desk);
    CHECK(d.n_tilde == 100000);
    CHECK(d.repetitions == 10);
    CHECK(std::find(d.n_train.begin(), d.n_train.end(), 10000u) != d.n_train.end());
    const ExperimentConfig p = defaults(ModelId::Ar2, Scale::Paper);
    CHECK(p.n_tilde == 500000);
    CHECK(p.percentile_x == 0.02);
    CHECK(p.repetitions == 100);
    CHECK(p.n_eval == 10000);
    CHECK(defaults(ModelId::Ma2, Scale::Paper).n_eval == 500000);
    CHECK(defaults(ModelId::AlphaStable, Scale::Paper).repetitions == 25);
    CHECK(defaults(ModelId::GAndK, Scale::Paper).percentile_x == 0.1);
  }
  SUBCASE("round trip through text") {
    for (ModelId m : {ModelId::GAndK, ModelId::AlphaStable, ModelId::Ar2, ModelId::Ma2}) {
      for (Scale s : {Scale::Smoke, Scale::Desk, Scale::Paper}) {
        const ExperimentConfig c = defaults(m, s);
        CHECK(format_config(parse_config(format_config(c))) == format_config(c));
      }
    }
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(parse_config("scale = desk\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("model = ar2\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("model = ar2\nn_tilde = lots\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("model = ar2\njust words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("model = ar2\nscale = huge\n"), ConfigError);
  }
}

TEST_CASE("config validation names the violated constraint") {
  ExperimentConfig c = defaults(ModelId::Ar2, Scale::Smoke);
  c.methods = {{summary::Method::MlpPre, 0}};
  CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("mlp-pre"), ConfigError);
  c.model = ModelId::Ma2;
  CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("mlp-pre"), ConfigError);
  ExperimentConfig g = defaults(ModelId::GAndK, Scale::Smoke);
  g.methods = {{summary::Method::Pen, 2}};
  CHECK_THROWS_WITH_AS(validate(g), doctest::Contains("pen-0"), ConfigError);
  g.methods = {{summary::Method::MlpPre, 0}};
  CHECK_NOTHROW(validate(g));
  g.percentile_x = 0.01;
  CHECK_THROWS_WITH_AS(validate(g), doctest::Contains("retains no proposals"), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("model = ar2\nmethods = mlp-pre\n")), ConfigError);
  CHECK_THROWS_AS(validate(parse_config("model = ar2\nmethods = pen-2, pen-2\n")), ConfigError);
}

TEST_CASE("stage outputs") {
  const fs::path out = fresh_dir("stages");
  const ExperimentConfig cfg = smoke_ar2(out);
  std::ostringstream log;

  cmd_simulate(cfg, log);
  const RowMatrix obs = io::read_series_csv(out / "data" / "observed.csv");
  CHECK(obs.rows() == static_cast<Eigen::Index>(cfg.repetitions));
  CHECK(obs.cols() == 100);
  // Observed data come from the ground truth (0.2, -0.13).
  {
    Rng rng = make_rng(cfg.seed, 4, 0);
    const auto y = models::simulate(models::ground_truth(ModelId::Ar2), 100, rng);
    CHECK(std::equal(y.begin(), y.end(), obs.row(0).data()));
  }

  cmd_train(cfg, log);
  const summary::StoredNetwork pen = summary::load_network(out / "nets" / "pen-2_n300.bin");
  CHECK(count_weights(pen.spec) == 10222);
  const std::string train_log = io::read_file(out / "logs" / "pen-2_n300.csv");
  CHECK(train_log.rfind("epoch,train_mse,eval_mse\n", 0) == 0);
  CHECK(count_lines(train_log) == cfg.epochs + 1);

  cmd_abc(cfg, log);
  const auto prior = models::PriorSpec::for_model(ModelId::Ar2);
  for (const std::string cell : {"handpicked", "mlp-small_n300", "pen-2_n300"}) {
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const abc::PosteriorSample p =
          abc::read_posterior_csv(out / "posteriors" / cell / ("rep" + std::to_string(r) + ".csv"));
      CHECK(p.draws.rows() == 100);
      for (Eigen::Index i = 0; i < p.draws.rows(); ++i) CHECK(prior.in_support(std::span<const double>(p.draws.row(i).data(), 2)));
    }
  }

  const std::vector<ResultRow> rows = cmd_evaluate(cfg, log);
  CHECK(rows.size() == 3 * cfg.repetitions);
  for (const ResultRow& r : rows) {
    REQUIRE(r.wasserstein.has_value());
    CHECK(*r.wasserstein > 0.0);
  }
  const std::string results = io::read_file(out / "results.csv");
  CHECK(results.rfind("model,method,n_train,seed,repetition,wasserstein,sq_error,mean_1,mean_2\n", 0) == 0);
  CHECK(count_lines(results) == rows.size() + 1);
  CHECK(io::read_file(out / "summary.csv").rfind("model,method,n_train,repetitions,mean_wasserstein,se_wasserstein,rmse\n", 0) == 0);

  SUBCASE("completed stages are no-ops") {
    const auto before = snapshot(out);
    std::vector<fs::file_time_type> times;
    for (const auto& e : fs::recursive_directory_iterator(out))
      if (e.is_regular_file() && e.path().extension() != ".csv") times.push_back(e.last_write_time());
    std::ostringstream again;
    cmd_simulate(cfg, again);
    cmd_train(cfg, again);
    cmd_abc(cfg, again);
    CHECK(again.str().find("up to date") != std::string::npos);
    std::size_t k = 0;
    for (const auto& e : fs::recursive_directory_iterator(out))
      if (e.is_regular_file() && e.path().extension() != ".csv") CHECK(e.last_write_time() == times[k++]);
    cmd_evaluate(cfg, again);
    CHECK(snapshot(out) == before);
  }
  SUBCASE("same seed, fresh directory, identical files") {
    const fs::path other = fresh_dir("stages_again");
    ExperimentConfig c2 = cfg;
    c2.output_dir = other;
    std::ostringstream quiet;
    run_pipeline(c2, quiet);
    CHECK(snapshot(other) == snapshot(out));
  }
  SUBCASE("every method sees the same reference table") {
    const abc::ReferenceTable table = abc::load_table(out / "data" / "table", ModelId::Ar2);
    for (const std::string cell : {"handpicked", "mlp-small_n300", "pen-2_n300"}) {
      const abc::PosteriorSample p = abc::read_posterior_csv(out / "posteriors" / cell / "rep0.csv");
      // Draws are rows of the shared table, bit for bit.
      for (Eigen::Index i = 0; i < p.draws.rows(); ++i) {
        bool found = false;
        for (Eigen::Index t = 0; t < table.thetas.rows() && !found; ++t) found = table.thetas.row(t) == p.draws.row(i);
        CHECK(found);
      }
    }
  }
}

TEST_CASE("static models") {
  const fs::path out = fresh_dir("gandk");
  ExperimentConfig cfg = defaults(ModelId::GAndK, Scale::Smoke);
  cfg.methods = {{summary::Method::Handpicked, 0}, {summary::Method::MlpPre, 0}};
  cfg.repetitions = 1;
  cfg.output_dir = out;
  std::ostringstream log;
  run_pipeline(cfg, log);

  const RowMatrix obs = io::read_series_csv(out / "data" / "observed.csv");
  CHECK(obs.cols() == 1000);
  std::vector<double> y(obs.row(0).data(), obs.row(0).data() + 1000);
  std::nth_element(y.begin(), y.begin() + 500, y.end());
  CHECK(std::abs(y[500] - 3.0) < 0.3);  // the median of g-and-k(3, 1, 2, 0.5) is A = 3

  const summary::StoredNetwork pre = summary::load_network(out / "nets" / "mlp-pre_n300.bin");
  CHECK(pre.input_dim == 100);
  CHECK(count_weights(pre.spec) == 25454);
  const abc::PosteriorSample p = abc::read_posterior_csv(out / "posteriors" / "handpicked" / "rep0.csv");
  CHECK(p.draws.rows() == 100);
  CHECK(p.draws.cols() == 4);
  CHECK(p.draws.minCoeff() > 0.0);
}

TEST_CASE("alpha-stable is scored by RMSE only") {
  const fs::path out = fresh_dir("alpha");
  ExperimentConfig cfg = defaults(ModelId::AlphaStable, Scale::Smoke);
  cfg.methods = {{summary::Method::Handpicked, 0}};
  cfg.output_dir = out;
  std::ostringstream log;
  const auto rows = run_pipeline(cfg, log);
  CHECK(rows.size() == cfg.repetitions);
  for (const ResultRow& r : rows) CHECK_FALSE(r.wasserstein.has_value());
  const auto sums = summarize(rows);
  REQUIRE(sums.size() == 1);
  CHECK(sums[0].rmse > 0.0);
}

TEST_CASE("summaries over repetitions") {
  std::vector<ResultRow> rows;
  for (std::size_t r = 0; r < 5; ++r) rows.push_back({"pen-2", 1000, r, 0.1 * static_cast<double>(r + 1), 1.0, {}});
  rows.push_back({"handpicked", 0, 0, std::nullopt, 4.0, {}});
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].repetitions == 5);
  CHECK(*s[0].mean_wasserstein == doctest::Approx(0.3));
  CHECK(*s[0].se_wasserstein == doctest::Approx(std::sqrt(0.025 / 5.0)));
  CHECK(s[0].rmse == 1.0);
  CHECK_FALSE(s[1].mean_wasserstein.has_value());
  CHECK(s[1].rmse == 2.0);
}

TEST_CASE("reproduction ids") {
  CHECK(reproduce_ids() == std::vector<std::string>{"fig1", "table1", "fig3", "fig4"});
  CHECK(reproduce_config("fig1", Scale::Desk).model == ModelId::GAndK);
  CHECK(reproduce_config("table1", Scale::Desk).model == ModelId::AlphaStable);
  CHECK(reproduce_config("fig3", Scale::Desk).model == ModelId::Ar2);
  CHECK(reproduce_config("fig4", Scale::Desk).model == ModelId::Ma2);
  CHECK_THROWS_AS(reproduce_config("fig2", Scale::Desk), ConfigError);
}

TEST_CASE("command-line exit codes") {
  CHECK(cli("preset ar2-pen2") == 0);
  CHECK(cli("config --model ar2 --scale smoke") == 0);
  CHECK(cli("config --model nonsense") == 1);
  CHECK(cli("config --model ar2 --scale enormous") == 1);
  CHECK(cli("frobnicate") == 1);
  const fs::path empty = fresh_dir("cli_empty");
  CHECK(cli("abc --model ar2 --scale smoke --output " + empty.string()) == 2);
}

}  // TEST_SUITE
